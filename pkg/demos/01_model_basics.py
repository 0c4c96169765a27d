"""
A tiny attention translator, end to end
=======================================

Build a small encoder-decoder, score a translation by forced decoding,
draw samples, run beam search, and check one gradient block numerically.
"""

import numpy as np

from prnmt.model import (ModelConfig, beam_search, forward_logprob, grad_logprob, greedy_decode,
                         init_params, sample_translations)

# ids 0..3 are <pad> <s> </s> <unk>; everything above is a word
config = ModelConfig(src_vocab_size=10, tgt_vocab_size=10, embed_dim=8, hidden_dim=12)
params = init_params(config, seed=0)
x = [4, 5, 6, 7]

# forced decoding: log P(y|x) plus one attention row per target step (the last is EOS)
logp, attention = forward_logprob(params, x, [5, 6, 7])
print("log P(y|x) =", round(logp, 4))
print("attention rows sum to", attention.sum(axis=1).round(6))

# an untrained model spreads its mass, so samples are diverse
samples = sample_translations(params, x, k=20, max_len=6, seed=1)
print(len(samples), "unique samples out of 20 draws")

# beam search returns a sorted k-best list; beam 1 is greedy decoding
for h in beam_search(params, x, beam_size=3, max_len=6):
    print(h.tokens, round(h.logp, 4))
print("greedy:", greedy_decode(params, x, 6).tokens)

# the hand-written backward pass against a central difference, one block
_, grad = grad_logprob(params, x, [5, 6, 7])
W = params["att_v"]
numeric = np.zeros_like(W)
for i in range(W.size):
    old = W.flat[i]
    W.flat[i] = old + 1e-5
    up = forward_logprob(params, x, [5, 6, 7])[0]
    W.flat[i] = old - 1e-5
    down = forward_logprob(params, x, [5, 6, 7])[0]
    W.flat[i] = old
    numeric.flat[i] = (up - down) / 2e-5
print("att_v max abs difference:", np.abs(numeric - grad["att_v"]).max())
