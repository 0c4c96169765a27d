"""
Guiding a translator with a bilingual dictionary
================================================

A word-for-word toy language whose training targets are 20% corrupted.
The dictionary knows the clean word pairs; regularizing the model towards
a log-linear distribution over dictionary hits pulls it back.
"""

from prnmt.corpus import encode_corpus
from prnmt.decode import rerank
from prnmt.features import FeatureConfig, KnowledgeResources
from prnmt.model import ModelConfig, beam_search, init_params
from prnmt.posreg import MLEConfig, PRConfig, mean_sampled_kl, train_mle, train_posreg
from prnmt.synthetic import lexicon_dictionary, lexicon_vocabs, noisy_lexicon_corpus

size = 12
src_vocab, tgt_vocab = lexicon_vocabs(size)
train = encode_corpus(noisy_lexicon_corpus(400, size, noise=0.2, min_len=2, max_len=5, seed=0),
                      src_vocab, tgt_vocab)
test = encode_corpus(noisy_lexicon_corpus(40, size, noise=0.0, min_len=2, max_len=5, seed=1),
                     src_vocab, tgt_vocab)
print(train[0].source, "->", train[0].target)

resources = KnowledgeResources(lexicon_dictionary(src_vocab, tgt_vocab, size))
features = FeatureConfig(families=("BD",))

# plain maximum likelihood first
params = init_params(ModelConfig(len(src_vocab), len(tgt_vocab), 16, 32), seed=0)
mle, trace = train_mle(MLEConfig(batch_size=40, max_iters=300), train, params)
print("MLE token log-likelihood: %.3f -> %.3f" % (trace[0]["token_logp"], trace[-1]["token_logp"]))

# then the joint objective, warm-started from the MLE weights with gamma = 0
config = PRConfig(lambda1=1.0, lambda2=1.0, lr=0.1, gamma_lr=0.5, max_iters=400,
                  sample_size=30, sample_max_len=10, trace_interval=100)
print("held-out KL before: %.4f" % mean_sampled_kl(mle, {}, test, resources, config, features))
pr, gamma, pr_trace = train_posreg(config, train, resources, mle, {}, features)
print("held-out KL after:  %.4f" % mean_sampled_kl(pr, gamma, test, resources, config, features))
for rec in pr_trace:
    print("  iter %4d  logp %.3f  kl %.4f  |gamma| %.3f" % (
        rec["iteration"], rec["mean_logp"], rec["mean_kl"], rec["gamma_norm"]))

# the learned weights are largest on the true word pairs
top = sorted(gamma.items(), key=lambda kv: -kv[1])[:5]
print("largest weights:", [(k, round(v, 3)) for k, v in top])

# reranking a k-best list with gamma
pair = test[0]
kbest = beam_search(pr, pair.source, 5, 10)
result = rerank(kbest, pair.source, gamma, resources, features)
print("source", src_vocab.decode(pair.source))
for c in result.candidates:
    mark = "*" if c.hypothesis is result.chosen else " "
    print(mark, tgt_vocab.decode(c.hypothesis.tokens), "logP %.3f  gamma.phi %.3f" % (c.logp, c.gamma_phi))
