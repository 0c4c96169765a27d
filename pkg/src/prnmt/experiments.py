"""Desk-scale MLE vs. posterior-regularization comparison on the noisy lexicon task."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from prnmt.bleu import bleu_score
from prnmt.corpus import encode_corpus
from prnmt.decode import rerank
from prnmt.features import FeatureConfig, KnowledgeResources
from prnmt.model import ModelConfig, beam_search, greedy_decode, init_params
from prnmt.posreg import MLEConfig, PRConfig, mean_sampled_kl, rng_stream, train_mle, train_posreg
from prnmt.synthetic import lexicon_dictionary, lexicon_vocabs, noisy_lexicon_corpus

logger = logging.getLogger(__name__)


@dataclass
class LexiconSetup:
    lexicon_size: int = 50
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    noise: float = 0.2
    embed_dim: int = 32
    hidden_dim: int = 64
    mle_iters: int = 1500
    mle_batch: int = 80
    eval_every: int = 100
    beam_size: int = 10
    max_len: int = 20
    kl_eval_size: int = 100
    pr: PRConfig = field(default_factory=lambda: PRConfig(
        lambda1=1.0, lambda2=1.0, lr=0.1, gamma_lr=0.5, max_iters=2000,
        sample_max_len=20, trace_interval=200))
    features: FeatureConfig = field(default_factory=lambda: FeatureConfig(families=("BD",)))


def corpus_bleu(hyps, pairs) -> float:
    return bleu_score([[str(t) for t in h] for h in hyps],
                      [[[str(t) for t in p.target]] for p in pairs]).bleu


def _strip(tokens, eos):
    return list(tokens[:-1]) if tokens and tokens[-1] == eos else list(tokens)


def greedy_bleu(params, pairs, max_len):
    eos = params.config.eos_id
    return corpus_bleu([_strip(greedy_decode(params, p.source, max_len).tokens, eos) for p in pairs], pairs)


def beam_outputs(params, pairs, beam_size, max_len, gamma=None, resources=None, features=None):
    eos = params.config.eos_id
    plain, reranked = [], []
    for p in pairs:
        kbest = beam_search(params, p.source, beam_size, max_len)
        plain.append(_strip(kbest[0].tokens, eos))
        if gamma is not None:
            chosen = rerank(kbest, p.source, gamma, resources, features).chosen
            reranked.append(_strip(chosen.tokens, eos))
    return plain, reranked


def run_noisy_lexicon(seed: int, setup: LexiconSetup = LexiconSetup()) -> dict:
    """Train an MLE baseline and a PR model from it; report test BLEU and sampled KL.

    The baseline is the MLE checkpoint with the best dev BLEU (greedy);
    PR training starts from that checkpoint with gamma = 0.  Held-out KL is
    measured on the first ``kl_eval_size`` test sentences with a fixed
    sampling stream, before and after PR training.
    """
    t0 = time.perf_counter()
    src_vocab, tgt_vocab = lexicon_vocabs(setup.lexicon_size)
    data_rng = rng_stream(seed, "data")
    train = encode_corpus(noisy_lexicon_corpus(setup.n_train, setup.lexicon_size, setup.noise, rng=data_rng),
                          src_vocab, tgt_vocab)
    dev = encode_corpus(noisy_lexicon_corpus(setup.n_dev, setup.lexicon_size, 0.0, rng=data_rng),
                        src_vocab, tgt_vocab)
    test = encode_corpus(noisy_lexicon_corpus(setup.n_test, setup.lexicon_size, 0.0, rng=data_rng),
                         src_vocab, tgt_vocab)
    resources = KnowledgeResources(lexicon_dictionary(src_vocab, tgt_vocab, setup.lexicon_size))

    config = ModelConfig(len(src_vocab), len(tgt_vocab), setup.embed_dim, setup.hidden_dim)
    best = {"bleu": -1.0, "iteration": 0, "params": None}

    def select(it, params):
        if it % setup.eval_every == 0:
            b = greedy_bleu(params, dev, setup.max_len)
            logger.info("mle iter %d dev BLEU %.2f", it, b)
            if b > best["bleu"]:
                best.update(bleu=b, iteration=it, params=params.copy())

    train_mle(MLEConfig(batch_size=setup.mle_batch, max_iters=setup.mle_iters, seed=seed),
              train, init_params(config, int(rng_stream(seed, "init").integers(2**31))), on_update=select)
    mle = best["params"]
    t_mle = time.perf_counter()

    pr_config = PRConfig(**{**setup.pr.__dict__, "seed": seed})
    kl_pairs = test[: setup.kl_eval_size]
    kl_before = mean_sampled_kl(mle, {}, kl_pairs, resources, pr_config, setup.features, seed)
    pr, gamma, trace = train_posreg(pr_config, train, resources, mle, {}, setup.features)
    kl_after = mean_sampled_kl(pr, gamma, kl_pairs, resources, pr_config, setup.features, seed)
    t_pr = time.perf_counter()

    mle_plain, mle_rr = beam_outputs(mle, test, setup.beam_size, setup.max_len, {}, resources, setup.features)
    pr_plain, pr_rr = beam_outputs(pr, test, setup.beam_size, setup.max_len, gamma, resources, setup.features)
    return {
        "seed": seed,
        "mle_best_iteration": best["iteration"],
        "mle_dev_bleu": best["bleu"],
        "mle_bleu": corpus_bleu(mle_plain, test),
        "pr_bleu": corpus_bleu(pr_rr, test),
        "pr_bleu_no_rerank": corpus_bleu(pr_plain, test),
        "kl_before": kl_before,
        "kl_after": kl_after,
        "trace": trace,
        "gamma": gamma,
        "seconds_mle": t_mle - t0,
        "seconds_pr": t_pr - t_mle,
        "seconds_total": time.perf_counter() - t0,
    }
