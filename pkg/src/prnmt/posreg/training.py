"""MLE and posterior-regularized trainers."""

from __future__ import annotations

import json
import logging
import math
import time
import zlib
from dataclasses import dataclass

import numpy as np

from prnmt.corpus import SentencePair
from prnmt.features import FeatureConfig, KnowledgeResources, compute_features
from prnmt.model.network import forward_logprob, weighted_grad
from prnmt.model.params import ModelParams
from prnmt.model.search import Hypothesis, SampleSet, sample_translations
from prnmt.posreg.objective import (
    kl_approx,
    kl_gamma_gradient,
    kl_theta_weights,
    p_tilde,
    q_tilde,
)

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite objective or parameter."""


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose ("init", "sampling", "shuffle", ...)."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))]))


class AdaDelta:
    """Per-parameter adaptive steps (Zeiler 2012), applied as gradient ascent."""

    def __init__(self, params: ModelParams, rho: float = 0.95, eps: float = 1e-6, lr: float = 1.0):
        self.rho, self.eps, self.lr = rho, eps, lr
        self.sq_grad = {k: np.zeros_like(v) for k, v in params.items()}
        self.sq_step = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: ModelParams, grad: ModelParams) -> None:
        rho, eps = self.rho, self.eps
        for k, theta in params.items():
            g = grad[k]
            eg = self.sq_grad[k]
            ex = self.sq_step[k]
            eg *= rho
            eg += (1.0 - rho) * g * g
            dx = np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
            ex *= rho
            ex += (1.0 - rho) * dx * dx
            theta += self.lr * dx


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches, reshuffled every epoch."""
    while True:
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            yield order[i:i + batch_size]


def with_eos(y, eos_id):
    return list(y) + [eos_id]


def likelihood_gradient(params: ModelParams, pairs: list[SentencePair]):
    """(per-sentence log-likelihoods, gradient of their mean)."""
    eos = params.config.eos_id
    lps, grad = weighted_grad(params, [list(p.source) for p in pairs],
                              [with_eos(p.target, eos) for p in pairs],
                              np.full(len(pairs), 1.0 / len(pairs)))
    return lps, grad


@dataclass
class MLEConfig:
    batch_size: int = 80
    max_iters: int = 1000
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    seed: int = 0


def train_mle(config: MLEConfig, corpus: list[SentencePair], params: ModelParams, log_every: int = 0,
              on_update=None):
    """Minibatch AdaDelta ascent on the corpus log-likelihood.

    Returns (trained params, trace); the trace holds one record per update
    with the batch's mean sentence and per-token log-likelihood, measured
    before the update.  ``on_update(iteration, params)`` is called after
    every update, e.g. for checkpoint selection.
    """
    if not corpus:
        raise ValueError("empty corpus")
    params = params.copy()
    opt = AdaDelta(params, config.rho, config.eps, config.lr)
    batches = minibatches(len(corpus), config.batch_size, rng_stream(config.seed, "shuffle"))
    trace = []
    for it in range(config.max_iters):
        batch = [corpus[i] for i in next(batches)]
        lps, grad = likelihood_gradient(params, batch)
        total = float(lps.sum())
        if not math.isfinite(total):
            raise NumericalError(f"non-finite log-likelihood at iteration {it}")
        n_tokens = sum(len(p.target) + 1 for p in batch)
        trace.append({"iteration": it, "mean_logp": total / len(batch), "token_logp": total / n_tokens})
        opt.step(params, grad)
        if not params.all_finite():
            raise NumericalError(f"non-finite parameters after iteration {it}")
        if log_every and (it + 1) % log_every == 0:
            logger.info("mle iter %d mean logp %.4f", it + 1, total / len(batch))
        if on_update is not None:
            on_update(it + 1, params)
    return params, trace


@dataclass
class PRConfig:
    lambda1: float = 8e-5
    lambda2: float = 2.5e-4
    alpha: float = 0.2
    sample_size: int = 80
    sample_max_len: int = 50
    pr_batch_size: int = 1
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0
    gamma_lr: float = 1e-2
    max_iters: int = 1000
    trace_interval: int = 100
    seed: int = 0
    include_reference_in_samples: bool = False

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.sample_size < 1 or self.pr_batch_size < 1:
            raise ValueError("sample_size and pr_batch_size must be >= 1")


def build_sample_set(params: ModelParams, pair: SentencePair, config: PRConfig, rng) -> SampleSet:
    samples = sample_translations(params, pair.source, config.sample_size, config.sample_max_len, rng=rng)
    if config.include_reference_in_samples:
        ref = tuple(with_eos(pair.target, params.config.eos_id))
        if all(h.tokens != ref for h in samples):
            lp, att = forward_logprob(params, pair.source, ref, append_eos=False)
            samples.hypotheses.append(Hypothesis(ref, lp, att))
    return samples


@dataclass
class SentenceKL:
    kl: float
    q: np.ndarray
    p: np.ndarray
    features: list
    samples: SampleSet


def sentence_kl(params, pair, gamma, resources, feature_config, config: PRConfig, rng) -> SentenceKL:
    samples = build_sample_set(params, pair, config, rng)
    feats = [compute_features(pair.source, h.tokens, h.attention, resources, feature_config) for h in samples]
    q = q_tilde(gamma, feats)
    p = p_tilde(samples.logprobs, config.alpha)
    return SentenceKL(kl_approx(q, p), q, p, feats, samples)


def train_posreg(config: PRConfig, corpus: list[SentencePair], resources: KnowledgeResources,
                 init_params: ModelParams, init_gamma: dict[str, float] | None = None,
                 feature_config: FeatureConfig = FeatureConfig(), trace_file=None):
    """Joint ascent of lambda1 * L(theta) - lambda2 * KL(Q~ || P~) in theta and gamma.

    theta takes AdaDelta steps on lambda1 * dL - lambda2 * dKL; gamma takes
    plain steps of size ``gamma_lr`` on -lambda2 * dKL.  Returns
    (params, gamma, trace) where the trace has one record per
    ``trace_interval`` iterations.
    """
    if not corpus:
        raise ValueError("empty corpus")
    params = init_params.copy()
    gamma = dict(init_gamma or {})
    opt = AdaDelta(params, config.rho, config.eps, config.lr)
    batches = minibatches(len(corpus), config.pr_batch_size, rng_stream(config.seed, "shuffle"))
    sample_rng = rng_stream(config.seed, "sampling")
    lam1, lam2 = config.lambda1, config.lambda2
    trace = []
    acc_lp, acc_kl, acc_n = 0.0, 0.0, 0
    start = time.perf_counter()

    for it in range(config.max_iters):
        batch = [corpus[i] for i in next(batches)]
        lps, grad = likelihood_gradient(params, batch)
        grad = grad.scaled(lam1)
        gamma_step: dict[str, float] = {}
        kls = []
        for pair in batch:
            sk = sentence_kl(params, pair, gamma, resources, feature_config, config, sample_rng)
            kls.append(sk.kl)
            if lam2 == 0.0 or len(sk.samples) == 1:
                continue
            scale = lam2 / len(batch)
            for key, g in kl_gamma_gradient(sk.features, sk.q, sk.p).items():
                gamma_step[key] = gamma_step.get(key, 0.0) - scale * g
            _, g_theta = weighted_grad(params, [list(pair.source)] * len(sk.samples),
                                       [list(h.tokens) for h in sk.samples],
                                       kl_theta_weights(sk.q, sk.p, config.alpha))
            grad.add_(g_theta, -scale)

        lp = float(lps.mean())
        kl = float(np.mean(kls))
        if not (math.isfinite(lp) and math.isfinite(kl)):
            raise NumericalError(f"non-finite objective at iteration {it}")
        opt.step(params, grad)
        for key, step in gamma_step.items():
            gamma[key] = gamma.get(key, 0.0) + config.gamma_lr * step
        if not params.all_finite() or not all(math.isfinite(v) for v in gamma.values()):
            raise NumericalError(f"non-finite parameters after iteration {it}")

        acc_lp += lp
        acc_kl += kl
        acc_n += 1
        if acc_n == config.trace_interval or it == config.max_iters - 1:
            record = {
                "iteration": it + 1,
                "mean_logp": acc_lp / acc_n,
                "mean_kl": acc_kl / acc_n,
                "gamma_norm": math.sqrt(math.fsum(v * v for v in gamma.values())),
                "wall_clock": time.perf_counter() - start,
            }
            trace.append(record)
            if trace_file is not None:
                trace_file.write(json.dumps(record) + "\n")
            logger.info("pr iter %d logp %.4f kl %.4f |gamma| %.4f", record["iteration"],
                        record["mean_logp"], record["mean_kl"], record["gamma_norm"])
            acc_lp, acc_kl, acc_n = 0.0, 0.0, 0
    return params, gamma, trace


def mean_sampled_kl(params, gamma, corpus, resources, config: PRConfig,
                    feature_config: FeatureConfig = FeatureConfig(), seed: int = 0) -> float:
    """Average KL(Q~ || P~) over a corpus, with samples from a fixed stream."""
    rng = rng_stream(seed, "eval-sampling")
    return float(np.mean([sentence_kl(params, pair, gamma, resources, feature_config, config, rng).kl
                          for pair in corpus]))
