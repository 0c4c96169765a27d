"""KL(Q~ || P~) on a sampled candidate set and its gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prnmt.features import dot
from prnmt.model.network import weighted_grad
from prnmt.model.params import ModelParams
from prnmt.model.search import Hypothesis, SampleSet


def _softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise ValueError("need a non-empty 1-d vector")
    e = np.exp(logits - logits.max())
    return e / e.sum()


def q_tilde(gamma: dict[str, float], features: list[dict[str, float]]) -> np.ndarray:
    """Log-linear distribution exp(gamma . phi) renormalized over the candidates."""
    return _softmax([dot(gamma, phi) for phi in features])


def p_tilde(log_probs, alpha: float) -> np.ndarray:
    """Model probabilities raised to ``alpha`` and renormalized over the candidates."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return _softmax(alpha * np.asarray(log_probs, dtype=np.float64))


def kl_approx(q, p) -> float:
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError("q and p must have equal length")
    support = q > 0
    if np.any(p[support] == 0):
        raise ValueError("p has zero mass where q is positive")
    return float(np.sum(q[support] * (np.log(q[support]) - np.log(p[support]))))


@dataclass
class ScoredSample:
    hypothesis: Hypothesis
    features: dict[str, float]
    q_prob: float
    p_prob: float


def score_samples(sample_set: SampleSet, features, gamma, alpha) -> list[ScoredSample]:
    q = q_tilde(gamma, features)
    p = p_tilde(sample_set.logprobs, alpha)
    return [ScoredSample(h, phi, float(qi), float(pi))
            for h, phi, qi, pi in zip(sample_set.hypotheses, features, q, p)]


def kl_gamma_gradient(features, q, p) -> dict[str, float]:
    """d KL / d gamma = E_q[(phi - E_q[phi]) (log q - log p)]."""
    q = np.asarray(q)
    keys = sorted({k for phi in features for k in phi})
    if not keys:
        return {}
    phi = np.array([[f.get(k, 0.0) for k in keys] for f in features])
    with np.errstate(divide="ignore"):
        log_ratio = np.where(q > 0, np.log(q) - np.log(p), 0.0)
    centered = phi - q @ phi
    grad = (q * log_ratio) @ centered
    return dict(zip(keys, grad.tolist()))


def kl_theta_weights(q, p, alpha: float) -> np.ndarray:
    """Per-candidate weights w with d KL / d theta = sum_y w_y d log P(y|x) / d theta.

    Q~ does not depend on theta, so only log P~ is differentiated:
    w = -alpha (q - p).
    """
    return -alpha * (np.asarray(q) - np.asarray(p))


def kl_gradients(sample_set: SampleSet, features, gamma, params: ModelParams, alpha: float):
    """(d KL/d gamma, d KL/d theta) for KL(Q~ || P~) on one sample set.

    Feature values, including the attention-based coverage penalty, are held
    constant with respect to theta.
    """
    if len(features) != len(sample_set):
        raise ValueError("one feature vector per hypothesis required")
    q = q_tilde(gamma, features)
    p = p_tilde(sample_set.logprobs, alpha)
    grad_gamma = kl_gamma_gradient(features, q, p)
    if len(sample_set) == 1:
        return {k: 0.0 for k in grad_gamma}, params.zeros_like()
    x = list(sample_set.source)
    _, grad_theta = weighted_grad(params, [x] * len(sample_set),
                                  [list(h.tokens) for h in sample_set],
                                  kl_theta_weights(q, p, alpha))
    return grad_gamma, grad_theta
