"""Independent reference computations used by the tests.

Nothing here shares code paths with the gradients or search it checks:
derivatives come from central differences of forward scores, and search
results from scoring every sequence by forced decoding.
"""

import itertools

import numpy as np

from prnmt.model import ModelConfig, forward_logprob, grad_logprob, init_params, sample_translations, score
from prnmt.posreg import kl_approx, kl_gradients, p_tilde, q_tilde


def central_difference(f, arr, step=1e-5):
    """Numerical gradient of scalar f() w.r.t. every entry of ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        fp = f()
        arr[i] = old - step
        fm = f()
        arr[i] = old
        out[i] = (fp - fm) / (2 * step)
    return out


def relative_error(analytic, numeric):
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom < 1e-10:
        return float(np.linalg.norm(analytic - numeric))
    return float(np.linalg.norm(analytic - numeric) / denom)


def toy_params(seed, src_vocab=7, tgt_vocab=6, embed=3, hidden=4, noise=0.5, **kw):
    """Small model with weights perturbed away from the symmetric init."""
    params = init_params(ModelConfig(src_vocab, tgt_vocab, embed, hidden, **kw), seed)
    rng = np.random.default_rng(seed + 1000)
    for arr in params.arrays.values():
        arr += rng.normal(0.0, noise, arr.shape)
    return params


def all_sequences(vocab_size, eos_id, max_len):
    """Every output a decoder can emit with at most ``max_len`` steps."""
    seqs = []
    for n in range(1, max_len + 1):
        for body in itertools.product(range(vocab_size), repeat=n):
            if eos_id in body[:-1]:
                continue
            if n < max_len and body[-1] != eos_id:
                continue
            seqs.append(body)
    return seqs


def enumerate_logprobs(params, x, max_len):
    cfg = params.config
    seqs = all_sequences(cfg.tgt_vocab_size, cfg.eos_id, max_len)
    return {s: forward_logprob(params, x, s, append_eos=False)[0] for s in seqs}


def sample_set_kl(params, x, tokens, feats, gamma, alpha):
    """KL(Q~ || P~) recomputed from scratch: forced decoding of every candidate, then two softmaxes."""
    logp, _ = score(params, [list(x)] * len(tokens), [list(t) for t in tokens])
    return kl_approx(q_tilde(gamma, feats), p_tilde(logp, alpha))


def random_kl_instance(seed):
    """Toy model, source, sampled candidate set, random features and gamma; None if only one sample."""
    rng = np.random.default_rng(seed)
    tgt_vocab = int(rng.integers(4, 11))
    p = toy_params(seed, src_vocab=int(rng.integers(6, 11)), tgt_vocab=tgt_vocab, noise=0.6)
    x = list(rng.integers(4, p.config.src_vocab_size, int(rng.integers(1, 6))))
    ss = sample_translations(p, x, 6, 5, seed=seed)
    if len(ss) < 2:
        return None
    feats = [{k: float(v) for k, v in zip(("a", "b", "c"), rng.normal(size=3)) if rng.random() < 0.8}
             for _ in ss]
    gamma = {k: float(rng.normal()) for k in ("a", "b", "c")}
    return p, x, ss, feats, gamma, float(rng.uniform(0.1, 1.0))


def _kl_of(params, x, ss, feats, gamma, alpha):
    return sample_set_kl(params, x, [h.tokens for h in ss], feats, gamma, alpha)


def kl_gradient_error(seed):
    """Worst relative error of kl_gradients against central differences on one random instance."""
    inst = random_kl_instance(seed)
    if inst is None:
        return None
    p, x, ss, feats, gamma, alpha = inst
    g_gamma, g_theta = kl_gradients(ss, feats, gamma, p, alpha)

    worst = 0.0
    keys = sorted(g_gamma)
    num_gamma = []
    for k in keys:
        arr = np.array([gamma[k]])

        def f_gamma():
            return _kl_of(p, x, ss, feats, {**gamma, k: float(arr[0])}, alpha)
        num_gamma.append(central_difference(f_gamma, arr)[0])
    if keys:
        worst = relative_error(np.array([g_gamma[k] for k in keys]), np.array(num_gamma))
    for name, arr in p.items():
        num = central_difference(lambda: _kl_of(p, x, ss, feats, gamma, alpha), arr)
        worst = max(worst, relative_error(g_theta[name], num))
    return worst


def logprob_gradient_error(seed):
    """Worst relative error of grad_logprob against central differences on a random toy pair."""
    rng = np.random.default_rng(seed)
    p = toy_params(seed, src_vocab=int(rng.integers(5, 11)), tgt_vocab=int(rng.integers(4, 11)), noise=0.6)
    x = list(rng.integers(4, p.config.src_vocab_size, int(rng.integers(1, 6))))
    y = list(rng.integers(3, p.config.tgt_vocab_size, int(rng.integers(1, 5))))
    _, grad = grad_logprob(p, x, y)
    return max(relative_error(grad[name], central_difference(lambda: forward_logprob(p, x, y)[0], arr))
               for name, arr in p.items())
