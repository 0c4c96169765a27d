import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import central_difference, kl_gradient_error, relative_error, sample_set_kl, toy_params

from prnmt.corpus import build_vocab, encode_corpus
from prnmt.features import CP, LR, FeatureConfig, KnowledgeResources
from prnmt.model import ModelConfig, forward_logprob, greedy_decode, init_params, sample_translations
from prnmt.model.search import Hypothesis, SampleSet
from prnmt.posreg import (
    MLEConfig,
    PRConfig,
    kl_approx,
    kl_gamma_gradient,
    kl_gradients,
    mean_sampled_kl,
    p_tilde,
    q_tilde,
    score_samples,
    train_mle,
    train_posreg,
)
from prnmt.synthetic import copy_corpus, lexicon_dictionary, lexicon_vocabs, noisy_lexicon_corpus


# --- distributions --------------------------------------------------------------

def test_q_tilde_hand_softmax():
    feats = [{"f": math.log(1)}, {"f": math.log(2)}, {"f": math.log(3)}]
    np.testing.assert_allclose(q_tilde({"f": 1.0}, feats), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


def test_q_tilde_trivial_cases():
    np.testing.assert_allclose(q_tilde({}, [{"a": 1.0}, {"b": 2.0}, {}]), [1 / 3] * 3)
    np.testing.assert_allclose(q_tilde({"a": 3.0}, [{"a": 1.0}, {"a": 1.0}]), [0.5, 0.5])


def test_p_tilde_hand_value():
    p = p_tilde([math.log(0.9), math.log(0.1)], 0.2)
    np.testing.assert_allclose(p, [0.6080, 0.3920], atol=2e-4)
    z = 0.9 ** 0.2 + 0.1 ** 0.2
    np.testing.assert_allclose(p, [0.9 ** 0.2 / z, 0.1 ** 0.2 / z], atol=1e-15)


def test_p_tilde_alpha_one_renormalizes():
    probs = np.array([0.2, 0.1, 0.05])
    np.testing.assert_allclose(p_tilde(np.log(probs), 1.0), probs / probs.sum(), atol=1e-15)


def test_p_tilde_rejects_bad_alpha():
    with pytest.raises(ValueError):
        p_tilde([0.0], 0.0)


def test_kl_hand_value():
    assert kl_approx([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-15)
    assert kl_approx([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.13081, abs=1e-5)
    assert kl_approx([1.0], [1.0]) == 0.0


def test_kl_zero_mass_error():
    with pytest.raises(ValueError):
        kl_approx([0.5, 0.5], [1.0, 0.0])
    assert kl_approx([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
def test_distributions_normalized_and_kl_nonnegative(n, seed, alpha):
    rng = np.random.default_rng(seed)
    feats = [{k: float(v) for k, v in zip("abc", rng.normal(size=3) * 5)} for _ in range(n)]
    gamma = {k: float(v) for k, v in zip("abc", rng.normal(size=3) * 5)}
    logp = rng.normal(size=n) * 20 - 30
    q, p = q_tilde(gamma, feats), p_tilde(logp, alpha)
    assert abs(q.sum() - 1) <= 1e-9 and abs(p.sum() - 1) <= 1e-9
    assert kl_approx(q, p) >= -1e-12
    assert kl_approx(q, q) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_feature_scaling_invariance(n, seed, c):
    rng = np.random.default_rng(seed)
    feats = [{"a": float(rng.normal()), "b": float(rng.normal())} for _ in range(n)]
    gamma = {"a": float(rng.normal()), "b": float(rng.normal())}
    scaled_feats = [{k: v * c for k, v in f.items()} for f in feats]
    scaled_gamma = {k: v / c for k, v in gamma.items()}
    np.testing.assert_allclose(q_tilde(scaled_gamma, scaled_feats), q_tilde(gamma, feats), atol=1e-12)


def test_score_samples_columns():
    p = toy_params(0)
    ss = sample_translations(p, [4, 5, 6], 20, 5, seed=0)
    feats = [{"f": float(len(h.tokens))} for h in ss]
    scored = score_samples(ss, feats, {"f": 0.3}, 0.2)
    assert sum(s.q_prob for s in scored) == pytest.approx(1.0, abs=1e-9)
    assert sum(s.p_prob for s in scored) == pytest.approx(1.0, abs=1e-9)


# --- gradients ------------------------------------------------------------------

def _kl_of(params, x, ss, feats, gamma, alpha):
    return sample_set_kl(params, x, [h.tokens for h in ss], feats, gamma, alpha)


@pytest.mark.parametrize("seed", range(3))
def test_kl_gradients_match_finite_differences(seed):
    err = kl_gradient_error(seed)
    assert err is not None and err <= 1e-4


def test_kl_gradients_two_candidates():
    p = toy_params(30)
    x = [4, 5]
    hyps = [Hypothesis(y, *forward_logprob(p, x, y, append_eos=False)) for y in [(4, 2), (5, 3, 2)]]
    ss = SampleSet(tuple(x), hyps)
    feats = [{"a": 1.0, CP: -0.3}, {LR: 0.5}]
    gamma = {"a": 0.4, CP: 1.0, LR: -0.2}
    g_gamma, g_theta = kl_gradients(ss, feats, gamma, p, 0.2)
    for k in gamma:
        arr = np.array([gamma[k]])
        num = central_difference(lambda: _kl_of(p, x, ss, feats, {**gamma, k: float(arr[0])}, 0.2), arr)[0]
        assert g_gamma[k] == pytest.approx(num, rel=1e-4, abs=1e-10)
    for name, arr in p.items():
        num = central_difference(lambda: _kl_of(p, x, ss, feats, gamma, 0.2), arr)
        assert relative_error(g_theta[name], num) <= 1e-4, name


def test_kl_gradients_single_sample_zero():
    p = toy_params(31)
    y = (4, 2)
    ss = SampleSet((4, 5), [Hypothesis(y, *forward_logprob(p, [4, 5], y, append_eos=False))])
    g_gamma, g_theta = kl_gradients(ss, [{"a": 2.0}], {"a": 1.0}, p, 0.2)
    assert g_gamma == {"a": 0.0}
    assert all(not v.any() for _, v in g_theta.items())


def test_identical_features_zero_gamma_gradient():
    p = toy_params(32)
    ss = sample_translations(p, [4, 5, 6], 10, 5, seed=1)
    feats = [{"a": 1.5, "b": -0.5} for _ in ss]
    g_gamma, _ = kl_gradients(ss, feats, {"a": 0.7}, p, 0.2)
    assert all(v == pytest.approx(0.0, abs=1e-15) for v in g_gamma.values())


def test_gamma_ascent_reaches_closed_form_optimum():
    # one binary feature separates the two candidates, so Q~ can match P~ exactly
    # and the optimum is gamma* = log(P~1 / P~2)
    logp = np.array([-1.3, -2.9])
    alpha = 0.2
    feats = [{"f": 1.0}, {}]
    p = p_tilde(logp, alpha)
    target = math.log(p[0] / p[1])
    assert target == pytest.approx(alpha * (logp[0] - logp[1]), abs=1e-12)
    gamma = {"f": -2.0}
    kls = []
    for _ in range(400):
        q = q_tilde(gamma, feats)
        kls.append(kl_approx(q, p))
        gamma["f"] -= 2.0 * kl_gamma_gradient(feats, q, p)["f"]
    assert all(b <= a + 1e-15 for a, b in zip(kls, kls[1:]))
    assert gamma["f"] == pytest.approx(target, abs=1e-8)
    assert kls[-1] < 1e-15


# --- trainers -----------------------------------------------------------------------

def toy_corpus(n=50, seed=0):
    raw = copy_corpus(n, n_words=6, seed=seed)
    sv, tv = build_vocab(raw, "source", 20), build_vocab(raw, "target", 20)
    return encode_corpus(raw, sv, tv), len(sv), len(tv)


def test_mle_zero_iterations_identity():
    corpus, vs, vt = toy_corpus(10)
    p = init_params(ModelConfig(vs, vt, 4, 6), 0)
    q, trace = train_mle(MLEConfig(max_iters=0), corpus, p)
    assert q.equals(p) and trace == []


def test_mle_token_likelihood_rises():
    corpus, vs, vt = toy_corpus(50)
    p = init_params(ModelConfig(vs, vt, 8, 16), 0)
    _, trace = train_mle(MLEConfig(batch_size=50, max_iters=11), corpus, p)
    lls = [r["token_logp"] for r in trace]
    drops = sum(b < a for a, b in zip(lls, lls[1:]))
    assert drops <= 2
    assert lls[-1] > lls[0]


def test_mle_deterministic():
    corpus, vs, vt = toy_corpus(20)
    p = init_params(ModelConfig(vs, vt, 4, 6), 0)
    a, ta = train_mle(MLEConfig(batch_size=4, max_iters=5, seed=3), corpus, p)
    b, tb = train_mle(MLEConfig(batch_size=4, max_iters=5, seed=3), corpus, p)
    assert a.equals(b) and ta == tb


def test_mle_empty_corpus():
    with pytest.raises(ValueError):
        train_mle(MLEConfig(), [], toy_params(0))


def test_mle_learns_copy_task():
    corpus, vs, vt = toy_corpus(20, seed=1)
    p = init_params(ModelConfig(vs, vt, 16, 32), 0)
    p, _ = train_mle(MLEConfig(batch_size=20, max_iters=500), corpus, p)
    right = total = 0
    for pair in corpus:
        out = greedy_decode(p, pair.source, 10).tokens
        ref = tuple(pair.target) + (p.config.eos_id,)
        total += len(ref)
        right += sum(a == b for a, b in zip(out, ref))
    assert right / total >= 0.99


def test_posreg_without_kl_is_mle_batch_one():
    corpus, vs, vt = toy_corpus(50)
    p = init_params(ModelConfig(vs, vt, 4, 6), 0)
    mle, _ = train_mle(MLEConfig(batch_size=1, max_iters=20, seed=5), corpus, p)
    pr, gamma, _ = train_posreg(PRConfig(lambda1=1.0, lambda2=0.0, sample_size=5, sample_max_len=8,
                                         max_iters=20, seed=5), corpus, KnowledgeResources(), p)
    assert pr.equals(mle)
    assert gamma == {}


def test_posreg_trace_records(tmp_path):
    import json
    corpus, vs, vt = toy_corpus(10)
    p = init_params(ModelConfig(vs, vt, 4, 6), 0)
    with open(tmp_path / "trace.jsonl", "w") as fh:
        _, gamma, trace = train_posreg(PRConfig(lambda1=1.0, lambda2=1.0, sample_size=5, sample_max_len=8,
                                                max_iters=6, trace_interval=4), corpus,
                                       KnowledgeResources(), p, trace_file=fh)
    lines = [json.loads(s) for s in (tmp_path / "trace.jsonl").read_text().splitlines()]
    assert lines == trace
    assert [r["iteration"] for r in trace] == [4, 6]
    assert set(trace[0]) == {"iteration", "mean_logp", "mean_kl", "gamma_norm", "wall_clock"}
    assert set(gamma) <= {CP, LR}


def test_pr_config_validation():
    with pytest.raises(ValueError):
        PRConfig(lambda2=-1.0)
    with pytest.raises(ValueError):
        PRConfig(alpha=0.0)
    with pytest.raises(ValueError):
        PRConfig(sample_size=0)


@pytest.mark.slow
def test_heldout_kl_decreases():
    sv, tv = lexicon_vocabs(10)
    train = encode_corpus(noisy_lexicon_corpus(300, 10, 0.2, 2, 4, seed=0), sv, tv)
    held = encode_corpus(noisy_lexicon_corpus(30, 10, 0.0, 2, 4, seed=1), sv, tv)
    res = KnowledgeResources(lexicon_dictionary(sv, tv, 10))
    fc = FeatureConfig(families=("BD",))
    p = init_params(ModelConfig(len(sv), len(tv), 16, 32), 0)
    p, _ = train_mle(MLEConfig(batch_size=30, max_iters=300), train, p)
    cfg = PRConfig(lambda1=1.0, lambda2=1.0, lr=0.1, gamma_lr=0.5, max_iters=300, sample_size=30,
                   sample_max_len=8, trace_interval=100)
    before = mean_sampled_kl(p, {}, held, res, cfg, fc, seed=0)
    pr, gamma, _ = train_posreg(cfg, train, res, p, {}, fc)
    after = mean_sampled_kl(pr, gamma, held, res, cfg, fc, seed=0)
    assert after < before
