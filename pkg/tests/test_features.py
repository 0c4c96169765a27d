import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prnmt.corpus import EOS, build_vocab
from prnmt.features import (
    CP,
    LR,
    DictEntry,
    Dictionary,
    FeatureConfig,
    KnowledgeResources,
    PhraseEntry,
    PhraseTable,
    ResourceThresholds,
    bd_feature_id,
    compute_features,
    coverage_penalty,
    extract_resources,
    length_ratio,
    load_dictionary,
    load_phrase_table,
    load_weights,
    pt_feature_id,
    save_weights,
)


@pytest.fixture
def vocabs():
    src = build_vocab([("baigong a b c d".split(), ["x"])], "source", 20)
    tgt = build_vocab([(["x"], "the_white_house w x y z".split())], "target", 20)
    return src, tgt


def uniform_attention(rows, cols):
    return np.full((rows, cols), 1.0 / cols)


# --- length ratio ------------------------------------------------------------

@pytest.mark.parametrize("tgt_len, expected", [(12, 1.0), (100, 0.12), (6, 0.5)])
def test_length_ratio_worked_values(tgt_len, expected):
    assert abs(length_ratio(10, tgt_len, 1.2) - expected) <= 1e-12


@given(st.integers(1, 60), st.integers(1, 60), st.floats(0.1, 5.0))
def test_length_ratio_range_and_symmetry(src_len, tgt_len, beta):
    v = length_ratio(src_len, tgt_len, beta)
    assert 0 < v <= 1
    a, b = beta * src_len, float(tgt_len)
    # swapping the roles of beta|x| and |y| gives the same value
    swapped = b / a if b < a else a / b
    assert math.isclose(v, swapped, rel_tol=1e-12)


# --- coverage penalty -----------------------------------------------------------

def test_cp_full_coverage_is_zero():
    att = np.array([[0.6, 0.4], [0.5, 0.6]])  # columns sum to 1.1, 1.0
    assert coverage_penalty(att) == 0.0


def test_cp_hand_value():
    att = np.array([[0.5, 0.5], [0.25, 0.75]])
    assert coverage_penalty(att) == pytest.approx(math.log(0.75), abs=1e-12)
    assert coverage_penalty(att) == pytest.approx(-0.28768, abs=1e-5)


def test_cp_zero_column_clamped():
    att = np.array([[1.0, 0.0]])
    assert coverage_penalty(att, 1e-6) == pytest.approx(math.log(1e-6))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_cp_nonpositive_and_monotone(rows, cols, seed):
    rng = np.random.default_rng(seed)
    att = rng.dirichlet(np.ones(cols), size=rows)
    cp = coverage_penalty(att)
    assert cp <= 0
    col = att.sum(axis=0)
    assert (cp == 0) == bool(np.all(col >= 1))
    under = np.flatnonzero(col < 1)
    if under.size:
        bumped = att.copy()
        bumped[0, under[0]] += 0.01
        assert coverage_penalty(bumped) >= cp


# --- dictionary / phrase table features ---------------------------------------

def test_bd_fires_on_presence(vocabs):
    sv, tv = vocabs
    entry = DictEntry("baigong", "the_white_house", sv.token_to_id["baigong"], tv.token_to_id["the_white_house"], 0.9, 0.9)
    res = KnowledgeResources(Dictionary([entry]))
    x = sv.encode("a baigong b".split())
    y_with = tv.encode("w the_white_house".split())
    y_without = tv.encode("w x".split())
    cfg = FeatureConfig(families=("BD",))
    fid = bd_feature_id("baigong", "the_white_house")
    assert compute_features(x, y_with, uniform_attention(2, 3), res, cfg) == {fid: 1.0}
    assert compute_features(x, y_without, uniform_attention(2, 3), res, cfg) == {}
    # multiplicity is ignored
    y_twice = tv.encode("the_white_house the_white_house".split())
    assert compute_features(x + x, y_twice, uniform_attention(2, 6), res, cfg) == {fid: 1.0}


def test_pt_requires_contiguous(vocabs, tmp_path):
    sv, tv = vocabs
    path = tmp_path / "pt.tsv"
    path.write_text("a b\tx y\t0.9\t0.9\t20\n")
    res = KnowledgeResources(phrase_table=load_phrase_table(path, sv, tv))
    cfg = FeatureConfig(families=("PT",))
    fid = pt_feature_id(("a", "b"), ("x", "y"))
    x = sv.encode("c a b".split())
    assert compute_features(x, tv.encode("x y".split()), uniform_attention(2, 3), res, cfg) == {fid: 1.0}
    assert compute_features(x, tv.encode("x z y".split()), uniform_attention(3, 3), res, cfg) == {}
    assert compute_features(sv.encode("a c b".split()), tv.encode("x y".split()),
                            uniform_attention(2, 3), res, cfg) == {}


def test_eos_is_a_step_but_not_a_word(vocabs):
    sv, tv = vocabs
    x = sv.encode("a b".split())
    y = tv.encode("w x".split()) + [EOS]
    phi = compute_features(x, y, uniform_attention(3, 2), KnowledgeResources(), FeatureConfig(beta=1.0))
    assert phi[LR] == 1.0
    assert phi[CP] == 0.0  # three rows of 0.5 per column


def test_attention_shape_mismatch(vocabs):
    with pytest.raises(ValueError):
        compute_features([4, 5], [4, 5, 6], uniform_attention(2, 2), KnowledgeResources())


@given(st.lists(st.integers(4, 8), min_size=1, max_size=4),
       st.lists(st.integers(4, 8), min_size=1, max_size=4),
       st.lists(st.integers(4, 8), min_size=1, max_size=3))
def test_bd_pt_monotone_in_target(x, y, extra):
    sv = build_vocab([(["a", "b", "c", "d", "e"], ["x"])], "source", 20)
    tv = build_vocab([(["x"], ["p", "q", "r", "s", "t"])], "target", 20)
    d = Dictionary([DictEntry(sv.id_to_token[s], tv.id_to_token[t], s, t, 1, 1)
                    for s in range(4, 9) for t in range(4, 9) if (s + t) % 3 == 0])
    pt = PhraseTable([PhraseEntry((sv.id_to_token[s],) * 2, (tv.id_to_token[t],), (s, s), (t,), 1, 1, 10)
                      for s in range(4, 9) for t in range(4, 9)])
    res = KnowledgeResources(d, pt)
    cfg = FeatureConfig(families=("BD", "PT"))
    before = compute_features(x, y, uniform_attention(len(y), len(x)), res, cfg)
    yy = y + extra
    after = compute_features(x, yy, uniform_attention(len(yy), len(x)), res, cfg)
    assert set(before) <= set(after)


# --- resource files -------------------------------------------------------------

def test_load_dictionary_filters(vocabs, tmp_path):
    sv, tv = vocabs
    path = tmp_path / "d.tsv"
    path.write_text(
        "a\tx\t0.5\t0.5\n"        # kept
        "b\ty\t0.05\t0.9\n"       # below threshold
        "c\tunknown\t0.9\t0.9\n"  # OOV target
        "d\tz\t0.1\t0.9\n"        # not strictly above 0.1
    )
    d = load_dictionary(path, sv, tv)
    assert [(e.src, e.tgt) for e in d.entries] == [("a", "x")]


def test_load_dictionary_malformed(vocabs, tmp_path):
    sv, tv = vocabs
    path = tmp_path / "d.tsv"
    path.write_text("a\tx\t0.5\t0.5\nb\ty\t0.5\n")
    with pytest.raises(ValueError, match=":2:"):
        load_dictionary(path, sv, tv)


def test_load_phrase_table_filters(vocabs, tmp_path):
    sv, tv = vocabs
    path = tmp_path / "p.tsv"
    path.write_text(
        "a b\tx y\t0.6\t0.6\t9\n"    # too rare
        "a b\tx y\t0.6\t0.6\t10\n"   # kept
        "c\tz\t0.9\t0.9\t50\n"       # single word pair, kept
        "c d\tz w\t0.5\t0.9\t50\n"   # not above 0.5
    )
    pt = load_phrase_table(path, sv, tv)
    assert [(e.src, e.tgt, e.count) for e in pt.entries] == [(("a", "b"), ("x", "y"), 10), (("c",), ("z",), 50)]


def test_extract_identity_lexicon():
    pairs = [([f"s{i}"], [f"t{i}"]) for i in range(5) for _ in range(3)]
    sv = build_vocab(pairs, "source", 20)
    tv = build_vocab(pairs, "target", 20)
    d, pt = extract_resources(pairs, sv, tv)
    assert sorted((e.src, e.tgt) for e in d.entries) == [(f"s{i}", f"t{i}") for i in range(5)]
    assert all(e.p_src_given_tgt == 1.0 and e.p_tgt_given_src == 1.0 for e in d.entries)
    assert len(pt) == 0  # each pair occurs only 3 times


def test_extract_empty_survivors():
    pairs = [(["a", "b"], ["x", "y"])]
    sv = build_vocab(pairs, "source", 20)
    tv = build_vocab(pairs, "target", 20)
    d, pt = extract_resources(pairs, sv, tv, ResourceThresholds(dict_min_prob=1.0))
    assert len(d) == 0 and len(pt) == 0


def test_extract_count_threshold_monotone():
    # phrase pairs repeated 3, 8, 15 and 25 times
    pairs = []
    for i, reps in enumerate((3, 8, 15, 25)):
        pairs += [([f"s{i}", f"u{i}"], [f"t{i}", f"v{i}"])] * reps
    sv = build_vocab(pairs, "source", 40)
    tv = build_vocab(pairs, "target", 40)
    sizes = [len(extract_resources(pairs, sv, tv, ResourceThresholds(phrase_min_count=c))[1])
             for c in (1, 5, 10, 20, 30)]
    assert sizes == sorted(sizes, reverse=True)
    assert sizes[0] > sizes[-1] == 0


def test_resource_tsv_roundtrip(vocabs, tmp_path):
    sv, tv = vocabs
    pairs = [(["a", "b"], ["x", "y"])] * 12
    d, pt = extract_resources(pairs, sv, tv, ResourceThresholds(dict_min_prob=0.1, phrase_min_prob=0.1))
    d.save(tmp_path / "d.tsv")
    pt.save(tmp_path / "p.tsv")
    assert load_dictionary(tmp_path / "d.tsv", sv, tv).entries == d.entries
    assert load_phrase_table(tmp_path / "p.tsv", sv, tv, min_prob=0.1).entries == pt.entries


def test_gamma_file_roundtrip(tmp_path):
    gamma = {CP: 0.25, LR: -1.5, bd_feature_id("a", "x"): 1e-3, pt_feature_id(("a", "b"), ("x",)): 2.0}
    save_weights(gamma, tmp_path / "g.txt")
    assert load_weights(tmp_path / "g.txt") == gamma
