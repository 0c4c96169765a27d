"""Prior-knowledge resources and sentence-level feature functions.

Feature ids are strings:

* ``"CP"`` -- coverage penalty over the attention matrix
* ``"LR"`` -- length ratio
* ``"BD:<src> ||| <tgt>"`` -- one indicator per bilingual dictionary entry
* ``"PT:<src phrase> ||| <tgt phrase>"`` -- one indicator per phrase-table entry
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from prnmt.corpus import EOS, Vocabulary

logger = logging.getLogger(__name__)

CP = "CP"
LR = "LR"
FAMILIES = ("BD", "PT", "CP", "LR")
SEP = " ||| "


def bd_feature_id(src: str, tgt: str) -> str:
    return f"BD:{src}{SEP}{tgt}"


def pt_feature_id(src: tuple[str, ...], tgt: tuple[str, ...]) -> str:
    return f"PT:{' '.join(src)}{SEP}{' '.join(tgt)}"


@dataclass(frozen=True)
class DictEntry:
    src: str
    tgt: str
    src_id: int
    tgt_id: int
    p_src_given_tgt: float
    p_tgt_given_src: float

    @property
    def feature_id(self) -> str:
        return bd_feature_id(self.src, self.tgt)


@dataclass(frozen=True)
class PhraseEntry:
    src: tuple[str, ...]
    tgt: tuple[str, ...]
    src_ids: tuple[int, ...]
    tgt_ids: tuple[int, ...]
    p_src_given_tgt: float
    p_tgt_given_src: float
    count: int

    @property
    def feature_id(self) -> str:
        return pt_feature_id(self.src, self.tgt)


@dataclass
class Dictionary:
    entries: list[DictEntry] = field(default_factory=list)

    def __post_init__(self):
        self.by_src = defaultdict(list)
        for e in self.entries:
            self.by_src[e.src_id].append(e)

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(f"{e.src}\t{e.tgt}\t{e.p_src_given_tgt!r}\t{e.p_tgt_given_src!r}\n")


@dataclass
class PhraseTable:
    entries: list[PhraseEntry] = field(default_factory=list)

    def __post_init__(self):
        self.by_src = defaultdict(list)
        for e in self.entries:
            self.by_src[e.src_ids].append(e)
        self.max_src_len = max((len(e.src_ids) for e in self.entries), default=0)
        self.max_tgt_len = max((len(e.tgt_ids) for e in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(f"{' '.join(e.src)}\t{' '.join(e.tgt)}\t{e.p_src_given_tgt!r}\t"
                        f"{e.p_tgt_given_src!r}\t{e.count}\n")


@dataclass
class KnowledgeResources:
    dictionary: Dictionary = field(default_factory=Dictionary)
    phrase_table: PhraseTable = field(default_factory=PhraseTable)

    def feature_ids(self, config: "FeatureConfig | None" = None) -> list[str]:
        """All feature ids these resources can fire, in a fixed order."""
        fams = FeatureConfig().families if config is None else config.families
        ids = [f for f in (CP, LR) if f in fams]
        if "BD" in fams:
            ids += [e.feature_id for e in self.dictionary.entries]
        if "PT" in fams:
            ids += [e.feature_id for e in self.phrase_table.entries]
        return ids


@dataclass(frozen=True)
class FeatureConfig:
    beta: float = 1.236
    cp_epsilon: float = 1e-6
    families: tuple[str, ...] = FAMILIES
    eos_id: int = EOS

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 < self.cp_epsilon < 1:
            raise ValueError("cp_epsilon must lie in (0, 1)")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown feature families {sorted(unknown)}")


@dataclass(frozen=True)
class ResourceThresholds:
    dict_min_prob: float = 0.1
    phrase_min_prob: float = 0.5
    phrase_min_count: int = 10
    max_phrase_len: int = 4


# --- loading ---------------------------------------------------------------

def _fields(line: str, n: int, path, lineno: int) -> list[str]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != n or not all(p.strip() for p in parts):
        raise ValueError(f"{path}:{lineno}: expected {n} tab-separated fields, got {len(parts)}")
    return parts


def _prob(text: str, path, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad probability {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{path}:{lineno}: probability {value} outside [0, 1]")
    return value


def load_dictionary(path, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                    min_prob: float = 0.1) -> Dictionary:
    """Read ``src<TAB>tgt<TAB>p(src|tgt)<TAB>p(tgt|src)`` lines.

    Entries with an out-of-vocabulary token, or with either probability not
    above ``min_prob``, are discarded.
    """
    entries, dropped, seen = [], 0, set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            src, tgt, p_st, p_ts = _fields(line, 4, path, lineno)
            p_st, p_ts = _prob(p_st, path, lineno), _prob(p_ts, path, lineno)
            src, tgt = src.strip(), tgt.strip()
            if src not in src_vocab or tgt not in tgt_vocab or not (p_st > min_prob and p_ts > min_prob):
                dropped += 1
                continue
            if (src, tgt) in seen:
                continue
            seen.add((src, tgt))
            entries.append(DictEntry(src, tgt, src_vocab.token_to_id[src], tgt_vocab.token_to_id[tgt], p_st, p_ts))
    logger.info("dictionary %s: kept %d entries, dropped %d", path, len(entries), dropped)
    return Dictionary(entries)


def load_phrase_table(path, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                      min_prob: float = 0.5, min_count: int = 10) -> PhraseTable:
    """Read ``src phrase<TAB>tgt phrase<TAB>p(src|tgt)<TAB>p(tgt|src)<TAB>count`` lines."""
    entries, dropped, seen = [], 0, set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            src, tgt, p_st, p_ts, count = _fields(line, 5, path, lineno)
            p_st, p_ts = _prob(p_st, path, lineno), _prob(p_ts, path, lineno)
            try:
                count = int(count)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad count {count!r}") from None
            src, tgt = tuple(src.split()), tuple(tgt.split())
            oov = any(t not in src_vocab for t in src) or any(t not in tgt_vocab for t in tgt)
            if oov or count < min_count or not (p_st > min_prob and p_ts > min_prob):
                dropped += 1
                continue
            if (src, tgt) in seen:
                continue
            seen.add((src, tgt))
            entries.append(PhraseEntry(src, tgt, tuple(src_vocab.encode(src)), tuple(tgt_vocab.encode(tgt)),
                                       p_st, p_ts, count))
    logger.info("phrase table %s: kept %d entries, dropped %d", path, len(entries), dropped)
    return PhraseTable(entries)


# --- extraction ------------------------------------------------------------

def _ngrams(tokens, max_n):
    out = set()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            out.add(tuple(tokens[i:i + n]))
    return out


def _cooccurrence(units_per_pair):
    joint, src_tot, tgt_tot = Counter(), Counter(), Counter()
    for src_units, tgt_units in units_per_pair:
        src_tot.update(src_units)
        tgt_tot.update(tgt_units)
        for s in src_units:
            for t in tgt_units:
                joint[s, t] += 1
    return joint, src_tot, tgt_tot


def extract_resources(pairs, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                      thresholds: ResourceThresholds = ResourceThresholds()):
    """Estimate a dictionary and phrase table from raw token pairs by co-occurrence.

    Counts are sentence-level presence: p(t|s) is the fraction of sentence
    pairs containing s whose target also contains t, and likewise for p(s|t).
    """
    if not pairs:
        raise ValueError("empty corpus")
    th = thresholds
    words = [(set(s), set(t)) for s, t in pairs]
    joint, src_tot, tgt_tot = _cooccurrence(words)
    dict_entries = []
    for (s, t), c in sorted(joint.items()):
        if s not in src_vocab or t not in tgt_vocab:
            continue
        p_st, p_ts = c / tgt_tot[t], c / src_tot[s]
        if p_st > th.dict_min_prob and p_ts > th.dict_min_prob:
            dict_entries.append(DictEntry(s, t, src_vocab.token_to_id[s], tgt_vocab.token_to_id[t], p_st, p_ts))

    phrases = [(_ngrams(s, th.max_phrase_len), _ngrams(t, th.max_phrase_len)) for s, t in pairs]
    joint, src_tot, tgt_tot = _cooccurrence(phrases)
    phrase_entries = []
    for (s, t), c in sorted(joint.items()):
        if c < th.phrase_min_count:
            continue
        if any(w not in src_vocab for w in s) or any(w not in tgt_vocab for w in t):
            continue
        p_st, p_ts = c / tgt_tot[t], c / src_tot[s]
        if p_st > th.phrase_min_prob and p_ts > th.phrase_min_prob:
            phrase_entries.append(PhraseEntry(s, t, tuple(src_vocab.encode(s)), tuple(tgt_vocab.encode(t)),
                                              p_st, p_ts, c))
    return Dictionary(dict_entries), PhraseTable(phrase_entries)


# --- features --------------------------------------------------------------

def length_ratio(src_len: int, tgt_len: int, beta: float) -> float:
    expected = beta * src_len
    if expected < tgt_len:
        return expected / tgt_len
    return tgt_len / expected


def coverage_penalty(attention, epsilon: float = 1e-6) -> float:
    """sum_i log(min(sum_j a[j, i], 1)), each log clamped below at log(epsilon).

    ``attention`` has one row per target step and one column per source word.
    """
    coverage = np.asarray(attention, dtype=np.float64).sum(axis=0)
    return float(np.log(np.clip(coverage, epsilon, 1.0)).sum())


def compute_features(x, y, attention, resources: KnowledgeResources,
                     config: FeatureConfig = FeatureConfig()) -> dict[str, float]:
    """Sparse feature vector phi(x, y).

    ``attention`` must have ``len(y)`` rows and ``len(x)`` columns.  A
    trailing EOS in ``y`` is a decoding step (it counts for coverage) but not
    a word (it is ignored by the dictionary, phrase and length features).
    """
    x = tuple(int(t) for t in x)
    y = tuple(int(t) for t in y)
    attention = np.asarray(attention)
    if attention.ndim != 2 or attention.shape != (len(y), len(x)):
        raise ValueError(f"attention shape {attention.shape} does not match (|y|, |x|) = ({len(y)}, {len(x)})")
    words = y[:-1] if y and y[-1] == config.eos_id else y
    fams = config.families
    phi = {}
    if "CP" in fams:
        phi[CP] = coverage_penalty(attention, config.cp_epsilon)
    if "LR" in fams and x and words:
        phi[LR] = length_ratio(len(x), len(words), config.beta)
    if "BD" in fams and len(resources.dictionary):
        tgt_words = set(words)
        for s in set(x):
            for e in resources.dictionary.by_src.get(s, ()):
                if e.tgt_id in tgt_words:
                    phi[e.feature_id] = 1.0
    pt = resources.phrase_table
    if "PT" in fams and len(pt):
        tgt_grams = _ngrams(words, pt.max_tgt_len)
        for g in _ngrams(x, pt.max_src_len):
            for e in pt.by_src.get(g, ()):
                if e.tgt_ids in tgt_grams:
                    phi[e.feature_id] = 1.0
    return phi


def dot(gamma: dict[str, float], phi: dict[str, float]) -> float:
    if len(gamma) < len(phi):
        return math.fsum(w * phi[k] for k, w in gamma.items() if k in phi)
    return math.fsum(v * gamma.get(k, 0.0) for k, v in phi.items())


def save_weights(gamma: dict[str, float], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for k in sorted(gamma):
            f.write(f"{k}\t{gamma[k]!r}\n")


def load_weights(path) -> dict[str, float]:
    gamma = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.rpartition("\t")
            if not sep or not key:
                raise ValueError(f"{path}:{lineno}: expected 'feature_id<TAB>weight'")
            gamma[key] = float(value)
    return gamma
