"""Ancestral sampling, greedy decoding and beam search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from prnmt.model.network import decoder_step, encode
from prnmt.model.params import ModelParams


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    logp: float
    attention: np.ndarray = field(repr=False)  # (len(tokens), |x|)

    def __post_init__(self):
        self.tokens = tuple(int(t) for t in self.tokens)


@dataclass
class SampleSet:
    source: tuple[int, ...]
    hypotheses: list[Hypothesis]

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    @property
    def logprobs(self) -> np.ndarray:
        return np.array([h.logp for h in self.hypotheses])


def _encode_one(params: ModelParams, x):
    src = np.asarray([list(x)], dtype=np.int64)
    return encode(params, src, np.ones_like(src, dtype=bool))


def draw_samples(params: ModelParams, x, k: int, max_len: int, rng: np.random.Generator):
    """k independent ancestral samples (temperature 1), no deduplication.

    Sequences stop at EOS or after ``max_len`` tokens.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    eos = params.config.eos_id
    enc = _encode_one(params, x).select(np.zeros(k, dtype=np.int64))
    s = enc.init_state
    prev = np.full(k, params.config.bos_id, dtype=np.int64)
    alive = np.arange(k)
    tokens = [[] for _ in range(k)]
    atts = [[] for _ in range(k)]
    logps = np.zeros(k)
    for _ in range(max_len):
        if alive.size == 0:
            break
        logp, alpha, s, _ = decoder_step(params, enc, prev, s)
        cdf = np.cumsum(np.exp(logp), axis=1)
        u = rng.random(alive.size) * cdf[:, -1]
        choice = np.minimum((cdf <= u[:, None]).sum(axis=1), logp.shape[1] - 1)
        for row, seq in enumerate(alive):
            tokens[seq].append(int(choice[row]))
            atts[seq].append(alpha[row])
        logps[alive] += logp[np.arange(alive.size), choice]
        keep = choice != eos
        alive, prev, s = alive[keep], choice[keep], s[keep]
        enc = enc.select(np.zeros(alive.size, dtype=np.int64))
    return [Hypothesis(tuple(t), float(lp), np.array(a)) for t, lp, a in zip(tokens, logps, atts)]


def sample_translations(params: ModelParams, x, k: int, max_len: int, seed=None, rng=None) -> SampleSet:
    """Draw k samples and merge duplicates, keeping first-draw order."""
    if rng is None:
        rng = np.random.default_rng(seed)
    seen = {}
    for hyp in draw_samples(params, x, k, max_len, rng):
        seen.setdefault(hyp.tokens, hyp)
    return SampleSet(tuple(x), list(seen.values()))


def greedy_decode(params: ModelParams, x, max_len: int) -> Hypothesis:
    eos = params.config.eos_id
    enc = _encode_one(params, x)
    s = enc.init_state
    prev = np.array([params.config.bos_id])
    tokens, atts, total = [], [], 0.0
    for _ in range(max_len):
        logp, alpha, s, _ = decoder_step(params, enc, prev, s)
        tok = int(np.argmax(logp[0]))
        total += float(logp[0, tok])
        tokens.append(tok)
        atts.append(alpha[0])
        if tok == eos:
            break
        prev = np.array([tok])
    return Hypothesis(tuple(tokens), total, np.array(atts))


def _rank_key(score, tokens):
    return (-score, tokens)


def beam_search(params: ModelParams, x, beam_size: int, max_len: int, prune_score=None) -> list[Hypothesis]:
    """Length-unnormalized beam search; returns up to ``beam_size`` hypotheses by logP.

    Each step keeps the ``beam_size`` best unfinished extensions; finished
    hypotheses are set aside and do not use beam slots.  Search stops once no
    live prefix can beat the current ``beam_size``-th finished score, since
    log-probabilities only decrease with length.  Ties go to the
    lexicographically smaller token sequence.

    ``prune_score(logp, attention_rows)`` replaces logP as the ranking score
    used while pruning; the returned list is always ordered by logP.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    eos = params.config.eos_id
    enc0 = _encode_one(params, x)
    V = params.config.tgt_vocab_size

    live_tokens = [()]
    live_scores = np.zeros(1)
    live_atts = [np.zeros((0, len(x)))]
    s = enc0.init_state
    prev = np.array([params.config.bos_id])
    finished: list[Hypothesis] = []

    for step in range(max_len):
        n = len(live_tokens)
        enc = enc0.select(np.zeros(n, dtype=np.int64))
        logp, alpha, s_new, _ = decoder_step(params, enc, prev, s)
        cand = live_scores[:, None] + logp
        if prune_score is None:
            rank = cand
        else:
            rank = np.empty_like(cand)
            for i in range(n):
                att = np.vstack([live_atts[i], alpha[i]])
                rank[i] = [prune_score(c, att) for c in cand[i]]
        flat = rank.ravel()
        # everything tied with the beam_size-th best is kept for the exact tie-break
        kth = min(beam_size, flat.size) - 1
        threshold = np.partition(-flat, kth)[kth]
        idx = np.flatnonzero(-flat <= threshold)
        chosen = sorted(idx, key=lambda f: _rank_key(flat[f], live_tokens[f // V] + (int(f % V),)))[:beam_size]

        new_tokens, new_scores, new_atts, parents, toks = [], [], [], [], []
        last = step == max_len - 1
        for f in chosen:
            i, tok = divmod(int(f), V)
            tokens = live_tokens[i] + (tok,)
            att = np.vstack([live_atts[i], alpha[i]])
            score = float(cand[i, tok])
            if tok == eos or last:
                finished.append(Hypothesis(tokens, score, att))
            else:
                new_tokens.append(tokens)
                new_scores.append(score)
                new_atts.append(att)
                parents.append(i)
                toks.append(tok)
        if not new_tokens:
            break
        live_tokens, live_scores, live_atts = new_tokens, np.array(new_scores), new_atts
        s = s_new[parents]
        prev = np.array(toks, dtype=np.int64)
        if prune_score is None and len(finished) >= beam_size:
            finished.sort(key=lambda h: _rank_key(h.logp, h.tokens))
            if live_scores.max() < finished[beam_size - 1].logp:
                break

    finished.sort(key=lambda h: _rank_key(h.logp, h.tokens))
    return finished[:beam_size]
