"""Corpus BLEU in the multi-bleu.perl convention."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def __str__(self) -> str:
        prec = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.bleu:.2f}, {prec} (BP={self.brevity_penalty:.3f}, ratio={self.ratio:.3f}, "
                f"hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_score(hypotheses, references, max_n: int = 4, lowercase: bool = True) -> BleuReport:
    """Corpus-level BLEU with clipped n-gram counts and no smoothing.

    ``references[k]`` is the list of reference token sequences for
    ``hypotheses[k]``.  The brevity penalty uses, per sentence, the reference
    length closest to the hypothesis length (ties go to the shorter one).
    """
    if not hypotheses:
        raise ValueError("empty corpus")
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references differ in length")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        if not refs:
            raise ValueError("every hypothesis needs at least one reference")
        if lowercase:
            hyp = [t.lower() for t in hyp]
            refs = [[t.lower() for t in r] for r in refs]
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            h = _counts(hyp, n)
            best = Counter()
            for r in refs:
                best |= _counts(r, n)
            matches[n - 1] += sum(min(c, best[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len <= ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) > 0:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    else:
        bleu = 0.0
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len)


def read_tokenized(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]


def bleu_files(hyp_path, ref_paths, lowercase: bool = True) -> BleuReport:
    hyps = read_tokenized(hyp_path)
    ref_sets = [read_tokenized(p) for p in ref_paths]
    for p, refs in zip(ref_paths, ref_sets):
        if len(refs) != len(hyps):
            raise ValueError(f"{p}: {len(refs)} lines, hypothesis file has {len(hyps)}")
    return bleu_score(hyps, [list(r) for r in zip(*ref_sets)], lowercase=lowercase)
