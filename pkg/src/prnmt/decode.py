"""k-best reranking with feature weights and coverage-penalty refined decoding."""

from __future__ import annotations

from dataclasses import dataclass

from prnmt.features import (
    FeatureConfig,
    KnowledgeResources,
    compute_features,
    coverage_penalty,
    dot,
)
from prnmt.model.params import ModelParams
from prnmt.model.search import Hypothesis, beam_search


@dataclass
class CandidateScore:
    hypothesis: Hypothesis
    logp: float
    gamma_phi: float

    @property
    def combined(self) -> float:
        return self.logp + self.gamma_phi


@dataclass
class RerankedResult:
    chosen: Hypothesis
    combined_score: float
    candidates: list[CandidateScore]


def _best(candidates: list[CandidateScore]) -> CandidateScore:
    # highest combined score, then higher logP, then smaller token sequence
    return min(candidates, key=lambda c: (-c.combined, -c.logp, c.hypothesis.tokens))


def rerank(kbest: list[Hypothesis], source, gamma: dict[str, float], resources: KnowledgeResources,
           config: FeatureConfig = FeatureConfig()) -> RerankedResult:
    """Pick argmax of log P(y|x) + gamma . phi(x, y) over a k-best list."""
    if not kbest:
        raise ValueError("empty k-best list")
    scored = []
    for hyp in kbest:
        phi = compute_features(source, hyp.tokens, hyp.attention, resources, config)
        scored.append(CandidateScore(hyp, hyp.logp, dot(gamma, phi)))
    best = _best(scored)
    return RerankedResult(best.hypothesis, best.combined, scored)


def decode_with_cp(params: ModelParams, x, beam_size: int, cp_weight: float = 0.2, max_len: int = 50,
                   cp_epsilon: float = 1e-6, penalize_during_search: bool = False) -> Hypothesis:
    """Beam search whose finished hypotheses are rescored by logP + cp_weight * CP.

    By default pruning uses logP alone; ``penalize_during_search`` also adds
    the penalty of the partial attention when pruning.
    """
    if cp_weight < 0:
        raise ValueError("cp_weight must be non-negative")
    def penalized(logp, att):
        return logp + cp_weight * coverage_penalty(att, cp_epsilon)

    prune = penalized if penalize_during_search and cp_weight > 0 else None
    kbest = beam_search(params, x, beam_size, max_len, prune_score=prune)
    if cp_weight == 0:
        return kbest[0]
    return rescore_with_cp(kbest, cp_weight, cp_epsilon).hypothesis


def rescore_with_cp(kbest: list[Hypothesis], cp_weight: float, cp_epsilon: float = 1e-6) -> CandidateScore:
    """Best finished hypothesis under logP + cp_weight * CP(attention)."""
    return _best([CandidateScore(h, h.logp, cp_weight * coverage_penalty(h.attention, cp_epsilon))
                  for h in kbest])


def format_kbest_line(index: int, tokens: str, cand: CandidateScore) -> str:
    return f"{index} ||| {tokens} ||| {cand.logp!r} ||| {cand.gamma_phi!r} ||| {cand.combined!r}"


def parse_kbest_line(line: str):
    idx, tokens, logp, gphi, combined = line.rstrip("\n").split(" ||| ")
    return int(idx), tokens, float(logp), float(gphi), float(combined)
