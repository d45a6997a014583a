"""Quorum decisions over verifier hash reports and their probability model.

Quorum thresholds are strict: a simple majority needs matched > n/2 and a
super majority needs matched > 2n/3.  The closed-form acceptance chance of
a quorum over n independent verifiers, each matching the mode hash with
probability p, is the binomial upper tail from the smallest passing k.
Binomial coefficients are computed exactly in integer arithmetic so the
1e-5-scale tails survive double rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import comb
from typing import Hashable, Sequence

from .phash import PerceptualHash, tolerant_mode


class QuorumRule(Enum):
    SIMPLE_MAJORITY = "majority"
    SUPER_MAJORITY = "super"

    def min_matches(self, total: int) -> int:
        """Smallest matched count that satisfies the rule for ``total`` reports."""
        if total < 1:
            raise ValueError("total must be >= 1")
        if self is QuorumRule.SIMPLE_MAJORITY:
            return total // 2 + 1  # k > n/2
        return (2 * total) // 3 + 1  # k > 2n/3

    def satisfied(self, matched: int, total: int) -> bool:
        return matched >= self.min_matches(total)


@dataclass(frozen=True)
class VerifierReport:
    verifier_id: Hashable
    hash: PerceptualHash


@dataclass(frozen=True)
class ConsensusDecision:
    accepted: bool
    mode_hash: PerceptualHash
    matched_count: int
    total: int
    rule: QuorumRule
    tolerance: int
    dissenting_ids: tuple[Hashable, ...]


@dataclass(frozen=True)
class VerificationModel:
    """Per-verifier correctness probability p over n verifiers under a rule."""

    p: float
    n: int
    rule: QuorumRule

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def decide(
    reports: Sequence[VerifierReport],
    tolerance: int,
    rule: QuorumRule,
) -> ConsensusDecision:
    """Run a tolerant-mode vote over the reports and apply the quorum rule.

    Order-independent: the mode tie-break is lexicographic on the hash
    encoding, so any permutation of the same reports yields the same
    decision.
    """
    if len(reports) == 0:
        raise ValueError("no reports")
    ids = [r.verifier_id for r in reports]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate verifier ids")
    vote = tolerant_mode([r.hash for r in reports], tolerance)
    dissenting = tuple(reports[i].verifier_id for i, _ in vote.outliers)
    return ConsensusDecision(
        accepted=rule.satisfied(vote.matched_count, len(reports)),
        mode_hash=vote.mode_hash,
        matched_count=vote.matched_count,
        total=len(reports),
        rule=rule,
        tolerance=tolerance,
        dissenting_ids=dissenting,
    )


def quorum_probability(model: VerificationModel) -> float:
    """P(enough verifiers match) = binomial tail from the rule's minimum k."""
    p, n = model.p, model.n
    k_min = model.rule.min_matches(n)
    q = 1.0 - p
    total = 0.0
    for k in range(k_min, n + 1):
        total += comb(n, k) * p**k * q ** (n - k)
    return min(total, 1.0)


def min_verifiers(
    p: float,
    rule: QuorumRule,
    target: float,
    n_max: int = 64,
) -> int | None:
    """Smallest verifier count reaching the target quorum probability."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly in (0, 1)")
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie strictly in (0, 1)")
    for n in range(1, n_max + 1):
        if quorum_probability(VerificationModel(p, n, rule)) >= target:
            return n
    return None


def probability_table(
    p_values: Sequence[float],
    n_values: Sequence[int],
    rule: QuorumRule,
) -> list[tuple[float, int, QuorumRule, float]]:
    """Quorum probabilities over the (p, n) cross product."""
    rows = []
    for p in p_values:
        for n in n_values:
            prob = quorum_probability(VerificationModel(p, n, rule))
            rows.append((p, n, rule, prob))
    return rows
