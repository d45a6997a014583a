from fractions import Fraction
from math import comb

import pytest

from genverify.consensus import (
    QuorumRule,
    VerificationModel,
    VerifierReport,
    decide,
    min_verifiers,
    probability_table,
    quorum_probability,
)
from genverify.phash import HashKind, PerceptualHash


def h64(value: int) -> PerceptualHash:
    return PerceptualHash(HashKind.AHASH, value)


def quorum_probability_exact(p_num: int, p_den: int, n: int, rule: QuorumRule) -> float:
    """Exact-rational binomial tail, independent of the float implementation."""
    p = Fraction(p_num, p_den)
    k_min = rule.min_matches(n)
    total = Fraction(0)
    for k in range(k_min, n + 1):
        total += comb(n, k) * p**k * (1 - p) ** (n - k)
    return float(total)


# ---------------------------------------------------------------------------
# thresholds


def test_min_matches_strict_majority():
    assert QuorumRule.SIMPLE_MAJORITY.min_matches(3) == 2
    assert QuorumRule.SIMPLE_MAJORITY.min_matches(4) == 3
    assert QuorumRule.SIMPLE_MAJORITY.min_matches(5) == 3


def test_min_matches_strict_super_majority():
    # strict: k > 2n/3, so n=3 needs all three and n=6 needs five
    assert QuorumRule.SUPER_MAJORITY.min_matches(3) == 3
    assert QuorumRule.SUPER_MAJORITY.min_matches(4) == 3
    assert QuorumRule.SUPER_MAJORITY.min_matches(6) == 5
    assert QuorumRule.SUPER_MAJORITY.min_matches(10) == 7


# ---------------------------------------------------------------------------
# decide


def test_decide_unanimity():
    reports = [VerifierReport(i, h64(0xABCD)) for i in range(3)]
    decision = decide(reports, 0, QuorumRule.SIMPLE_MAJORITY)
    assert decision.accepted
    assert decision.matched_count == 3
    assert decision.total == 3
    assert decision.dissenting_ids == ()


def test_decide_two_of_three():
    a, b = h64(0), h64(0b111111)
    reports = [VerifierReport("v1", a), VerifierReport("v2", a), VerifierReport("v3", b)]
    decision = decide(reports, 2, QuorumRule.SIMPLE_MAJORITY)
    assert decision.accepted  # 2 > 1.5
    assert decision.mode_hash == a
    assert decision.dissenting_ids == ("v3",)


def test_decide_even_split_super_majority_fails():
    a, b = h64(0), h64(0b111111)
    reports = [
        VerifierReport(0, a), VerifierReport(1, a),
        VerifierReport(2, b), VerifierReport(3, b),
    ]
    decision = decide(reports, 2, QuorumRule.SUPER_MAJORITY)
    assert not decision.accepted  # 2 is not > 8/3
    assert decision.mode_hash == a  # lexicographically smaller encoding
    assert decision.matched_count == 2


def test_decide_is_permutation_invariant():
    a, b = h64(3), h64(0b11100000011)
    reports = [VerifierReport(0, a), VerifierReport(1, a), VerifierReport(2, b)]
    base = decide(reports, 1, QuorumRule.SIMPLE_MAJORITY)
    shuffled = decide(list(reversed(reports)), 1, QuorumRule.SIMPLE_MAJORITY)
    assert base.accepted == shuffled.accepted
    assert base.mode_hash == shuffled.mode_hash
    assert base.matched_count == shuffled.matched_count
    assert set(base.dissenting_ids) == set(shuffled.dissenting_ids)


def test_decide_is_pure():
    reports = [VerifierReport(0, h64(9)), VerifierReport(1, h64(9))]
    first = decide(reports, 0, QuorumRule.SIMPLE_MAJORITY)
    second = decide(reports, 0, QuorumRule.SIMPLE_MAJORITY)
    assert first == second


def test_decide_errors():
    with pytest.raises(ValueError):
        decide([], 0, QuorumRule.SIMPLE_MAJORITY)
    with pytest.raises(ValueError):
        decide([VerifierReport(0, h64(1)), VerifierReport(0, h64(2))],
               0, QuorumRule.SIMPLE_MAJORITY)
    with pytest.raises(ValueError):
        decide([VerifierReport(0, h64(1)),
                VerifierReport(1, PerceptualHash(HashKind.DHASH, 0))],
               0, QuorumRule.SIMPLE_MAJORITY)


# ---------------------------------------------------------------------------
# quorum_probability


def test_type1_simple_majority_reference_values():
    # 99.843%, 99.988%, 99.999% with 3, 5, 7 verifiers at p = 0.977
    targets = {3: 0.998436, 5: 0.999881, 7: 0.999991}
    for n, target in targets.items():
        value = quorum_probability(
            VerificationModel(0.977, n, QuorumRule.SIMPLE_MAJORITY))
        assert value == pytest.approx(target, abs=5e-6)


def test_type1_super_majority_reference_values():
    # 99.692% and 99.960% with 4 and 7 verifiers at p = 0.977
    targets = {4: 0.996922, 7: 0.999601}
    for n, target in targets.items():
        value = quorum_probability(
            VerificationModel(0.977, n, QuorumRule.SUPER_MAJORITY))
        assert value == pytest.approx(target, abs=5e-6)


def test_super_majority_n10_computed_value():
    # evaluates to ~99.995%, not the sometimes-quoted 99.999%
    value = quorum_probability(VerificationModel(0.977, 10, QuorumRule.SUPER_MAJORITY))
    assert value == pytest.approx(0.99995, abs=5e-5)
    assert abs(value - 0.99999) > 5e-6


def test_quorum_probability_matches_exact_rational_oracle():
    for rule in QuorumRule:
        for n in range(1, 20):
            ours = quorum_probability(VerificationModel(0.977, n, rule))
            exact = quorum_probability_exact(977, 1000, n, rule)
            assert ours == pytest.approx(exact, abs=1e-12)


def test_quorum_probability_certain_and_impossible():
    for rule in QuorumRule:
        for n in (1, 2, 5, 10):
            assert quorum_probability(VerificationModel(1.0, n, rule)) == 1.0
            assert quorum_probability(VerificationModel(0.0, n, rule)) == 0.0


def test_quorum_probability_monotone_in_p():
    for rule in QuorumRule:
        grid = [quorum_probability(VerificationModel(p / 100, 5, rule))
                for p in range(0, 101, 5)]
        assert all(a <= b + 1e-15 for a, b in zip(grid, grid[1:]))


def test_quorum_probability_monotone_in_odd_n_above_threshold():
    probs = [quorum_probability(
        VerificationModel(0.9, n, QuorumRule.SIMPLE_MAJORITY))
        for n in range(1, 22, 2)]
    assert all(a <= b + 1e-15 for a, b in zip(probs, probs[1:]))


def test_simple_majority_dominates_super_majority():
    for n in range(1, 15):
        for p in (0.3, 0.7, 0.977):
            simple = quorum_probability(
                VerificationModel(p, n, QuorumRule.SIMPLE_MAJORITY))
            sup = quorum_probability(
                VerificationModel(p, n, QuorumRule.SUPER_MAJORITY))
            assert simple + 1e-15 >= sup


def test_tail_plus_head_is_one():
    for rule in QuorumRule:
        for n in (3, 7, 11):
            p = 0.977
            tail = quorum_probability(VerificationModel(p, n, rule))
            k_min = rule.min_matches(n)
            head = sum(comb(n, k) * p**k * (1 - p) ** (n - k)
                       for k in range(k_min))
            assert abs(tail + head - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# min_verifiers / probability_table


def test_min_verifiers_reference_cases():
    assert min_verifiers(0.977, QuorumRule.SIMPLE_MAJORITY, 0.999) == 5
    assert min_verifiers(0.977, QuorumRule.SUPER_MAJORITY, 0.996) == 4
    assert min_verifiers(0.5, QuorumRule.SIMPLE_MAJORITY, 0.99, n_max=101) is None


def test_probability_table_reference_rows():
    rows = probability_table([0.977], [3, 5, 7], QuorumRule.SIMPLE_MAJORITY)
    values = [prob for _, _, _, prob in rows]
    assert values == pytest.approx([0.998436, 0.999881, 0.999991], abs=5e-6)

    rows = probability_table([0.977], [4, 7], QuorumRule.SUPER_MAJORITY)
    values = [prob for _, _, _, prob in rows]
    assert values == pytest.approx([0.996922, 0.999601], abs=5e-6)

    rows = probability_table([1.0], [1, 3, 9], QuorumRule.SIMPLE_MAJORITY)
    assert [prob for _, _, _, prob in rows] == [1.0, 1.0, 1.0]


def test_verification_model_validation():
    with pytest.raises(ValueError):
        VerificationModel(1.5, 3, QuorumRule.SIMPLE_MAJORITY)
    with pytest.raises(ValueError):
        VerificationModel(0.5, 0, QuorumRule.SIMPLE_MAJORITY)
