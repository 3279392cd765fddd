"""Discrete ratio selector: bias, exponentiation, quantization, plans."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, strategies as st

from sdcc.drs import (
    CompressionPlan,
    LengthCandidates,
    RatioCandidates,
    apply_scale,
    quantize_length,
    quantize_ratio,
    select_plan,
    to_factor,
    window_size,
)

R = RatioCandidates.default()
M = LengthCandidates.default()

# 2**2.3 to 19 significant digits (high-precision exponentiation oracle).
TWO_POW_2_3 = 4.924577653379665138


def linear_scan_quantize_ratio(r_hat: float, candidates: RatioCandidates) -> float:
    """Independent oracle: explicit scan with the fidelity tie-break."""
    lg = math.log2(r_hat)
    best, best_dist = None, None
    for c in candidates.factors:
        dist = abs(lg - math.log2(c))
        if best is None or dist < best_dist or (dist == best_dist and c < best):
            best, best_dist = c, dist
    return best


def linear_scan_quantize_length(r_hat: float, l_ctx: int, candidates: LengthCandidates) -> int:
    m_hat = l_ctx / r_hat
    best, best_dist = None, None
    for c in candidates.counts:
        dist = abs(m_hat - c)
        if best is None or dist < best_dist or (dist == best_dist and c > best):
            best, best_dist = c, dist
    return best


class TestApplyScale:
    def test_zero_bias_identity(self):
        assert apply_scale(2.3, 0.0) == 2.3

    def test_addition(self):
        assert apply_scale(2.3, 1.5) == 3.8
        assert apply_scale(2.3, -2.0) == pytest.approx(0.3)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            apply_scale(math.nan, 0.0)
        with pytest.raises(ValueError):
            apply_scale(0.0, math.inf)


class TestToFactor:
    def test_exact_powers(self):
        assert to_factor(0.0) == 1.0
        assert to_factor(3.0) == 8.0

    def test_fractional_exponent_matches_oracle(self):
        assert to_factor(2.3) == pytest.approx(TWO_POW_2_3, abs=1e-12)

    def test_overflow_guard(self):
        with pytest.raises(ValueError, match="refusing"):
            to_factor(61.0)
        with pytest.raises(ValueError, match="refusing"):
            to_factor(-61.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            to_factor(math.inf)


class TestQuantizeRatio:
    def test_documented_example(self):
        # log2 distances to {2,4,8,16,32} are 1.30, 0.30, 0.70, 1.70, 2.70.
        assert quantize_ratio(4.925, R) == 4.0

    def test_exact_candidate_returned(self):
        for c in R.factors:
            assert quantize_ratio(c, R) == c

    def test_log_midpoint_tie_breaks_to_smaller(self):
        assert quantize_ratio(2.0**1.5, R) == 2.0

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            quantize_ratio(0.0, R)

    def test_matches_linear_scan_oracle(self):
        rng = random.Random(11)
        for _ in range(2000):
            r_hat = 2.0 ** rng.uniform(-8, 12)
            assert quantize_ratio(r_hat, R) == linear_scan_quantize_ratio(r_hat, R)

    @given(st.floats(min_value=-30, max_value=30))
    def test_closure(self, exponent):
        assert quantize_ratio(2.0**exponent, R) in R.factors


class TestWindowSize:
    def test_factor_is_window(self):
        # Factor 8 == fraction 0.125; int(1/0.125) == 8 either way.
        assert window_size(8.0) == 8
        assert window_size(2.0) == 2
        assert window_size(32.0) == 32

    def test_below_one_rejected(self):
        with pytest.raises(ValueError):
            window_size(0.2)


class TestQuantizeLength:
    def test_documented_example(self):
        assert quantize_length(8.0, 512, M) == 64

    def test_tiny_target_clamps_to_smallest(self):
        assert quantize_length(512.0, 512, M) == 16

    def test_midpoint_tie_breaks_to_larger(self):
        # m_hat = 48 sits exactly between 32 and 64.
        assert quantize_length(512 / 48, 512, M) == 64

    def test_matches_linear_scan_oracle(self):
        rng = random.Random(13)
        for _ in range(2000):
            r_hat = 2.0 ** rng.uniform(-4, 12)
            l_ctx = rng.randint(1, 4096)
            assert quantize_length(r_hat, l_ctx, M) == linear_scan_quantize_length(r_hat, l_ctx, M)

    @given(st.floats(min_value=-20, max_value=20), st.integers(min_value=1, max_value=10000))
    def test_closure(self, exponent, l_ctx):
        assert quantize_length(2.0**exponent, l_ctx, M) in M.counts


class TestSelectPlan:
    def test_ratio_mode_composition(self):
        plan = select_plan(2.3, 0.0, "ratio", 1024, ratio_candidates=R)
        assert plan.r_target == 4.0
        assert plan.s == 4
        assert plan.y_scaled == 2.3
        assert plan.r_hat == pytest.approx(TWO_POW_2_3, abs=1e-12)

    def test_saturation_high(self):
        plan = select_plan(2.3, 10.0, "ratio", 1024, ratio_candidates=R)
        assert plan.r_target == 32.0

    def test_saturation_low(self):
        plan = select_plan(2.3, -10.0, "ratio", 1024, ratio_candidates=R)
        assert plan.r_target == 2.0

    def test_length_mode(self):
        plan = select_plan(3.0, 0.0, "length", 512, length_candidates=M)
        assert plan.m_target == 64
        assert plan.s is None

    def test_monotone_in_scale(self):
        rng = random.Random(17)
        for _ in range(100):
            y_hat = rng.uniform(-3, 8)
            factors = [
                select_plan(y_hat, s, "ratio", 256, ratio_candidates=R).r_target
                for s in [x * 0.2 for x in range(-50, 51)]
            ]
            assert factors == sorted(factors)

    def test_compressed_length_and_realized_factor(self):
        plan = select_plan(2.0, 0.0, "ratio", 10, ratio_candidates=R)
        assert plan.s == 4
        assert plan.compressed_length() == 3  # ceil(10/4)
        assert plan.realized_factor() == pytest.approx(10 / 3)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            select_plan(1.0, 0.0, "adaptive", 100)


class TestPlanValidation:
    def test_inconsistent_provenance_rejected(self):
        with pytest.raises(ValueError, match="y_scaled"):
            CompressionPlan(
                mode="ratio", y_hat=1.0, scale=1.0, y_scaled=3.0, r_hat=8.0,
                l_ctx=10, r_target=8.0, s=8,
            )

    def test_window_must_match_factor(self):
        with pytest.raises(ValueError, match="window"):
            CompressionPlan(
                mode="ratio", y_hat=3.0, scale=0.0, y_scaled=3.0, r_hat=8.0,
                l_ctx=10, r_target=8.0, s=4,
            )


class TestCandidateValidation:
    def test_ratio_candidates(self):
        with pytest.raises(ValueError):
            RatioCandidates(())
        with pytest.raises(ValueError):
            RatioCandidates((1.0, 2.0))
        with pytest.raises(ValueError):
            RatioCandidates((4.0, 2.0))

    def test_length_candidates(self):
        with pytest.raises(ValueError):
            LengthCandidates(())
        with pytest.raises(ValueError):
            LengthCandidates((0, 4))
        with pytest.raises(ValueError):
            LengthCandidates((8, 8))
