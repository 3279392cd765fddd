"""Discrete ratio selection: bias, exponentiation, quantization.

The density head emits a log2 compression factor y_hat. A user-chosen
``scale`` is an additive bias on that prediction (negative shifts the
corpus toward fidelity, positive toward efficiency); exponentiation
recovers a continuous factor, and the selector snaps it to a finite
candidate set so the model only ever executes structural operations it
has seen.

Factor convention: everywhere in this package a compression factor is
original length / compressed length (>= 1). Fraction-style ratios map
through f = 1/r, e.g. factor 8 == fraction 0.125, and the pool window is
just the rounded factor.

Ratio candidates are compared in log2 space — the same space the head is
trained in; nearest-in-linear-space would bias selection toward large
factors. Length candidates are compared linearly on the implied token
count. Ties break toward fidelity: the smaller factor, the larger count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MODE_RATIO = "ratio"
MODE_LENGTH = "length"
MODES = (MODE_RATIO, MODE_LENGTH)

# |log2 factor| beyond which exponentiation is refused; anything near this
# is a corrupt prediction, not a usable compression target.
MAX_LOG2_FACTOR = 60.0


@dataclass(frozen=True)
class RatioCandidates:
    """Sorted discrete compression factors (> 1)."""

    factors: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.factors:
            raise ValueError("candidate set must be non-empty")
        if any(f <= 1.0 for f in self.factors):
            raise ValueError("compression factors must be > 1")
        if any(b <= a for a, b in zip(self.factors, self.factors[1:])):
            raise ValueError("factors must be strictly increasing")

    @classmethod
    def default(cls) -> "RatioCandidates":
        return cls((2.0, 4.0, 8.0, 16.0, 32.0))


@dataclass(frozen=True)
class LengthCandidates:
    """Sorted discrete compressed token counts."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.counts:
            raise ValueError("candidate set must be non-empty")
        if any(c < 1 for c in self.counts):
            raise ValueError("token counts must be >= 1")
        if any(b <= a for a, b in zip(self.counts, self.counts[1:])):
            raise ValueError("counts must be strictly increasing")

    @classmethod
    def default(cls) -> "LengthCandidates":
        return cls((16, 32, 64, 128))


@dataclass(frozen=True)
class CompressionPlan:
    """Outcome of the selector, with full provenance of the decision."""

    mode: str
    y_hat: float
    scale: float
    y_scaled: float
    r_hat: float
    l_ctx: int
    r_target: float | None = None
    s: int | None = None
    m_target: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.y_scaled != self.y_hat + self.scale:
            raise ValueError("y_scaled must equal y_hat + scale")
        if self.r_hat != 2.0**self.y_scaled:
            raise ValueError("r_hat must equal 2**y_scaled")
        if self.l_ctx < 1:
            raise ValueError("l_ctx must be >= 1")
        if self.mode == MODE_RATIO:
            if self.r_target is None or self.s is None:
                raise ValueError("ratio-mode plan requires r_target and s")
            if self.s != round(self.r_target) or self.s < 1:
                raise ValueError("window size must be the rounded factor and >= 1")
        if self.mode == MODE_LENGTH:
            if self.m_target is None or self.m_target < 1:
                raise ValueError("length-mode plan requires m_target >= 1")

    def compressed_length(self) -> int:
        """Latent row count this plan dictates for its context."""
        if self.mode == MODE_RATIO:
            return math.ceil(self.l_ctx / self.s)
        return self.m_target

    def realized_factor(self) -> float:
        """Actual original/compressed factor after discretization."""
        return self.l_ctx / self.compressed_length()


def apply_scale(y_hat: float, scale: float) -> float:
    """Additive bias on the predicted log2 factor."""
    if not (math.isfinite(y_hat) and math.isfinite(scale)):
        raise ValueError("y_hat and scale must be finite")
    return y_hat + scale


def to_factor(y_scaled: float) -> float:
    """Recover the continuous compression factor 2**y_scaled."""
    if not math.isfinite(y_scaled):
        raise ValueError("y_scaled must be finite")
    if abs(y_scaled) > MAX_LOG2_FACTOR:
        raise ValueError(f"|log2 factor| > {MAX_LOG2_FACTOR}: refusing to exponentiate")
    return 2.0**y_scaled


def quantize_ratio(r_hat: float, candidates: RatioCandidates) -> float:
    """Nearest candidate factor in log2 distance, ties toward the smaller."""
    if r_hat <= 0:
        raise ValueError("r_hat must be positive")
    lg = math.log2(r_hat)
    return min(candidates.factors, key=lambda c: (abs(lg - math.log2(c)), c))


def window_size(r_target: float) -> int:
    """Pool window implied by a factor (the fraction form's int(1/r))."""
    s = round(r_target)
    if s < 1:
        raise ValueError("window size must be >= 1")
    return s


def quantize_length(r_hat: float, l_ctx: int, candidates: LengthCandidates) -> int:
    """Nearest candidate to the implied count L/r_hat, ties toward the larger."""
    if r_hat <= 0:
        raise ValueError("r_hat must be positive")
    if l_ctx < 1:
        raise ValueError("l_ctx must be >= 1")
    m_hat = l_ctx / r_hat
    return min(candidates.counts, key=lambda c: (abs(m_hat - c), -c))


def select_plan(
    y_hat: float,
    scale: float,
    mode: str,
    l_ctx: int,
    ratio_candidates: RatioCandidates | None = None,
    length_candidates: LengthCandidates | None = None,
) -> CompressionPlan:
    """Run the full selector: bias, exponentiate, quantize, derive S or M."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    y_scaled = apply_scale(y_hat, scale)
    r_hat = to_factor(y_scaled)
    if mode == MODE_RATIO:
        cands = ratio_candidates if ratio_candidates is not None else RatioCandidates.default()
        r_target = quantize_ratio(r_hat, cands)
        return CompressionPlan(
            mode=mode,
            y_hat=y_hat,
            scale=scale,
            y_scaled=y_scaled,
            r_hat=r_hat,
            l_ctx=l_ctx,
            r_target=r_target,
            s=window_size(r_target),
        )
    cands = length_candidates if length_candidates is not None else LengthCandidates.default()
    return CompressionPlan(
        mode=mode,
        y_hat=y_hat,
        scale=scale,
        y_scaled=y_scaled,
        r_hat=r_hat,
        l_ctx=l_ctx,
        m_target=quantize_length(r_hat, l_ctx, cands),
    )
