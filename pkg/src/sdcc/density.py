"""Density labels, the linear prediction head, and its training loop.

The supervision signal for compressibility is a length ratio: a context
of L_ctx tokens whose ultra-concise summary needs L_sum tokens gets the
label y = log2(L_ctx / L_sum). The log keeps the label distribution
roughly uniform where the raw ratio would blow up on highly redundant
text, and it puts the label in the same space the selector quantizes in.

``density_label`` is computed via exponent/mantissa decomposition rather
than one log call so that exact log laws hold in floating point: doubling
L_ctx shifts the label by exactly 1.0, and power-of-two ratios produce
exact integers.

The head itself is a single affine map on the sentinel hidden state.
Training is plain full-batch gradient descent on the MSE with the encoder
frozen; at desk scale only the head moves, which is enough to verify the
label/loss machinery end to end.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from sdcc.corpus import TokenSequence
from sdcc.encoder import EncoderConfig, SlotEmbeddings, ToyEncoder, last_hidden, prepare_encoder_input


@dataclass(frozen=True)
class DensityRecord:
    """A (context, ultra-concise summary) pair with its log2 length-ratio label."""

    context_tokens: TokenSequence
    l_ctx: int
    summary_tokens: TokenSequence | None
    l_sum: int
    y: float

    def __post_init__(self) -> None:
        if self.l_ctx < 1:
            raise ValueError("l_ctx must be >= 1")
        if self.l_sum < 1:
            raise ValueError("l_sum must be >= 1")

    @classmethod
    def from_lengths(
        cls,
        context_tokens: TokenSequence,
        summary_tokens: TokenSequence | None = None,
        l_sum: int | None = None,
    ) -> "DensityRecord":
        """Build a record with y derived from the token counts."""
        if l_sum is None:
            if summary_tokens is None:
                raise ValueError("need summary_tokens or an explicit l_sum")
            l_sum = len(summary_tokens)
        l_ctx = len(context_tokens)
        return cls(
            context_tokens=context_tokens,
            l_ctx=l_ctx,
            summary_tokens=summary_tokens,
            l_sum=l_sum,
            y=density_label(l_ctx, l_sum),
        )


@dataclass
class RegressionHead:
    """Affine map from the sentinel hidden state to a log2 factor."""

    weights: np.ndarray
    bias: float

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        if not (np.isfinite(self.weights).all() and math.isfinite(self.bias)):
            raise ValueError("head parameters must be finite")

    @classmethod
    def zeros(cls, d: int) -> "RegressionHead":
        return cls(np.zeros(d), 0.0)


@dataclass(frozen=True)
class LossBreakdown:
    lm_loss: float
    mse: float
    lam: float
    total: float


class TrainingDiverged(RuntimeError):
    """MSE exploded during head training; use a smaller learning rate."""


# Fractional label resolution: 2**-40 (~9e-13). Coarse enough that adding
# any integer exponent stays exactly representable in a double, fine enough
# to be invisible to training and quantization.
_LABEL_GRID = 2.0**40


def density_label(l_ctx: int, l_sum: int) -> float:
    """log2(L_ctx / L_sum), exact under doubling of either length.

    frexp splits the quotient into mantissa * 2**exponent; only the
    mantissa goes through log2, and its log is snapped to a 2**-40 grid
    so exponent + fraction never re-rounds. Doubling L_ctx therefore
    shifts the label by exactly 1.0, and power-of-two ratios give exact
    integers.
    """
    if l_sum == 0:
        raise ValueError("degenerate summary: l_sum == 0")
    if l_ctx < 1 or l_sum < 1:
        raise ValueError("lengths must be >= 1")
    mantissa, exponent = math.frexp(l_ctx / l_sum)
    return exponent + round(math.log2(mantissa) * _LABEL_GRID) / _LABEL_GRID


def predict_density(h_last: np.ndarray, head: RegressionHead) -> float:
    """Head output for one sentinel hidden state."""
    h_last = np.asarray(h_last, dtype=np.float64)
    if h_last.shape != head.weights.shape:
        raise ValueError(f"dimension mismatch: h_last {h_last.shape} vs weights {head.weights.shape}")
    return float(np.dot(head.weights, h_last) + head.bias)


def mse_and_gradient(pairs: Sequence[tuple[float, float]]) -> tuple[float, np.ndarray]:
    """Mean squared error over (prediction, label) pairs and d(mse)/dprediction."""
    if not pairs:
        raise ValueError("mse over an empty list is undefined")
    preds = np.array([p for p, _ in pairs], dtype=np.float64)
    labels = np.array([y for _, y in pairs], dtype=np.float64)
    resid = preds - labels
    n = len(pairs)
    return float(np.mean(resid**2)), 2.0 * resid / n


def joint_loss(lm_loss: float, mse: float, lam: float) -> LossBreakdown:
    """Total objective: generative loss plus lam-weighted head MSE."""
    if lm_loss < 0 or mse < 0 or lam < 0:
        raise ValueError("loss components and lam must be non-negative")
    return LossBreakdown(lm_loss=lm_loss, mse=mse, lam=lam, total=lm_loss + lam * mse)


def _sentinel_states(
    records: Sequence[DensityRecord],
    encoder_config: EncoderConfig,
    slots: SlotEmbeddings | None,
) -> np.ndarray:
    encoder = ToyEncoder(encoder_config, slots)
    rows = [last_hidden(encoder.encode(prepare_encoder_input(r.context_tokens))) for r in records]
    return np.stack(rows)


def train_head(
    records: Sequence[DensityRecord],
    encoder_config: EncoderConfig,
    epochs: int,
    learning_rate: float,
    seed: int = 0,
    *,
    slots: SlotEmbeddings | None = None,
    log_path: str | Path | None = None,
) -> RegressionHead:
    """Fit the head by full-batch gradient descent with the encoder frozen.

    The head starts at zeros so the zero-epoch result is exactly
    reproducible; the loop is deterministic and ``seed`` exists only so
    callers can thread one configuration object through. The log written
    to ``log_path`` is JSONL of {"epoch": n, "mse": x}, one line per
    epoch plus a final line for the returned head.
    """
    if len(records) < 2:
        raise ValueError("need at least 2 records to fit the head")
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")

    x = _sentinel_states(records, encoder_config, slots)
    y = np.array([r.y for r in records], dtype=np.float64)
    n = x.shape[0]
    w = np.zeros(x.shape[1])
    b = 0.0

    log_lines: list[dict] = []
    for epoch in range(epochs):
        resid = x @ w + b - y
        mse = float(np.mean(resid**2))
        if mse > 1e6:
            raise TrainingDiverged(
                f"mse {mse:.3e} at epoch {epoch}; lower the learning rate (currently {learning_rate})"
            )
        log_lines.append({"epoch": epoch, "mse": mse})
        w -= learning_rate * (2.0 / n) * (x.T @ resid)
        b -= learning_rate * (2.0 / n) * float(resid.sum())
    final_resid = x @ w + b - y
    log_lines.append({"epoch": epochs, "mse": float(np.mean(final_resid**2))})

    if log_path is not None:
        with Path(log_path).open("w", encoding="utf-8") as fh:
            for line in log_lines:
                fh.write(json.dumps(line) + "\n")
    return RegressionHead(w, b)
