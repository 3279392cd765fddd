"""Feature-extraction backbones over encoder hidden states.

Three ways to turn L content rows into M latent rows:

* ``last_tokens`` — keep the hidden states of the final M content tokens.
* ``compression_tokens`` — keep the rows of M learned slots appended to
  the input before encoding.
* ``mean_pooling`` — average non-overlapping windows of size S left to
  right; the final window may be shorter and is averaged over its actual
  length (zero padding would drag the last latent toward the origin).

The sentinel row exists solely for density prediction and is excluded
from selection and pooling throughout.

Token backbones are natively fixed-length (M is the structural knob) and
pooling is natively fixed-ratio (S is the knob). Forcing the opposite
regime makes the knob a function of context length; the operation counter
at the bottom measures how many distinct structural operations such a
regime induces over a length range, which is what makes small discrete
candidate sets learnable and unconstrained dynamic ones not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sdcc.encoder import HiddenMatrix

BACKBONE_LAST_TOKENS = "last_tokens"
BACKBONE_COMPRESSION_TOKENS = "compression_tokens"
BACKBONE_MEAN_POOLING = "mean_pooling"
BACKBONES = (BACKBONE_LAST_TOKENS, BACKBONE_COMPRESSION_TOKENS, BACKBONE_MEAN_POOLING)

TOKEN_BACKBONES = (BACKBONE_LAST_TOKENS, BACKBONE_COMPRESSION_TOKENS)


@dataclass
class ExtractedFeatures:
    """M x d features plus which backbone produced them from how many rows."""

    data: np.ndarray
    backbone: str
    source_length: int

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("extracted features must be a non-empty 2-d matrix")
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")

    @property
    def m(self) -> int:
        return self.data.shape[0]


def extract_last_tokens(h: HiddenMatrix, m: int) -> ExtractedFeatures:
    """Hidden states of the final m content tokens, order preserved."""
    if m < 1:
        raise ValueError("m must be >= 1")
    content = h.content_rows()
    if m > content.shape[0]:
        raise ValueError(f"requested last {m} tokens but only {content.shape[0]} content rows exist")
    return ExtractedFeatures(content[-m:], BACKBONE_LAST_TOKENS, content.shape[0])


def extract_compression_tokens(h: HiddenMatrix, m: int) -> ExtractedFeatures:
    """The rows of the m appended slots; the encode must have used exactly m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    slots = h.slot_rows()
    if slots.shape[0] != m:
        raise ValueError(f"matrix was encoded with {slots.shape[0]} slots, not {m}")
    return ExtractedFeatures(slots, BACKBONE_COMPRESSION_TOKENS, h.content_rows().shape[0])


def mean_pool(h: HiddenMatrix, s: int) -> ExtractedFeatures:
    """Average non-overlapping windows of s content rows; M = ceil(L/s)."""
    if s < 1:
        raise ValueError("pool size s must be >= 1")
    content = h.content_rows()
    n = content.shape[0]
    if n < 1:
        raise ValueError("no content rows to pool")
    starts = np.arange(0, n, s)
    sums = np.add.reduceat(content, starts, axis=0)
    widths = np.minimum(starts + s, n) - starts
    return ExtractedFeatures(sums / widths[:, None], BACKBONE_MEAN_POOLING, n)


def regime_operation_count(
    regime: str,
    backbone: str,
    l_min: int,
    l_max: int,
    *,
    ratio: float | None = None,
    target_length: int | None = None,
    candidates: Sequence[float] | None = None,
) -> int:
    """Count distinct structural operations a regime induces over [l_min, l_max].

    * ``fixed_ratio`` with a token backbone: the token count round(L/r)
      sweeps with context length.
    * ``fixed_length`` with mean pooling: the stride ceil(L/M) sweeps.
    * ``discrete_set``: the model multiplexes exactly the candidate set,
      independent of length.

    Pairings where the knob never moves (fixed ratio with pooling, fixed
    length with token backbones) are rejected: there is nothing to count.
    """
    if l_min > l_max:
        raise ValueError("l_min must be <= l_max")
    if l_min < 1:
        raise ValueError("context lengths must be >= 1")

    if regime == "discrete_set":
        if not candidates:
            raise ValueError("discrete_set regime requires a candidate set")
        return len(set(candidates))

    if regime == "fixed_ratio":
        if backbone not in TOKEN_BACKBONES:
            raise ValueError("fixed_ratio counting applies to token backbones only")
        if ratio is None or ratio <= 0:
            raise ValueError("fixed_ratio regime requires a positive ratio")
        return len({round(length / ratio) for length in range(l_min, l_max + 1)})

    if regime == "fixed_length":
        if backbone != BACKBONE_MEAN_POOLING:
            raise ValueError("fixed_length counting applies to mean pooling only")
        if target_length is None or target_length < 1:
            raise ValueError("fixed_length regime requires a positive target length")
        return len({math.ceil(length / target_length) for length in range(l_min, l_max + 1)})

    raise ValueError(f"unknown regime {regime!r}")
