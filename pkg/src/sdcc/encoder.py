"""Encoder abstraction and the deterministic toy encoder.

Anything that turns a prepared token sequence into a hidden-state matrix
can drive the pipeline; the contract is just ``encode(tokens,
appended_slots) -> HiddenMatrix`` plus :func:`last_hidden`. The toy
encoder here keeps every property the rest of the toolkit relies on
(shape law, attention-mask semantics, bit determinism) without real
attention: per-token embeddings come from a seeded hash, then each layer
applies a windowed average under the active mask followed by tanh.

Row roles matter more than the numbers. The final input position is the
sentinel appended by :func:`prepare_encoder_input`; its hidden state is
what the density head reads. Compression-slot rows, when requested, are
always the trailing rows and start from trainable per-position vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from sdcc.corpus import SENTINEL_ID, SLOT_ID_BASE, TokenSequence

ROLE_CONTENT = "content"
ROLE_SENTINEL = "sentinel"
ROLE_SLOT = "compression_slot"

ATTENTION_MODES = ("causal", "bidirectional")


@dataclass(frozen=True)
class EncoderConfig:
    d: int = 32
    layers: int = 2
    attention_mode: str = "causal"
    mix_window: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("hidden size d must be >= 1")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.mix_window < 1:
            raise ValueError("mix_window must be >= 1")
        if self.attention_mode not in ATTENTION_MODES:
            raise ValueError(f"attention_mode must be one of {ATTENTION_MODES}")


@dataclass
class HiddenMatrix:
    """L x d hidden states with a per-row role tag.

    Slot rows, if any, are the trailing rows; a prepared encode always
    yields exactly one sentinel row (the last non-slot row).
    """

    data: np.ndarray
    roles: tuple[str, ...]

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("hidden matrix must be 2-dimensional")
        if len(self.roles) != self.data.shape[0]:
            raise ValueError("one role per row required")
        if not np.isfinite(self.data).all():
            raise ValueError("hidden matrix contains NaN or Inf")
        n_slots = sum(1 for r in self.roles if r == ROLE_SLOT)
        if n_slots and any(r != ROLE_SLOT for r in self.roles[len(self.roles) - n_slots :]):
            raise ValueError("compression_slot rows must be trailing")

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_slots(self) -> int:
        return sum(1 for r in self.roles if r == ROLE_SLOT)

    def content_rows(self) -> np.ndarray:
        idx = [i for i, r in enumerate(self.roles) if r == ROLE_CONTENT]
        return self.data[idx]

    def slot_rows(self) -> np.ndarray:
        idx = [i for i, r in enumerate(self.roles) if r == ROLE_SLOT]
        return self.data[idx]

    def sentinel_index(self) -> int:
        for i in range(len(self.roles) - 1, -1, -1):
            if self.roles[i] == ROLE_SENTINEL:
                return i
        raise ValueError("hidden matrix has no sentinel row")


class Encoder(Protocol):
    """Structural interface shared by the toy encoder and the bridge client."""

    config: EncoderConfig

    def encode(self, tokens: TokenSequence, appended_slots: int = 0) -> HiddenMatrix: ...


def prepare_encoder_input(tokens: TokenSequence) -> TokenSequence:
    """Append the sentinel whose hidden state carries the density prediction.

    Inputs are raw context, so a sentinel id already present is treated as
    ordinary content and a fresh sentinel is still appended.
    """
    if len(tokens) == 0:
        raise ValueError("cannot prepare an empty context for compression")
    return tokens.append(SENTINEL_ID)


def last_hidden(h: HiddenMatrix) -> np.ndarray:
    """The sentinel row (last non-slot row) — input to the density head."""
    return h.data[h.sentinel_index()]


def _hashed_embedding_table(seed: int, d: int, vocab: int) -> np.ndarray:
    # One independent stream per token id keeps the table stable under
    # vocabulary growth and identical across processes.
    table = np.empty((vocab, d), dtype=np.float64)
    for token_id in range(vocab):
        table[token_id] = np.random.default_rng([seed, token_id]).standard_normal(d)
    return table


_EMBED_CACHE: dict[tuple[int, int], np.ndarray] = {}

# Seed-stream tag for slot vectors; outside the token-id range so slot
# embeddings never collide with a hashed token embedding.
_SLOT_STREAM = 99991


def _embedding_table(seed: int, d: int) -> np.ndarray:
    key = (seed, d)
    if key not in _EMBED_CACHE:
        _EMBED_CACHE[key] = _hashed_embedding_table(seed, d, SLOT_ID_BASE)
    return _EMBED_CACHE[key]


class SlotEmbeddings:
    """Trainable per-position vectors for appended compression slots.

    Shared across inputs and indexed by slot position. Initialized from a
    seeded unit-variance draw scaled by 1/sqrt(d).
    """

    def __init__(self, d: int, max_slots: int = 256, seed: int = 0):
        if max_slots < 0:
            raise ValueError("max_slots must be >= 0")
        self.d = d
        self.max_slots = max_slots
        self.table = np.random.default_rng([seed, _SLOT_STREAM]).standard_normal(
            (max_slots, d)
        ) / np.sqrt(d)

    def vectors(self, count: int) -> np.ndarray:
        if count > self.max_slots:
            raise ValueError(f"requested {count} slots but only {self.max_slots} are allocated")
        return self.table[:count]


def _windowed_average(h: np.ndarray, window: int, bidirectional: bool) -> np.ndarray:
    """Mean over a trailing (or centered-by-extension) window of rows.

    Causal: row i averages rows [max(0, i-window+1), i]. Bidirectional:
    the window extends window-1 rows to each side. Prefix sums keep row i
    of the causal result a bitwise-pure function of rows <= i.
    """
    n = h.shape[0]
    csum = np.vstack([np.zeros((1, h.shape[1])), np.cumsum(h, axis=0)])
    idx = np.arange(n)
    lo = np.maximum(idx - (window - 1), 0)
    hi = idx + 1 if not bidirectional else np.minimum(idx + window, n)
    sums = csum[hi] - csum[lo]
    return sums / (hi - lo)[:, None]


class ToyEncoder:
    """Deterministic stand-in for a transformer encoder.

    Pure function of (tokens, config, slot embeddings): two processes
    with the same seed produce bit-identical matrices.
    """

    def __init__(self, config: EncoderConfig, slots: SlotEmbeddings | None = None):
        self.config = config
        self.slots = slots if slots is not None else SlotEmbeddings(config.d, seed=config.seed)
        if self.slots.d != config.d:
            raise ValueError("slot embedding width must match encoder hidden size")
        self._embed = _embedding_table(config.seed, config.d)

    def encode(self, tokens: TokenSequence, appended_slots: int = 0) -> HiddenMatrix:
        if appended_slots < 0:
            raise ValueError("appended_slots must be >= 0")
        if len(tokens) == 0 or tokens.tokens[-1] != SENTINEL_ID:
            raise ValueError("input not prepared: run prepare_encoder_input first")
        if any(t >= SLOT_ID_BASE for t in tokens.tokens):
            raise ValueError("slot-range ids are positional and cannot appear in encoder input")

        h = self._embed[list(tokens.tokens)]
        if appended_slots:
            h = np.vstack([h, self.slots.vectors(appended_slots)])

        bidirectional = self.config.attention_mode == "bidirectional"
        for _ in range(self.config.layers):
            h = np.tanh(_windowed_average(h, self.config.mix_window, bidirectional))

        roles = (ROLE_CONTENT,) * (len(tokens) - 1) + (ROLE_SENTINEL,) + (ROLE_SLOT,) * appended_slots
        return HiddenMatrix(h, roles)


def encode(
    tokens: TokenSequence,
    config: EncoderConfig,
    appended_slots: int = 0,
    slots: SlotEmbeddings | None = None,
) -> HiddenMatrix:
    """One-shot convenience wrapper around :class:`ToyEncoder`."""
    return ToyEncoder(config, slots).encode(tokens, appended_slots)
