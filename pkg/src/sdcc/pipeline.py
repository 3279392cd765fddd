"""Single-pass compression: encode once, select, extract, project, expand.

One encoder invocation produces the hidden states that serve both jobs —
the sentinel row feeds the density head, and the same matrix is what the
chosen backbone extracts from once the selector has fixed the window size
or token count. Tests hold the pipeline to exactly one encode per call.

Backbones pair with selector modes along their native axis: mean pooling
executes ratio-mode plans (the window is the rounded factor) and the two
token backbones execute length-mode plans. Cross pairings are rejected
instead of silently emulated.

For compression tokens the slot count must be known at encode time, but
the selector needs the sentinel state first. The pipeline therefore
appends slots for the largest length candidate and keeps the first
M_target slot rows. Under the causal mask those rows are bitwise what a
dedicated M_target-slot encode would produce, since trailing slots cannot
influence earlier positions; under the bidirectional mask this is a
defined-but-divergent toy behavior.

A projected representation replaces a single placeholder token in the
decoder prompt: the placeholder position expands to M reserved slot ids
and exactly those positions carry override embeddings.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from sdcc.backbones import (
    BACKBONE_COMPRESSION_TOKENS,
    BACKBONE_LAST_TOKENS,
    BACKBONE_MEAN_POOLING,
    BACKBONES,
    ExtractedFeatures,
    extract_compression_tokens,
    extract_last_tokens,
    mean_pool,
)
from sdcc.corpus import MAX_SLOT_IDS, PLACEHOLDER_ID, SLOT_ID_BASE, TokenSequence
from sdcc.density import RegressionHead, predict_density
from sdcc.drs import (
    MODE_LENGTH,
    MODE_RATIO,
    CompressionPlan,
    LengthCandidates,
    RatioCandidates,
    select_plan,
)
from sdcc.encoder import Encoder, EncoderConfig, SlotEmbeddings, ToyEncoder, last_hidden, prepare_encoder_input

_VALID_PAIRINGS = {
    BACKBONE_MEAN_POOLING: MODE_RATIO,
    BACKBONE_LAST_TOKENS: MODE_LENGTH,
    BACKBONE_COMPRESSION_TOKENS: MODE_LENGTH,
}


def silu(x: np.ndarray) -> np.ndarray:
    """Sigmoid-weighted linear unit; the pinned projector nonlinearity."""
    return x / (1.0 + np.exp(-x))


@dataclass
class Projector:
    """2-layer MLP mapping encoder features into decoder embedding space."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[0] != self.b1.shape[0]:
            raise ValueError("projector layer shapes are inconsistent")
        if self.w2.shape[1] != self.b2.shape[0]:
            raise ValueError("projector layer shapes are inconsistent")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.isfinite(a).all():
                raise ValueError("projector parameters must be finite")

    @property
    def d_enc(self) -> int:
        return self.w1.shape[0]

    @property
    def d_dec(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def seeded(cls, d_enc: int, hidden: int, d_dec: int, seed: int = 0) -> "Projector":
        if hidden < 1:
            raise ValueError("intermediate size must be >= 1")
        rng = np.random.default_rng([seed, 7451])
        return cls(
            w1=rng.standard_normal((d_enc, hidden)) / np.sqrt(d_enc),
            b1=np.zeros(hidden),
            w2=rng.standard_normal((hidden, d_dec)) / np.sqrt(hidden),
            b2=np.zeros(d_dec),
        )


def project(features: ExtractedFeatures, projector: Projector, activation=silu) -> np.ndarray:
    """Row-wise affine -> nonlinearity -> affine."""
    if features.data.shape[1] != projector.d_enc:
        raise ValueError(
            f"feature width {features.data.shape[1]} does not match projector input {projector.d_enc}"
        )
    return activation(features.data @ projector.w1 + projector.b1) @ projector.w2 + projector.b2


@dataclass(frozen=True)
class ExpandedPrompt:
    """Placeholder-expanded prompt skeleton: tokens plus the override span."""

    tokens: TokenSequence
    span_start: int
    span_length: int


@dataclass
class DecoderInput:
    """Expanded prompt whose span positions carry override embeddings."""

    tokens: TokenSequence
    span_start: int
    span_length: int
    override_embeddings: np.ndarray

    def __post_init__(self) -> None:
        self.override_embeddings = np.asarray(self.override_embeddings, dtype=np.float64)
        if self.override_embeddings.shape[0] != self.span_length:
            raise ValueError("override span length must match embedding rows")
        if self.span_start < 0 or self.span_start + self.span_length > len(self.tokens):
            raise ValueError("override span must lie within the token sequence")


@dataclass
class CompressedRepresentation:
    """Projected latent rows plus the plan that produced them."""

    latents: np.ndarray
    plan: CompressionPlan
    backbone: str

    def __post_init__(self) -> None:
        self.latents = np.asarray(self.latents, dtype=np.float64)
        if self.latents.ndim != 2:
            raise ValueError("latents must be 2-dimensional")
        if self.latents.shape[0] != self.plan.compressed_length():
            raise ValueError(
                f"{self.latents.shape[0]} latent rows but plan dictates {self.plan.compressed_length()}"
            )

    @property
    def m(self) -> int:
        return self.latents.shape[0]


def expand_placeholder(prompt: TokenSequence, m: int) -> ExpandedPrompt:
    """Replace the single placeholder token with m reserved slot ids."""
    if m < 1:
        raise ValueError("expansion count must be >= 1")
    if m > MAX_SLOT_IDS:
        raise ValueError(f"expansion count {m} exceeds the reserved slot-id block ({MAX_SLOT_IDS})")
    positions = [i for i, t in enumerate(prompt.tokens) if t == PLACEHOLDER_ID]
    if len(positions) != 1:
        raise ValueError(f"prompt must contain exactly one placeholder, found {len(positions)}")
    at = positions[0]
    expanded = (
        prompt.tokens[:at]
        + tuple(SLOT_ID_BASE + i for i in range(m))
        + prompt.tokens[at + 1 :]
    )
    return ExpandedPrompt(TokenSequence(expanded, prompt.tokenizer_id), at, m)


@dataclass
class PipelineConfig:
    """Everything compress_context needs besides the context itself."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    backbone: str = BACKBONE_MEAN_POOLING
    mode: str = MODE_RATIO
    ratio_candidates: RatioCandidates = field(default_factory=RatioCandidates.default)
    length_candidates: LengthCandidates = field(default_factory=LengthCandidates.default)
    projector_hidden: int = 64
    d_dec: int = 48
    seed: int = 0
    ratio_randomization: bool = False
    randomization_seed: int = 0

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if _VALID_PAIRINGS[self.backbone] != self.mode:
            raise ValueError(
                f"backbone {self.backbone!r} executes {_VALID_PAIRINGS[self.backbone]}-mode plans, "
                f"not {self.mode!r}"
            )


class CompressionPipeline:
    """Holds one encoder, head, and projector; compresses many contexts.

    Pure given frozen parameters, so one instance can serve concurrent
    callers. With ``ratio_randomization`` enabled the selector is bypassed
    and the structural parameter is drawn uniformly from the candidate set
    by a seeded generator (the multiplexed-training regime); the drawn
    factor is recorded in the plan's provenance fields.
    """

    def __init__(
        self,
        config: PipelineConfig,
        head: RegressionHead | None = None,
        projector: Projector | None = None,
        encoder: Encoder | None = None,
        slots: SlotEmbeddings | None = None,
    ):
        self.config = config
        max_slots = max(config.length_candidates.counts)
        if encoder is None:
            slots = slots or SlotEmbeddings(config.encoder.d, max_slots=max_slots, seed=config.encoder.seed)
            encoder = ToyEncoder(config.encoder, slots)
        self.encoder = encoder
        self.head = head if head is not None else RegressionHead.zeros(config.encoder.d)
        self.projector = (
            projector
            if projector is not None
            else Projector.seeded(config.encoder.d, config.projector_hidden, config.d_dec, config.seed)
        )
        if self.projector.d_enc != config.encoder.d:
            raise ValueError("projector input width must match encoder hidden size")
        self._random_plan = np.random.default_rng(config.randomization_seed)

    def _draw_random_plan(self, l_ctx: int) -> CompressionPlan:
        if self.config.mode == MODE_RATIO:
            factor = float(self._random_plan.choice(self.config.ratio_candidates.factors))
            y = math.log2(factor)
            return CompressionPlan(
                mode=MODE_RATIO,
                y_hat=y,
                scale=0.0,
                y_scaled=y + 0.0,
                r_hat=2.0**y,
                l_ctx=l_ctx,
                r_target=factor,
                s=round(factor),
            )
        count = int(self._random_plan.choice(self.config.length_candidates.counts))
        y = math.log2(l_ctx / count)
        return CompressionPlan(
            mode=MODE_LENGTH,
            y_hat=y,
            scale=0.0,
            y_scaled=y + 0.0,
            r_hat=2.0**y,
            l_ctx=l_ctx,
            m_target=count,
        )

    def compress(self, context: TokenSequence, scale: float) -> CompressedRepresentation:
        """Compress one context under the given scale bias. One encode, always."""
        cfg = self.config
        prepared = prepare_encoder_input(context)
        appended = max(cfg.length_candidates.counts) if cfg.backbone == BACKBONE_COMPRESSION_TOKENS else 0
        h = self.encoder.encode(prepared, appended_slots=appended)
        l_ctx = len(context)

        if cfg.ratio_randomization:
            plan = self._draw_random_plan(l_ctx)
        else:
            plan = select_plan(
                predict_density(last_hidden(h), self.head),
                scale,
                cfg.mode,
                l_ctx,
                ratio_candidates=cfg.ratio_candidates,
                length_candidates=cfg.length_candidates,
            )

        if cfg.backbone == BACKBONE_MEAN_POOLING:
            features = mean_pool(h, plan.s)
        elif cfg.backbone == BACKBONE_LAST_TOKENS:
            features = extract_last_tokens(h, plan.m_target)
        else:
            # First m_target of the pre-allocated slot rows; equal to a
            # dedicated m_target-slot encode under the causal mask.
            all_slots = extract_compression_tokens(h, appended)
            features = ExtractedFeatures(
                all_slots.data[: plan.m_target], cfg.backbone, all_slots.source_length
            )

        return CompressedRepresentation(project(features, self.projector), plan, cfg.backbone)

    def build_decoder_input(self, prompt: TokenSequence, compressed: CompressedRepresentation) -> DecoderInput:
        """Expand the prompt's placeholder to M positions overridden by the latents."""
        skeleton = expand_placeholder(prompt, compressed.m)
        return DecoderInput(
            tokens=skeleton.tokens,
            span_start=skeleton.span_start,
            span_length=skeleton.span_length,
            override_embeddings=compressed.latents,
        )


def compress_context(
    context: TokenSequence,
    scale: float,
    backbone: str,
    mode: str,
    config: PipelineConfig | None = None,
    **pipeline_kwargs,
) -> CompressedRepresentation:
    """One-shot convenience wrapper; builds a pipeline and compresses once."""
    if config is None:
        config = PipelineConfig(backbone=backbone, mode=mode)
    elif config.backbone != backbone or config.mode != mode:
        raise ValueError("backbone/mode arguments disagree with the supplied config")
    return CompressionPipeline(config, **pipeline_kwargs).compress(context, scale)


_MAGIC = b"SDCCREP1"
_VERSION = 1
_MODE_CODES = {MODE_RATIO: 0, MODE_LENGTH: 1}
_BACKBONE_CODES = {name: i for i, name in enumerate(BACKBONES)}
# magic, version, M, d_dec, backbone, mode | y_hat, scale, y_scaled,
# r_hat, r_target | S, M_target, L_ctx — all little-endian 64-bit.
_HEADER = struct.Struct("<8s5q5d3q")


def serialize_representation(rep: CompressedRepresentation) -> bytes:
    """Binary container: fixed header (LE 64-bit ints / f64 doubles), then
    row-major float32 latents."""
    plan = rep.plan
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        rep.m,
        rep.latents.shape[1],
        _BACKBONE_CODES[rep.backbone],
        _MODE_CODES[plan.mode],
        plan.y_hat,
        plan.scale,
        plan.y_scaled,
        plan.r_hat,
        plan.r_target if plan.r_target is not None else math.nan,
        plan.s if plan.s is not None else 0,
        plan.m_target if plan.m_target is not None else 0,
        plan.l_ctx,
    )
    return header + rep.latents.astype("<f4").tobytes(order="C")


def deserialize_representation(blob: bytes) -> CompressedRepresentation:
    """Inverse of :func:`serialize_representation` (latents come back float32-valued)."""
    if len(blob) < _HEADER.size:
        raise ValueError("truncated representation: header incomplete")
    (
        magic,
        version,
        m,
        d_dec,
        backbone_code,
        mode_code,
        y_hat,
        scale,
        y_scaled,
        r_hat,
        r_target,
        s,
        m_target,
        l_ctx,
    ) = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise ValueError("bad magic: not a compressed-representation container")
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    body = blob[_HEADER.size : _HEADER.size + m * d_dec * 4]
    if len(body) != m * d_dec * 4:
        raise ValueError("truncated representation: latent payload incomplete")
    latents = np.frombuffer(body, dtype="<f4").reshape(m, d_dec).astype(np.float64)
    mode = {v: k for k, v in _MODE_CODES.items()}[mode_code]
    plan = CompressionPlan(
        mode=mode,
        y_hat=y_hat,
        scale=scale,
        y_scaled=y_scaled,
        r_hat=r_hat,
        l_ctx=l_ctx,
        r_target=None if math.isnan(r_target) else r_target,
        s=s if mode == MODE_RATIO else None,
        m_target=m_target if mode == MODE_LENGTH else None,
    )
    backbone = {v: k for k, v in _BACKBONE_CODES.items()}[backbone_code]
    return CompressedRepresentation(latents, plan, backbone)


def container_size(blob: bytes, offset: int = 0) -> int:
    """Byte length of the container starting at ``offset`` in ``blob``."""
    if len(blob) - offset < _HEADER.size:
        raise ValueError("truncated representation: header incomplete")
    _, _, m, d_dec, *_ = _HEADER.unpack_from(blob, offset)
    return _HEADER.size + m * d_dec * 4
