"""Semi-dynamic context compression toolkit.

A long context is encoded once; the hidden state of an appended sentinel
token feeds a linear head that predicts the context's compressibility in
log2 space. A user-supplied ``scale`` bias shifts that prediction, the
discrete ratio selector snaps it to a finite candidate set, and the chosen
window size (or token count) drives one of three extraction backbones.
Projected latents then replace a single placeholder token in the decoder
prompt. Everything runs at desk scale on a deterministic toy encoder; a
real model can be substituted through the HTTP bridge protocol.
"""

from sdcc.corpus import (
    PLACEHOLDER_ID,
    SENTINEL_ID,
    QARecord,
    TokenSequence,
    detokenize,
    filter_and_sample,
    load_records,
    tokenize,
)
from sdcc.drs import (
    CompressionPlan,
    LengthCandidates,
    RatioCandidates,
    select_plan,
)
from sdcc.encoder import EncoderConfig, HiddenMatrix, ToyEncoder, last_hidden
from sdcc.pipeline import CompressionPipeline, PipelineConfig

__version__ = "0.1.0"

__all__ = [
    "PLACEHOLDER_ID",
    "SENTINEL_ID",
    "CompressionPipeline",
    "CompressionPlan",
    "EncoderConfig",
    "HiddenMatrix",
    "LengthCandidates",
    "PipelineConfig",
    "QARecord",
    "RatioCandidates",
    "TokenSequence",
    "ToyEncoder",
    "detokenize",
    "filter_and_sample",
    "last_hidden",
    "load_records",
    "select_plan",
    "tokenize",
]
