"""Deterministic tokenization and QA dataset handling.

The built-in tokenizer is byte-level: every UTF-8 byte maps to its own
value, so round trips are lossless and no external vocabulary files are
needed. Special ids live above the byte range:

* ``SENTINEL_ID`` marks the end of a context on the encoder side; its
  hidden state is what the density head reads.
* ``PLACEHOLDER_ID`` is the single token a user puts in a decoder prompt
  where the compressed context should go.
* ids from ``SLOT_ID_BASE`` upward are reserved for expanded placeholder
  positions and learned compression-token slots.

Real-model token counts enter through the bridge; this module only ever
sees the built-in vocabulary.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

BYTE_VOCAB = 256
SENTINEL_ID = 256
PLACEHOLDER_ID = 257
SLOT_ID_BASE = 258
MAX_SLOT_IDS = 4096
VOCAB_SIZE = SLOT_ID_BASE + MAX_SLOT_IDS

BYTE_TOKENIZER_ID = "byte-v1"


@dataclass(frozen=True)
class TokenSequence:
    """An ordered sequence of token ids under a declared tokenizer."""

    tokens: tuple[int, ...]
    tokenizer_id: str = BYTE_TOKENIZER_ID

    def __post_init__(self) -> None:
        for t in self.tokens:
            if not 0 <= t < VOCAB_SIZE:
                raise ValueError(f"token id {t} outside vocabulary [0, {VOCAB_SIZE})")

    def __len__(self) -> int:
        return len(self.tokens)

    def append(self, token_id: int) -> "TokenSequence":
        return TokenSequence(self.tokens + (token_id,), self.tokenizer_id)


@dataclass(frozen=True)
class QARecord:
    """One reading-comprehension instance: context, question, references."""

    context: str
    question: str
    answers: tuple[str, ...]
    source: str = ""

    def __post_init__(self) -> None:
        if not self.context:
            raise ValueError("QARecord.context must be non-empty")
        if not self.answers:
            raise ValueError("QARecord.answers must be non-empty")


class RecordFormatError(ValueError):
    """A JSONL line violated the record schema."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def tokenize(text: str, tokenizer_id: str = BYTE_TOKENIZER_ID) -> TokenSequence:
    """Map text to token ids; the byte-level mode maps each UTF-8 byte to itself."""
    if tokenizer_id != BYTE_TOKENIZER_ID:
        raise ValueError(f"unknown tokenizer {tokenizer_id!r}; remote vocabularies go through the bridge")
    return TokenSequence(tuple(text.encode("utf-8")), tokenizer_id)


def detokenize(seq: TokenSequence) -> str:
    """Inverse of :func:`tokenize`. Special ids have no text form and raise."""
    if any(t >= BYTE_VOCAB for t in seq.tokens):
        raise ValueError("sequence contains special ids; only byte tokens detokenize")
    return bytes(seq.tokens).decode("utf-8")


_REQUIRED_FIELDS = ("context", "question", "answers")


def _record_from_obj(obj: dict, line_number: int) -> QARecord:
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise RecordFormatError(line_number, f"missing field {name!r}")
    answers = obj["answers"]
    if not isinstance(answers, list) or not answers:
        raise RecordFormatError(line_number, "field 'answers' must be a non-empty list")
    try:
        return QARecord(
            context=obj["context"],
            question=obj["question"],
            answers=tuple(str(a) for a in answers),
            source=str(obj.get("source", "")),
        )
    except ValueError as exc:
        raise RecordFormatError(line_number, str(exc)) from exc


def load_records(path: str | Path) -> list[QARecord]:
    """Load QA records from a JSONL file, preserving file order.

    Malformed lines raise :class:`RecordFormatError` naming the line and
    the offending field.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset file: {path}")
    records: list[QARecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(line_number, f"invalid JSON: {exc.msg}") from exc
            records.append(_record_from_obj(obj, line_number))
    return records


def write_records(records: Iterable[QARecord], path: str | Path) -> None:
    """Write QA records as JSONL, the inverse of :func:`load_records`."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "context": r.context,
                        "question": r.question,
                        "answers": list(r.answers),
                        "source": r.source,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def filter_and_sample(
    records: Sequence[QARecord],
    max_tokens: int,
    n: int,
    seed: int,
    tokenizer_id: str = BYTE_TOKENIZER_ID,
) -> list[QARecord]:
    """Keep records whose tokenized context fits, then sample n without replacement.

    Pure in (records, max_tokens, n, seed): the same inputs always select
    the same records. Output preserves dataset order. If fewer than n
    records survive the length filter, all survivors are returned and a
    warning is logged.
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    surviving = [
        i for i, r in enumerate(records) if len(tokenize(r.context, tokenizer_id)) <= max_tokens
    ]
    if n >= len(surviving):
        if n > len(surviving):
            logger.warning(
                "requested %d samples but only %d records pass the %d-token filter",
                n,
                len(surviving),
                max_tokens,
            )
        chosen = surviving
    else:
        chosen = sorted(random.Random(seed).sample(surviving, n))
    return [records[i] for i in chosen]
