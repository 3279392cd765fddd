"""Evaluation metrics, scale sweeps, and report emission.

Two numbers summarize a run. Substring accuracy scores 1 when any
reference answer appears verbatim inside the model output after a pinned
normalization (trim, collapse whitespace runs, case-fold) — deliberately
no word boundaries, so "Parisian" matches "Paris". The average
compression ratio is validity-filtered: only correctly answered samples
contribute, summing original lengths over summing compressed lengths, so
aggressive-but-wrong compression cannot inflate the number. With zero
correct samples the ratio is undefined, not zero.

A scale sweep replays the same evaluation set at each scale bias and
emits one point per scale, which is exactly the data behind an
accuracy-versus-ratio Pareto curve. The per-point variance of the
selected log2 factors (pooled over the whole evaluation set) is reported
alongside: it vanishes at extreme scales where every sample saturates
into the edge bucket, and a large value marks the regime where adaptive
selection can actually pay off.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from sdcc.corpus import PLACEHOLDER_ID, QARecord, TokenSequence, tokenize
from sdcc.drs import MODE_RATIO, CompressionPlan
from sdcc.pipeline import CompressionPipeline, DecoderInput

logger = logging.getLogger(__name__)

# The default sweep grid: -2 to 4 in half steps, 13 points.
DEFAULT_SCALE_GRID = tuple(-2.0 + 0.5 * i for i in range(13))

REPORT_COLUMNS = ("scale", "accuracy", "avg_compression_ratio", "ratio_log2_variance", "n_correct")

Answerer = Callable[[QARecord, DecoderInput], str]


@dataclass
class EvalRecord:
    record: QARecord
    plan: CompressionPlan
    output_text: str
    correct: int
    original_length: int
    compressed_length: int

    def __post_init__(self) -> None:
        if self.correct not in (0, 1):
            raise ValueError("correct must be 0 or 1")
        if self.compressed_length != self.plan.compressed_length():
            raise ValueError("compressed_length must match the plan")


@dataclass(frozen=True)
class SweepPoint:
    scale: float
    accuracy: float
    avg_compression_ratio: float | None
    ratio_log2_variance: float
    n_correct: int
    n_total: int

    def __post_init__(self) -> None:
        if self.n_total and self.accuracy != self.n_correct / self.n_total:
            raise ValueError("accuracy must equal n_correct / n_total")


def normalize_answer_text(text: str) -> str:
    """Trim, collapse internal whitespace runs, case-fold."""
    return " ".join(text.split()).casefold()


def substring_accuracy(output: str, answers: Sequence[str]) -> int:
    """1 iff any normalized answer occurs contiguously in the normalized output."""
    if not answers:
        raise ValueError("answers must be non-empty")
    haystack = normalize_answer_text(output)
    return int(any(normalize_answer_text(a) in haystack for a in answers))


def validity_filtered_ratio(records: Sequence[EvalRecord]) -> float | None:
    """Sum of original lengths over sum of compressed lengths, correct only.

    None (undefined) when nothing was answered correctly: the filter
    leaves an empty sum in the denominator.
    """
    original = sum(r.original_length for r in records if r.correct)
    compressed = sum(r.compressed_length for r in records if r.correct)
    if compressed == 0:
        return None
    return original / compressed


def ratio_log2_variance(plans: Sequence[CompressionPlan]) -> float:
    """Population variance of the selected log2 factor over the plans.

    Ratio-mode plans use log2(r_target); length-mode plans use the
    realized factor L_ctx / M_target, the analogous selection outcome.
    """
    if not plans:
        raise ValueError("variance over an empty plan list is undefined")
    logs = [
        math.log2(p.r_target) if p.mode == MODE_RATIO else math.log2(p.realized_factor())
        for p in plans
    ]
    mean = sum(logs) / len(logs)
    return sum((x - mean) ** 2 for x in logs) / len(logs)


def answer_prompt(question: str) -> TokenSequence:
    """Canonical decoder prompt: the placeholder context then the question."""
    q = tokenize("\n" + question + "\n")
    return TokenSequence((PLACEHOLDER_ID,) + q.tokens, q.tokenizer_id)


def reference_echo_answerer(record: QARecord, decoder_input: DecoderInput) -> str:
    """Stub answerer that is always correct: echoes the first reference.

    Isolates metric and sweep mechanics from any model's quality; the
    desk-scale harness default.
    """
    return f"The answer is {record.answers[0]}."


def fixed_text_answerer(text: str) -> Answerer:
    """Stub answerer that always returns the given text."""

    def answer(record: QARecord, decoder_input: DecoderInput) -> str:
        return text

    return answer


def evaluate_at_scale(
    eval_set: Sequence[QARecord],
    scale: float,
    pipeline: CompressionPipeline,
    answerer: Answerer,
) -> list[EvalRecord]:
    """Compress, answer, and score every record at one scale bias."""
    out: list[EvalRecord] = []
    for record in eval_set:
        context = tokenize(record.context)
        compressed = pipeline.compress(context, scale)
        decoder_input = pipeline.build_decoder_input(answer_prompt(record.question), compressed)
        text = answerer(record, decoder_input)
        out.append(
            EvalRecord(
                record=record,
                plan=compressed.plan,
                output_text=text,
                correct=substring_accuracy(text, record.answers),
                original_length=len(context),
                compressed_length=compressed.m,
            )
        )
    return out


def summarize_point(scale: float, evals: Sequence[EvalRecord]) -> SweepPoint:
    n_correct = sum(r.correct for r in evals)
    return SweepPoint(
        scale=scale,
        accuracy=n_correct / len(evals),
        avg_compression_ratio=validity_filtered_ratio(evals),
        ratio_log2_variance=ratio_log2_variance([r.plan for r in evals]),
        n_correct=n_correct,
        n_total=len(evals),
    )


def scale_sweep(
    eval_set: Sequence[QARecord],
    scales: Sequence[float],
    pipeline: CompressionPipeline,
    answerer: Answerer,
    partial_path: str | Path | None = None,
) -> list[SweepPoint]:
    """One point per scale over the same evaluation set, in scale order.

    A per-sample failure aborts the sweep; points already computed are
    flushed to ``partial_path`` (CSV) before the error propagates.
    """
    if not eval_set:
        raise ValueError("evaluation set is empty")
    points: list[SweepPoint] = []
    for scale in sorted(scales):
        try:
            evals = evaluate_at_scale(eval_set, scale, pipeline, answerer)
        except Exception:
            if partial_path is not None and points:
                emit_report(points, "csv", partial_path)
                logger.error("sweep aborted at scale %s; %d points saved to %s", scale, len(points), partial_path)
            raise
        points.append(summarize_point(scale, evals))
    return points


def _format_value(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return format(value, ".17g")


def emit_report(points: Sequence[SweepPoint], fmt: str, path: str | Path) -> Path:
    """Write sweep points losslessly as CSV or JSON.

    Floats carry 17 significant digits, so reading the file back
    reproduces every value bit for bit. An undefined compression ratio
    becomes an empty CSV cell / JSON null.
    """
    path = Path(path)
    rows = [
        {
            "scale": p.scale,
            "accuracy": p.accuracy,
            "avg_compression_ratio": p.avg_compression_ratio,
            "ratio_log2_variance": p.ratio_log2_variance,
            "n_correct": p.n_correct,
            "n_total": p.n_total,
        }
        for p in points
    ]
    if fmt == "csv":
        header = REPORT_COLUMNS + ("n_total",)
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_format_value(row[col]) for col in header))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "json":
        path.write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def read_report(path: str | Path) -> list[SweepPoint]:
    """Read a report written by :func:`emit_report` (format inferred)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    rows: list[dict]
    if text.lstrip().startswith("["):
        rows = json.loads(text)
    else:
        lines = [ln for ln in text.splitlines() if ln]
        header = lines[0].split(",")
        rows = []
        for ln in lines[1:]:
            cells = ln.split(",")
            row = dict(zip(header, cells))
            rows.append(
                {
                    "scale": float(row["scale"]),
                    "accuracy": float(row["accuracy"]),
                    "avg_compression_ratio": float(row["avg_compression_ratio"])
                    if row["avg_compression_ratio"]
                    else None,
                    "ratio_log2_variance": float(row["ratio_log2_variance"]),
                    "n_correct": int(row["n_correct"]),
                    "n_total": int(row["n_total"]),
                }
            )
    return [
        SweepPoint(
            scale=r["scale"],
            accuracy=r["accuracy"],
            avg_compression_ratio=r["avg_compression_ratio"],
            ratio_log2_variance=r["ratio_log2_variance"],
            n_correct=r["n_correct"],
            n_total=r["n_total"],
        )
        for r in rows
    ]


def parse_scale_grid(spec: str) -> list[float]:
    """Parse "start..stop:step" (inclusive) or a comma-separated list."""
    spec = spec.strip()
    if ".." in spec:
        range_part, _, step_part = spec.partition(":")
        start_s, _, stop_s = range_part.partition("..")
        start, stop = float(start_s), float(stop_s)
        step = float(step_part) if step_part else 0.5
        if step <= 0:
            raise ValueError("scale grid step must be positive")
        n = math.floor((stop - start) / step + 1e-9) + 1
        return [start + i * step for i in range(n)]
    return [float(tok) for tok in spec.split(",") if tok.strip()]
