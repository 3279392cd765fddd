"""Synthetic training-data generation through a teacher model.

Two phases, one HTTP client. Phase 1 asks the teacher for conventional
supervision (QA pairs, summaries) to drive the generative loss. Phase 2
asks for ultra-concise summaries whose token length is the density proxy:
the shorter a faithful summary can be, the more compressible the context,
and log2(L_ctx / L_sum) becomes the regression label.

The wire format is the common chat-completions shape: POST
{base_url}/chat/completions with {"model", "messages", "temperature"},
bearer token from a named environment variable, first choice's message
content consumed. Tests and offline runs swap the HTTP transport for a
fixture transport that replays recorded responses keyed by a hash of the
request payload, so nothing here ever needs a live endpoint to be
verifiable.

Prompt templates are versioned assets, not tuned artifacts; swapping the
wording changes teacher text but not any contract in this package.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

from sdcc.corpus import QARecord, tokenize
from sdcc.density import DensityRecord

logger = logging.getLogger(__name__)

# Teacher sampling is pinned for pipeline reproducibility (the text itself
# is still whatever the teacher says).
TEACHER_TEMPERATURE = 0.7

MIN_SEED_TOKENS = 128
MAX_SEED_TOKENS = 1300

TASK_KINDS = (
    "summarization",
    "single_doc_qa",
    "multi_doc_qa",
    "multi_hop",
    "ultra_concise_summary",
)

TEMPLATES: dict[str, str] = {
    "summarization_en_v1": (
        "Summarize the following passage in a few sentences.\n\nPassage:\n{context}"
    ),
    "single_doc_qa_en_v1": (
        "Read the passage and write one factual question about it together with its answer.\n"
        "Reply in exactly this format:\nQ: <question>\nA: <answer>\n\nPassage:\n{context}"
    ),
    "multi_doc_qa_en_v1": (
        "The passage below contains several sections. Write one question whose answer "
        "combines information from at least two sections, plus the answer.\n"
        "Reply in exactly this format:\nQ: <question>\nA: <answer>\n\nPassage:\n{context}"
    ),
    "multi_hop_en_v1": (
        "Write one question about the passage that requires chaining at least two facts "
        "to answer, plus the answer.\n"
        "Reply in exactly this format:\nQ: <question>\nA: <answer>\n\nPassage:\n{context}"
    ),
    "ultra_concise_summary_en_v1": (
        "Compress the passage into the shortest possible summary. Omit every redundant "
        "word; keep only what is essential. Reply with the summary text only.\n\nPassage:\n{context}"
    ),
    "summarization_zh_v1": "用几句话总结下面的文章。\n\n文章：\n{context}",
    "single_doc_qa_zh_v1": (
        "阅读文章，写出一个事实性问题及其答案。\n"
        "严格按照以下格式回复：\nQ: <问题>\nA: <答案>\n\n文章：\n{context}"
    ),
    "multi_doc_qa_zh_v1": (
        "下面的文章包含多个部分。写出一个需要综合至少两个部分的信息才能回答的问题及其答案。\n"
        "严格按照以下格式回复：\nQ: <问题>\nA: <答案>\n\n文章：\n{context}"
    ),
    "multi_hop_zh_v1": (
        "写出一个需要串联至少两个事实才能回答的问题及其答案。\n"
        "严格按照以下格式回复：\nQ: <问题>\nA: <答案>\n\n文章：\n{context}"
    ),
    "ultra_concise_summary_zh_v1": (
        "将文章压缩成尽可能短的摘要，删去一切冗余词语，只保留必要信息。只回复摘要本身。\n\n文章：\n{context}"
    ),
}

_QA_TASK_KINDS = ("single_doc_qa", "multi_doc_qa", "multi_hop")


@dataclass(frozen=True)
class TeacherEndpoint:
    base_url: str
    model_name: str
    auth_token_env_var: str = "SDCC_TEACHER_TOKEN"
    max_retries: int = 2
    request_timeout: float = 30.0
    max_concurrent: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


@dataclass(frozen=True)
class SynthesisTask:
    kind: str
    prompt_template_id: str
    language: str = "en"

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.language not in ("en", "zh"):
            raise ValueError("language must be 'en' or 'zh'")
        if self.prompt_template_id not in TEMPLATES:
            raise ValueError(f"unknown template {self.prompt_template_id!r}")

    @classmethod
    def for_kind(cls, kind: str, language: str = "en") -> "SynthesisTask":
        return cls(kind=kind, prompt_template_id=f"{kind}_{language}_v1", language=language)


class TeacherUnavailable(RuntimeError):
    """Transport kept failing through all retries."""


class DegenerateTeacherOutput(ValueError):
    """Teacher produced output unusable for the requested task."""


class DatasetTooDegraded(RuntimeError):
    """More than half of the contexts were skipped; refuse the dataset."""


class Transport(Protocol):
    def post(self, url: str, payload: dict, headers: dict, timeout: float) -> dict: ...


def request_fingerprint(payload: dict) -> str:
    """Stable hash of a request payload; the fixture-file key."""
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpTransport:
    """Live transport over requests; one POST per call, no retries here."""

    def post(self, url: str, payload: dict, headers: dict, timeout: float) -> dict:
        import requests

        response = requests.post(url, json=payload, headers=headers, timeout=timeout)
        response.raise_for_status()
        return response.json()


class FixtureTransport:
    """Replays recorded responses; hermetic by construction.

    Fixture files are JSONL of {"request_hash": hex, "response": str};
    the response string is wrapped in the chat-completions shape so the
    client code path is identical to the live one.
    """

    def __init__(self, fixtures: dict[str, str]):
        self.fixtures = dict(fixtures)
        self.requests_seen: list[str] = []

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "FixtureTransport":
        fixtures = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    fixtures[obj["request_hash"]] = obj["response"]
        return cls(fixtures)

    def post(self, url: str, payload: dict, headers: dict, timeout: float) -> dict:
        key = request_fingerprint(payload)
        self.requests_seen.append(key)
        if key not in self.fixtures:
            raise KeyError(f"no fixture recorded for request {key[:12]}…")
        return {"choices": [{"message": {"role": "assistant", "content": self.fixtures[key]}}]}


class TeacherClient:
    """Chat-completion client with bounded exponential-backoff retries."""

    def __init__(
        self,
        endpoint: TeacherEndpoint,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.transport = transport if transport is not None else HttpTransport()
        self._sleep = sleep

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.endpoint.auth_token_env_var, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt: str, temperature: float = TEACHER_TEMPERATURE) -> str:
        payload = {
            "model": self.endpoint.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        attempts = self.endpoint.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                data = self.transport.post(url, payload, self._headers(), self.endpoint.request_timeout)
            except KeyError:
                # Fixture miss: retrying cannot help and hides test bugs.
                raise
            except Exception as exc:  # noqa: BLE001 - transport failures vary by backend
                last_error = exc
                if attempt < attempts - 1:
                    self._sleep(0.5 * 2**attempt)
                continue
            try:
                return data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise DegenerateTeacherOutput(f"response missing choices/message: {data!r}") from exc
        raise TeacherUnavailable(
            f"teacher endpoint failed after {attempts} attempts: {last_error}"
        ) from last_error


def _check_seed_length(context: str) -> int:
    n = len(tokenize(context))
    if not MIN_SEED_TOKENS <= n <= MAX_SEED_TOKENS:
        raise ValueError(
            f"seed context is {n} tokens; synthesis expects [{MIN_SEED_TOKENS}, {MAX_SEED_TOKENS}]"
        )
    return n


def _parse_qa(text: str) -> tuple[str, str] | None:
    question = answer = None
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("Q:") and question is None:
            question = stripped[2:].strip()
        elif stripped.startswith("A:") and answer is None:
            answer = stripped[2:].strip()
    if question and answer:
        return question, answer
    return None


def synthesize_tasks(
    context: str,
    kinds: Sequence[str | SynthesisTask],
    client: TeacherClient,
    language: str = "en",
) -> list[QARecord]:
    """Phase 1: one record per requested task kind.

    QA-shaped outputs that do not follow the Q:/A: delimiter format are
    skipped with a log line rather than failing the batch.
    """
    _check_seed_length(context)
    records: list[QARecord] = []
    for kind in kinds:
        task = kind if isinstance(kind, SynthesisTask) else SynthesisTask.for_kind(kind, language)
        if task.kind == "ultra_concise_summary":
            raise ValueError("ultra_concise_summary belongs to phase 2; use synthesize_concise_summary")
        prompt = TEMPLATES[task.prompt_template_id].format(context=context)
        text = client.complete(prompt)
        if task.kind in _QA_TASK_KINDS:
            parsed = _parse_qa(text)
            if parsed is None:
                logger.warning("teacher output for %s lacked Q:/A: delimiters; skipped", task.kind)
                continue
            question, answer = parsed
        else:  # summarization
            if not text.strip():
                logger.warning("teacher produced an empty summary; skipped")
                continue
            question, answer = "Summarize the passage.", text.strip()
        records.append(
            QARecord(context=context, question=question, answers=(answer,), source=f"synthetic:{task.kind}")
        )
    return records


def synthesize_concise_summary(
    context: str, client: TeacherClient, language: str = "en"
) -> tuple[str, int]:
    """Phase 2: the ultra-concise summary and its token count under the
    active tokenizer. A summary longer than the context is accepted (the
    label simply goes negative); an empty one is an error."""
    _check_seed_length(context)
    task = SynthesisTask.for_kind("ultra_concise_summary", language)
    text = client.complete(TEMPLATES[task.prompt_template_id].format(context=context)).strip()
    if not text:
        raise DegenerateTeacherOutput("teacher returned an empty summary; cannot derive a label")
    return text, len(tokenize(text))


def build_density_dataset(
    contexts: Sequence[str],
    client: TeacherClient,
    language: str = "en",
    skip_manifest_path: str | Path | None = None,
) -> list[DensityRecord]:
    """Run phase 2 over many contexts, skipping failures.

    Requests run up to endpoint.max_concurrent at a time; results are
    restored to input order. Skipped contexts are written to the manifest
    (JSONL of {"index", "error"}) when a path is given. More than 50%
    skips aborts with :class:`DatasetTooDegraded`.
    """

    def one(index: int, context: str) -> DensityRecord:
        summary, l_sum = synthesize_concise_summary(context, client, language)
        record = DensityRecord.from_lengths(tokenize(context), tokenize(summary))
        if record.y < 0:
            logger.warning("context %d: summary longer than context (label %.3f)", index, record.y)
        return record

    results: list[DensityRecord | None] = [None] * len(contexts)
    skips: list[dict] = []
    with ThreadPoolExecutor(max_workers=client.endpoint.max_concurrent) as pool:
        futures = {pool.submit(one, i, c): i for i, c in enumerate(contexts)}
        for future, index in futures.items():
            try:
                results[index] = future.result()
            except Exception as exc:  # noqa: BLE001 - every failure becomes a skip entry
                skips.append({"index": index, "error": str(exc)})
                logger.warning("context %d skipped: %s", index, exc)

    if skip_manifest_path is not None:
        with Path(skip_manifest_path).open("w", encoding="utf-8") as fh:
            for entry in sorted(skips, key=lambda e: e["index"]):
                fh.write(json.dumps(entry) + "\n")

    kept = [r for r in results if r is not None]
    if contexts and len(skips) * 2 > len(contexts):
        raise DatasetTooDegraded(
            f"{len(skips)} of {len(contexts)} contexts failed; dataset too degraded to use"
        )
    return kept


def write_density_dataset(records: Sequence[DensityRecord], path: str | Path) -> None:
    """Persist density records as JSONL with text recoverable for retraining."""
    from sdcc.corpus import detokenize

    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "context": detokenize(r.context_tokens),
                        "l_ctx": r.l_ctx,
                        "summary": detokenize(r.summary_tokens) if r.summary_tokens else None,
                        "l_sum": r.l_sum,
                        "y": r.y,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_density_dataset(path: str | Path) -> list[DensityRecord]:
    """Inverse of :func:`write_density_dataset`; labels are recomputed and
    must agree with the stored value."""
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            record = DensityRecord.from_lengths(
                tokenize(obj["context"]),
                tokenize(obj["summary"]) if obj.get("summary") else None,
                l_sum=obj["l_sum"],
            )
            if abs(record.y - obj["y"]) > 1e-12:
                raise ValueError(f"line {line_number}: stored label {obj['y']} disagrees with lengths")
            records.append(record)
    return records
