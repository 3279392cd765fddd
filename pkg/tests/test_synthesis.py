"""Teacher-driven synthesis with offline fixtures; retry and skip behavior."""

from __future__ import annotations

import json
import logging

import pytest

from sdcc.corpus import tokenize
from sdcc.synthesis import (
    TEACHER_TEMPERATURE,
    TEMPLATES,
    DatasetTooDegraded,
    DegenerateTeacherOutput,
    FixtureTransport,
    SynthesisTask,
    TeacherClient,
    TeacherEndpoint,
    TeacherUnavailable,
    build_density_dataset,
    load_density_dataset,
    request_fingerprint,
    synthesize_concise_summary,
    synthesize_tasks,
    write_density_dataset,
)

ENDPOINT = TeacherEndpoint(base_url="http://teacher.invalid/v1", model_name="stub-teacher")

# 162 bytes; the k=8 repetition (1296) still fits the seed-length window.
BASE_TEXT = (
    "The northern reservoir supplies three districts through a gravity-fed "
    "main that was relined in 2019 after sediment surveys showed loss. "
    "Overflow then goes south. "
)
assert len(BASE_TEXT.encode()) == 162


def fingerprint_for(prompt: str) -> str:
    payload = {
        "model": ENDPOINT.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": TEACHER_TEMPERATURE,
    }
    return request_fingerprint(payload)


def fixture_client(responses: dict[str, str]) -> tuple[TeacherClient, FixtureTransport]:
    fixtures = {
        fingerprint_for(TEMPLATES[tid].format(context=ctx)): text
        for (tid, ctx), text in responses.items()
    }
    transport = FixtureTransport(fixtures)
    return TeacherClient(ENDPOINT, transport=transport), transport


class FlakyTransport:
    """Fails the first n posts, then delegates to a fixture transport."""

    def __init__(self, failures: int, inner: FixtureTransport):
        self.remaining = failures
        self.inner = inner
        self.attempts = 0

    def post(self, url, payload, headers, timeout):
        self.attempts += 1
        if self.remaining > 0:
            self.remaining -= 1
            raise ConnectionError("synthetic transport failure")
        return self.inner.post(url, payload, headers, timeout)


class TestFixturePlayback:
    def test_single_doc_qa_bit_exact(self):
        client, _ = fixture_client(
            {("single_doc_qa_en_v1", BASE_TEXT): "Q: Which year was the main relined?\nA: 2019"}
        )
        records = synthesize_tasks(BASE_TEXT, ["single_doc_qa"], client)
        assert len(records) == 1
        assert records[0].question == "Which year was the main relined?"
        assert records[0].answers == ("2019",)
        assert records[0].source == "synthetic:single_doc_qa"

    def test_summarization_wraps_whole_output(self):
        client, _ = fixture_client({("summarization_en_v1", BASE_TEXT): "A reservoir feeds three districts."})
        records = synthesize_tasks(BASE_TEXT, ["summarization"], client)
        assert records[0].answers == ("A reservoir feeds three districts.",)

    def test_malformed_qa_output_skipped_and_logged(self, caplog):
        client, _ = fixture_client({("multi_hop_en_v1", BASE_TEXT): "no delimiters here"})
        with caplog.at_level(logging.WARNING, logger="sdcc.synthesis"):
            records = synthesize_tasks(BASE_TEXT, ["multi_hop"], client)
        assert records == []
        assert any("delimiters" in m for m in caplog.messages)

    def test_fixture_mode_is_hermetic(self, monkeypatch):
        import requests

        def explode(*args, **kwargs):
            raise AssertionError("network touched in fixture mode")

        monkeypatch.setattr(requests, "post", explode)
        monkeypatch.setattr(requests, "get", explode)
        client, transport = fixture_client(
            {("ultra_concise_summary_en_v1", BASE_TEXT): "Reservoir feeds 3 districts; relined 2019."}
        )
        summary, l_sum = synthesize_concise_summary(BASE_TEXT, client)
        assert l_sum == len(tokenize(summary))
        assert transport.requests_seen  # the stub, not the network, served it


class TestSeedLengthPrecondition:
    def test_short_context_rejected(self):
        client, _ = fixture_client({})
        with pytest.raises(ValueError, match=r"100 tokens.*\[128, 1300\]"):
            synthesize_tasks("x" * 100, ["summarization"], client)

    def test_overlong_context_rejected(self):
        client, _ = fixture_client({})
        with pytest.raises(ValueError, match="1400 tokens"):
            synthesize_concise_summary("y" * 1400, client)


class TestRetries:
    def test_two_failures_then_success(self):
        inner = FixtureTransport(
            {fingerprint_for(TEMPLATES["summarization_en_v1"].format(context=BASE_TEXT)): "ok"}
        )
        flaky = FlakyTransport(2, inner)
        sleeps: list[float] = []
        client = TeacherClient(ENDPOINT, transport=flaky, sleep=sleeps.append)
        records = synthesize_tasks(BASE_TEXT, ["summarization"], client)
        assert records[0].answers == ("ok",)
        assert flaky.attempts == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff

    def test_endpoint_down_exhausts_retries(self):
        flaky = FlakyTransport(99, FixtureTransport({}))
        client = TeacherClient(ENDPOINT, transport=flaky, sleep=lambda _: None)
        with pytest.raises(TeacherUnavailable, match="after 3 attempts"):
            client.complete("anything")
        assert flaky.attempts == 3  # max_retries=2 means 3 attempts total

    def test_no_retry_budget_means_single_attempt(self):
        endpoint = TeacherEndpoint(base_url="http://t.invalid", model_name="m", max_retries=0)
        flaky = FlakyTransport(99, FixtureTransport({}))
        client = TeacherClient(endpoint, transport=flaky, sleep=lambda _: None)
        with pytest.raises(TeacherUnavailable):
            client.complete("anything")
        assert flaky.attempts == 1


class TestConciseSummary:
    def test_token_count_reported(self):
        summary_text = "s" * 32
        client, _ = fixture_client({("ultra_concise_summary_en_v1", BASE_TEXT): summary_text})
        summary, l_sum = synthesize_concise_summary(BASE_TEXT, client)
        assert (summary, l_sum) == (summary_text, 32)

    def test_whitespace_only_output_rejected(self):
        client, _ = fixture_client({("ultra_concise_summary_en_v1", BASE_TEXT): "   \n  "})
        with pytest.raises(DegenerateTeacherOutput):
            synthesize_concise_summary(BASE_TEXT, client)

    def test_summary_longer_than_context_gives_negative_label(self, caplog):
        long_summary = "z" * 400
        client, _ = fixture_client({("ultra_concise_summary_en_v1", BASE_TEXT): long_summary})
        with caplog.at_level(logging.WARNING, logger="sdcc.synthesis"):
            records = build_density_dataset([BASE_TEXT], client)
        assert len(records) == 1
        assert records[0].y < 0
        assert any("longer than context" in m for m in caplog.messages)


class TestBuildDensityDataset:
    def _client_for(self, contexts, summary="Reservoir summary."):
        return fixture_client(
            {("ultra_concise_summary_en_v1", ctx): summary for ctx in contexts}
        )

    def test_three_contexts_exact_labels(self):
        from sdcc.density import density_label

        contexts = [BASE_TEXT, BASE_TEXT * 2, BASE_TEXT * 4]
        summary = "w" * 20
        client, _ = self._client_for(contexts, summary)
        records = build_density_dataset(contexts, client)
        assert [r.l_ctx for r in records] == [162, 324, 648]
        assert [r.y for r in records] == [density_label(162, 20), density_label(324, 20), density_label(648, 20)]

    def test_order_is_deterministic_despite_concurrency(self):
        contexts = [BASE_TEXT + "pad" * i + " " * (0) for i in range(0, 6)]
        contexts = [c for c in contexts if 128 <= len(c.encode()) <= 1300]
        client, _ = self._client_for(contexts)
        a = build_density_dataset(contexts, client)
        b = build_density_dataset(contexts, client)
        assert [r.l_ctx for r in a] == [r.l_ctx for r in b] == [len(c.encode()) for c in contexts]

    def test_all_failures_error(self, tmp_path):
        client, _ = fixture_client({})  # no fixture -> every context fails
        with pytest.raises(DatasetTooDegraded):
            build_density_dataset([BASE_TEXT, BASE_TEXT * 2], client)

    def test_skip_manifest_written(self, tmp_path):
        contexts = [BASE_TEXT, BASE_TEXT * 2, BASE_TEXT * 3]
        client, _ = self._client_for([BASE_TEXT, BASE_TEXT * 2])  # third context unfixtured
        manifest = tmp_path / "skips.jsonl"
        records = build_density_dataset(contexts, client, skip_manifest_path=manifest)
        assert len(records) == 2
        skips = [json.loads(l) for l in manifest.read_text().splitlines()]
        assert [s["index"] for s in skips] == [2]

    def test_majority_skips_abort(self):
        contexts = [BASE_TEXT, BASE_TEXT * 2, BASE_TEXT * 3]
        client, _ = self._client_for([BASE_TEXT])  # 2 of 3 fail
        with pytest.raises(DatasetTooDegraded, match="2 of 3"):
            build_density_dataset(contexts, client)


class TestLabelLadder:
    def test_repeated_text_gives_exact_unit_steps(self):
        contexts = [BASE_TEXT * k for k in (1, 2, 4, 8)]
        summary = "v" * 25
        client, _ = fixture_client(
            {("ultra_concise_summary_en_v1", ctx): summary for ctx in contexts}
        )
        records = build_density_dataset(contexts, client)
        labels = [r.y for r in records]
        y0 = labels[0]
        assert labels == [y0, y0 + 1.0, y0 + 2.0, y0 + 3.0]


class TestDatasetFiles:
    def test_write_load_round_trip(self, tmp_path):
        contexts = [BASE_TEXT, BASE_TEXT * 2]
        client, _ = fixture_client(
            {("ultra_concise_summary_en_v1", ctx): "compact." for ctx in contexts}
        )
        records = build_density_dataset(contexts, client)
        path = tmp_path / "density.jsonl"
        write_density_dataset(records, path)
        loaded = load_density_dataset(path)
        assert [r.y for r in loaded] == [r.y for r in records]
        assert [r.l_ctx for r in loaded] == [r.l_ctx for r in records]


class TestTaskValidation:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown task kind"):
            SynthesisTask(kind="poetry", prompt_template_id="summarization_en_v1")

    def test_unknown_template_rejected(self):
        with pytest.raises(ValueError, match="unknown template"):
            SynthesisTask(kind="summarization", prompt_template_id="nope_v9")

    def test_phase2_kind_rejected_in_phase1(self):
        client, _ = fixture_client({})
        with pytest.raises(ValueError, match="phase 2"):
            synthesize_tasks(BASE_TEXT, ["ultra_concise_summary"], client)

    def test_zh_templates_exist(self):
        task = SynthesisTask.for_kind("single_doc_qa", language="zh")
        assert "{context}" in TEMPLATES[task.prompt_template_id]

    def test_endpoint_validation(self):
        with pytest.raises(ValueError):
            TeacherEndpoint(base_url="x", model_name="m", max_retries=-1)
        with pytest.raises(ValueError):
            TeacherEndpoint(base_url="x", model_name="m", max_concurrent=0)
