"""Tokenizer, dataset loading, and sampling behavior."""

from __future__ import annotations

import json
import logging

import pytest
from hypothesis import given, strategies as st

from sdcc.corpus import (
    SENTINEL_ID,
    VOCAB_SIZE,
    QARecord,
    RecordFormatError,
    TokenSequence,
    detokenize,
    filter_and_sample,
    load_records,
    tokenize,
    write_records,
)


class TestTokenizer:
    def test_empty_text_gives_empty_sequence(self):
        assert tokenize("").tokens == ()

    def test_byte_identity_mapping(self):
        assert tokenize("ab").tokens == (97, 98)

    def test_multibyte_utf8(self):
        assert tokenize("é").tokens == (0xC3, 0xA9)

    @given(st.text(max_size=200))
    def test_round_trip(self, text):
        assert detokenize(tokenize(text)) == text

    def test_detokenize_rejects_special_ids(self):
        with pytest.raises(ValueError, match="special ids"):
            detokenize(TokenSequence((97, SENTINEL_ID)))

    def test_token_ids_validated_against_vocab(self):
        with pytest.raises(ValueError, match="outside vocabulary"):
            TokenSequence((VOCAB_SIZE,))

    def test_unknown_tokenizer_rejected(self):
        with pytest.raises(ValueError, match="unknown tokenizer"):
            tokenize("x", tokenizer_id="bpe-50k")


class TestLoadRecords:
    def _write(self, path, lines):
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_valid_lines_load_in_order(self, tmp_path):
        path = tmp_path / "data.jsonl"
        rows = [
            {"context": f"ctx {i}", "question": "q?", "answers": ["a"], "source": "s"}
            for i in range(3)
        ]
        self._write(path, [json.dumps(r) for r in rows])
        records = load_records(path)
        assert [r.context for r in records] == ["ctx 0", "ctx 1", "ctx 2"]

    def test_missing_answers_names_line_and_field(self, tmp_path):
        path = tmp_path / "data.jsonl"
        good = json.dumps({"context": "c", "question": "q", "answers": ["a"]})
        bad = json.dumps({"context": "c", "question": "q"})
        self._write(path, [good, bad])
        with pytest.raises(RecordFormatError, match="line 2.*'answers'"):
            load_records(path)

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_records(path) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_records(tmp_path / "nope.jsonl")

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "data.jsonl"
        self._write(path, ["{not json"])
        with pytest.raises(RecordFormatError, match="line 1"):
            load_records(path)

    def test_empty_answers_list_rejected(self, tmp_path):
        path = tmp_path / "data.jsonl"
        self._write(path, [json.dumps({"context": "c", "question": "q", "answers": []})])
        with pytest.raises(RecordFormatError, match="answers"):
            load_records(path)

    def test_write_read_round_trip(self, tmp_path):
        records = [QARecord("ctx", "q?", ("a1", "a2"), "src")]
        path = tmp_path / "out.jsonl"
        write_records(records, path)
        assert load_records(path) == records


def _record(context: str, i: int = 0) -> QARecord:
    return QARecord(context=context, question="q?", answers=(f"a{i}",), source="t")


class TestFilterAndSample:
    def test_long_context_excluded(self):
        records = [_record("x" * 3000, 0), _record("y" * 100, 1)]
        kept = filter_and_sample(records, max_tokens=2048, n=10, seed=0)
        assert [r.context[0] for r in kept] == ["y"]

    def test_n_zero_gives_empty(self):
        records = [_record("abc")]
        assert filter_and_sample(records, max_tokens=2048, n=0, seed=0) == []

    def test_same_seed_same_selection(self):
        records = [_record(f"context number {i}", i) for i in range(50)]
        a = filter_and_sample(records, max_tokens=100, n=10, seed=42)
        b = filter_and_sample(records, max_tokens=100, n=10, seed=42)
        assert a == b

    def test_different_seeds_can_differ(self):
        records = [_record(f"context number {i}", i) for i in range(50)]
        picks = {tuple(r.answers[0] for r in filter_and_sample(records, 100, 5, seed=s)) for s in range(20)}
        assert len(picks) > 1

    def test_no_duplicate_records(self):
        records = [_record(f"context number {i}", i) for i in range(30)]
        kept = filter_and_sample(records, max_tokens=100, n=20, seed=3)
        ids = [r.answers[0] for r in kept]
        assert len(ids) == len(set(ids)) == 20

    def test_oversized_n_returns_all_survivors_with_warning(self, caplog):
        records = [_record(f"short {i}", i) for i in range(4)]
        with caplog.at_level(logging.WARNING, logger="sdcc.corpus"):
            kept = filter_and_sample(records, max_tokens=2048, n=100, seed=0)
        assert len(kept) == 4
        assert any("only 4 records" in m for m in caplog.messages)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            filter_and_sample([], max_tokens=0, n=1, seed=0)
        with pytest.raises(ValueError):
            filter_and_sample([], max_tokens=10, n=-1, seed=0)
