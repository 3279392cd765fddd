"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import random
import string

import pytest

from sdcc.corpus import QARecord


class CountingEncoder:
    """Delegating encoder wrapper that counts encode invocations."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def encode(self, tokens, appended_slots=0):
        self.calls += 1
        return self.inner.encode(tokens, appended_slots)


def make_qa_records(n: int, seed: int = 0, min_len: int = 64, max_len: int = 256) -> list[QARecord]:
    """Synthetic QA records with printable contexts of varied byte lengths."""
    rng = random.Random(seed)
    alphabet = string.ascii_letters + string.digits + " "
    records = []
    for i in range(n):
        length = rng.randint(min_len, max_len)
        context = "".join(rng.choice(alphabet) for _ in range(length))
        answer = f"answer-{i}"
        records.append(
            QARecord(
                context=context,
                question=f"What is item {i}?",
                answers=(answer,),
                source="synthetic-test",
            )
        )
    return records


@pytest.fixture
def qa_records():
    return make_qa_records(12, seed=7)
