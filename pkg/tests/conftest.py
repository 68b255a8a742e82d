"""Shared builders and instrumented models for the test suite."""

from __future__ import annotations

import random

import pytest

from refsmith.aligner import TranslationTable
from refsmith.corpus import SentencePair
from refsmith.decoder import (
    ModelQuery,
    ModelResponse,
    schedule_g,
    validate_response,
)

SRC_VOCAB = [f"s{i:02d}" for i in range(30)]
IDENTITY_LEXICON = {w: w.upper() for w in SRC_VOCAB}


def identity_corpus(n_pairs: int, seed: int = 0, min_len: int = 1,
                    max_len: int = 8) -> list[SentencePair]:
    """Monotone corpus from a one-to-one lexicon; tokens are distinct within
    each sentence so the generating alignment is exactly the identity."""
    rng = random.Random(seed)
    pairs = []
    for i in range(1, n_pairs + 1):
        length = rng.randint(min_len, max_len)
        words = rng.sample(SRC_VOCAB, length)
        pairs.append(SentencePair(
            id=i,
            source=tuple(words),
            target=tuple(IDENTITY_LEXICON[w] for w in words),
        ))
    return pairs


def identity_table() -> TranslationTable:
    return TranslationTable(
        probs={w: {IDENTITY_LEXICON[w]: 1.0} for w in SRC_VOCAB}
    )


def random_table(rng: random.Random, n_source: int = 8,
                 n_target: int = 8) -> TranslationTable:
    """Random normalized lexical rows over a small shared target vocab."""
    targets = [f"T{j}" for j in range(n_target)]
    probs = {}
    for i in range(n_source):
        weights = [rng.random() + 1e-3 for _ in targets]
        total = sum(weights)
        probs[f"w{i}"] = {t: w / total for t, w in zip(targets, weights)}
    return TranslationTable(probs=probs)


class ScriptedModel:
    """Model defined by an explicit target-prefix -> candidates script."""

    def __init__(self, script: dict[tuple, list[tuple[str, float]]]):
        self.script = script

    def query(self, q: ModelQuery) -> ModelResponse:
        return validate_response(self.script[tuple(q.target_prefix)])


class CausalityWrapper:
    """Wraps a model and records any query that peeks past the schedule."""

    def __init__(self, model, full_source: tuple, k: int):
        self.model = model
        self.full_source = tuple(full_source)
        self.k = k
        self.violations: list[str] = []
        self.prefix_lengths: list[tuple[int, int]] = []

    def query(self, q: ModelQuery) -> ModelResponse:
        t = len(q.target_prefix) + 1
        expected = self.full_source[:schedule_g(t, self.k, len(self.full_source))]
        if tuple(q.source_prefix) != expected:
            self.violations.append(
                f"step {t}: saw prefix of {len(q.source_prefix)}, "
                f"schedule allows {len(expected)}"
            )
        self.prefix_lengths.append((t, len(q.source_prefix)))
        return self.model.query(q)


@pytest.fixture
def tiny_corpus():
    return [
        SentencePair(1, ("a", "b"), ("X", "Y")),
        SentencePair(2, ("a",), ("X",)),
    ]
