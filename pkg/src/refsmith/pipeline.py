"""Pseudo-reference generation, BLEU filtering, and corpus augmentation.

The generation step decodes every source sentence under a wait-k schedule
with beam search, scores each output against the original reference with
sentence BLEU, and records per-sentence failures in a run manifest
instead of aborting multi-hour jobs. Filtering keeps the best-scoring
fraction; augmentation appends the survivors to the original corpus.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import ScoredSentence, SentencePair
from .decoder import DecodeError, beam_waitk_decode
from .metrics import sentence_bleu
from .wire import ModelProtocolError

TOP_FRACTION = "top_fraction"
MIN_BLEU = "min_bleu"


class PipelineError(ValueError):
    """Structurally invalid pipeline input."""


@dataclass
class GenerationRun:
    """Configuration and failure manifest for one generation pass.

    After generate_pseudo_refs returns, every corpus pair id appears
    either in the returned scores or in `failures`, never both.
    """

    k: int
    beam_size: int = 5
    workers: int = 1
    model_id: str = "builtin"
    source_path: str = ""
    target_path: str = ""
    failures: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1:
            raise PipelineError(f"k must be >= 1, got {self.k}")
        if self.beam_size < 1:
            raise PipelineError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.workers < 1:
            raise PipelineError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class FilterPolicy:
    """Selection rule for scored pseudo-references.

    In top_fraction mode the ceil(q * N) highest-BLEU items are kept,
    with ties at the cut going to the smaller pair id; in min_bleu mode
    every item at or above the threshold is kept.
    """

    mode: str = TOP_FRACTION
    top_fraction: float = 0.4
    min_bleu: float = 0.0

    def __post_init__(self):
        if self.mode not in (TOP_FRACTION, MIN_BLEU):
            raise PipelineError(f"unknown filter mode {self.mode!r}")
        if self.mode == TOP_FRACTION and not 0.0 < self.top_fraction <= 1.0:
            raise PipelineError(
                f"top_fraction must be in (0, 1], got {self.top_fraction}"
            )
        if self.mode == MIN_BLEU and not 0.0 <= self.min_bleu <= 100.0:
            raise PipelineError(
                f"min_bleu must be in [0, 100], got {self.min_bleu}"
            )


def _decode_chunk(pairs, run: GenerationRun, model):
    scored = []
    failures = {}
    for pair in pairs:
        try:
            pseudo = beam_waitk_decode(
                pair.source, run.k, model,
                beam_size=run.beam_size, pair_id=pair.id,
            )
            bleu = sentence_bleu(pseudo, [pair.target])
            scored.append(ScoredSentence(pair_id=pair.id,
                                         pseudo_target=pseudo, bleu=bleu))
        except (DecodeError, ModelProtocolError) as exc:
            failures[pair.id] = str(exc)
            # a protocol failure may leave the stream misaligned
            if hasattr(model, "reset"):
                model.reset()
    return scored, failures


def generate_pseudo_refs(corpus, run: GenerationRun, model_factory) -> list[ScoredSentence]:
    """Decode the whole corpus under run.k and score against the originals.

    model_factory is called once per worker and must return an object with
    a query() method; connection failures surface before any decoding.
    Per-sentence failures are recorded in run.failures and the sentence is
    skipped. Results come back ordered by pair id regardless of worker
    scheduling.
    """
    corpus = list(corpus)
    workers = min(run.workers, len(corpus)) or 1
    models = [model_factory() for _ in range(workers)]
    try:
        chunk_size = math.ceil(len(corpus) / workers) if corpus else 0
        chunks = [
            corpus[i * chunk_size:(i + 1) * chunk_size] for i in range(workers)
        ]
        if workers == 1:
            results = [_decode_chunk(chunks[0], run, models[0])]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_decode_chunk, chunk, run, model)
                    for chunk, model in zip(chunks, models)
                ]
                results = [f.result() for f in futures]
    finally:
        for model in models:
            if hasattr(model, "close"):
                model.close()
    scored: list[ScoredSentence] = []
    for chunk_scored, chunk_failures in results:
        scored.extend(chunk_scored)
        run.failures.update(chunk_failures)
    scored.sort(key=lambda s: s.pair_id)
    return scored


def filter_top(scored, policy: FilterPolicy) -> list[ScoredSentence]:
    """Select pseudo-references per the policy; output is ordered by pair id."""
    scored = list(scored)
    if not scored:
        raise PipelineError("cannot filter an empty score list")
    if policy.mode == TOP_FRACTION:
        keep = math.ceil(policy.top_fraction * len(scored))
        ranked = sorted(scored, key=lambda s: (-s.bleu, s.pair_id))
        selected = ranked[:keep]
    else:
        selected = [s for s in scored if s.bleu >= policy.min_bleu]
    return sorted(selected, key=lambda s: s.pair_id)


def augment_corpus(original, selected) -> list[SentencePair]:
    """Append (source, pseudo_target) pairs for each selected item.

    Original pairs are never modified; appended pairs get fresh ordinal
    ids. Pseudo-references identical to their original are kept, so exact
    duplicates act as upweighting.
    """
    original = list(original)
    by_id = {pair.id: pair for pair in original}
    augmented = list(original)
    next_id = len(original)
    for item in selected:
        source_pair = by_id.get(item.pair_id)
        if source_pair is None:
            raise PipelineError(
                f"selected pair id {item.pair_id} does not exist in the corpus"
            )
        next_id += 1
        augmented.append(SentencePair(id=next_id, source=source_pair.source,
                                      target=item.pseudo_target))
    return augmented


def manifest_entries(run: GenerationRun, generated: int,
                     extras: dict[str, str] | None = None) -> dict[str, str]:
    """Flat key-value manifest rows for a generation run."""
    entries = {
        "format": "refsmith-manifest v1",
        "k": str(run.k),
        "beam_size": str(run.beam_size),
        "workers": str(run.workers),
        "model": run.model_id,
        "source_path": run.source_path,
        "target_path": run.target_path,
        "generated": str(generated),
        "failed_count": str(len(run.failures)),
        "failed_ids": ",".join(str(i) for i in sorted(run.failures)),
    }
    for pair_id in sorted(run.failures):
        entries[f"failure.{pair_id}"] = run.failures[pair_id]
    if extras:
        entries.update(extras)
    return entries


def write_manifest(path, entries: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(entries):
            value = str(entries[key]).replace("\n", " ")
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict[str, str]:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("=")
            entries[key] = value
    return entries
