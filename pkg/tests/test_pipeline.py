"""Generation, filtering, augmentation, and run manifests."""

import sys

import pytest

from refsmith.corpus import ScoredSentence, write_score_table
from refsmith.decoder import LexicalModel, NoisyLexicalModel, beam_waitk_decode
from refsmith.pipeline import (
    FilterPolicy,
    GenerationRun,
    MIN_BLEU,
    PipelineError,
    TOP_FRACTION,
    augment_corpus,
    filter_top,
    generate_pseudo_refs,
    manifest_entries,
    read_manifest,
    write_manifest,
)
from refsmith.wire import ExternalModelClient

from conftest import identity_corpus, identity_table

STUB = [sys.executable, "-m", "refsmith.stub_model"]


def scored(values):
    return [ScoredSentence(i, ("w",), v) for i, v in enumerate(values, start=1)]


class TestGenerate:
    def test_identity_corpus_all_bleu_100(self):
        corpus = identity_corpus(40, seed=6)
        model = LexicalModel(table=identity_table())
        run = GenerationRun(k=1)
        results = generate_pseudo_refs(corpus, run, lambda: model)
        assert len(results) == len(corpus)
        assert run.failures == {}
        assert all(r.bleu == 100.0 for r in results)
        assert [r.pair_id for r in results] == [p.id for p in corpus]

    def test_source_shorter_than_k_equals_full_sentence_decode(self):
        corpus = identity_corpus(15, seed=7, min_len=1, max_len=4)
        model = LexicalModel(table=identity_table())
        run = GenerationRun(k=6, beam_size=5)
        results = generate_pseudo_refs(corpus, run, lambda: model)
        for pair, result in zip(corpus, results):
            full = beam_waitk_decode(pair.source, 10 ** 6, model, beam_size=5)
            assert result.pseudo_target == full

    def test_pseudo_equal_to_original_scores_100(self):
        corpus = identity_corpus(5, seed=8)
        model = LexicalModel(table=identity_table())
        results = generate_pseudo_refs(corpus, GenerationRun(k=3), lambda: model)
        for pair, result in zip(corpus, results):
            assert result.pseudo_target == pair.target
            assert result.bleu == 100.0

    def test_worker_count_does_not_change_results(self):
        corpus = identity_corpus(37, seed=9)
        model = NoisyLexicalModel(table=identity_table(), seed=1)
        single = generate_pseudo_refs(corpus, GenerationRun(k=2, workers=1),
                                      lambda: model)
        multi = generate_pseudo_refs(corpus, GenerationRun(k=2, workers=4),
                                     lambda: model)
        assert single == multi

    def test_failures_recorded_not_raised(self):
        corpus = identity_corpus(12, seed=10, min_len=2, max_len=4)
        run = GenerationRun(k=1, beam_size=1, model_id="external:stub")
        factory = lambda: ExternalModelClient.spawn(
            STUB + ["--malform-after", "4"], timeout=10.0)
        results = generate_pseudo_refs(corpus, run, factory)
        assert len(results) + len(run.failures) == len(corpus)
        assert len(run.failures) >= 1
        result_ids = {r.pair_id for r in results}
        assert result_ids.isdisjoint(run.failures)
        assert result_ids | set(run.failures) == {p.id for p in corpus}

    def test_every_id_partitioned_between_outputs_and_manifest(self):
        corpus = identity_corpus(30, seed=11)
        model = LexicalModel(table=identity_table())
        run = GenerationRun(k=2, workers=3)
        results = generate_pseudo_refs(corpus, run, lambda: model)
        assert sorted(r.pair_id for r in results) + sorted(run.failures) == \
            sorted(p.id for p in corpus)

    def test_mean_bleu_non_decreasing_in_k_on_synthetic_corpus(self):
        corpus = identity_corpus(400, seed=12, min_len=3, max_len=10)
        model = NoisyLexicalModel(table=identity_table(), seed=5)
        means = []
        for k in (1, 3, 5, 9):
            results = generate_pseudo_refs(
                corpus, GenerationRun(k=k, beam_size=5), lambda: model)
            means.append(sum(r.bleu for r in results) / len(results))
        assert means == sorted(means)

    def test_invalid_run_configs_rejected(self):
        with pytest.raises(PipelineError):
            GenerationRun(k=0)
        with pytest.raises(PipelineError):
            GenerationRun(k=1, beam_size=0)
        with pytest.raises(PipelineError):
            GenerationRun(k=1, workers=0)


class TestFilter:
    def test_top_fraction_selects_exactly_the_top(self):
        items = scored([100.0, 80.0, 60.0, 40.0, 20.0])
        policy = FilterPolicy(mode=TOP_FRACTION, top_fraction=0.4)
        assert [s.bleu for s in filter_top(items, policy)] == [100.0, 80.0]

    def test_full_fraction_is_identity(self):
        items = scored([10.0, 90.0, 50.0])
        policy = FilterPolicy(mode=TOP_FRACTION, top_fraction=1.0)
        assert filter_top(items, policy) == items

    def test_ties_at_cut_prefer_smaller_pair_id(self):
        items = scored([60.0, 60.0, 60.0])
        policy = FilterPolicy(mode=TOP_FRACTION, top_fraction=0.4)
        assert [s.pair_id for s in filter_top(items, policy)] == [1, 2]

    def test_ceil_never_returns_empty(self):
        items = scored([50.0])
        policy = FilterPolicy(mode=TOP_FRACTION, top_fraction=0.01)
        assert len(filter_top(items, policy)) == 1

    def test_min_bleu_mode(self):
        items = scored([100.0, 59.9, 60.0])
        policy = FilterPolicy(mode=MIN_BLEU, min_bleu=60.0)
        assert [s.pair_id for s in filter_top(items, policy)] == [1, 3]

    def test_selected_floor_dominates_rejected_ceiling(self):
        items = scored([13.0, 87.0, 42.0, 87.0, 99.0, 5.0, 42.0])
        policy = FilterPolicy(mode=TOP_FRACTION, top_fraction=0.43)
        selected = filter_top(items, policy)
        rejected = [s for s in items if s not in selected]
        assert min(s.bleu for s in selected) >= max(s.bleu for s in rejected)

    def test_empty_input_rejected(self):
        with pytest.raises(PipelineError):
            filter_top([], FilterPolicy())

    def test_bad_policies_rejected(self):
        with pytest.raises(PipelineError):
            FilterPolicy(mode="best_effort")
        with pytest.raises(PipelineError):
            FilterPolicy(mode=TOP_FRACTION, top_fraction=0.0)
        with pytest.raises(PipelineError):
            FilterPolicy(mode=MIN_BLEU, min_bleu=101.0)


class TestAugment:
    def test_empty_selection_returns_original(self):
        corpus = identity_corpus(5, seed=13)
        assert augment_corpus(corpus, []) == corpus

    def test_all_selected_doubles_the_corpus(self):
        corpus = identity_corpus(5, seed=14)
        selected = [ScoredSentence(p.id, p.target + ("EXTRA",), 50.0)
                    for p in corpus]
        augmented = augment_corpus(corpus, selected)
        assert len(augmented) == 10
        assert augmented[:5] == corpus
        for original, appended in zip(corpus, augmented[5:]):
            assert appended.source == original.source
            assert appended.target == original.target + ("EXTRA",)

    def test_duplicate_of_original_is_retained(self):
        corpus = identity_corpus(3, seed=15)
        selected = [ScoredSentence(2, corpus[1].target, 100.0)]
        augmented = augment_corpus(corpus, selected)
        assert len(augmented) == 4
        assert augmented[3].source == corpus[1].source
        assert augmented[3].target == corpus[1].target

    def test_unknown_pair_id_rejected(self):
        corpus = identity_corpus(3, seed=16)
        with pytest.raises(PipelineError, match="99"):
            augment_corpus(corpus, [ScoredSentence(99, ("w",), 10.0)])

    def test_appended_ids_are_fresh_ordinals(self):
        corpus = identity_corpus(4, seed=17)
        selected = [ScoredSentence(1, ("w",), 10.0),
                    ScoredSentence(3, ("v",), 20.0)]
        augmented = augment_corpus(corpus, selected)
        assert [p.id for p in augmented] == [1, 2, 3, 4, 5, 6]


class TestManifest:
    def test_round_trip(self, tmp_path):
        run = GenerationRun(k=3, beam_size=5, model_id="builtin:t.ttable")
        run.failures[7] = "step 2: model produced an empty output"
        entries = manifest_entries(run, generated=42, extras={"note": "x"})
        path = tmp_path / "run.manifest"
        write_manifest(path, entries)
        loaded = read_manifest(path)
        assert loaded["k"] == "3"
        assert loaded["failed_ids"] == "7"
        assert loaded["failure.7"].startswith("step 2")
        assert loaded["generated"] == "42"
        assert loaded["note"] == "x"

    def test_deterministic_bytes(self, tmp_path):
        run = GenerationRun(k=1)
        entries = manifest_entries(run, generated=3)
        write_manifest(tmp_path / "a", entries)
        write_manifest(tmp_path / "b", entries)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


class TestDeterminism:
    def test_two_runs_are_byte_identical(self, tmp_path):
        corpus = identity_corpus(60, seed=18)
        model = NoisyLexicalModel(table=identity_table(), seed=2)
        outputs = []
        for name in ("run1", "run2"):
            run = GenerationRun(k=2, workers=2, model_id="builtin")
            results = generate_pseudo_refs(corpus, run, lambda: model)
            scores_path = tmp_path / f"{name}.scores"
            manifest_path = tmp_path / f"{name}.manifest"
            write_score_table(scores_path, results)
            write_manifest(manifest_path,
                           manifest_entries(run, generated=len(results)))
            outputs.append(
                (scores_path.read_bytes(), manifest_path.read_bytes()))
        assert outputs[0] == outputs[1]
