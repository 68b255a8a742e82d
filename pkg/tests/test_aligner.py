"""EM training, Viterbi extraction, and table serialization.

The EM implementation is checked against an independent oracle that
enumerates every alignment function explicitly and accumulates exact
fractional counts, which is feasible for sentences of a few tokens.
"""

import itertools
import math
import random

import pytest

from refsmith.aligner import (
    AlignerConfigError,
    EmConfig,
    Model2Params,
    NULL_TOKEN,
    TableFormatError,
    TranslationTable,
    corpus_log_likelihood,
    load_model2_params,
    load_table,
    model2_corpus_log_likelihood,
    model2_viterbi_align,
    save_table,
    train_model1,
    train_model2_diag,
    viterbi_align,
)
from refsmith.corpus import SentencePair

from conftest import identity_corpus, identity_table, IDENTITY_LEXICON


def enumeration_em(corpus, iterations, null_weight=0.0):
    """Brute-force EM: enumerate all alignment functions per sentence.

    Returns (table dict, per-iteration log-likelihood list). Completely
    independent of the package's E-step: expectations come from explicit
    sums over (m + null)^n alignment vectors.
    """
    cooc = {}
    if null_weight > 0:
        cooc[NULL_TOKEN] = set()
    for pair in corpus:
        for s in pair.source:
            cooc.setdefault(s, set()).update(pair.target)
        if null_weight > 0:
            cooc[NULL_TOKEN].update(pair.target)
    t = {s: {y: 1.0 / len(ys) for y in ys} for s, ys in cooc.items()}
    history = []
    for _ in range(iterations):
        counts = {s: {y: 0.0 for y in ys} for s, ys in cooc.items()}
        ll = 0.0
        for pair in corpus:
            m, n = len(pair.source), len(pair.target)
            positions = list(range(m)) + ([None] if null_weight > 0 else [])
            total = 0.0
            weights = {}
            for assign in itertools.product(positions, repeat=n):
                p = 1.0
                for t_idx, s_idx in enumerate(assign):
                    if s_idx is None:
                        p *= null_weight * t[NULL_TOKEN][pair.target[t_idx]]
                    else:
                        p *= ((1.0 - null_weight) / m
                              * t[pair.source[s_idx]][pair.target[t_idx]])
                weights[assign] = p
                total += p
            ll += math.log(total)
            for assign, p in weights.items():
                w = p / total
                for t_idx, s_idx in enumerate(assign):
                    src = NULL_TOKEN if s_idx is None else pair.source[s_idx]
                    counts[src][pair.target[t_idx]] += w
        history.append(ll)
        t = {
            s: {y: c / z for y, c in row.items()}
            for s, row in counts.items()
            if (z := sum(row.values())) > 0
        }
    return t, history


class TestModel1:
    def test_matches_enumeration_oracle(self, tiny_corpus):
        table = train_model1(tiny_corpus, EmConfig(iterations=5, null_weight=0.0))
        oracle, oracle_ll = enumeration_em(tiny_corpus, 5, null_weight=0.0)
        for src, row in oracle.items():
            for tgt, p in row.items():
                assert table.prob(src, tgt) == pytest.approx(p, abs=1e-12)
        for got, want in zip(table.log_likelihood_history, oracle_ll):
            assert got == pytest.approx(want, abs=1e-9)

    def test_matches_enumeration_oracle_with_null(self):
        corpus = [
            SentencePair(1, ("a", "b"), ("X", "Y", "Z")),
            SentencePair(2, ("b", "c"), ("Y",)),
            SentencePair(3, ("a",), ("X", "Z")),
        ]
        config = EmConfig(iterations=4, null_weight=0.1, min_prob=0.0)
        table = train_model1(corpus, config)
        oracle, oracle_ll = enumeration_em(corpus, 4, null_weight=0.1)
        for src, row in oracle.items():
            for tgt, p in row.items():
                assert table.prob(src, tgt) == pytest.approx(p, abs=1e-10)
        for got, want in zip(table.log_likelihood_history, oracle_ll):
            assert got == pytest.approx(want, abs=1e-9)

    def test_dominant_pair_converges(self, tiny_corpus):
        # frozen from the enumeration oracle before the implementation existed
        table = train_model1(tiny_corpus, EmConfig(iterations=5, null_weight=0.0))
        assert table.prob("a", "X") == pytest.approx(0.9551986360273029, abs=1e-12)
        assert table.prob("a", "X") > 0.9

    def test_single_cooccurrence_forces_certainty(self):
        corpus = [SentencePair(1, ("a",), ("X",))]
        table = train_model1(corpus, EmConfig(iterations=1, null_weight=0.0))
        assert table.prob("a", "X") == 1.0

    def test_log_likelihood_non_decreasing(self):
        corpus = identity_corpus(60, seed=3)
        table = train_model1(corpus, EmConfig(iterations=6))
        history = table.log_likelihood_history
        assert len(history) == 6
        tolerance = 1e-9 * len(corpus)
        for earlier, later in zip(history, history[1:]):
            assert later >= earlier - tolerance

    def test_rows_normalized_after_every_iteration(self, tiny_corpus):
        for iterations in range(1, 6):
            table = train_model1(
                tiny_corpus, EmConfig(iterations=iterations, null_weight=0.05))
            for src, row in table.probs.items():
                assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)
                assert all(p >= 0 for p in row.values())

    def test_empty_corpus_rejected(self):
        with pytest.raises(AlignerConfigError):
            train_model1([], EmConfig())

    def test_standalone_log_likelihood_matches_history(self, tiny_corpus):
        config = EmConfig(iterations=3, null_weight=0.0, min_prob=0.0)
        table = train_model1(tiny_corpus, config)
        # history[i] is the likelihood of the params entering iteration i,
        # so recomputing with the final table must be >= the last entry
        final_ll = corpus_log_likelihood(tiny_corpus, table, config)
        assert final_ll >= table.log_likelihood_history[-1] - 1e-9


class TestViterbi:
    def test_forced_argmax(self):
        table = TranslationTable(probs={
            "a": {"X": 0.9, "Y": 0.1},
            "b": {"Y": 0.9, "X": 0.1},
            NULL_TOKEN: {"X": 0.05, "Y": 0.05},
        })
        pair = SentencePair(1, ("a", "b"), ("X", "Y"))
        assert viterbi_align(pair, table) == frozenset({(1, 1), (2, 2)})

    def test_zero_probability_word_goes_unlinked(self):
        table = TranslationTable(probs={
            "a": {"X": 1.0, "w": 0.0},
            NULL_TOKEN: {"X": 1.0},
        })
        pair = SentencePair(1, ("a",), ("w",))
        alignment = viterbi_align(pair, table, use_null=True)
        assert (1, 1) not in alignment
        assert alignment == frozenset()

    def test_unknown_word_goes_to_null(self):
        table = TranslationTable(probs={"a": {"X": 1.0}, NULL_TOKEN: {"X": 1.0}})
        pair = SentencePair(1, ("a",), ("unseen",))
        assert viterbi_align(pair, table) == frozenset()

    def test_tie_breaks_to_smallest_source_index(self):
        table = TranslationTable(probs={
            "u": {"X": 0.0},
            "a": {"X": 0.5},
            NULL_TOKEN: {"X": 0.1},
        })
        pair = SentencePair(1, ("u", "a", "u", "u", "a"), ("X",))
        assert viterbi_align(pair, table) == frozenset({(2, 1)})

    def test_without_null_every_position_links(self):
        table = TranslationTable(probs={"a": {"X": 1.0}})
        pair = SentencePair(1, ("a",), ("unseen",))
        assert viterbi_align(pair, table, use_null=False) == frozenset({(1, 1)})

    def test_determinism_under_insertion_order(self):
        rows = [("b", {"X": 0.3, "Y": 0.7}), ("a", {"X": 0.7, "Y": 0.3}),
                (NULL_TOKEN, {"X": 0.01, "Y": 0.01})]
        forward = TranslationTable(probs=dict(rows))
        backward = TranslationTable(probs=dict(reversed(rows)))
        pair = SentencePair(1, ("a", "b"), ("X", "Y", "X"))
        assert viterbi_align(pair, forward) == viterbi_align(pair, backward)

    def test_recovers_generating_alignment_on_monotone_corpus(self):
        corpus = identity_corpus(400, seed=11, max_len=8)
        table = train_model1(corpus, EmConfig())
        for pair in corpus:
            expected = frozenset((i, i) for i in range(1, len(pair.source) + 1))
            assert viterbi_align(pair, table) == expected


class TestModel2:
    def test_monotone_corpus_viterbi_is_identity(self):
        corpus = identity_corpus(300, seed=5, max_len=5)
        params = train_model2_diag(corpus, EmConfig(iterations=3))
        for pair in corpus:
            expected = frozenset((i, i) for i in range(1, len(pair.source) + 1))
            assert model2_viterbi_align(pair, params) == expected

    def test_zero_tension_limit_matches_model1(self, tiny_corpus):
        config = EmConfig(iterations=4, null_weight=0.05, min_prob=0.0)
        table1 = train_model1(tiny_corpus, config)
        params = train_model2_diag(tiny_corpus, config,
                                   tension_init=1e-9, grad_steps=0)
        for src, row in table1.probs.items():
            for tgt, p in row.items():
                assert params.table.prob(src, tgt) == pytest.approx(p, abs=1e-6)

    def test_tension_grows_on_monotone_corpus(self):
        corpus = identity_corpus(200, seed=9, min_len=2, max_len=6)
        params = train_model2_diag(corpus, EmConfig(iterations=3))
        assert params.tension > 4.0

    def test_gradient_direction_agrees_with_likelihood_surface(self):
        # finite differences on the marginal likelihood around the initial
        # tension confirm the sign of the update the trainer takes
        corpus = identity_corpus(100, seed=13, min_len=2, max_len=6)
        params = train_model2_diag(corpus, EmConfig(iterations=2))
        eps = 1e-4
        at_init = Model2Params(table=params.table, tension=4.0,
                               null_weight=params.null_weight)
        up = model2_corpus_log_likelihood(corpus, at_init, tension=4.0 + eps)
        down = model2_corpus_log_likelihood(corpus, at_init, tension=4.0 - eps)
        fd_gradient = (up - down) / (2 * eps)
        assert fd_gradient > 0
        assert params.tension > 4.0

    def test_invalid_tension_rejected(self):
        with pytest.raises(AlignerConfigError):
            Model2Params(table=identity_table(), tension=0.0)


class TestTableIO:
    def test_round_trip_preserves_12_digits(self, tmp_path):
        corpus = identity_corpus(50, seed=2)
        table = train_model1(corpus, EmConfig())
        path = tmp_path / "t.ttable"
        save_table(path, table)
        loaded = load_table(path)
        assert set(loaded.probs) == set(table.probs)
        for src, row in table.probs.items():
            for tgt, p in row.items():
                assert abs(loaded.prob(src, tgt) - p) <= 1e-12

    def test_header_and_sort_order(self, tmp_path):
        table = TranslationTable(probs={"b": {"Y": 0.75, "X": 0.25},
                                        "a": {"Z": 1.0}})
        path = tmp_path / "t.ttable"
        save_table(path, table)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "refsmith-ttable v1"
        data = [l for l in lines if not l.startswith("#")][1:]
        assert data == ["a\tZ\t1", "b\tY\t0.75", "b\tX\t0.25"]

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "t.ttable"
        path.write_text("some-other-format v9\na\tX\t1.0\n", encoding="utf-8")
        with pytest.raises(TableFormatError, match="header"):
            load_table(path)

    def test_non_normalized_row_names_the_row(self, tmp_path):
        path = tmp_path / "t.ttable"
        path.write_text(
            "refsmith-ttable v1\na\tX\t0.5\nb\tY\t1.0\n", encoding="utf-8")
        with pytest.raises(TableFormatError, match="'a'"):
            load_table(path)

    def test_empty_table_rejected_on_save_and_load(self, tmp_path):
        with pytest.raises(TableFormatError):
            save_table(tmp_path / "t", TranslationTable(probs={}))
        path = tmp_path / "t.ttable"
        path.write_text("refsmith-ttable v1\n", encoding="utf-8")
        with pytest.raises(TableFormatError, match="no entries"):
            load_table(path)

    def test_model2_params_round_trip(self, tmp_path):
        corpus = identity_corpus(40, seed=4)
        params = train_model2_diag(corpus, EmConfig(iterations=2))
        path = tmp_path / "m2.ttable"
        save_table(path, params.table, tension=params.tension)
        loaded = load_model2_params(path)
        assert loaded.tension == pytest.approx(params.tension, rel=1e-11)

    def test_plain_table_has_no_tension(self, tmp_path):
        path = tmp_path / "t.ttable"
        save_table(path, identity_table())
        with pytest.raises(TableFormatError, match="tension"):
            load_model2_params(path)


class TestPruning:
    def test_floors_are_pruned_and_rows_renormalized(self):
        rng = random.Random(21)
        pairs = []
        for i in range(1, 120):
            words = rng.sample(list(IDENTITY_LEXICON), rng.randint(2, 6))
            pairs.append(SentencePair(
                i, tuple(words), tuple(IDENTITY_LEXICON[w] for w in words)))
        table = train_model1(pairs, EmConfig(iterations=5, min_prob=1e-3))
        for src, row in table.probs.items():
            assert all(p > 0 for p in row.values())
            assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)
