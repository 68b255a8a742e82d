"""Lexical translation tables trained by EM, and Viterbi link extraction.

Two trainers are provided: a uniform-distortion lexical model (Model 1)
and a variant whose link prior concentrates near the diagonal with a
learned tension parameter (Model 2). Tables map source words (plus a
reserved NULL word) to distributions over target words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Alignment, SentencePair

NULL_TOKEN = "<NULL>"
TABLE_FORMAT_HEADER = "refsmith-ttable v1"

DEFAULT_ITERATIONS = 5
DEFAULT_NULL_WEIGHT = 0.05
DEFAULT_MIN_PROB = 1e-6

TENSION_MIN = 0.1
TENSION_MAX = 14.0


class AlignerConfigError(ValueError):
    """Invalid training configuration or corpus."""


class TableFormatError(ValueError):
    """A table file violates the refsmith-ttable format."""


@dataclass(frozen=True)
class EmConfig:
    """EM settings shared by both trainers.

    null_weight is the alignment-prior mass reserved for the NULL source
    word; min_prob is both the post-training pruning floor and the lookup
    floor for words unseen in training.
    """

    iterations: int = DEFAULT_ITERATIONS
    null_weight: float = DEFAULT_NULL_WEIGHT
    min_prob: float = DEFAULT_MIN_PROB

    def __post_init__(self):
        if self.iterations < 1:
            raise AlignerConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 <= self.null_weight < 1.0:
            raise AlignerConfigError(
                f"null_weight must be in [0, 1), got {self.null_weight}"
            )
        if self.min_prob < 0.0:
            raise AlignerConfigError(f"min_prob must be >= 0, got {self.min_prob}")


@dataclass(frozen=True)
class TranslationTable:
    """Lexical probabilities t(target | source), one row per source word.

    Rows are normalized over the target words observed co-occurring with
    the source word. log_likelihood_history holds the corpus
    log-likelihood evaluated at the start of each EM iteration.
    """

    probs: dict[str, dict[str, float]]
    log_likelihood_history: tuple[float, ...] = ()

    def prob(self, source_word: str, target_word: str, floor: float = 0.0) -> float:
        return self.probs.get(source_word, {}).get(target_word, floor)

    def row(self, source_word: str) -> dict[str, float]:
        return self.probs.get(source_word, {})


@dataclass(frozen=True)
class Model2Params:
    """A translation table plus the diagonal-concentration tension."""

    table: TranslationTable
    tension: float
    null_weight: float = DEFAULT_NULL_WEIGHT

    def __post_init__(self):
        if self.tension <= 0.0:
            raise AlignerConfigError(f"tension must be > 0, got {self.tension}")


def _cooccurrence_rows(corpus, null_weight: float) -> dict[str, set[str]]:
    rows: dict[str, set[str]] = {}
    if null_weight > 0.0:
        rows[NULL_TOKEN] = set()
    for pair in corpus:
        for src_word in pair.source:
            rows.setdefault(src_word, set()).update(pair.target)
        if null_weight > 0.0:
            rows[NULL_TOKEN].update(pair.target)
    return rows


def _uniform_table(rows: dict[str, set[str]]) -> dict[str, dict[str, float]]:
    return {
        src: {tgt: 1.0 / len(tgts) for tgt in sorted(tgts)}
        for src, tgts in rows.items()
    }


def _diag_feature(s: int, t: int, m: int, n: int) -> float:
    return abs(s / m - t / n)


def _diag_weights(t: int, m: int, n: int, tension: float) -> list[float]:
    """Unnormalized diagonal link weights for real source positions 1..m."""
    return [math.exp(-tension * _diag_feature(s, t, m, n)) for s in range(1, m + 1)]


def _prune_and_normalize(probs: dict[str, dict[str, float]], min_prob: float) -> None:
    for src, row in probs.items():
        kept = {tgt: p for tgt, p in row.items() if p >= min_prob}
        if not kept:
            best = max(row, key=lambda tgt: (row[tgt], tgt))
            kept = {best: row[best]}
        total = sum(kept.values())
        probs[src] = {tgt: p / total for tgt, p in kept.items()}


def _run_em(corpus, config: EmConfig, tension: float | None,
            grad_steps: int, grad_step_size: float):
    """Shared EM loop; tension=None selects the uniform link prior.

    Returns (probs, log-likelihood history, final tension).
    """
    corpus = list(corpus)
    if not corpus:
        raise AlignerConfigError("cannot train on an empty corpus")

    nw = config.null_weight
    probs = _uniform_table(_cooccurrence_rows(corpus, nw))
    history = []

    for _ in range(config.iterations):
        counts: dict[str, dict[str, float]] = {src: {} for src in probs}
        log_likelihood = 0.0
        # Tension gradient bookkeeping, aggregated by sentence shape so the
        # model expectation can be recomputed cheaply per gradient step.
        emp_feat = 0.0
        shape_real_mass: dict[tuple[int, int], list[float]] = {}
        token_count = 0

        for pair in corpus:
            m, n = len(pair.source), len(pair.target)
            if tension is not None:
                real_mass = shape_real_mass.setdefault((m, n), [0.0] * n)
            for t_pos, tgt_word in enumerate(pair.target, start=1):
                if tension is None:
                    link_weights = [(1.0 - nw) / m] * m
                else:
                    diag = _diag_weights(t_pos, m, n, tension)
                    z = sum(diag)
                    link_weights = [(1.0 - nw) * w / z for w in diag]
                scores = [
                    link_weights[s_pos - 1] * probs[src_word].get(tgt_word, 0.0)
                    for s_pos, src_word in enumerate(pair.source, start=1)
                ]
                null_score = 0.0
                if nw > 0.0:
                    null_score = nw * probs[NULL_TOKEN].get(tgt_word, 0.0)
                total = sum(scores) + null_score
                log_likelihood += math.log(total)
                for s_pos, src_word in enumerate(pair.source, start=1):
                    gamma = scores[s_pos - 1] / total
                    row = counts[src_word]
                    row[tgt_word] = row.get(tgt_word, 0.0) + gamma
                    if tension is not None:
                        feat = _diag_feature(s_pos, t_pos, m, n)
                        emp_feat += gamma * feat
                        real_mass[t_pos - 1] += gamma
                if nw > 0.0:
                    row = counts[NULL_TOKEN]
                    row[tgt_word] = row.get(tgt_word, 0.0) + null_score / total
                token_count += 1

        history.append(log_likelihood)

        probs = {
            src: {tgt: c / total for tgt, c in row.items()}
            for src, row in counts.items()
            if (total := sum(row.values())) > 0.0
        }

        if tension is not None and grad_steps > 0:
            for _ in range(grad_steps):
                model_feat = 0.0
                for (m, n), masses in shape_real_mass.items():
                    for t_pos, mass in enumerate(masses, start=1):
                        if mass == 0.0:
                            continue
                        diag = _diag_weights(t_pos, m, n, tension)
                        z = sum(diag)
                        expected = sum(
                            w * _diag_feature(s, t_pos, m, n)
                            for s, w in enumerate(diag, start=1)
                        ) / z
                        model_feat += mass * expected
                gradient = (model_feat - emp_feat) / token_count
                tension += grad_step_size * gradient
                tension = min(max(tension, TENSION_MIN), TENSION_MAX)

    _prune_and_normalize(probs, config.min_prob)
    return probs, tuple(history), tension


def train_model1(corpus, config: EmConfig = EmConfig()) -> TranslationTable:
    """Train a uniform-distortion lexical table by EM.

    Starts from a uniform initialization over co-occurring target words;
    the corpus log-likelihood is non-decreasing across iterations.
    """
    probs, history, _ = _run_em(corpus, config, tension=None,
                                grad_steps=0, grad_step_size=0.0)
    return TranslationTable(probs=probs, log_likelihood_history=history)


def train_model2_diag(corpus, config: EmConfig = EmConfig(), *,
                      tension_init: float = 4.0, grad_steps: int = 8,
                      grad_step_size: float = 1.0) -> Model2Params:
    """Train a diagonal-biased table: link prior for (s, t) is proportional
    to exp(-tension * |s/m - t/n|), with the tension refined by gradient
    ascent on the per-token expected likelihood after each EM iteration.
    """
    if tension_init <= 0.0:
        raise AlignerConfigError(f"tension_init must be > 0, got {tension_init}")
    probs, history, tension = _run_em(corpus, config, tension=tension_init,
                                      grad_steps=grad_steps,
                                      grad_step_size=grad_step_size)
    table = TranslationTable(probs=probs, log_likelihood_history=history)
    return Model2Params(table=table, tension=tension,
                        null_weight=config.null_weight)


def corpus_log_likelihood(corpus, table: TranslationTable,
                          config: EmConfig = EmConfig()) -> float:
    """Corpus log-likelihood under the uniform link prior."""
    nw = config.null_weight
    total_ll = 0.0
    for pair in corpus:
        m = len(pair.source)
        for tgt_word in pair.target:
            acc = sum(
                (1.0 - nw) / m * table.prob(src_word, tgt_word)
                for src_word in pair.source
            )
            if nw > 0.0:
                acc += nw * table.prob(NULL_TOKEN, tgt_word)
            total_ll += math.log(acc)
    return total_ll


def model2_corpus_log_likelihood(corpus, params: Model2Params,
                                 tension: float | None = None) -> float:
    """Corpus log-likelihood under the diagonal link prior; tension can be
    overridden to probe the likelihood surface."""
    lam = params.tension if tension is None else tension
    nw = params.null_weight
    total_ll = 0.0
    for pair in corpus:
        m, n = len(pair.source), len(pair.target)
        for t_pos, tgt_word in enumerate(pair.target, start=1):
            diag = _diag_weights(t_pos, m, n, lam)
            z = sum(diag)
            acc = sum(
                (1.0 - nw) * diag[s_pos - 1] / z * params.table.prob(src_word, tgt_word)
                for s_pos, src_word in enumerate(pair.source, start=1)
            )
            if nw > 0.0:
                acc += nw * params.table.prob(NULL_TOKEN, tgt_word)
            total_ll += math.log(acc)
    return total_ll


def _argmax_links(pair: SentencePair, table: TranslationTable, use_null: bool,
                  floor: float, position_weight=None) -> Alignment:
    """Shared Viterbi loop; position_weight rescales real-position scores."""
    links = set()
    for t_pos, tgt_word in enumerate(pair.target, start=1):
        best_pos, best_score = 1, -1.0
        for s_pos, src_word in enumerate(pair.source, start=1):
            score = table.probs.get(src_word, {}).get(tgt_word, floor)
            if position_weight is not None:
                score *= position_weight(s_pos, t_pos)
            if score > best_score:
                best_pos, best_score = s_pos, score
        if use_null:
            null_score = table.probs.get(NULL_TOKEN, {}).get(tgt_word, floor)
            if null_score >= best_score:
                continue
        links.add((best_pos, t_pos))
    return frozenset(links)


def viterbi_align(pair: SentencePair, table: TranslationTable,
                  use_null: bool = True,
                  floor: float = DEFAULT_MIN_PROB) -> Alignment:
    """Link each target position to its most probable source position.

    Positions whose best score is no better than the NULL word's stay
    unlinked (NULL wins ties, so fully unknown words count as unaligned);
    ties between real positions break to the smallest source index.
    """
    return _argmax_links(pair, table, use_null, floor)


def model2_viterbi_align(pair: SentencePair, params: Model2Params,
                         use_null: bool = True,
                         floor: float = DEFAULT_MIN_PROB) -> Alignment:
    """Viterbi links under the diagonal prior: real positions are scored by
    normalized diagonal weight times lexical probability; the NULL word
    competes with its bare lexical probability, as in the uniform model."""
    m, n = len(pair.source), len(pair.target)
    weights_by_t = {}

    def position_weight(s_pos: int, t_pos: int) -> float:
        if t_pos not in weights_by_t:
            diag = _diag_weights(t_pos, m, n, params.tension)
            z = sum(diag)
            weights_by_t[t_pos] = [w / z for w in diag]
        return weights_by_t[t_pos][s_pos - 1]

    return _argmax_links(pair, params.table, use_null, floor, position_weight)


def save_table(path, table: TranslationTable, tension: float | None = None) -> None:
    """Write a table as "refsmith-ttable v1" rows sorted by source word and
    descending probability; probabilities keep 12 significant digits."""
    if not table.probs:
        raise TableFormatError("refusing to save an empty table")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TABLE_FORMAT_HEADER + "\n")
        fh.write("# direction: source->target\n")
        if tension is not None:
            fh.write(f"# tension: {tension:.12g}\n")
        for src in sorted(table.probs):
            row = table.probs[src]
            for tgt, p in sorted(row.items(), key=lambda kv: (-kv[1], kv[0])):
                fh.write(f"{src}\t{tgt}\t{p:.12g}\n")


def _read_table_file(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TABLE_FORMAT_HEADER:
        found = lines[0] if lines else "<empty file>"
        raise TableFormatError(
            f"{path}: expected header {TABLE_FORMAT_HEADER!r}, found {found!r}"
        )
    tension = None
    probs: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("tension:"):
                tension = float(body.split(":", 1)[1])
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TableFormatError(
                f"{path}: line {lineno}: expected 3 tab-separated fields"
            )
        src, tgt, raw = fields
        try:
            p = float(raw)
        except ValueError:
            raise TableFormatError(
                f"{path}: line {lineno}: bad probability {raw!r}"
            ) from None
        if p < 0.0:
            raise TableFormatError(f"{path}: line {lineno}: negative probability")
        probs.setdefault(src, {})[tgt] = p
    if not probs:
        raise TableFormatError(f"{path}: table contains no entries")
    for src, row in probs.items():
        total = sum(row.values())
        # tolerance widens with row size to absorb 12-digit serialization rounding
        if abs(total - 1.0) > max(1e-9, 2e-12 * len(row)):
            raise TableFormatError(
                f"{path}: row for source word {src!r} sums to {total!r}, not 1"
            )
    return probs, tension


def load_table(path) -> TranslationTable:
    probs, _ = _read_table_file(path)
    return TranslationTable(probs=probs)


def load_model2_params(path) -> Model2Params:
    probs, tension = _read_table_file(path)
    if tension is None:
        raise TableFormatError(f"{path}: no tension recorded in table header")
    return Model2Params(table=TranslationTable(probs=probs), tension=tension)
