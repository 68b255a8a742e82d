"""Wait-k prefix-constrained decoding over a pluggable translation model.

Under a wait-k schedule the decoder emitting target step t has observed
only the first g(t) = min(t + k - 1, |x|) source words. Greedy decoding
commits the top candidate at each step; beam search keeps the usual
length-synchronized beam, with every hypothesis of length t - 1 extended
using only the g(t)-word source prefix.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Protocol

from .aligner import TranslationTable
from .corpus import Sentence

END_TOKEN = "</s>"

DEFAULT_BEAM_SIZE = 5


class DecodeError(RuntimeError):
    """Decoding could not produce a non-empty output."""

    def __init__(self, message: str, step: int, pair_id: int | None = None):
        prefix = f"pair {pair_id}, " if pair_id is not None else ""
        super().__init__(f"{prefix}step {step}: {message}")
        self.step = step
        self.pair_id = pair_id


@dataclass(frozen=True)
class WaitKSchedule:
    """Fixed read schedule: wait k source words, then one per target step."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"wait parameter k must be >= 1, got {self.k}")

    def prefix_length(self, t: int, src_len: int) -> int:
        return schedule_g(t, self.k, src_len)


def schedule_g(t: int, k: int, src_len: int) -> int:
    """Number of source words observed when emitting target step t."""
    if t < 1 or k < 1 or src_len < 1:
        raise ValueError(f"t, k, src_len must all be >= 1, got {(t, k, src_len)}")
    return min(t + k - 1, src_len)


class Candidate(NamedTuple):
    token: str
    logprob: float


@dataclass(frozen=True)
class ModelQuery:
    source_prefix: Sentence
    target_prefix: Sentence
    n_best: int = 1

    def __post_init__(self):
        if self.n_best < 1:
            raise ValueError(f"n_best must be >= 1, got {self.n_best}")
        if not self.source_prefix:
            raise ValueError("source_prefix must be non-empty")


@dataclass(frozen=True)
class ModelResponse:
    candidates: tuple[Candidate, ...]


class ResponseInvariantError(ValueError):
    """A model response violates the response contract."""

    def __init__(self, message: str, raw=None):
        if raw is not None:
            message = f"{message} (raw record: {raw!r})"
        super().__init__(message)
        self.raw = raw


def validate_response(candidates, raw=None) -> ModelResponse:
    """Check response invariants: non-empty, finite logprobs <= 0, sorted
    by descending logprob, END appearing at most once."""
    cands = tuple(Candidate(token, float(logprob)) for token, logprob in candidates)
    if not cands:
        raise ResponseInvariantError("response contains no candidates", raw)
    end_count = 0
    previous = None
    for cand in cands:
        if not math.isfinite(cand.logprob):
            raise ResponseInvariantError(
                f"non-finite logprob for token {cand.token!r}", raw)
        if cand.logprob > 0.0:
            raise ResponseInvariantError(
                f"positive logprob {cand.logprob} for token {cand.token!r}", raw)
        if previous is not None and cand.logprob > previous:
            raise ResponseInvariantError("candidates not sorted by logprob", raw)
        previous = cand.logprob
        if cand.token == END_TOKEN:
            end_count += 1
    if end_count > 1:
        raise ResponseInvariantError("END appears more than once", raw)
    return ModelResponse(candidates=cands)


class TranslationModel(Protocol):
    def query(self, q: ModelQuery) -> ModelResponse: ...


@dataclass(frozen=True)
class Hypothesis:
    tokens: Sentence
    score: float
    finished: bool = False


def default_max_len(src_len: int) -> int:
    return 2 * src_len + 10


def _query_model(model: TranslationModel, query: ModelQuery, step: int,
                 pair_id: int | None) -> ModelResponse:
    """Ask the model, converting transport failures into decode errors."""
    try:
        return model.query(query)
    except DecodeError:
        raise
    except RuntimeError as exc:
        raise DecodeError(f"model failure: {exc}", step, pair_id) from exc


def greedy_waitk_decode(source: Sentence, k: int, model: TranslationModel,
                        max_len: int | None = None,
                        pair_id: int | None = None) -> Sentence:
    """Decode by committing the single best candidate at every step."""
    if max_len is None:
        max_len = default_max_len(len(source))
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    tokens: list[str] = []
    for t in range(1, max_len + 1):
        prefix = source[:schedule_g(t, k, len(source))]
        query = ModelQuery(source_prefix=prefix, target_prefix=tuple(tokens),
                           n_best=1)
        response = _query_model(model, query, t, pair_id)
        top = response.candidates[0]
        if top.token == END_TOKEN:
            if not tokens:
                raise DecodeError("model produced an empty output", t, pair_id)
            return tuple(tokens)
        tokens.append(top.token)
    return tuple(tokens)


def beam_waitk_search(source: Sentence, k: int, model: TranslationModel,
                      beam_size: int = DEFAULT_BEAM_SIZE,
                      max_len: int | None = None,
                      pair_id: int | None = None) -> Hypothesis:
    """Length-synchronized beam search under the wait-k prefix constraint.

    Finished hypotheses are set aside (their score includes the END step)
    and the search stops once beam_size of them exist, the beam empties,
    or max_len is reached; the winner maximizes score divided by length.
    With beam_size 1 this follows the greedy path exactly.
    """
    if beam_size < 1:
        raise ValueError(f"beam_size must be >= 1, got {beam_size}")
    if max_len is None:
        max_len = default_max_len(len(source))
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")

    active = [Hypothesis(tokens=(), score=0.0)]
    finished: list[Hypothesis] = []
    for t in range(1, max_len + 1):
        if not active or len(finished) >= beam_size:
            break
        prefix = source[:schedule_g(t, k, len(source))]
        expansions: list[Hypothesis] = []
        for hyp in active:
            query = ModelQuery(source_prefix=prefix, target_prefix=hyp.tokens,
                               n_best=beam_size)
            response = _query_model(model, query, t, pair_id)
            for cand in response.candidates[:beam_size]:
                extended_score = hyp.score + cand.logprob
                if cand.token == END_TOKEN:
                    if hyp.tokens:
                        finished.append(Hypothesis(tokens=hyp.tokens,
                                                   score=extended_score,
                                                   finished=True))
                else:
                    expansions.append(Hypothesis(tokens=hyp.tokens + (cand.token,),
                                                 score=extended_score))
        expansions.sort(key=lambda h: (-h.score, h.tokens))
        active = expansions[:beam_size]

    pool = finished + active
    if not pool:
        raise DecodeError("model produced an empty output", 1, pair_id)
    return max(pool, key=lambda h: (h.score / len(h.tokens), h.finished, h.tokens))


def beam_waitk_decode(source: Sentence, k: int, model: TranslationModel,
                      beam_size: int = DEFAULT_BEAM_SIZE,
                      max_len: int | None = None,
                      pair_id: int | None = None) -> Sentence:
    """Tokens of the best beam_waitk_search hypothesis."""
    return beam_waitk_search(source, k, model, beam_size=beam_size,
                             max_len=max_len, pair_id=pair_id).tokens


def _normalized_row(row: dict[str, float]) -> list[Candidate]:
    total = sum(row.values())
    items = sorted(row.items(), key=lambda kv: (-kv[1], kv[0]))
    return [Candidate(token, math.log(p / total)) for token, p in items if p > 0.0]


DEFAULT_END_BIAS = math.log(3.0)


@dataclass(frozen=True)
class LexicalModel:
    """Positional word-for-word model backed by a translation table.

    At target step t it emits the table row of the source word at position
    min(t, |observed prefix|); once t runs past the observed source, the
    end-of-sentence token gets odds exp(end_bias) : 1 against the whole
    lexical row of the last observed word, so with the default bias it
    takes probability 0.75 and strictly dominates any continuation.
    """

    table: TranslationTable
    end_bias: float = DEFAULT_END_BIAS
    floor: float = 1e-6

    @cached_property
    def _target_vocab(self) -> tuple[str, ...]:
        return tuple(sorted({tgt for r in self.table.probs.values() for tgt in r}))

    def query(self, q: ModelQuery) -> ModelResponse:
        t = len(q.target_prefix) + 1
        position = min(t, len(q.source_prefix))
        source_word = q.source_prefix[position - 1]
        row = self.table.row(source_word)
        if not row:
            # unknown source word: flat floor distribution over the target vocab
            row = {tgt: self.floor for tgt in self._target_vocab} or {source_word: 1.0}
        if t <= len(q.source_prefix):
            candidates = _normalized_row(row)[:q.n_best]
            return validate_response(candidates)
        # source exhausted: END competes with continuations of the last word
        end_weight = math.exp(self.end_bias)
        total = end_weight + sum(row.values())
        pool = [Candidate(END_TOKEN, math.log(end_weight / total))]
        pool.extend(
            Candidate(token, math.log(p / total))
            for token, p in sorted(row.items(), key=lambda kv: (-kv[1], kv[0]))
            if p > 0.0
        )
        pool.sort(key=lambda c: (-c.logprob, c.token != END_TOKEN, c.token))
        return validate_response(pool[:q.n_best])


def _stable_hash(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class NoisyLexicalModel:
    """Synthetic stress model whose accuracy grows with observed context.

    Each (source word, position) pair deterministically demands a certain
    amount of lookahead; when the observed prefix extends far enough past
    the position, the model emits the table's best translation, otherwise
    a pseudo-random decoy from the target vocabulary. Useful for studying
    how pseudo-reference quality responds to the wait parameter.
    """

    table: TranslationTable
    max_context_need: int = 8
    seed: int = 0

    @cached_property
    def _target_vocab(self) -> tuple[str, ...]:
        return tuple(sorted({tgt for r in self.table.probs.values() for tgt in r}))

    def query(self, q: ModelQuery) -> ModelResponse:
        t = len(q.target_prefix) + 1
        if t > len(q.source_prefix):
            return validate_response([Candidate(END_TOKEN, 0.0)])
        source_word = q.source_prefix[min(t, len(q.source_prefix)) - 1]
        need = _stable_hash(self.seed, "need", source_word, t) % (
            self.max_context_need + 1)
        available = len(q.source_prefix) - t
        row = self.table.row(source_word)
        if available >= need and row:
            token = max(row.items(), key=lambda kv: (kv[1], kv[0]))[0]
        else:
            choices = [v for v in self._target_vocab if v not in row] \
                or list(self._target_vocab)
            token = choices[_stable_hash(self.seed, "decoy", source_word, t)
                            % len(choices)]
        return validate_response([Candidate(token, 0.0)])
