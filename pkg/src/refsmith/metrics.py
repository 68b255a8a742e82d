"""Anticipation rate, hallucination rate, BLEU, and score histograms.

A target position t counts as k-anticipated when it aligns to a source
position s with s >= t + k, i.e. to a word that a wait-k schedule has not
yet observed. A hypothesis position is a hallucination when it aligns to
no source word at all. Corpus-level rates are micro-averages: total
flagged tokens over total tokens.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .corpus import Alignment, Sentence

MAX_NGRAM_ORDER = 4


@dataclass(frozen=True)
class AnticipationReport:
    per_sentence: tuple[tuple[int, float], ...]
    corpus_mean: float
    k: int


@dataclass(frozen=True)
class HallucinationReport:
    per_sentence: tuple[tuple[int, float], ...]
    corpus_mean: float


@dataclass(frozen=True)
class BleuStats:
    """Sufficient statistics for BLEU-4: per-order clipped and total n-gram
    counts, candidate length, and effective reference length."""

    clipped: tuple[int, int, int, int]
    totals: tuple[int, int, int, int]
    candidate_length: int
    reference_length: int

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            clipped=tuple(a + b for a, b in zip(self.clipped, other.clipped)),
            totals=tuple(a + b for a, b in zip(self.totals, other.totals)),
            candidate_length=self.candidate_length + other.candidate_length,
            reference_length=self.reference_length + other.reference_length,
        )


def k_anticipated(t: int, alignment: Alignment, k: int) -> bool:
    """True iff target position t links to some source position s >= t + k."""
    return any(s >= t + k for s, t_link in alignment if t_link == t)


def anticipation_rate(pair, alignment: Alignment, k: int) -> float:
    """Fraction of target positions that are k-anticipated."""
    n = len(pair.target)
    flagged = sum(1 for t in range(1, n + 1) if k_anticipated(t, alignment, k))
    return flagged / n


def hallucination_rate(hypothesis: Sentence, alignment: Alignment) -> float:
    """Fraction of hypothesis positions with no link in the alignment."""
    linked = {t for _, t in alignment}
    n = len(hypothesis)
    return sum(1 for t in range(1, n + 1) if t not in linked) / n


def anticipation_report(pairs, alignments, k: int) -> AnticipationReport:
    """Per-sentence anticipation rates plus the token-weighted corpus mean."""
    pairs = list(pairs)
    alignments = list(alignments)
    if len(pairs) != len(alignments):
        raise ValueError(
            f"{len(pairs)} sentence pairs but {len(alignments)} alignments")
    per_sentence = []
    flagged_total = 0
    token_total = 0
    for pair, alignment in zip(pairs, alignments):
        n = len(pair.target)
        flagged = sum(1 for t in range(1, n + 1) if k_anticipated(t, alignment, k))
        per_sentence.append((pair.id, flagged / n))
        flagged_total += flagged
        token_total += n
    mean = flagged_total / token_total if token_total else 0.0
    return AnticipationReport(per_sentence=tuple(per_sentence),
                              corpus_mean=mean, k=k)


def hallucination_report(hypotheses, alignments, pair_ids=None) -> HallucinationReport:
    """Per-hypothesis hallucination rates plus the token-weighted mean."""
    hypotheses = list(hypotheses)
    alignments = list(alignments)
    if len(hypotheses) != len(alignments):
        raise ValueError(
            f"{len(hypotheses)} hypotheses but {len(alignments)} alignments")
    if pair_ids is None:
        pair_ids = range(1, len(hypotheses) + 1)
    per_sentence = []
    flagged_total = 0
    token_total = 0
    for pid, hyp, alignment in zip(pair_ids, hypotheses, alignments):
        linked = {t for _, t in alignment}
        flagged = sum(1 for t in range(1, len(hyp) + 1) if t not in linked)
        per_sentence.append((pid, flagged / len(hyp)))
        flagged_total += flagged
        token_total += len(hyp)
    mean = flagged_total / token_total if token_total else 0.0
    return HallucinationReport(per_sentence=tuple(per_sentence), corpus_mean=mean)


def _ngram_counts(tokens: Sentence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _effective_reference_length(candidate_length: int, references) -> int:
    """Reference length closest to the candidate's; ties pick the shorter."""
    return min(
        (len(ref) for ref in references),
        key=lambda r: (abs(r - candidate_length), r),
    )


def bleu_stats(candidate: Sentence, references) -> BleuStats:
    """Collect clipped/total n-gram counts against one or more references.

    Clip counts take, per n-gram, the maximum count over all references.
    """
    references = list(references)
    if not candidate:
        raise ValueError("candidate must be non-empty")
    if not references:
        raise ValueError("at least one reference is required")
    clipped = []
    totals = []
    for n in range(1, MAX_NGRAM_ORDER + 1):
        cand_counts = _ngram_counts(candidate, n)
        max_ref_counts: Counter = Counter()
        for ref in references:
            for ngram, count in _ngram_counts(ref, n).items():
                if count > max_ref_counts[ngram]:
                    max_ref_counts[ngram] = count
        clipped.append(
            sum(min(count, max_ref_counts[ngram])
                for ngram, count in cand_counts.items())
        )
        totals.append(sum(cand_counts.values()))
    return BleuStats(
        clipped=tuple(clipped),
        totals=tuple(totals),
        candidate_length=len(candidate),
        reference_length=_effective_reference_length(len(candidate), references),
    )


def _brevity_penalty(candidate_length: int, reference_length: int) -> float:
    if candidate_length > reference_length:
        return 1.0
    return math.exp(1.0 - reference_length / candidate_length)


def _score_from_stats(stats: BleuStats, smooth: bool) -> float:
    """BLEU-4 in [0, 100]; orders with no candidate n-grams are skipped.

    With smoothing, orders n >= 2 get add-one on both the clipped and the
    total count; unigram precision is never smoothed, so an empty unigram
    overlap forces a score of zero either way.
    """
    log_precision_sum = 0.0
    for n in range(1, MAX_NGRAM_ORDER + 1):
        total = stats.totals[n - 1]
        if total == 0:
            continue
        clip = stats.clipped[n - 1]
        if smooth and n >= 2:
            precision = (clip + 1.0) / (total + 1.0)
        else:
            if clip == 0:
                return 0.0
            precision = clip / total
        log_precision_sum += math.log(precision) / MAX_NGRAM_ORDER
    bp = _brevity_penalty(stats.candidate_length, stats.reference_length)
    return 100.0 * bp * math.exp(log_precision_sum)


def sentence_bleu(candidate: Sentence, references) -> float:
    """Smoothed sentence-level BLEU-4 against one or more references.

    Exact matches score 100; candidates sharing no unigram with any
    reference score 0.
    """
    return _score_from_stats(bleu_stats(candidate, references), smooth=True)


def corpus_bleu(candidates, reference_sets) -> float:
    """Unsmoothed corpus BLEU-4 from pooled per-sentence statistics."""
    candidates = list(candidates)
    reference_sets = list(reference_sets)
    if len(candidates) != len(reference_sets):
        raise ValueError(
            f"{len(candidates)} candidates but {len(reference_sets)} reference sets"
        )
    if not candidates:
        raise ValueError("corpus BLEU needs at least one sentence")
    pooled = bleu_stats(candidates[0], reference_sets[0])
    for candidate, references in zip(candidates[1:], reference_sets[1:]):
        pooled = pooled + bleu_stats(candidate, references)
    return _score_from_stats(pooled, smooth=False)


def bleu_histogram(scores, bin_width: float) -> list[tuple[float, int]]:
    """Histogram of scores over [0, 100] with half-open bins; the final bin
    is closed at 100 so exact-match pseudo-references stay visible."""
    if bin_width <= 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    n_bins = math.ceil(100.0 / bin_width)
    counts = [0] * n_bins
    for score in scores:
        if not 0.0 <= score <= 100.0:
            raise ValueError(f"score {score} outside [0, 100]")
        idx = min(int(score // bin_width), n_bins - 1)
        counts[idx] += 1
    return [(i * bin_width, counts[i]) for i in range(n_bins)]


def write_rate_report(path, per_sentence, corpus_mean: float) -> None:
    """Write "pair_id<TAB>value" rows plus a trailing corpus-mean comment."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair_id, value in per_sentence:
            fh.write(f"{pair_id}\t{value:.6f}\n")
        fh.write(f"# corpus_mean\t{corpus_mean:.6f}\n")


def write_histogram(path, bins) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for bin_low, count in bins:
            fh.write(f"{bin_low:g}\t{count}\n")
