"""Measuring anticipation and hallucination through word alignments.

A target position is k-anticipated when it aligns to a source word the
wait-k schedule has not yet read (source index s >= t + k); a hypothesis
position is a hallucination when it aligns to nothing at all.
"""

from refsmith import (
    EmConfig,
    SentencePair,
    anticipation_rate,
    hallucination_rate,
    k_anticipated,
    parse_alignment_line,
    train_model1,
    viterbi_align,
)

## A worked example: 7 source words, 8 target words, and an alignment in
## the 0-indexed on-disk format that standard aligner tools emit. The
## target translates the tail of the source up front, which is exactly
## the long-distance reordering that forces anticipation.

pair = SentencePair(
    id=1,
    source=("x1", "x2", "x3", "x4", "x5", "x6", "x7"),
    target=("y1", "y2", "y3", "y4", "y5", "y6", "y7", "y8"),
)
alignment = parse_alignment_line("0-7 2-6 3-0 3-1 4-2 5-3 6-4",
                                 len(pair.source), len(pair.target))
print("alignment links (1-indexed):", sorted(alignment))

for t in range(1, len(pair.target) + 1):
    mark = "anticipated" if k_anticipated(t, alignment, 1) else "ok"
    links = sorted(s for s, t2 in alignment if t2 == t)
    print(f"  y{t}: aligned to source {links or '-'} -> {mark}")

print(f"AR_1 = {anticipation_rate(pair, alignment, 1)}  (5 of 8 positions)")

## Anticipation falls as the wait grows: with a large enough k every
## aligned source word has already been read.

print("\nAR_k across k:")
for k in range(1, 9):
    print(f"  k={k}: AR_k = {anticipation_rate(pair, alignment, k):.3f}")

## Hallucination: align hypotheses against their sources with a lexical
## table and count the positions that align nowhere. The invented token
## below never co-occurs with anything, so it aligns to NULL.

corpus = [
    SentencePair(1, ("der", "hund", "bellt"), ("the", "dog", "barks")),
    SentencePair(2, ("der", "hund",), ("the", "dog")),
    SentencePair(3, ("hund", "bellt"), ("dog", "barks")),
] * 10
table = train_model1(corpus, EmConfig(iterations=5))

hypothesis = ("the", "dog", "barks", "loudly")
hyp_pair = SentencePair(1, ("der", "hund", "bellt"), hypothesis)
links = viterbi_align(hyp_pair, table)
print(f"\nhypothesis: {' '.join(hypothesis)}")
print(f"viterbi links: {sorted(links)}")
print(f"HR = {hallucination_rate(hypothesis, links)}  "
      f"('loudly' aligns to nothing)")
