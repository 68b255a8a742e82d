"""Parallel corpus, alignment, and score table I/O.

All in-memory positions are 1-indexed; alignment files on disk use the
0-indexed "i-j" Pharaoh convention emitted by standard word aligners.
Conversion happens exactly at the I/O boundary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

Token = str
Sentence = tuple[Token, ...]
Alignment = frozenset[tuple[int, int]]

_LINK_RE = re.compile(r"^(\d+)-(\d+)$")


class CorpusFormatError(ValueError):
    """A corpus, alignment, or score file violates its format contract."""


@dataclass(frozen=True)
class SentencePair:
    """One source/target sentence pair; ids are 1-based corpus ordinals."""

    id: int
    source: Sentence
    target: Sentence


@dataclass(frozen=True)
class ScoredSentence:
    """A generated pseudo-target with its sentence BLEU against the original."""

    pair_id: int
    pseudo_target: Sentence
    bleu: float


def make_sentence(tokens) -> Sentence:
    """Validate and freeze a token sequence into a Sentence.

    Tokens must be non-empty and contain no whitespace; sentences must
    contain at least one token.
    """
    toks = tuple(tokens)
    if not toks:
        raise CorpusFormatError("sentence must contain at least one token")
    for tok in toks:
        if not tok:
            raise CorpusFormatError("empty token")
        if any(ch.isspace() for ch in tok):
            raise CorpusFormatError(f"token contains whitespace: {tok!r}")
    return toks


def parse_sentence_line(line: str, *, path: str = "<string>", lineno: int = 0) -> Sentence:
    """Split one corpus line into tokens, collapsing whitespace runs."""
    tokens = line.split()
    if not tokens:
        raise CorpusFormatError(f"{path}: empty line at line {lineno}")
    return tuple(tokens)


def _read_sentences(path) -> list[Sentence]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            sentences.append(parse_sentence_line(line, path=str(path), lineno=lineno))
    return sentences


def load_parallel_corpus(source_path, target_path) -> list[SentencePair]:
    """Load a parallel corpus from two one-sentence-per-line UTF-8 files.

    Both files must have the same number of lines; empty lines are
    rejected because every downstream rate divides by sentence length.
    """
    sources = _read_sentences(source_path)
    targets = _read_sentences(target_path)
    if len(sources) != len(targets):
        raise CorpusFormatError(
            f"line-count mismatch: {source_path} has {len(sources)} lines, "
            f"{target_path} has {len(targets)}"
        )
    return [
        SentencePair(id=i, source=src, target=tgt)
        for i, (src, tgt) in enumerate(zip(sources, targets), start=1)
    ]


def write_parallel_corpus(pairs, source_path, target_path) -> None:
    """Write pairs back to disk; round-trips with load_parallel_corpus."""
    with open(source_path, "w", encoding="utf-8", newline="\n") as src_fh, open(
        target_path, "w", encoding="utf-8", newline="\n"
    ) as tgt_fh:
        for pair in pairs:
            src_fh.write(" ".join(pair.source) + "\n")
            tgt_fh.write(" ".join(pair.target) + "\n")


def validate_alignment(links, src_len: int, tgt_len: int) -> Alignment:
    """Freeze (s, t) links into an Alignment, checking 1-based ranges."""
    frozen = frozenset(links)
    for s, t in frozen:
        if not 1 <= s <= src_len:
            raise CorpusFormatError(
                f"source index {s} out of range 1..{src_len}"
            )
        if not 1 <= t <= tgt_len:
            raise CorpusFormatError(
                f"target index {t} out of range 1..{tgt_len}"
            )
    return frozen


def parse_alignment_line(line: str, src_len: int, tgt_len: int) -> Alignment:
    """Parse one 0-indexed "i-j" alignment line into 1-indexed links.

    Duplicate links collapse (set semantics). Raises CorpusFormatError on
    malformed fields (with the character offset) or out-of-range indices;
    never returns partial results.
    """
    links = set()
    for match in re.finditer(r"\S+", line):
        field = match.group()
        parsed = _LINK_RE.match(field)
        if parsed is None:
            raise CorpusFormatError(
                f"malformed alignment pair {field!r} at offset {match.start()}"
            )
        i, j = int(parsed.group(1)), int(parsed.group(2))
        if i >= src_len:
            raise CorpusFormatError(
                f"source index {i} out of range for length {src_len}"
            )
        if j >= tgt_len:
            raise CorpusFormatError(
                f"target index {j} out of range for length {tgt_len}"
            )
        links.add((i + 1, j + 1))
    return frozenset(links)


def render_alignment_line(alignment: Alignment) -> str:
    """Render links as sorted 0-indexed "i-j" pairs (Pharaoh convention)."""
    return " ".join(f"{s - 1}-{t - 1}" for s, t in sorted(alignment))


def load_alignment_file(path, pairs) -> list[Alignment]:
    """Read one alignment line per sentence pair, validating ranges."""
    pairs = list(pairs)
    alignments = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) != len(pairs):
        raise CorpusFormatError(
            f"{path}: {len(lines)} alignment lines for {len(pairs)} sentence pairs"
        )
    for lineno, (line, pair) in enumerate(zip(lines, pairs), start=1):
        try:
            alignments.append(
                parse_alignment_line(line, len(pair.source), len(pair.target))
            )
        except CorpusFormatError as exc:
            raise CorpusFormatError(f"{path}: line {lineno}: {exc}") from None
    return alignments


def write_alignment_file(path, alignments) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for alignment in alignments:
            fh.write(render_alignment_line(alignment) + "\n")


def load_score_table(path) -> list[ScoredSentence]:
    """Read a tab-separated "pair_id<TAB>bleu<TAB>tokens" score table."""
    scored = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                raise CorpusFormatError(f"{path}: empty line at line {lineno}")
            fields = line.split("\t")
            if len(fields) != 3:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: expected 3 tab-separated fields, "
                    f"got {len(fields)}"
                )
            try:
                pair_id = int(fields[0])
                bleu = float(fields[1])
            except ValueError:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: bad pair id or BLEU value"
                ) from None
            if pair_id < 1:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: pair id must be >= 1, got {pair_id}"
                )
            if not 0.0 <= bleu <= 100.0:
                raise CorpusFormatError(
                    f"{path}: line {lineno}: BLEU {bleu} outside [0, 100]"
                )
            tokens = parse_sentence_line(fields[2], path=str(path), lineno=lineno)
            scored.append(ScoredSentence(pair_id=pair_id, pseudo_target=tokens, bleu=bleu))
    return scored


def write_score_table(path, scored) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in scored:
            fh.write(
                f"{item.pair_id}\t{item.bleu:.6f}\t{' '.join(item.pseudo_target)}\n"
            )
