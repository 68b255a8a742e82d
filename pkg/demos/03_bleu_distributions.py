"""How pseudo-reference quality responds to the wait parameter.

A context-hungry noisy model translates each position correctly only
once it has seen enough source lookahead. Decoding the same corpus under
growing k therefore raises sentence BLEU, and with full context a solid
share of outputs reproduces the reference exactly (the mass in the
topmost histogram bin).
"""

import random

from refsmith import (
    GenerationRun,
    NoisyLexicalModel,
    SentencePair,
    TranslationTable,
    bleu_histogram,
    generate_pseudo_refs,
)

rng = random.Random(99)
src_vocab = [f"s{i:02d}" for i in range(30)]
lexicon = {w: w.upper() for w in src_vocab}

corpus = []
for i in range(1, 2001):
    words = rng.sample(src_vocab, rng.randint(3, 10))
    corpus.append(SentencePair(id=i, source=tuple(words),
                               target=tuple(lexicon[w] for w in words)))

table = TranslationTable(probs={w: {lexicon[w]: 1.0} for w in src_vocab})
model = NoisyLexicalModel(table=table, max_context_need=8, seed=5)

max_len = max(len(p.source) for p in corpus)
print(f"{len(corpus)} sentences, lengths up to {max_len}\n")

for k in (1, 3, 5, 9, max_len):
    run = GenerationRun(k=k, beam_size=5)
    scored = generate_pseudo_refs(corpus, run, lambda: model)
    values = [s.bleu for s in scored]
    mean = sum(values) / len(values)
    label = f"k={k}" if k < max_len else f"k={k} (full sentence)"
    print(f"{label:24s} mean BLEU {mean:6.2f}")
    for low, count in bleu_histogram(values, 20.0):
        bar = "#" * round(60 * count / len(values))
        high = "100]" if low == 80.0 else f"{low + 20:.0f})"
        print(f"    [{low:5.1f}, {high:>5s} {count:5d} {bar}")
    print()
