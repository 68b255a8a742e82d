"""Talking to an external translation model over the wire protocol.

Any process that reads newline-delimited JSON requests on stdin and
writes one response per line can serve as the model. The reference stub
shipped with the package echoes the observed source, which makes it easy
to watch the protocol work and to see how failures are contained.
"""

import sys

from refsmith import (
    ExternalModelClient,
    GenerationRun,
    ModelQuery,
    SentencePair,
    generate_pseudo_refs,
    greedy_waitk_decode,
)

STUB = f"{sys.executable} -m refsmith.stub_model"

## One request, by hand. The stub's answer for target step 1 is the first
## observed source word.

client = ExternalModelClient.spawn(STUB, timeout=10.0)
response = client.query(ModelQuery(source_prefix=("hello", "world"),
                                   target_prefix=(), n_best=1))
print("request : source_prefix=('hello', 'world'), target_prefix=()")
print(f"response: {response.candidates}")

## A whole decode runs the schedule for us: under wait-2 the prefix grows
## one word per step, and the echo stub reproduces the source.

source = ("the", "quick", "brown", "fox")
output = greedy_waitk_decode(source, 2, client)
print(f"\nwait-2 decode over the wire: {' '.join(output)}")
client.close()

## Fault containment: this stub corrupts its fifth response. The affected
## sentence lands in the run manifest; every other sentence still decodes.

corpus = [
    SentencePair(i, ("a", "b", "c"), ("A", "B", "C")) for i in range(1, 11)
]
run = GenerationRun(k=1, beam_size=1, model_id="external:stub")
factory = lambda: ExternalModelClient.spawn(
    f"{STUB} --malform-after 5", timeout=10.0)
scored = generate_pseudo_refs(corpus, run, factory)

print(f"\nfaulty model: {len(scored)} sentences decoded, "
      f"{len(run.failures)} recorded failures")
for pair_id, reason in sorted(run.failures.items()):
    print(f"  pair {pair_id}: {reason[:70]}...")
