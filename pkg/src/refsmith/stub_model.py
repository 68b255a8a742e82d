"""Reference external-model stub speaking the refsmith-model v1 protocol.

Run as ``python -m refsmith.stub_model``. By default it answers each
request by echoing the source word at the current target step (END once
the observed prefix is used up), which makes decoded output equal the
observed source and gives tests a fully predictable remote model.

Fault injection flags exist to exercise client error paths:

  --malform-after N   the N-th response (per process) is malformed
  --malform-kind K    garbage | unsorted | empty | positive | double-end
  --truncate-after N  exit without answering the N-th request
  --hang-after N      sleep forever instead of answering the N-th request
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import time


def _echo_response(request: dict) -> dict:
    source_prefix = request.get("source_prefix", [])
    target_prefix = request.get("target_prefix", [])
    t = len(target_prefix) + 1
    if t > len(source_prefix):
        candidates = [{"token": "</s>", "logprob": 0.0}]
    else:
        candidates = [{"token": source_prefix[t - 1], "logprob": 0.0}]
    return {"v": 1, "candidates": candidates}


def _table_responder(table_path: str):
    from .aligner import load_table
    from .decoder import LexicalModel, ModelQuery

    model = LexicalModel(table=load_table(table_path))

    def respond(request: dict) -> dict:
        query = ModelQuery(
            source_prefix=tuple(request.get("source_prefix", [])),
            target_prefix=tuple(request.get("target_prefix", [])),
            n_best=int(request.get("n_best", 1)),
        )
        response = model.query(query)
        return {
            "v": 1,
            "candidates": [
                {"token": c.token, "logprob": c.logprob}
                for c in response.candidates
            ],
        }

    return respond


_MALFORMED_LINES = {
    "garbage": "this is not json {{{",
    "unsorted": json.dumps({"v": 1, "candidates": [
        {"token": "a", "logprob": -2.0}, {"token": "b", "logprob": -0.5}]}),
    "empty": json.dumps({"v": 1, "candidates": []}),
    "positive": json.dumps({"v": 1, "candidates": [
        {"token": "a", "logprob": 0.5}]}),
    "double-end": json.dumps({"v": 1, "candidates": [
        {"token": "</s>", "logprob": -0.1}, {"token": "</s>", "logprob": -0.2}]}),
}


def serve(lines_in, write_line, args) -> None:
    respond = _table_responder(args.table) if args.table else _echo_response
    served = 0
    for line in lines_in:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        served += 1
        if args.truncate_after and served == args.truncate_after:
            return
        if args.hang_after and served == args.hang_after:
            time.sleep(3600)
        if args.malform_after and served == args.malform_after:
            write_line(_MALFORMED_LINES[args.malform_kind])
            continue
        write_line(json.dumps(respond(request), ensure_ascii=False))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="refsmith-stub-model",
        description="Reference stub for the refsmith-model v1 wire protocol.",
    )
    parser.add_argument("--table", help="serve a saved translation table "
                        "instead of echoing the source")
    parser.add_argument("--tcp", type=int, metavar="PORT",
                        help="serve one TCP connection on PORT instead of stdio")
    parser.add_argument("--malform-after", type=int, default=0, metavar="N")
    parser.add_argument("--malform-kind", default="garbage",
                        choices=sorted(_MALFORMED_LINES))
    parser.add_argument("--truncate-after", type=int, default=0, metavar="N")
    parser.add_argument("--hang-after", type=int, default=0, metavar="N")
    args = parser.parse_args(argv)

    if args.tcp:
        server = socket.create_server(("127.0.0.1", args.tcp))
        conn, _ = server.accept()
        reader = conn.makefile("r", encoding="utf-8")

        def write_line(line: str) -> None:
            conn.sendall(line.encode("utf-8") + b"\n")

        try:
            serve(reader, write_line, args)
        finally:
            conn.close()
            server.close()
        return 0

    def write_line(line: str) -> None:
        sys.stdout.write(line + "\n")
        sys.stdout.flush()

    serve(sys.stdin, write_line, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
