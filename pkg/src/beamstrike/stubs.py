"""In-process RPC servers speaking the v1 wire format, for tests and offline demos.

One backend answers all four routes (``/predict_proba``, ``/fill_mask``,
``/tag``, ``/score``) and can be exposed over HTTP or stdio::

    python -m beamstrike.stubs --keywords terrible,awful --fail-on POISON
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterator, Optional

from .analysis.pos import RuleTagger, Tagger
from .candidates import CandidateProvider, TableProvider
from .rpc import SCHEMA_VERSION
from .similarity import TokenF1Similarity
from .text_core import MASK_TOKEN
from .victims import KeywordRuleVictim, Victim


class StubBackend:
    def __init__(self, victim: Optional[Victim] = None, provider: Optional[CandidateProvider] = None,
                 tagger: Optional[Tagger] = None, similarity=None, schema: str = SCHEMA_VERSION,
                 fail_on: Optional[str] = None):
        self.victim = victim or KeywordRuleVictim(["terrible"])
        self.provider = provider or TableProvider({}, fallback=["good", "fine", "nice"])
        self.tagger = tagger or RuleTagger()
        self.similarity = similarity or TokenF1Similarity()
        self.schema = schema
        self.fail_on = fail_on
        self.calls: dict[str, int] = {}
        self._lock = threading.Lock()

    def _poisoned(self, *texts: str) -> bool:
        return self.fail_on is not None and any(self.fail_on in t for t in texts)

    def handle(self, route: str, payload: dict) -> dict:
        with self._lock:
            self.calls[route] = self.calls.get(route, 0) + 1
        try:
            body = self._dispatch(route, payload)
        except (KeyError, TypeError, ValueError) as exc:
            return {"error": f"bad request: {exc}", "schema": self.schema}
        if "error" not in body:
            body["schema"] = self.schema
        return body

    def _dispatch(self, route, payload):
        if route == "/predict_proba":
            texts = payload["texts"]
            if self._poisoned(*texts):
                return {"error": "victim refused input"}
            return {"probabilities": self.victim.predict_proba(texts).tolist()}
        if route == "/fill_mask":
            text = payload["text"]
            if self._poisoned(text):
                return {"error": "provider refused input"}
            top_k = int(payload.get("top_k", 10))
            # the table provider keys on the original word, which the mask hides; use the fallback list
            return {"candidates": self.provider.top_candidates(text, MASK_TOKEN, top_k)}
        if route == "/tag":
            pairs = self.tagger.tag(payload["text"])
            return {"tokens": [t for t, _ in pairs], "tags": [g for _, g in pairs]}
        if route == "/score":
            refs, cands = payload["references"], payload["candidates"]
            if len(refs) != len(cands):
                raise ValueError("references and candidates differ in length")
            return {"scores": [self.similarity.score(r, c) for r, c in zip(refs, cands)]}
        return {"error": f"unknown route {route}"}


def _handler(backend: StubBackend):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                payload = None
            if isinstance(payload, dict):
                body = backend.handle(self.path, payload)
            else:
                body = {"error": "malformed JSON", "schema": backend.schema}
            data = json.dumps(body).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    return Handler


@contextmanager
def serve_http(backend: StubBackend, host: str = "127.0.0.1", port: int = 0) -> Iterator[str]:
    """Serve ``backend`` on a background thread; yields the base URL."""
    server = ThreadingHTTPServer((host, port), _handler(backend))
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://{host}:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()
        thread.join()


def serve_stdio(backend: StubBackend, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            payload = None
        if isinstance(payload, dict):
            body = backend.handle(str(payload.pop("route", "")), payload)
        else:
            body = {"error": "malformed JSON", "schema": backend.schema}
        stdout.write(json.dumps(body) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m beamstrike.stubs")
    parser.add_argument("--keywords", default="terrible", help="comma-separated trigger words")
    parser.add_argument("--candidates", default="good,fine,nice", help="comma-separated fill-mask answers")
    parser.add_argument("--fail-on", default=None, help="reject any request containing this substring")
    parser.add_argument("--schema", default=SCHEMA_VERSION)
    parser.add_argument("--http", type=int, metavar="PORT", help="serve HTTP on PORT instead of stdio")
    args = parser.parse_args(argv)
    backend = StubBackend(
        victim=KeywordRuleVictim([k for k in args.keywords.split(",") if k]),
        provider=TableProvider({}, fallback=[c for c in args.candidates.split(",") if c]),
        schema=args.schema,
        fail_on=args.fail_on,
    )
    if args.http is None:
        serve_stdio(backend)
        return 0
    with serve_http(backend, port=args.http) as url:
        print(url, flush=True)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
