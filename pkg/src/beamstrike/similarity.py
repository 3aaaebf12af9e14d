"""Semantic similarity scorers: remote learned scorer and token-F1 fallback."""

from __future__ import annotations

from collections import Counter
from typing import Any, Mapping

from . import rpc


class SimilarityUnavailable(RuntimeError):
    pass


class TokenF1Similarity:
    """Multiset F1 over whitespace tokens. score(x, x) == 1, score(x, "") == 0."""

    name = "token_f1"

    def score(self, original: str, modified: str) -> float:
        a, b = original.split(), modified.split()
        if not a and not b:
            return 1.0
        if not a or not b:
            return 0.0
        overlap = sum((Counter(a) & Counter(b)).values())
        if overlap == 0:
            return 0.0
        precision = overlap / len(b)
        recall = overlap / len(a)
        return 2 * precision * recall / (precision + recall)

    def describe(self):
        return {"type": "TokenF1Similarity"}


class RemoteSimilarity:
    """Learned similarity (e.g. BLEURT) over the ``/score`` RPC.

    Request ``{"references": [...], "candidates": [...]}``, response
    ``{"scores": [...]}``. Scores are clamped to [0, 1].
    """

    name = "remote_similarity"
    route = "/score"

    def __init__(self, transport: rpc.Transport):
        self.transport = transport

    def score(self, original, modified):
        try:
            data = self.transport.call(self.route, {"references": [original], "candidates": [modified]})
            value = float(data["scores"][0])
        except (rpc.TransportError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise SimilarityUnavailable(str(exc)) from exc
        return min(1.0, max(0.0, value))

    def close(self):
        self.transport.close()

    def describe(self):
        return {"type": "RemoteSimilarity", "endpoint": self.transport.describe()}


def remote_similarity(endpoint_config: Mapping[str, Any]) -> RemoteSimilarity:
    try:
        return RemoteSimilarity(rpc.make_transport(endpoint_config))
    except rpc.TransportError as exc:
        raise SimilarityUnavailable(str(exc)) from exc
