"""Replacement candidates for a masked position, plus the DELETE/SKIP options."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import rpc
from .text_core import MASK_TOKEN

logger = logging.getLogger(__name__)


class ProviderFailure(RuntimeError):
    pass


def clean_candidates(raw: Iterable[str], original_word: str, b: int,
                     mask_token: str = MASK_TOKEN) -> list[str]:
    """Trim, drop empties / the mask / the original word, dedupe, keep order, cap at b."""
    out: list[str] = []
    seen = set()
    if b <= 0:
        return out
    for cand in raw:
        if not isinstance(cand, str):
            continue
        cand = cand.strip()
        if not cand or cand == original_word or mask_token in cand or cand in seen:
            continue
        seen.add(cand)
        out.append(cand)
        if len(out) == b:
            break
    return out


class CandidateProvider:
    name = "provider"

    def top_candidates(self, text_with_mask: str, original_word: str, b: int) -> list[str]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def describe(self) -> dict:
        return {"type": type(self).__name__, "name": self.name}


class TableProvider(CandidateProvider):
    """Exact-match word lookup with a global fallback list."""

    name = "table"

    def __init__(self, lookup: Mapping[str, Sequence[str]], fallback: Sequence[str] = ()):
        self.lookup = {k: list(v) for k, v in lookup.items()}
        self.fallback = list(fallback)

    def top_candidates(self, text_with_mask, original_word, b):
        raw = self.lookup.get(original_word, self.fallback)
        return clean_candidates(raw, original_word, b)

    def describe(self):
        return {"type": "TableProvider", "entries": len(self.lookup), "fallback": len(self.fallback)}


def table_provider(lookup: Mapping[str, Sequence[str]], fallback: Sequence[str] = ()) -> TableProvider:
    return TableProvider(lookup, fallback)


class MlmProvider(CandidateProvider):
    """Adapter for a fill-mask model served over the ``/fill_mask`` RPC."""

    name = "mlm"
    route = "/fill_mask"

    def __init__(self, transport: rpc.Transport, cache: Optional[rpc.ResponseCache] = None):
        self.transport = transport
        self.cache = cache if cache is not None else rpc.ResponseCache()

    def top_candidates(self, text_with_mask, original_word, b):
        if b <= 0:
            return []
        # one spare slot for the original word, which the model often proposes
        payload = {"text": text_with_mask, "top_k": b + 1}
        data = self.cache.get("fill_mask", payload)
        if data is None:
            try:
                data = self.transport.call(self.route, payload)
            except rpc.TransportError as exc:
                raise ProviderFailure(str(exc)) from exc
            self.cache.put("fill_mask", payload, data)
        cands = data.get("candidates")
        if not isinstance(cands, list):
            raise ProviderFailure(f"{self.transport.describe()}: response lacks 'candidates'")
        return clean_candidates(cands, original_word, b)

    def close(self):
        self.transport.close()

    def describe(self):
        return {"type": "MlmProvider", "endpoint": self.transport.describe()}


def mlm_provider(endpoint_config: Mapping[str, Any]) -> MlmProvider:
    try:
        return MlmProvider(rpc.make_transport(endpoint_config))
    except rpc.TransportError as exc:
        raise ProviderFailure(str(exc)) from exc


@dataclass
class ExpansionSet:
    position: int
    substitutions: list[str]
    include_delete: bool = True
    include_skip: bool = True
    provider_error: Optional[str] = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.substitutions) + self.include_delete + self.include_skip


def expand_position(text_with_mask: str, original_word: str, position: int, b: int,
                    provider: CandidateProvider, include_skip: bool = True) -> ExpansionSet:
    """Ask ``provider`` once for substitutions at ``position``.

    A failing provider yields an empty substitution list; DELETE and SKIP
    are always kept so the search can continue.
    """
    if b <= 0:
        return ExpansionSet(position, [], True, include_skip)
    try:
        raw = provider.top_candidates(text_with_mask, original_word, b)
        subs = clean_candidates(raw, original_word, b)
        error = None
    except Exception as exc:
        logger.warning("candidate provider failed at position %d: %s", position, exc)
        subs, error = [], str(exc)
    return ExpansionSet(position, subs, True, include_skip, provider_error=error)
