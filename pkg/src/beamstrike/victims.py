"""Victim classifiers: the grey-box contract, query accounting, built-ins.

A victim exposes class probabilities for a batch of texts. All attack code
goes through :func:`predict_proba`, which validates the vectors and charges
the :class:`QueryLedger` one query per text.
"""

from __future__ import annotations

import logging
import math
import threading
from collections import Counter
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import rpc
from .text_core import MASK_TOKEN

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-6


class VictimUnavailable(RuntimeError):
    pass


class Victim:
    """Base class for victims. Subclasses implement :meth:`predict_proba`."""

    num_classes: int = 2
    name: str = "victim"

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        # np.argmax breaks ties toward the lower class index
        return np.argmax(self.predict_proba(texts), axis=1)

    def close(self) -> None:
        pass

    def describe(self) -> dict:
        return {"type": type(self).__name__, "name": self.name}


class QueryLedger:
    """Thread-safe count of texts sent to a victim, split by phase."""

    def __init__(self):
        self._lock = threading.Lock()
        self.per_phase: Counter = Counter()

    @property
    def total_queries(self) -> int:
        with self._lock:
            return sum(self.per_phase.values())

    def charge(self, phase: str, n: int) -> None:
        if n < 0:
            raise ValueError("query count cannot be negative")
        with self._lock:
            self.per_phase[phase] += n

    def merge(self, other: "QueryLedger") -> None:
        for phase, n in other.snapshot()["per_phase"].items():
            self.charge(phase, n)

    def snapshot(self) -> dict:
        with self._lock:
            per_phase = {k: self.per_phase[k] for k in sorted(self.per_phase)}
        return {"total": sum(per_phase.values()), "per_phase": per_phase}


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


class LinearBagVictim(Victim):
    """Logistic bag-of-words model over whitespace tokens.

    P(class 1) = sigmoid(bias + sum of coefficients of the tokens present,
    counted with multiplicity). Unknown tokens and the mask token weigh zero.
    """

    def __init__(self, coefficients: Mapping[str, float], bias: float = 0.0,
                 mask_token: str = MASK_TOKEN, name: str = "linear_bag"):
        self.coefficients = dict(coefficients)
        self.bias = float(bias)
        self.mask_token = mask_token
        self.name = name

    def logit(self, text: str) -> float:
        total = self.bias
        for word in text.split():
            if word != self.mask_token:
                total += self.coefficients.get(word, 0.0)
        return total

    def predict_proba(self, texts):
        out = np.empty((len(texts), 2))
        for i, text in enumerate(texts):
            p1 = _sigmoid(self.logit(text))
            out[i, 0] = 1.0 - p1
            out[i, 1] = p1
        return out

    def describe(self):
        return {"type": "LinearBagVictim", "name": self.name, "bias": self.bias,
                "vocabulary_size": len(self.coefficients)}


class KeywordRuleVictim(Victim):
    """Predicts class 1 with probability ``confidence`` whenever any trigger
    word is present, otherwise class 0 with the same confidence.

    Each additional trigger occurrence nudges the class-1 probability up by
    ``step`` so beam search can tell partial progress apart.
    """

    def __init__(self, triggers: Iterable[str], confidence: float = 0.9,
                 step: float = 0.01, case_sensitive: bool = False, name: str = "keyword_rule"):
        if not 0.5 < confidence < 1.0:
            raise ValueError("confidence must lie in (0.5, 1)")
        self.case_sensitive = case_sensitive
        self.triggers = {t if case_sensitive else t.lower() for t in triggers}
        self.confidence = confidence
        self.step = step
        self.name = name

    def hits(self, text: str) -> int:
        words = text.split() if self.case_sensitive else text.lower().split()
        return sum(w in self.triggers for w in words)

    def predict_proba(self, texts):
        out = np.empty((len(texts), 2))
        for i, text in enumerate(texts):
            n = self.hits(text)
            if n:
                p1 = min(self.confidence + self.step * (n - 1), 1.0 - 1e-9)
            else:
                p1 = 1.0 - self.confidence
            out[i] = (1.0 - p1, p1)
        return out

    def describe(self):
        return {"type": "KeywordRuleVictim", "name": self.name, "triggers": sorted(self.triggers)}


class ConstantVictim(Victim):
    """Returns the same probability vector for every input."""

    def __init__(self, probabilities: Sequence[float] = (0.1, 0.9), name: str = "constant"):
        self.probabilities = np.asarray(probabilities, dtype=float)
        self.num_classes = len(self.probabilities)
        self.name = name
        _check_vectors(self.probabilities[None, :], 1, self.num_classes)

    def predict_proba(self, texts):
        return np.tile(self.probabilities, (len(texts), 1))

    def describe(self):
        return {"type": "ConstantVictim", "name": self.name,
                "probabilities": self.probabilities.tolist()}


class RemoteVictim(Victim):
    """Adapter for a victim served over the ``/predict_proba`` RPC."""

    route = "/predict_proba"

    def __init__(self, transport: rpc.Transport, num_classes: int = 2, name: str = "remote"):
        self.transport = transport
        self.num_classes = num_classes
        self.name = name

    def predict_proba(self, texts):
        try:
            data = self.transport.call(self.route, {"texts": list(texts)})
        except rpc.TransportError as exc:
            raise VictimUnavailable(str(exc)) from exc
        probs = data.get("probabilities")
        if not isinstance(probs, list):
            raise VictimUnavailable(f"{self.transport.describe()}: response lacks 'probabilities'")
        try:
            arr = np.asarray(probs, dtype=float)
        except (TypeError, ValueError) as exc:
            raise VictimUnavailable(f"{self.transport.describe()}: non-numeric probabilities") from exc
        try:
            _check_vectors(arr, len(texts), self.num_classes)
        except ValueError as exc:
            raise VictimUnavailable(f"{self.transport.describe()}: {exc}") from exc
        return arr

    def close(self):
        self.transport.close()

    def describe(self):
        return {"type": "RemoteVictim", "name": self.name, "endpoint": self.transport.describe()}


def _check_vectors(arr: np.ndarray, n: int, num_classes: int) -> None:
    if arr.ndim != 2 or arr.shape != (n, num_classes):
        raise ValueError(f"expected probability array of shape ({n}, {num_classes}), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("probabilities must be finite and non-negative")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROB_TOLERANCE):
        raise ValueError(f"probability vectors must sum to 1, got {sums.tolist()}")


def predict_proba(victim: Victim, texts: Sequence[str], ledger: Optional[QueryLedger] = None,
                  phase: str = "expansion") -> np.ndarray:
    """Score ``texts`` and charge ``ledger`` one query per text under ``phase``."""
    if not texts:
        raise ValueError("texts must be non-empty")
    try:
        probs = victim.predict_proba(list(texts))
    except VictimUnavailable:
        raise
    except Exception as exc:
        raise VictimUnavailable(f"{victim.name}: {exc}") from exc
    probs = np.asarray(probs, dtype=float)
    try:
        _check_vectors(probs, len(texts), victim.num_classes)
    except ValueError as exc:
        raise VictimUnavailable(f"{victim.name}: {exc}") from exc
    if ledger is not None:
        ledger.charge(phase, len(texts))
    return probs


def load_external_victim(endpoint_config: Mapping[str, Any]) -> RemoteVictim:
    """Connect to an external victim and run one health-check probe."""
    try:
        transport = rpc.make_transport(endpoint_config)
    except rpc.SchemaMismatch as exc:
        raise VictimUnavailable(f"schema mismatch: {exc}") from exc
    except rpc.TransportError as exc:
        raise VictimUnavailable(str(exc)) from exc
    victim = RemoteVictim(
        transport,
        num_classes=int(endpoint_config.get("num_classes", 2)),
        name=str(endpoint_config.get("name", "remote")),
    )
    try:
        victim.predict_proba(["health check"])
    except VictimUnavailable as exc:
        transport.close()
        cause = exc.__cause__
        if isinstance(cause, rpc.SchemaMismatch):
            raise VictimUnavailable(f"schema mismatch: {cause}") from cause
        raise
    logger.debug("victim %s passed health check", transport.describe())
    return victim
