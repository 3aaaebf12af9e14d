"""Per-sample and aggregate BODEGA scores.

BODEGA = confusion x semantic x character, computed per sample and then
averaged. Semantic similarity is pluggable: a learned scorer served over RPC
or the deterministic token-F1 fallback bundled here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .beam import AttackOutcome
from .similarity import RemoteSimilarity, SimilarityUnavailable, TokenF1Similarity, remote_similarity  # noqa: F401
from .text_core import TokenizedDocument, levenshtein
from .victims import QueryLedger, Victim, VictimUnavailable, predict_proba

logger = logging.getLogger(__name__)


class NoValidRecords(ValueError):
    pass


def character_score(original: str, adversarial: str) -> float:
    """1 - Levenshtein distance normalized by the longer string's length."""
    longest = max(len(original), len(adversarial))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(original, adversarial) / longest


@dataclass
class EvaluationRecord:
    sample_id: str
    confusion: int
    semantic: float
    character: float
    bodega: float
    wsr_percent: float
    queries: int
    success_edits: int
    valid: bool = True
    wall_time_s: float = 0.0
    task: str = ""
    victim: str = ""
    note: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_sample(doc: TokenizedDocument, outcome: AttackOutcome, victim: Victim, similarity,
                    ledger: Optional[QueryLedger] = None, task: str = "", victim_name: str = "") -> EvaluationRecord:
    """Re-query the victim on the adversarial text and score the sample."""
    modifications = outcome.modifications
    common = dict(
        sample_id=doc.id,
        wsr_percent=100.0 * modifications / len(doc.tokens),
        queries=int(outcome.queries.get("total", 0)),
        success_edits=modifications,
        wall_time_s=outcome.wall_time_s,
        task=task,
        victim=victim_name,
    )
    character = character_score(doc.raw_text, outcome.adversarial_text)
    try:
        probs = predict_proba(victim, [outcome.adversarial_text], ledger, phase="verification")
        semantic = min(1.0, max(0.0, float(similarity.score(doc.raw_text, outcome.adversarial_text))))
    except (VictimUnavailable, SimilarityUnavailable) as exc:
        logger.warning("sample %s could not be evaluated: %s", doc.id, exc)
        return EvaluationRecord(confusion=0, semantic=0.0, character=character, bodega=0.0,
                                valid=False, note=f"{type(exc).__name__}: {exc}", **common)
    confusion = int(int(np.argmax(probs[0])) != doc.gold_label)
    return EvaluationRecord(
        confusion=confusion,
        semantic=semantic,
        character=character,
        bodega=confusion * semantic * character,
        **common,
    )


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def aggregate(records: Sequence[EvaluationRecord]) -> dict:
    """Means over valid records, keys in report-table order (B., con, sem, char, Q.).

    ``bodega`` averages the per-sample products, which is generally not the
    product of the averaged components. ``*_success_only`` variants average
    over samples whose attack succeeded.
    """
    valid = [r for r in records if r.valid]
    if not valid:
        raise NoValidRecords("no valid evaluation records to aggregate")
    succ = [r for r in valid if r.confusion == 1]
    summary = {
        "bodega": _mean([r.bodega for r in valid]),
        "confusion": _mean([r.confusion for r in valid]),
        "semantic": _mean([r.semantic for r in valid]),
        "character": _mean([r.character for r in valid]),
        "queries": _mean([r.queries for r in valid]),
        "bodega_mean": _mean([r.bodega for r in valid]),
        "bodega_mean_success_only": _mean([r.bodega for r in succ]),
        "semantic_success_only": _mean([r.semantic for r in succ]),
        "character_success_only": _mean([r.character for r in succ]),
        "wsr_percent": _mean([r.wsr_percent for r in valid]),
        "wsr_percent_success_only": _mean([r.wsr_percent for r in succ]),
        "wall_time_s": _mean([r.wall_time_s for r in valid]),
        "samples": len(valid),
        "successes": len(succ),
        "invalid": len(records) - len(valid),
    }
    return summary


TABLE_COLUMNS = [("B.", "bodega"), ("con", "confusion"), ("sem", "semantic"), ("char", "character"), ("Q.", "queries")]


def format_summary(summary: Mapping[str, Any]) -> str:
    header = " ".join(f"{label:>8}" for label, _ in TABLE_COLUMNS)
    cells = []
    for label, key in TABLE_COLUMNS:
        value = summary.get(key)
        if value is None or (isinstance(value, float) and math.isnan(value)):
            cells.append(f"{'-':>8}")
        elif key == "queries":
            cells.append(f"{value:>8.1f}")
        else:
            cells.append(f"{value:>8.4f}")
    return header + "\n" + " ".join(cells)
