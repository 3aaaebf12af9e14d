"""Beam search over word substitutions, deletions and skips.

The root of the search tree is the unedited text. Every depth expands each
retained node at one (or, under ``FREE_ORDER``, every) target position,
scores all children with the victim in one batch, and keeps the ``k``
children with the lowest gold-class probability. Retained children that the
victim misclassifies are collected as hypotheses; once ``h`` distinct texts
are collected the hypothesis closest to the original wins.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .candidates import CandidateProvider, ProviderFailure, expand_position
from .importance import ImportanceError, ImportanceMethod, ImportanceRanking, LimeConfig, rank
from .similarity import SimilarityUnavailable
from .text_core import Edit, EditKind, TokenizedDocument, mask_position, render
from .victims import QueryLedger, Victim, VictimUnavailable, predict_proba

logger = logging.getLogger(__name__)

DEFAULT_MAX_QUERIES = 20_000


class ConfigInvalid(ValueError):
    pass


class EmptySuccessSet(ValueError):
    pass


class ExpansionPolicy(str, enum.Enum):
    FIXED_ORDER = "FIXED_ORDER"
    FREE_ORDER = "FREE_ORDER"


@dataclass
class AttackConfig:
    beam_size_k: int = 10
    branching_b: int = 10
    hypothesis_count_h: int = 10
    importance_method: ImportanceMethod = ImportanceMethod.LOGIT
    max_depth: Optional[int] = None
    max_queries: int = DEFAULT_MAX_QUERIES
    expansion_policy: ExpansionPolicy = ExpansionPolicy.FIXED_ORDER
    lime: LimeConfig = field(default_factory=LimeConfig)

    def __post_init__(self):
        self.importance_method = ImportanceMethod(self.importance_method)
        self.expansion_policy = ExpansionPolicy(self.expansion_policy)

    def validate(self) -> "AttackConfig":
        if self.beam_size_k < 1:
            raise ConfigInvalid("beam_size_k must be >= 1")
        if self.branching_b < 0:
            raise ConfigInvalid("branching_b must be >= 0")
        if self.hypothesis_count_h < 1:
            raise ConfigInvalid("hypothesis_count_h must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigInvalid("max_depth must be >= 1 when given")
        floor = self.beam_size_k * (self.branching_b + 2)
        if self.max_queries < floor:
            raise ConfigInvalid(f"max_queries={self.max_queries} is below k x (b + 2) = {floor}")
        if self.lime.num_samples < 1:
            raise ConfigInvalid("lime num_samples must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["importance_method"] = self.importance_method.value
        d["expansion_policy"] = self.expansion_policy.value
        return d


@dataclass(frozen=True)
class BeamNode:
    edits: tuple[Edit, ...]
    text: str
    gold_prob: float
    proba: tuple[float, ...]
    depth: int
    consumed_positions: frozenset
    surfaces: tuple = field(repr=False, compare=False, default=())
    modifications: int = 0
    expansion_index: int = 0

    def predicted(self) -> int:
        return int(np.argmax(self.proba))


@dataclass
class Hypothesis:
    text: str
    gold_prob: float
    similarity: Optional[float]
    edits: list[Edit]
    depth: int

    @property
    def modifications(self) -> int:
        return sum(e.is_modification for e in self.edits)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "gold_prob": self.gold_prob,
            "similarity": self.similarity,
            "depth": self.depth,
            "edits": [e.to_dict() for e in self.edits],
        }


@dataclass
class AttackOutcome:
    sample_id: str
    success: bool
    original_text: str
    adversarial_text: str
    gold_label: int
    chosen_edits: list[Edit]
    hypotheses: list[Hypothesis]
    queries: dict
    wall_time_s: float = 0.0
    importance: Optional[dict] = None
    stop_reason: str = ""
    depth_reached: int = 0
    trace: list = field(default_factory=list)
    provider_failures: int = 0
    error: Optional[str] = None
    note: Optional[str] = None

    @property
    def modifications(self) -> int:
        return sum(e.is_modification for e in self.chosen_edits)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "sample_id": self.sample_id,
            "success": self.success,
            "gold_label": self.gold_label,
            "original_text": self.original_text,
            "adversarial_text": self.adversarial_text,
            "chosen_edits": [e.to_dict() for e in self.chosen_edits],
            "modifications": self.modifications,
            "hypotheses": [h.to_dict() for h in self.hypotheses],
            "queries": self.queries,
            "importance": self.importance,
            "stop_reason": self.stop_reason,
            "depth_reached": self.depth_reached,
            "trace": self.trace,
            "provider_failures": self.provider_failures,
            "error": self.error,
            "note": self.note,
        }
        if include_timing:
            d["wall_time_s"] = self.wall_time_s
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackOutcome":
        return cls(
            sample_id=d["sample_id"],
            success=d["success"],
            original_text=d["original_text"],
            adversarial_text=d["adversarial_text"],
            gold_label=d["gold_label"],
            chosen_edits=[Edit.from_dict(e) for e in d["chosen_edits"]],
            hypotheses=[
                Hypothesis(h["text"], h["gold_prob"], h["similarity"],
                           [Edit.from_dict(e) for e in h["edits"]], h["depth"])
                for h in d.get("hypotheses", [])
            ],
            queries=d.get("queries", {}),
            wall_time_s=d.get("wall_time_s", 0.0),
            importance=d.get("importance"),
            stop_reason=d.get("stop_reason", ""),
            depth_reached=d.get("depth_reached", 0),
            trace=d.get("trace", []),
            provider_failures=d.get("provider_failures", 0),
            error=d.get("error"),
            note=d.get("note"),
        )


def select_final(successes: Sequence[tuple[str, float]], original: str, similarity) -> str:
    """Pick the most similar successful text; ties go to lower gold_prob, then text order."""
    if not successes:
        raise EmptySuccessSet("no successful hypotheses to choose from")
    scored = [(-_clamp(similarity.score(original, text)), prob, text) for text, prob in successes]
    return min(scored)[2]


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def _pick_hypothesis(hyps: list[Hypothesis]) -> Hypothesis:
    return min(hyps, key=lambda h: (-h.similarity, h.gold_prob, h.text))


def failure_outcome(doc: TokenizedDocument, ledger: QueryLedger, started: float, **kwargs) -> AttackOutcome:
    return AttackOutcome(
        sample_id=doc.id,
        success=False,
        original_text=doc.raw_text,
        adversarial_text=doc.raw_text,
        gold_label=doc.gold_label,
        chosen_edits=[],
        hypotheses=[],
        queries=ledger.snapshot(),
        wall_time_s=time.perf_counter() - started,
        **kwargs,
    )


def attack(doc: TokenizedDocument, victim: Victim, provider: CandidateProvider, similarity,
           config: AttackConfig, ledger: Optional[QueryLedger] = None) -> AttackOutcome:
    """Run the beam search against one document.

    Transport failures of the victim or provider end the search with a
    failure outcome carrying the error text; they are never raised.
    """
    config.validate()
    ledger = ledger if ledger is not None else QueryLedger()
    started = time.perf_counter()
    try:
        return _search(doc, victim, provider, similarity, config, ledger, started)
    except (VictimUnavailable, ProviderFailure, ImportanceError, SimilarityUnavailable) as exc:
        logger.warning("attack on %s aborted: %s", doc.id, exc)
        return failure_outcome(doc, ledger, started, stop_reason="error",
                               error=f"{type(exc).__name__}: {exc}")


def _importance_summary(ranking: ImportanceRanking) -> dict:
    return {
        "method": ranking.method.value,
        "order": ranking.order,
        "scores": ranking.scores,
        "queries_used": ranking.queries_used,
        "fallback": ranking.fallback,
    }


def _search(doc, victim, provider, similarity, config, ledger, started) -> AttackOutcome:
    ranking = rank(doc, victim, config.importance_method, ledger, config.lime)
    importance = _importance_summary(ranking)
    root_proba = tuple(ranking.original_proba)
    gold = doc.gold_label
    n = len(doc.tokens)

    if int(np.argmax(root_proba)) != gold:
        sim = _clamp(similarity.score(doc.raw_text, doc.raw_text))
        hyp = Hypothesis(doc.raw_text, root_proba[gold], sim, [], 0)
        return AttackOutcome(
            sample_id=doc.id, success=True, original_text=doc.raw_text,
            adversarial_text=doc.raw_text, gold_label=gold, chosen_edits=[],
            hypotheses=[hyp], queries=ledger.snapshot(),
            wall_time_s=time.perf_counter() - started, importance=importance,
            stop_reason="already_misclassified", note="victim misclassifies the unedited text",
        )

    root = BeamNode(
        edits=(), text=doc.raw_text, gold_prob=root_proba[gold], proba=root_proba, depth=0,
        consumed_positions=frozenset(), surfaces=tuple(doc.words),
    )
    max_depth = min(config.max_depth or n, n)
    free = config.expansion_policy is ExpansionPolicy.FREE_ORDER
    beam = [root]
    successes: dict[str, Hypothesis] = {}
    trace = []
    provider_failures = 0
    stop_reason = "max_depth"
    depth = 0

    while depth < max_depth:
        depth += 1
        pending = []  # (parent, edit, surfaces)
        for parent in beam:
            if free:
                positions = [p for p in ranking.order if p not in parent.consumed_positions]
            else:
                positions = [ranking.order[depth - 1]]
            for j, pos in enumerate(positions):
                masked = render(doc, mask_position(parent.surfaces, pos))
                expansion = expand_position(
                    masked, doc.tokens[pos].surface, pos, config.branching_b, provider,
                    include_skip=(not free) or j == 0,
                )
                if expansion.provider_error:
                    provider_failures += 1
                for sub in expansion.substitutions:
                    surfaces = list(parent.surfaces)
                    surfaces[pos] = sub
                    pending.append((parent, Edit(pos, EditKind.SUBSTITUTE, sub), surfaces))
                if expansion.include_delete:
                    surfaces = list(parent.surfaces)
                    surfaces[pos] = None
                    pending.append((parent, Edit(pos, EditKind.DELETE), surfaces))
                if expansion.include_skip:
                    pending.append((parent, Edit(pos, EditKind.SKIP), list(parent.surfaces)))

        texts = [render(doc, s) for _, _, s in pending]
        if free:
            seen = set()
            keep = []
            for i, t in enumerate(texts):
                if t not in seen:
                    seen.add(t)
                    keep.append(i)
            pending = [pending[i] for i in keep]
            texts = [texts[i] for i in keep]
        if not pending:
            stop_reason = "beam_empty"
            depth -= 1
            break

        remaining = config.max_queries - ledger.total_queries
        exhausted = False
        if remaining <= 0:
            stop_reason = "budget"
            depth -= 1
            break
        if len(pending) > remaining:
            pending, texts = pending[:remaining], texts[:remaining]
            exhausted = True

        probs = predict_proba(victim, texts, ledger, phase="expansion")
        children = []
        for i, ((parent, edit, surfaces), text) in enumerate(zip(pending, texts)):
            children.append(BeamNode(
                edits=parent.edits + (edit,),
                text=text,
                gold_prob=float(probs[i, gold]),
                proba=tuple(float(p) for p in probs[i]),
                depth=depth,
                consumed_positions=parent.consumed_positions | {edit.position},
                surfaces=tuple(surfaces),
                modifications=parent.modifications + edit.is_modification,
                expansion_index=i,
            ))
        children.sort(key=lambda c: (c.gold_prob, c.modifications, c.expansion_index))
        beam = children[: config.beam_size_k]

        new_successes = 0
        for node in beam:
            if node.predicted() == gold:
                continue
            known = successes.get(node.text)
            if known is None:
                successes[node.text] = Hypothesis(node.text, node.gold_prob, None, list(node.edits), depth)
                new_successes += 1
            elif node.modifications < known.modifications:
                successes[node.text] = Hypothesis(node.text, node.gold_prob, None, list(node.edits), depth)
        trace.append({
            "depth": depth,
            "children": len(children),
            "beam_size": len(beam),
            "best_gold_prob": beam[0].gold_prob,
            "new_successes": new_successes,
        })
        if len(successes) >= config.hypothesis_count_h:
            stop_reason = "hypotheses"
            break
        if exhausted:
            stop_reason = "budget"
            break

    common = dict(importance=importance, stop_reason=stop_reason, depth_reached=depth,
                  trace=trace, provider_failures=provider_failures)
    if not successes:
        return failure_outcome(doc, ledger, started, **common)

    hyps = list(successes.values())
    for h in hyps:
        h.similarity = _clamp(similarity.score(doc.raw_text, h.text))
    chosen = _pick_hypothesis(hyps)
    return AttackOutcome(
        sample_id=doc.id, success=True, original_text=doc.raw_text,
        adversarial_text=chosen.text, gold_label=gold, chosen_edits=list(chosen.edits),
        hypotheses=hyps, queries=ledger.snapshot(),
        wall_time_s=time.perf_counter() - started, **common,
    )
