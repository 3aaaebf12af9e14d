"""Word importance ranking: logit masking and a LIME-style local surrogate."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .text_core import MASK_TOKEN, TokenizedDocument, mask_position, render
from .victims import QueryLedger, Victim, predict_proba

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-12


class ImportanceMethod(str, enum.Enum):
    LOGIT = "LOGIT"
    LIME = "LIME"


class ImportanceError(ValueError):
    pass


class SingularSurrogate(ImportanceError):
    pass


@dataclass
class ImportanceRanking:
    scores: list[float]
    order: list[int]
    method: ImportanceMethod
    queries_used: int
    # probability vector of the unedited text, when the ranker queried it
    original_proba: Optional[list[float]] = None
    fallback: Optional[str] = None

    @classmethod
    def from_scores(cls, scores, method, queries_used, **kwargs):
        scores = [float(s) for s in scores]
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return cls(scores, order, method, queries_used, **kwargs)


@dataclass
class LimeConfig:
    num_samples: int = 500
    kernel_width_factor: float = 0.25
    surrogate_regularization: float = 1.0
    rng_seed: int = 0


def gold_log_odds(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.log(p) - np.log1p(-p)


def logit_importance(doc: TokenizedDocument, victim: Victim, ledger: QueryLedger,
                     mask_token: str = MASK_TOKEN) -> ImportanceRanking:
    """Score each token by the drop in gold-class log-odds when it is masked.

    Uses exactly ``len(doc) + 1`` queries: the original text plus one masked
    copy per token, sent as a single batch.
    """
    if not doc.tokens:
        raise ImportanceError("document has no tokens")
    surfaces = doc.words
    texts = [doc.raw_text]
    texts += [render(doc, mask_position(surfaces, i, mask_token)) for i in range(len(surfaces))]
    probs = predict_proba(victim, texts, ledger, phase="importance")
    odds = gold_log_odds(probs[:, doc.gold_label])
    return ImportanceRanking.from_scores(
        odds[0] - odds[1:], ImportanceMethod.LOGIT, len(texts), original_proba=probs[0].tolist()
    )


def lime_importance(doc: TokenizedDocument, victim: Victim, config: LimeConfig,
                    ledger: QueryLedger) -> ImportanceRanking:
    """Fit a kernel-weighted ridge surrogate over token-presence masks.

    The first sample is always the unperturbed text (all tokens present), as
    in the reference LIME text explainer; the remaining ``num_samples - 1``
    drop each token independently with probability 0.5. The surrogate is fit
    to the gold-class probability and its coefficients are the scores.
    Falls back to :func:`logit_importance` if the design is rank-deficient.
    """
    n = len(doc.tokens)
    if n < 2:
        raise ImportanceError("LIME ranking needs at least two tokens")
    if config.num_samples < 2 * n:
        raise ImportanceError(
            f"num_samples={config.num_samples} is below 2 x {n} tokens; the surrogate would be underdetermined"
        )
    rng = np.random.default_rng(config.rng_seed)
    masks = rng.random((config.num_samples, n)) >= 0.5
    masks[0] = True
    surfaces = doc.words
    texts = [render(doc, [s if keep else None for s, keep in zip(surfaces, row)]) for row in masks]
    probs = predict_proba(victim, texts, ledger, phase="importance")
    target = probs[:, doc.gold_label]

    X = masks.astype(float)
    present = X.sum(axis=1)
    cosine = np.sqrt(present / n)
    distance = 1.0 - cosine
    width = config.kernel_width_factor * math.sqrt(n)
    weights = np.exp(-(distance ** 2) / width ** 2)
    try:
        coef = _weighted_ridge(X, target, weights, config.surrogate_regularization)
    except SingularSurrogate as exc:
        logger.warning("LIME surrogate for %s is singular (%s); using logit ranking", doc.id, exc)
        fallback = logit_importance(doc, victim, ledger)
        fallback.queries_used += config.num_samples
        fallback.fallback = "singular_surrogate"
        return fallback
    return ImportanceRanking.from_scores(
        coef, ImportanceMethod.LIME, config.num_samples, original_proba=probs[0].tolist()
    )


def _weighted_ridge(X: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float) -> np.ndarray:
    # intercept is left unpenalized by centering on weighted means
    design = np.hstack([np.ones((X.shape[0], 1)), X]) * np.sqrt(w)[:, None]
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularSurrogate("design matrix is rank-deficient")
    wsum = w.sum()
    x_mean = (w[:, None] * X).sum(axis=0) / wsum
    y_mean = (w * y).sum() / wsum
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ (w[:, None] * Xc) + alpha * np.eye(X.shape[1])
    return np.linalg.solve(gram, Xc.T @ (w * yc))


def rank(doc: TokenizedDocument, victim: Victim, method: ImportanceMethod, ledger: QueryLedger,
         lime_config: Optional[LimeConfig] = None) -> ImportanceRanking:
    method = ImportanceMethod(method)
    if method is ImportanceMethod.LOGIT:
        return logit_importance(doc, victim, ledger)
    config = lime_config or LimeConfig()
    if len(doc.tokens) < 2 or config.num_samples < 2 * len(doc.tokens):
        ranking = logit_importance(doc, victim, ledger)
        ranking.fallback = "lime_precondition"
        return ranking
    return lime_importance(doc, victim, config, ledger)
