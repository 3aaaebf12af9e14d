"""Beam search word-substitution attacks against text classifiers, with BODEGA scoring."""

from .beam import AttackConfig, AttackOutcome, ConfigInvalid, EmptySuccessSet, ExpansionPolicy, attack, select_final
from .candidates import CandidateProvider, MlmProvider, ProviderFailure, TableProvider, expand_position
from .evaluation import EvaluationRecord, aggregate, character_score, evaluate_sample
from .importance import ImportanceMethod, ImportanceRanking, LimeConfig, lime_importance, logit_importance, rank
from .similarity import RemoteSimilarity, SimilarityUnavailable, TokenF1Similarity
from .text_core import Edit, EditKind, TokenizedDocument, apply_edits, levenshtein, render, tokenize
from .victims import (
    ConstantVictim,
    KeywordRuleVictim,
    LinearBagVictim,
    QueryLedger,
    RemoteVictim,
    Victim,
    VictimUnavailable,
    load_external_victim,
    predict_proba,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackOutcome", "ConfigInvalid", "EmptySuccessSet", "ExpansionPolicy", "attack",
    "select_final", "CandidateProvider", "MlmProvider", "ProviderFailure", "TableProvider",
    "expand_position", "EvaluationRecord", "aggregate", "character_score", "evaluate_sample",
    "ImportanceMethod", "ImportanceRanking", "LimeConfig", "lime_importance", "logit_importance", "rank",
    "RemoteSimilarity", "SimilarityUnavailable", "TokenF1Similarity", "Edit", "EditKind",
    "TokenizedDocument", "apply_edits", "levenshtein", "render", "tokenize", "ConstantVictim",
    "KeywordRuleVictim", "LinearBagVictim", "QueryLedger", "RemoteVictim", "Victim",
    "VictimUnavailable", "load_external_victim", "predict_proba",
]
