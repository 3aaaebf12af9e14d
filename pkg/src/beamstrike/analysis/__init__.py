from .figures import AnalysisRecord, IoFailure, emit_figures
from .pos import (
    PENN_TO_UPOS,
    UPOS_TAGS,
    DisqualifiedSample,
    PosDiff,
    PosMapping,
    RemoteTagger,
    RuleTagger,
    Tagger,
    TaggerUnavailable,
    TransitionMatrix,
    build_transition_matrix,
    is_qualifying,
    map_to_upos,
    pos_diff,
    remote_tagger,
)

__all__ = [
    "AnalysisRecord", "IoFailure", "emit_figures", "PENN_TO_UPOS", "UPOS_TAGS",
    "DisqualifiedSample", "PosDiff", "PosMapping", "RemoteTagger", "RuleTagger", "Tagger",
    "TaggerUnavailable", "TransitionMatrix", "build_transition_matrix", "is_qualifying",
    "map_to_upos", "pos_diff", "remote_tagger",
]
