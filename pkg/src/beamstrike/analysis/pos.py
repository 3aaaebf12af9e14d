"""POS tagging adapters, Penn Treebank -> UPOS mapping, and POS transitions."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .. import rpc

logger = logging.getLogger(__name__)

UPOS_TAGS = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)

# Penn tags as emitted by the flair English tagger, grouped into UPOS.
PENN_TO_UPOS = {
    "ADD": "X",
    "AFX": "X",
    "CC": "CCONJ",
    "CD": "NUM",
    "DT": "DET",
    "EX": "PRON",
    "FW": "X",
    "HYPH": "PUNCT",
    "IN": "ADP",
    "JJ": "ADJ",
    "JJR": "ADJ",
    "JJS": "ADJ",
    "LS": "X",
    "MD": "AUX",
    "NFP": "PUNCT",
    "NN": "NOUN",
    "NNP": "PROPN",
    "NNPS": "PROPN",
    "NNS": "NOUN",
    "PDT": "DET",
    "POS": "PART",
    "PRP": "PRON",
    "PRP$": "PRON",
    "RB": "ADV",
    "RBR": "ADV",
    "RBS": "ADV",
    "RP": "PART",
    "SYM": "SYM",
    "TO": "PART",
    "UH": "INTJ",
    "VB": "VERB",
    "VBD": "VERB",
    "VBG": "VERB",
    "VBN": "VERB",
    "VBP": "VERB",
    "VBZ": "VERB",
    "WDT": "DET",
    "WP": "PRON",
    "WP$": "PRON",
    "WRB": "ADV",
    "XX": "X",
    "-LRB-": "PUNCT",
    "-RRB-": "PUNCT",
    ".": "PUNCT",
    ",": "PUNCT",
    ":": "PUNCT",
    "``": "PUNCT",
    "''": "PUNCT",
    '"': "PUNCT",
    "$": "SYM",
}


class DisqualifiedSample(ValueError):
    pass


class TaggerUnavailable(RuntimeError):
    pass


@dataclass
class PosMapping:
    table: dict = field(default_factory=lambda: dict(PENN_TO_UPOS))
    unknown: Counter = field(default_factory=Counter)

    def __post_init__(self):
        bad = {k: v for k, v in self.table.items() if v not in UPOS_TAGS}
        if bad:
            raise ValueError(f"mapping targets outside UPOS: {bad}")

    def lookup(self, tag: str) -> str:
        upos = self.table.get(tag)
        if upos is None:
            if not self.unknown[tag]:
                logger.warning("unknown Penn tag %r mapped to X", tag)
            self.unknown[tag] += 1
            return "X"
        return upos

    @property
    def warnings(self) -> int:
        return sum(self.unknown.values())


def map_to_upos(penn_tags: Iterable[str], mapping: Optional[PosMapping] = None) -> list[str]:
    mapping = mapping if mapping is not None else PosMapping()
    return [mapping.lookup(t) for t in penn_tags]


@dataclass(frozen=True)
class PosDiff:
    length_preserved: bool
    changed_positions: tuple[int, ...]

    @property
    def changes(self) -> int:
        return len(self.changed_positions)


def pos_diff(original_tags: Sequence[str], adversarial_tags: Sequence[str]) -> PosDiff:
    if len(original_tags) != len(adversarial_tags):
        return PosDiff(False, ())
    changed = tuple(i for i, (a, b) in enumerate(zip(original_tags, adversarial_tags)) if a != b)
    return PosDiff(True, changed)


def is_qualifying(modifications: int, diff: PosDiff) -> bool:
    """Single edit, same tag-sequence length, exactly one tag changed."""
    return modifications == 1 and diff.length_preserved and diff.changes == 1


@dataclass
class TransitionMatrix:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, original_tags: Sequence[str], adversarial_tags: Sequence[str]) -> None:
        diff = pos_diff(original_tags, adversarial_tags)
        if not diff.length_preserved or diff.changes != 1:
            raise DisqualifiedSample(
                f"need equal lengths and exactly one changed tag, got "
                f"length_preserved={diff.length_preserved} changes={diff.changes}"
            )
        i = diff.changed_positions[0]
        self.counts[(original_tags[i], adversarial_tags[i])] += 1

    def as_array(self, labels: Sequence[str] = UPOS_TAGS) -> np.ndarray:
        index = {t: i for i, t in enumerate(labels)}
        arr = np.zeros((len(labels), len(labels)), dtype=int)
        for (src, dst), n in self.counts.items():
            arr[index[src], index[dst]] += n
        return arr

    def row_normalized(self, labels: Sequence[str] = UPOS_TAGS) -> np.ndarray:
        arr = self.as_array(labels).astype(float)
        sums = arr.sum(axis=1, keepdims=True)
        return np.divide(arr, sums, out=np.zeros_like(arr), where=sums > 0)


def build_transition_matrix(samples: Iterable[tuple[Sequence[str], Sequence[str]]]) -> TransitionMatrix:
    matrix = TransitionMatrix()
    for original_tags, adversarial_tags in samples:
        matrix.add(original_tags, adversarial_tags)
    return matrix


class Tagger:
    name = "tagger"

    def tag(self, text: str) -> list[tuple[str, str]]:
        raise NotImplementedError

    def close(self) -> None:
        pass


_TOKEN_RE = re.compile(
    r"https?://\S+|www\.\S+|[@#]\w+|\d+(?:[.,]\d+)*|\w+(?:[-']\w+)*|\.\.\.|[^\w\s]"
)

_LEXICON = {
    "the": "DT", "a": "DT", "an": "DT", "this": "DT", "that": "DT", "these": "DT", "those": "DT",
    "some": "DT", "any": "DT", "no": "DT", "every": "DT", "each": "DT", "all": "PDT",
    "and": "CC", "or": "CC", "but": "CC", "nor": "CC", "yet": "CC",
    "of": "IN", "in": "IN", "on": "IN", "at": "IN", "by": "IN", "for": "IN", "with": "IN",
    "from": "IN", "about": "IN", "as": "IN", "into": "IN", "than": "IN", "if": "IN",
    "because": "IN", "while": "IN", "after": "IN", "before": "IN", "since": "IN", "against": "IN",
    "i": "PRP", "you": "PRP", "he": "PRP", "she": "PRP", "it": "PRP", "we": "PRP", "they": "PRP",
    "me": "PRP", "him": "PRP", "her": "PRP$", "us": "PRP", "them": "PRP",
    "my": "PRP$", "your": "PRP$", "his": "PRP$", "its": "PRP$", "our": "PRP$", "their": "PRP$",
    "can": "MD", "could": "MD", "will": "MD", "would": "MD", "shall": "MD", "should": "MD",
    "may": "MD", "might": "MD", "must": "MD",
    "to": "TO", "there": "EX", "not": "RB", "n't": "RB", "very": "RB", "too": "RB",
    "which": "WDT", "who": "WP", "whom": "WP", "whose": "WP$", "what": "WP",
    "when": "WRB", "where": "WRB", "why": "WRB", "how": "WRB",
    "is": "VBZ", "are": "VBP", "am": "VBP", "was": "VBD", "were": "VBD", "be": "VB",
    "been": "VBN", "being": "VBG", "has": "VBZ", "have": "VBP", "had": "VBD",
    "does": "VBZ", "do": "VBP", "did": "VBD", "say": "VBP", "says": "VBZ", "said": "VBD",
    "oh": "UH", "yes": "UH", "wow": "UH", "please": "UH",
}

_PUNCT = {
    ".": ".", "!": ".", "?": ".", ",": ",", ":": ":", ";": ":", "...": ":",
    "(": "-LRB-", ")": "-RRB-", "[": "-LRB-", "]": "-RRB-", '"': "''", "'": "''",
    "`": "``", "$": "$", "-": "HYPH", "#": "NFP", "*": "NFP", "&": "CC",
}


class RuleTagger(Tagger):
    """Deterministic lexicon and suffix heuristics emitting Penn tags.

    A stand-in for a neural tagger so the analysis pipeline runs offline.
    """

    name = "rule"

    def tag(self, text):
        tokens = _TOKEN_RE.findall(text)
        out = []
        for i, tok in enumerate(tokens):
            out.append((tok, self._tag_one(tok, sentence_start=i == 0 or tokens[i - 1] in ".!?")))
        return out

    @staticmethod
    def _tag_one(tok: str, sentence_start: bool) -> str:
        low = tok.lower()
        if low.startswith(("http://", "https://", "www.")):
            return "ADD"
        if tok in _PUNCT:
            return _PUNCT[tok]
        if tok[0] in "@#":
            return "NNP"
        if tok[0].isdigit():
            return "CD"
        if low in _LEXICON:
            return _LEXICON[low]
        if not tok[0].isalnum():
            return "SYM"
        if tok[0].isupper() and not sentence_start:
            return "NNP"
        if low.endswith("ing") and len(low) > 4:
            return "VBG"
        if low.endswith("ed") and len(low) > 3:
            return "VBD"
        if low.endswith("ly") and len(low) > 3:
            return "RB"
        if low.endswith("est") and len(low) > 4:
            return "JJS"
        if low.endswith(("ous", "ful", "ive", "able", "ible", "al", "ic", "less")) and len(low) > 4:
            return "JJ"
        if low.endswith("s") and not low.endswith("ss") and len(low) > 3:
            return "NNS"
        return "NN"


class RemoteTagger(Tagger):
    """Tagger served over the ``/tag`` RPC: ``{"text"}`` -> ``{"tokens", "tags"}``."""

    name = "remote"
    route = "/tag"

    def __init__(self, transport: rpc.Transport):
        self.transport = transport

    def tag(self, text):
        try:
            data = self.transport.call(self.route, {"text": text})
        except rpc.TransportError as exc:
            raise TaggerUnavailable(str(exc)) from exc
        tokens, tags = data.get("tokens"), data.get("tags")
        if not isinstance(tokens, list) or not isinstance(tags, list) or len(tokens) != len(tags):
            raise TaggerUnavailable(f"{self.transport.describe()}: tokens/tags missing or misaligned")
        return list(zip(tokens, tags))

    def close(self):
        self.transport.close()


def remote_tagger(endpoint_config: Mapping[str, Any]) -> RemoteTagger:
    try:
        return RemoteTagger(rpc.make_transport(endpoint_config))
    except rpc.TransportError as exc:
        raise TaggerUnavailable(str(exc)) from exc
