"""Word-level tokenization, the edit model, and Levenshtein distance.

Tokens are maximal runs of non-whitespace characters, so punctuation stays
attached to its word. Every token remembers the whitespace run in front of it,
which makes detokenization an exact inverse of tokenization.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

_TOKEN_RE = re.compile(r"\S+")

MASK_TOKEN = "[MASK]"


class EmptyDocument(ValueError):
    pass


class PositionOutOfRange(IndexError):
    pass


class InvalidEdit(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    surface: str
    char_start: int
    char_end: int
    preceding_separator: str = ""

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.char_end <= self.char_start:
            raise ValueError("token must span at least one character")


@dataclass(frozen=True)
class TokenizedDocument:
    id: str
    raw_text: str
    tokens: tuple[Token, ...]
    gold_label: int
    trailing_separator: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]


class EditKind(str, enum.Enum):
    SUBSTITUTE = "SUBSTITUTE"
    DELETE = "DELETE"
    SKIP = "SKIP"


@dataclass(frozen=True)
class Edit:
    position: int
    kind: EditKind
    replacement: str = ""

    def __post_init__(self):
        if self.kind is not EditKind.SUBSTITUTE and self.replacement:
            raise InvalidEdit(f"{self.kind.value} edit cannot carry a replacement")

    @property
    def is_modification(self) -> bool:
        return self.kind is not EditKind.SKIP

    def to_dict(self) -> dict:
        return {"position": self.position, "kind": self.kind.value, "replacement": self.replacement}

    @classmethod
    def from_dict(cls, data: dict) -> "Edit":
        return cls(int(data["position"]), EditKind(data["kind"]), data.get("replacement", ""))

    def __str__(self) -> str:
        if self.kind is EditKind.SUBSTITUTE:
            return f"SUBSTITUTE@{self.position}->{self.replacement!r}"
        return f"{self.kind.value}@{self.position}"


def tokenize(raw_text: str, id: str = "", gold_label: int = 0) -> TokenizedDocument:
    """Split ``raw_text`` on Unicode whitespace, keeping separators for round-trip."""
    tokens = []
    cursor = 0
    for match in _TOKEN_RE.finditer(raw_text):
        start, end = match.span()
        tokens.append(Token(match.group(), start, end, raw_text[cursor:start]))
        cursor = end
    if not tokens:
        raise EmptyDocument(f"document {id!r} has no tokens")
    return TokenizedDocument(
        id=id,
        raw_text=raw_text,
        tokens=tuple(tokens),
        gold_label=gold_label,
        trailing_separator=raw_text[cursor:],
    )


def detokenize(doc: TokenizedDocument) -> str:
    return render(doc, [t.surface for t in doc.tokens])


def render(doc: TokenizedDocument, surfaces: Sequence[Optional[str]]) -> str:
    """Rebuild text from per-token surfaces; ``None`` marks a deleted token.

    A deleted token takes its preceding separator with it. When the first
    surviving token is not the document's first token it inherits the
    document's leading whitespace instead of its own separator.
    """
    parts = []
    first = True
    for token, surface in zip(doc.tokens, surfaces):
        if surface is None:
            continue
        if first:
            parts.append(doc.tokens[0].preceding_separator)
            first = False
        else:
            parts.append(token.preceding_separator)
        parts.append(surface)
    if first:
        return doc.tokens[0].preceding_separator + doc.trailing_separator
    parts.append(doc.trailing_separator)
    return "".join(parts)


def edited_surfaces(doc: TokenizedDocument, edits: Iterable[Edit]) -> list[Optional[str]]:
    surfaces: list[Optional[str]] = [t.surface for t in doc.tokens]
    touched = set()
    n = len(doc.tokens)
    for edit in edits:
        if not 0 <= edit.position < n:
            raise PositionOutOfRange(f"edit position {edit.position} outside 0..{n - 1}")
        if edit.kind is EditKind.SKIP:
            continue
        if edit.position in touched:
            raise InvalidEdit(f"position {edit.position} modified twice")
        touched.add(edit.position)
        if edit.kind is EditKind.DELETE:
            surfaces[edit.position] = None
        else:
            if edit.replacement == doc.tokens[edit.position].surface:
                raise InvalidEdit(f"substitution at {edit.position} does not change the word")
            surfaces[edit.position] = edit.replacement
    return surfaces


def apply_edits(doc: TokenizedDocument, edits: Iterable[Edit]) -> str:
    return render(doc, edited_surfaces(doc, edits))


def mask_position(surfaces: Sequence[Optional[str]], position: int, mask: str = MASK_TOKEN) -> list[Optional[str]]:
    masked = list(surfaces)
    masked[position] = mask
    return masked


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over characters (two-row dynamic programme)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]
