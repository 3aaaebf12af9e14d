"""Dataset ingestion: canonical JSONL plus label<TAB>text import."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .text_core import EmptyDocument, TokenizedDocument, tokenize


class DatasetInvalid(ValueError):
    pass


def fingerprint(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _label(value, where: str) -> int:
    if isinstance(value, bool) or value not in (0, 1, "0", "1"):
        raise DatasetInvalid(f"{where}: label must be 0 or 1, got {value!r}")
    return int(value)


def _rows_jsonl(lines):
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        where = f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetInvalid(f"{where}: {exc}") from exc
        if not isinstance(obj, dict) or not {"id", "label", "text"} <= obj.keys():
            raise DatasetInvalid(f"{where}: expected an object with id, label and text")
        if not isinstance(obj["text"], str):
            raise DatasetInvalid(f"{where}: text must be a string")
        yield str(obj["id"]), _label(obj["label"], where), obj["text"], where


def _rows_tsv(lines):
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        where = f"line {lineno}"
        label, sep, text = line.partition("\t")
        if not sep:
            raise DatasetInvalid(f"{where}: expected label<TAB>text")
        yield str(lineno - 1), _label(label.strip(), where), text, where


def load_dataset(path, fmt: str | None = None) -> list[TokenizedDocument]:
    """Read and validate a dataset. ``fmt`` defaults from the extension (``.tsv`` or JSONL)."""
    path = Path(path)
    fmt = fmt or ("tsv" if path.suffix.lower() == ".tsv" else "jsonl")
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetInvalid(f"cannot read dataset {path}: {exc}") from exc
    rows = _rows_tsv(lines) if fmt == "tsv" else _rows_jsonl(lines)
    docs, seen = [], set()
    for sample_id, label, text, where in rows:
        if sample_id in seen:
            raise DatasetInvalid(f"{where}: duplicate id {sample_id!r}")
        seen.add(sample_id)
        try:
            docs.append(tokenize(text, id=sample_id, gold_label=label))
        except EmptyDocument as exc:
            raise DatasetInvalid(f"{where}: empty text") from exc
    if not docs:
        raise DatasetInvalid(f"{path}: dataset is empty")
    return docs
