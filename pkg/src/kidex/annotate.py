"""Tokenization and system annotations (document sections).

Tokens split on whitespace, then leading/trailing punctuation is peeled off
as single-character tokens so cues like ``ISIN :`` and ``12,5 %`` become
separate tokens while interior punctuation (``1.234,56``, ``CH0524993752``)
stays put.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .model import Annotation, Document, SchemaError, Token

SECTION_KEY = "SECTION"

PUNCT_CHARS = set(".,:;!?()[]{}\"'«»%€")


def tokenize(text: str) -> tuple[Token, ...]:
    tokens: list[Token] = []

    def emit(chunk: str, begin: int) -> None:
        tokens.append(Token(chunk, begin, begin + len(chunk), len(tokens)))

    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        end = pos
        while end < n and not text[end].isspace():
            end += 1
        i, j = pos, end
        trailing: list[int] = []
        while j - i > 1 and text[i] in PUNCT_CHARS:
            emit(text[i], i)
            i += 1
        while j - i > 1 and text[j - 1] in PUNCT_CHARS:
            trailing.append(j - 1)
            j -= 1
        emit(text[i:j], i)
        for k in reversed(trailing):
            emit(text[k], k)
        pos = end
    return tuple(tokens)


def tokenize_document(doc: Document) -> Document:
    return doc.with_tokens(tokenize(doc.text))


@dataclass(frozen=True)
class SectionSpec:
    name: str
    header_patterns: tuple[str, ...]


@dataclass(frozen=True)
class SectionConfig:
    sections: tuple[SectionSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.sections]
        if len(set(names)) != len(names):
            raise ValueError("section names must be unique")
        for s in self.sections:
            if not s.header_patterns:
                raise ValueError(f"section {s.name}: needs at least one header pattern")

    @classmethod
    def from_dict(cls, d) -> "SectionConfig":
        if "sections" not in d:
            raise SchemaError("section config: missing field 'sections'")
        specs = []
        for i, entry in enumerate(d["sections"]):
            if "name" not in entry or "header_patterns" not in entry:
                raise SchemaError(f"section config: sections[{i}] needs 'name' and 'header_patterns'")
            specs.append(SectionSpec(entry["name"], tuple(entry["header_patterns"])))
        return cls(tuple(specs))


def load_section_config(path: str | Path) -> SectionConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})") from None
    return SectionConfig.from_dict(data)


def default_section_config() -> SectionConfig:
    data = resources.files("kidex.data").joinpath("sections.json").read_text(encoding="utf-8")
    return SectionConfig.from_dict(json.loads(data))


def _header_key(pattern: str) -> tuple[str, ...]:
    """Casefolded token texts of a header phrase, edge punctuation dropped."""
    toks = [t.text.casefold() for t in tokenize(pattern)]
    while toks and all(c in PUNCT_CHARS for c in toks[0]):
        toks.pop(0)
    while toks and all(c in PUNCT_CHARS for c in toks[-1]):
        toks.pop()
    return tuple(toks)


def annotate_sections(doc: Document, cfg: SectionConfig) -> Document:
    """Attach one SECTION annotation per matched header, running to the next header.

    Header matching is case-insensitive on token sequences; when matched
    header phrases overlap, the earlier one wins and the later is dropped.
    """
    texts = [t.text.casefold() for t in doc.tokens]
    n = len(texts)
    candidates: list[tuple[int, int, int, str]] = []  # (start, rank, end, name)
    for rank, spec in enumerate(cfg.sections):
        for pattern in spec.header_patterns:
            key = _header_key(pattern)
            if not key:
                continue
            k = len(key)
            for i in range(n - k + 1):
                if tuple(texts[i:i + k]) == key:
                    candidates.append((i, rank, i + k - 1, spec.name))
    candidates.sort()

    kept: list[tuple[int, int, str]] = []  # (start, header_end, name)
    last_end = -1
    for start, _rank, end, name in candidates:
        if start <= last_end:
            continue
        kept.append((start, end, name))
        last_end = end

    annotations = []
    for idx, (start, _hend, name) in enumerate(kept):
        stop = kept[idx + 1][0] - 1 if idx + 1 < len(kept) else n - 1
        annotations.append(Annotation(SECTION_KEY, name, start, stop, "system"))
    return doc.with_annotations(annotations)
