"""Cleaning of raw extracted text into a normalized, tokenizable form.

The upstream PDF-to-text step is out of scope: input is either a plain
UTF-8 text file or a page-text JSON file ``{"doc_id": ..., "pages": [...]}``.
"""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .model import Document, SchemaError


class IngestError(ValueError):
    """Input bytes or file structure cannot be ingested."""


@dataclass(frozen=True)
class PrepOptions:
    collapse_whitespace: bool = True
    dehyphenate_linebreaks: bool = True
    map_ligatures: bool = True
    strip_control_chars: bool = True


LIGATURES = {"ﬁ": "fi", "ﬂ": "fl", "ﬀ": "ff", "ﬃ": "ffi", "ﬄ": "ffl"}

# letter "-" newline letter; a blank line after the hyphen never joins
_DEHYPHEN_RE = re.compile(r"(?<=[^\W\d_])-\n(?=[^\W\d_])", re.UNICODE)
_HSPACE_RE = re.compile(r"[ \t]{2,}|\t")
_MANY_NEWLINES_RE = re.compile(r"\n{3,}")


def _keep_char(ch: str) -> bool:
    # newline and tab survive; tabs are folded to spaces by the collapse step
    return ch in "\n\t" or unicodedata.category(ch) != "Cc"


def normalize_text(raw: str, opts: Optional[PrepOptions] = None) -> str:
    """Deterministic cleanup: control chars, ligatures, line-break hyphens, whitespace."""
    opts = opts or PrepOptions()
    text = raw
    if opts.strip_control_chars:
        text = "".join(ch for ch in text if _keep_char(ch))
    if opts.map_ligatures:
        for lig, repl in LIGATURES.items():
            text = text.replace(lig, repl)
    if opts.dehyphenate_linebreaks:
        text = _DEHYPHEN_RE.sub("", text)
    if opts.collapse_whitespace:
        text = _HSPACE_RE.sub(" ", text)
        text = _MANY_NEWLINES_RE.sub("\n\n", text)
    return text


def _read_utf8(path: Path) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise IngestError(f"{path}: invalid UTF-8 at byte offset {e.start}") from None


def _parse_page_file(raw: str, path: Path) -> tuple[Optional[str], list[str]]:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if "pages" not in data:
        raise SchemaError(f"{path}: missing field 'pages'")
    pages = data["pages"]
    if not isinstance(pages, list):
        raise SchemaError(f"{path}: field 'pages' must be a list of strings")
    for i, page in enumerate(pages):
        if not isinstance(page, str):
            raise SchemaError(f"{path}: field 'pages[{i}]' must be a string")
    doc_id = data.get("doc_id")
    if doc_id is not None and not isinstance(doc_id, str):
        raise SchemaError(f"{path}: field 'doc_id' must be a string")
    return doc_id, pages


def load_document(doc_id: str, source: str | Path,
                  opts: Optional[PrepOptions] = None) -> Document:
    """Load and normalize a plain-text or page-text file into an untokenized Document.

    Page-text files (``.json``) record page-break offsets: each page is
    normalized on its own, pages are joined with a single newline, and the
    offset where each later page begins is kept. A ``doc_id`` inside the
    file takes precedence over the argument.
    """
    path = Path(source)
    raw = _read_utf8(path)
    if path.suffix.lower() == ".json":
        file_doc_id, pages = _parse_page_file(raw, path)
        normed = [normalize_text(p, opts) for p in pages]
        text = "\n".join(normed)
        breaks: list[int] = []
        pos = 0
        for page in normed[:-1]:
            pos += len(page) + 1
            breaks.append(pos)
        return Document(doc_id=file_doc_id or doc_id, text=text, pages=tuple(breaks))
    return Document(doc_id=doc_id, text=normalize_text(raw, opts))
