"""Deterministic cleanup of OCR cell text: numeric formats, currency, confusions.

Numbers are returned as exact decimals; percents are returned as printed
(``12,5%`` gives 12.5, not 0.125) and the percent flag is the caller's
business. ``locale_hint`` picks which separator wins the ambiguous
single-separator cases; the default follows Italian KID printing.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Optional

_CURRENCY_RE = re.compile(r"[€$£]|(?i:\b(?:EUR|USD|GBP|CHF)\b)")
_MULTISPACE_RE = re.compile(r" {2,}")

# chars ignored when deciding whether a string is "mostly digits"
_SEPARATOR_CHARS = set(" \t.,%€$£+-")


@dataclass(frozen=True)
class ConfusionMap:
    """Char-for-char OCR repairs, by default the slash-for-seven confusion."""
    pairs: dict = field(default_factory=lambda: {"/": "7"})
    numeric_context_only: bool = True

    def __post_init__(self):
        if set(self.pairs.values()) & set(self.pairs.keys()):
            raise ValueError("confusion map must be acyclic: a target char cannot also be a source")


def fix_confusions(text: str, cmap: Optional[ConfusionMap] = None) -> str:
    """Apply the confusion map; in numeric-context mode only to digit-heavy strings."""
    cmap = cmap or ConfusionMap()
    if cmap.numeric_context_only:
        core = [ch for ch in text if ch not in _SEPARATOR_CHARS]
        digits = sum(ch.isdigit() for ch in core)
        if not core or 2 * digits < len(core):
            return text
    return "".join(cmap.pairs.get(ch, ch) for ch in text)


def strip_currency(text: str) -> str:
    """Drop currency symbols and ISO codes (word-bounded), collapsing double spaces."""
    out = _CURRENCY_RE.sub("", text)
    return _MULTISPACE_RE.sub(" ", out).strip()


def _grouped_ok(parts: list[str]) -> bool:
    """True when parts look like thousands grouping: 3-digit groups after the first.

    The first group is unconstrained (it may even be empty, as when OCR
    leaves a stray leading separator); only the later groups must be
    exactly three digits.
    """
    return len(parts) >= 2 and all(len(p) == 3 for p in parts[1:])


def normalize_number(text: str, locale_hint: str = "it") -> Optional[Decimal]:
    """Parse a localized numeric string to an exact decimal; None when unparseable.

    Steps: currency stripping; sign normalization; then separator
    resolution. With both separators present the rightmost is the decimal
    mark. With a single separator the ambiguous cases are resolved by
    locale: under ``it`` a lone comma is decimal when followed by 1-2
    digits, a lone dot is grouping when it partitions the digits into
    exact 3-digit groups after the first; under ``en`` the two separators
    swap those roles.
    """
    s = strip_currency(text).replace("\u2212", "-").strip()
    if s.endswith("%"):
        s = s[:-1]
    s = re.sub(r"\s+", "", s)
    negative = False
    if s[:1] in ("+", "-"):
        negative = s[0] == "-"
        s = s[1:]
    if not s or not any(ch.isdigit() for ch in s):
        return None
    if any(ch not in "0123456789.," for ch in s):
        return None

    has_dot = "." in s
    has_comma = "," in s
    if has_dot and has_comma:
        decimal_sep = "." if s.rfind(".") > s.rfind(",") else ","
        grouping_sep = "," if decimal_sep == "." else "."
        s = s.replace(grouping_sep, "")
        if s.count(decimal_sep) != 1:
            return None
        s = s.replace(decimal_sep, ".")
    elif has_dot or has_comma:
        sep = "." if has_dot else ","
        parts = s.split(sep)
        # which separator plays the decimal role under this locale
        decimal_role = (sep == ",") if locale_hint != "en" else (sep == ".")
        if decimal_role:
            if len(parts) == 2 and 1 <= len(parts[1]) <= 2:
                s = parts[0] + "." + parts[1]
            else:
                s = "".join(parts)
        else:
            if _grouped_ok(parts):
                s = "".join(parts)
            elif len(parts) == 2:
                s = parts[0] + "." + parts[1]
            else:
                return None

    try:
        value = Decimal(s)
    except InvalidOperation:
        return None
    return -value if negative else value
