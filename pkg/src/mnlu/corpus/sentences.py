"""Rule-based sentence segmentation and context windows."""

from __future__ import annotations

import re
from typing import NamedTuple, Sequence

# Tokens that end in a period but never end a sentence. Matched case-insensitively
# against the whitespace-delimited token carrying the period.
ABBREVIATIONS = frozenset(
    """
    dr. drs. mr. mrs. ms. prof. st. sr. jr. vs. v. e.g. i.e. cf. al. approx. fig. figs.
    vol. pp. inc. ltd. dept. univ. resp. pt. pts. hx. dx. tx. rx. sx. fx. y.o. b.i.d.
    t.i.d. q.i.d. q.d. p.o. p.r.n. i.v. i.m. s.c. a.m. p.m. mg. mcg. ml. incl. ref. refs.
    jan. feb. mar. apr. jun. jul. aug. sep. sept. oct. nov. dec.
    """.split()
)

_BOUNDARY = re.compile(r"[.?!][\"')\]]*(?=\s+[A-Z0-9])")


class Sentence(NamedTuple):
    text: str
    char_start: int
    char_end: int


def _is_abbreviation(document: str, punct_pos: int) -> bool:
    if document[punct_pos] != ".":
        return False
    start = punct_pos
    while start > 0 and not document[start - 1].isspace():
        start -= 1
    token = document[start : punct_pos + 1].lower().lstrip("([\"'")
    return token in ABBREVIATIONS


def split_sentences(document: str) -> list[Sentence]:
    """Split after ``.``/``?``/``!`` followed by whitespace and an uppercase letter or digit.

    Sentences are whitespace-trimmed; everything between consecutive
    sentences is whitespace, so the slices reproduce the document.
    """
    cuts = []
    for m in _BOUNDARY.finditer(document):
        if not _is_abbreviation(document, m.start()):
            cuts.append(m.end())
    out = []
    prev = 0
    for cut in cuts + [len(document)]:
        chunk = document[prev:cut]
        stripped = chunk.strip()
        if stripped:
            lead = len(chunk) - len(chunk.lstrip())
            start = prev + lead
            out.append(Sentence(stripped, start, start + len(stripped)))
        prev = cut
    return out


def merge_spans(sentences: Sequence[Sentence], document: str, spans: Sequence[tuple[int, int]]) -> list[Sentence]:
    """Join adjacent sentences wherever one of ``spans`` crosses a boundary."""
    merged: list[Sentence] = []
    for s in sentences:
        if merged and any(a < merged[-1].char_end and b > s.char_start for a, b in spans):
            start = merged[-1].char_start
            merged[-1] = Sentence(document[start : s.char_end], start, s.char_end)
        else:
            merged.append(s)
    return merged


class IndexOutOfRange(IndexError):
    pass


class ContextWindow(NamedTuple):
    before: list
    target: object
    after: list


def context_window(sentences: Sequence, index: int, k: int) -> ContextWindow:
    if not 0 <= index < len(sentences):
        raise IndexOutOfRange(f"sentence index {index} outside [0, {len(sentences)})")
    if k < 0:
        raise ValueError("k must be >= 0")
    before = list(sentences[max(0, index - k) : index])
    after = list(sentences[index + 1 : index + 1 + k])
    return ContextWindow(before, sentences[index], after)


ELLIPSIS = "..."


def excerpt_context(sentences: Sequence[str], index: int, k: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Context lists for an instance, with ``...`` where the window clips the document."""
    before, _, after = context_window(sentences, index, k)
    lead = (ELLIPSIS,) if index - len(before) > 0 else ()
    trail = (ELLIPSIS,) if index + len(after) < len(sentences) - 1 else ()
    return lead + tuple(str(s) for s in before), tuple(str(s) for s in after) + trail
