"""Parsing raw model completions back into structured predictions."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

from .core import ChoiceSet, EntityMention
from .prompts import NONE_PAYLOAD, SPAN_SEPARATOR


class NoChoiceFound(ValueError):
    """The completion names no option of the choice set."""


@dataclass(frozen=True)
class TokenPrediction:
    mentions: tuple[EntityMention, ...] = ()
    unparsed_lines: tuple[str, ...] = ()
    matched_lines: int = 0

    @property
    def unaligned(self) -> list[EntityMention]:
        return [m for m in self.mentions if not m.aligned]


@dataclass(frozen=True)
class ChoicePrediction:
    letters: tuple[str, ...]
    raw: str = field(default="", compare=False)

    @property
    def first(self) -> str:
        if not self.letters:
            raise NoChoiceFound("empty prediction")
        return self.letters[0]


_EVENT_PREFIX = re.compile(r"^\S.*?\s-\s*$")


def _match_label(line: str, labels_by_len: Sequence[tuple[str, str]]) -> tuple[str, str] | None:
    """Return (label, payload) if ``line`` is ``Label: payload`` or ``Event - Label: payload``."""
    low = line.lower()
    for key, label in labels_by_len:
        probe = key + ":"
        if low.startswith(probe):
            return label, line[len(probe) :]
        idx = low.find(" " + probe)
        while idx >= 0:
            prefix = line[: idx + 1]
            if _EVENT_PREFIX.match(prefix):
                return label, line[idx + 1 + len(probe) :]
            idx = low.find(" " + probe, idx + 1)
    return None


def parse_token_output(text: str, label_set: Sequence[str]) -> TokenPrediction:
    labels = sorted(((lab.strip().lower(), lab) for lab in label_set), key=lambda kv: -len(kv[0]))
    mentions: list[EntityMention] = []
    unparsed: list[str] = []
    matched = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        hit = _match_label(line, labels)
        if hit is None:
            if line.lower() != NONE_PAYLOAD.lower():
                unparsed.append(line)
            continue
        matched += 1
        label, payload = hit
        payload = payload.strip()
        if payload.lower() == NONE_PAYLOAD.lower():
            continue
        for seg in payload.split(SPAN_SEPARATOR):
            seg = seg.strip()
            if seg:
                mentions.append(EntityMention(label=label, text=seg))
    return TokenPrediction(tuple(mentions), tuple(unparsed), matched)


def align_spans(prediction: TokenPrediction, source: str) -> TokenPrediction:
    """Attach character offsets by a greedy left-to-right search.

    Each mention is searched from a shared cursor; a miss retries from the
    start of the source, and a second miss leaves the mention unaligned.
    Only primary hits advance the cursor.
    """
    cursor = 0
    out = []
    for m in prediction.mentions:
        if m.aligned:
            out.append(m)
            continue
        pos = source.find(m.text, cursor)
        if pos >= 0:
            cursor = pos + len(m.text)
        else:
            pos = source.find(m.text)
        if pos >= 0:
            out.append(m.with_offsets(pos, pos + len(m.text)))
        else:
            out.append(m)
    return replace(prediction, mentions=tuple(out))


_LETTER_TOKEN = re.compile(r"\(([A-Z])\)")


def parse_choice_output(text: str, choices: ChoiceSet) -> ChoicePrediction:
    letters: list[str] = []
    pos = 0
    while True:
        m = _LETTER_TOKEN.search(text, pos)
        if m is None:
            break
        pos = m.end()
        letter = m.group(1)
        if letter not in choices:
            continue
        if letter not in letters:
            letters.append(letter)
        # skip the option's own description so "(B)" inside it is not read as a choice
        desc = choices[letter].description
        rest = text[pos:]
        stripped = rest.lstrip(" ")
        if stripped.startswith(desc):
            pos += len(rest) - len(stripped) + len(desc)
    if letters:
        return ChoicePrediction(tuple(letters), text)

    # fallback: an option description quoted as a whole phrase
    best = None
    for o in choices.options:
        if o.description and re.search(rf"(?<!\w){re.escape(o.description)}(?!\w)", text, re.IGNORECASE):
            if best is None or len(o.description) > len(best.description):
                best = o
    if best is None:
        raise NoChoiceFound(f"no option found in {text[:80]!r}")
    return ChoicePrediction((best.letter,), text)


def choice_to_score(pred: ChoicePrediction, choices: ChoiceSet) -> int:
    canonical = choices[pred.first].canonical
    if isinstance(canonical, bool) or not isinstance(canonical, int):
        raise TypeError(f"option {pred.first} has non-integer canonical {canonical!r}")
    return canonical


def prediction_record(
    instance_id: str,
    tokens: TokenPrediction | None = None,
    choice: ChoicePrediction | None = None,
    score: int | None = None,
    **extra: Any,
) -> dict[str, Any]:
    """Prediction JSONL record; absent fields are omitted."""
    rec: dict[str, Any] = {"instance_id": instance_id}
    if tokens is not None:
        rec["mentions"] = [m.to_dict() for m in tokens.mentions]
    if choice is not None:
        rec["letters"] = list(choice.letters)
    if score is not None:
        rec["score"] = score
    rec.update({k: v for k, v in extra.items() if v is not None})
    return rec
