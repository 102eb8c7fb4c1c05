"""Domain types shared by every stage of the pipeline.

All persisted artifacts go through ``NluInstance.to_dict`` / ``from_dict``;
the JSONL form (one instance per line, snake_case keys) is the interchange
format between corpus building, rendering, inference and scoring.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence, Union


class OutputCategory(str, Enum):
    TOKEN_CLASSIFICATION = "token_classification"
    SEQUENCE_CLASSIFICATION = "sequence_classification"
    SEQUENCE_REGRESSION = "sequence_regression"
    GENERATION = "generation"


class TaskKind(str, Enum):
    NER = "NER"
    ETE = "ETE"  # event trigger extraction
    EAE = "EAE"  # event argument extraction
    EAC = "EAC"  # event argument classification
    DC = "DC"
    RE = "RE"
    NLI = "NLI"
    QA = "QA"
    STS = "STS"
    SUM = "SUM"

    @classmethod
    def parse(cls, value: str | TaskKind) -> TaskKind:
        if isinstance(value, TaskKind):
            return value
        key = value.strip()
        if key.upper() in cls.__members__:
            return cls[key.upper()]
        try:
            return _LONG_NAMES[key.lower().replace("_", "").replace(" ", "")]
        except KeyError:
            raise ValueError(f"unknown task kind {value!r}") from None

    @property
    def category(self) -> OutputCategory:
        return output_category(self)


_LONG_NAMES = {
    "namedentityrecognition": TaskKind.NER,
    "eventtriggerextraction": TaskKind.ETE,
    "eventargumentextraction": TaskKind.EAE,
    "eventargumentclassification": TaskKind.EAC,
    "documentclassification": TaskKind.DC,
    "relationextraction": TaskKind.RE,
    "naturallanguageinference": TaskKind.NLI,
    "questionanswering": TaskKind.QA,
    "semantictextualsimilarity": TaskKind.STS,
    "summarization": TaskKind.SUM,
}

_CATEGORIES = {
    TaskKind.NER: OutputCategory.TOKEN_CLASSIFICATION,
    TaskKind.ETE: OutputCategory.TOKEN_CLASSIFICATION,
    TaskKind.EAE: OutputCategory.TOKEN_CLASSIFICATION,
    TaskKind.EAC: OutputCategory.SEQUENCE_CLASSIFICATION,
    TaskKind.DC: OutputCategory.SEQUENCE_CLASSIFICATION,
    TaskKind.RE: OutputCategory.SEQUENCE_CLASSIFICATION,
    TaskKind.NLI: OutputCategory.SEQUENCE_CLASSIFICATION,
    TaskKind.QA: OutputCategory.SEQUENCE_CLASSIFICATION,
    TaskKind.STS: OutputCategory.SEQUENCE_REGRESSION,
    TaskKind.SUM: OutputCategory.GENERATION,
}

TOKEN_TASKS = frozenset(t for t, c in _CATEGORIES.items() if c is OutputCategory.TOKEN_CLASSIFICATION)
CHOICE_TASKS = frozenset(
    t
    for t, c in _CATEGORIES.items()
    if c in (OutputCategory.SEQUENCE_CLASSIFICATION, OutputCategory.SEQUENCE_REGRESSION)
)


def output_category(task: TaskKind) -> OutputCategory:
    return _CATEGORIES[TaskKind.parse(task)]


class ValidationError(ValueError):
    """An instance or annotation violates a structural invariant."""


@dataclass(frozen=True)
class EntityMention:
    label: str
    text: str
    char_start: int | None = None
    char_end: int | None = None
    occurrence_hint: int | None = None

    def __post_init__(self) -> None:
        if (self.char_start is None) != (self.char_end is None):
            raise ValidationError("char_start and char_end must be given together")
        if self.char_start is not None and not 0 <= self.char_start < self.char_end:
            raise ValidationError(f"bad span [{self.char_start}, {self.char_end}) for {self.text!r}")

    @property
    def aligned(self) -> bool:
        return self.char_start is not None

    def with_offsets(self, start: int | None, end: int | None) -> EntityMention:
        return replace(self, char_start=start, char_end=end)

    def check_against(self, source: str) -> None:
        if self.aligned and source[self.char_start : self.char_end] != self.text:
            raise ValidationError(
                f"mention {self.text!r} does not match source slice "
                f"{source[self.char_start:self.char_end]!r} at [{self.char_start}, {self.char_end})"
            )

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"label": self.label, "text": self.text}
        if self.aligned:
            d["char_start"] = self.char_start
            d["char_end"] = self.char_end
        if self.occurrence_hint is not None:
            d["occurrence_hint"] = self.occurrence_hint
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EntityMention:
        return cls(
            label=d["label"],
            text=d["text"],
            char_start=d.get("char_start"),
            char_end=d.get("char_end"),
            occurrence_hint=d.get("occurrence_hint"),
        )


Canonical = Union[str, int]

LETTERS = string.ascii_uppercase
MAX_RENDERED_OPTIONS = len(LETTERS)


def letter_name(i: int) -> str:
    """A..Z, then AA, AB... for label pools larger than what a prompt can show."""
    name = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        name = LETTERS[r] + name
    return name


def letter_index(name: str) -> int:
    """Inverse of :func:`letter_name`; -1 for anything that is not a letter name."""
    if not name or any(c not in LETTERS for c in name):
        return -1
    i = 0
    for c in name:
        i = i * 26 + LETTERS.index(c) + 1
    return i - 1


@dataclass(frozen=True)
class ChoiceOption:
    letter: str
    description: str
    canonical: Canonical


@dataclass(frozen=True)
class ChoiceSet:
    options: tuple[ChoiceOption, ...]
    multi_select: bool = False

    def __post_init__(self) -> None:
        if not self.options:
            raise ValidationError("a choice set needs at least one option")
        for i, opt in enumerate(self.options):
            if opt.letter != letter_name(i):
                raise ValidationError(f"option {i} has letter {opt.letter!r}, expected {letter_name(i)!r}")
        descs = [o.description for o in self.options]
        if len(set(descs)) != len(descs):
            raise ValidationError("option descriptions must be unique")
        scores = [o.canonical for o in self.options if isinstance(o.canonical, int)]
        if scores and len(scores) == len(self.options):
            ordered = sorted(scores)
            if ordered != list(range(ordered[0], ordered[0] + len(ordered))):
                raise ValidationError("integer canonicals must form a contiguous range")

    @classmethod
    def build(
        cls,
        descriptions: Sequence[str],
        canonicals: Sequence[Canonical] | None = None,
        multi_select: bool = False,
    ) -> ChoiceSet:
        """Letter ``descriptions`` A, B, C... in order.

        Canonicals default to the descriptions themselves.
        """
        if canonicals is None:
            canonicals = list(descriptions)
        if len(canonicals) != len(descriptions):
            raise ValidationError("descriptions and canonicals differ in length")
        opts = tuple(
            ChoiceOption(letter_name(i), d, c) for i, (d, c) in enumerate(zip(descriptions, canonicals))
        )
        return cls(opts, multi_select)

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(o.letter for o in self.options)

    @property
    def is_scale(self) -> bool:
        return all(isinstance(o.canonical, int) and not isinstance(o.canonical, bool) for o in self.options)

    def __len__(self) -> int:
        return len(self.options)

    def __getitem__(self, letter: str) -> ChoiceOption:
        idx = letter_index(letter) if isinstance(letter, str) else -1
        if not 0 <= idx < len(self.options):
            raise KeyError(letter)
        return self.options[idx]

    def __contains__(self, letter: object) -> bool:
        return isinstance(letter, str) and 0 <= letter_index(letter) < len(self.options)

    def letter_for(self, canonical: Canonical) -> str:
        for o in self.options:
            if o.canonical == canonical:
                return o.letter
        raise KeyError(canonical)

    def to_dict(self) -> dict[str, Any]:
        return {
            "options": [
                {"letter": o.letter, "description": o.description, "canonical": o.canonical}
                for o in self.options
            ],
            "multi_select": self.multi_select,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ChoiceSet:
        opts = d["options"]
        descs = [o["description"] if isinstance(o, dict) else o for o in opts]
        canon = [o.get("canonical", o["description"]) if isinstance(o, dict) else o for o in opts]
        return cls.build(descs, canon, bool(d.get("multi_select", False)))


Gold = Union[tuple[EntityMention, ...], frozenset, int, str]


@dataclass(frozen=True)
class NluInstance:
    """One task example.

    ``label_set`` is a tuple of label names for token tasks and a ``ChoiceSet``
    for choice tasks. ``gold`` is a tuple of mentions, a frozenset of letters,
    an integer score or free text depending on the task's output category.
    ``premise``/``hypothesis`` carry the sentence pair for both NLI and STS.
    ``context_before``/``context_after`` are rendered verbatim around the
    source text, so clipped edges carry a literal ``"..."`` element.
    """

    id: str
    dataset: str
    task: TaskKind
    source_text: str
    label_set: tuple[str, ...] | ChoiceSet | None = None
    gold: Any = None
    context_before: tuple[str, ...] | None = None
    context_after: tuple[str, ...] | None = None
    question: str | None = None
    premise: str | None = None
    hypothesis: str | None = None
    trigger: EntityMention | None = None
    entity_pair: tuple[EntityMention, EntityMention] | None = None
    argument: str | None = None
    topic: str | None = None
    template: str | None = None

    @property
    def category(self) -> OutputCategory:
        return output_category(self.task)

    @property
    def choices(self) -> ChoiceSet:
        if not isinstance(self.label_set, ChoiceSet):
            raise ValidationError(f"{self.id}: task {self.task.value} has no choice set")
        return self.label_set

    @property
    def labels(self) -> tuple[str, ...]:
        if isinstance(self.label_set, ChoiceSet) or self.label_set is None:
            raise ValidationError(f"{self.id}: task {self.task.value} has no token label list")
        return self.label_set

    def validate(self) -> list[str]:
        """Raise on hard violations; return soft warnings."""
        warnings: list[str] = []
        cat = self.category
        if cat is OutputCategory.TOKEN_CLASSIFICATION:
            if isinstance(self.label_set, ChoiceSet) or not self.label_set:
                raise ValidationError(f"{self.id}: token task needs a non-empty label list")
            if not isinstance(self.gold, tuple) or not all(isinstance(m, EntityMention) for m in self.gold):
                raise ValidationError(f"{self.id}: token task gold must be a list of mentions")
            for m in self.gold:
                m.check_against(self.source_text)
        elif cat is OutputCategory.SEQUENCE_CLASSIFICATION:
            choices = self.choices
            if not isinstance(self.gold, frozenset):
                raise ValidationError(f"{self.id}: choice task gold must be a set of letters")
            unknown = [g for g in self.gold if g not in choices]
            if unknown:
                raise ValidationError(f"{self.id}: gold letters {sorted(unknown)} not in choice set")
            if not choices.multi_select and len(self.gold) != 1:
                raise ValidationError(f"{self.id}: single-select gold must hold exactly one letter")
            if not self.gold:
                warnings.append(f"{self.id}: empty gold label set")
        elif cat is OutputCategory.SEQUENCE_REGRESSION:
            # a missing label set means the renderer's default scale
            if self.label_set is not None and not self.choices.is_scale:
                raise ValidationError(f"{self.id}: regression task needs integer canonicals")
            if isinstance(self.gold, bool) or not isinstance(self.gold, int):
                raise ValidationError(f"{self.id}: regression gold must be an integer score")
        else:
            if not isinstance(self.gold, str):
                raise ValidationError(f"{self.id}: generation gold must be text")
        if self.trigger is not None:
            self.trigger.check_against(self.source_text)
        return warnings

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "dataset": self.dataset,
            "task": self.task.value,
            "source_text": self.source_text,
        }
        if isinstance(self.label_set, ChoiceSet):
            d["label_set"] = self.label_set.to_dict()
        elif self.label_set is not None:
            d["label_set"] = list(self.label_set)
        if isinstance(self.gold, tuple):
            d["gold"] = [m.to_dict() for m in self.gold]
        elif isinstance(self.gold, frozenset):
            d["gold"] = sorted(self.gold)
        else:
            d["gold"] = self.gold
        for key in ("context_before", "context_after"):
            val = getattr(self, key)
            if val is not None:
                d[key] = list(val)
        for key in ("question", "premise", "hypothesis", "argument", "topic", "template"):
            val = getattr(self, key)
            if val is not None:
                d[key] = val
        if self.trigger is not None:
            d["trigger"] = self.trigger.to_dict()
        if self.entity_pair is not None:
            d["entity_pair"] = [m.to_dict() for m in self.entity_pair]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> NluInstance:
        try:
            task = TaskKind.parse(d["task"])
            raw_labels = d.get("label_set")
            cat = output_category(task)
            label_set: tuple[str, ...] | ChoiceSet | None
            if raw_labels is None:
                label_set = None
            elif isinstance(raw_labels, dict):
                label_set = ChoiceSet.from_dict(raw_labels)
            else:
                label_set = tuple(raw_labels)
            raw_gold = d.get("gold")
            gold: Any
            if cat is OutputCategory.TOKEN_CLASSIFICATION:
                gold = tuple(EntityMention.from_dict(m) for m in (raw_gold or []))
            elif cat is OutputCategory.SEQUENCE_CLASSIFICATION:
                if isinstance(raw_gold, str):
                    raw_gold = [raw_gold]
                gold = frozenset(raw_gold or [])
            else:
                gold = raw_gold
            pair = d.get("entity_pair")
            trig = d.get("trigger")
            return cls(
                id=str(d["id"]),
                dataset=d["dataset"],
                task=task,
                source_text=d.get("source_text", ""),
                label_set=label_set,
                gold=gold,
                context_before=_opt_tuple(d.get("context_before")),
                context_after=_opt_tuple(d.get("context_after")),
                question=d.get("question"),
                premise=d.get("premise"),
                hypothesis=d.get("hypothesis"),
                trigger=EntityMention.from_dict(trig) if trig else None,
                entity_pair=(
                    (EntityMention.from_dict(pair[0]), EntityMention.from_dict(pair[1])) if pair else None
                ),
                argument=d.get("argument"),
                topic=d.get("topic"),
                template=d.get("template"),
            )
        except KeyError as exc:
            raise ValidationError(f"missing field {exc.args[0]!r}") from None


def _opt_tuple(val: Iterable[str] | None) -> tuple[str, ...] | None:
    return None if val is None else tuple(val)


@dataclass(frozen=True)
class PromptPair:
    instance_id: str
    input: str
    output: str

    def to_dict(self) -> dict[str, str]:
        return {"instance_id": self.instance_id, "input": self.input, "output": self.output}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PromptPair:
        return cls(instance_id=str(d["instance_id"]), input=d["input"], output=d["output"])


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if line.strip():
                yield line_no, json.loads(line)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=False))
            f.write("\n")
            n += 1
    return n


def load_instances(path: str | Path) -> list[NluInstance]:
    out = []
    for line_no, rec in read_jsonl(path):
        try:
            inst = NluInstance.from_dict(rec)
            inst.validate()
        except ValidationError as exc:
            raise ValidationError(f"{path}:{line_no}: {exc}") from None
        out.append(inst)
    return out


def dump_instances(path: str | Path, instances: Iterable[NluInstance]) -> int:
    return write_jsonl(path, (i.to_dict() for i in instances))


__all__ = [
    "CHOICE_TASKS",
    "TOKEN_TASKS",
    "ChoiceOption",
    "ChoiceSet",
    "EntityMention",
    "NluInstance",
    "OutputCategory",
    "PromptPair",
    "TaskKind",
    "ValidationError",
    "dump_instances",
    "load_instances",
    "output_category",
    "read_jsonl",
    "write_jsonl",
]
