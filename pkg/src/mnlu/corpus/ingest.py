"""Dataset loaders: CoNLL-style BIO, brat standoff and canonical JSONL."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from ..core import ChoiceSet, EntityMention, NluInstance, TaskKind, ValidationError
from ..prompts import expand_label_name
from .sentences import excerpt_context, split_sentences


class Domain(str, Enum):
    BIOMEDICAL = "biomedical"
    CLINICAL = "clinical"
    GENERAL = "general"


class Format(str, Enum):
    CONLL_BIO = "conll_bio"
    BRAT_STANDOFF = "brat_standoff"
    JSONL_NATIVE = "jsonl_native"


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"
    ALL = "all"


class IngestError(ValueError):
    pass


class MalformedRecord(IngestError):
    def __init__(self, line_no: int, reason: str, path: str | Path | None = None):
        self.line_no = line_no
        self.reason = reason
        where = f"{path}:{line_no}" if path else f"line {line_no}"
        super().__init__(f"{where}: {reason}")


class SchemaMismatch(IngestError):
    pass


NEGATIVE_RELATION = "None of the above."


@dataclass(frozen=True)
class DatasetDescriptor:
    name: str
    task: TaskKind
    domain: Domain
    format: Format
    path: Path
    split: Split = Split.TRAIN
    labels: tuple[str, ...] | None = None
    aliases: Mapping[str, str] = field(default_factory=dict)
    # preprocessing switches
    sentence_split: bool = True
    negatives: bool = False
    summarize_type: str | None = None
    output_ratio: bool = False
    context_sentences: int = 2
    topic: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", TaskKind.parse(self.task))
        object.__setattr__(self, "domain", Domain(self.domain))
        object.__setattr__(self, "format", Format(self.format))
        object.__setattr__(self, "split", Split(self.split))
        object.__setattr__(self, "path", Path(self.path))


def ingest(desc: DatasetDescriptor) -> list[NluInstance]:
    if not desc.path.exists():
        raise FileNotFoundError(f"{desc.name}: {desc.path} does not exist")
    if desc.format is Format.CONLL_BIO:
        return read_conll_bio(desc)
    if desc.format is Format.BRAT_STANDOFF:
        return read_brat(desc)
    return read_jsonl_native(desc)


# -- CoNLL BIO ---------------------------------------------------------------


def bio_to_spans(tags: list[str]) -> list[tuple[int, int, str]]:
    """Token spans ``(start, end_exclusive, label)`` from BIO tags.

    An ``I-`` tag that does not continue a span of the same label opens a new one.
    """
    spans = []
    cur: list | None = None
    for i, tag in enumerate(tags):
        if tag.startswith("I-") and cur is not None and cur[2] == tag[2:]:
            cur[1] = i + 1
            continue
        if cur is not None:
            spans.append(tuple(cur))
            cur = None
        if tag.startswith(("B-", "I-")):
            cur = [i, i + 1, tag[2:]]
    if cur is not None:
        spans.append(tuple(cur))
    return spans


def _conll_sentences(path: Path) -> Iterable[tuple[int, list[tuple[str, str]]]]:
    tokens: list[tuple[str, str]] = []
    first_line = 0
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.rstrip("\n\r")
            if line.startswith("-DOCSTART-") or line.startswith("#"):
                continue
            if not line.strip():
                if tokens:
                    yield first_line, tokens
                    tokens = []
                continue
            cols = line.split("\t") if "\t" in line else line.split()
            if len(cols) < 2:
                raise MalformedRecord(line_no, "expected a token and a tag", path)
            tag = cols[-1].strip()
            if tag != "O" and not re.match(r"^[BI]-.+", tag):
                raise MalformedRecord(line_no, f"bad BIO tag {tag!r}", path)
            if not tokens:
                first_line = line_no
            tokens.append((cols[0], tag))
    if tokens:
        yield first_line, tokens


def read_conll_bio(desc: DatasetDescriptor) -> list[NluInstance]:
    records = []
    seen_labels: list[str] = []
    for line_no, toks in _conll_sentences(desc.path):
        offsets = []
        pos = 0
        for form, _ in toks:
            offsets.append((pos, pos + len(form)))
            pos += len(form) + 1
        text = " ".join(form for form, _ in toks)
        mentions = []
        for s, e, label in bio_to_spans([t for _, t in toks]):
            label = expand_label_name(label, desc.aliases)
            if label not in seen_labels:
                seen_labels.append(label)
            a, b = offsets[s][0], offsets[e - 1][1]
            mentions.append(EntityMention(label, text[a:b], a, b))
        records.append((line_no, text, tuple(mentions)))
    labels = _label_list(desc, seen_labels)
    out = []
    for n, (line_no, text, mentions) in enumerate(records):
        inst = NluInstance(
            id=f"{desc.name}-{n}", dataset=desc.name, task=desc.task,
            source_text=text, label_set=labels, gold=mentions,
        )
        _validate(inst, line_no, desc.path)
        out.append(inst)
    return out


def _label_list(desc: DatasetDescriptor, seen: list[str]) -> tuple[str, ...]:
    if desc.labels:
        return tuple(expand_label_name(lab, desc.aliases) for lab in desc.labels)
    return tuple(seen)


def _validate(inst: NluInstance, line_no: int, path: Path) -> None:
    try:
        inst.validate()
    except ValidationError as exc:
        raise MalformedRecord(line_no, str(exc), path) from None


# -- brat standoff -----------------------------------------------------------


def _parse_ann(path: Path, text: str) -> tuple[dict[str, EntityMention], list[tuple[str, str, str]]]:
    entities: dict[str, EntityMention] = {}
    relations = []
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.rstrip("\n\r")
            if not line.strip() or line.startswith("#"):
                continue
            if line.startswith("T"):
                if "\t" in line:
                    parts = line.split("\t")
                    if len(parts) < 3:
                        raise MalformedRecord(line_no, "text-bound annotation needs id, type/offsets and text", path)
                    ann_id, middle, surface = parts[0], parts[1], "\t".join(parts[2:])
                    fields = middle.split()
                else:
                    parts = line.split(" ", 4)
                    if len(parts) < 5:
                        raise MalformedRecord(line_no, "text-bound annotation needs id, type, offsets and text", path)
                    ann_id, fields, surface = parts[0], parts[1:4], parts[4]
                if len(fields) != 3 or any(";" in f for f in fields):
                    raise MalformedRecord(line_no, "discontinuous or malformed offsets are not supported", path)
                label, start_s, end_s = fields
                try:
                    start, end = int(start_s), int(end_s)
                except ValueError:
                    raise MalformedRecord(line_no, f"non-integer offsets {start_s!r} {end_s!r}", path) from None
                if not 0 <= start < end <= len(text):
                    raise MalformedRecord(line_no, f"offsets [{start}, {end}) outside the document", path)
                if text[start:end] != surface:
                    raise MalformedRecord(
                        line_no, f"text {surface!r} does not match source slice {text[start:end]!r}", path
                    )
                entities[ann_id] = EntityMention(label, surface, start, end)
            elif line.startswith("R"):
                parts = line.split("\t")[1].split() if "\t" in line else line.split()[1:]
                if len(parts) != 3:
                    raise MalformedRecord(line_no, "relation needs a type and two arguments", path)
                rel, a1, a2 = parts
                try:
                    relations.append((rel, a1.split(":", 1)[1], a2.split(":", 1)[1]))
                except IndexError:
                    raise MalformedRecord(line_no, "relation arguments must look like Arg1:T1", path) from None
    return entities, relations


def _brat_documents(path: Path) -> list[Path]:
    if path.is_file():
        return [path if path.suffix == ".ann" else path.with_suffix(".ann")]
    return sorted(path.glob("*.ann"))


def read_brat(desc: DatasetDescriptor) -> list[NluInstance]:
    out: list[NluInstance] = []
    seen_labels: list[str] = []
    docs = []
    for ann in _brat_documents(desc.path):
        txt = ann.with_suffix(".txt")
        if not txt.exists():
            raise SchemaMismatch(f"{ann} has no matching .txt file")
        # newline="" keeps \r\n intact so standoff offsets stay valid
        with open(txt, encoding="utf-8", newline="") as f:
            text = f.read()
        entities, relations = _parse_ann(ann, text)
        docs.append((ann.stem, text, entities, relations))
        for m in entities.values():
            lab = expand_label_name(m.label, desc.aliases)
            if lab not in seen_labels:
                seen_labels.append(lab)

    if desc.task is TaskKind.RE:
        for stem, text, entities, relations in docs:
            out.extend(_relation_instances(desc, stem, text, entities, relations))
        return out

    if desc.task not in (TaskKind.NER, TaskKind.ETE):
        raise SchemaMismatch(f"brat standoff ingestion supports NER, ETE and RE, not {desc.task.value}")
    labels = _label_list(desc, seen_labels)
    for stem, text, entities, _ in docs:
        mentions = tuple(
            sorted(
                (EntityMention(expand_label_name(m.label, desc.aliases), m.text, m.char_start, m.char_end)
                 for m in entities.values()),
                key=lambda m: (m.char_start, m.char_end),
            )
        )
        inst = NluInstance(
            id=f"{desc.name}-{stem}", dataset=desc.name, task=desc.task,
            source_text=text, label_set=labels, gold=mentions,
        )
        _validate(inst, 0, desc.path)
        out.append(inst)
    return out


def _relation_instances(desc, stem, text, entities, relations) -> list[NluInstance]:
    rel_types: list[str] = list(desc.labels) if desc.labels else sorted({r for r, _, _ in relations})
    descriptions = [expand_label_name(r, desc.aliases) for r in rel_types] + [NEGATIVE_RELATION]
    choices = ChoiceSet.build(descriptions, rel_types + [NEGATIVE_RELATION])
    gold_pairs = {}
    for rel, a1, a2 in relations:
        if a1 not in entities or a2 not in entities:
            raise SchemaMismatch(f"{stem}: relation refers to unknown entity {a1} or {a2}")
        gold_pairs[frozenset((a1, a2))] = rel
    sentences = split_sentences(text)
    sent_texts = [s.text for s in sentences]
    out = []
    ordered = sorted(entities.items(), key=lambda kv: (kv[1].char_start, kv[1].char_end))
    for si, sent in enumerate(sentences):
        inside = [(k, m) for k, m in ordered if sent.char_start <= m.char_start and m.char_end <= sent.char_end]
        for x in range(len(inside)):
            for y in range(x + 1, len(inside)):
                (ka, ma), (kb, mb) = inside[x], inside[y]
                rel = gold_pairs.get(frozenset((ka, kb)), NEGATIVE_RELATION)
                before, after = excerpt_context(sent_texts, si, desc.context_sentences)
                shift = sent.char_start
                pair = tuple(
                    EntityMention(m.label, m.text, m.char_start - shift, m.char_end - shift) for m in (ma, mb)
                )
                out.append(
                    NluInstance(
                        id=f"{desc.name}-{stem}-{ka}-{kb}", dataset=desc.name, task=TaskKind.RE,
                        source_text=sent.text, label_set=choices,
                        gold=frozenset([choices.letter_for(rel)]),
                        context_before=before, context_after=after,
                        entity_pair=pair, topic=desc.topic or "",
                    )
                )
    return out


# -- canonical JSONL ---------------------------------------------------------


def read_jsonl_native(desc: DatasetDescriptor) -> list[NluInstance]:
    out = []
    with open(desc.path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}", desc.path) from None
            if not isinstance(rec, dict):
                raise MalformedRecord(line_no, "record is not a JSON object", desc.path)
            rec.setdefault("dataset", desc.name)
            try:
                inst = NluInstance.from_dict(rec)
            except (ValidationError, ValueError, TypeError) as exc:
                raise MalformedRecord(line_no, str(exc), desc.path) from None
            if inst.task is not desc.task:
                raise SchemaMismatch(
                    f"{desc.path}:{line_no}: record task {inst.task.value} but dataset is {desc.task.value}"
                )
            _validate(inst, line_no, desc.path)
            out.append(inst)
    return out
