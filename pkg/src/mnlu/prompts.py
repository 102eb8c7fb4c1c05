"""Rendering NLU instances into instruction prompts and gold outputs.

Token tasks emit one ``<Label>: span ... span`` line per label; choice tasks
list ``(A) description`` options and answer with the chosen option tokens.
Rendering is split in two steps: :func:`prepare` applies the seeded label
shuffle (and optional negative-category sampling) and returns a new instance
whose ``label_set`` and ``gold`` are already in presentation order, and the
``render_*`` functions format a prepared instance without further randomness.
Parsers must therefore be given the *prepared* label set.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .core import (
    ChoiceSet,
    MAX_RENDERED_OPTIONS,
    EntityMention,
    NluInstance,
    OutputCategory,
    PromptPair,
    TaskKind,
)
from .rng import SplitMix64, derive_seed

SPAN_SEPARATOR = " ... "
NONE_PAYLOAD = "None"

NER_FEWSHOT_PREAMBLE = (
    "Your answer should use the following format, with one entity type per line. "
    "The span refers to the original text span from the Medical text. "
    "Output None if there is no such span. Use `...' to separate multiple spans."
)

DEFAULT_LABEL_ALIASES = {
    "GENERIF": "Gene reference into a function (function of a gene)",
}

# Placeholders are filled by ``_fields``; datasets may override via NluInstance.template.
TEMPLATES: dict[TaskKind, str] = {
    TaskKind.NER: (
        "Extract all relevant medical named entities faithfully from the medical text below. "
        "Focus on identifying the following entities: {labels}.\n\nMedical text: {context}"
    ),
    TaskKind.ETE: (
        "Extract all relevant medical named entities faithfully from the medical text below. "
        "Focus on identifying the following entities: {labels}.\n\nMedical text: {context}"
    ),
    TaskKind.EAE: (
        "According to the medical text, what is the {argument} attribute of the {event} event "
        "`{trigger}' in the medical text below? Extract the attribute faithfully from the medical text."
        "\n\nMedical text: {context}"
    ),
    TaskKind.EAC: (
        "According to the medical text, what is the {argument} attribute of the {event} event "
        "`{trigger}' in the medical text below? Choose from the following options."
        "\n\nMedical text: {context}\n\nOptions: {options}"
    ),
    TaskKind.DC: (
        "According to the medical text below, which options best describe {topic}? "
        "Choose from the following options.{multi}\n\nMedical text: {context}\n\nOptions: {options}"
    ),
    TaskKind.RE: (
        "According to the Medical text below, what is the {topic} relationship between the "
        "{head_label} entity `{head}' and the {tail_label} entity `{tail}'? "
        "Choose from the following options.\n\nMedical text: {context}\n\nOptions: {options}"
    ),
    TaskKind.QA: (
        "According to the medical literature below, {question} Choose from the following options. "
        "Only one option can be true.\n\nMedical literature: {context}\n\nOptions: {options}"
    ),
    TaskKind.NLI: (
        "What is the relationship of the hypothesis with respect to the premise? "
        "Choose from the following options.\n\nPremise: {premise}\n\nHypothesis: {hypothesis}"
        "\n\nOptions: {options}"
    ),
    TaskKind.STS: (
        "How similar are the two sentences below? Choose from the following options."
        "\n\nSentence 1: {premise}\n\nSentence 2: {hypothesis}\n\nOptions: {options}"
    ),
    TaskKind.SUM: "Summarize the following medical text.\n\nMedical text: {context}",
}

MULTI_SELECT_NOTE = " Multiple options can be true."


class RenderError(ValueError):
    pass


class UnknownGoldLabel(RenderError):
    pass


class GoldNotInChoices(RenderError):
    pass


class ScoreOutOfScale(RenderError):
    pass


class SeparatorCollision(RenderError):
    """A span cannot be written unambiguously in the line grammar."""


class TooManyOptions(RenderError):
    pass


class PoolTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class RenderOptions:
    seed: int = 0
    shuffle_labels: bool = False
    context_sentences: int = 2
    negative_category_count: int = 12
    sample_negatives: bool = False

    def __post_init__(self) -> None:
        if self.context_sentences < 0 or self.negative_category_count < 0:
            raise ValueError("context_sentences and negative_category_count must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class StsScale:
    entries: tuple[tuple[int, str], ...]

    def __post_init__(self) -> None:
        scores = [s for s, _ in self.entries]
        if any(b <= a for a, b in zip(scores, scores[1:])):
            raise ValueError("scale scores must be strictly increasing")
        phrases = [p for _, p in self.entries]
        if len(set(phrases)) != len(phrases):
            raise ValueError("scale phrases must be unique")

    def choice_set(self) -> ChoiceSet:
        return ChoiceSet.build([p for _, p in self.entries], [s for s, _ in self.entries])

    @property
    def scores(self) -> range:
        return range(self.entries[0][0], self.entries[-1][0] + 1)


# Phrase for score 2 has no trailing period in the published prompt; kept as is.
DEFAULT_STS_SCALE = StsScale(
    (
        (0, "The two sentences are completely dissimilar."),
        (1, "The two sentences are not equivalent, but are on the same topic."),
        (2, "The two sentences are not equivalent, but share some details"),
        (3, "The two sentences are roughly equivalent, but some important information differs / missing."),
        (4, "The two sentences are mostly equivalent, but some unimportant details differ."),
        (5, "The two sentences are completely or mostly equivalent, as they mean the same thing."),
    )
)


def expand_label_name(raw: str, aliases: Mapping[str, str]) -> str:
    return aliases.get(raw, raw)


def ner_fewshot_preamble() -> str:
    return NER_FEWSHOT_PREAMBLE


def shuffle_choice_order(labels: Sequence, seed: int) -> list:
    out = list(labels)
    SplitMix64(seed).shuffle(out)
    return out


def sample_negative_categories(gold: Sequence[str], pool: Sequence[str], n: int, seed: int) -> list[str]:
    """Gold labels plus ``n`` negatives drawn without replacement, in pool order."""
    gold_set = set(gold)
    missing = gold_set.difference(pool)
    if missing:
        raise ValueError(f"gold labels {sorted(missing)} are not in the pool")
    negatives = [p for p in pool if p not in gold_set]
    if n > len(negatives):
        raise PoolTooSmall(f"need {n} negatives but only {len(negatives)} available")
    picked = set(SplitMix64(seed).sample(negatives, n))
    return [p for p in pool if p in gold_set or p in picked]


def instance_seed(instance: NluInstance, opts: RenderOptions) -> int:
    return derive_seed(instance.dataset, instance.id, opts.seed)


def _reletter(choices: ChoiceSet, order: Sequence[int], gold_letters) -> tuple[ChoiceSet, frozenset]:
    picked = [choices.options[i] for i in order]
    new = ChoiceSet.build([o.description for o in picked], [o.canonical for o in picked], choices.multi_select)
    remap = {o.letter: new.options[k].letter for k, o in enumerate(picked)}
    return new, frozenset(remap[g] for g in gold_letters if g in remap)


def prepare(instance: NluInstance, opts: RenderOptions) -> NluInstance:
    """Return ``instance`` with labels/options in the order they will be shown."""
    cat = instance.category
    if cat is OutputCategory.GENERATION:
        return instance
    rng = SplitMix64(instance_seed(instance, opts))
    if cat is OutputCategory.TOKEN_CLASSIFICATION:
        labels = list(instance.labels)
        if opts.shuffle_labels:
            rng.shuffle(labels)
        return replace(instance, label_set=tuple(labels))

    if cat is OutputCategory.SEQUENCE_REGRESSION and instance.label_set is None:
        instance = replace(instance, label_set=DEFAULT_STS_SCALE.choice_set())
    choices = instance.choices
    if cat is OutputCategory.SEQUENCE_REGRESSION:
        gold_letters = frozenset([choices.letter_for(instance.gold)]) if _score_in(choices, instance.gold) else frozenset()
    else:
        gold_letters = instance.gold
        _check_gold_letters(instance)
    order = list(range(len(choices)))
    if opts.sample_negatives and instance.task is TaskKind.DC:
        gold_idx = [i for i, o in enumerate(choices.options) if o.letter in gold_letters]
        negatives = len(choices) - len(gold_idx)
        n = min(opts.negative_category_count, negatives)
        order = sample_negative_categories(gold_idx, order, n, rng.next_u64())
    if opts.shuffle_labels:
        rng.shuffle(order)
    if order == list(range(len(choices))):
        return instance
    new_choices, new_gold = _reletter(choices, order, gold_letters)
    if cat is OutputCategory.SEQUENCE_REGRESSION:
        return replace(instance, label_set=new_choices)
    return replace(instance, label_set=new_choices, gold=new_gold)


def _score_in(choices: ChoiceSet, score) -> bool:
    return any(o.canonical == score for o in choices.options)


def _check_gold_letters(instance: NluInstance) -> None:
    bad = sorted(g for g in instance.gold if g not in instance.choices)
    if bad:
        raise GoldNotInChoices(f"{instance.id}: gold letters {bad} refer past the choice set")


def format_options(choices: ChoiceSet) -> str:
    if len(choices) > MAX_RENDERED_OPTIONS:
        raise TooManyOptions(f"{len(choices)} options exceed the {MAX_RENDERED_OPTIONS} letters a prompt can show")
    return " ".join(f"({o.letter}) {o.description}" for o in choices.options)


def format_choice_answer(choices: ChoiceSet, letters) -> str:
    return " ".join(f"({o.letter}) {o.description}" for o in choices.options if o.letter in letters)


def render_context(instance: NluInstance) -> str:
    parts = list(instance.context_before or ()) + [instance.source_text] + list(instance.context_after or ())
    return " ".join(p for p in parts if p)


def _fields(instance: NluInstance) -> dict[str, str]:
    f = {
        "context": render_context(instance),
        "text": instance.source_text,
        "question": instance.question or "",
        "premise": instance.premise or "",
        "hypothesis": instance.hypothesis or "",
        "topic": instance.topic or "",
        "argument": instance.argument or "",
        "event": "",
        "trigger": "",
        "head": "",
        "head_label": "",
        "tail": "",
        "tail_label": "",
        "labels": "",
        "options": "",
        "multi": "",
    }
    if instance.trigger is not None:
        f["event"] = instance.trigger.label
        f["trigger"] = instance.trigger.text
    if instance.entity_pair is not None:
        head, tail = instance.entity_pair
        f.update(head=head.text, head_label=head.label, tail=tail.text, tail_label=tail.label)
    if isinstance(instance.label_set, ChoiceSet):
        f["options"] = format_options(instance.label_set)
        if instance.label_set.multi_select:
            f["multi"] = MULTI_SELECT_NOTE
    elif instance.label_set:
        f["labels"] = ", ".join(instance.label_set)
    return f


def _instruction(instance: NluInstance) -> str:
    template = instance.template or TEMPLATES[instance.task]
    return template.format(**_fields(instance))


def _check_span(m: EntityMention, instance_id: str) -> None:
    text = m.text
    if SPAN_SEPARATOR in text or "\n" in text or "\r" in text:
        raise SeparatorCollision(f"{instance_id}: span {text!r} cannot be written in the line grammar")
    if text != text.strip() or not text or text.strip().lower() == NONE_PAYLOAD.lower():
        raise SeparatorCollision(f"{instance_id}: span {text!r} would not survive parsing")


def _source_order(m: EntityMention) -> tuple:
    return (m.char_start is None, m.char_start or 0, m.char_end or 0)


def render_token_classification(instance: NluInstance, opts: RenderOptions) -> PromptPair:
    if instance.category is not OutputCategory.TOKEN_CLASSIFICATION:
        raise RenderError(f"{instance.id}: {instance.task.value} is not a token classification task")
    view = prepare(instance, opts)
    labels = view.labels
    if not labels:
        raise RenderError(f"{instance.id}: empty label set")
    by_label: dict[str, list[EntityMention]] = {lab: [] for lab in labels}
    for m in view.gold:
        if m.label not in by_label:
            raise UnknownGoldLabel(f"{instance.id}: gold label {m.label!r} not in label set")
        _check_span(m, instance.id)
        by_label[m.label].append(m)
    # sorted() is stable, so unaligned mentions keep their annotation order
    prefix = f"{view.trigger.label} - " if view.task is TaskKind.EAE and view.trigger else ""
    lines = []
    for lab in labels:
        spans = [m.text for m in sorted(by_label[lab], key=_source_order)]
        payload = SPAN_SEPARATOR.join(spans) if spans else NONE_PAYLOAD
        lines.append(f"{prefix}{lab}: {payload}")
    if view.task is TaskKind.EAE and view.argument is None:
        view = replace(view, argument=labels[0])
    return PromptPair(instance.id, _instruction(view), "\n".join(lines))


def render_sequence_classification(instance: NluInstance, opts: RenderOptions) -> PromptPair:
    if instance.category is not OutputCategory.SEQUENCE_CLASSIFICATION:
        raise RenderError(f"{instance.id}: {instance.task.value} is not a sequence classification task")
    _check_gold_letters(instance)
    view = prepare(instance, opts)
    answer = format_choice_answer(view.choices, view.gold)
    if view.task is TaskKind.EAC:
        if view.trigger is None or not view.argument:
            raise RenderError(f"{instance.id}: EAC needs a trigger and an argument name")
        answer = f"{view.trigger.label} - {view.argument}: {answer}"
    return PromptPair(instance.id, _instruction(view), answer)


def render_sts(instance: NluInstance, scale: StsScale | None = None, opts: RenderOptions | None = None) -> PromptPair:
    opts = opts or RenderOptions()
    if instance.task is not TaskKind.STS:
        raise RenderError(f"{instance.id}: {instance.task.value} is not STS")
    if scale is not None or instance.label_set is None:
        instance = replace(instance, label_set=(scale or DEFAULT_STS_SCALE).choice_set())
    choices = instance.choices
    if isinstance(instance.gold, bool) or not _score_in(choices, instance.gold):
        raise ScoreOutOfScale(f"{instance.id}: score {instance.gold!r} is not on the scale")
    view = prepare(instance, opts)
    letter = view.choices.letter_for(view.gold)
    return PromptPair(instance.id, _instruction(view), format_choice_answer(view.choices, {letter}))


def render_generation(instance: NluInstance, opts: RenderOptions) -> PromptPair:
    return PromptPair(instance.id, _instruction(instance), instance.gold or "")


def render(instance: NluInstance, opts: RenderOptions | None = None) -> PromptPair:
    """Dispatch on the task's output category."""
    opts = opts or RenderOptions()
    cat = instance.category
    if cat is OutputCategory.TOKEN_CLASSIFICATION:
        return render_token_classification(instance, opts)
    if cat is OutputCategory.SEQUENCE_CLASSIFICATION:
        return render_sequence_classification(instance, opts)
    if cat is OutputCategory.SEQUENCE_REGRESSION:
        return render_sts(instance, None, opts)
    return render_generation(instance, opts)
