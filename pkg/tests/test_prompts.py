from dataclasses import replace

import pytest

from conftest import GOLDEN_NAMES, load_golden
from mnlu.core import ChoiceSet, EntityMention, NluInstance, TaskKind
from mnlu.prompts import (
    DEFAULT_LABEL_ALIASES,
    DEFAULT_STS_SCALE,
    NER_FEWSHOT_PREAMBLE,
    GoldNotInChoices,
    PoolTooSmall,
    RenderError,
    RenderOptions,
    ScoreOutOfScale,
    SeparatorCollision,
    UnknownGoldLabel,
    expand_label_name,
    ner_fewshot_preamble,
    prepare,
    render,
    render_sts,
    sample_negative_categories,
    shuffle_choice_order,
)


def _norm(text):
    return "\n".join(line.rstrip() for line in text.split("\n"))


@pytest.mark.parametrize("name", GOLDEN_NAMES)
def test_golden_examples(name):
    inst, expected_in, expected_out = load_golden(name)
    pair = render(inst)
    assert _norm(pair.input) == _norm(expected_in)
    assert _norm(pair.output) == _norm(expected_out)


def test_preamble_wording():
    assert ner_fewshot_preamble() == NER_FEWSHOT_PREAMBLE
    assert NER_FEWSHOT_PREAMBLE.startswith("Your answer should use the following format, with one entity type per line.")
    assert NER_FEWSHOT_PREAMBLE.endswith("Use `...' to separate multiple spans.")


def test_label_alias_expansion():
    assert expand_label_name("GENERIF", DEFAULT_LABEL_ALIASES) == "Gene reference into a function (function of a gene)"
    assert expand_label_name("Drug", DEFAULT_LABEL_ALIASES) == "Drug"


def test_ner_unknown_gold_label():
    inst, _, _ = load_golden("ner")
    bad = replace(inst, gold=(EntityMention("Disease", "IV drug use", 11, 22),))
    with pytest.raises(UnknownGoldLabel):
        render(bad)


@pytest.mark.parametrize("span", ["a ... b", "line\nbreak", " padded", "None", "none"])
def test_ner_span_that_breaks_grammar(span):
    inst = NluInstance("x", "d", TaskKind.NER, span, ("Drug",), (EntityMention("Drug", span),))
    with pytest.raises(SeparatorCollision):
        render(inst)


def test_ner_spans_in_source_order():
    src = "beta then alpha"
    inst = NluInstance(
        "x", "d", TaskKind.NER, src, ("Drug",),
        (EntityMention("Drug", "alpha", 10, 15), EntityMention("Drug", "beta", 0, 4)),
    )
    assert render(inst).output == "Drug: beta ... alpha"


def test_ner_empty_gold_all_none():
    inst = NluInstance("x", "d", TaskKind.NER, "Nothing here.", ("A", "B"), ())
    assert render(inst).output == "A: None\nB: None"


def test_eae_output_uses_event_prefix():
    src = "Denies any IV drug use or any recreational drug use."
    inst = NluInstance(
        "x", "d", TaskKind.EAE, src, ("Method",), (EntityMention("Method", "IV", 11, 13),),
        context_before=("...", "Currently admits to five drinks of alcohol per week."),
        context_after=("Divorced with no children.", "..."),
        trigger=EntityMention("Drug", "IV drug use", 11, 22), argument="Method",
    )
    pair = render(inst)
    assert pair.output == "Drug - Method: IV"
    assert pair.input == (
        "According to the medical text, what is the Method attribute of the Drug event `IV drug use' in the "
        "medical text below? Extract the attribute faithfully from the medical text.\n\nMedical text: ... "
        "Currently admits to five drinks of alcohol per week. Denies any IV drug use or any recreational drug use. "
        "Divorced with no children. ..."
    )


def test_eac_requires_trigger_and_argument():
    inst, _, _ = load_golden("eac")
    with pytest.raises(RenderError):
        render(replace(inst, argument=None))


def test_gold_letter_past_choice_set():
    inst, _, _ = load_golden("nli")
    with pytest.raises(GoldNotInChoices):
        render(replace(inst, gold=frozenset({"D"})))


def test_single_select_dc_has_no_multi_note():
    inst, _, _ = load_golden("dc")
    single = replace(inst, label_set=ChoiceSet.build([o.description for o in inst.choices.options]), gold=frozenset("A"))
    assert "Multiple options can be true." not in render(single).input


def test_qa_template():
    cs = ChoiceSet.build(["The answer is not mentioned in the text (maybe).", "It works (yes).", "It does not work (no)."])
    inst = NluInstance("q", "pubmedqa", TaskKind.QA, "BACKGROUND: trial ...", cs, frozenset("B"), question="Does it work?")
    pair = render(inst)
    assert pair.input.startswith(
        "According to the medical literature below, Does it work? Choose from the following options. "
        "Only one option can be true.\n\nMedical literature: BACKGROUND: trial ...\n\nOptions: (A) The answer"
    )
    assert pair.output == "(B) It works (yes)."


def test_sts_score_out_of_scale():
    inst, _, _ = load_golden("sts")
    with pytest.raises(ScoreOutOfScale):
        render(replace(inst, gold=6))
    with pytest.raises(ScoreOutOfScale):
        render(replace(inst, gold=True))


def test_sts_each_score_maps_to_its_letter():
    inst, _, _ = load_golden("sts")
    for score, letter in zip(range(6), "ABCDEF"):
        out = render_sts(replace(inst, gold=score)).output
        assert out.startswith(f"({letter}) ")
        assert out.endswith(DEFAULT_STS_SCALE.entries[score][1])


def test_shuffle_deterministic_and_gold_follows():
    inst, _, _ = load_golden("dc")
    opts = RenderOptions(seed=3, shuffle_labels=True)
    a, b = render(inst, opts), render(inst, opts)
    assert a == b
    view = prepare(inst, opts)
    gold_descs = {view.choices[l].description for l in view.gold}
    assert gold_descs == {"Insufficient enrollment", "Business administrative"}


def test_shuffle_changes_with_seed():
    orders = {tuple(shuffle_choice_order("ABCDEFG", s)) for s in range(20)}
    assert len(orders) > 10


def test_ner_label_shuffle_keeps_spans():
    inst, _, _ = load_golden("ner")
    out = render(inst, RenderOptions(seed=1, shuffle_labels=True)).output
    assert "Drug: IV drug use ... recreational drug use" in out.split("\n")
    assert len(out.split("\n")) == 5


def test_negative_sampling_keeps_gold_and_pool_order():
    pool = [f"c{i}" for i in range(48)]
    got = sample_negative_categories(["c40"], pool, 12, seed=5)
    assert len(got) == 13 and "c40" in got
    assert got == sorted(got, key=pool.index)
    assert got == sample_negative_categories(["c40"], pool, 12, seed=5)
    with pytest.raises(PoolTooSmall):
        sample_negative_categories(["c0"], pool[:5], 12, seed=5)


def test_negative_sampling_in_render():
    descs = [f"Specialty {i}" for i in range(48)]
    inst = NluInstance("m", "mtsamples", TaskKind.DC, "report", ChoiceSet.build(descs), frozenset("K"), topic="the specialty")
    opts = RenderOptions(seed=2, sample_negatives=True)
    view = prepare(inst, opts)
    assert len(view.choices) == 13
    assert render(inst, opts).output.endswith("Specialty 10")


def test_generation_passthrough():
    inst = NluInstance("s", "d", TaskKind.SUM, "Long text.", None, "Short.")
    pair = render(inst)
    assert pair.output == "Short."
    assert pair.input.endswith("Medical text: Long text.")


def test_too_many_options_without_negative_sampling():
    from mnlu.prompts import TooManyOptions

    descs = [f"Specialty {i}" for i in range(30)]
    inst = NluInstance("m", "mtsamples", TaskKind.DC, "report", ChoiceSet.build(descs), frozenset("B"), topic="x")
    with pytest.raises(TooManyOptions):
        render(inst)
