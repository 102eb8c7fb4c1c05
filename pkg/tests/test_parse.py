import pytest

from mnlu.core import ChoiceSet, EntityMention
from mnlu.parse import (
    ChoicePrediction,
    NoChoiceFound,
    TokenPrediction,
    align_spans,
    choice_to_score,
    parse_choice_output,
    parse_token_output,
    prediction_record,
)

LABELS = ["Living status", "Tobacco", "Drug", "Employment", "Alcohol"]
NLI = ChoiceSet.build(["neutral", "entailment", "contradiction"])


def test_token_output_reference_example():
    text = "Living status: None\nTobacco: None\nDrug: IV drug use ... recreational drug use\nEmployment: None\nAlcohol: None"
    pred = parse_token_output(text, LABELS)
    assert [(m.label, m.text) for m in pred.mentions] == [("Drug", "IV drug use"), ("Drug", "recreational drug use")]
    assert pred.matched_lines == 5
    assert pred.unparsed_lines == ()


def test_token_output_case_insensitive_and_blank_lines():
    pred = parse_token_output("drug:  IV drug use \n\n tobacco: none", LABELS)
    assert [(m.label, m.text) for m in pred.mentions] == [("Drug", "IV drug use")]


def test_token_output_bare_none():
    pred = parse_token_output("None", ["Drug"])
    assert pred.mentions == ()
    assert pred.unparsed_lines == ()


def test_token_output_unknown_lines_kept():
    pred = parse_token_output("Here are the entities:\nDrug: heroin\nDisease: flu", LABELS)
    assert [m.text for m in pred.mentions] == ["heroin"]
    assert pred.unparsed_lines == ("Here are the entities:", "Disease: flu")


def test_token_output_longest_label_wins():
    pred = parse_token_output("Drug use: cocaine\nDrug: heroin", ["Drug", "Drug use"])
    assert [(m.label, m.text) for m in pred.mentions] == [("Drug use", "cocaine"), ("Drug", "heroin")]


def test_token_output_event_prefix():
    pred = parse_token_output("Drug - Method: IV", ["Method"])
    assert [(m.label, m.text) for m in pred.mentions] == [("Method", "IV")]


def test_align_spans_shared_cursor():
    src = "pain in the leg and pain in the arm"
    pred = parse_token_output("Symptom: pain ... pain", ["Symptom"])
    got = align_spans(pred, src)
    assert [(m.char_start, m.char_end) for m in got.mentions] == [(0, 4), (20, 24)]


def test_align_spans_retries_from_start_and_leaves_misses():
    src = "aspirin then ibuprofen"
    pred = TokenPrediction((EntityMention("C", "ibuprofen"), EntityMention("C", "aspirin"), EntityMention("C", "heroin")))
    got = align_spans(pred, src)
    assert [(m.char_start, m.char_end) for m in got.mentions[:2]] == [(13, 22), (0, 7)]
    assert not got.mentions[2].aligned
    assert got.unaligned == [got.mentions[2]]


def test_choice_single_letter():
    assert parse_choice_output("(C) contradiction", NLI).letters == ("C",)


def test_choice_multiple_letters_in_order():
    cs = ChoiceSet.build(["a", "b", "c", "d"], multi_select=True)
    assert parse_choice_output("(A) a (C) c", cs).letters == ("A", "C")


def test_choice_letter_inside_description_ignored():
    cs = ChoiceSet.build(["see option (B) below", "other"])
    assert parse_choice_output("(A) see option (B) below", cs).letters == ("A",)


def test_choice_letter_outside_set_skipped():
    assert parse_choice_output("(Z) nothing (B) entailment", NLI).letters == ("B",)


def test_choice_fallback_to_description():
    assert parse_choice_output("I think it is a contradiction.", NLI).letters == ("C",)


def test_choice_fallback_prefers_longest_description():
    cs = ChoiceSet.build(["past", "past and current"])
    assert parse_choice_output("the status is past and current", cs).letters == ("B",)


def test_choice_garbage():
    with pytest.raises(NoChoiceFound):
        parse_choice_output("garbage", NLI)


def test_choice_to_score():
    cs = ChoiceSet.build(["low", "mid", "high"], [0, 1, 2])
    assert choice_to_score(ChoicePrediction(("C",)), cs) == 2
    with pytest.raises(TypeError):
        choice_to_score(ChoicePrediction(("A",)), NLI)
    with pytest.raises(NoChoiceFound):
        ChoicePrediction(()).first


def test_prediction_record_omits_absent_fields():
    rec = prediction_record("x", choice=ChoicePrediction(("A",)), raw=None, attempts=2)
    assert rec == {"instance_id": "x", "letters": ["A"], "attempts": 2}


def test_choice_fallback_needs_whole_phrase():
    cs = ChoiceSet.build(["a", "b"])
    with pytest.raises(NoChoiceFound):
        parse_choice_output("garbage", cs)
    assert parse_choice_output("Contradiction.", NLI).letters == ("C",)
