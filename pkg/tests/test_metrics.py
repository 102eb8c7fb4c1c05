import math

import pytest

from mnlu.core import EntityMention as M
from mnlu.metrics import (
    DuplicateDataset,
    EmptyInput,
    EvalReport,
    LengthMismatch,
    MissingGoldOffsets,
    PrfScores,
    TooFewPoints,
    UnknownLabel,
    ZeroVariance,
    accuracy,
    aggregate_benchmark,
    classification_prf,
    entity_prf,
    format_table,
    match_entities,
    mentions_to_token_tags,
    pearson,
    token_prf,
)


def test_prf_zero_division_is_zero():
    s = PrfScores()
    assert (s.precision, s.recall, s.f1) == (0.0, 0.0, 0.0)


def test_prf_values():
    s = PrfScores(tp=3, fp=1, fn=2)
    assert s.precision == 0.75
    assert s.recall == 0.6
    assert s.f1 == pytest.approx(2 / 3)


def test_entity_prf_strict_exact_match():
    gold = [M("Drug", "IV drug use", 11, 22), M("Drug", "recreational drug use", 30, 51)]
    total, per_class = entity_prf(list(gold), gold)
    assert total == PrfScores(2, 0, 0)
    assert per_class["Drug"].f1 == 1.0


def test_entity_prf_strict_vs_relaxed():
    gold = [M("Drug", "IV drug use", 11, 22)]
    pred = [M("Drug", "drug use", 14, 22)]
    assert entity_prf(pred, gold, "strict")[0] == PrfScores(0, 1, 1)
    assert entity_prf(pred, gold, "relaxed")[0] == PrfScores(1, 0, 0)


def test_entity_prf_label_must_match_even_relaxed():
    gold = [M("Drug", "IV drug use", 11, 22)]
    pred = [M("Alcohol", "IV drug use", 11, 22)]
    total, per_class = entity_prf(pred, gold, "relaxed")
    assert total == PrfScores(0, 1, 1)
    assert per_class["Alcohol"] == PrfScores(0, 1, 0)
    assert per_class["Drug"] == PrfScores(0, 0, 1)


def test_unaligned_prediction_is_false_positive():
    gold = [M("Drug", "heroin", 0, 6)]
    assert entity_prf([M("Drug", "heroin")], gold)[0] == PrfScores(0, 1, 1)


def test_gold_without_offsets_rejected():
    with pytest.raises(MissingGoldOffsets):
        entity_prf([], [M("Drug", "heroin")])


def test_relaxed_matching_is_maximum_not_greedy():
    # p1 overlaps both gold spans, p2 only the first; a first-fit pass
    # pairs p1 with g1 and strands p2
    g1, g2 = M("X", "abcd", 0, 4), M("X", "efgh", 5, 9)
    p1, p2 = M("X", "abcd efgh", 0, 9), M("X", "bc", 1, 3)
    pairs = match_entities([p1, p2], [g1, g2], "relaxed")
    assert len(pairs) == 2
    assert entity_prf([p1, p2], [g1, g2], "relaxed")[0] == PrfScores(2, 0, 0)


def test_match_is_one_to_one():
    g = [M("X", "abc", 0, 3)]
    p = [M("X", "abc", 0, 3), M("X", "abc", 0, 3)]
    assert entity_prf(p, g)[0] == PrfScores(1, 1, 0)


def test_match_mode_validated():
    with pytest.raises(ValueError):
        match_entities([], [], "fuzzy")


def test_token_prf():
    assert token_prf(["D", "O", "D", "C"], ["D", "D", "O", "C"], ["D", "C"]) == PrfScores(2, 1, 1)
    with pytest.raises(LengthMismatch):
        token_prf(["O"], [], ["D"])


def test_mentions_to_token_tags():
    src = "Denies any IV drug use ."
    tags = mentions_to_token_tags([M("Drug", "IV drug use", 11, 22)], src)
    assert tags == ["O", "O", "Drug", "Drug", "Drug", "O"]


def test_accuracy():
    assert accuracy(["a", "b", None, {"x", "y"}], ["a", "c", "a", {"y", "x"}]) == 0.5
    with pytest.raises(EmptyInput):
        accuracy([], [])
    with pytest.raises(LengthMismatch):
        accuracy(["a"], [])


def test_classification_prf_excludes_negative_class():
    labels = ["assoc", "none"]
    preds = ["assoc", "none", "assoc", "none"]
    golds = ["assoc", "assoc", "none", "none"]
    scores = classification_prf(preds, golds, labels, exclude=["none"])
    assert scores.micro == PrfScores(1, 1, 1)
    assert scores.per_class["none"] == PrfScores(1, 1, 1)
    assert scores.macro_f1 == 0.5


def test_classification_prf_multilabel_sets():
    scores = classification_prf([{"a", "b"}, {"c"}], [{"a"}, {"b", "c"}], ["a", "b", "c"])
    assert scores.micro == PrfScores(2, 1, 1)


def test_classification_prf_unknown_label():
    with pytest.raises(UnknownLabel):
        classification_prf(["z"], ["a"], ["a"])


def test_pearson_known_value():
    # hand-computed: means 3 and 4, sxy = 8, sxx = 10, syy = 10
    assert pearson([1, 2, 3, 4, 5], [2, 4, 5, 4, 5]) == pytest.approx(6 / math.sqrt(10 * 6))


def test_pearson_exact_identities():
    assert pearson([0.1, 0.2, 0.7], [0.3, 0.5, 1.5]) == 1.0
    assert pearson([1, 2, 3], [3, 2, 1]) == -1.0


def test_pearson_errors():
    with pytest.raises(ZeroVariance):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(TooFewPoints):
        pearson([1], [2])
    with pytest.raises(LengthMismatch):
        pearson([1, 2], [1])


def _rep(ds, task, v):
    return EvalReport(ds, task, "m", v)


def test_aggregate_benchmark():
    reports = [_rep("a", "NER", 0.8), _rep("b", "NER", 0.6), _rep("c", "RE", 0.5)]
    agg = aggregate_benchmark(reports, {"blurb": ["a", "b", "c", "d"]})
    assert agg["blurb"]["macro"] == pytest.approx((0.8 + 0.6 + 0.5) / 3)
    assert agg["blurb"]["tasks"] == {"NER": pytest.approx(0.7), "RE": 0.5}
    assert agg["blurb"]["missing"] == ["d"]
    with pytest.raises(DuplicateDataset):
        aggregate_benchmark(reports + [_rep("a", "NER", 0.1)], {})


def test_format_table():
    table = format_table([EvalReport("bc5cdr", "NER", "entity_f1", 0.8766, extras={"relaxed_f1": 0.9})], ["relaxed_f1"])
    lines = table.splitlines()
    assert lines[0].split() == ["Dataset", "Task", "Metric", "Value", "relaxed_f1", "N", "Unscoreable"]
    assert lines[2].split()[:5] == ["bc5cdr", "NER", "entity_f1", "87.7", "90.0"]
