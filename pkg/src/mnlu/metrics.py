"""Scoring: entity/token F1, accuracy, per-class P/R/F1, Pearson, macro averages."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Iterable, Literal, Mapping, Sequence

from .core import EntityMention


class MetricError(ValueError):
    pass


class MissingGoldOffsets(MetricError):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class UnknownLabel(MetricError):
    pass


class ZeroVariance(MetricError):
    pass


class TooFewPoints(MetricError):
    pass


class DuplicateDataset(MetricError):
    pass


@dataclass(frozen=True)
class PrfScores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        # 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); the integer form avoids rounding drift
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if self.tp and denom else 0.0

    def __add__(self, other: PrfScores) -> PrfScores:
        return PrfScores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict[str, float]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


Mode = Literal["strict", "relaxed"]


def _compatible(p: EntityMention, g: EntityMention, mode: Mode) -> bool:
    if p.label != g.label or not p.aligned:
        return False
    if mode == "strict":
        return p.char_start == g.char_start and p.char_end == g.char_end
    return min(p.char_end, g.char_end) - max(p.char_start, g.char_start) >= 1


def _order(m: EntityMention) -> tuple:
    return (not m.aligned, m.char_start or 0, m.char_end or 0)


def match_entities(pred: Sequence[EntityMention], gold: Sequence[EntityMention], mode: Mode = "strict") -> list[tuple[int, int]]:
    """One-to-one maximum matching of predictions to gold mentions.

    Predictions are visited in source order and each takes the first free
    compatible gold mention; when none is free, an augmenting path reassigns
    earlier choices (Kuhn's algorithm). On non-overlapping spans this reduces
    to the plain greedy pass.
    """
    if mode not in ("strict", "relaxed"):
        raise ValueError(f"unknown mode {mode!r}")
    for g in gold:
        if not g.aligned:
            raise MissingGoldOffsets(f"gold mention {g.text!r} has no offsets")
    p_idx = sorted(range(len(pred)), key=lambda i: _order(pred[i]))
    g_idx = sorted(range(len(gold)), key=lambda i: _order(gold[i]))
    adj = {i: [j for j in g_idx if _compatible(pred[i], gold[j], mode)] for i in p_idx}
    owner: dict[int, int] = {}

    def augment(i: int, seen: set[int]) -> bool:
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in owner or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    for i in p_idx:
        if adj[i]:
            augment(i, set())
    return sorted((i, j) for j, i in owner.items())


def entity_prf(
    pred: Sequence[EntityMention], gold: Sequence[EntityMention], mode: Mode = "strict"
) -> tuple[PrfScores, dict[str, PrfScores]]:
    pairs = match_entities(pred, gold, mode)
    matched_p = {i for i, _ in pairs}
    matched_g = {j for _, j in pairs}
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for i, p in enumerate(pred):
        counts[p.label][0 if i in matched_p else 1] += 1
    for j, g in enumerate(gold):
        if j not in matched_g:
            counts[g.label][2] += 1
    per_class = {lab: PrfScores(*c) for lab, c in sorted(counts.items())}
    total = PrfScores(len(pairs), len(pred) - len(pairs), len(gold) - len(pairs))
    return total, per_class


def token_prf(pred_tags: Sequence[str], gold_tags: Sequence[str], positive_labels: Iterable[str]) -> PrfScores:
    if len(pred_tags) != len(gold_tags):
        raise LengthMismatch(f"{len(pred_tags)} predicted tags vs {len(gold_tags)} gold tags")
    positive = set(positive_labels)
    tp = fp = fn = 0
    for p, g in zip(pred_tags, gold_tags):
        if g in positive and p == g:
            tp += 1
            continue
        if p in positive:
            fp += 1
        if g in positive:
            fn += 1
    return PrfScores(tp, fp, fn)


def mentions_to_token_tags(mentions: Iterable[EntityMention], source: str, outside: str = "O") -> list[str]:
    """Label each whitespace token with the label of the aligned mention covering it."""
    tokens = []
    pos = 0
    for tok in source.split():
        start = source.index(tok, pos)
        tokens.append((start, start + len(tok)))
        pos = start + len(tok)
    tags = [outside] * len(tokens)
    for m in mentions:
        if not m.aligned:
            continue
        for k, (s, e) in enumerate(tokens):
            if s < m.char_end and e > m.char_start and tags[k] == outside:
                tags[k] = m.label
    return tags


def _as_set(x) -> frozenset:
    if x is None:
        return frozenset()
    if isinstance(x, (set, frozenset, list, tuple)):
        return frozenset(x)
    return frozenset([x])


def accuracy(preds: Sequence, golds: Sequence) -> float:
    """Exact-match rate; ``None`` predictions (unscoreable) count as wrong."""
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    if not golds:
        raise EmptyInput("accuracy of zero instances")
    hits = sum(1 for p, g in zip(preds, golds) if p is not None and _as_set(p) == _as_set(g))
    return hits / len(golds)


@dataclass(frozen=True)
class ClassificationScores:
    per_class: dict[Hashable, PrfScores]
    micro: PrfScores
    macro_f1: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_class": {str(k): v.to_dict() for k, v in self.per_class.items()},
            "micro": self.micro.to_dict(),
            "macro_f1": self.macro_f1,
        }


def classification_prf(
    preds: Sequence, golds: Sequence, labels: Sequence[Hashable], exclude: Iterable[Hashable] = ()
) -> ClassificationScores:
    """Per-class counts from predicted vs gold label sets.

    ``exclude`` drops labels (e.g. a negative relation class) from the micro
    and macro aggregates while keeping their per-class rows.
    """
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    universe = list(labels)
    known = set(universe)
    counts = {lab: [0, 0, 0] for lab in universe}
    for p, g in zip(preds, golds):
        ps, gs = _as_set(p), _as_set(g)
        unknown = (ps | gs) - known
        if unknown:
            raise UnknownLabel(f"labels {sorted(map(str, unknown))} not in label universe")
        for lab in ps & gs:
            counts[lab][0] += 1
        for lab in ps - gs:
            counts[lab][1] += 1
        for lab in gs - ps:
            counts[lab][2] += 1
    per_class = {lab: PrfScores(*c) for lab, c in counts.items()}
    skip = set(exclude)
    kept = [per_class[lab] for lab in universe if lab not in skip]
    micro = sum(kept, PrfScores())
    supported = [s.f1 for s in kept if s.tp + s.fn > 0]
    macro = sum(supported) / len(supported) if supported else 0.0
    return ClassificationScores(per_class, micro, macro)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation with sums taken in exact rational arithmetic.

    Perfect linear relations therefore come back as exactly 1.0 or -1.0.
    """
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} values")
    n = len(xs)
    if n < 2:
        raise TooFewPoints("pearson needs at least two points")
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    mx = sum(fx) / n
    my = sum(fy) / n
    dx = [x - mx for x in fx]
    dy = [y - my for y in fy]
    sxy = sum(a * b for a, b in zip(dx, dy))
    sxx = sum(a * a for a in dx)
    syy = sum(b * b for b in dy)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("pearson is undefined for a constant series")
    if sxy * sxy == sxx * syy:
        return 1.0 if sxy > 0 else -1.0
    r = float(sxy) / math.sqrt(float(sxx) * float(syy))
    return max(-1.0, min(1.0, r))


@dataclass
class EvalReport:
    dataset: str
    task: str
    metric_name: str
    value: float
    per_class: dict[str, PrfScores] = field(default_factory=dict)
    n_instances: int = 0
    n_unscoreable: int = 0
    extras: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "task": self.task,
            "metric_name": self.metric_name,
            "value": self.value,
            "per_class": {k: v.to_dict() for k, v in self.per_class.items()},
            "n_instances": self.n_instances,
            "n_unscoreable": self.n_unscoreable,
            "extras": dict(self.extras),
        }


def aggregate_benchmark(reports: Sequence[EvalReport], grouping: Mapping[str, Sequence[str]]) -> dict[str, dict[str, Any]]:
    """Unweighted mean of headline values per benchmark group, with per-task sub-means.

    Datasets missing from ``reports`` are listed under ``missing`` and left out
    of the mean.
    """
    by_name: dict[str, EvalReport] = {}
    for r in reports:
        if r.dataset in by_name:
            raise DuplicateDataset(f"dataset {r.dataset!r} reported twice")
        by_name[r.dataset] = r
    out: dict[str, dict[str, Any]] = {}
    for group, roster in grouping.items():
        if len(set(roster)) != len(roster):
            raise DuplicateDataset(f"benchmark {group!r} lists a dataset twice")
        present = [by_name[d] for d in roster if d in by_name]
        tasks: dict[str, list[float]] = defaultdict(list)
        for r in present:
            tasks[r.task].append(r.value)
        out[group] = {
            "macro": sum(r.value for r in present) / len(present) if present else None,
            "tasks": {t: sum(v) / len(v) for t, v in sorted(tasks.items())},
            "n_datasets": len(present),
            "missing": [d for d in roster if d not in by_name],
        }
    return out


def format_table(reports: Sequence[EvalReport], extra_columns: Sequence[str] = ()) -> str:
    """Plain-text results table, values scaled to 0-100."""
    header = ["Dataset", "Task", "Metric", "Value", *extra_columns, "N", "Unscoreable"]
    rows = [header]
    for r in reports:
        extras = [_pct(r.extras.get(c)) for c in extra_columns]
        rows.append([r.dataset, r.task, r.metric_name, _pct(r.value), *extras, str(r.n_instances), str(r.n_unscoreable)])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _pct(v: float | None) -> str:
    return "-" if v is None else f"{100 * v:.1f}"
