"""Corpus assembly: ingest, preprocess, filter, sample, render."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from ..core import EntityMention, NluInstance, PromptPair, TaskKind, write_jsonl
from ..prompts import RenderError, RenderOptions, render
from .ingest import DatasetDescriptor, Domain, Format, ingest
from .sampling import SamplingPlan, filter_summarization, sample_with_report
from .sentences import merge_spans, split_sentences

log = logging.getLogger(__name__)

Summarizer = Callable[[str, str], str]


@dataclass
class DatasetStats:
    name: str
    task: str
    domain: str
    split: str
    status: str = "ok"
    error: str | None = None
    records: int = 0
    ingested: int = 0
    filtered: int = 0
    unsampled: int = 0
    emitted: int = 0
    resampled: int = 0
    filter_reasons: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict[str, Any]:
        d = {k: getattr(self, k) for k in (
            "name", "task", "domain", "split", "status", "error", "records",
            "ingested", "filtered", "unsampled", "emitted", "resampled",
        )}
        d["filter_reasons"] = dict(sorted(self.filter_reasons.items()))
        return d


@dataclass
class CorpusBuild:
    pairs: list[PromptPair]
    instances: list[NluInstance]
    manifest: dict[str, Any]

    @property
    def failed(self) -> list[str]:
        return [d["name"] for d in self.manifest["datasets"] if d["status"] == "failed"]


def split_document_instance(inst: NluInstance) -> list[NluInstance]:
    """Sentence-level instances from a document-level token instance.

    Sentences are merged where a gold mention would straddle a boundary.
    """
    sentences = split_sentences(inst.source_text)
    spans = [(m.char_start, m.char_end) for m in inst.gold if m.aligned]
    sentences = merge_spans(sentences, inst.source_text, spans)
    if len(sentences) <= 1:
        return [inst]
    out = []
    for k, s in enumerate(sentences):
        mentions = tuple(
            EntityMention(m.label, m.text, m.char_start - s.char_start, m.char_end - s.char_start)
            for m in inst.gold
            if m.aligned and s.char_start <= m.char_start and m.char_end <= s.char_end
        )
        out.append(replace(inst, id=f"{inst.id}-s{k}", source_text=s.text, gold=mentions))
    return out


def preprocess(
    desc: DatasetDescriptor, instances: Iterable[NluInstance], stats: DatasetStats, summarizer: Summarizer | None
) -> list[NluInstance]:
    out = []
    for inst in instances:
        if inst.task in (TaskKind.NER, TaskKind.ETE) and desc.format is Format.BRAT_STANDOFF and desc.sentence_split:
            out.extend(split_document_instance(inst))
            continue
        if inst.task is TaskKind.DC and desc.summarize_type:
            if summarizer is None:
                raise RuntimeError(f"{desc.name}: summarization preprocessing requested but no endpoint configured")
            inst = replace(inst, source_text=summarizer(inst.source_text, desc.summarize_type))
        out.append(inst)
    return out


def _keep(desc: DatasetDescriptor, inst: NluInstance, stats: DatasetStats) -> bool:
    if inst.task is TaskKind.SUM and not filter_summarization(inst, apply_ratio=desc.output_ratio):
        stats.filter_reasons["length"] += 1
        return False
    return True


def build_corpus(
    descs: Sequence[DatasetDescriptor],
    plan: SamplingPlan | None = None,
    render_opts: RenderOptions | None = None,
    *,
    domains: Iterable[Domain | str] | None = None,
    summarizer: Summarizer | None = None,
) -> CorpusBuild:
    render_opts = render_opts or RenderOptions()
    wanted = {Domain(d) for d in domains} if domains is not None else None
    stats: list[DatasetStats] = []
    excluded: list[str] = []
    candidates: list[tuple[DatasetDescriptor, list[tuple[NluInstance, PromptPair]]]] = []

    for desc in descs:
        if wanted is not None and desc.domain not in wanted:
            excluded.append(desc.name)
            continue
        st = DatasetStats(desc.name, desc.task.value, desc.domain.value, desc.split.value)
        stats.append(st)
        try:
            raw = ingest(desc)
            st.records = len(raw)
            ready = preprocess(desc, raw, st, summarizer)
        except Exception as exc:  # recorded per dataset; the build continues
            st.status, st.error = "failed", f"{type(exc).__name__}: {exc}"
            log.error("dataset %s failed: %s", desc.name, st.error)
            continue
        st.ingested = len(ready)
        opts = replace(render_opts, sample_negatives=desc.negatives or render_opts.sample_negatives)
        kept = []
        for inst in ready:
            if not _keep(desc, inst, st):
                continue
            try:
                kept.append((inst, render(inst, opts)))
            except RenderError as exc:
                st.filter_reasons[type(exc).__name__] += 1
                log.warning("%s: %s", desc.name, exc)
        st.filtered = sum(st.filter_reasons.values())
        candidates.append((desc, kept))

    by_key = {(i.dataset, i.id): (i, p) for _, kept in candidates for i, p in kept}
    stat_of = {s.name: s for s in stats}
    warnings: list[str] = []
    quotas = None
    if plan is None:
        chosen = [i for _, kept in candidates for i, _ in kept]
    else:
        outcome = sample_with_report([(d, [i for i, _ in kept]) for d, kept in candidates], plan)
        chosen = outcome.instances
        warnings = outcome.warnings
        quotas = {t.value: q for t, q in outcome.quotas.items()}

    pairs = [by_key[(i.dataset, i.id)][1] for i in chosen]
    seen: set[tuple[str, str]] = set()
    for inst in chosen:
        st = stat_of[inst.dataset]
        st.emitted += 1
        key = (inst.dataset, inst.id)
        if key in seen:
            st.resampled += 1
        seen.add(key)
    for _, kept in candidates:
        for inst, _ in kept:
            if (inst.dataset, inst.id) not in seen:
                stat_of[inst.dataset].unsampled += 1

    per_task = Counter(i.task.value for i in chosen)
    per_domain = Counter(stat_of[i.dataset].domain for i in chosen)
    manifest = {
        "render": {
            "seed": render_opts.seed,
            "shuffle_labels": render_opts.shuffle_labels,
            "context_sentences": render_opts.context_sentences,
            "negative_category_count": render_opts.negative_category_count,
        },
        "plan": None if plan is None else {
            "total_instances": plan.total_instances,
            "tasks": [t.value for t in plan.tasks],
            "seed": plan.seed,
            "epochs_hint": plan.epochs_hint,
            "quotas": quotas,
        },
        "domains": sorted(d.value for d in wanted) if wanted is not None else None,
        "datasets": [s.to_dict() for s in stats],
        "excluded": excluded,
        "per_task": dict(sorted(per_task.items())),
        "per_domain": dict(sorted(per_domain.items())),
        "total": len(pairs),
        "warnings": warnings,
    }
    return CorpusBuild(pairs, chosen, manifest)


def write_corpus(build: CorpusBuild, out_dir: str | Path, name: str = "corpus.jsonl") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    write_jsonl(path, (p.to_dict() for p in build.pairs))
    return path


def dump_manifest(manifest: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
