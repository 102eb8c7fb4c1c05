"""INI corpus plans.

Layout::

    [corpus]
    seed = 13
    shuffle_labels = true
    context_sentences = 2
    negative_category_count = 12
    domains = clinical, biomedical

    [plan]
    total_instances = 50000
    tasks = NER, RE, NLI

    [aliases]
    GENERIF = Gene reference into a function (function of a gene)

    [dataset:n2c2]
    task = NER
    domain = clinical
    format = brat_standoff
    path = data/n2c2

Relative dataset paths resolve against the config file's directory. List
values are comma separated, or one per line when they span several lines.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from ..prompts import DEFAULT_LABEL_ALIASES, RenderOptions
from .ingest import DatasetDescriptor, Domain
from .sampling import SamplingPlan


class ConfigError(ValueError):
    pass


@dataclass
class CorpusConfig:
    datasets: list[DatasetDescriptor]
    render: RenderOptions = field(default_factory=RenderOptions)
    plan: SamplingPlan | None = None
    domains: tuple[Domain, ...] | None = None
    aliases: dict[str, str] = field(default_factory=dict)


def _list(value: str) -> tuple[str, ...]:
    sep = "\n" if "\n" in value.strip() else ","
    return tuple(v.strip() for v in value.split(sep) if v.strip())


def _bool(section: configparser.SectionProxy, key: str, default: bool) -> bool:
    try:
        return section.getboolean(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def _int(section: configparser.SectionProxy, key: str, default: int) -> int:
    try:
        return section.getint(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def load_corpus_config(path: str | Path) -> CorpusConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep alias keys case-sensitive
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    aliases = dict(DEFAULT_LABEL_ALIASES)
    if parser.has_section("aliases"):
        aliases.update(parser["aliases"])

    corpus = parser["corpus"] if parser.has_section("corpus") else parser[parser.default_section]
    try:
        render = RenderOptions(
            seed=_int(corpus, "seed", 0),
            shuffle_labels=_bool(corpus, "shuffle_labels", False),
            context_sentences=_int(corpus, "context_sentences", 2),
            negative_category_count=_int(corpus, "negative_category_count", 12),
        )
        domains = tuple(Domain(d) for d in _list(corpus["domains"])) if "domains" in corpus else None
    except ValueError as exc:
        raise ConfigError(f"[corpus] {exc}") from None

    datasets = []
    for name in parser.sections():
        if not name.startswith("dataset:"):
            continue
        sec = parser[name]
        ds_name = name.split(":", 1)[1].strip()
        missing = [k for k in ("task", "domain", "format", "path") if k not in sec]
        if missing:
            raise ConfigError(f"[{name}] missing keys: {', '.join(missing)}")
        ds_path = Path(sec["path"])
        if not ds_path.is_absolute():
            ds_path = path.parent / ds_path
        try:
            datasets.append(
                DatasetDescriptor(
                    name=ds_name,
                    task=sec["task"],
                    domain=sec["domain"],
                    format=sec["format"],
                    path=ds_path,
                    split=sec.get("split", "train"),
                    labels=_list(sec["labels"]) if "labels" in sec else None,
                    aliases=aliases,
                    sentence_split=_bool(sec, "sentence_split", True),
                    negatives=_bool(sec, "negatives", False),
                    summarize_type=sec.get("summarize_type") or None,
                    output_ratio=_bool(sec, "output_ratio", False),
                    context_sentences=_int(sec, "context_sentences", render.context_sentences),
                    topic=sec.get("topic") or None,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    if not datasets:
        raise ConfigError(f"{path}: no [dataset:NAME] sections")

    plan = None
    if parser.has_section("plan"):
        sec = parser["plan"]
        tasks = _list(sec["tasks"]) if "tasks" in sec else tasks_in_order(datasets)
        try:
            plan = SamplingPlan(
                total_instances=_int(sec, "total_instances", 50_000),
                tasks=tasks,
                seed=_int(sec, "seed", render.seed),
                epochs_hint=_int(sec, "epochs_hint", 3),
            )
        except ValueError as exc:
            raise ConfigError(f"[plan] {exc}") from None
    return CorpusConfig(datasets, render, plan, domains, aliases)


def tasks_in_order(datasets: list[DatasetDescriptor]) -> tuple[str, ...]:
    """Distinct dataset tasks in first-seen order."""
    return tuple(dict.fromkeys(d.task.value for d in datasets))
