from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ..core import NluInstance, TaskKind
from ..rng import SplitMix64, derive_seed
from .ingest import DatasetDescriptor

log = logging.getLogger(__name__)


class EmptyTaskPool(ValueError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    total_instances: int = 50_000
    tasks: tuple[TaskKind, ...] = ()
    seed: int = 0
    epochs_hint: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(TaskKind.parse(t) for t in self.tasks))
        if self.total_instances <= 0:
            raise ValueError("total_instances must be positive")
        if not self.tasks:
            raise ValueError("a sampling plan needs at least one task")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError("tasks must be distinct")

    def quotas(self) -> dict[TaskKind, int]:
        """floor(total/k) each; the remainder goes one apiece to the first tasks."""
        base, rem = divmod(self.total_instances, len(self.tasks))
        return {t: base + (1 if i < rem else 0) for i, t in enumerate(self.tasks)}


@dataclass
class SampleOutcome:
    instances: list[NluInstance]
    quotas: dict[TaskKind, int]
    pool_sizes: dict[TaskKind, int]
    resampled: dict[TaskKind, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def sample_with_report(
    datasets: Sequence[tuple[DatasetDescriptor, Sequence[NluInstance]]], plan: SamplingPlan
) -> SampleOutcome:
    pools: dict[TaskKind, list[NluInstance]] = OrderedDict((t, []) for t in plan.tasks)
    for desc, instances in datasets:
        for inst in instances:
            if inst.task in pools:
                pools[inst.task].append(inst)
    quotas = plan.quotas()
    outcome = SampleOutcome([], quotas, {t: len(p) for t, p in pools.items()})
    for task, pool in pools.items():
        if not pool:
            raise EmptyTaskPool(f"no instances available for task {task.value}")
        rng = SplitMix64(derive_seed("sample", task.value, plan.seed))
        quota = quotas[task]
        if quota <= len(pool):
            outcome.instances.extend(rng.sample(pool, quota))
            continue
        # whole pool once, then draws with replacement for the shortfall
        picked = rng.sample(pool, len(pool))
        extra = quota - len(pool)
        picked.extend(rng.choice(pool) for _ in range(extra))
        outcome.instances.extend(picked)
        outcome.resampled[task] = extra
        msg = f"task {task.value}: pool of {len(pool)} below quota {quota}; {extra} drawn with replacement"
        outcome.warnings.append(msg)
        log.warning(msg)
    return outcome


def sample_budget(
    datasets: Sequence[tuple[DatasetDescriptor, Sequence[NluInstance]]], plan: SamplingPlan
) -> list[NluInstance]:
    return sample_with_report(datasets, plan).instances


def word_count(text: str) -> int:
    return len(text.split())


def filter_summarization(
    instance: NluInstance,
    max_input_words: int = 800,
    max_output_ratio: Fraction = Fraction(1, 2),
    apply_ratio: bool = False,
) -> bool:
    """Keep iff the input is under ``max_input_words`` and, optionally, the summary is short enough."""
    if instance.task is not TaskKind.SUM:
        raise ValueError(f"{instance.id}: not a summarization instance")
    n_in = word_count(instance.source_text)
    if n_in >= max_input_words:
        return False
    if apply_ratio:
        return word_count(instance.gold or "") <= Fraction(max_output_ratio) * n_in
    return True
