"""Chat-completion client, few-shot selection and benchmark runs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence

import httpx

from .core import ChoiceSet, NluInstance, OutputCategory, PromptPair, TaskKind, TOKEN_TASKS
from .corpus.ingest import NEGATIVE_RELATION
from .metrics import (
    EvalReport,
    PrfScores,
    TooFewPoints,
    ZeroVariance,
    accuracy,
    classification_prf,
    entity_prf,
    pearson,
)
from .parse import NoChoiceFound, TokenPrediction, align_spans, parse_choice_output, parse_token_output, prediction_record
from .prompts import NER_FEWSHOT_PREAMBLE, PoolTooSmall, RenderOptions, prepare, render
from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)


class InferenceError(RuntimeError):
    pass


class TransportFailure(InferenceError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class AuthRejected(InferenceError):
    pass


class RequestRejected(InferenceError):
    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


class ResponseMalformed(InferenceError):
    pass


class InvalidArgument(ValueError):
    pass


class CannotSatisfyDistinctness(ValueError):
    pass


@dataclass(frozen=True)
class InferenceConfig:
    endpoint_url: str
    model_name: str = "model"
    temperature: float = 0.0
    max_output_tokens: int = 1024
    max_concurrent_requests: int = 4
    max_attempts: int = 3
    backoff_base_ms: int = 200
    timeout_ms: int = 60_000
    api_key_env_var: str = "MNLU_API_KEY"

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")

    @property
    def completions_url(self) -> str:
        url = self.endpoint_url.rstrip("/")
        return url if url.endswith("/chat/completions") else url + "/chat/completions"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        # the key itself never enters the config, only the variable's name
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int
    finish_reason: str | None = None

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


class InferenceClient:
    """Blocking client; safe to share across worker threads."""

    def __init__(
        self,
        cfg: InferenceConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env_var)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(timeout=cfg.timeout_ms / 1000, headers=headers, transport=transport)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> InferenceClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def payload(self, prompt: str) -> dict[str, Any]:
        return {
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }

    def complete(self, prompt: str) -> Completion:
        if not prompt:
            raise InvalidArgument("prompt must be non-empty")
        body = self.payload(prompt)
        last = ""
        for attempt in range(1, self.cfg.max_attempts + 1):
            if attempt > 1:
                self._sleep(self.cfg.backoff_base_ms * 2 ** (attempt - 2) / 1000)
            try:
                resp = self._http.post(self.cfg.completions_url, json=body)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("attempt %d failed: %s", attempt, last)
                continue
            if resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("attempt %d failed: %s", attempt, last)
                continue
            if resp.status_code in (401, 403):
                raise AuthRejected(f"HTTP {resp.status_code}: credentials rejected")
            if resp.status_code >= 400:
                raise RequestRejected(resp.status_code, resp.text[:200])
            text, finish = _read_completion(resp)
            return Completion(text, attempt, finish)
        raise TransportFailure(f"gave up after {self.cfg.max_attempts} attempts ({last})", self.cfg.max_attempts)

    def chat_complete(self, prompt: str) -> str:
        return self.complete(prompt).text


def _read_completion(resp: httpx.Response) -> tuple[str, str | None]:
    try:
        data = resp.json()
        choice = data["choices"][0]
        content = choice["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ResponseMalformed(f"unexpected response shape: {exc!r}") from None
    if not isinstance(content, str):
        raise ResponseMalformed("message content is not a string")
    return content, choice.get("finish_reason")


def chat_complete(prompt: str, cfg: InferenceConfig) -> str:
    with InferenceClient(cfg) as client:
        return client.chat_complete(prompt)


# -- few-shot selection ------------------------------------------------------


@dataclass(frozen=True)
class FewShotPolicy:
    pool: Sequence[NluInstance]
    k: int = 2
    seed: int = 0
    require_distinct_outputs: bool = True
    same_dataset: bool = True
    max_attempts: int = 100

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")


def select_fewshot(
    policy: FewShotPolicy, query: NluInstance | str, render_opts: RenderOptions | None = None
) -> list[PromptPair]:
    """Draw ``policy.k`` rendered examples for ``query``.

    Draws are uniform without replacement from the pool minus the query
    itself, seeded by ``(policy.seed, query id)``. With distinct outputs
    required, whole draws are rejected and redrawn until the gold outputs
    differ pairwise or the attempt budget runs out.
    """
    opts = render_opts or RenderOptions()
    if isinstance(query, NluInstance):
        qkey = (query.dataset, query.id)
        candidates = [x for x in policy.pool if (x.dataset, x.id) != qkey]
        if policy.same_dataset:
            candidates = [x for x in candidates if x.dataset == query.dataset]
        qid = f"{query.dataset}/{query.id}"
    else:
        candidates = [x for x in policy.pool if x.id != query]
        qid = query
    if len(candidates) < policy.k:
        raise PoolTooSmall(f"{qid}: {len(candidates)} candidates for {policy.k} examples")
    rendered = [render(x, opts) for x in candidates]
    rng = SplitMix64(derive_seed("fewshot", policy.seed, qid))
    if not policy.require_distinct_outputs:
        return rng.sample(rendered, policy.k)
    if len({p.output for p in rendered}) < policy.k:
        raise CannotSatisfyDistinctness(f"{qid}: pool has fewer than {policy.k} distinct outputs")
    for _ in range(policy.max_attempts):
        picked = rng.sample(rendered, policy.k)
        if len({p.output for p in picked}) == policy.k:
            return picked
    raise CannotSatisfyDistinctness(f"{qid}: no distinct draw within {policy.max_attempts} attempts")


def fewshot_prompt(query_input: str, examples: Sequence[PromptPair]) -> str:
    """Format preamble, then numbered example blocks, then the query input."""
    blocks = [NER_FEWSHOT_PREAMBLE]
    for n, ex in enumerate(examples, 1):
        blocks.append(f"Example {n}:\n{ex.input}\n\nAnswer:\n{ex.output}")
    blocks.append(query_input)
    return "\n\n".join(blocks)


# -- LLM-assisted preprocessing ------------------------------------------------

SUMMARIZE_TEMPLATE = "Summarize the {type} from the following clinical note."
QA_STATEMENT_INSTRUCTION = "Combine the question and the answer into a single statement."


def summarize_document(note: str, type_label: str, client: InferenceClient) -> str:
    if not type_label or not type_label.strip():
        raise InvalidArgument("type label must be non-empty")
    if not note or not note.strip():
        raise InvalidArgument("note must be non-empty")
    prompt = SUMMARIZE_TEMPLATE.format(type=type_label.strip()) + "\n\n" + note
    return client.chat_complete(prompt)


def qa_statement_prompt(question: str, answer: str) -> str:
    return f"{QA_STATEMENT_INSTRUCTION}\n\nQuestion: {question}\nAnswer: {answer}\nStatement:"


def describe_qa_options(
    question: str, answers: Sequence[str], one_shot: PromptPair, client: InferenceClient
) -> list[str]:
    """One descriptive option per answer, each ending in ``(answer).``."""
    if not answers:
        raise InvalidArgument("answers must be non-empty")
    if not question.strip():
        raise InvalidArgument("question must be non-empty")
    shot = f"{one_shot.input} {one_shot.output}".rstrip()
    out = []
    for ans in answers:
        text = client.chat_complete(f"{shot}\n\n{qa_statement_prompt(question, ans)}")
        statement = text.strip().splitlines()[0].strip().rstrip(".") if text.strip() else ""
        out.append(f"{statement} ({ans}).".lstrip())
    return out


# -- benchmark runs ------------------------------------------------------------


@dataclass
class InstanceResult:
    instance: NluInstance
    prompt: str
    completion: Completion | None = None
    error: str | None = None


@dataclass
class BenchmarkRun:
    predictions: list[dict[str, Any]]
    reports: list[EvalReport]
    prompt_log: list[dict[str, str]]
    manifest: dict[str, Any] = field(default_factory=dict)

    @property
    def failed(self) -> int:
        return self.manifest.get("n_failed", 0)


def _view(inst: NluInstance, opts: RenderOptions) -> NluInstance:
    return prepare(inst, opts)


def build_prompt(
    inst: NluInstance, opts: RenderOptions, fewshot: FewShotPolicy | None = None
) -> str:
    prompt = render(inst, opts).input
    if fewshot is not None and inst.task in TOKEN_TASKS:
        prompt = fewshot_prompt(prompt, select_fewshot(fewshot, inst, opts))
    return prompt


def run_benchmark(
    instances: Sequence[NluInstance],
    client: InferenceClient,
    fewshot: FewShotPolicy | None = None,
    render_opts: RenderOptions | None = None,
) -> BenchmarkRun:
    opts = render_opts or RenderOptions()
    started = time.monotonic()
    ids = [(i.dataset, i.id) for i in instances]
    if len(set(ids)) != len(ids):
        raise InvalidArgument("instance (dataset, id) pairs must be unique")
    results = [InstanceResult(inst, build_prompt(inst, opts, fewshot)) for inst in instances]

    def call(res: InstanceResult) -> None:
        try:
            res.completion = client.complete(res.prompt)
        except InferenceError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
            log.error("%s/%s: %s", res.instance.dataset, res.instance.id, res.error)

    with ThreadPoolExecutor(max_workers=client.cfg.max_concurrent_requests) as pool:
        list(pool.map(call, results))

    predictions = []
    groups: dict[tuple[str, TaskKind], list[tuple[InstanceResult, Any]]] = {}
    for res in results:
        parsed, record = _parse_result(res, opts)
        predictions.append(record)
        groups.setdefault((res.instance.dataset, res.instance.task), []).append((res, parsed))
    reports = [r for (ds, task), items in groups.items() if (r := score_group(ds, task, items, opts)) is not None]

    n = len(results)
    n_failed = sum(1 for r in results if r.completion is None)
    manifest = {
        "config": client.cfg.to_dict(),
        "config_hash": client.cfg.config_hash(),
        "render": asdict(opts),
        "fewshot": None
        if fewshot is None
        else {"k": fewshot.k, "seed": fewshot.seed, "require_distinct_outputs": fewshot.require_distinct_outputs,
              "pool_size": len(fewshot.pool)},
        "n_instances": n,
        "n_completed": n - n_failed,
        "n_failed": n_failed,
        "coverage": (n - n_failed) / n if n else 1.0,
        "n_unscoreable": sum(1 for p in predictions if p.get("unscoreable")),
        "truncated": [p["instance_id"] for p in predictions if p.get("truncated")],
        "timing": {"wall_seconds": round(time.monotonic() - started, 3)},
    }
    prompt_log = [{"instance_id": r.instance.id, "dataset": r.instance.dataset, "prompt": r.prompt} for r in results]
    return BenchmarkRun(predictions, reports, prompt_log, manifest)


def _parse_result(res: InstanceResult, opts: RenderOptions) -> tuple[Any, dict[str, Any]]:
    """Parsed prediction (``None`` when unscoreable) plus its JSONL record."""
    inst = res.instance
    comp = res.completion
    base = {
        "dataset": inst.dataset,
        "task": inst.task.value,
        "raw": comp.text if comp else None,
        "attempts": comp.attempts if comp else None,
        "truncated": True if comp and comp.truncated else None,
        "error": res.error,
    }
    cat = inst.category
    if cat is OutputCategory.GENERATION:
        return (comp.text if comp else None), prediction_record(inst.id, **base, unscoreable=None if comp else True)
    if cat is OutputCategory.TOKEN_CLASSIFICATION:
        view = _view(inst, opts)
        if comp is None:
            return None, prediction_record(inst.id, **base, unscoreable=True)
        pred = align_spans(parse_token_output(comp.text, view.labels), inst.source_text)
        ok = pred.matched_lines > 0 or comp.text.strip().lower() == "none"
        return (pred if ok else None), prediction_record(inst.id, tokens=pred, **base, unscoreable=None if ok else True)
    view = _view(inst, opts)
    if comp is None:
        return None, prediction_record(inst.id, **base, unscoreable=True)
    try:
        choice = parse_choice_output(comp.text, view.choices)
    except NoChoiceFound:
        return None, prediction_record(inst.id, **base, unscoreable=True)
    if not view.choices.multi_select:
        choice = replace(choice, letters=choice.letters[:1])
    descs = frozenset(view.choices[l].description for l in choice.letters)
    score = view.choices[choice.first].canonical if cat is OutputCategory.SEQUENCE_REGRESSION else None
    record = prediction_record(inst.id, choice=choice, score=score, **base, labels=sorted(descs))
    return (score if score is not None else descs), record


def _gold_descriptions(inst: NluInstance, choices: ChoiceSet) -> frozenset[str]:
    return frozenset(choices[l].description for l in inst.gold)


def score_group(
    dataset: str, task: TaskKind, items: Sequence[tuple[InstanceResult, Any]], opts: RenderOptions
) -> EvalReport | None:
    insts = [r.instance for r, _ in items]
    preds = [p for _, p in items]
    n = len(items)
    unscoreable = sum(1 for p in preds if p is None)
    cat = insts[0].category
    if cat is OutputCategory.GENERATION:
        return None
    if cat is OutputCategory.TOKEN_CLASSIFICATION:
        strict = relaxed = PrfScores()
        per_class: dict[str, PrfScores] = {}
        for inst, pred in zip(insts, preds):
            mentions = pred.mentions if isinstance(pred, TokenPrediction) else ()
            s, pc = entity_prf(mentions, inst.gold, "strict")
            r, _ = entity_prf(mentions, inst.gold, "relaxed")
            strict, relaxed = strict + s, relaxed + r
            for lab, sc in pc.items():
                per_class[lab] = per_class.get(lab, PrfScores()) + sc
        return EvalReport(
            dataset, task.value, "entity_f1", strict.f1, dict(sorted(per_class.items())), n, unscoreable,
            {"precision": strict.precision, "recall": strict.recall, "relaxed_f1": relaxed.f1,
             "relaxed_precision": relaxed.precision, "relaxed_recall": relaxed.recall},
        )
    if cat is OutputCategory.SEQUENCE_REGRESSION:
        pairs = [(p, inst.gold) for inst, p in zip(insts, preds) if p is not None]
        extras: dict[str, float] = {}
        try:
            value = pearson([float(p) for p, _ in pairs], [float(g) for _, g in pairs])
        except (ZeroVariance, TooFewPoints) as exc:
            value = 0.0
            extras["undefined"] = 1.0
            log.warning("%s: pearson undefined (%s); reporting 0.0", dataset, exc)
        return EvalReport(dataset, task.value, "pearson", value, {}, n, unscoreable, extras)

    golds = [_gold_descriptions(inst, inst.choices) for inst in insts]
    labels = list(dict.fromkeys(o.description for inst in insts for o in inst.choices.options))
    multi = insts[0].choices.multi_select
    if task is TaskKind.RE or multi:
        exclude = [NEGATIVE_RELATION] if task is TaskKind.RE else []
        scores = classification_prf(preds, golds, labels, exclude=exclude)
        per_class = {str(k): v for k, v in scores.per_class.items()}
        return EvalReport(
            dataset, task.value, "micro_f1", scores.micro.f1, per_class, n, unscoreable,
            {"precision": scores.micro.precision, "recall": scores.micro.recall, "macro_f1": scores.macro_f1,
             "accuracy": accuracy(preds, golds)},
        )
    scores = classification_prf(preds, golds, labels)
    per_class = {str(k): v for k, v in scores.per_class.items()}
    return EvalReport(
        dataset, task.value, "accuracy", accuracy(preds, golds), per_class, n, unscoreable,
        {"macro_f1": scores.macro_f1},
    )

