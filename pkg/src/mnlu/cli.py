"""Command-line entry point.

Exit codes: 0 success, 1 input or dataset error, 2 partial remote failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .core import (
    ChoiceSet,
    NluInstance,
    OutputCategory,
    TaskKind,
    ValidationError,
    load_instances,
    output_category,
    write_jsonl,
)

log = logging.getLogger("mnlu")

EXIT_OK, EXIT_INPUT, EXIT_REMOTE = 0, 1, 2


def _write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _flags(args: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- build-corpus ----------------------------------------------------------------


def cmd_build_corpus(args: argparse.Namespace) -> int:
    from .corpus import ConfigError, SamplingPlan, build_corpus, load_corpus_config, write_corpus
    from .corpus.config import tasks_in_order

    if args.config is None:
        log.error("build-corpus needs --config")
        return EXIT_INPUT
    try:
        cfg = load_corpus_config(args.config)
    except (ConfigError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT

    render = cfg.render
    if args.seed is not None:
        render = replace(render, seed=args.seed)
    if args.shuffle_labels is not None:
        render = replace(render, shuffle_labels=args.shuffle_labels)
    plan = cfg.plan
    if plan is None and (args.equal_per_task or args.total is not None):
        plan = SamplingPlan(tasks=tasks_in_order(cfg.datasets), seed=render.seed)
    if plan is not None:
        try:
            plan = replace(
                plan,
                total_instances=args.total if args.total is not None else plan.total_instances,
                seed=args.seed if args.seed is not None else plan.seed,
            )
        except ValueError as exc:
            log.error("%s", exc)
            return EXIT_INPUT
    domains = args.domain or cfg.domains

    summarizer = None
    if args.endpoint:
        from .client import InferenceClient, InferenceConfig, summarize_document

        client = InferenceClient(InferenceConfig(args.endpoint, model_name=args.model))
        summarizer = lambda note, type_label: summarize_document(note, type_label, client)  # noqa: E731

    try:
        build = build_corpus(cfg.datasets, plan, render, domains=domains, summarizer=summarizer)
    except Exception as exc:  # sampling can fail as a whole, e.g. an empty task pool
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INPUT
    out = Path(args.out)
    path = write_corpus(build, out)
    manifest = {"command": "build-corpus", "version": __version__, "flags": _flags(args), **build.manifest}
    manifest["outputs"] = {"corpus": path.name, "sha256": _sha256(path)}
    _write_json(out / "manifest.json", manifest)
    for ds in build.manifest["datasets"]:
        if ds["status"] == "failed":
            print(f"dataset {ds['name']}: {ds['error']}", file=sys.stderr)
    log.info("wrote %d prompt pairs to %s", len(build.pairs), path)
    return EXIT_INPUT if build.failed else EXIT_OK


# -- run-eval --------------------------------------------------------------------


def cmd_run_eval(args: argparse.Namespace) -> int:
    from .client import FewShotPolicy, InferenceClient, InferenceConfig, run_benchmark
    from .metrics import aggregate_benchmark, format_table
    from .prompts import RenderOptions

    try:
        instances = load_instances(args.dataset)
        for inst in instances:
            inst.validate()
        pool = load_instances(args.fewshot_pool) if args.fewshot_pool else instances
        cfg = InferenceConfig(
            args.endpoint,
            model_name=args.model,
            max_output_tokens=args.max_tokens,
            max_concurrent_requests=args.concurrency,
            max_attempts=args.max_attempts,
            timeout_ms=args.timeout_ms,
            api_key_env_var=args.api_key_env,
        )
        grouping = json.loads(Path(args.benchmarks).read_text()) if args.benchmarks else None
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    opts = RenderOptions(seed=args.seed or 0, shuffle_labels=args.shuffle_labels)
    fewshot = FewShotPolicy(pool, k=args.fewshot, seed=args.seed or 0) if args.fewshot else None

    with InferenceClient(cfg) as client:
        try:
            run = run_benchmark(instances, client, fewshot, opts)
        except ValueError as exc:
            log.error("%s", exc)
            return EXIT_INPUT

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "predictions.jsonl", run.predictions)
    write_jsonl(out / "prompts.jsonl", run.prompt_log)
    report: dict[str, Any] = {"reports": [r.to_dict() for r in run.reports]}
    if grouping:
        report["benchmarks"] = aggregate_benchmark(run.reports, grouping)
    _write_json(out / "report.json", report)
    extra = ["relaxed_f1"] if args.relaxed else []
    table = format_table(run.reports, extra)
    (out / "results.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    manifest = {"command": "run-eval", "version": __version__, "flags": _flags(args), **run.manifest}
    _write_json(out / "manifest.json", manifest)
    if run.failed:
        print(f"{run.failed} of {len(instances)} requests failed; coverage {run.manifest['coverage']:.1%}", file=sys.stderr)
        return EXIT_REMOTE
    return EXIT_OK


# -- merge -----------------------------------------------------------------------


def cmd_merge(args: argparse.Namespace) -> int:
    from .dare import MergeConfig, ParamError, dare_merge, load_params, save_params

    try:
        cfg = MergeConfig(args.drop_rate, seed=args.seed or 0, weight=args.weight)
        base = load_params(args.base)
        tuned = load_params(args.tuned)
        merged = dare_merge(base, tuned, cfg)
    except (OSError, ValueError) as exc:
        msg = str(exc)
        if isinstance(exc, ParamError):
            msg = f"{type(exc).__name__}: {exc}"
        print(msg, file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / args.output_name
    save_params(merged, target)
    manifest = {
        "command": "merge",
        "version": __version__,
        "flags": _flags(args),
        "drop_rate": cfg.drop_rate,
        "weight": cfg.weight,
        "seed": cfg.seed,
        "entries": len(merged),
        "inputs": {"base": _sha256(Path(args.base)), "tuned": _sha256(Path(args.tuned))},
        "outputs": {"merged": target.name, "sha256": _sha256(target)},
    }
    _write_json(out / "manifest.json", manifest)
    return EXIT_OK


# -- format / parse ----------------------------------------------------------------


def _read_input(path: str | None) -> str:
    if path is None or path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def cmd_format(args: argparse.Namespace) -> int:
    from .prompts import RenderError, RenderOptions, render

    try:
        inst = NluInstance.from_dict(json.loads(_read_input(args.input)))
        inst.validate()
        pair = render(inst, RenderOptions(seed=args.seed or 0, shuffle_labels=args.shuffle_labels))
    except (ValueError, KeyError, TypeError, RenderError, ValidationError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.part == "json":
        sys.stdout.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")
    elif args.part == "both":
        sys.stdout.write(f"{pair.input}\n\n{pair.output}\n")
    else:
        sys.stdout.write(getattr(pair, args.part) + "\n")
    if args.out_given:
        out = Path(args.out)
        _write_json(out / "prompt.json", pair.to_dict())
        _write_json(out / "manifest.json", {"command": "format", "version": __version__, "flags": _flags(args)})
    return EXIT_OK


def _split_list(value: str) -> list[str]:
    sep = "|" if "|" in value else ","
    return [v.strip() for v in value.split(sep) if v.strip()]


def cmd_parse(args: argparse.Namespace) -> int:
    from .parse import NoChoiceFound, align_spans, parse_choice_output, parse_token_output

    text = _read_input(args.input)
    source = None
    instance_id = "stdin"
    try:
        if args.instance:
            inst = NluInstance.from_dict(json.loads(Path(args.instance).read_text(encoding="utf-8")))
            task, label_set, source, instance_id = inst.task, inst.label_set, inst.source_text, inst.id
            if task is TaskKind.STS and label_set is None:
                from .prompts import DEFAULT_STS_SCALE

                label_set = DEFAULT_STS_SCALE.choice_set()
        else:
            task = TaskKind.parse(args.task)
            if output_category(task) is OutputCategory.TOKEN_CLASSIFICATION:
                if not args.labels:
                    raise ValueError("token tasks need --labels")
                label_set = tuple(_split_list(args.labels))
            elif output_category(task) is OutputCategory.GENERATION:
                label_set = None
            else:
                if not args.choices:
                    raise ValueError("choice tasks need --choices")
                descs = _split_list(args.choices)
                canon = list(range(len(descs))) if task is TaskKind.STS else None
                label_set = ChoiceSet.build(descs, canon, multi_select=args.multi)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT

    cat = output_category(task)
    record: dict[str, Any] = {"instance_id": instance_id, "task": task.value}
    if cat is OutputCategory.TOKEN_CLASSIFICATION:
        pred = parse_token_output(text, label_set)
        if source is not None:
            pred = align_spans(pred, source)
        record["mentions"] = [m.to_dict() for m in pred.mentions]
        record["unparsed_lines"] = list(pred.unparsed_lines)
    elif cat is OutputCategory.GENERATION:
        record["text"] = text.strip()
    else:
        try:
            pred = parse_choice_output(text, label_set)
        except NoChoiceFound as exc:
            print(f"NoChoiceFound: {exc}", file=sys.stderr)
            return EXIT_INPUT
        letters = list(pred.letters if label_set.multi_select else pred.letters[:1])
        record["letters"] = letters
        if cat is OutputCategory.SEQUENCE_REGRESSION:
            record["score"] = label_set[letters[0]].canonical
    sys.stdout.write(json.dumps(record, ensure_ascii=False) + "\n")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------------


def _common(sub: argparse.ArgumentParser) -> None:
    # also accepted after the subcommand; SUPPRESS keeps the global value when absent
    sub.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub.add_argument("--config", type=Path, default=argparse.SUPPRESS)
    sub.add_argument("--log-level", default=argparse.SUPPRESS)
    sub.add_argument("--out", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mnlu", description="Unified medical NLU prompting toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None, help="seed for shuffling, sampling and merging")
    p.add_argument("--config", type=Path, default=None, help="INI corpus plan")
    p.add_argument("--log-level", default="WARNING")
    p.add_argument("--out", default=None, help="output directory (default: ./out)")
    subs = p.add_subparsers(dest="command", required=True)

    b = subs.add_parser("build-corpus", help="build the instruction-tuning corpus")
    _common(b)
    b.add_argument("--total", type=int, default=None, help="total instance budget")
    b.add_argument("--equal-per-task", action="store_true", help="sample an equal share per task")
    b.add_argument("--domain", action="append", default=None, help="keep only this domain (repeatable)")
    b.add_argument("--shuffle-labels", action=argparse.BooleanOptionalAction, default=None)
    b.add_argument("--endpoint", default=None, help="chat endpoint for summarization preprocessing")
    b.add_argument("--model", default="model")
    b.set_defaults(func=cmd_build_corpus)

    e = subs.add_parser("run-eval", help="run a benchmark against a chat endpoint")
    _common(e)
    e.add_argument("dataset", type=Path, help="instance JSONL")
    e.add_argument("--endpoint", required=True)
    e.add_argument("--model", default="model")
    e.add_argument("--fewshot", type=int, default=0, help="in-context examples for token tasks")
    e.add_argument("--fewshot-pool", type=Path, default=None, help="train-split instance JSONL")
    e.add_argument("--relaxed", action="store_true", help="add the overlap-criterion column")
    e.add_argument("--shuffle-labels", action="store_true")
    e.add_argument("--concurrency", type=int, default=4)
    e.add_argument("--max-tokens", type=int, default=1024)
    e.add_argument("--max-attempts", type=int, default=3)
    e.add_argument("--timeout-ms", type=int, default=60_000)
    e.add_argument("--api-key-env", default="MNLU_API_KEY")
    e.add_argument("--benchmarks", default=None, help="JSON mapping benchmark name to dataset names")
    e.set_defaults(func=cmd_run_eval)

    m = subs.add_parser("merge", help="drop-and-rescale merge of two parameter files")
    _common(m)
    m.add_argument("--base", type=Path, required=True)
    m.add_argument("--tuned", type=Path, required=True)
    m.add_argument("--drop-rate", type=float, required=True)
    m.add_argument("--weight", type=float, default=1.0)
    m.add_argument("--output-name", default="merged.params")
    m.set_defaults(func=cmd_merge)

    f = subs.add_parser("format", help="render one instance")
    _common(f)
    f.add_argument("--input", default=None, help="instance JSON file (default: stdin)")
    f.add_argument("--part", choices=["input", "output", "both", "json"], default="input")
    f.add_argument("--shuffle-labels", action="store_true")
    f.set_defaults(func=cmd_format)

    r = subs.add_parser("parse", help="parse one completion")
    _common(r)
    r.add_argument("--input", default=None, help="completion text file (default: stdin)")
    r.add_argument("--instance", default=None, help="instance JSON supplying task and label set")
    r.add_argument("--task", default=None)
    r.add_argument("--labels", default=None, help="token labels, '|' or ',' separated")
    r.add_argument("--choices", default=None, help="option descriptions in order, '|' or ',' separated")
    r.add_argument("--multi", action="store_true")
    r.set_defaults(func=cmd_parse)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "parse" and not args.instance and not args.task:
        parser.error("parse needs --instance or --task")
    args.out_given = args.out is not None
    if args.out is None:
        args.out = "out"
    logging.basicConfig(level=str(args.log_level).upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
