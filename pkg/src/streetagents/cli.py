"""Command-line entry point.

Exit codes: 0 success, 1 configuration or validation error, 2 partial failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .agent import Persona, PersonaError, bundled_personas, load_personas
from .environment import (
    EnvironmentGraph,
    EnvironmentSpecError,
    EnvironmentValidationError,
    bundled_environment,
    bundled_path,
    load_environment,
    shortest_path_length,
    street_view_url,
    VIEW_DIRECTIONS,
)
from .llm import API_KEY_ENV, Backend, BackendConfigError, LLMError, make_backend
from .memory import MemoryStream
from .rating import Attribute, rate_all
from .simulation import (
    DEFAULT_STEP_CAP,
    TRIAL_STEP_CAP,
    MixedEnvironmentError,
    RunConfig,
    SchemaError,
    aggregate_edge_frequencies,
    edge_frequency_dot,
    interview_run,
    load_runs,
    persist_runs,
    run_batch,
)
from .vision import CannedSceneStore, ProviderError, missing_scene_refs

log = logging.getLogger("streetagents")

STREETVIEW_KEY_ENV = "STREETVIEW_API_KEY"
BUNDLED_ENVS = ("synthetic", "trial")
TRIAL_TARGET = "tree-house"


class ConfigError(Exception):
    pass


@dataclass
class AppConfig:
    env: str = "synthetic"
    personas: str | None = None
    scenes: str | None = None
    backend: dict[str, Any] = field(default_factory=lambda: {"kind": "mock"})
    runs: int | None = None
    step_cap: int | None = None
    seed: int = 0
    parallelism: int = 1
    out: str = "out"
    k_retrieve: int = 15
    token_budget: int = 2000

    @classmethod
    def load(cls, path: str | None) -> "AppConfig":
        if path is None:
            return cls()
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: malformed JSON at line {exc.lineno}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{p}: config must be a JSON object")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{p}: unknown config keys {sorted(unknown)}")
        if isinstance(doc.get("backend"), str):
            doc["backend"] = {"kind": doc["backend"]}
        cfg = cls(**doc)
        # Relative paths in the file are relative to the file.
        for name in ("personas", "scenes"):
            value = getattr(cfg, name)
            if value and not Path(value).is_absolute():
                setattr(cfg, name, str(p.parent / value))
        if cfg.env not in BUNDLED_ENVS and not Path(cfg.env).is_absolute():
            cfg.env = str(p.parent / cfg.env)
        if "transcript" in cfg.backend and not Path(cfg.backend["transcript"]).is_absolute():
            cfg.backend["transcript"] = str(p.parent / cfg.backend["transcript"])
        return cfg

    def apply(self, args: argparse.Namespace) -> "AppConfig":
        for name in ("env", "personas", "scenes", "runs", "step_cap", "seed", "parallelism", "out"):
            value = getattr(args, name, None)
            if value is not None:
                setattr(self, name, value)
        backend = dict(self.backend)
        if getattr(args, "backend", None):
            if args.backend != backend.get("kind"):
                backend = {k: v for k, v in backend.items() if k not in ("kind", "transcript")}
            backend["kind"] = args.backend
        for name in ("transcript", "endpoint", "model"):
            value = getattr(args, name, None)
            if value is not None:
                backend[name] = value
        self.backend = backend
        return self


def resolve_environment(ref: str) -> EnvironmentGraph:
    if ref in BUNDLED_ENVS:
        return bundled_environment(ref)
    return load_environment(ref)


def resolve_scenes(cfg: AppConfig, env: EnvironmentGraph) -> CannedSceneStore:
    if cfg.scenes:
        return CannedSceneStore.load(cfg.scenes)
    if cfg.env in BUNDLED_ENVS:
        return CannedSceneStore.bundled(cfg.env)
    sibling = Path(cfg.env).with_name(f"{env.name.removesuffix('_env')}_scenes.json")
    if sibling.exists():
        return CannedSceneStore.load(sibling)
    raise ConfigError(f"no scene store for environment {cfg.env}; pass --scenes")


def resolve_personas(cfg: AppConfig, names: Sequence[str] | None) -> list[Persona]:
    personas = load_personas(cfg.personas) if cfg.personas else bundled_personas()
    if names:
        by_name = {p.name: p for p in personas}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise ConfigError(f"unknown agents: {', '.join(missing)}")
        personas = [by_name[n] for n in names]
    return personas


def backend_factory(cfg: AppConfig) -> Callable[[int], Backend]:
    """Mock backends get one instance per run seed; replay and remote share one instance."""
    opts = dict(cfg.backend)
    kind = opts.pop("kind", "mock")
    if kind == "mock":
        return lambda seed: make_backend("mock", seed=seed)
    if "api_key" in opts:
        raise ConfigError(f"API keys are read from ${API_KEY_ENV} only, never from config")
    transcript = opts.get("transcript")
    if transcript and not Path(transcript).exists():
        # Bare names resolve to the transcripts shipped with the package.
        bundled = bundled_path("transcripts") / Path(transcript).name
        if bundled.exists():
            opts["transcript"] = str(bundled)
    shared = make_backend(kind, **opts)
    return lambda seed: shared


def _split(value: str | None) -> list[str] | None:
    return [v.strip() for v in value.split(",") if v.strip()] if value else None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_validate(cfg: AppConfig, args: argparse.Namespace) -> int:
    ref = args.path or cfg.env
    try:
        env = resolve_environment(ref)
    except EnvironmentValidationError as exc:
        print(f"{ref}: invalid environment", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 1
    except EnvironmentSpecError as exc:
        print(f"{ref}: {exc}", file=sys.stderr)
        return 1
    print(f"{env.name}: {len(env.nodes)} nodes, {len(env.edges)} directed edges")
    dist = shortest_path_length(env, env.start, env.target_node)
    print(f"start {env.start}, target {env.target_node} ({env.target_label}), shortest path {dist} moves")
    return 0


def cmd_simulate(cfg: AppConfig, args: argparse.Namespace) -> int:
    if args.trial and args.env is None and cfg.env == "synthetic":
        cfg.env = "trial"
    env = resolve_environment(cfg.env)
    scenes = resolve_scenes(cfg, env)
    missing = missing_scene_refs(env, scenes)
    if missing:
        raise ConfigError(f"scene store lacks {len(missing)} references, e.g. {missing[0]}")
    factory = backend_factory(cfg)
    if args.trial:
        personas: list[Persona | None] = [None]
        base = RunConfig(
            environment=env.name,
            target=args.target or TRIAL_TARGET,
            backend=cfg.backend["kind"],
            step_cap=TRIAL_STEP_CAP if cfg.step_cap is None else cfg.step_cap,
            seed=cfg.seed,
            k_retrieve=cfg.k_retrieve,
            token_budget=cfg.token_budget,
        )
        runs = 1 if cfg.runs is None else cfg.runs
    else:
        personas = list(resolve_personas(cfg, _split(args.agents)))
        base = RunConfig(
            environment=env.name,
            target=args.target,
            backend=cfg.backend["kind"],
            step_cap=DEFAULT_STEP_CAP if cfg.step_cap is None else cfg.step_cap,
            seed=cfg.seed,
            k_retrieve=cfg.k_retrieve,
            token_budget=cfg.token_budget,
        )
        runs = 10 if cfg.runs is None else cfg.runs
    parallelism = cfg.parallelism if cfg.backend["kind"] != "replay" else 1
    records = run_batch(personas, runs, base, env, scenes, factory, parallelism)
    out = Path(cfg.out) / "runs.jsonl"
    persist_runs(records, out)
    for r in records:
        line = f"{r.run_id}\t{r.outcome}\t{r.path_string}\t{len(r.steps)} steps\t{r.tokens} tokens"
        print(line + (f"\t{r.error}" if r.error else ""))
    errors = sum(r.outcome == "error" for r in records)
    print(f"wrote {len(records)} runs to {out}" + (f" ({errors} failed)" if errors else ""))
    return 2 if errors else 0


def _memories_from(log_path: str | None) -> dict[str, MemoryStream]:
    if not log_path:
        return {}
    memories: dict[str, MemoryStream] = {}
    for r in load_runs(log_path):
        if r.config.persona:
            memories[r.config.persona] = MemoryStream(r.config.persona, r.memory)
    return memories


def cmd_rate(cfg: AppConfig, args: argparse.Namespace) -> int:
    env = resolve_environment(cfg.env)
    scenes = resolve_scenes(cfg, env)
    personas = resolve_personas(cfg, _split(args.agents))
    nodes = _split(args.nodes)
    wanted = nodes or env.node_ids
    unknown = [n for n in wanted if n not in env.nodes]
    if unknown:
        raise ConfigError(f"unknown nodes: {', '.join(unknown)}")
    absent = [env.node(n).scene_ref("front") for n in wanted if env.node(n).scene_ref("front") not in scenes]
    if absent:
        raise ConfigError(f"scene store lacks front views for: {', '.join(absent)}")
    attributes = [Attribute(a) for a in (_split(args.attributes) or ["safety", "liveliness"])]
    backend = backend_factory(cfg)(cfg.seed)
    matrix = rate_all(personas, env, scenes, backend, _memories_from(args.memory_from), nodes, attributes)
    out = Path(cfg.out)
    _write(out / "ratings.json", json.dumps(matrix.to_json(), indent=2, sort_keys=True) + "\n")
    _write(out / "ratings.csv", matrix.to_csv())
    _write(out / "ratings_stats.json", json.dumps(matrix.stats(), indent=2, sort_keys=True) + "\n")
    _write(
        out / "ratings_records.jsonl",
        "".join(json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False) + "\n" for r in matrix.records),
    )
    _write(out / "ratings_failures.json", json.dumps([f.to_dict() for f in matrix.failures], indent=2) + "\n")
    for r in matrix.records:
        print(f"{r.agent}\t{r.scene}\t{r.attribute.value}\t{r.score}")
    for f in matrix.failures:
        print(f"FAILED {f.agent}\t{f.scene}\t{Attribute(f.attribute).value}\t{f.error}", file=sys.stderr)
    print(f"{len(matrix.records)} ratings, {len(matrix.failures)} failures; wrote {out / 'ratings.json'}")
    return 2 if matrix.failures else 0


def cmd_interview(cfg: AppConfig, args: argparse.Namespace) -> int:
    records = load_runs(args.log)
    if not records:
        raise ConfigError(f"{args.log} holds no runs")
    if args.run:
        matches = [r for r in records if r.run_id == args.run]
        if not matches:
            raise ConfigError(f"no run {args.run!r} in {args.log}")
        record = matches[-1]
    else:
        record = records[-1]
    env_ref = record.config.environment if record.config.environment in BUNDLED_ENVS else cfg.env
    env = resolve_environment(env_ref)
    persona = None
    if record.config.persona:
        persona = resolve_personas(cfg, [record.config.persona])[0]
    if not record.memory:
        raise ConfigError(f"run {record.run_id} has an empty memory stream; nothing to interview about")
    backend = backend_factory(cfg)(record.config.seed)

    questions = args.question or []
    interactive = not questions
    stream = sys.stdin
    status = 0
    while True:
        if interactive:
            if stream.isatty():
                print("question> ", end="", flush=True)
            line = stream.readline()
            if not line or line.strip().lower() in ("quit", "exit"):
                break
            question = line.strip()
            if not question:
                continue
        else:
            if not questions:
                break
            question = questions.pop(0)
        try:
            print(interview_run(record, env, question, backend, persona))
        except LLMError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = 2
            break
    persist_runs(records, args.log)
    return status


def cmd_analyze(cfg: AppConfig, args: argparse.Namespace) -> int:
    records = [r for path in args.logs for r in load_runs(path)]
    freq = aggregate_edge_frequencies(records)
    table = freq.path_table()
    sys.stdout.write(table)
    if args.write or args.out is not None:
        out = Path(cfg.out)
        _write(out / "edges.json", json.dumps(freq.edges_json(), indent=2) + "\n")
        _write(out / "paths.txt", table)
        _write(out / "edges.dot", edge_frequency_dot(freq))
        print(f"wrote edge and path tables to {out}", file=sys.stderr)
    return 0


def cmd_fetch_scenes(cfg: AppConfig, args: argparse.Namespace, client: httpx.Client | None = None) -> int:
    env = resolve_environment(cfg.env)
    anchored = [n for n in env.nodes.values() if n.geo is not None]
    if not anchored:
        print(f"warning: {env.name} has no geo anchors; nothing to fetch", file=sys.stderr)
        return 0
    key = os.environ.get(STREETVIEW_KEY_ENV)
    if not key:
        raise ConfigError(f"set ${STREETVIEW_KEY_ENV} to fetch street-view images")
    try:
        w, h = (int(x) for x in args.size.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad --size {args.size!r}; expected WxH") from None
    out = Path(cfg.out) / "images"
    out.mkdir(parents=True, exist_ok=True)
    client = client or httpx.Client(timeout=30.0)
    failures = fetched = 0
    for node in anchored:
        for heading, direction in VIEW_DIRECTIONS.items():
            target = out / f"{node.id}_{heading}.jpg"
            if target.exists():
                continue
            url = street_view_url(node.geo, direction, (w, h), key)
            try:
                resp = client.get(url)
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                failures += 1
                # Never echo the URL: it carries the key.
                detail = f"HTTP {exc.response.status_code}" if isinstance(exc, httpx.HTTPStatusError) else type(exc).__name__
                print(f"{node.id}/{heading}: {detail}", file=sys.stderr)
                continue
            target.write_bytes(resp.content)
            fetched += 1
    print(f"fetched {fetched} images into {out}" + (f", {failures} failed" if failures else ""))
    return 2 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--env", help="environment JSON path or bundled name (synthetic, trial)")
    common.add_argument("--scenes", help="canned scene-feature store (JSON)")
    common.add_argument("--personas", help="personas JSON file (defaults to the bundled ten)")
    common.add_argument("--backend", choices=["remote", "mock", "replay"])
    common.add_argument("--transcript", help="replay transcript (JSONL)")
    common.add_argument("--endpoint", help="chat-completion URL for the remote backend")
    common.add_argument("--model", help="model name for the remote backend")
    common.add_argument("--seed", type=int)
    common.add_argument("--runs", type=int)
    common.add_argument("--step-cap", type=int, dest="step_cap")
    common.add_argument("--parallelism", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="streetagents", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check an environment file")
    p.add_argument("path", nargs="?", help="environment file (defaults to --env)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", parents=[common], help="run wayfinding batches")
    p.add_argument("--trial", action="store_true", help="persona-free trial run (default cap 15)")
    p.add_argument("--agents", help="comma-separated persona names")
    p.add_argument("--target", help="override the environment's target label")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rate", parents=[common], help="safety and liveliness ratings")
    p.add_argument("--agents", help="comma-separated persona names")
    p.add_argument("--nodes", help="comma-separated node ids (default: all)")
    p.add_argument("--attributes", help="comma-separated: safety, liveliness")
    p.add_argument("--memory-from", dest="memory_from", help="run log whose last run per persona seeds memory")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("interview", parents=[common], help="question the agent of a finished run")
    p.add_argument("--log", required=True, help="run log (JSONL); the exchange is appended to the run")
    p.add_argument("--run", help="run id (default: last run in the log)")
    p.add_argument("-q", "--question", action="append", help="ask and exit; repeat for several")
    p.set_defaults(func=cmd_interview)

    p = sub.add_parser("analyze", parents=[common], help="edge and path frequencies")
    p.add_argument("logs", nargs="+", help="run logs")
    p.add_argument("--write", action="store_true", help="write tables into --out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fetch-scenes", parents=[common], help=f"download street-view images (key in ${STREETVIEW_KEY_ENV})")
    p.add_argument("--size", default="400x400")
    p.set_defaults(func=cmd_fetch_scenes)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = AppConfig.load(args.config).apply(args)
        return args.func(cfg, args)
    except (ConfigError, BackendConfigError, EnvironmentSpecError, PersonaError, ProviderError,
            MixedEnvironmentError, SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
