"""Wayfinding runs, batches, JSONL run logs and path-frequency analysis."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .agent import (
    DEFAULT_TOKEN_BUDGET,
    AgentState,
    Decision,
    DirectionOption,
    Persona,
    decide_direction,
    default_status,
    interview,
    observe_arrival,
    target_found,
)
from .environment import HEADINGS, EnvironmentGraph, available_directions
from .llm import Backend, ExchangeRecord, LLMError, RecordingBackend
from .memory import DEFAULT_K, DEFAULT_START, MemoryEntry, MemoryStream, SimClock
from .vision import ProviderError, SceneFeatures, SceneProvider, SceneSummary, summarize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_STEP_CAP = 50
TRIAL_STEP_CAP = 15


@dataclass(frozen=True)
class RunConfig:
    environment: str = "synthetic"
    persona: str | None = None
    agent_name: str = "Max"
    agent_age: int = 25
    target: str | None = None
    status: str | None = None
    backend: str = "mock"
    step_cap: int = DEFAULT_STEP_CAP
    k_retrieve: int = DEFAULT_K
    token_budget: int = DEFAULT_TOKEN_BUDGET
    clock_start: str = DEFAULT_START.isoformat()
    clock_increment: float = 45.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.step_cap < 1:
            raise ValueError("step_cap must be at least 1")
        if self.k_retrieve < 1 or self.token_budget < 1:
            raise ValueError("k_retrieve and token_budget must be positive")
        if self.clock_increment <= 0:
            raise ValueError("clock_increment must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RunConfig":
        return cls(**doc)


@dataclass
class StepRecord:
    index: int
    at: str
    options: list[str]
    decision: Decision
    moved_to: str
    observation: str
    importance: int
    memory_text: str
    found: bool
    exchanges: list[dict[str, Any]] = field(default_factory=list)

    @property
    def tokens(self) -> int:
        return sum(x["prompt_tokens"] + x["reply_tokens"] for x in self.exchanges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "at": self.at,
            "options": self.options,
            "decision": self.decision.to_dict(),
            "moved_to": self.moved_to,
            "observation": self.observation,
            "importance": self.importance,
            "memory_text": self.memory_text,
            "found": self.found,
            "exchanges": self.exchanges,
            "tokens": self.tokens,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "StepRecord":
        return cls(
            doc["index"],
            doc["at"],
            list(doc["options"]),
            Decision.from_dict(doc["decision"]),
            doc["moved_to"],
            doc["observation"],
            doc["importance"],
            doc["memory_text"],
            doc["found"],
            list(doc["exchanges"]),
        )


@dataclass
class RunRecord:
    run_id: str
    config: RunConfig
    environment: str
    environment_digest: str
    path: list[str]
    steps: list[StepRecord]
    outcome: str
    error: str | None = None
    memory: list[MemoryEntry] = field(default_factory=list)
    interviews: list[dict[str, Any]] = field(default_factory=list)

    OUTCOMES = ("found", "step_capped", "error")

    @property
    def tokens(self) -> int:
        return sum(s.tokens for s in self.steps) + sum(i["prompt_tokens"] + i["reply_tokens"] for i in self.interviews)

    @property
    def path_string(self) -> str:
        return path_string(self.path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "v": SCHEMA_VERSION,
            "run_id": self.run_id,
            "config": self.config.to_dict(),
            "environment": self.environment,
            "environment_digest": self.environment_digest,
            "path": self.path,
            "steps": [s.to_dict() for s in self.steps],
            "outcome": self.outcome,
            "error": self.error,
            "memory": [m.to_dict() for m in self.memory],
            "interviews": self.interviews,
            "tokens": self.tokens,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RunRecord":
        return cls(
            doc["run_id"],
            RunConfig.from_dict(doc["config"]),
            doc["environment"],
            doc["environment_digest"],
            list(doc["path"]),
            [StepRecord.from_dict(s) for s in doc["steps"]],
            doc["outcome"],
            doc["error"],
            [MemoryEntry.from_dict(m) for m in doc["memory"]],
            list(doc["interviews"]),
        )


def path_string(path: Sequence[str]) -> str:
    return "".join(path) if all(len(n) == 1 for n in path) else "-".join(path)


def _exchange_dicts(records: Iterable[ExchangeRecord]) -> list[dict[str, Any]]:
    return [{"purpose": r.purpose, "prompt_tokens": r.prompt_tokens, "reply_tokens": r.reply_tokens} for r in records]


def _views(env: EnvironmentGraph, scenes: SceneProvider, node: str) -> dict[str, SceneFeatures]:
    n = env.node(node)
    return {h: scenes.get(n.scene_ref(h)) for h in HEADINGS}


def new_agent(config: RunConfig, env: EnvironmentGraph, persona: Persona | None) -> AgentState:
    target = config.target or env.target_label
    clock = SimClock(datetime.fromisoformat(config.clock_start), timedelta(seconds=config.clock_increment))
    kw = dict(clock=clock, k=config.k_retrieve, token_budget=config.token_budget)
    if persona is not None:
        return AgentState.for_persona(persona, env.start, target, status=config.status, **kw)
    status = config.status or default_status(target)
    return AgentState(config.agent_name, config.agent_age, target, status, env.start, **kw)


def run_wayfinding(
    config: RunConfig,
    env: EnvironmentGraph,
    scenes: SceneProvider,
    backend: Backend,
    persona: Persona | None = None,
    run_id: str = "run",
) -> RunRecord:
    """One memory-fresh run from the start node until the target is seen or the step cap is hit."""
    if persona is not None and config.persona not in (None, persona.name):
        raise ValueError(f"config names persona {config.persona!r} but {persona.name!r} was given")
    rec = RecordingBackend(backend)
    state = new_agent(config, env, persona)
    target_label = config.target or env.target_label
    summaries: dict[str, SceneSummary] = {}
    steps: list[StepRecord] = []

    def summary_of(node: str) -> SceneSummary:
        ref = env.node(node).scene_ref("front")
        if ref not in summaries:
            summaries[ref] = summarize(scenes.get(ref), rec, node, "front")
        return summaries[ref]

    def finish(outcome: str, error: str | None = None) -> RunRecord:
        return RunRecord(
            run_id,
            replace(config, persona=persona.name if persona else None),
            env.name,
            env.digest,
            list(state.visited),
            steps,
            outcome,
            error,
            list(state.memory.entries),
        )

    try:
        if target_found(_views(env, scenes, env.start), target_label):
            return finish("found")
        while state.steps_taken < config.step_cap:
            here = state.current
            prev = state.visited[-2] if len(state.visited) > 1 else None
            options = []
            for direction, node in available_directions(env, here):
                came = node == prev
                options.append(
                    DirectionOption(direction, node, None if came else summary_of(node), node in state.visited, came)
                )
            decision = decide_direction(state, options, rec, seed=derive_seed(config.seed, state.steps_taken))
            nxt = env.neighbors(here)[decision.chosen]
            front = summary_of(nxt)
            state.move(nxt)
            arrival = observe_arrival(state, here, decision.chosen, _views(env, scenes, nxt), front.text, target_label, rec)
            steps.append(
                StepRecord(
                    len(steps) + 1,
                    here,
                    [o.direction.value for o in options],
                    decision,
                    nxt,
                    arrival.observation,
                    arrival.importance,
                    arrival.memory_text,
                    arrival.found,
                    _exchange_dicts(rec.take()),
                )
            )
            if arrival.found:
                return finish("found")
        return finish("step_capped")
    except (LLMError, ProviderError, KeyError, ValueError) as exc:
        log.warning("run %s failed: %s", run_id, exc)
        return finish("error", f"{type(exc).__name__}: {exc}")


def derive_seed(base: int, *parts: int) -> int:
    key = ":".join(str(p) for p in (base, *parts))
    return int(hashlib.sha256(key.encode("ascii")).hexdigest()[:8], 16)


def run_batch(
    personas: Sequence[Persona | None],
    runs_per_persona: int,
    base: RunConfig,
    env: EnvironmentGraph,
    scenes: SceneProvider,
    backend_factory: Callable[[int], Backend],
    parallelism: int = 1,
) -> list[RunRecord]:
    """All (persona, run) pairs; results come back in (persona, run) order whatever the completion order."""
    if runs_per_persona < 1:
        raise ValueError("runs_per_persona must be at least 1")
    jobs = []
    for pi, persona in enumerate(personas):
        label = persona.name if persona else base.agent_name
        for ri in range(runs_per_persona):
            seed = derive_seed(base.seed, pi, ri)
            cfg = replace(base, seed=seed, persona=persona.name if persona else None)
            jobs.append((cfg, persona, f"{label}-{ri + 1:02d}"))

    def work(job: tuple[RunConfig, Persona | None, str]) -> RunRecord:
        cfg, persona, run_id = job
        return run_wayfinding(cfg, env, scenes, backend_factory(cfg.seed), persona, run_id)

    if parallelism <= 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(work, jobs))


def restore_agent(record: RunRecord, env: EnvironmentGraph, persona: Persona | None) -> AgentState:
    """Rebuild an agent as it was at the end of ``record``."""
    state = new_agent(record.config, env, persona)
    state.visited = list(record.path)
    state.current = record.path[-1]
    state.memory = MemoryStream(state.name, record.memory)
    if record.memory:
        state.clock.now = record.memory[-1].timestamp
    return state


def interview_run(
    record: RunRecord,
    env: EnvironmentGraph,
    question: str,
    backend: Backend,
    persona: Persona | None = None,
) -> str:
    """Ask a finished run's agent a question and append the exchange to the record."""
    state = restore_agent(record, env, persona)
    rec = RecordingBackend(backend)
    answer = interview(state, question, rec)
    ex = rec.take()
    record.interviews.append(
        {
            "question": question,
            "answer": answer,
            "prompt_tokens": sum(r.prompt_tokens for r in ex),
            "reply_tokens": sum(r.reply_tokens for r in ex),
        }
    )
    return answer


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def dumps_record(record: RunRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False)


def persist_runs(records: Iterable[RunRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")


def load_runs(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"malformed run record ({exc.msg})", lineno) from None
            if not isinstance(doc, dict):
                raise SchemaError("run record is not a JSON object", lineno)
            if doc.get("v") != SCHEMA_VERSION:
                raise SchemaError(f"unsupported schema version {doc.get('v')!r}", lineno)
            try:
                records.append(RunRecord.from_dict(doc))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"invalid run record ({type(exc).__name__}: {exc})", lineno) from None
    return records


class MixedEnvironmentError(ValueError):
    pass


@dataclass
class EdgeFrequencies:
    edges: dict[tuple[str, str], int]
    paths: Counter

    def edges_json(self) -> dict[str, int]:
        return {f"{a}-{b}": n for (a, b), n in sorted(self.edges.items())}

    def path_table(self) -> str:
        rows = sorted(self.paths.items(), key=lambda kv: (-kv[1], kv[0]))
        return "".join(f"{p} {n}\n" for p, n in rows)


def aggregate_edge_frequencies(records: Sequence[RunRecord]) -> EdgeFrequencies:
    """Undirected edge traversal counts and exact-path counts over all runs."""
    digests = {r.environment_digest for r in records}
    if len(digests) > 1:
        names = sorted({r.environment for r in records})
        raise MixedEnvironmentError(f"run records come from different environments: {', '.join(names)}")
    edges: Counter = Counter()
    paths: Counter = Counter()
    for r in records:
        for a, b in zip(r.path, r.path[1:]):
            edges[tuple(sorted((a, b)))] += 1
        paths[r.path_string] += 1
    return EdgeFrequencies(dict(edges), paths)


def edge_frequency_dot(freq: EdgeFrequencies, name: str = "paths") -> str:
    """Graphviz source with pen widths proportional to edge use."""
    top = max(freq.edges.values(), default=1)
    lines = [f"graph {name} {{"]
    for (a, b), n in sorted(freq.edges.items()):
        width = 1 + 7 * n / top
        lines.append(f'  "{a}" -- "{b}" [penwidth={width:.2f}, label="{n}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
