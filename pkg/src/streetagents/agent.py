"""Persona-conditioned agent: direction decisions, arrival observations, interviews."""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import prompts
from .environment import Direction
from .llm import Backend, LLMError, complete_text
from .memory import DEFAULT_K, MemoryKind, MemoryStream, SimClock, format_timestamp, render_context, retrieve, score_importance
from .vision import SceneFeatures, SceneSummary, contains_target

log = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 2000
DECISION_ATTEMPTS = 3
CAME_FROM_BODY = "already saw what is there in that direction."


class PersonaError(ValueError):
    pass


@dataclass(frozen=True)
class Persona:
    name: str
    age: int
    traits: tuple[str, ...]
    backstory: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "traits", tuple(t.strip() for t in self.traits))
        if not self.name.strip():
            raise PersonaError("persona name must be non-empty")
        if self.age < 18:
            raise PersonaError(f"persona {self.name} must be at least 18 (got {self.age})")
        if not self.traits or not all(self.traits):
            raise PersonaError(f"persona {self.name} needs at least one trait")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Persona":
        try:
            return cls(str(doc["name"]), int(doc["age"]), tuple(doc["traits"]), str(doc.get("backstory", "")))
        except KeyError as exc:
            raise PersonaError(f"persona entry missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "age": self.age, "traits": list(self.traits), "backstory": self.backstory}


def load_personas(path: str | Path) -> list[Persona]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise PersonaError(f"cannot read personas file {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise PersonaError(f"{path}: malformed JSON at line {exc.lineno}") from None
    if not isinstance(doc, list):
        raise PersonaError(f"{path}: expected a JSON list of personas")
    personas = [Persona.from_dict(p) for p in doc]
    names = [p.name for p in personas]
    if len(set(names)) != len(names):
        raise PersonaError(f"{path}: duplicate persona names")
    return personas


def bundled_personas() -> list[Persona]:
    from .environment import bundled_path

    return load_personas(bundled_path("personas.json"))


@dataclass
class AgentState:
    name: str
    age: int
    target: str
    status: str
    current: str
    persona: Persona | None = None
    visited: list[str] = field(default_factory=list)
    memory: MemoryStream | None = None
    clock: SimClock = field(default_factory=SimClock)
    k: int = DEFAULT_K
    token_budget: int = DEFAULT_TOKEN_BUDGET

    def __post_init__(self) -> None:
        if not self.visited:
            self.visited = [self.current]
        if self.memory is None:
            self.memory = MemoryStream(self.name)

    @classmethod
    def for_persona(cls, persona: Persona, start: str, target: str, **kw: Any) -> "AgentState":
        status = kw.pop("status", None) or default_status(target)
        return cls(persona.name, persona.age, target, status, start, persona=persona, **kw)

    @property
    def steps_taken(self) -> int:
        return len(self.visited) - 1

    def move(self, node: str) -> None:
        self.visited.append(node)
        self.current = node

    def header(self) -> str:
        p = self.persona
        return prompts.persona_block(
            self.name,
            self.age,
            p.traits if p else (),
            p.backstory if p else None,
            format_timestamp(self.clock.now),
            self.status,
        )

    def memory_context(self) -> str:
        entries = retrieve(self.memory, self.k) if len(self.memory) else []
        return render_context(entries, self.token_budget) if entries else ""


def default_status(target: str) -> str:
    return f"Want to explore the city and find a {target}."


@dataclass(frozen=True)
class DirectionOption:
    direction: Direction
    node: str
    summary: SceneSummary | None = None
    visited: bool = False
    came_from: bool = False

    def body(self) -> str:
        if self.came_from:
            return CAME_FROM_BODY
        if self.summary is None:
            raise ValueError(f"option {self.direction.value} has no scene summary")
        return self.summary.text


@dataclass(frozen=True)
class Decision:
    chosen: Direction
    justification: str
    rejections: Mapping[Direction, str]
    raw_response: str
    violation: bool = False
    attempts: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "chosen": self.chosen.value,
            "justification": self.justification,
            "rejections": {d.value: r for d, r in self.rejections.items()},
            "raw_response": self.raw_response,
            "violation": self.violation,
            "attempts": self.attempts,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Decision":
        return cls(
            Direction(doc["chosen"]),
            doc["justification"],
            {Direction(d): r for d, r in doc["rejections"].items()},
            doc["raw_response"],
            doc["violation"],
            doc["attempts"],
        )


_CLAUSE = re.compile(r"\b(?:(does\s+not|doesn't|do\s+not|did\s+not)\s+)?wish(?:es)?\s+to\s+go\b", re.I)
_DIRECTION = re.compile(r"\b(forward|backward|left|right)\b", re.I)
_BECAUSE = re.compile(r"\bbecause\b[,:]?\s*", re.I)


def parse_decision(
    text: str, offered: Sequence[Direction]
) -> tuple[Direction | None, str, dict[Direction, str]]:
    """Direction from the first affirmative "wish to go" clause, plus the stated reasons.

    Returns ``(None, "", {})`` when no offered direction can be found.
    """
    matches = list(_CLAUSE.finditer(text))
    chosen: Direction | None = None
    justification = ""
    rejections: dict[Direction, str] = {}
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        clause = text[m.end():end]
        because = _BECAUSE.search(clause)
        head = clause[: because.start()] if because else clause
        reason = clause[because.end():].strip() if because else clause.strip()
        d = _DIRECTION.search(head)
        if d is None:
            continue
        direction = Direction(d.group(1).lower())
        if m.group(1):
            rejections.setdefault(direction, _trim_reason(reason))
        elif chosen is None:
            chosen, justification = direction, _trim_reason(reason)
    if chosen is None or chosen not in offered:
        return None, "", {}
    return chosen, justification or text.strip(), rejections


_DANGLING_SUBJECT = re.compile(r"([.,;])\s+[A-Z][\w'-]*\s*$")


def _trim_reason(reason: str) -> str:
    # The split leaves the next clause's subject ("... trees. Max") at the end.
    m = _DANGLING_SUBJECT.search(reason)
    if m:
        reason = reason[: m.start() + (1 if m.group(1) == "." else 0)]
    return reason.strip()


def _fallback(options: Sequence[DirectionOption], visited: Sequence[str], seed: int) -> DirectionOption:
    def last_seen(opt: DirectionOption) -> int:
        return max((i for i, v in enumerate(visited) if v == opt.node), default=-1)

    oldest = min(last_seen(o) for o in options)
    pool = [o for o in options if last_seen(o) == oldest]
    return random.Random(seed).choice(pool)


def situation_text(state: AgentState, options: Sequence[DirectionOption]) -> str:
    dirs = ", ".join(o.direction.value for o in options)
    if state.steps_taken == 0:
        return (
            f"{state.name} is at location {state.current}, the starting point. "
            f"The directions in which {state.name} can move are {dirs}."
        )
    text = (
        f"{state.name} is at location {state.current} and has to decide on moving further. "
        f"{state.name} can only go to these directions: {dirs}."
    )
    came = [o for o in options if o.came_from]
    if came:
        text += f" {state.name} came here at {state.current} from the {came[0].direction.value} direction."
    return text


def decide_direction(
    state: AgentState,
    options: Sequence[DirectionOption],
    backend: Backend,
    seed: int = 0,
    attempts: int = DECISION_ATTEMPTS,
) -> Decision:
    if not options:
        raise ValueError("decide_direction needs at least one option")
    offered = [o.direction for o in options]
    lines = [prompts.option_line(o.direction.value, o.node, o.visited, o.body()) for o in options]
    text = prompts.decision_prompt(
        state.header(),
        state.memory_context(),
        state.visited,
        situation_text(state, options),
        lines,
        state.name,
        state.target,
    )
    exchange, reply = complete_text(backend, prompts.DECISION_SYSTEM, text)
    for attempt in range(1, attempts + 1):
        chosen, why, rejections = parse_decision(reply, offered)
        if chosen is not None:
            return Decision(chosen, why, rejections, reply, False, attempt)
        if attempt < attempts:
            retry = prompts.DECISION_RETRY.format(options=", ".join(d.value for d in offered), name=state.name)
            exchange = exchange.followup(reply, retry)
            reply = backend.complete(exchange)
    pick = _fallback(options, state.visited, seed)
    log.warning("%s: no valid direction after %d attempts; falling back to %s", state.name, attempts, pick.direction.value)
    return Decision(
        pick.direction,
        f"protocol violation: no valid direction after {attempts} attempts; least recently visited option taken",
        {},
        reply,
        True,
        attempts,
    )


def _with_article(label: str) -> str:
    return ("an " if label[:1].lower() in "aeiou" else "a ") + label


def _category_list(f: SceneFeatures) -> str:
    labels = [_with_article(l) for l, _ in f.categories]
    if len(labels) <= 1:
        return "".join(labels) or "nothing recognisable"
    return ", ".join(labels[:-1]) + ", and " + labels[-1]


def compose_arrival(
    name: str,
    prev: str,
    direction: Direction,
    node: str,
    target: str,
    views: Mapping[str, SceneFeatures],
    front_summary: str,
    found: bool,
) -> str:
    overall = front_summary[:1].lower() + front_summary[1:] if front_summary else ""
    text = (
        f"After coming from location {prev}, {name} moved {direction.value} to {node}, and looked on the right "
        f"and left sides of the street to find the {target}. The scenes appear to be a combination of "
        f"{_category_list(views['right'])}, combination of {_category_list(views['left'])}."
    )
    if overall:
        text += f" Overall {overall}"
    text += f" {name} found the {target} here." if found else f" No sign of {target} yet."
    return text


def target_found(views: Mapping[str, SceneFeatures], target_label: str) -> bool:
    """True when any consulted heading shows the target among its top categories."""
    return any(contains_target(f, target_label) for f in views.values())


@dataclass(frozen=True)
class Arrival:
    observation: str
    found: bool
    importance: int
    memory_text: str


def observe_arrival(
    state: AgentState,
    prev: str,
    direction: Direction,
    views: Mapping[str, SceneFeatures],
    front_summary: str,
    target_label: str,
    backend: Backend,
) -> Arrival:
    """Inspect the arrival node's views for the target and store the observation in memory."""
    found = target_found(views, target_label)
    observation = compose_arrival(state.name, prev, direction, state.current, state.target, views, front_summary, found)
    importance = score_importance(observation, backend)
    _, note = complete_text(backend, prompts.MEMORY_SYSTEM, prompts.memory_note_prompt(state.name, observation))
    note = note.strip() or observation
    state.memory.record(note, importance, state.clock.tick(), MemoryKind.OBSERVATION)
    return Arrival(observation, found, importance, note)


class InterviewError(LLMError):
    pass


def interview(state: AgentState, question: str, backend: Backend) -> str:
    if not len(state.memory):
        raise InterviewError(f"{state.name} has no memories to answer from")
    if not question.strip():
        raise ValueError("question must be non-empty")
    text = prompts.interview_prompt(state.header(), state.memory_context(), state.visited, state.name, question)
    _, answer = complete_text(backend, prompts.INTERVIEW_SYSTEM, text)
    return answer
