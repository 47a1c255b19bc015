"""Safety and liveliness ratings of scenes by persona agents."""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from . import prompts
from .agent import Persona
from .environment import EnvironmentGraph
from .llm import Backend, LLMError, complete_text
from .memory import DEFAULT_K, MemoryKind, MemoryStream, SimClock, format_timestamp, render_context, retrieve
from .vision import ProviderError, SceneFeatures, SceneProvider, features_to_facts

log = logging.getLogger(__name__)

RATING_IMPORTANCE = 5
RATING_STATUS = "Taking part in a street-scene perception survey."


class Attribute(str, Enum):
    SAFETY = "safety"
    LIVELINESS = "liveliness"

    def __str__(self) -> str:
        return self.value


class RatingParseError(LLMError):
    pass


@dataclass(frozen=True)
class ParsedRating:
    score: int
    reason: str
    to_ten: str
    to_one: str
    scene: str | None = None


@dataclass(frozen=True)
class RatingRecord:
    agent: str
    scene: str
    attribute: Attribute
    score: int
    reason: str
    to_ten: str
    to_one: str
    raw_response: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "attribute", Attribute(self.attribute))
        if not 1 <= self.score <= 10:
            raise ValueError(f"score {self.score} outside [1, 10]")
        if not (self.reason and self.to_ten and self.to_one):
            raise ValueError("reason and both suggestions must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["attribute"] = self.attribute.value
        return d


@dataclass(frozen=True)
class RatingFailure:
    agent: str
    scene: str
    attribute: Attribute
    error: str

    def to_dict(self) -> dict[str, Any]:
        return {"agent": self.agent, "scene": self.scene, "attribute": Attribute(self.attribute).value, "error": self.error}


_HEADLINE = re.compile(
    r"(?P<name>[^\n.]*?)'s\s+(?P<attr>safety|liveliness)\s+rating\s+for\s+scene\s+(?P<scene>[\w-]+)\s+is\s+(?P<n>-?\d+)",
    re.I,
)
_REASON = re.compile(r"\bThe reason for that is\s*", re.I)
_TO_TEN = re.compile(r"\bTo\s+(?:increase|elevate|raise|improve|enhance|bring)\b[^.]*?\bto\s+(?:a\s+)?(?:perfect\s+)?10\b", re.I)
_TO_ONE = re.compile(r"\bTo\s+(?:decrease|reduce|lower|bring|drop)\b[^.]*?\bto\s+1\b", re.I)
_INT = re.compile(r"(?<![\w.])-?\d+(?![\w.]\d)")


def _clean(span: str) -> str:
    return re.sub(r"\s+", " ", span).strip(" ,")


def parse_rating(text: str) -> ParsedRating:
    """Score, reason and the two suggestions from a rating reply.

    Out-of-range scores raise; they are never clamped.
    """
    ten = _TO_TEN.search(text)
    one = _TO_ONE.search(text, ten.end() if ten else 0)
    body_end = ten.start() if ten else (one.start() if one else len(text))
    head = _HEADLINE.search(text[:body_end])
    scene = None
    if head:
        score, scene = int(head.group("n")), head.group("scene")
        body_start = head.end()
    else:
        m = _INT.search(text[:body_end])
        if m is None:
            raise RatingParseError("no rating found in reply")
        score, body_start = int(m.group()), m.end()
    if not 1 <= score <= 10:
        raise RatingParseError(f"rating {score} outside [1, 10]")
    if ten is None or one is None:
        raise RatingParseError("reply lacks the make-it-10 or make-it-1 suggestion")
    body = text[body_start:body_end]
    reason_m = _REASON.search(body)
    reason = _clean(body[reason_m.end():] if reason_m else body.lstrip(" ."))
    to_ten = _clean(text[ten.start():one.start()])
    to_one = _clean(text[one.start():])
    if not reason:
        raise RatingParseError("reply gives no reason for the rating")
    return ParsedRating(score, reason, to_ten, to_one, scene)


def rating_header(persona: Persona, now: str) -> str:
    return prompts.persona_block(persona.name, persona.age, persona.traits, persona.backstory, now, RATING_STATUS)


def rate_scene(
    persona: Persona,
    scene: str,
    features: SceneFeatures,
    attribute: Attribute | str,
    memory: MemoryStream,
    backend: Backend,
    clock: SimClock,
    k: int = DEFAULT_K,
    token_budget: int = 2000,
) -> RatingRecord:
    """Ask for one rating; re-prompt once on an unusable reply. The result is added to ``memory``."""
    attribute = Attribute(attribute)
    context = render_context(retrieve(memory, k), token_budget) if len(memory) else ""
    text = prompts.rating_prompt(
        rating_header(persona, format_timestamp(clock.now)),
        context,
        features_to_facts(features),
        persona.name,
        scene,
        attribute.value,
    )
    exchange, reply = complete_text(backend, prompts.RATING_SYSTEM, text)
    try:
        parsed = parse_rating(reply)
    except RatingParseError as first:
        retry = prompts.RATING_RETRY.format(
            name=persona.name, scene=scene, attribute=attribute.value, Attribute=attribute.value.capitalize()
        )
        reply = backend.complete(exchange.followup(reply, retry))
        try:
            parsed = parse_rating(reply)
        except RatingParseError as second:
            raise RatingParseError(f"{first}; after re-prompt: {second}") from None
    if parsed.scene and parsed.scene != scene:
        log.info("%s's reply names scene %s while rating scene %s", persona.name, parsed.scene, scene)
    record = RatingRecord(persona.name, scene, attribute, parsed.score, parsed.reason, parsed.to_ten, parsed.to_one, reply)
    memory.record(
        f"{persona.name} rated the {attribute.value} of scene {scene} as {parsed.score} out of 10.",
        RATING_IMPORTANCE,
        clock.tick(),
        MemoryKind.RATING,
    )
    return record


@dataclass
class RatingMatrix:
    records: list[RatingRecord] = field(default_factory=list)
    failures: list[RatingFailure] = field(default_factory=list)

    @property
    def cells(self) -> int:
        return len(self.records) + len(self.failures)

    def to_json(self) -> dict[str, dict[str, dict[str, int | None]]]:
        out: dict[str, dict[str, dict[str, int | None]]] = {}
        for r in self.records:
            out.setdefault(r.agent, {}).setdefault(r.scene, {})[r.attribute.value] = r.score
        for f in self.failures:
            out.setdefault(f.agent, {}).setdefault(f.scene, {})[Attribute(f.attribute).value] = None
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "node", "attribute", "score"])
        for r in self.records:
            w.writerow([r.agent, r.scene, r.attribute.value, r.score])
        return buf.getvalue()

    def stats(self) -> dict[str, dict[str, dict[str, int]]]:
        """Per agent and attribute: min, max and range of the scores given."""
        scores: dict[str, dict[str, list[int]]] = {}
        for r in self.records:
            scores.setdefault(r.agent, {}).setdefault(r.attribute.value, []).append(r.score)
        return {
            agent: {a: {"min": min(v), "max": max(v), "range": max(v) - min(v)} for a, v in per.items()}
            for agent, per in scores.items()
        }


def rate_all(
    personas: Sequence[Persona],
    env: EnvironmentGraph,
    scenes: SceneProvider,
    backend: Backend,
    memories: Mapping[str, MemoryStream] | None = None,
    nodes: Iterable[str] | None = None,
    attributes: Sequence[Attribute | str] = (Attribute.SAFETY, Attribute.LIVELINESS),
    clock_start: Any = None,
) -> RatingMatrix:
    """Every persona rates every node's front view, nodes served in environment order.

    A persona keeps the memory of its last wayfinding run (when given) and
    accumulates its own ratings, so order matters.
    """
    wanted = set(nodes) if nodes is not None else None
    order = [n for n in env.node_ids if wanted is None or n in wanted]
    if wanted is not None and wanted - set(order):
        raise KeyError(f"unknown nodes: {', '.join(sorted(wanted - set(order)))}")
    attrs = [Attribute(a) for a in attributes]
    matrix = RatingMatrix()
    for persona in personas:
        memory = (memories or {}).get(persona.name)
        memory = memory.copy() if memory is not None else MemoryStream(persona.name)
        clock = SimClock(clock_start) if clock_start is not None else SimClock()
        if len(memory) and memory.entries[-1].timestamp > clock.now:
            clock.now = memory.entries[-1].timestamp
        for node in order:
            for attr in attrs:
                try:
                    features = scenes.get(env.node(node).scene_ref("front"))
                    matrix.records.append(rate_scene(persona, node, features, attr, memory, backend, clock))
                except (LLMError, ProviderError) as exc:
                    log.warning("rating %s/%s/%s failed: %s", persona.name, node, attr.value, exc)
                    matrix.failures.append(RatingFailure(persona.name, node, attr, f"{type(exc).__name__}: {exc}"))
    return matrix
