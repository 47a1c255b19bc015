"""Scene features from the visual inference stage, their textual facts, and LLM summaries.

The neural models themselves are not run here. Features come from a provider:
either the bundled canned store or a remote HTTP service that returns the same
JSON schema.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Mapping, Protocol

import httpx

from . import prompts
from .llm import Backend, LLMError, complete_text

SEGMENTATION_CLASSES = ("building", "road", "vegetation", "sky", "person", "vehicle", "pole", "fence", "wall")
VEHICLE_CLASSES = frozenset({"car", "truck", "bus", "motorcycle", "bicycle", "train", "van"})
SUM_SLACK = 0.01
NO_ACTORS_FACT = "no pedestrians or vehicles detected"
LOW_MAX = 0.10
AVERAGE_MAX = 0.35

_PLURALS = {"person": "people", "bus": "buses", "sky": "sky", "vegetation": "vegetation"}


def plural(word: str) -> str:
    return _PLURALS.get(word, word if word.endswith("s") else word + "s")


class CoverageLevel(IntEnum):
    LOW = 0
    AVERAGE = 1
    HIGH = 2

    def __str__(self) -> str:
        return self.name.lower()


def bucketize(fraction: float) -> CoverageLevel:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    if fraction < LOW_MAX:
        return CoverageLevel.LOW
    if fraction < AVERAGE_MAX:
        return CoverageLevel.AVERAGE
    return CoverageLevel.HIGH


def confidence_tier(confidence: float) -> str:
    if confidence >= 0.5:
        return "high"
    if confidence >= 0.2:
        return "moderate"
    return "low"


@dataclass(frozen=True)
class SceneFeatures:
    segmentation: Mapping[str, float] = field(default_factory=dict)
    categories: tuple[tuple[str, float], ...] = ()
    attributes: tuple[str, ...] = ()
    object_counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", tuple((str(l), float(c)) for l, c in self.categories))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        for cls, frac in self.segmentation.items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"segmentation fraction for {cls} outside [0, 1]: {frac}")
        if sum(self.segmentation.values()) > 1.0 + SUM_SLACK:
            raise ValueError("segmentation fractions sum to more than 1")
        if len(self.categories) > 5:
            raise ValueError("at most five scene categories")
        confs = [c for _, c in self.categories]
        if any(not 0.0 <= c <= 1.0 for c in confs):
            raise ValueError("category confidence outside [0, 1]")
        if confs != sorted(confs, reverse=True):
            raise ValueError("categories must be sorted by confidence, highest first")
        if len(self.attributes) > 10:
            raise ValueError("at most ten attributes")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValueError("duplicate attributes")
        for cls, n in self.object_counts.items():
            if not isinstance(n, int) or n < 0:
                raise ValueError(f"object count for {cls} must be a non-negative integer")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SceneFeatures":
        return cls(
            segmentation={k: float(v) for k, v in doc.get("segmentation", {}).items()},
            categories=tuple((c[0], float(c[1])) for c in doc.get("categories", [])),
            attributes=tuple(doc.get("attributes", [])),
            object_counts={k: int(v) for k, v in doc.get("object_counts", {}).items()},
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "segmentation": dict(self.segmentation),
            "categories": [[l, c] for l, c in self.categories],
            "attributes": list(self.attributes),
            "object_counts": dict(self.object_counts),
        }

    def count(self, cls: str) -> int:
        return self.object_counts.get(cls, 0)

    @property
    def has_people_or_vehicles(self) -> bool:
        return any(n > 0 and (c == "person" or c in VEHICLE_CLASSES) for c, n in self.object_counts.items())


@dataclass(frozen=True)
class SceneSummary:
    text: str
    source_node: str
    heading: str


def _ordered_classes(segmentation: Mapping[str, float]) -> list[str]:
    known = [c for c in SEGMENTATION_CLASSES if c in segmentation]
    return known + sorted(c for c in segmentation if c not in SEGMENTATION_CLASSES)


def features_to_facts(f: SceneFeatures) -> list[str]:
    facts = [f"{cls} coverage: {bucketize(f.segmentation[cls])}" for cls in _ordered_classes(f.segmentation)]
    facts += [f"scene category: {label} (confidence: {confidence_tier(c)})" for label, c in f.categories]
    facts.append("attributes: " + (", ".join(f.attributes) if f.attributes else "none"))
    for cls in sorted(f.object_counts, key=lambda c: (c != "person", c not in VEHICLE_CLASSES, c)):
        if f.object_counts[cls] > 0:
            facts.append(f"{plural(cls)}: {f.object_counts[cls]}")
    if not f.has_people_or_vehicles:
        facts.append(NO_ACTORS_FACT)
    return facts


_SEGMENT_WORDS = re.compile(r"\b(building|road|vegetation|sky|pole|fence|wall|person|people|vehicle)s?\b", re.I)
_ACTOR_WORDS = re.compile(
    r"\b(people|person|persons|individuals?|pedestrians?|crowds?|vehicles?|cars?|trucks?|bus|buses|"
    r"bicycles?|bikes?|biking|cyclists?|motorcycles?|traffic)\b",
    re.I,
)


def is_valid_summary(text: str) -> bool:
    """A usable summary names a streetscape class and the people/vehicle situation."""
    return bool(text.strip()) and bool(_SEGMENT_WORDS.search(text)) and bool(_ACTOR_WORDS.search(text))


class SummaryError(LLMError):
    pass


def summarize(f: SceneFeatures, backend: Backend, node: str = "?", heading: str = "front") -> SceneSummary:
    exchange, reply = complete_text(backend, prompts.SUMMARY_SYSTEM, prompts.summary_prompt(features_to_facts(f)))
    if not is_valid_summary(reply):
        reply = backend.complete(exchange.followup(reply, prompts.SUMMARY_RETRY))
        if not is_valid_summary(reply):
            raise SummaryError(f"scene summary for {node}/{heading} failed validation after a re-prompt")
    return SceneSummary(reply.strip(), node, heading)


def contains_target(f: SceneFeatures, target_label: str) -> bool:
    needle = target_label.strip().lower()
    return bool(needle) and any(needle in label.lower() for label, _ in f.categories[:5])


class ProviderError(RuntimeError):
    pass


class SceneProvider(Protocol):
    def get(self, ref: str) -> SceneFeatures: ...


class CannedSceneStore:
    """Read-only JSON store mapping ``"<node>/<heading>"`` to scene features."""

    def __init__(self, scenes: Mapping[str, SceneFeatures], source: str = "<memory>"):
        self._scenes = dict(scenes)
        self.source = source

    @classmethod
    def load(cls, path: str | Path) -> "CannedSceneStore":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ProviderError(f"cannot read scene store {path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ProviderError(f"{path}: malformed JSON at line {exc.lineno}") from None
        try:
            scenes = {ref: SceneFeatures.from_dict(raw) for ref, raw in doc.items()}
        except (ValueError, TypeError, IndexError) as exc:
            raise ProviderError(f"{path}: invalid scene features ({exc})") from None
        return cls(scenes, source=str(path))

    @classmethod
    def bundled(cls, name: str = "synthetic") -> "CannedSceneStore":
        from .environment import bundled_path

        return cls.load(bundled_path(f"{name}_scenes.json"))

    def __contains__(self, ref: str) -> bool:
        return ref in self._scenes

    def refs(self) -> list[str]:
        return list(self._scenes)

    def get(self, ref: str) -> SceneFeatures:
        try:
            return self._scenes[ref]
        except KeyError:
            raise ProviderError(f"no scene features for {ref!r} in {self.source}") from None


class RemoteSceneProvider:
    """Fetches features with ``GET {base_url}/{ref}``; at most ``max_in_flight`` concurrent requests."""

    def __init__(self, base_url: str, client: httpx.Client | None = None, max_in_flight: int = 4,
                 timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    def get(self, ref: str) -> SceneFeatures:
        with self._slots:
            try:
                resp = self._client.get(f"{self.base_url}/{ref}")
                resp.raise_for_status()
                return SceneFeatures.from_dict(resp.json())
            except httpx.HTTPError as exc:
                raise ProviderError(f"scene provider failed for {ref}: {exc}") from None
            except (ValueError, TypeError, IndexError) as exc:
                raise ProviderError(f"scene provider returned invalid features for {ref}: {exc}") from None


def missing_scene_refs(graph: Any, provider: CannedSceneStore) -> list[str]:
    """Scene references in ``graph`` the canned store cannot resolve."""
    out = []
    for node in graph.nodes.values():
        for heading in ("front", "left", "right"):
            ref = node.scene.get(heading)
            if ref is None or ref not in provider:
                out.append(ref or f"{node.id}/{heading} (unset)")
    return out
