"""Decision-point graphs: loading, validation, direction semantics and street-view URLs.

An environment is a JSON document::

    {"nodes": [{"id": "A", "geo": {"lat": .., "lng": .., "heading": ..},
                "scene": {"front": "A/front", "left": "A/left", "right": "A/right"}}, ...],
     "edges": [{"from": "A", "to": "B", "dir": "right"}, ...],
     "start": "A", "target_node": "P", "target_label": "restaurant"}

Every edge must have its reverse with the reversed direction label.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

HEADINGS = ("front", "left", "right")

STREET_VIEW_URL = (
    "https://maps.googleapis.com/maps/api/streetview"
    "?size={width}x{height}&location={lat},{lng}&heading={heading}&key={key}"
)


class Direction(str, Enum):
    FORWARD = "forward"
    RIGHT = "right"
    LEFT = "left"
    BACKWARD = "backward"

    @property
    def reverse(self) -> "Direction":
        return _REVERSE[self]

    @property
    def heading_offset(self) -> int:
        """Degrees added to a node's base heading to look in this direction."""
        return _OFFSET[self]

    def __str__(self) -> str:
        return self.value


_REVERSE = {
    Direction.FORWARD: Direction.BACKWARD,
    Direction.BACKWARD: Direction.FORWARD,
    Direction.LEFT: Direction.RIGHT,
    Direction.RIGHT: Direction.LEFT,
}
_OFFSET = {
    Direction.FORWARD: 0,
    Direction.RIGHT: 90,
    Direction.BACKWARD: 180,
    Direction.LEFT: -90,
}

# Presentation order used everywhere options are listed or ties are broken.
DIRECTION_ORDER: tuple[Direction, ...] = (
    Direction.FORWARD,
    Direction.RIGHT,
    Direction.LEFT,
    Direction.BACKWARD,
)


class EnvironmentSpecError(ValueError):
    """Base class for environment loading problems."""


class EnvironmentParseError(EnvironmentSpecError):
    pass


class EnvironmentValidationError(EnvironmentSpecError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class GeoAnchor:
    latitude: float
    longitude: float
    base_heading: float = 0.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")
        if not 0.0 <= self.base_heading < 360.0:
            raise ValueError(f"heading {self.base_heading} outside [0, 360)")


@dataclass(frozen=True)
class Node:
    id: str
    geo: GeoAnchor | None = None
    scene: Mapping[str, str] = field(default_factory=dict)

    def scene_ref(self, heading: str) -> str:
        try:
            return self.scene[heading]
        except KeyError:
            raise KeyError(f"node {self.id} has no scene reference for heading {heading!r}") from None


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    direction: Direction


class EnvironmentGraph:
    """Immutable, direction-labelled bidirectional graph of decision points."""

    def __init__(
        self,
        nodes: Iterable[Node],
        edges: Iterable[Edge],
        start: str,
        target_node: str,
        target_label: str,
        name: str = "environment",
    ):
        self._nodes: dict[str, Node] = {n.id: n for n in nodes}
        self._edges: tuple[Edge, ...] = tuple(edges)
        self.start = start
        self.target_node = target_node
        self.target_label = target_label
        self.name = name
        self._adjacency: dict[str, dict[Direction, str]] = {n: {} for n in self._nodes}
        for e in self._edges:
            self._adjacency[e.source][e.direction] = e.target

    @property
    def nodes(self) -> Mapping[str, Node]:
        return self._nodes

    @property
    def node_ids(self) -> list[str]:
        return list(self._nodes)

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def neighbors(self, node_id: str) -> dict[Direction, str]:
        self.node(node_id)
        return dict(self._adjacency[node_id])

    def degree(self, node_id: str) -> int:
        return len(self.neighbors(node_id))

    def direction_to(self, source: str, target: str) -> Direction | None:
        for d, v in self.neighbors(source).items():
            if v == target:
                return d
        return None

    def is_adjacent(self, a: str, b: str) -> bool:
        return self.direction_to(a, b) is not None

    def to_dict(self) -> dict[str, Any]:
        nodes = []
        for n in self._nodes.values():
            doc: dict[str, Any] = {"id": n.id}
            if n.geo is not None:
                doc["geo"] = {"lat": n.geo.latitude, "lng": n.geo.longitude, "heading": n.geo.base_heading}
            doc["scene"] = dict(n.scene)
            nodes.append(doc)
        return {
            "nodes": nodes,
            "edges": [{"from": e.source, "to": e.target, "dir": e.direction.value} for e in self._edges],
            "start": self.start,
            "target_node": self.target_node,
            "target_label": self.target_label,
        }

    @property
    def digest(self) -> str:
        """Content hash; two graphs with the same digest are the same environment."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def __repr__(self) -> str:
        return f"EnvironmentGraph({self.name!r}, nodes={len(self._nodes)}, edges={len(self._edges)})"


def _parse_geo(raw: Any, node_id: str) -> GeoAnchor:
    if not isinstance(raw, Mapping):
        raise EnvironmentParseError(f"node {node_id}: geo must be an object")
    try:
        return GeoAnchor(float(raw["lat"]), float(raw["lng"]), float(raw.get("heading", 0.0)))
    except KeyError as exc:
        raise EnvironmentParseError(f"node {node_id}: geo is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise EnvironmentParseError(f"node {node_id}: invalid geo anchor ({exc})") from None


def parse_environment(doc: Mapping[str, Any], name: str = "environment") -> EnvironmentGraph:
    """Build and validate a graph from an already-decoded environment document."""
    if not isinstance(doc, Mapping):
        raise EnvironmentParseError("environment document must be a JSON object")
    for key in ("nodes", "edges", "start", "target_node", "target_label"):
        if key not in doc:
            raise EnvironmentParseError(f"missing required field {key!r}")
    raw_nodes, raw_edges = doc["nodes"], doc["edges"]
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise EnvironmentParseError("'nodes' and 'edges' must be lists")

    violations: list[str] = []
    nodes: list[Node] = []
    seen: set[str] = set()
    for i, raw in enumerate(raw_nodes):
        if not isinstance(raw, Mapping) or not isinstance(raw.get("id"), str) or not raw["id"]:
            raise EnvironmentParseError(f"node #{i} needs a non-empty string id")
        node_id = raw["id"]
        if node_id in seen:
            violations.append(f"duplicate node id {node_id}")
            continue
        seen.add(node_id)
        geo = _parse_geo(raw["geo"], node_id) if raw.get("geo") is not None else None
        scene = raw.get("scene", {})
        if not isinstance(scene, Mapping) or not all(isinstance(v, str) for v in scene.values()):
            raise EnvironmentParseError(f"node {node_id}: scene must map headings to strings")
        unknown = set(scene) - set(HEADINGS)
        if unknown:
            violations.append(f"node {node_id}: unknown scene headings {sorted(unknown)}")
        nodes.append(Node(node_id, geo, dict(scene)))

    if not nodes:
        violations.append("environment has no nodes")

    edges: list[Edge] = []
    for i, raw in enumerate(raw_edges):
        if not isinstance(raw, Mapping) or not all(k in raw for k in ("from", "to", "dir")):
            raise EnvironmentParseError(f"edge #{i} needs 'from', 'to' and 'dir'")
        try:
            direction = Direction(str(raw["dir"]).lower())
        except ValueError:
            violations.append(f"edge ({raw['from']},{raw['to']},{raw['dir']}): unknown direction")
            continue
        edges.append(Edge(str(raw["from"]), str(raw["to"]), direction))

    graph = EnvironmentGraph(
        [n for n in nodes],
        [e for e in edges if e.source in seen and e.target in seen],
        str(doc["start"]),
        str(doc["target_node"]),
        str(doc["target_label"]),
        name=name,
    )
    violations.extend(validate_edges(seen, edges))
    if graph.start not in seen:
        violations.append(f"start node {graph.start} does not exist")
    if graph.target_node not in seen:
        violations.append(f"target node {graph.target_node} does not exist")
    if not graph.target_label.strip():
        violations.append("target_label is empty")
    if violations:
        raise EnvironmentValidationError(violations)
    return graph


def validate_edges(node_ids: set[str], edges: list[Edge]) -> list[str]:
    violations = []
    slot_counts = Counter((e.source, e.direction) for e in edges)
    present = {(e.source, e.target, e.direction) for e in edges}
    for e in edges:
        label = f"({e.source},{e.target},{e.direction.value})"
        if e.source not in node_ids or e.target not in node_ids:
            missing = e.source if e.source not in node_ids else e.target
            violations.append(f"edge {label} references unknown node {missing}")
            continue
        if e.source == e.target:
            violations.append(f"edge {label} is a self-loop")
            continue
        if slot_counts[(e.source, e.direction)] > 1:
            violations.append(f"node {e.source} has more than one {e.direction.value} edge")
        if (e.target, e.source, e.direction.reverse) not in present:
            violations.append(
                f"edge {label} has no reverse edge ({e.target},{e.source},{e.direction.reverse.value})"
            )
    return list(dict.fromkeys(violations))


def load_environment(source: str | Path | Mapping[str, Any]) -> EnvironmentGraph:
    if isinstance(source, Mapping):
        return parse_environment(source)
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise EnvironmentParseError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EnvironmentParseError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_environment(doc, name=path.stem)


def bundled_path(filename: str) -> Path:
    return Path(str(resources.files("streetagents") / "data" / filename))


def bundled_environment(name: str = "synthetic") -> EnvironmentGraph:
    """Load one of the environments shipped with the package ("synthetic" or "trial")."""
    graph = load_environment(bundled_path(f"{name}_env.json"))
    graph.name = name
    return graph


def available_directions(graph: EnvironmentGraph, node: str) -> list[tuple[Direction, str]]:
    neighbors = graph.neighbors(node)
    return [(d, neighbors[d]) for d in DIRECTION_ORDER if d in neighbors]


def shortest_path_length(graph: EnvironmentGraph, a: str, b: str) -> int | None:
    """Fewest moves from a to b, or None when b is unreachable."""
    graph.node(a)
    graph.node(b)
    dist = {a: 0}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            return dist[u]
        for _, v in available_directions(graph, u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return None


def _fmt_number(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def street_view_url(
    anchor: GeoAnchor,
    relative_heading: Direction | str,
    size: tuple[int, int] = (400, 400),
    key: str = "",
) -> str:
    width, height = size
    if width <= 0 or height <= 0:
        raise ValueError("image size must be positive")
    heading = (anchor.base_heading + Direction(relative_heading).heading_offset) % 360
    return STREET_VIEW_URL.format(
        width=width,
        height=height,
        lat=_fmt_number(anchor.latitude),
        lng=_fmt_number(anchor.longitude),
        heading=_fmt_number(heading),
        key=key,
    )


# Camera heading for each stored view, relative to the node's base heading.
VIEW_DIRECTIONS = {"front": Direction.FORWARD, "left": Direction.LEFT, "right": Direction.RIGHT}
