"""Per-agent memory stream.

Retrieval uses importance only; recency breaks ties. Timestamps come from a
simulated clock so runs are reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Iterable, Iterator, Sequence

from . import prompts
from .llm import Backend, LLMError, complete_text, estimate_tokens

DEFAULT_START = datetime(2023, 11, 2, 12, 43, 21)
DEFAULT_INCREMENT = timedelta(seconds=45)
DEFAULT_K = 15


def format_timestamp(ts: datetime) -> str:
    return ts.strftime("%B %d, %Y, %I:%M:%S %p")


class MemoryKind(str, Enum):
    OBSERVATION = "observation"
    DECISION = "decision"
    REFLECTION = "reflection"
    RATING = "rating"


class ClockRegressionError(ValueError):
    pass


class ImportanceParseError(LLMError):
    pass


@dataclass(frozen=True)
class MemoryEntry:
    timestamp: datetime
    importance: int
    text: str
    kind: MemoryKind = MemoryKind.OBSERVATION

    def __post_init__(self) -> None:
        if not 1 <= self.importance <= 10:
            raise ValueError(f"importance {self.importance} outside [1, 10]")
        if not self.text.strip():
            raise ValueError("memory text must be non-empty")
        object.__setattr__(self, "kind", MemoryKind(self.kind))

    def render(self) -> str:
        return f"[{format_timestamp(self.timestamp)}] {self.text}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "timestamp": self.timestamp.isoformat(),
            "importance": self.importance,
            "text": self.text,
            "kind": self.kind.value,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "MemoryEntry":
        return cls(datetime.fromisoformat(doc["timestamp"]), int(doc["importance"]), doc["text"], doc["kind"])


class MemoryStream:
    """Append-only list of entries with non-decreasing timestamps."""

    def __init__(self, owner: str, entries: Iterable[MemoryEntry] = ()):
        self.owner = owner
        self._entries: list[MemoryEntry] = []
        for e in entries:
            self._append(e)

    def _append(self, entry: MemoryEntry) -> None:
        if self._entries and entry.timestamp < self._entries[-1].timestamp:
            raise ClockRegressionError(
                f"{entry.timestamp.isoformat()} is earlier than the last entry "
                f"({self._entries[-1].timestamp.isoformat()})"
            )
        self._entries.append(entry)

    def record(
        self,
        text: str,
        importance: int,
        clock: datetime,
        kind: MemoryKind | str = MemoryKind.OBSERVATION,
    ) -> MemoryEntry:
        entry = MemoryEntry(clock, importance, text, MemoryKind(kind))
        self._append(entry)
        return entry

    @property
    def entries(self) -> tuple[MemoryEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[MemoryEntry]:
        return iter(tuple(self._entries))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MemoryStream) and (self.owner, self._entries) == (other.owner, other._entries)

    def __repr__(self) -> str:
        return f"MemoryStream({self.owner!r}, {len(self)} entries)"

    def copy(self) -> "MemoryStream":
        return MemoryStream(self.owner, self._entries)

    def to_list(self) -> list[dict[str, Any]]:
        return [e.to_dict() for e in self._entries]


def retrieve(stream: MemoryStream | Sequence[MemoryEntry], k: int = DEFAULT_K) -> list[MemoryEntry]:
    """Top-k entries by importance, newer first among equals."""
    if k < 1:
        raise ValueError("k must be at least 1")
    indexed = list(enumerate(stream))
    indexed.sort(key=lambda pair: (-pair[1].importance, -pair[0]))
    return [e for _, e in indexed[:k]]


def render_context(entries: Sequence[MemoryEntry], budget: int) -> str:
    """Render entries oldest-first, dropping the least important until the text fits ``budget`` tokens.

    Among equally important entries the older one is dropped first.
    """
    if budget <= 0:
        raise ValueError("token budget must be positive")
    keep = sorted(range(len(entries)), key=lambda i: (entries[i].timestamp, i))
    drop_order = sorted(keep, key=lambda i: (entries[i].importance, entries[i].timestamp, i))
    kept = set(keep)
    text = "\n".join(entries[i].render() for i in keep)
    for i in drop_order:
        if estimate_tokens(text) <= budget:
            break
        kept.discard(i)
        text = "\n".join(entries[j].render() for j in keep if j in kept)
    return text


_INT = re.compile(r"-?\d+")


def parse_importance(reply: str) -> int | None:
    m = _INT.search(reply)
    if m is None:
        return None
    return max(1, min(10, int(m.group())))


def score_importance(text: str, backend: Backend) -> int:
    if not text.strip():
        raise ValueError("cannot score empty text")
    exchange, reply = complete_text(backend, prompts.IMPORTANCE_SYSTEM, prompts.importance_prompt(text))
    score = parse_importance(reply)
    if score is None:
        reply = backend.complete(exchange.followup(reply, prompts.IMPORTANCE_RETRY))
        score = parse_importance(reply)
        if score is None:
            raise ImportanceParseError(f"no importance rating in reply {reply[:80]!r}")
    return score


class SimClock:
    """Simulated clock advancing a fixed increment per tick."""

    def __init__(self, start: datetime = DEFAULT_START, increment: timedelta = DEFAULT_INCREMENT):
        self.now = start
        self.increment = increment

    def tick(self) -> datetime:
        self.now = self.now + self.increment
        return self.now
