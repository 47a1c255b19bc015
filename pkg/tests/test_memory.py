from __future__ import annotations

from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streetagents.llm import Backend
from streetagents.memory import (
    ClockRegressionError,
    ImportanceParseError,
    MemoryEntry,
    MemoryKind,
    MemoryStream,
    SimClock,
    parse_importance,
    render_context,
    retrieve,
    score_importance,
)
from streetagents.mock import MockBackend

T0 = datetime(2023, 11, 2, 12, 43, 21)


def at(seconds: int) -> datetime:
    return T0 + timedelta(seconds=seconds)


class Fixed(Backend):
    def __init__(self, *replies):
        self.replies = list(replies)

    def complete(self, exchange):
        return self.replies.pop(0)


def test_record_and_regression():
    s = MemoryStream("Max")
    s.record("first", 3, at(0))
    assert len(s) == 1
    with pytest.raises(ClockRegressionError):
        s.record("earlier", 3, at(-1))
    assert len(s) == 1


def test_entry_validation():
    with pytest.raises(ValueError):
        MemoryEntry(T0, 0, "x")
    with pytest.raises(ValueError):
        MemoryEntry(T0, 11, "x")
    with pytest.raises(ValueError):
        MemoryEntry(T0, 5, "   ")


def test_entries_are_a_snapshot():
    s = MemoryStream("Max")
    s.record("a", 1, at(0))
    snap = s.entries
    s.record("b", 1, at(1))
    assert len(snap) == 1 and len(s.entries) == 2


def test_entry_roundtrip():
    e = MemoryEntry(T0, 5, "rated scene K", MemoryKind.RATING)
    assert MemoryEntry.from_dict(e.to_dict()) == e
    assert e.render() == "[November 02, 2023, 12:43:21 PM] rated scene K"


def test_retrieve_examples():
    s = MemoryStream("x")
    for i, imp in enumerate([7, 3, 9]):
        s.record(f"m{imp}", imp, at(i))
    assert [e.text for e in retrieve(s, 2)] == ["m9", "m7"]
    t = MemoryStream("y")
    t.record("old", 5, at(0))
    t.record("new", 5, at(1))
    assert [e.text for e in retrieve(t, 2)] == ["new", "old"]
    assert retrieve(MemoryStream("z"), 3) == []
    with pytest.raises(ValueError):
        retrieve(s, 0)


def test_render_context_examples():
    entries = [MemoryEntry(at(i), 5, f"note {i}") for i in range(3)]
    assert render_context(entries, 1000).splitlines() == [e.render() for e in entries]
    assert render_context(entries, 1) == ""
    low, high = MemoryEntry(at(0), 2, "a" * 40), MemoryEntry(at(1), 9, "b" * 40)
    budget = -(-len(high.render()) // 4)
    assert render_context([low, high], budget) == high.render()
    with pytest.raises(ValueError):
        render_context(entries, 0)


def test_score_importance_parsing():
    assert score_importance("some text", Fixed("7")) == 7
    assert score_importance("some text", Fixed("Rating: 12")) == 10
    assert score_importance("some text", Fixed("yes", "4")) == 4
    with pytest.raises(ImportanceParseError):
        score_importance("some text", Fixed("yes", "yes"))
    with pytest.raises(ValueError):
        score_importance(" ", Fixed("3"))
    assert parse_importance("no digits") is None


def test_mock_importance_rule():
    # Salient tokens present: car, people -> 1 + 2.
    assert score_importance("A quiet street with a parked car and two people chatting.", MockBackend(0)) == 3
    # Nothing salient.
    assert score_importance("Grey walls and an empty road.", MockBackend(0)) == 1
    # Negated mentions do not count.
    assert score_importance("There are no people or vehicles in view.", MockBackend(0)) == 1


def test_sim_clock():
    clock = SimClock(T0, timedelta(seconds=45))
    assert clock.tick() == at(45) and clock.now == at(45)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.integers(1, 10), min_size=1, max_size=25),
    st.integers(1, 10),
    st.integers(1, 30),
)
def test_retrieve_stable_under_less_important_append(imps, extra, k):
    s = MemoryStream("x")
    for i, imp in enumerate(imps):
        s.record(f"m{i}", imp, at(i))
    before = retrieve(s, k)
    if len(before) == k and extra < before[-1].importance:
        s.record("new", extra, at(len(imps)))
        assert retrieve(s, k) == before


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 10), max_size=25), st.integers(1, 30))
def test_retrieve_is_subset(imps, k):
    s = MemoryStream("x")
    for i, imp in enumerate(imps):
        s.record(f"m{i}", imp, at(i))
    got = retrieve(s, k)
    assert len(got) == min(k, len(s)) and all(e in s.entries for e in got)
