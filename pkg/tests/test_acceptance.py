"""Acceptance criteria, one marked group per criterion.

A PASS/FAIL line per criterion is printed in the "acceptance criteria" section
of the pytest summary (see conftest.py).
"""

from __future__ import annotations

import os
import time
from collections import Counter
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import transcript, transcript_responses
from streetagents.environment import bundled_path, load_environment, shortest_path_length
from streetagents.llm import ReplayBackend, estimate_tokens, make_backend
from streetagents.memory import MemoryStream, render_context, retrieve
from streetagents.mock import MockBackend
from streetagents.rating import parse_rating, rate_all
from streetagents.simulation import (
    RunConfig,
    RunRecord,
    aggregate_edge_frequencies,
    dumps_record,
    persist_runs,
    run_batch,
    run_wayfinding,
)
from streetagents.vision import NO_ACTORS_FACT, features_to_facts

C1 = pytest.mark.criterion(1, "environment oracle: validity, shortest path A-P, degree distribution")
C2 = pytest.mark.criterion(2, "trial replay fidelity: forward at A, A-B-C, two saved memories, no target")
C3 = pytest.mark.criterion(3, "golden rating parse of the safety and liveliness transcripts")
C4 = pytest.mark.criterion(4, "mock batch determinism, valid walks, termination")
C5 = pytest.mark.criterion(5, "edge aggregation law and exact-path frequency")
C6 = pytest.mark.criterion(6, "memory stream properties (>=1000 generated cases each)")
C7 = pytest.mark.criterion(7, "mock rating matrix completeness and determinism")
C8 = pytest.mark.criterion(8, "canned features reproduce every published object count")
C9 = pytest.mark.criterion(9, "live remote-backend smoke run")

GRID = ["ABCD", "EFGH", "IJKL", "MNOP"]


# 1 -------------------------------------------------------------------------

def _floyd_warshall(doc) -> dict[tuple[str, str], float]:
    """Independent all-pairs oracle working on the raw JSON document."""
    ids = [n["id"] for n in doc["nodes"]]
    inf = float("inf")
    d = {(a, b): (0 if a == b else inf) for a in ids for b in ids}
    for e in doc["edges"]:
        d[e["from"], e["to"]] = 1
    for k in ids:
        for i in ids:
            for j in ids:
                if d[i, k] + d[k, j] < d[i, j]:
                    d[i, j] = d[i, k] + d[k, j]
    return d


@C1
def test_synthetic_environment_oracle(synthetic):
    import json

    t0 = time.perf_counter()
    doc = json.loads(bundled_path("synthetic_env.json").read_text())
    graph = load_environment(doc)
    assert len(graph.nodes) == 16 and len(graph.edges) == 48

    # Oracle values, frozen: 6 moves (5 intermediate nodes); Manhattan distance on the 4x4 grid.
    assert _floyd_warshall(doc)["A", "P"] == 6
    assert shortest_path_length(synthetic, "A", "P") == 6

    # Degree oracle from grid coordinates: corners 2, border 3, interior 4.
    expected = {}
    for r, row in enumerate(GRID):
        for c, n in enumerate(row):
            expected[n] = 4 - (r in (0, 3)) - (c in (0, 3))
    assert {n: synthetic.degree(n) for n in synthetic.node_ids} == expected
    assert Counter(expected.values()) == {2: 4, 3: 8, 4: 4}
    assert time.perf_counter() - t0 < 1.0


# 2 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trial_replay(trial, trial_scenes):
    backend = ReplayBackend.from_file(transcript("trial_walk.jsonl"))
    t0 = time.perf_counter()
    record = run_wayfinding(RunConfig(environment="trial", target="tree-house", step_cap=2), trial, trial_scenes, backend)
    return record, backend, time.perf_counter() - t0


@C2
def test_trial_replay_path_and_decisions(trial_replay):
    record, backend, elapsed = trial_replay
    assert record.error is None
    assert record.path == ["A", "B", "C"]
    first, second = record.steps
    assert (first.at, first.decision.chosen.value, first.moved_to) == ("A", "forward", "B")
    assert (second.at, second.decision.chosen.value, second.moved_to) == ("B", "forward", "C")
    assert set(first.options) == {"forward", "right"}
    assert set(second.options) == {"forward", "backward"}
    assert not first.decision.violation and not second.decision.violation
    assert backend.remaining == 0 and backend.mismatches == []
    assert elapsed < 1.0


@C2
def test_trial_replay_memory_matches_saved_entries(trial_replay):
    record, _, _ = trial_replay
    responses = transcript_responses("trial_walk.jsonl")
    saved = [responses[4], responses[8]]
    assert [m.text for m in record.memory] == saved
    assert saved[0].startswith("After leaving location A, Max proceeded forward to B")
    assert "Max did not spot a tree-house" in saved[0]
    assert saved[1].startswith("Following Max's departure from location B, he proceeded forward to C")
    assert "no tree-house was observed" in saved[1]
    assert record.memory[0].timestamp < record.memory[1].timestamp
    assert [m.importance for m in record.memory] == [5, 4]


@C2
def test_trial_replay_reports_no_target(trial_replay):
    record, _, _ = trial_replay
    assert record.outcome == "step_capped"
    assert [s.found for s in record.steps] == [False, False]
    assert all(s.observation.endswith("No sign of tree-house yet.") for s in record.steps)


# 3 -------------------------------------------------------------------------

GOLDEN = {
    ("Emily", "K", "safety"): 7,
    ("Carlos", "K", "safety"): 8,
    ("Emily", "H", "safety"): 3,
    ("Carlos", "H", "safety"): 6,
    ("Priya", "L", "liveliness"): 7,
    ("Diego", "L", "liveliness"): 8,
    ("Priya", "F", "liveliness"): 1,
    ("Diego", "F", "liveliness"): 5,
}


@C3
def test_golden_rating_parse_direct():
    # Transcript order follows node order: H before K, F before L.
    cells = [
        ("Emily", "H", "safety"), ("Emily", "K", "safety"), ("Carlos", "H", "safety"), ("Carlos", "K", "safety"),
        ("Priya", "F", "liveliness"), ("Priya", "L", "liveliness"),
        ("Diego", "F", "liveliness"), ("Diego", "L", "liveliness"),
    ]
    texts = transcript_responses("safety_ratings.jsonl") + transcript_responses("liveliness_ratings.jsonl")
    parsed = {cell: parse_rating(text) for cell, text in zip(cells, texts)}
    assert {cell: p.score for cell, p in parsed.items()} == GOLDEN
    for p in parsed.values():
        assert p.reason and p.to_ten and p.to_one


@C3
def test_golden_rating_parse_through_replay(synthetic, synthetic_scenes, personas):
    by_name = {p.name: p for p in personas}
    got = {}
    for name, agents, nodes, attr in [
        ("safety_ratings.jsonl", ["Emily", "Carlos"], ["K", "H"], "safety"),
        ("liveliness_ratings.jsonl", ["Priya", "Diego"], ["L", "F"], "liveliness"),
    ]:
        backend = ReplayBackend.from_file(transcript(name))
        matrix = rate_all([by_name[a] for a in agents], synthetic, synthetic_scenes, backend, nodes=nodes, attributes=[attr])
        assert not matrix.failures and backend.remaining == 0 and backend.mismatches == []
        got.update({(r.agent, r.scene, r.attribute.value): r.score for r in matrix.records})
    assert got == GOLDEN


# 4 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mock_batches(synthetic, synthetic_scenes, personas):
    t0 = time.perf_counter()
    first = run_batch(personas, 10, RunConfig(seed=7), synthetic, synthetic_scenes, MockBackend)
    elapsed = time.perf_counter() - t0
    second = run_batch(personas, 10, RunConfig(seed=7), synthetic, synthetic_scenes, MockBackend, parallelism=4)
    return first, second, elapsed


@C4
def test_mock_batch_byte_identical(mock_batches, tmp_path):
    first, second, elapsed = mock_batches
    assert len(first) == 100
    persist_runs(first, tmp_path / "a.jsonl")
    persist_runs(second, tmp_path / "b.jsonl")
    a, b = (tmp_path / "a.jsonl").read_bytes(), (tmp_path / "b.jsonl").read_bytes()
    assert a == b and a.count(b"\n") == 100
    assert elapsed < 10.0


@C4
def test_mock_batch_walks_and_termination(mock_batches, synthetic):
    for r in mock_batches[0]:
        assert r.path[0] == synthetic.start
        assert all(synthetic.is_adjacent(u, v) for u, v in zip(r.path, r.path[1:]))
        assert r.outcome in ("found", "step_capped")
        if r.outcome == "step_capped":
            assert len(r.path) == 50 + 1
        else:
            assert r.path[-1] == synthetic.target_node
        for s in r.steps:
            assert s.decision.chosen.value in s.options


# 5 -------------------------------------------------------------------------

def _record(path: list[str], digest: str = "d") -> RunRecord:
    return RunRecord("r", RunConfig(), "synthetic", digest, path, [], "found")


@C5
def test_aggregation_law_on_mock_batch(mock_batches):
    records = mock_batches[0]
    freq = aggregate_edge_frequencies(records)
    assert sum(freq.edges.values()) == sum(len(r.path) - 1 for r in records)
    assert sum(freq.paths.values()) == len(records)


@C5
def test_reported_path_frequency():
    route = list("ABCGKLP")
    records = [_record(route)] * 3 + [_record(list("ABFGKOP"))]
    freq = aggregate_edge_frequencies(records)
    assert freq.paths["ABCGKLP"] == 3
    assert "ABCGKLP 3\n" in freq.path_table()
    assert sum(freq.edges.values()) == 3 * 6 + 6


@C5
@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.sampled_from("ABCDEFGHIJKLMNOP"), min_size=1, max_size=12), max_size=8))
def test_aggregation_law_property(paths):
    records = [_record(p) for p in paths]
    freq = aggregate_edge_frequencies(records)
    assert sum(freq.edges.values()) == sum(len(p) - 1 for p in paths)


# 6 -------------------------------------------------------------------------

T0 = datetime(2023, 11, 2, 12, 43, 21)
entry_lists = st.lists(
    st.tuples(st.integers(1, 10), st.integers(0, 600), st.text(min_size=1, max_size=40).filter(str.strip)),
    max_size=30,
)


def _stream(items) -> MemoryStream:
    s = MemoryStream("x")
    t = T0
    for imp, gap, text in items:
        t += timedelta(seconds=gap)
        s.record(text, imp, t)
    return s


@C6
@settings(max_examples=1000, deadline=None)
@given(entry_lists, st.integers(1, 40))
def test_retrieve_orders_by_importance_then_recency(items, k):
    s = _stream(items)
    got = retrieve(s, k)
    assert len(got) == min(k, len(s))
    position = {id(e): i for i, e in enumerate(s.entries)}
    keys = [(-e.importance, -position[id(e)]) for e in got]
    assert keys == sorted(keys)
    if got and len(s) > k:
        worst = min(e.importance for e in got)
        assert all(e.importance <= worst for e in s.entries if all(e is not g for g in got))


@C6
@settings(max_examples=1000, deadline=None)
@given(entry_lists, st.integers(1, 10), st.integers(1, 3600))
def test_append_only_monotone(items, imp, back):
    from streetagents.memory import ClockRegressionError

    s = _stream(items)
    stamps = [e.timestamp for e in s.entries]
    assert stamps == sorted(stamps)
    before = s.entries
    if before:
        with pytest.raises(ClockRegressionError):
            s.record("late", imp, before[-1].timestamp - timedelta(seconds=back))
        assert s.entries == before
        s.record("same time", imp, before[-1].timestamp)
        assert s.entries[:-1] == before


@C6
@settings(max_examples=1000, deadline=None)
@given(entry_lists, st.integers(1, 400))
def test_render_context_within_budget(items, budget):
    s = _stream(items)
    text = render_context(retrieve(s, 15) if len(s) else [], budget)
    assert estimate_tokens(text) <= budget


@C6
@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["synthetic", "trial"]))
def test_fresh_runs_start_with_empty_memory(seed, env_name):
    from streetagents.simulation import new_agent
    from streetagents.environment import bundled_environment

    state = new_agent(RunConfig(environment=env_name, seed=seed), bundled_environment(env_name), None)
    assert len(state.memory) == 0 and state.visited == [state.current] and state.steps_taken == 0


# 7 -------------------------------------------------------------------------

@C7
def test_mock_rating_matrix(synthetic, synthetic_scenes, personas):
    a = rate_all(personas, synthetic, synthetic_scenes, MockBackend(3))
    b = rate_all(personas, synthetic, synthetic_scenes, MockBackend(3))
    assert len(a.records) == 10 * 16 * 2 and not a.failures
    assert all(1 <= r.score <= 10 for r in a.records)
    assert {(r.agent, r.scene, r.attribute) for r in a.records} == {
        (p.name, n, attr) for p in personas for n in synthetic.node_ids for attr in ("safety", "liveliness")
    }
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()


# 8 -------------------------------------------------------------------------

PUBLISHED_COUNTS = {
    "B": {"people": 12, "bicycles": 2, "motorcycles": 1},
    "E": {"cars": 2, "trucks": 2, "bicycles": 1, "motorcycles": 1},
    "F": {},
    "H": {},
    "K": {"people": 6, "bicycles": 5, "cars": 2},
    "L": {"people": 7, "cars": 2, "bicycles": 2, "backpacks": 1, "handbags": 1},
}
PUBLISHED_COVERAGE = {
    "B": {"building": "high", "road": "high"},
    "E": {"building": "high", "road": "high", "sky": "low", "vegetation": "low"},
    "F": {"building": "high", "vegetation": "high", "sky": "low"},
    "H": {"building": "high", "road": "high", "sky": "low", "vegetation": "low"},
    "K": {"road": "high", "sky": "average", "building": "average", "vegetation": "average", "fence": "low", "wall": "low"},
    "L": {"building": "high", "road": "high", "sky": "low", "vegetation": "low"},
}


@C8
@pytest.mark.parametrize("node", sorted(PUBLISHED_COUNTS))
def test_canned_features_reproduce_counts(node, synthetic, synthetic_scenes):
    facts = features_to_facts(synthetic_scenes.get(synthetic.node(node).scene_ref("front")))
    for noun, n in PUBLISHED_COUNTS[node].items():
        assert f"{noun}: {n}" in facts
    if node in ("E", "F", "H"):
        assert not any(f.startswith("people:") for f in facts)
    if node == "H":
        assert NO_ACTORS_FACT in facts
    for cls, level in PUBLISHED_COVERAGE[node].items():
        assert f"{cls} coverage: {level}" in facts


# 9 -------------------------------------------------------------------------

@C9
@pytest.mark.live
def test_live_remote_run(synthetic, synthetic_scenes, personas):
    endpoint, model = os.environ.get("STREETAGENTS_ENDPOINT"), os.environ.get("STREETAGENTS_MODEL")
    if not (os.environ.get("STREETAGENTS_API_KEY") and endpoint and model):
        pytest.skip("set STREETAGENTS_API_KEY, STREETAGENTS_ENDPOINT and STREETAGENTS_MODEL")
    backend = make_backend("remote", endpoint=endpoint, model=model)
    record = run_wayfinding(
        RunConfig(backend="remote", step_cap=3, persona=personas[0].name), synthetic, synthetic_scenes, backend, personas[0]
    )
    assert record.outcome in ("found", "step_capped"), record.error
    assert record.path[0] == "A"
    assert all(synthetic.is_adjacent(u, v) for u, v in zip(record.path, record.path[1:]))
    assert all(s.decision.chosen.value in s.options for s in record.steps)
    assert RunRecord.from_dict(__import__("json").loads(dumps_record(record))) == record
