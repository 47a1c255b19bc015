from __future__ import annotations

import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from streetagents.environment import (
    Direction,
    EnvironmentParseError,
    EnvironmentValidationError,
    GeoAnchor,
    UnknownNodeError,
    available_directions,
    bundled_environment,
    bundled_path,
    load_environment,
    parse_environment,
    shortest_path_length,
    street_view_url,
)


@pytest.fixture()
def doc():
    return json.loads(bundled_path("synthetic_env.json").read_text())


def test_bundled_synthetic(synthetic):
    assert synthetic.node_ids == list("ABCDEFGHIJKLMNOP")
    assert (synthetic.start, synthetic.target_node, synthetic.target_label) == ("A", "P", "restaurant")
    assert synthetic.name == "synthetic"


def test_grid_orientation(synthetic):
    assert synthetic.neighbors("A") == {Direction.RIGHT: "B", Direction.FORWARD: "E"}
    assert synthetic.neighbors("F") == {
        Direction.FORWARD: "J", Direction.RIGHT: "G", Direction.LEFT: "E", Direction.BACKWARD: "B",
    }
    assert synthetic.direction_to("B", "A") is Direction.LEFT
    assert not synthetic.is_adjacent("A", "F")


def test_available_directions_order(synthetic):
    assert [d for d, _ in available_directions(synthetic, "F")] == [
        Direction.FORWARD, Direction.RIGHT, Direction.LEFT, Direction.BACKWARD,
    ]


def test_trial_environment(trial):
    assert trial.start == "A" and trial.target_label == "tree-house"
    assert trial.neighbors("A") == {Direction.FORWARD: "B", Direction.RIGHT: "X"}
    assert trial.neighbors("B") == {Direction.FORWARD: "C", Direction.BACKWARD: "A"}


def test_shortest_paths(synthetic):
    assert shortest_path_length(synthetic, "A", "A") == 0
    assert shortest_path_length(synthetic, "A", "P") == 6
    assert shortest_path_length(synthetic, "D", "M") == 6
    with pytest.raises(UnknownNodeError):
        shortest_path_length(synthetic, "A", "Z")


def test_unreachable_returns_none():
    g = parse_environment({
        "nodes": [{"id": "a"}, {"id": "b"}, {"id": "c"}],
        "edges": [{"from": "a", "to": "b", "dir": "forward"}, {"from": "b", "to": "a", "dir": "backward"}],
        "start": "a", "target_node": "c", "target_label": "x",
    })
    assert shortest_path_length(g, "a", "c") is None


def test_missing_reverse_edge_named(doc):
    doc["edges"] = [e for e in doc["edges"] if not (e["from"] == "B" and e["to"] == "A")]
    with pytest.raises(EnvironmentValidationError) as err:
        parse_environment(doc)
    assert any("(A,B,right)" in v and "(B,A,left)" in v for v in err.value.violations)


def test_wrong_reverse_label(doc):
    for e in doc["edges"]:
        if e["from"] == "B" and e["to"] == "A":
            e["dir"] = "backward"
    with pytest.raises(EnvironmentValidationError):
        parse_environment(doc)


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d["nodes"].append({"id": "A"}), "duplicate node id A"),
        (lambda d: d.update(start="Z"), "start node Z"),
        (lambda d: d.update(target_node="Z"), "target node Z"),
        (lambda d: d.update(target_label="  "), "target_label"),
        (lambda d: d["edges"].append({"from": "A", "to": "A", "dir": "left"}), "self-loop"),
        (lambda d: d["edges"].append({"from": "A", "to": "Q", "dir": "left"}), "unknown node Q"),
        (lambda d: d["edges"].append({"from": "A", "to": "C", "dir": "up"}), "unknown direction"),
        (lambda d: d["edges"].append({"from": "A", "to": "C", "dir": "right"}), "more than one right edge"),
    ],
)
def test_validation_errors(doc, mutate, fragment):
    mutate(doc)
    with pytest.raises(EnvironmentValidationError, match=fragment):
        parse_environment(doc)


def test_parse_errors(tmp_path):
    with pytest.raises(EnvironmentParseError, match="missing required field"):
        parse_environment({"nodes": [], "edges": []})
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  nope")
    with pytest.raises(EnvironmentParseError, match="line 2"):
        load_environment(bad)
    with pytest.raises(EnvironmentParseError, match="cannot read"):
        load_environment(tmp_path / "missing.json")


def test_geo_anchor_validation():
    with pytest.raises(ValueError):
        GeoAnchor(91, 0)
    with pytest.raises(ValueError):
        GeoAnchor(0, 0, 360)


def test_digest_is_content_based(doc):
    a, b = parse_environment(doc, "x"), parse_environment(copy.deepcopy(doc), "y")
    assert a.digest == b.digest
    doc["target_label"] = "cafe"
    assert parse_environment(doc).digest != a.digest
    assert bundled_environment("trial").digest != a.digest


def test_street_view_url_template():
    anchor = GeoAnchor(52.37, 4.89, 0)
    assert street_view_url(anchor, "forward", key="KEY") == (
        "https://maps.googleapis.com/maps/api/streetview?size=400x400&location=52.37,4.89&heading=0&key=KEY"
    )
    assert "heading=90&" in street_view_url(anchor, Direction.RIGHT)
    assert "heading=270&" in street_view_url(anchor, "left")
    assert "heading=30&" in street_view_url(GeoAnchor(0, 0, 300), "right")
    with pytest.raises(ValueError):
        street_view_url(anchor, "forward", size=(0, 10))


@given(st.sampled_from(list(Direction)))
def test_reverse_is_involution(d):
    assert d.reverse.reverse is d and d.reverse is not d


@given(st.floats(0, 359.99), st.sampled_from(list(Direction)))
def test_url_heading_in_range(base, d):
    url = street_view_url(GeoAnchor(10, 10, base), d)
    heading = float(url.split("heading=")[1].split("&")[0])
    assert 0 <= heading < 360


@given(st.integers(0, 47))
def test_dropping_any_edge_breaks_symmetry(i):
    doc = json.loads(bundled_path("synthetic_env.json").read_text())
    del doc["edges"][i]
    with pytest.raises(EnvironmentValidationError, match="no reverse edge"):
        parse_environment(doc)
