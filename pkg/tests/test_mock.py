from __future__ import annotations

import pytest

from streetagents.agent import AgentState, DirectionOption, decide_direction, parse_decision
from streetagents.environment import Direction
from streetagents.llm import ChatExchange
from streetagents.mock import MockBackend, mock_importance, mock_rating, salient_count, target_priors, tokens
from streetagents.simulation import RunConfig, run_wayfinding
from streetagents.vision import SceneSummary

F, R, L = Direction.FORWARD, Direction.RIGHT, Direction.LEFT


def test_tokens():
    assert tokens("Two Bicycles, one car.") >= {"two", "bicycles", "bicycle", "one", "car"}
    assert tokens("bus") == {"bus"}  # short words are not singularized
    assert "people" not in tokens("no people or vehicles here")


def test_rules():
    assert salient_count("people near a fountain and water") == 3
    assert mock_importance("nothing") == 1
    assert mock_importance(" ".join(["people bicycle car water fountain market shopfront"] * 2)) == 8
    assert mock_rating("people: 3", "safety") == 4
    assert mock_rating("people: 3", "liveliness") == 3
    assert mock_rating("people car bicycle market water", "liveliness") == 10
    assert mock_rating("", "liveliness") == 1
    assert target_priors("restaurant") >= {"shopfront", "people"}
    assert target_priors("tree-house") == frozenset({"tree", "house"})


def persona_state(traits):
    from streetagents.agent import Persona

    p = Persona("Ada", 30, tuple(traits), "bio")
    return AgentState.for_persona(p, "A", "restaurant")


def opt(d, node, text, visited=False):
    return DirectionOption(d, node, SceneSummary(text, node, "front"), visited)


def test_decision_scoring_and_ties():
    state = persona_state(["outdoorsy"])
    options = [opt(F, "B", "Plain road."), opt(R, "C", "Plenty of trees and a park."), opt(L, "D", "Plain road.")]
    assert decide_direction(state, options, MockBackend(0)).chosen is R
    # Target priors count double and outweigh a trait match.
    options = [opt(F, "B", "Trees."), opt(R, "C", "A shopfront.")]
    assert decide_direction(state, options, MockBackend(0)).chosen is R
    # All equal: forward wins.
    options = [opt(R, "C", "Road."), opt(F, "B", "Road.")]
    assert decide_direction(state, options, MockBackend(0)).chosen is F


def test_visited_penalty():
    state = persona_state(["outdoorsy"])
    options = [opt(F, "B", "Trees.", visited=True), opt(R, "C", "Road.")]
    assert decide_direction(state, options, MockBackend(0)).chosen is F
    options = [opt(F, "B", "Road.", visited=True), opt(R, "C", "Road.")]
    assert decide_direction(state, options, MockBackend(0)).chosen is R


def test_reply_is_parseable_with_rejections():
    state = persona_state(["curious"])
    options = [opt(F, "B", "Road."), opt(R, "C", "A promenade.")]
    d = decide_direction(state, options, MockBackend(0))
    assert d.chosen is R and set(d.rejections) == {F}
    assert parse_decision(d.raw_response, [F, R])[0] is R


@pytest.mark.parametrize("seed", [0, 1, 2, 99])
def test_seed_changes_phrasing_only(seed, synthetic, synthetic_scenes, personas):
    base = run_wayfinding(RunConfig(), synthetic, synthetic_scenes, MockBackend(0), personas[2])
    other = run_wayfinding(RunConfig(), synthetic, synthetic_scenes, MockBackend(seed), personas[2])
    assert other.path == base.path
    assert [s.importance for s in other.steps] == [s.importance for s in base.steps]


def test_pure_function_of_exchange_and_seed():
    ex = ChatExchange.ask("unrelated system prompt", "hello")
    assert MockBackend(4).complete(ex) == MockBackend(4).complete(ex)
