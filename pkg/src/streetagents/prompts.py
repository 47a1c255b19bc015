"""Prompt templates.

Each task has its own system prompt; the mock backend dispatches on it, so the
constants below double as the task identifiers.
"""

from __future__ import annotations

from typing import Iterable, Sequence

SUMMARY_SYSTEM = "You turn structured street-view analysis results into a short natural-language scene description."
DECISION_SYSTEM = "You play a generative agent walking through a city and decide where it moves next."
IMPORTANCE_SYSTEM = "You rate how memorable an observation is for a generative agent."
MEMORY_SYSTEM = "You write entries for a generative agent's memory stream."
INTERVIEW_SYSTEM = "You play a generative agent being interviewed about a walk it has completed."
RATING_SYSTEM = "You play a generative agent taking part in a street-scene perception survey."

FACTS_HEADER = "Scene details:"
MEMORY_TEXT_PREFIX = "Memory: "
OBSERVATION_PREFIX = "Observation to remember: "
QUESTION_PREFIX = "Question: "
VISITED_PREFIX = "Locations visited in order: "
TRAITS_PREFIX = "Innate traits: "

IMPORTANCE_RUBRIC = (
    "On the scale of 1 to 10, where 1 is purely regular street details which one can see in regular city "
    "streets (e.g., mundane urban setting characterized by a sparse population and minimal vehicular activity. "
    "Streets are devoid of vibrant elements, with limited greenery and visible sky. Lack of noteworthy "
    "establishments like shops, cafeterias and landmarks) and 10 is extremely poignant (e.g., captivating urban "
    "scene which features a bustling environment with a diverse crowd and active vehicular presence. The scene "
    "composition includes a harmonious blend of greenery, buildings, and a dynamic sky. Streets are animated with "
    "life, showcasing variety of establishments. The overall composition which creates a memorable experience.), "
    "rate the likely poignancy of the following piece of memory."
)
IMPORTANCE_RETRY = "Respond with a single integer from 1 to 10 and nothing else."

REACT_INSTRUCTIONS = (
    "{name} should react to the observation, and if so, what should be the next step for {name} to move from "
    "the given directions? Respond by only one direction {name} should focus on moving to. The potential "
    "responses should have one of the four directions: forward, backward, left, and right. However, {name} "
    "should see which directions are available for {name} and most likely to have a {target} based on the "
    "observation and respond accordingly. Also the {name} should justify why it wishes to go in that particular "
    "direction and also why not the other direction based on his/her personality.\n"
    "REACT: {name}'s reaction in the format: {name} wish to go to direction because, {name} does not wish to go "
    "to direction because Be precise and write only the things that you know from the context. Do not "
    "mindlessly select any direction, reason before you choose."
)
DECISION_RETRY = (
    "That reply did not choose one of the available directions ({options}). Answer again in the format: "
    "{name} wish to go to <direction> direction because ..., {name} does not wish to go to <direction> "
    "direction because ..."
)

SUMMARY_INSTRUCTIONS = (
    "Describe the street scene below in one paragraph of plain sentences for a pedestrian. Cover the "
    "streetscape features and how much of each is visible, what kind of place it resembles, its notable "
    "qualities, and say whether any people or vehicles are present and how many."
)
SUMMARY_RETRY = (
    "The description must name the streetscape features (buildings, roads, vegetation, sky) and state "
    "whether people or vehicles are present. Rewrite it."
)

MEMORY_INSTRUCTIONS = (
    "Rewrite the observation below as one memory entry for {name}, in the third person and past tense. "
    "Keep every concrete detail: locations, directions, objects and counts."
)

INTERVIEW_INSTRUCTIONS = (
    "Answer the question as {name}, in the first person, using what {name} remembers from the walk."
)

ATTRIBUTE_DEFINITIONS = {
    "safety": "how secure a person would feel walking through the scene",
    "liveliness": "how much human activity and vibrancy the scene conveys",
}

RATING_INSTRUCTIONS = (
    "{name} is shown the street scene at location {scene}. Rate its {attribute} on an increasing scale from 1 "
    "to 10. {Attribute} means {definition}. Explain the thought process behind the rating, then say what "
    "could be added to make the scene a perfect 10 and what could be changed to bring it down to 1.\n"
    "Answer in the format: {name}'s {Attribute} Rating for Scene {scene} is <rating>. The reason for that is "
    "... To increase the {attribute} rating to 10, {name} suggests ... To decrease the {attribute} rating to 1, "
    "{name} suggests ..."
)
RATING_RETRY = (
    "That answer could not be used. Give a whole-number rating from 1 to 10 and both suggestions, in the "
    "format: {name}'s {Attribute} Rating for Scene {scene} is <rating>. The reason for that is ... To increase "
    "the {attribute} rating to 10, {name} suggests ... To decrease the {attribute} rating to 1, {name} "
    "suggests ..."
)


def persona_block(
    name: str,
    age: int,
    traits: Sequence[str] = (),
    backstory: str | None = None,
    now: str | None = None,
    status: str | None = None,
) -> str:
    lines = [f"Name: {name} (age: {age})", TRAITS_PREFIX + (", ".join(traits) if traits else "N/A")]
    if backstory:
        lines.append(backstory)
    if now:
        lines.append(f"It is {now}.")
    if status:
        lines.append(f"{name}'s status: {status}")
    return "\n".join(lines)


def facts_block(facts: Iterable[str]) -> str:
    return FACTS_HEADER + "\n" + "\n".join(f"- {f}" for f in facts)


def memory_section(context: str) -> str:
    return "Relevant memories:\n" + (context if context else "(none)")


def summary_prompt(facts: Iterable[str]) -> str:
    return SUMMARY_INSTRUCTIONS + "\n\n" + facts_block(facts)


def importance_prompt(text: str) -> str:
    return f"{IMPORTANCE_RUBRIC}\n{MEMORY_TEXT_PREFIX}{text}\nRating:"


def memory_note_prompt(name: str, observation: str) -> str:
    return MEMORY_INSTRUCTIONS.format(name=name) + "\n" + OBSERVATION_PREFIX + observation


def option_line(direction: str, node: str, visited: bool, body: str) -> str:
    note = ", already visited" if visited else ""
    return f"In the {direction} direction (towards location {node}{note}): {body}"


def decision_prompt(
    header: str,
    context: str,
    visited: Sequence[str],
    situation: str,
    option_lines: Sequence[str],
    name: str,
    target: str,
) -> str:
    parts = [
        header,
        memory_section(context),
        VISITED_PREFIX + ", ".join(visited),
        situation + "\n" + "\n".join(option_lines),
        REACT_INSTRUCTIONS.format(name=name, target=target),
    ]
    return "\n\n".join(parts)


def interview_prompt(header: str, context: str, visited: Sequence[str], name: str, question: str) -> str:
    return "\n\n".join(
        [
            header,
            VISITED_PREFIX + ", ".join(visited),
            memory_section(context),
            INTERVIEW_INSTRUCTIONS.format(name=name) + "\n" + QUESTION_PREFIX + question,
        ]
    )


def rating_prompt(header: str, context: str, facts: Iterable[str], name: str, scene: str, attribute: str) -> str:
    instructions = RATING_INSTRUCTIONS.format(
        name=name,
        scene=scene,
        attribute=attribute,
        Attribute=attribute.capitalize(),
        definition=ATTRIBUTE_DEFINITIONS[attribute],
    )
    return "\n\n".join([header, memory_section(context), facts_block(facts), instructions])
