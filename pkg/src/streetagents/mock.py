"""Deterministic LLM stand-in.

Replies are a pure function of (exchange, seed). The mock reads the structured
parts of each prompt (facts, option lines, traits) and applies fixed rules:

* direction: score = trait keywords + 2 * target-prior keywords - 1 if already
  visited; highest wins, ties go forward, right, left, backward.
* importance: 1 + number of distinct salient tokens, clamped to [1, 10].
* rating: safety 3 + salient, liveliness 1 + 2 * salient, clamped to [1, 10].
"""

from __future__ import annotations

import hashlib
import random
import re
from typing import Any

from . import prompts
from .environment import DIRECTION_ORDER
from .llm import Backend, ChatExchange

SALIENT_TOKENS = frozenset({"people", "bicycle", "car", "water", "fountain", "market", "shopfront"})

TARGET_PRIORS = {
    "restaurant": frozenset({"shopfront", "people", "promenade", "market", "cafeteria"}),
}

# Scene words each trait is drawn to.
TRAIT_LEXICON: dict[str, frozenset[str]] = {
    "curious": frozenset({"promenade", "market", "arcade"}),
    "adventurous": frozenset({"promenade", "canal", "aqueduct"}),
    "open-minded": frozenset({"embassy", "campus"}),
    "observant": frozenset({"shopfront", "arcade"}),
    "inquisitive": frozenset({"embassy", "arch"}),
    "nostalgic": frozenset({"arch", "aqueduct", "courtyard"}),
    "appreciative of tradition": frozenset({"arch", "courtyard", "embassy"}),
    "sociable": frozenset({"people", "promenade"}),
    "hospitable": frozenset({"people", "cafeteria"}),
    "collaborative": frozenset({"people", "campus"}),
    "team-oriented": frozenset({"people", "playground"}),
    "community-oriented": frozenset({"people", "garden", "market"}),
    "communicative": frozenset({"people"}),
    "empathetic": frozenset({"people"}),
    "compassionate": frozenset({"people", "garden"}),
    "nurturing": frozenset({"garden", "vegetation"}),
    "mindful": frozenset({"garden", "courtyard"}),
    "environmentalist": frozenset({"vegetation", "trees", "garden", "foliage"}),
    "outdoorsy": frozenset({"vegetation", "trees", "park"}),
    "conservation-minded": frozenset({"vegetation", "garden", "foliage"}),
    "energetic": frozenset({"bicycle", "playground"}),
    "competitive": frozenset({"playground", "bicycle"}),
    "disciplined": frozenset({"street"}),
    "tech-savvy": frozenset({"station", "parking"}),
    "innovative": frozenset({"campus", "station"}),
    "analytical": frozenset({"street", "parking"}),
    "data-driven": frozenset({"market", "station"}),
    "strategic": frozenset({"street", "market"}),
    "gastronomic": frozenset({"cafeteria", "market", "shopfront"}),
    "creative": frozenset({"arcade", "promenade"}),
    "expressive": frozenset({"promenade"}),
    "melodic": frozenset({"promenade", "arcade"}),
    "performance-driven": frozenset({"promenade", "plaza"}),
    "imaginative": frozenset({"canal", "courtyard"}),
    "literary": frozenset({"courtyard", "campus"}),
    "introspective": frozenset({"courtyard", "garden"}),
    "thoughtful": frozenset({"garden"}),
}

_WORD = re.compile(r"[a-z]+")
# "no people or vehicles" mentions nothing that is there.
_NEGATED = re.compile(r"\bno (?:[a-z]+ or )?[a-z]+")


def tokens(text: str) -> set[str]:
    """Lower-cased word set, with a singular form added for plurals ending in 's'.

    Words negated by a preceding "no" are left out.
    """
    out = set()
    for w in _WORD.findall(_NEGATED.sub(" ", text.lower())):
        out.add(w)
        if len(w) > 3 and w.endswith("s"):
            out.add(w[:-1])
    return out


def salient_count(text: str) -> int:
    return len(SALIENT_TOKENS & tokens(text))


def mock_importance(text: str) -> int:
    return max(1, min(10, 1 + salient_count(text)))


def trait_keywords(traits: list[str]) -> frozenset[str]:
    words: set[str] = set()
    for t in traits:
        t = t.strip().lower().rstrip(".")
        words |= TRAIT_LEXICON.get(t, frozenset())
    return frozenset(words)


def target_priors(target: str) -> frozenset[str]:
    return TARGET_PRIORS.get(target.lower(), frozenset(tokens(target)))


def mock_rating(facts_text: str, attribute: str) -> int:
    n = salient_count(facts_text)
    raw = 3 + n if attribute == "safety" else 1 + 2 * n
    return max(1, min(10, raw))


_OPTION = re.compile(r"^In the (\w+) direction \(towards location ([^,)]+)(, already visited)?\): (.*)$", re.M)
_NAME = re.compile(r"^Name: (.+?) \(age", re.M)
_TARGET = re.compile(r"most likely to have an? (.+?) based on the observation")


def _line_after(text: str, prefix: str) -> str | None:
    for line in text.splitlines():
        if line.startswith(prefix):
            return line[len(prefix):]
    return None


def _facts(text: str) -> list[str]:
    lines = text.splitlines()
    try:
        start = lines.index(prompts.FACTS_HEADER) + 1
    except ValueError:
        return []
    out = []
    for line in lines[start:]:
        if not line.startswith("- "):
            break
        out.append(line[2:])
    return out


def _count(n: int, plural_word: str) -> str:
    if n != 1:
        return f"{n} {plural_word}"
    if plural_word == "people":
        return "1 person"
    return "1 " + (plural_word[:-2] if plural_word.endswith("ses") else plural_word.rstrip("s"))


def _join(items: list[str]) -> str:
    if len(items) <= 1:
        return "".join(items)
    return ", ".join(items[:-1]) + " and " + items[-1]


class MockBackend(Backend):
    kind = "mock"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind, "seed": self.seed}

    def _rng(self, text: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}|{text}".encode("utf-8")).hexdigest()
        return random.Random(int(digest[:16], 16))

    def complete(self, exchange: ChatExchange) -> str:
        text = exchange.first_user
        handler = {
            prompts.SUMMARY_SYSTEM: self._summary,
            prompts.DECISION_SYSTEM: self._decision,
            prompts.IMPORTANCE_SYSTEM: self._importance,
            prompts.MEMORY_SYSTEM: self._memory_note,
            prompts.INTERVIEW_SYSTEM: self._interview,
            prompts.RATING_SYSTEM: self._rating,
        }.get(exchange.system)
        if handler is None:
            return "OK"
        return handler(text)

    def _summary(self, text: str) -> str:
        high, average, low = [], [], []
        categories, attributes = [], []
        counts: dict[str, int] = {}
        for fact in _facts(text):
            if m := re.fullmatch(r"(\w+) coverage: (low|average|high)", fact):
                {"high": high, "average": average, "low": low}[m.group(2)].append(m.group(1))
            elif m := re.fullmatch(r"scene category: (.+) \(confidence: \w+\)", fact):
                categories.append(m.group(1))
            elif fact.startswith("attributes: "):
                attrs = fact[len("attributes: "):]
                attributes = [] if attrs == "none" else attrs.split(", ")
            elif m := re.fullmatch(r"(.+): (\d+)", fact):
                counts[m.group(1)] = int(m.group(2))

        from .vision import VEHICLE_CLASSES, plural

        parts = []
        if high:
            parts.append("a high presence of " + _join([plural(c) for c in high]))
        if average:
            parts.append("an average amount of " + _join([plural(c) for c in average]))
        if parts:
            sentences = ["The scene shows " + " and ".join(parts) + "."]
        else:
            sentences = [f"All streetscape features ({_join([plural(c) for c in low])}) have low coverage."]
        if categories:
            sentences.append("It resembles " + _join(categories) + ".")
        if attributes:
            sentences.append("Its qualities: " + ", ".join(attributes) + ".")
        vehicles = {plural(v) for v in VEHICLE_CLASSES}
        people = counts.pop("people", 0)
        movers = [_count(n, k) for k, n in counts.items() if k in vehicles]
        others = [_count(n, k) for k, n in counts.items() if k not in vehicles]
        if people:
            sentences.append("There are " + _join([f"{people} people"] + movers) + " in view.")
        elif movers:
            sentences.append("Nobody is walking here; " + _join(movers) + " can be seen.")
        else:
            sentences.append("There are no people or vehicles in view.")
        if others:
            sentences.append("Also visible: " + _join(others) + ".")
        return " ".join(sentences)

    def _decision(self, text: str) -> str:
        name_m = _NAME.search(text)
        name = name_m.group(1) if name_m else "The agent"
        traits = (_line_after(text, prompts.TRAITS_PREFIX) or "").split(",")
        target_m = _TARGET.search(text)
        target = target_m.group(1) if target_m else "target"
        wanted = trait_keywords(traits)
        priors = target_priors(target)

        options = []
        for m in _OPTION.finditer(text):
            direction, node, visited, body = m.group(1), m.group(2), bool(m.group(3)), m.group(4)
            seen = tokens(body)
            liked, hints = sorted(wanted & seen), sorted(priors & seen)
            score = len(liked) + 2 * len(hints) - (1 if visited else 0)
            options.append((direction, node, visited, liked, hints, score))
        if not options:
            return f"{name} is not sure where to go."
        rank = {d.value: i for i, d in enumerate(DIRECTION_ORDER)}
        best = max(options, key=lambda o: (o[5], -rank.get(o[0], 99)))

        def because(opt: tuple) -> str:
            _, node, visited, liked, hints, _ = opt
            bits = []
            if hints:
                bits.append(f"{_join(hints)} there make a {target} more likely")
            if liked:
                bits.append(f"{name} is drawn to the {_join(liked)}")
            if visited:
                bits.append(f"location {node} was already visited")
            return "; ".join(bits) if bits else f"nothing there points to a {target}"

        opener = self._rng(text).choice(["based on the observation", "judging from what is visible", "after weighing the options"])
        reply = f"{name} wish to go to the {best[0]} direction because, {opener}, {because(best)}."
        for opt in options:
            if opt is not best:
                reply += f" {name} does not wish to go to the {opt[0]} direction because {because(opt)}."
        return reply

    def _importance(self, text: str) -> str:
        memory = text.split(prompts.MEMORY_TEXT_PREFIX, 1)[-1].rsplit("\nRating:", 1)[0]
        return str(mock_importance(memory))

    def _memory_note(self, text: str) -> str:
        return text.split(prompts.OBSERVATION_PREFIX, 1)[-1].strip()

    def _interview(self, text: str) -> str:
        name_m = _NAME.search(text)
        name = name_m.group(1) if name_m else "I"
        visited = [v.strip() for v in (_line_after(text, prompts.VISITED_PREFIX) or "").split(",") if v.strip()]
        question = _line_after(text, prompts.QUESTION_PREFIX) or ""
        if not visited:
            return "I do not remember where I went."
        route = " -> ".join(visited)
        answer = f"Starting from location {visited[0]}, I walked {route}."
        if len(visited) > 1:
            answer += f" I ended at location {visited[-1]} after {len(visited) - 1} moves."
        if "why" in question.lower():
            answer += " I chose each direction by what the scenes suggested about where my goal might be."
        return f"{answer} ({name})"

    def _rating(self, text: str) -> str:
        name_m = _NAME.search(text)
        name = name_m.group(1) if name_m else "The agent"
        attr_m = re.search(r"Rate its (\w+) on", text)
        attribute = attr_m.group(1) if attr_m else "safety"
        scene_m = re.search(r"Rating for Scene (\S+) is <rating>", text)
        scene = scene_m.group(1) if scene_m else "?"
        facts = "\n".join(_facts(text))
        score = mock_rating(facts, attribute)
        salient = sorted(SALIENT_TOKENS & tokens(facts))
        seen = f"the presence of {_join(salient)}" if salient else "the absence of notable activity"
        mood = self._rng(text).choice(["perceives", "judges", "reads"])
        return (
            f"{name}'s {attribute.capitalize()} Rating for Scene {scene} is {score}. The reason for that is "
            f"{name} {mood} the scene through {seen}. "
            f"To increase the {attribute} rating to 10, {name} suggests adding more people, lighting and "
            f"active shopfronts. "
            f"To decrease the {attribute} rating to 1, {name} suggests removing people and adding obstacles "
            f"that hinder visibility."
        )
