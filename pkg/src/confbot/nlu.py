"""Deterministic natural-language understanding.

Intents are scored by token-set overlap (Jaccard) against example
utterances, with anchored wildcard patterns as a hard override.  Entities
come from gazetteer lookup over token n-grams.  Everything is pure and
immutable after compilation, so the same (model, text) pair always yields
the same result.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fnmatch import translate as _fnmatch_translate

__all__ = [
    "OUT_OF_SCOPE",
    "DEFAULT_TAU",
    "NluError",
    "IntentSpec",
    "Gazetteer",
    "Entity",
    "NluResult",
    "NluModel",
    "tokenize",
    "compile_model",
    "classify",
    "extract_entities",
]

# Reserved intent name returned when nothing scores above threshold.
OUT_OF_SCOPE = "out_of_scope"

DEFAULT_TAU = 0.3

_APOSTROPHES = "'’"
_TOKEN_RE = re.compile(r"[^\W_]+")


class NluError(ValueError):
    """Raised for invalid intent specs, gazetteers, or model construction."""


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation dropped, in-token apostrophes removed.

    "conference's" becomes "conferences" so possessives still match their
    plain forms.
    """
    for ch in _APOSTROPHES:
        text = text.replace(ch, "")
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class IntentSpec:
    """Training unit for one intent: example utterances plus optional patterns."""

    name: str
    examples: tuple[str, ...] = ()
    patterns: tuple[str, ...] = ()
    priority: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        object.__setattr__(self, "patterns", tuple(self.patterns))


@dataclass(frozen=True)
class Gazetteer:
    """Lookup table mapping surface forms to canonical entity values."""

    entity_type: str
    entries: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Entity:
    """One extracted entity with its half-open token span [start, end)."""

    entity_type: str
    value: str
    start: int
    end: int


@dataclass(frozen=True)
class NluResult:
    text: str
    intent: str
    confidence: float
    entities: tuple[Entity, ...] = ()
    is_fallback: bool = False


@dataclass(frozen=True)
class _CompiledIntent:
    name: str
    example_sets: tuple[frozenset[str], ...]
    patterns: tuple[re.Pattern[str], ...]
    priority: int


@dataclass(frozen=True)
class _CompiledGazetteer:
    entity_type: str
    # normalized surface ("token token") -> canonical value
    entries: dict[str, str]


@dataclass(frozen=True)
class NluModel:
    """Immutable compiled model; safe to share across concurrent sessions."""

    intents: tuple[_CompiledIntent, ...]
    gazetteers: tuple[_CompiledGazetteer, ...]
    tau: float
    max_ngram: int

    @property
    def intent_names(self) -> list[str]:
        return [i.name for i in self.intents]


def _normalize_surface(surface: str) -> str:
    return " ".join(tokenize(surface))


def _compile_pattern(pattern: str) -> re.Pattern[str]:
    # Normalize everything except the wildcard, then reuse fnmatch's
    # translation so '*' spans arbitrary text.  Anchored by construction.
    parts = []
    for word in pattern.split():
        if word == "*":
            parts.append("*")
        else:
            norm = _normalize_surface(word)
            if norm:
                parts.append(norm)
    return re.compile(_fnmatch_translate(" ".join(parts)))


def compile_model(
    specs: list[IntentSpec] | tuple[IntentSpec, ...],
    gazetteers: list[Gazetteer] | tuple[Gazetteer, ...] = (),
    tau: float = DEFAULT_TAU,
) -> NluModel:
    """Validate and precompute token sets, patterns, and gazetteer indexes.

    Rejects duplicate or reserved intent names, empty spec lists, specs
    with no training data, duplicate example token sets across different
    intents, and malformed gazetteers.
    """
    if not specs:
        raise NluError("empty intent spec list")
    if not 0.0 <= tau <= 1.0:
        raise NluError(f"tau must be in [0, 1], got {tau}")

    compiled_intents: list[_CompiledIntent] = []
    seen_names: set[str] = set()
    example_owner: dict[frozenset[str], str] = {}
    for spec in specs:
        if not spec.name:
            raise NluError("intent with empty name")
        if spec.name == OUT_OF_SCOPE:
            raise NluError(f"intent name {OUT_OF_SCOPE!r} is reserved")
        if spec.name in seen_names:
            raise NluError(f"duplicate intent name: {spec.name!r}")
        seen_names.add(spec.name)
        if not spec.examples and not spec.patterns:
            raise NluError(f"intent {spec.name!r} has no examples or patterns")

        example_sets: list[frozenset[str]] = []
        for example in spec.examples:
            if not example or not example.strip():
                raise NluError(f"intent {spec.name!r} has an empty example")
            tokens = frozenset(tokenize(example))
            if not tokens:
                raise NluError(
                    f"intent {spec.name!r} example {example!r} has no tokens"
                )
            owner = example_owner.get(tokens)
            if owner is not None and owner != spec.name:
                raise NluError(
                    f"example {example!r} duplicates one under intent {owner!r}"
                )
            example_owner[tokens] = spec.name
            if tokens not in example_sets:
                example_sets.append(tokens)

        compiled_intents.append(
            _CompiledIntent(
                name=spec.name,
                example_sets=tuple(example_sets),
                patterns=tuple(_compile_pattern(p) for p in spec.patterns),
                priority=spec.priority,
            )
        )

    compiled_gazetteers: list[_CompiledGazetteer] = []
    seen_types: set[str] = set()
    max_ngram = 1
    for gaz in gazetteers:
        if not gaz.entity_type:
            raise NluError("gazetteer with empty entity_type")
        if gaz.entity_type in seen_types:
            raise NluError(f"duplicate gazetteer entity_type: {gaz.entity_type!r}")
        seen_types.add(gaz.entity_type)
        entries: dict[str, str] = {}
        for surface, value in gaz.entries.items():
            norm = _normalize_surface(surface)
            if not norm:
                raise NluError(
                    f"gazetteer {gaz.entity_type!r} has an empty surface form"
                )
            if norm in entries:
                raise NluError(
                    f"gazetteer {gaz.entity_type!r} has duplicate surface {norm!r}"
                )
            entries[norm] = value
            max_ngram = max(max_ngram, len(norm.split()))
        compiled_gazetteers.append(
            _CompiledGazetteer(entity_type=gaz.entity_type, entries=entries)
        )

    return NluModel(
        intents=tuple(compiled_intents),
        gazetteers=tuple(compiled_gazetteers),
        tau=tau,
        max_ngram=max_ngram,
    )


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def classify(model: NluModel, text: str, tau: float | None = None) -> NluResult:
    """Score every intent and pick the winner, or fall back below threshold.

    score(intent) = max Jaccard overlap against its examples; a matching
    pattern forces 1.0.  Ties break by higher priority, then smaller
    intent name.  Entities are extracted either way.
    """
    threshold = model.tau if tau is None else tau
    tokens = frozenset(tokenize(text))
    normalized = " ".join(tokenize(text))
    entities = tuple(extract_entities(model, text))

    scored: list[tuple[float, int, str]] = []
    for intent in model.intents:
        score = 0.0
        for example in intent.example_sets:
            score = max(score, _jaccard(tokens, example))
        if score < 1.0:
            for pattern in intent.patterns:
                if pattern.match(normalized):
                    score = 1.0
                    break
        scored.append((score, intent.priority, intent.name))

    # Winner: highest score, then higher priority, then smaller name.
    best_score, _, best_name = min(scored, key=lambda s: (-s[0], -s[1], s[2]))

    # A zero score is always a fallback, regardless of threshold.
    if best_score < threshold or best_score == 0.0:
        return NluResult(
            text=text,
            intent=OUT_OF_SCOPE,
            confidence=best_score,
            entities=entities,
            is_fallback=True,
        )
    return NluResult(
        text=text,
        intent=best_name,
        confidence=best_score,
        entities=entities,
        is_fallback=False,
    )


def extract_entities(model: NluModel, text: str) -> list[Entity]:
    """Longest-match gazetteer lookup over token n-grams, left to right.

    At each position the longest matching span wins; for equal spans the
    gazetteer listed first at compile time wins.  Results never overlap.
    """
    tokens = tokenize(text)
    found: list[Entity] = []
    i = 0
    n = len(tokens)
    while i < n:
        match: Entity | None = None
        for length in range(min(model.max_ngram, n - i), 0, -1):
            surface = " ".join(tokens[i : i + length])
            for gaz in model.gazetteers:
                value = gaz.entries.get(surface)
                if value is not None:
                    match = Entity(gaz.entity_type, value, i, i + length)
                    break
            if match is not None:
                break
        if match is not None:
            found.append(match)
            i = match.end
        else:
            i += 1
    return found
