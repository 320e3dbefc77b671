"""Skill abstraction, intent routing, and the Core chit-chat skill.

Skills are modular: each claims a disjoint set of intents and produces
responses.  Core owns greetings, FAQ-style questions, and everything that
falls out of scope.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import TYPE_CHECKING, Callable

from .nlu import Entity, NluResult, OUT_OF_SCOPE
from .responses import Response, Text
from .templates import TemplateCatalog, TemplateError

if TYPE_CHECKING:
    from .dialogue import Session
    from .profiles import UserProfile

logger = logging.getLogger(__name__)

__all__ = [
    "CORE_SKILL",
    "SkillError",
    "SkillContext",
    "SkillDescriptor",
    "SkillRegistry",
    "CoreSkill",
    "CORE_INTENTS",
]

CORE_SKILL = "core"

CORE_INTENTS = frozenset(
    {"greet", "goodbye", "thanks", "who_are_you", "ask_weather", "help"}
)


class SkillError(Exception):
    """Raised by a skill handler for internal failures."""


@dataclass
class SkillContext:
    """Everything a skill handler may consult for one invocation."""

    session: "Session"
    nlu: NluResult
    intent: str
    now: datetime
    trigger: str = "rule"  # "rule" | "form" | "fallback"
    profile: "UserProfile | None" = None
    display_name: str | None = None

    @property
    def entities(self) -> tuple[Entity, ...]:
        return self.nlu.entities

    def entity_values(self, *entity_types: str) -> list[str]:
        return [e.value for e in self.nlu.entities if e.entity_type in entity_types]

    def set_slot(self, name: str, value: object) -> None:
        """Write a slot and record the change in the session event log."""
        self.session.slots[name] = value
        self.session.append_event("slot_set", {"name": name, "value": value}, self.now)


Handler = Callable[[SkillContext], list[Response]]


@dataclass(frozen=True)
class SkillDescriptor:
    name: str
    claimed_intents: frozenset[str]
    handler: Handler


class SkillRegistry:
    """Boot-time registry mapping intents to their owning skill."""

    def __init__(self) -> None:
        self._skills: dict[str, SkillDescriptor] = {}
        self._by_intent: dict[str, SkillDescriptor] = {}
        self._frozen = False

    def register(self, descriptor: SkillDescriptor) -> "SkillRegistry":
        if self._frozen:
            raise SkillError("registry is frozen; skills register at boot only")
        if descriptor.name in self._skills:
            raise SkillError(f"duplicate skill name: {descriptor.name!r}")
        for intent in descriptor.claimed_intents:
            owner = self._by_intent.get(intent)
            if owner is not None:
                raise SkillError(
                    f"intent {intent!r} claimed by both "
                    f"{owner.name!r} and {descriptor.name!r}"
                )
        self._skills[descriptor.name] = descriptor
        for intent in descriptor.claimed_intents:
            self._by_intent[intent] = descriptor
        return self

    def freeze(self) -> "SkillRegistry":
        if CORE_SKILL not in self._skills:
            raise SkillError("cannot boot without a core skill")
        self._frozen = True
        return self

    def names(self) -> set[str]:
        return set(self._skills)

    def get(self, name: str) -> SkillDescriptor:
        try:
            return self._skills[name]
        except KeyError:
            raise SkillError(f"unknown skill: {name!r}") from None

    def route(self, intent: str) -> SkillDescriptor:
        """Unique owner of the intent, or the core fallback handler."""
        descriptor = self._by_intent.get(intent)
        if descriptor is not None:
            return descriptor
        if intent != OUT_OF_SCOPE:
            logger.warning("intent %r has no owning skill; routing to core", intent)
        return self._skills[CORE_SKILL]


class CoreSkill:
    """Templated answers for anticipated questions plus out-of-scope handling."""

    # intent -> template id; greet is special-cased for personalization
    _TEMPLATE_BY_INTENT = {
        "greet": "greet",
        "goodbye": "goodbye",
        "thanks": "thanks",
        "who_are_you": "who_are_you",
        "ask_weather": "ask_weather",
        "help": "help",
        OUT_OF_SCOPE: "out_of_scope",
    }

    def __init__(self, templates: TemplateCatalog):
        self.templates = templates

    def descriptor(self) -> SkillDescriptor:
        return SkillDescriptor(
            name=CORE_SKILL, claimed_intents=CORE_INTENTS, handler=self.handle
        )

    def handle(self, ctx: SkillContext) -> list[Response]:
        intent = ctx.intent
        template_id = self._TEMPLATE_BY_INTENT.get(intent, "out_of_scope")
        bindings: dict = {}
        if intent == "greet" and ctx.display_name and "greet_personal" in self.templates:
            template_id = "greet_personal"
            bindings = {"name": ctx.display_name}
        try:
            return [
                self.templates.render(
                    template_id,
                    ctx.session.template_uses,
                    bindings,
                    skill=CORE_SKILL,
                )
            ]
        except TemplateError:
            logger.error("missing core template %r", template_id)
            return [
                Response(
                    payload=Text("Sorry, something went wrong on my end."),
                    template_id="apology_error",
                    skill=CORE_SKILL,
                )
            ]
