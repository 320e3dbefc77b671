"""Per-session dialogue state tracking and policy.

Each user turn runs a fixed pipeline: classify, fill slots, apply policy,
execute actions.  Policy is deterministic: the highest-priority matching
rule wins, otherwise an active form advances, otherwise the turn falls
back to the core skill.  The event log is append-only so conversations
can be audited and replayed.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable

from .logstore import LogRecord
from .nlu import NluModel, NluResult, OUT_OF_SCOPE, classify
from .responses import ChannelDescriptor, Response, Text
from .templates import TemplateCatalog, TemplateError

logger = logging.getLogger(__name__)

__all__ = [
    "USER_UTTERED",
    "BOT_UTTERED",
    "SLOT_SET",
    "FORM_ACTIVATED",
    "FORM_DEACTIVATED",
    "SKILL_INVOKED",
    "ERROR_EVENT",
    "NO_FORM",
    "DialogueConfigError",
    "Event",
    "Action",
    "Rule",
    "FillRule",
    "FormSlot",
    "Form",
    "Session",
    "DialogueEngine",
]

USER_UTTERED = "user_uttered"
BOT_UTTERED = "bot_uttered"
SLOT_SET = "slot_set"
FORM_ACTIVATED = "form_activated"
FORM_DEACTIVATED = "form_deactivated"
SKILL_INVOKED = "skill_invoked"
ERROR_EVENT = "error"

# Reserved when_form value meaning "only when no form is active".
NO_FORM = "none"

APOLOGY_TEMPLATE = "apology_error"


class DialogueConfigError(ValueError):
    """Raised at boot for invalid rules, forms, or dangling references."""


@dataclass(frozen=True)
class Event:
    kind: str
    turn: int
    seq: int
    timestamp: datetime
    data: dict


@dataclass(frozen=True)
class Action:
    """One policy step; exactly one variant per instance."""

    kind: str  # "say" | "invoke_skill" | "set_slot" | "activate_form" | "deactivate_form"
    template: str | None = None
    bindings: dict | None = None
    skill: str | None = None
    slot: str | None = None
    value: object = None
    form: str | None = None
    as_fallback: bool = False

    @classmethod
    def say(cls, template: str, bindings: dict | None = None, skill: str | None = None):
        return cls(kind="say", template=template, bindings=bindings, skill=skill)

    @classmethod
    def invoke_skill(cls, name: str, as_fallback: bool = False):
        return cls(kind="invoke_skill", skill=name, as_fallback=as_fallback)

    @classmethod
    def set_slot(cls, slot: str, value: object):
        return cls(kind="set_slot", slot=slot, value=value)

    @classmethod
    def activate_form(cls, name: str):
        return cls(kind="activate_form", form=name)

    @classmethod
    def deactivate_form(cls):
        return cls(kind="deactivate_form")


@dataclass(frozen=True)
class Rule:
    id: str
    when_intent: str
    actions: tuple[Action, ...]
    when_form: str | None = None  # None = any; NO_FORM = no active form; else form name
    when_slots: dict | None = None  # slot -> "*" (set), None (unset), or literal
    priority: int = 0


@dataclass(frozen=True)
class FillRule:
    """How a required slot gets its value.

    Entity rules can fill any required slot of the active form (subject to
    intent conditions); intent rules fire only for the currently requested
    slot.  ``slot`` reroutes the stored value while still satisfying the
    owning slot; ``exclusive_with`` removes stored values from a sibling
    list slot so later statements win.
    """

    from_entities: tuple[str, ...] = ()
    intent_in: tuple[str, ...] = ()
    intent_not: tuple[str, ...] = ()
    from_intents: tuple[str, ...] = ()
    value: object = None
    slot: str | None = None
    mode: str = "set"  # "set" | "append"
    exclusive_with: str | None = None
    confirm_current: bool = False


@dataclass(frozen=True)
class FormSlot:
    name: str
    prompt: str
    fills: tuple[FillRule, ...]
    confirm_prompt: str | None = None
    is_list: bool = False


@dataclass(frozen=True)
class Form:
    name: str
    slots: tuple[FormSlot, ...]
    on_complete: Action
    skill: str | None = None
    # optional programmatic prefill: (session, nlu) -> {slot: value}
    activation_hook: Callable[["Session", NluResult], dict] | None = None


@dataclass
class Session:
    """All per-conversation state; one serialization domain."""

    session_id: str
    channel: ChannelDescriptor
    user_id: str | None = None
    events: list[Event] = field(default_factory=list)
    slots: dict = field(default_factory=dict)
    active_form: str | None = None
    turn_count: int = 0
    form_filled: set[str] = field(default_factory=set)
    template_uses: dict[str, int] = field(default_factory=dict)
    consent_requested: bool = False
    consent_answered: bool = False
    _last_turn: int = field(default=-1, repr=False)
    _last_seq: int = field(default=-1, repr=False)

    def next_seq(self) -> int:
        if self.turn_count != self._last_turn:
            self._last_turn = self.turn_count
            self._last_seq = 0
        else:
            self._last_seq += 1
        return self._last_seq

    def append_event(self, kind: str, data: dict, now: datetime) -> Event:
        event = Event(
            kind=kind, turn=self.turn_count, seq=self.next_seq(),
            timestamp=now, data=data,
        )
        self.events.append(event)
        return event

    def slot_truthy(self, name: str) -> bool:
        value = self.slots.get(name)
        return bool(value)


# executor(skill_name, session, nlu, intent, trigger, now) -> responses
SkillExecutor = Callable[[str, Session, NluResult, str, str, datetime], list[Response]]


class DialogueEngine:
    """Immutable-after-boot policy engine shared by all sessions."""

    def __init__(
        self,
        model: NluModel,
        rules: Iterable[Rule],
        forms: Iterable[Form],
        templates: TemplateCatalog,
        skill_executor: SkillExecutor,
        skill_names: set[str],
        on_record: Callable[[LogRecord], None] | None = None,
    ):
        self.model = model
        self.rules = tuple(rules)
        self.forms = {f.name: f for f in forms}
        self.templates = templates
        self.skill_executor = skill_executor
        self.on_record = on_record
        self._validate(skill_names)

    # ------------------------------------------------------------------
    # boot validation

    def _validate(self, skill_names: set[str]) -> None:
        if len(self.forms) != len(set(self.forms)):
            raise DialogueConfigError("duplicate form name")
        if NO_FORM in self.forms:
            raise DialogueConfigError(f"form name {NO_FORM!r} is reserved")
        seen_rules: set[str] = set()
        for rule in self.rules:
            if rule.id in seen_rules:
                raise DialogueConfigError(f"duplicate rule id: {rule.id!r}")
            seen_rules.add(rule.id)
            if not rule.actions:
                raise DialogueConfigError(f"rule {rule.id!r} has no actions")
            if rule.when_form not in (None, NO_FORM) and rule.when_form not in self.forms:
                raise DialogueConfigError(
                    f"rule {rule.id!r} references unknown form {rule.when_form!r}"
                )
            if not any(
                a.kind in ("say", "invoke_skill", "activate_form") for a in rule.actions
            ):
                raise DialogueConfigError(
                    f"rule {rule.id!r} can never produce a response"
                )
            for action in rule.actions:
                self._validate_action(f"rule {rule.id!r}", action, skill_names)
        for form in self.forms.values():
            if not form.slots:
                raise DialogueConfigError(f"form {form.name!r} has no slots")
            names = [s.name for s in form.slots]
            if len(names) != len(set(names)):
                raise DialogueConfigError(f"form {form.name!r} has duplicate slots")
            for slot in form.slots:
                if slot.prompt not in self.templates:
                    raise DialogueConfigError(
                        f"form {form.name!r} slot {slot.name!r} references "
                        f"unknown template {slot.prompt!r}"
                    )
                if slot.confirm_prompt and slot.confirm_prompt not in self.templates:
                    raise DialogueConfigError(
                        f"form {form.name!r} slot {slot.name!r} references "
                        f"unknown template {slot.confirm_prompt!r}"
                    )
            self._validate_action(f"form {form.name!r}", form.on_complete, skill_names)
        if APOLOGY_TEMPLATE not in self.templates:
            raise DialogueConfigError(f"missing template {APOLOGY_TEMPLATE!r}")

    def _validate_action(self, where: str, action: Action, skill_names: set[str]):
        if action.kind == "say":
            if action.template not in self.templates:
                raise DialogueConfigError(
                    f"{where} references unknown template {action.template!r}"
                )
        elif action.kind == "invoke_skill":
            if action.skill not in skill_names:
                raise DialogueConfigError(
                    f"{where} references unknown skill {action.skill!r}"
                )
        elif action.kind == "activate_form":
            if action.form not in self.forms:
                raise DialogueConfigError(
                    f"{where} references unknown form {action.form!r}"
                )
        elif action.kind not in ("set_slot", "deactivate_form"):
            raise DialogueConfigError(f"{where} has unknown action {action.kind!r}")

    # ------------------------------------------------------------------
    # session lifecycle

    def new_session(self, channel: ChannelDescriptor) -> Session:
        return Session(session_id=uuid.uuid4().hex, channel=channel)

    def reset_session(self, session: Session) -> Session:
        """Clear slots and any active form; the event log stays for audit."""
        session.slots = {}
        session.active_form = None
        session.form_filled = set()
        return session

    # ------------------------------------------------------------------
    # the turn pipeline

    def handle_message(
        self, session: Session, text: str, now: datetime | None = None
    ) -> list[Response]:
        """Run one user turn; never raises for skill failures."""
        now = now or datetime.now(timezone.utc)
        nlu = classify(self.model, text)

        session.turn_count += 1
        session.append_event(
            USER_UTTERED,
            {"text": text, "intent": nlu.intent, "confidence": nlu.confidence},
            now,
        )
        self._log(session, now, "user", text, intent=nlu.intent)

        self.fill_slots(session, nlu, now)
        actions = self.apply_policy(session, nlu)
        responses = self._execute(session, nlu, actions, now)

        if not responses:
            # Defensive: no dead air, whatever the configuration does.
            responses = [self._render(session, "out_of_scope")]

        for response in responses:
            session.append_event(
                BOT_UTTERED,
                {
                    "text": response.text,
                    "template_id": response.template_id,
                    "skill": response.skill,
                },
                now,
            )
            self._log(session, now, "bot", response.text, skill=response.skill)
        return responses

    def apply_policy(self, session: Session, nlu: NluResult) -> list[Action]:
        """Deterministic choice: rule, else form step, else fallback."""
        matching = [r for r in self.rules if self._rule_matches(r, session, nlu)]
        if matching:
            winner = min(matching, key=lambda r: (-r.priority, r.id))
            return list(winner.actions)

        if session.active_form is not None:
            form = self.forms[session.active_form]
            pending = self._next_slot(session, form)
            if pending is None:
                return [Action.deactivate_form(), form.on_complete]
            return [self._prompt_action(session, form, pending)]

        return [Action.invoke_skill("core", as_fallback=True)]

    def fill_slots(
        self, session: Session, nlu: NluResult, now: datetime | None = None
    ) -> list[Event]:
        """Apply the active form's fill rules to this utterance."""
        if session.active_form is None:
            return []
        now = now or datetime.now(timezone.utc)
        form = self.forms[session.active_form]
        requested = self._next_slot(session, form)
        events: list[Event] = []
        for slot in form.slots:
            for rule in slot.fills:
                if rule.from_entities:
                    if rule.intent_in and nlu.intent not in rule.intent_in:
                        continue
                    if nlu.intent in rule.intent_not:
                        continue
                    values = [
                        e.value for e in nlu.entities
                        if e.entity_type in rule.from_entities
                    ]
                    if not values:
                        continue
                    target = rule.slot or slot.name
                    events.extend(
                        self._store_fill(session, form, slot, rule, target, values, now)
                    )
                elif rule.from_intents and requested is not None and slot.name == requested.name:
                    if nlu.intent not in rule.from_intents:
                        continue
                    if rule.confirm_current:
                        current = session.slots.get(slot.name)
                        if not current:
                            continue
                        events.append(self._set_slot(session, slot.name, current, now))
                    else:
                        events.append(
                            self._set_slot(session, slot.name, rule.value, now)
                        )
                    session.form_filled.add(slot.name)
        return events

    # ------------------------------------------------------------------
    # internals

    def _store_fill(self, session, form, slot, rule, target, values, now):
        events = []
        if rule.mode == "append" or slot.is_list:
            current = list(session.slots.get(target) or [])
            added = [v for v in values if v not in current]
            if added:
                events.append(self._set_slot(session, target, current + added, now))
        else:
            events.append(self._set_slot(session, target, values[0], now))
        if rule.exclusive_with:
            other = [
                v for v in (session.slots.get(rule.exclusive_with) or [])
                if v not in values
            ]
            if other != list(session.slots.get(rule.exclusive_with) or []):
                events.append(self._set_slot(session, rule.exclusive_with, other, now))
        session.form_filled.add(slot.name)
        return events

    def _set_slot(self, session: Session, name: str, value, now: datetime) -> Event:
        session.slots[name] = value
        return session.append_event(SLOT_SET, {"name": name, "value": value}, now)

    def _rule_matches(self, rule: Rule, session: Session, nlu: NluResult) -> bool:
        if rule.when_intent != nlu.intent:
            return False
        if rule.when_form == NO_FORM:
            if session.active_form is not None:
                return False
        elif rule.when_form is not None and session.active_form != rule.when_form:
            return False
        if rule.when_slots:
            for name, expectation in rule.when_slots.items():
                value = session.slots.get(name)
                if expectation == "*":
                    if not value:
                        return False
                elif expectation is None:
                    if value:
                        return False
                elif value != expectation:
                    return False
        return True

    def _next_slot(self, session: Session, form: Form) -> FormSlot | None:
        for slot in form.slots:
            if slot.name not in session.form_filled:
                return slot
        return None

    def _prompt_action(self, session: Session, form: Form, slot: FormSlot) -> Action:
        template = slot.prompt
        bindings: dict = {}
        current = session.slots.get(slot.name)
        if slot.confirm_prompt and current:
            template = slot.confirm_prompt
            bindings = {
                "value": ", ".join(current) if isinstance(current, list) else current
            }
        return Action.say(template, bindings, skill=form.skill)

    def _render(
        self, session: Session, template: str,
        bindings: dict | None = None, skill: str | None = None,
    ) -> Response:
        try:
            return self.templates.render(
                template, session.template_uses, bindings, skill=skill
            )
        except TemplateError:
            logger.exception("template render failed: %s", template)
            return Response(
                payload=Text("Sorry, something went wrong on my end."),
                template_id=APOLOGY_TEMPLATE,
                skill="core",
            )

    def _execute(
        self, session: Session, nlu: NluResult, actions: list[Action], now: datetime
    ) -> list[Response]:
        responses: list[Response] = []
        for action in actions:
            if action.kind == "say":
                responses.append(
                    self._render(session, action.template, action.bindings, action.skill)
                )
            elif action.kind == "set_slot":
                self._set_slot(session, action.slot, action.value, now)
            elif action.kind == "deactivate_form":
                if session.active_form is not None:
                    session.append_event(
                        FORM_DEACTIVATED, {"name": session.active_form}, now
                    )
                    session.active_form = None
                    session.form_filled = set()
            elif action.kind == "activate_form":
                responses.extend(self._activate_form(session, action.form, nlu, now))
            elif action.kind == "invoke_skill":
                intent = OUT_OF_SCOPE if action.as_fallback else nlu.intent
                trigger = "fallback" if action.as_fallback else "rule"
                responses.extend(
                    self._invoke(session, nlu, action.skill, intent, trigger, now)
                )
        return responses

    def _invoke(
        self, session: Session, nlu: NluResult,
        skill: str, intent: str, trigger: str, now: datetime,
    ) -> list[Response]:
        session.append_event(SKILL_INVOKED, {"name": skill}, now)
        try:
            return list(self.skill_executor(skill, session, nlu, intent, trigger, now))
        except Exception as exc:  # skill failure must not kill the session
            logger.exception("skill %r failed", skill)
            session.append_event(
                ERROR_EVENT, {"source": skill, "message": str(exc)}, now
            )
            return [self._render(session, APOLOGY_TEMPLATE, skill="core")]

    def _activate_form(
        self, session: Session, form_name: str, nlu: NluResult, now: datetime
    ) -> list[Response]:
        form = self.forms[form_name]
        if session.active_form is not None and session.active_form != form_name:
            session.append_event(FORM_DEACTIVATED, {"name": session.active_form}, now)
        session.active_form = form_name
        session.form_filled = set()
        session.append_event(FORM_ACTIVATED, {"name": form_name}, now)

        # Prefill from this turn's entities before prompting anything.
        self.fill_slots(session, nlu, now)
        if form.activation_hook is not None:
            for name, value in form.activation_hook(session, nlu).items():
                self._set_slot(session, name, value, now)
                session.form_filled.add(name)

        pending = self._next_slot(session, form)
        if pending is None:
            session.append_event(FORM_DEACTIVATED, {"name": form_name}, now)
            session.active_form = None
            session.form_filled = set()
            return self._execute(session, nlu, [form.on_complete], now)
        prompt = self._prompt_action(session, form, pending)
        return [self._render(session, prompt.template, prompt.bindings, prompt.skill)]

    def _log(
        self, session: Session, now: datetime, direction: str, text: str,
        intent: str | None = None, skill: str | None = None,
    ) -> None:
        if self.on_record is None:
            return
        record = LogRecord(
            session_id=session.session_id,
            turn=session.turn_count,
            seq=session.next_seq(),
            timestamp=now,
            direction=direction,
            text=text,
            intent=intent,
            skill=skill,
            channel_kind=session.channel.kind,
        )
        try:
            self.on_record(record)
        except Exception:
            logger.exception("log record hook failed")
