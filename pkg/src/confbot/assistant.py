"""Composition root: loads configuration documents and wires the engine,
skills, profile store, and log store into one serving assistant.

Sessions are serialization domains: one lock per session guarantees turns
for a session run one at a time while distinct sessions proceed in
parallel.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from .config import AppConfig
from .conference import ConferenceSkill, load_programme
from .dialogue import (
    Action,
    DialogueConfigError,
    DialogueEngine,
    FillRule,
    Form,
    FormSlot,
    Rule,
    Session,
)
from .logstore import LogRecord, LogStore
from .nlu import Gazetteer, IntentSpec, NluResult, compile_model
from .poi import PoiSkill, load_catalog
from .profiles import (
    CONSENT_DENIED,
    CONSENT_GRANTED,
    CONSENT_UNKNOWN,
    ProfileError,
    ProfileStore,
)
from .responses import ChannelDescriptor, IdentifyRequest, Response
from .skills import CoreSkill, SkillContext, SkillRegistry
from .templates import TemplateCatalog

__all__ = ["CapacityError", "UnknownSessionError", "Assistant", "load_corpus", "load_bot_config"]


class CapacityError(RuntimeError):
    """Raised when the server is at its session limit."""


class UnknownSessionError(KeyError):
    """Raised for operations against a session id that was never opened."""


def load_corpus(path: str | Path) -> tuple[list[IntentSpec], list[Gazetteer]]:
    """Parse the intent corpus document (intents + gazetteers)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != 1:
        raise ValueError(f"unsupported corpus schema: {doc.get('schema_version')!r}")
    specs = [
        IntentSpec(
            name=raw["name"],
            examples=tuple(raw.get("examples", ())),
            patterns=tuple(raw.get("patterns", ())),
            priority=int(raw.get("priority", 0)),
        )
        for raw in doc.get("intents", ())
    ]
    gazetteers = [
        Gazetteer(entity_type=raw["entity_type"], entries=dict(raw.get("entries", {})))
        for raw in doc.get("gazetteers", ())
    ]
    return specs, gazetteers


def _parse_action(raw: dict) -> Action:
    if len(raw) != 1:
        raise DialogueConfigError(f"action must have exactly one key: {raw!r}")
    kind, value = next(iter(raw.items()))
    if kind == "say":
        if isinstance(value, str):
            return Action.say(value)
        return Action.say(value["template"], value.get("bindings"), value.get("skill"))
    if kind == "invoke_skill":
        return Action.invoke_skill(value)
    if kind == "set_slot":
        return Action.set_slot(value["name"], value.get("value"))
    if kind == "activate_form":
        return Action.activate_form(value)
    if kind == "deactivate_form":
        return Action.deactivate_form()
    raise DialogueConfigError(f"unknown action kind: {kind!r}")


def _parse_fill(raw: dict) -> FillRule:
    return FillRule(
        from_entities=tuple(raw.get("entities", ())),
        intent_in=tuple(raw.get("intent_in", ())),
        intent_not=tuple(raw.get("intent_not", ())),
        from_intents=tuple(raw.get("intents", ())),
        value=raw.get("value"),
        slot=raw.get("slot"),
        mode=raw.get("mode", "set"),
        exclusive_with=raw.get("exclusive_with"),
        confirm_current=bool(raw.get("confirm_current", False)),
    )


def load_bot_config(path: str | Path) -> tuple[TemplateCatalog, list[Rule], list[Form]]:
    """Parse the declarative rules/forms/templates document."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != 1:
        raise ValueError(f"unsupported bot config schema: {doc.get('schema_version')!r}")
    templates = TemplateCatalog.from_config(doc.get("templates", {}))
    rules = [
        Rule(
            id=raw["id"],
            when_intent=raw["when_intent"],
            when_form=raw.get("when_form"),
            when_slots=raw.get("when_slots"),
            priority=int(raw.get("priority", 0)),
            actions=tuple(_parse_action(a) for a in raw.get("actions", ())),
        )
        for raw in doc.get("rules", ())
    ]
    forms = [
        Form(
            name=raw["name"],
            skill=raw.get("skill"),
            slots=tuple(
                FormSlot(
                    name=s["name"],
                    prompt=s["prompt"],
                    confirm_prompt=s.get("confirm_prompt"),
                    is_list=bool(s.get("list", False)),
                    fills=tuple(_parse_fill(f) for f in s.get("fills", ())),
                )
                for s in raw.get("slots", ())
            ),
            on_complete=_parse_action(raw["on_complete"]),
        )
        for raw in doc.get("forms", ())
    ]
    return templates, rules, forms


class Assistant:
    """One booted deployment: immutable registries plus live sessions."""

    def __init__(self, config: AppConfig):
        self.config = config
        specs, gazetteers = load_corpus(config.corpus_path)
        self.model = compile_model(specs, gazetteers, tau=config.tau)
        self.templates, rules, forms = load_bot_config(config.bot_path)
        self.catalog = load_catalog(config.poi_catalog_path)
        self.programme = load_programme(config.programme_path)
        self.logstore = LogStore(config.log_dir)
        self.profiles = ProfileStore(config.log_dir)

        core = CoreSkill(self.templates)
        self.poi_skill = PoiSkill(
            self.catalog, self.templates, map_url_template=config.map_url_template
        )
        conference = ConferenceSkill(self.programme, self.templates)
        self.registry = (
            SkillRegistry()
            .register(core.descriptor())
            .register(self.poi_skill.descriptor())
            .register(conference.descriptor())
            .freeze()
        )

        forms = [
            form if form.name != "poi_prefs"
            else Form(
                name=form.name,
                slots=form.slots,
                on_complete=form.on_complete,
                skill=form.skill,
                activation_hook=self.poi_skill.activation_prefill,
            )
            for form in forms
        ]
        self.engine = DialogueEngine(
            model=self.model,
            rules=rules,
            forms=forms,
            templates=self.templates,
            skill_executor=self._execute_skill,
            skill_names=self.registry.names(),
            on_record=self.logstore.append,
        )

        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global_lock = threading.Lock()

    # ------------------------------------------------------------------
    # skill dispatch

    def _build_context(
        self, session: Session, nlu: NluResult, intent: str, trigger: str, now: datetime
    ) -> SkillContext:
        profile = self.profiles.get(session.user_id)
        display_name = None
        if profile is not None and profile.consent == CONSENT_GRANTED:
            display_name = profile.display_name
        return SkillContext(
            session=session,
            nlu=nlu,
            intent=intent,
            now=now,
            trigger=trigger,
            profile=profile,
            display_name=display_name,
        )

    def _execute_skill(
        self,
        name: str,
        session: Session,
        nlu: NluResult,
        intent: str,
        trigger: str,
        now: datetime,
    ) -> list[Response]:
        descriptor = self.registry.get(name)
        ctx = self._build_context(session, nlu, intent, trigger, now)
        return descriptor.handler(ctx)

    # ------------------------------------------------------------------
    # session lifecycle

    def open_session(self, channel: ChannelDescriptor) -> Session:
        with self._global_lock:
            if len(self._sessions) >= self.config.capacity:
                raise CapacityError(
                    f"session capacity {self.config.capacity} reached; retry later"
                )
            session = self.engine.new_session(channel)
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
            return session

    def get_session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(session_id)
        return session

    def _session_lock(self, session_id: str) -> threading.Lock:
        lock = self._locks.get(session_id)
        if lock is None:
            raise UnknownSessionError(session_id)
        return lock

    def session_count(self) -> int:
        with self._global_lock:
            return len(self._sessions)

    def reset_session(self, session_id: str) -> Session:
        session = self.get_session(session_id)
        with self._session_lock(session_id):
            return self.engine.reset_session(session)

    # ------------------------------------------------------------------
    # conversation entry points

    def handle_text(
        self, session_id: str, text: str, now: datetime | None = None
    ) -> list[Response]:
        session = self.get_session(session_id)
        now = now or datetime.now(timezone.utc)
        with self._session_lock(session_id):
            responses = self.engine.handle_message(session, text, now)
            self._sync_memory(session, now)
            return responses

    def handle_identify(
        self, session_id: str, token: str, now: datetime | None = None
    ) -> list[Response]:
        """Bind the profile owning the token; ask consent when unknown."""
        session = self.get_session(session_id)
        now = now or datetime.now(timezone.utc)
        with self._session_lock(session_id):
            profile = self.profiles.identify(token)
            if profile is None:
                reason = self.templates.render(
                    "identify_unknown", session.template_uses, skill="core"
                ).text
                responses = [
                    Response(
                        payload=IdentifyRequest(reason=reason),
                        template_id="identify_unknown",
                        skill="core",
                    )
                ]
                return self._emit(session, responses, now)

            session.user_id = profile.user_id
            self.profiles.bind_session(session.session_id, profile.user_id, now)

            if profile.consent == CONSENT_GRANTED:
                responses = self._personalized_greeting(session, profile)
                self._seed_from_memory(session, profile, now)
                self.profiles.touch_last_seen(profile.user_id, now)
            elif profile.consent == CONSENT_UNKNOWN and not session.consent_requested:
                session.consent_requested = True
                responses = [
                    self.templates.render(
                        "consent_request", session.template_uses, skill="core"
                    )
                ]
            else:
                # Denied, or consent already pending: plain greeting, no memory.
                responses = [
                    self.templates.render("greet", session.template_uses, skill="core")
                ]
            return self._emit(session, responses, now)

    def handle_consent(
        self, session_id: str, decision: str, now: datetime | None = None
    ) -> list[Response]:
        """Record a consent answer for the bound profile.

        Grants require a request issued in this session; a denial is always
        accepted (revocation) for a bound profile.
        """
        session = self.get_session(session_id)
        now = now or datetime.now(timezone.utc)
        with self._session_lock(session_id):
            if session.user_id is None:
                raise ProfileError("no profile bound to this session")
            if decision == CONSENT_GRANTED:
                if not session.consent_requested or session.consent_answered:
                    raise ProfileError("consent was not requested in this session")
            profile = self.profiles.record_consent(session.user_id, decision)
            session.consent_answered = True
            if decision == CONSENT_GRANTED:
                responses = [
                    self.templates.render(
                        "consent_granted", session.template_uses, skill="core"
                    )
                ]
                self._seed_from_memory(session, profile, now)
                self.profiles.touch_last_seen(profile.user_id, now)
            else:
                responses = [
                    self.templates.render(
                        "consent_denied", session.template_uses, skill="core"
                    )
                ]
            return self._emit(session, responses, now)

    # ------------------------------------------------------------------
    # personalization plumbing

    def _personalized_greeting(self, session: Session, profile) -> list[Response]:
        if profile.display_name:
            return [
                self.templates.render(
                    "greet_personal",
                    session.template_uses,
                    {"name": profile.display_name},
                    skill="core",
                )
            ]
        return [self.templates.render("greet", session.template_uses, skill="core")]

    def _seed_from_memory(self, session: Session, profile, now: datetime) -> None:
        if profile.consent != CONSENT_GRANTED:
            return
        if profile.memory.interests and not session.slots.get("conf_interests"):
            session.slots["conf_interests"] = list(profile.memory.interests)
        if profile.memory.accepted_poi_ids:
            rejected = list(session.slots.get("poi_rejected_ids") or [])
            for item_id in profile.memory.accepted_poi_ids:
                if item_id not in rejected:
                    rejected.append(item_id)
            session.slots["poi_rejected_ids"] = rejected

    def _sync_memory(self, session: Session, now: datetime) -> None:
        if session.user_id is None:
            return
        profile = self.profiles.get(session.user_id)
        if profile is None or profile.consent != CONSENT_GRANTED:
            return
        accepted = session.slots.get("poi_accepted_id")
        if accepted and accepted not in profile.memory.accepted_poi_ids:
            self.profiles.remember_poi(session.user_id, accepted)
        interests = session.slots.get("conf_interests")
        if interests and list(interests) != profile.memory.interests:
            self.profiles.remember_interests(session.user_id, list(interests))

    def _emit(
        self, session: Session, responses: list[Response], now: datetime
    ) -> list[Response]:
        """Record bot responses produced outside a user turn."""
        for response in responses:
            session.append_event(
                "bot_uttered",
                {
                    "text": response.text,
                    "template_id": response.template_id,
                    "skill": response.skill,
                },
                now,
            )
            record = LogRecord(
                session_id=session.session_id,
                turn=session.turn_count,
                seq=session.next_seq(),
                timestamp=now,
                direction="bot",
                text=response.text,
                skill=response.skill,
                channel_kind=session.channel.kind,
            )
            try:
                self.logstore.append(record)
            except Exception:
                pass
        return responses

    # ------------------------------------------------------------------
    # admin surface

    def transcript(self, session_id: str) -> list[LogRecord]:
        self.get_session(session_id)
        return self.logstore.records(session_id)

    def health(self) -> dict:
        from . import __version__

        status = "ok" if self.logstore.last_error is None else "degraded"
        doc = {"status": status, "version": __version__}
        if self.logstore.last_error is not None:
            doc["log_error"] = self.logstore.last_error
        return doc
