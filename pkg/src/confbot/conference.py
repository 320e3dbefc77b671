"""Conference programme queries and interest-based session recommendation.

Sessions are matched to elicited interests by keyword-set overlap; title
and abstract tokens are folded into each event's topic set at load time so
free-text interests still land.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path

from .nlu import tokenize
from .responses import ListCard, Response
from .skills import SkillContext, SkillDescriptor
from .templates import TemplateCatalog

__all__ = [
    "EVENT_KINDS",
    "ProgrammeError",
    "ConferenceEvent",
    "InterestProfile",
    "Programme",
    "load_programme",
    "keynotes",
    "next_session",
    "recommend_session",
    "schedule_query",
    "ConferenceSkill",
]

EVENT_KINDS = ("keynote", "tutorial", "workshop", "session", "social")
_RECOMMENDABLE = ("session", "tutorial", "workshop")

CONFERENCE_SKILL = "conference"

SLOT_INTERESTS = "conf_interests"
SLOT_RECOMMENDED = "conf_recommended_ids"
SLOT_LAST = "conf_last_id"

CONFERENCE_INTENTS = frozenset(
    {"ask_keynotes", "ask_next_session", "recommend_session", "ask_schedule"}
)


class ProgrammeError(ValueError):
    """Raised when a programme document violates the schema."""


@dataclass(frozen=True)
class ConferenceEvent:
    id: str
    title: str
    kind: str
    start: datetime
    end: datetime
    room: str
    speakers: tuple[str, ...]
    abstract: str
    topics: frozenset[str]
    # topics plus title/abstract tokens; what interest matching scores against
    match_topics: frozenset[str]


@dataclass
class InterestProfile:
    interests: list[str] = field(default_factory=list)
    recommended_ids: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class Programme:
    events: tuple[ConferenceEvent, ...]  # sorted by start time

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {e.id: e for e in self.events})

    def get(self, event_id: str) -> ConferenceEvent | None:
        return self._by_id.get(event_id)

    def __len__(self) -> int:
        return len(self.events)

    def day_dates(self) -> list[date]:
        seen: list[date] = []
        for event in self.events:
            day = event.start.date()
            if day not in seen:
                seen.append(day)
        return seen


def _parse_instant(raw: str, event_id: str, which: str) -> datetime:
    try:
        value = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ProgrammeError(f"event {event_id!r}: bad {which} instant {raw!r}") from exc
    if value.tzinfo is None:
        raise ProgrammeError(f"event {event_id!r}: {which} must carry a UTC offset")
    return value.astimezone(timezone.utc)


def _parse_event(doc: dict) -> ConferenceEvent:
    event_id = doc.get("id") or "<missing id>"
    for key in ("id", "title", "kind", "start", "end", "room"):
        if key not in doc:
            raise ProgrammeError(f"event {event_id!r}: missing field {key!r}")
    if doc["kind"] not in EVENT_KINDS:
        raise ProgrammeError(f"event {event_id!r}: bad kind {doc['kind']!r}")
    start = _parse_instant(doc["start"], event_id, "start")
    end = _parse_instant(doc["end"], event_id, "end")
    if start >= end:
        raise ProgrammeError(f"event {event_id!r}: start must precede end")
    topics = frozenset(doc.get("topics", ()))
    if not all(t == t.lower() and t for t in topics):
        raise ProgrammeError(f"event {event_id!r}: topics must be lowercase")
    abstract = doc.get("abstract", "")
    match_topics = topics | set(tokenize(doc["title"])) | set(tokenize(abstract))
    return ConferenceEvent(
        id=doc["id"],
        title=doc["title"],
        kind=doc["kind"],
        start=start,
        end=end,
        room=doc["room"],
        speakers=tuple(doc.get("speakers", ())),
        abstract=abstract,
        topics=topics,
        match_topics=frozenset(match_topics),
    )


def load_programme(source: str | Path | dict) -> Programme:
    """Load and validate a programme document, sorted by start time."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if doc.get("schema_version") != 1:
        raise ProgrammeError(f"unsupported schema_version: {doc.get('schema_version')!r}")
    raw_events = doc.get("events", [])
    if not raw_events:
        raise ProgrammeError("empty programme")
    events = [_parse_event(raw) for raw in raw_events]
    seen: set[str] = set()
    for event in events:
        if event.id in seen:
            raise ProgrammeError(f"duplicate event id: {event.id!r}")
        seen.add(event.id)
    events.sort(key=lambda e: (e.start, e.id))
    return Programme(events=tuple(events))


def keynotes(programme: Programme) -> list[ConferenceEvent]:
    """All keynote events in start order."""
    return [e for e in programme.events if e.kind == "keynote"]


def next_session(programme: Programme, now: datetime) -> ConferenceEvent | None:
    """Earliest event starting after ``now``; None once the conference is over."""
    upcoming = [e for e in programme.events if e.start > now]
    if not upcoming:
        return None
    return min(upcoming, key=lambda e: (e.start, e.id))


def _jaccard(a: frozenset[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def recommend_session(
    programme: Programme, profile: InterestProfile, now: datetime
) -> ConferenceEvent | None:
    """Best-scoring future session/tutorial/workshop not yet suggested."""
    interests = set(profile.interests)
    best: tuple | None = None
    for event in programme.events:
        if event.kind not in _RECOMMENDABLE:
            continue
        if event.end <= now:
            continue
        if event.id in profile.recommended_ids:
            continue
        score = _jaccard(event.match_topics, interests)
        if score <= 0.0:
            continue
        key = (-score, event.start, event.id)
        if best is None or key < best[0]:
            best = (key, event)
    return None if best is None else best[1]


def schedule_query(
    programme: Programme,
    day: int | None = None,
    room: str | None = None,
    speaker: str | None = None,
) -> list[ConferenceEvent]:
    """Events matching one filter, in start order; unknown filters match nothing."""
    events = list(programme.events)
    if speaker is not None:
        wanted = speaker.lower()
        return [e for e in events if any(s.lower() == wanted for s in e.speakers)]
    if room is not None:
        wanted = room.lower()
        return [e for e in events if e.room.lower() == wanted]
    if day is not None:
        dates = programme.day_dates()
        if not 1 <= day <= len(dates):
            return []
        target = dates[day - 1]
        return [e for e in events if e.start.date() == target]
    return events


def _fmt_time(instant: datetime) -> str:
    return instant.astimezone(timezone.utc).strftime("%a %H:%M")


class ConferenceSkill:
    """Programme Q&A plus interest-based session suggestions."""

    def __init__(self, programme: Programme, templates: TemplateCatalog):
        self.programme = programme
        self.templates = templates

    def descriptor(self) -> SkillDescriptor:
        return SkillDescriptor(
            name=CONFERENCE_SKILL,
            claimed_intents=CONFERENCE_INTENTS,
            handler=self.handle,
        )

    def handle(self, ctx: SkillContext) -> list[Response]:
        intent = ctx.intent
        if intent == "ask_keynotes":
            return self._keynotes(ctx)
        if intent == "ask_next_session":
            return self._next_session(ctx)
        if intent == "ask_schedule":
            return self._schedule(ctx)
        # recommend_session, show_next, and interest-form completion
        return self._recommend(ctx)

    # ------------------------------------------------------------------

    def _render(self, ctx: SkillContext, template: str, bindings: dict | None = None):
        return self.templates.render(
            template, ctx.session.template_uses, bindings, skill=CONFERENCE_SKILL
        )

    def _event_line(self, event: ConferenceEvent) -> str:
        speakers = ", ".join(event.speakers) if event.speakers else "-"
        return f"{event.title} — {speakers} — {_fmt_time(event.start)} — {event.room}"

    def _keynotes(self, ctx: SkillContext) -> list[Response]:
        talks = keynotes(self.programme)
        if not talks:
            return [self._render(ctx, "conf_keynotes_empty")]
        card = ListCard(
            title="Keynote speakers",
            entries=tuple(self._event_line(e) for e in talks),
        )
        return [Response(payload=card, template_id="conf_keynotes", skill=CONFERENCE_SKILL)]

    def _next_session(self, ctx: SkillContext) -> list[Response]:
        event = next_session(self.programme, ctx.now)
        if event is None:
            return [self._render(ctx, "conf_over")]
        return [
            self._render(
                ctx,
                "conf_next_session",
                {
                    "title": event.title,
                    "kind": event.kind,
                    "time": _fmt_time(event.start),
                    "room": event.room,
                    "abstract": event.abstract,
                },
            )
        ]

    def _recommend(self, ctx: SkillContext) -> list[Response]:
        session = ctx.session
        profile = InterestProfile(
            interests=list(session.slots.get(SLOT_INTERESTS) or []),
            recommended_ids=set(session.slots.get(SLOT_RECOMMENDED) or []),
        )
        if not profile.interests:
            return [self._render(ctx, "conf_no_match")]
        event = recommend_session(self.programme, profile, ctx.now)
        if event is None:
            return [self._render(ctx, "conf_no_match")]
        recommended = list(session.slots.get(SLOT_RECOMMENDED) or [])
        recommended.append(event.id)
        ctx.set_slot(SLOT_RECOMMENDED, recommended)
        ctx.set_slot(SLOT_LAST, event.id)
        return [
            self._render(
                ctx,
                "conf_recommend",
                {
                    "title": event.title,
                    "kind": event.kind,
                    "time": _fmt_time(event.start),
                    "room": event.room,
                    "abstract": event.abstract,
                },
            )
        ]

    def _schedule(self, ctx: SkillContext) -> list[Response]:
        days = ctx.entity_values("day")
        rooms = ctx.entity_values("room")
        speakers = ctx.entity_values("speaker")
        events = schedule_query(
            self.programme,
            day=int(days[0]) if days else None,
            room=rooms[0] if rooms else None,
            speaker=speakers[0] if speakers else None,
        )
        if not events:
            return [self._render(ctx, "conf_schedule_empty")]
        card = ListCard(
            title="Programme",
            entries=tuple(self._event_line(e) for e in events),
        )
        return [Response(payload=card, template_id="conf_schedule", skill=CONFERENCE_SKILL)]
