"""Response payload variants, channel descriptors, and text flattening.

Skills emit rich payloads; channels that cannot show them get a lossy but
deterministic text rendering.  The flattening rules are fixed bit-exact so
plain-text transcripts are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

__all__ = [
    "Text",
    "ListCard",
    "MapCard",
    "ItemCard",
    "QuickReplies",
    "IdentifyRequest",
    "Payload",
    "Response",
    "ChannelDescriptor",
    "make_channel",
    "flatten",
    "payload_to_wire",
]


@dataclass(frozen=True)
class Text:
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("Text payload must be non-empty")


@dataclass(frozen=True)
class ListCard:
    title: str
    entries: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))


@dataclass(frozen=True)
class MapCard:
    name: str
    lat: float
    lon: float
    map_url: str
    caption: str = ""

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class ItemCard:
    title: str
    subtitle: str
    rating: float
    price_glyphs: str
    body: str


@dataclass(frozen=True)
class QuickReplies:
    prompt: str
    options: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "options", tuple(self.options))
        if not 1 <= len(self.options) <= 6:
            raise ValueError("QuickReplies must carry 1-6 options")


@dataclass(frozen=True)
class IdentifyRequest:
    reason: str


Payload = Union[Text, ListCard, MapCard, ItemCard, QuickReplies, IdentifyRequest]


@dataclass(frozen=True)
class Response:
    """One bot output: a payload plus attribution metadata."""

    payload: Payload
    template_id: str | None = None
    skill: str | None = None

    @property
    def text(self) -> str:
        return flatten(self.payload)


def flatten(payload: Payload) -> str:
    """Deterministic single-string rendering, total over all variants."""
    if isinstance(payload, Text):
        return payload.text
    if isinstance(payload, ItemCard):
        return (
            f"{payload.title} — {payload.rating:.1f}★ — "
            f"{payload.price_glyphs} — {payload.body}"
        )
    if isinstance(payload, MapCard):
        return f"{payload.name} at {payload.lat},{payload.lon}: {payload.caption}"
    if isinstance(payload, ListCard):
        lines = [payload.title]
        lines.extend(f"{i}. {entry}" for i, entry in enumerate(payload.entries, 1))
        return "\n".join(lines)
    if isinstance(payload, QuickReplies):
        return f"{payload.prompt} [{' | '.join(payload.options)}]"
    if isinstance(payload, IdentifyRequest):
        return payload.reason
    raise TypeError(f"unknown payload type: {type(payload).__name__}")


def payload_to_wire(payload: Payload) -> dict:
    """JSON-safe encoding used on the wire and in the REST body."""
    if isinstance(payload, Text):
        return {"kind": "text", "text": payload.text}
    if isinstance(payload, ItemCard):
        return {
            "kind": "item_card",
            "title": payload.title,
            "subtitle": payload.subtitle,
            "rating": payload.rating,
            "price": payload.price_glyphs,
            "body": payload.body,
        }
    if isinstance(payload, MapCard):
        return {
            "kind": "map_card",
            "name": payload.name,
            "lat": payload.lat,
            "lon": payload.lon,
            "map_url": payload.map_url,
            "caption": payload.caption,
        }
    if isinstance(payload, ListCard):
        return {
            "kind": "list_card",
            "title": payload.title,
            "entries": list(payload.entries),
        }
    if isinstance(payload, QuickReplies):
        return {
            "kind": "quick_replies",
            "prompt": payload.prompt,
            "options": list(payload.options),
        }
    if isinstance(payload, IdentifyRequest):
        return {"kind": "identify_request", "reason": payload.reason}
    raise TypeError(f"unknown payload type: {type(payload).__name__}")


CHANNEL_KINDS = ("webchat", "robot", "screen", "rest")


@dataclass(frozen=True)
class ChannelDescriptor:
    """Per-client capability flags controlling response rendering."""

    kind: str
    rich_cards: bool
    display_only: bool
    text: bool = True


_CHANNEL_DEFAULTS = {
    "webchat": {"rich_cards": True, "display_only": False},
    "robot": {"rich_cards": False, "display_only": False},
    "screen": {"rich_cards": True, "display_only": True},
    "rest": {"rich_cards": False, "display_only": False},
}


def make_channel(kind: str, rich_cards: bool | None = None) -> ChannelDescriptor:
    """Build a descriptor with per-kind defaults; screen is always display-only."""
    if kind not in _CHANNEL_DEFAULTS:
        raise ValueError(f"unknown channel kind: {kind!r}")
    defaults = _CHANNEL_DEFAULTS[kind]
    rich = defaults["rich_cards"] if rich_cards is None else rich_cards
    display_only = defaults["display_only"]
    if kind == "screen":
        display_only = True
    return ChannelDescriptor(kind=kind, rich_cards=rich, display_only=display_only)
