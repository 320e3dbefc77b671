"""Point-of-interest catalog, ranking, and the POI recommendation skill.

Recommendation is a pure filter-and-sort: category must match, liked
keywords must intersect when any are set, disliked keywords and already
rejected items are hard filters, and the survivors rank by rating, review
count, then name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dialogue import Session
from .nlu import NluResult
from .responses import ItemCard, MapCard, Response
from .skills import SkillContext, SkillDescriptor
from .templates import TemplateCatalog

__all__ = [
    "CATEGORIES",
    "TRANSPORT_MODES",
    "CatalogError",
    "TransportOption",
    "PoiItem",
    "PoiPreferences",
    "Catalog",
    "load_catalog",
    "recommend",
    "infer_category",
    "best_transport",
    "price_glyphs",
    "PoiSkill",
]

CATEGORIES = ("restaurant", "bar", "cafe", "museum", "park", "activity")
TRANSPORT_MODES = ("walk", "bus", "taxi")
_MODE_ORDER = {mode: i for i, mode in enumerate(TRANSPORT_MODES)}

POI_SKILL = "poi"

# Session slot names owned by this skill.
SLOT_CATEGORY = "poi_category"
SLOT_LIKED = "liked_keywords"
SLOT_DISLIKED = "disliked_keywords"
SLOT_REJECTED = "poi_rejected_ids"
SLOT_ACCEPTED = "poi_accepted_id"
SLOT_LAST = "poi_last_id"

POI_INTENTS = frozenset(
    {
        "request_poi",
        "inform_preference",
        "inform_dislike",
        "show_next",
        "ask_poi_details",
        "ask_directions",
    }
)


class CatalogError(ValueError):
    """Raised when a catalog document violates the schema."""


@dataclass(frozen=True)
class TransportOption:
    mode: str
    instructions: str
    duration_minutes: int


@dataclass(frozen=True)
class PoiItem:
    id: str
    name: str
    category: str
    keywords: frozenset[str]
    price_level: int
    rating: float
    review_count: int
    address: str
    lat: float
    lon: float
    transport: tuple[TransportOption, ...]
    description: str


@dataclass
class PoiPreferences:
    """Liked/disliked keyword lists plus per-session item bookkeeping."""

    category: str | None = None
    liked: list[str] = field(default_factory=list)
    disliked: list[str] = field(default_factory=list)
    rejected_ids: set[str] = field(default_factory=set)
    accepted_id: str | None = None

    def like(self, keyword: str) -> None:
        if keyword in self.disliked:
            self.disliked.remove(keyword)
        if keyword not in self.liked:
            self.liked.append(keyword)

    def dislike(self, keyword: str) -> None:
        if keyword in self.liked:
            self.liked.remove(keyword)
        if keyword not in self.disliked:
            self.disliked.append(keyword)


@dataclass(frozen=True)
class Catalog:
    items: tuple[PoiItem, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_id", {item.id: item for item in self.items})

    def get(self, item_id: str) -> PoiItem | None:
        return self._by_id.get(item_id)

    def __len__(self) -> int:
        return len(self.items)


def _check(condition: bool, item_id: str, message: str) -> None:
    if not condition:
        raise CatalogError(f"item {item_id!r}: {message}")


def _parse_item(doc: dict) -> PoiItem:
    item_id = doc.get("id") or "<missing id>"
    for key in ("id", "name", "category", "rating", "price_level", "address"):
        _check(key in doc, item_id, f"missing field {key!r}")
    _check(doc["category"] in CATEGORIES, item_id, f"bad category {doc['category']!r}")
    rating = float(doc["rating"])
    _check(0.0 <= rating <= 5.0, item_id, f"rating out of range: {rating}")
    price = int(doc["price_level"])
    _check(1 <= price <= 4, item_id, f"price_level out of range: {price}")
    review_count = int(doc.get("review_count", 0))
    _check(review_count >= 0, item_id, f"negative review_count: {review_count}")
    coords = doc.get("coordinates", [0.0, 0.0])
    lat, lon = float(coords[0]), float(coords[1])
    _check(-90.0 <= lat <= 90.0, item_id, f"latitude out of range: {lat}")
    _check(-180.0 <= lon <= 180.0, item_id, f"longitude out of range: {lon}")
    keywords = frozenset(doc.get("keywords", ()))
    _check(
        all(k == k.lower() and k for k in keywords), item_id, "keywords must be lowercase"
    )
    transport = []
    for opt in doc.get("transport_options", ()):
        _check(opt.get("mode") in TRANSPORT_MODES, item_id, f"bad mode {opt.get('mode')!r}")
        duration = int(opt["duration_minutes"])
        _check(duration > 0, item_id, f"non-positive duration: {duration}")
        transport.append(
            TransportOption(
                mode=opt["mode"],
                instructions=opt.get("instructions", ""),
                duration_minutes=duration,
            )
        )
    return PoiItem(
        id=doc["id"],
        name=doc["name"],
        category=doc["category"],
        keywords=keywords,
        price_level=price,
        rating=rating,
        review_count=review_count,
        address=doc["address"],
        lat=lat,
        lon=lon,
        transport=tuple(transport),
        description=doc.get("description", ""),
    )


def load_catalog(source: str | Path | dict) -> Catalog:
    """Load and validate a catalog document (path or already-parsed dict)."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if doc.get("schema_version") != 1:
        raise CatalogError(f"unsupported schema_version: {doc.get('schema_version')!r}")
    raw_items = doc.get("items", [])
    if not raw_items:
        raise CatalogError("empty catalog")
    items = [_parse_item(raw) for raw in raw_items]
    seen_ids: set[str] = set()
    seen_names: set[str] = set()
    for item in items:
        if item.id in seen_ids:
            raise CatalogError(f"duplicate item id: {item.id!r}")
        seen_ids.add(item.id)
        # Duplicate names would break the ranking's total order.
        if item.name in seen_names:
            raise CatalogError(f"duplicate item name: {item.name!r}")
        seen_names.add(item.name)
    return Catalog(items=tuple(items))


def _rank_key(item: PoiItem) -> tuple:
    return (-item.rating, -item.review_count, item.name)


def _matches(item: PoiItem, prefs: PoiPreferences) -> bool:
    if item.category != prefs.category:
        return False
    if prefs.liked and not (item.keywords & set(prefs.liked)):
        return False
    if item.keywords & set(prefs.disliked):
        return False
    if item.id in prefs.rejected_ids:
        return False
    return True


def recommend(catalog: Catalog, prefs: PoiPreferences) -> PoiItem | None:
    """Top-rated matching item, or None when nothing survives the filters."""
    candidates = [item for item in catalog.items if _matches(item, prefs)]
    if not candidates:
        return None
    return min(candidates, key=_rank_key)


def infer_category(catalog: Catalog, keywords: list[str]) -> str | None:
    """Category of the best-ranked item carrying any of the keywords."""
    wanted = set(keywords)
    carriers = [item for item in catalog.items if item.keywords & wanted]
    if not carriers:
        return None
    return min(carriers, key=_rank_key).category


def best_transport(item: PoiItem, mode: str | None = None) -> TransportOption | None:
    """Requested mode when available, else quickest (ties: walk < bus < taxi)."""
    if not item.transport:
        return None
    if mode is not None:
        for option in item.transport:
            if option.mode == mode:
                return option
    return min(item.transport, key=lambda o: (o.duration_minutes, _MODE_ORDER[o.mode]))


def price_glyphs(price_level: int) -> str:
    return "$" * price_level


class PoiSkill:
    """Preference elicitation, per-turn recommendation, and follow-ups."""

    def __init__(
        self,
        catalog: Catalog,
        templates: TemplateCatalog,
        map_url_template: str = "https://staticmap.openstreetmap.de/staticmap.php?center={lat},{lon}&zoom=16&size=420x260&markers={lat},{lon},red-pushpin",
    ):
        self.catalog = catalog
        self.templates = templates
        self.map_url_template = map_url_template

    def descriptor(self) -> SkillDescriptor:
        return SkillDescriptor(
            name=POI_SKILL, claimed_intents=POI_INTENTS, handler=self.handle
        )

    # ------------------------------------------------------------------

    def activation_prefill(self, session: Session, nlu: NluResult) -> dict:
        """Form hook: resolve a missing category from liked keywords."""
        if session.slots.get(SLOT_CATEGORY):
            return {}
        liked = session.slots.get(SLOT_LIKED) or []
        category = infer_category(self.catalog, list(liked))
        if category is None:
            return {}
        return {SLOT_CATEGORY: category}

    def handle(self, ctx: SkillContext) -> list[Response]:
        intent = ctx.intent
        if intent in ("inform_preference", "inform_dislike"):
            return self._update_preferences(ctx)
        if intent == "show_next" or (
            intent == "deny" and ctx.session.slots.get(SLOT_LAST)
        ):
            return self._next_recommendation(ctx)
        if intent == "affirm":
            return self._accept(ctx)
        if intent == "ask_poi_details":
            return self._details(ctx)
        if intent == "ask_directions":
            return self._directions(ctx)
        # Form completion and any directly routed request land here.
        return self._recommend(ctx)

    # ------------------------------------------------------------------

    def _prefs(self, session: Session) -> PoiPreferences:
        return PoiPreferences(
            category=session.slots.get(SLOT_CATEGORY),
            liked=list(session.slots.get(SLOT_LIKED) or []),
            disliked=list(session.slots.get(SLOT_DISLIKED) or []),
            rejected_ids=set(session.slots.get(SLOT_REJECTED) or []),
            accepted_id=session.slots.get(SLOT_ACCEPTED),
        )

    def _render(self, ctx: SkillContext, template: str, bindings: dict | None = None):
        return self.templates.render(
            template, ctx.session.template_uses, bindings, skill=POI_SKILL
        )

    def _retire_current(self, ctx: SkillContext) -> None:
        """Move the on-the-table item (or a stale acceptance) into rejected."""
        session = ctx.session
        rejected = list(session.slots.get(SLOT_REJECTED) or [])
        last = session.slots.get(SLOT_LAST)
        accepted = session.slots.get(SLOT_ACCEPTED)
        for item_id in (last, accepted):
            if item_id and item_id not in rejected:
                rejected.append(item_id)
        ctx.set_slot(SLOT_REJECTED, rejected)
        ctx.set_slot(SLOT_LAST, None)
        ctx.set_slot(SLOT_ACCEPTED, None)

    def _update_preferences(self, ctx: SkillContext) -> list[Response]:
        session = ctx.session
        prefs = self._prefs(session)
        keywords = ctx.entity_values("cuisine", "keyword")
        for keyword in keywords:
            if ctx.intent == "inform_dislike":
                prefs.dislike(keyword)
            else:
                prefs.like(keyword)
        ctx.set_slot(SLOT_LIKED, prefs.liked)
        ctx.set_slot(SLOT_DISLIKED, prefs.disliked)
        category = ctx.entity_values("category")
        if category:
            ctx.set_slot(SLOT_CATEGORY, category[0])
        if not keywords and not category:
            return [self._render(ctx, "poi_noted")]
        return self._next_recommendation(ctx)

    def _next_recommendation(self, ctx: SkillContext) -> list[Response]:
        self._retire_current(ctx)
        return self._recommend(ctx)

    def _recommend(self, ctx: SkillContext) -> list[Response]:
        session = ctx.session
        prefs = self._prefs(session)
        if prefs.category is None:
            inferred = infer_category(self.catalog, prefs.liked)
            if inferred is None:
                return [self._render(ctx, "poi_ask_category")]
            prefs.category = inferred
            ctx.set_slot(SLOT_CATEGORY, inferred)
        item = recommend(self.catalog, prefs)
        if item is None:
            return [self._render(ctx, "poi_no_match")]
        ctx.set_slot(SLOT_LAST, item.id)
        card = ItemCard(
            title=item.name,
            subtitle=f"{item.category.capitalize()} · {item.address}",
            rating=item.rating,
            price_glyphs=price_glyphs(item.price_level),
            body=item.description,
        )
        return [Response(payload=card, template_id="poi_recommendation", skill=POI_SKILL)]

    def _accept(self, ctx: SkillContext) -> list[Response]:
        session = ctx.session
        last = session.slots.get(SLOT_LAST)
        if not last:
            return [self._render(ctx, "poi_no_accepted")]
        ctx.set_slot(SLOT_ACCEPTED, last)
        item = self.catalog.get(last)
        return [self._render(ctx, "poi_accept_ack", {"name": item.name if item else ""})]

    def _accepted_item(self, ctx: SkillContext) -> PoiItem | None:
        accepted = ctx.session.slots.get(SLOT_ACCEPTED)
        if not accepted:
            return None
        return self.catalog.get(accepted)

    def _details(self, ctx: SkillContext) -> list[Response]:
        item = self._accepted_item(ctx)
        if item is None:
            return [self._render(ctx, "poi_no_accepted")]
        aspects = ctx.entity_values("aspect")
        aspect = aspects[0] if aspects else "description"
        if aspect == "address":
            return [self._render(ctx, "poi_address", {"name": item.name, "address": item.address})]
        if aspect == "price":
            return [
                self._render(
                    ctx,
                    "poi_price",
                    {"name": item.name, "glyphs": price_glyphs(item.price_level),
                     "level": item.price_level},
                )
            ]
        if aspect == "rating":
            return [
                self._render(
                    ctx,
                    "poi_rating",
                    {"name": item.name, "rating": f"{item.rating:.1f}",
                     "count": item.review_count},
                )
            ]
        card = ItemCard(
            title=item.name,
            subtitle=f"{item.category.capitalize()} · {item.address}",
            rating=item.rating,
            price_glyphs=price_glyphs(item.price_level),
            body=item.description,
        )
        return [Response(payload=card, template_id="poi_details_card", skill=POI_SKILL)]

    def _directions(self, ctx: SkillContext) -> list[Response]:
        item = self._accepted_item(ctx)
        if item is None:
            return [self._render(ctx, "poi_no_accepted")]
        modes = ctx.entity_values("mode")
        option = best_transport(item, modes[0] if modes else None)
        if option is None:
            return [self._render(ctx, "poi_no_directions", {"name": item.name})]
        text = self._render(
            ctx,
            "poi_transport",
            {
                "instructions": option.instructions,
                "duration": option.duration_minutes,
                "mode": option.mode,
            },
        )
        map_card = MapCard(
            name=item.name,
            lat=item.lat,
            lon=item.lon,
            map_url=self.map_url_template.format(lat=item.lat, lon=item.lon),
            caption=option.instructions,
        )
        return [
            text,
            Response(payload=map_card, template_id="poi_map", skill=POI_SKILL),
        ]
