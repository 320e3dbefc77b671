"""POI catalog validation, ranking against the brute-force oracle, and
preference bookkeeping invariants."""

from __future__ import annotations

import copy
import json
import random

import pytest

from confbot.config import data_path
from confbot.poi import (
    CatalogError,
    PoiPreferences,
    best_transport,
    infer_category,
    load_catalog,
    price_glyphs,
    recommend,
)

from .oracles import naive_best_transport, naive_poi_recommend

ABC_FIXTURE = {
    "schema_version": 1,
    "items": [
        {
            "id": "a", "name": "A", "category": "restaurant",
            "keywords": ["indian"], "price_level": 2, "rating": 4.5,
            "review_count": 120, "address": "x", "coordinates": [0, 0],
            "transport_options": [], "description": "",
        },
        {
            "id": "b", "name": "B", "category": "restaurant",
            "keywords": ["italian"], "price_level": 2, "rating": 4.8,
            "review_count": 300, "address": "x", "coordinates": [0, 0],
            "transport_options": [], "description": "",
        },
        {
            "id": "c", "name": "C", "category": "restaurant",
            "keywords": ["indian"], "price_level": 2, "rating": 4.2,
            "review_count": 80, "address": "x", "coordinates": [0, 0],
            "transport_options": [], "description": "",
        },
    ],
}


# ----------------------------------------------------------------------
# load_catalog


def test_load_small_fixture():
    catalog = load_catalog(data_path("poi_small.json"))
    assert len(catalog) == 5


def test_load_demo_fixture():
    catalog = load_catalog(data_path("poi_demo.json"))
    assert len(catalog) == 50


def test_rating_out_of_range_names_field():
    doc = copy.deepcopy(ABC_FIXTURE)
    doc["items"][0]["rating"] = 6.2
    with pytest.raises(CatalogError, match="rating"):
        load_catalog(doc)


def test_duplicate_id_rejected():
    doc = copy.deepcopy(ABC_FIXTURE)
    doc["items"][1]["id"] = "a"
    with pytest.raises(CatalogError, match="duplicate item id"):
        load_catalog(doc)


def test_duplicate_name_rejected():
    doc = copy.deepcopy(ABC_FIXTURE)
    doc["items"][1]["name"] = "A"
    with pytest.raises(CatalogError, match="duplicate item name"):
        load_catalog(doc)


def test_empty_catalog_rejected():
    with pytest.raises(CatalogError, match="empty"):
        load_catalog({"schema_version": 1, "items": []})


def test_bad_schema_version_rejected():
    with pytest.raises(CatalogError, match="schema_version"):
        load_catalog({"schema_version": 2, "items": [{}]})


# ----------------------------------------------------------------------
# recommend: frozen expectations computed by hand on the ABC fixture


def test_liked_indian_picks_highest_rated_indian():
    catalog = load_catalog(ABC_FIXTURE)
    prefs = PoiPreferences(category="restaurant", liked=["indian"])
    assert recommend(catalog, prefs).id == "a"


def test_rejected_best_falls_to_next():
    catalog = load_catalog(ABC_FIXTURE)
    prefs = PoiPreferences(category="restaurant", liked=["indian"], rejected_ids={"a"})
    assert recommend(catalog, prefs).id == "c"


def test_no_matching_keyword_yields_none():
    catalog = load_catalog(ABC_FIXTURE)
    prefs = PoiPreferences(category="restaurant", liked=["sushi"])
    assert recommend(catalog, prefs) is None


# ----------------------------------------------------------------------
# recommend: randomized oracle agreement


def _random_catalog(rng: random.Random, max_items: int = 50) -> dict:
    keyword_pool = ["indian", "italian", "sushi", "view", "cheap", "quiet",
                    "running", "art", "live", "cozy", "spicy", "outdoor"]
    categories = ["restaurant", "bar", "cafe", "museum", "park", "activity"]
    n = rng.randint(1, max_items)
    items = []
    for i in range(n):
        items.append({
            "id": f"i{i}",
            "name": f"Place {i:03d}",
            "category": rng.choice(categories),
            "keywords": sorted(rng.sample(keyword_pool, k=rng.randint(0, 4))),
            "price_level": rng.randint(1, 4),
            "rating": round(rng.uniform(0, 5), 1),
            "review_count": rng.randint(0, 500),
            "address": "x",
            "coordinates": [0, 0],
            "transport_options": [],
            "description": "",
        })
    return {"schema_version": 1, "items": items}


def _random_prefs(rng: random.Random, doc: dict) -> dict:
    keyword_pool = ["indian", "italian", "sushi", "view", "cheap", "quiet",
                    "running", "art", "live", "cozy", "spicy", "outdoor"]
    ids = [i["id"] for i in doc["items"]]
    return {
        "category": rng.choice(["restaurant", "bar", "cafe", "museum", "park", "activity"]),
        "liked": sorted(rng.sample(keyword_pool, k=rng.randint(0, 3))),
        "disliked": sorted(rng.sample(keyword_pool, k=rng.randint(0, 3))),
        "rejected_ids": set(rng.sample(ids, k=min(len(ids), rng.randint(0, 5)))),
    }


def test_recommend_matches_oracle_on_200_instances():
    rng = random.Random(2024)
    for _ in range(200):
        doc = _random_catalog(rng)
        prefs_doc = _random_prefs(rng, doc)
        catalog = load_catalog(doc)
        prefs = PoiPreferences(
            category=prefs_doc["category"],
            liked=list(prefs_doc["liked"]),
            disliked=list(prefs_doc["disliked"]),
            rejected_ids=set(prefs_doc["rejected_ids"]),
        )
        got = recommend(catalog, prefs)
        want = naive_poi_recommend(doc["items"], prefs_doc)
        assert (got.id if got else None) == want


def test_never_returns_rejected_or_disliked_across_update_sequences():
    """1,000 random preference-update walks: outputs always admissible."""
    rng = random.Random(777)
    keyword_pool = ["indian", "italian", "sushi", "view", "cheap", "quiet",
                    "running", "art", "live", "cozy", "spicy", "outdoor"]
    for _ in range(1000):
        doc = _random_catalog(rng, max_items=20)
        catalog = load_catalog(doc)
        prefs = PoiPreferences(category=rng.choice(
            ["restaurant", "bar", "cafe", "museum", "park", "activity"]))
        for _step in range(rng.randint(1, 6)):
            move = rng.random()
            if move < 0.4:
                prefs.like(rng.choice(keyword_pool))
            elif move < 0.8:
                prefs.dislike(rng.choice(keyword_pool))
            else:
                item = recommend(catalog, prefs)
                if item is not None:
                    prefs.rejected_ids.add(item.id)
            assert not (set(prefs.liked) & set(prefs.disliked))
            item = recommend(catalog, prefs)
            if item is not None:
                assert item.id not in prefs.rejected_ids
                assert not (item.keywords & set(prefs.disliked))


def test_disliking_never_enlarges_candidate_set():
    """With liked held fixed, widening the disliked set only removes candidates."""
    rng = random.Random(31337)
    for _ in range(100):
        doc = _random_catalog(rng, max_items=25)
        prefs_doc = _random_prefs(rng, doc)
        liked = [k for k in prefs_doc["liked"] if k != "view"]

        def survivors(disliked):
            return {
                i["id"] for i in doc["items"]
                if naive_poi_recommend([i], {
                    "category": prefs_doc["category"], "liked": liked,
                    "disliked": disliked, "rejected_ids": set(),
                }) is not None
            }

        before = survivors(list(prefs_doc["disliked"]))
        after = survivors(list(prefs_doc["disliked"]) + ["view"])
        assert after <= before


def test_later_statement_wins_disjointness():
    prefs = PoiPreferences(category="restaurant")
    prefs.like("indian")
    prefs.dislike("indian")
    assert prefs.liked == [] and prefs.disliked == ["indian"]
    prefs.like("indian")
    assert prefs.liked == ["indian"] and prefs.disliked == []


# ----------------------------------------------------------------------
# transport and small helpers


def test_transport_min_duration_wins():
    catalog = load_catalog(data_path("poi_small.json"))
    item = catalog.get("bella-tandoori")
    assert best_transport(item).mode == "bus"  # 7 min beats walk 12 / taxi 9


def test_transport_explicit_mode():
    catalog = load_catalog(data_path("poi_small.json"))
    item = catalog.get("bella-tandoori")
    assert best_transport(item, "walk").duration_minutes == 12


def test_transport_matches_oracle_over_fixture():
    catalog = load_catalog(data_path("poi_small.json"))
    raw = json.loads(open(data_path("poi_small.json")).read())
    for raw_item in raw["items"]:
        item = catalog.get(raw_item["id"])
        for mode in (None, "walk", "bus", "taxi"):
            got = best_transport(item, mode)
            want = naive_best_transport(raw_item["transport_options"], mode)
            assert (got.duration_minutes if got else None) == (
                want["duration_minutes"] if want else None
            )


def test_transport_tie_prefers_walk():
    doc = copy.deepcopy(ABC_FIXTURE)
    doc["items"][0]["transport_options"] = [
        {"mode": "taxi", "instructions": "t", "duration_minutes": 5},
        {"mode": "walk", "instructions": "w", "duration_minutes": 5},
    ]
    item = load_catalog(doc).get("a")
    assert best_transport(item).mode == "walk"


def test_empty_transport_options():
    item = load_catalog(ABC_FIXTURE).get("a")
    assert best_transport(item) is None


def test_price_glyphs():
    assert price_glyphs(2) == "$$"
    assert price_glyphs(4) == "$$$$"


def test_infer_category_from_keyword():
    catalog = load_catalog(data_path("poi_small.json"))
    assert infer_category(catalog, ["running"]) == "park"
    assert infer_category(catalog, ["nonexistent"]) is None
