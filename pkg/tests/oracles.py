"""Independent brute-force oracles used by the test suites.

These deliberately reimplement the contracts naively (regex-free token
splitting, all-pairs scoring, filter-then-sort) so agreement with the
production code is a meaningful check, not a tautology.
"""

from __future__ import annotations


def naive_tokens(text: str) -> list[str]:
    """Character-walk tokenizer: keep alphanumerics, drop apostrophes."""
    out: list[str] = []
    word: list[str] = []
    for ch in text.lower():
        if ch in ("'", "’"):
            continue
        if ch.isalnum() and ch != "_":
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


def naive_jaccard(a: set[str], b: set[str]) -> float:
    if not a or not b:
        return 0.0
    inter = len([t for t in a if t in b])
    union = len(a | b)
    return inter / union


def naive_classify(
    intents: list[dict], text: str, tau: float
) -> tuple[str, float]:
    """All-pairs scorer over raw intent dicts: returns (intent, confidence).

    ``intents`` entries: {"name", "examples", "priority"} (patterns ignored;
    the corpus under test ships none).
    """
    tokens = set(naive_tokens(text))
    scored = []
    for intent in intents:
        best = 0.0
        for example in intent.get("examples", ()):
            best = max(best, naive_jaccard(tokens, set(naive_tokens(example))))
        scored.append((best, intent.get("priority", 0), intent["name"]))
    scored.sort(key=lambda s: (-s[0], -s[1], s[2]))
    score, _prio, name = scored[0]
    if score < tau or score == 0.0:
        return "out_of_scope", score
    return name, score


def naive_poi_recommend(items: list[dict], prefs: dict) -> str | None:
    """Filter-then-sort over plain dicts; returns the winning item id."""
    liked = set(prefs.get("liked", ()))
    disliked = set(prefs.get("disliked", ()))
    rejected = set(prefs.get("rejected_ids", ()))
    survivors = []
    for item in items:
        if item["category"] != prefs["category"]:
            continue
        keywords = set(item["keywords"])
        if liked and not (keywords & liked):
            continue
        if keywords & disliked:
            continue
        if item["id"] in rejected:
            continue
        survivors.append(item)
    survivors.sort(key=lambda i: (-i["rating"], -i["review_count"], i["name"]))
    return survivors[0]["id"] if survivors else None


def naive_session_recommend(
    events: list[dict], interests: list[str], excluded: set[str], now
) -> str | None:
    """Score every candidate event; returns the winning event id.

    ``events`` entries carry precomputed ``match_topics`` sets plus
    start/end datetimes and kind.
    """
    wanted = set(interests)
    scored = []
    for event in events:
        if event["kind"] not in ("session", "tutorial", "workshop"):
            continue
        if event["end"] <= now:
            continue
        if event["id"] in excluded:
            continue
        score = naive_jaccard(set(event["match_topics"]), wanted)
        if score > 0.0:
            scored.append((-score, event["start"], event["id"]))
    if not scored:
        return None
    scored.sort()
    return scored[0][2]


def naive_best_transport(options: list[dict], mode: str | None) -> dict | None:
    """Min-duration scan with the documented walk < bus < taxi tie order."""
    if not options:
        return None
    if mode is not None:
        for option in options:
            if option["mode"] == mode:
                return option
    order = {"walk": 0, "bus": 1, "taxi": 2}
    best = options[0]
    for option in options[1:]:
        key = (option["duration_minutes"], order[option["mode"]])
        if key < (best["duration_minutes"], order[best["mode"]]):
            best = option
    return best
