"""Intent classification and entity extraction, checked against naive oracles."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from confbot.nlu import (
    Gazetteer,
    IntentSpec,
    NluError,
    OUT_OF_SCOPE,
    classify,
    compile_model,
    extract_entities,
    tokenize,
)

from .oracles import naive_classify, naive_tokens


# ----------------------------------------------------------------------
# tokenize


def test_tokenize_strips_punctuation():
    assert tokenize("Who are you?") == ["who", "are", "you"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_removes_apostrophes():
    assert tokenize("the conference's schedule") == ["the", "conferences", "schedule"]


def test_tokenize_question_from_catalog():
    assert tokenize("Do you know of any good Indian restaurants?") == [
        "do", "you", "know", "of", "any", "good", "indian", "restaurants",
    ]


@given(st.text(max_size=80))
@settings(max_examples=200, deadline=None)
def test_tokenize_matches_naive_walker(text):
    assert tokenize(text) == naive_tokens(text)


# ----------------------------------------------------------------------
# compile_model


def _specs():
    return [
        IntentSpec(name="greet", examples=("hi", "hello there")),
        IntentSpec(name="bye", examples=("goodbye", "see you")),
    ]


def test_compile_two_intents_one_gazetteer():
    gaz = Gazetteer(entity_type="cuisine", entries={"indian": "indian"})
    model = compile_model(_specs(), [gaz])
    assert model.intent_names == ["greet", "bye"]


def test_compile_rejects_duplicate_intent():
    specs = _specs() + [IntentSpec(name="greet", examples=("yo",))]
    with pytest.raises(NluError, match="duplicate intent"):
        compile_model(specs)


def test_compile_rejects_reserved_name():
    with pytest.raises(NluError, match="reserved"):
        compile_model([IntentSpec(name=OUT_OF_SCOPE, examples=("x",))])


def test_compile_rejects_empty_spec_list():
    with pytest.raises(NluError, match="empty"):
        compile_model([])


def test_compile_rejects_spec_without_training_data():
    with pytest.raises(NluError, match="no examples"):
        compile_model([IntentSpec(name="hollow")])


def test_compile_rejects_cross_intent_duplicate_example():
    specs = [
        IntentSpec(name="a", examples=("hello there",)),
        IntentSpec(name="b", examples=("there hello",)),  # same token set
    ]
    with pytest.raises(NluError, match="duplicates"):
        compile_model(specs)


def test_compile_rejects_duplicate_gazetteer_type():
    gazetteers = [
        Gazetteer(entity_type="cuisine", entries={"indian": "indian"}),
        Gazetteer(entity_type="cuisine", entries={"thai": "thai"}),
    ]
    with pytest.raises(NluError, match="duplicate gazetteer"):
        compile_model(_specs(), gazetteers)


# ----------------------------------------------------------------------
# classify


def test_exact_example_scores_one(model):
    result = classify(model, "hello there")
    assert result.intent == "greet"
    assert result.confidence == 1.0
    assert not result.is_fallback


def test_empty_text_falls_back(model):
    result = classify(model, "")
    assert result.intent == OUT_OF_SCOPE
    assert result.confidence == 0.0
    assert result.is_fallback


def test_keynote_question_classifies(model):
    result = classify(model, "Who are the conference's keynote speakers?")
    assert result.intent == "ask_keynotes"


def test_pattern_forces_full_confidence():
    specs = [
        IntentSpec(name="greet", examples=("hi",)),
        IntentSpec(name="order", examples=("order food",), patterns=("i want *",)),
    ]
    model = compile_model(specs)
    result = classify(model, "I want seventeen pancakes")
    assert result.intent == "order"
    assert result.confidence == 1.0


def test_every_training_example_self_classifies(model, corpus_doc):
    for intent in corpus_doc["intents"]:
        for example in intent["examples"]:
            result = classify(model, example)
            assert result.intent == intent["name"], example
            assert result.confidence == 1.0


def test_confidence_bounds_and_determinism(model, corpus_doc):
    rng = random.Random(7)
    pool = [ex for i in corpus_doc["intents"] for ex in i["examples"]]
    words = sorted({w for ex in pool for w in ex.split()})
    for _ in range(200):
        text = " ".join(rng.choices(words + ["zorp", "flib"], k=rng.randint(0, 7)))
        first = classify(model, text)
        second = classify(model, text)
        assert first == second
        assert 0.0 <= first.confidence <= 1.0
        if first.confidence == 0.0:
            assert first.is_fallback


def test_raising_tau_never_unfalls_back(model, corpus_doc):
    rng = random.Random(11)
    pool = [ex for i in corpus_doc["intents"] for ex in i["examples"]]
    words = sorted({w for ex in pool for w in ex.split()})
    for _ in range(200):
        text = " ".join(rng.choices(words, k=rng.randint(1, 6)))
        low = classify(model, text, tau=0.2)
        high = classify(model, text, tau=0.6)
        if low.is_fallback:
            assert high.is_fallback


def test_classify_agrees_with_bruteforce_oracle(model, corpus_doc):
    """500 random utterances: exact agreement on intent and confidence."""
    rng = random.Random(42)
    pool = [ex for i in corpus_doc["intents"] for ex in i["examples"]]
    words = sorted({w for ex in pool for w in ex.split()})
    extras = ["xqzzy", "blorp", "fjord", "zz", "kapow"]
    for _ in range(500):
        text = " ".join(rng.choices(words + extras, k=rng.randint(0, 8)))
        got = classify(model, text)
        want_intent, want_conf = naive_classify(corpus_doc["intents"], text, model.tau)
        assert got.intent == want_intent, text
        assert got.confidence == want_conf, text


# ----------------------------------------------------------------------
# extract_entities


def test_extracts_cuisine_and_category(model):
    entities = extract_entities(model, "any good Indian restaurants")
    found = {(e.entity_type, e.value) for e in entities}
    assert ("cuisine", "indian") in found
    assert ("category", "restaurant") in found


def test_extract_empty(model):
    assert extract_entities(model, "") == []


def test_longest_match_wins():
    gaz = Gazetteer(
        entity_type="cuisine",
        entries={"indian": "indian", "indian restaurant": "indian restaurant"},
    )
    model = compile_model(_specs(), [gaz])
    entities = extract_entities(model, "a modern indian restaurant downtown")
    assert [e.value for e in entities] == ["indian restaurant"]


def test_equal_span_prefers_first_gazetteer():
    first = Gazetteer(entity_type="first", entries={"indian": "a"})
    second = Gazetteer(entity_type="second", entries={"indian": "b"})
    model = compile_model(_specs(), [first, second])
    entities = extract_entities(model, "indian")
    assert [(e.entity_type, e.value) for e in entities] == [("first", "a")]


def test_entity_spans_sorted_and_disjoint(model, corpus_doc):
    rng = random.Random(3)
    surfaces = []
    for gaz in corpus_doc["gazetteers"]:
        surfaces.extend(gaz["entries"])
    filler = ["the", "a", "good", "zz"]
    for _ in range(300):
        text = " ".join(rng.choices(surfaces + filler, k=rng.randint(0, 6)))
        entities = extract_entities(model, text)
        for left, right in zip(entities, entities[1:]):
            assert left.end <= right.start
        assert all(e.start < e.end for e in entities)
