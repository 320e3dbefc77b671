"""Append-only log semantics and the two analytics distributions."""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

import pytest

from confbot.logstore import (
    LogRecord,
    LogStore,
    LogStoreError,
    conversation_length_histogram,
    read_log_dir,
    turns_per_skill,
)

T0 = datetime(2026, 6, 15, 9, 0, tzinfo=timezone.utc)


def rec(session, turn, seq, direction, text="x", skill=None, offset=0):
    return LogRecord(
        session_id=session,
        turn=turn,
        seq=seq,
        timestamp=T0 + timedelta(seconds=offset),
        direction=direction,
        text=text,
        skill=skill,
    )


def test_one_turn_two_records(tmp_path):
    store = LogStore(tmp_path)
    store.append(rec("s1", 1, 0, "user", "hi"))
    store.append(rec("s1", 1, 1, "bot", "hello"))
    assert len(store.records("s1")) == 2


def test_duplicate_key_rejected(tmp_path):
    store = LogStore(tmp_path)
    store.append(rec("s1", 1, 0, "user"))
    with pytest.raises(LogStoreError, match="duplicate"):
        store.append(rec("s1", 1, 0, "user"))


def test_reload_is_idempotent(tmp_path):
    store = LogStore(tmp_path)
    for turn in range(1, 4):
        store.append(rec("s1", turn, 0, "user"))
        store.append(rec("s1", turn, 1, "bot"))
    before = [r.key for r in store.records()]
    reloaded = LogStore(tmp_path)
    assert [r.key for r in reloaded.records()] == sorted(before, key=lambda k: (k[0], k[2], k[3]))
    assert len(read_log_dir(tmp_path)) == 6


def test_append_survives_disk_failure(tmp_path):
    store = LogStore(tmp_path)
    store.log_dir = tmp_path / "gone" / "deeper"  # unwritable target
    store.append(rec("s1", 1, 0, "user"))
    assert store.last_error is not None
    assert len(store.records("s1")) == 1  # still delivered in memory


def test_histogram_counts_user_turns():
    records = []
    for session, turns in (("a", 2), ("b", 2), ("c", 5)):
        for turn in range(1, turns + 1):
            records.append(rec(session, turn, 0, "user"))
            records.append(rec(session, turn, 1, "bot"))
    assert conversation_length_histogram(records) == {2: 2, 5: 1}


def test_histogram_empty():
    assert conversation_length_histogram([]) == {}


def test_turns_per_skill_counts_bot_records():
    records = (
        [rec("a", t, 1, "bot", skill="core") for t in range(1, 5)]
        + [rec("b", t, 1, "bot", skill="poi") for t in range(1, 4)]
        + [rec("c", 1, 1, "bot", skill="conference")]
    )
    assert turns_per_skill(records) == {"core": 4, "poi": 3, "conference": 1}


def test_turns_per_skill_defaults_to_core():
    records = [rec("a", 1, 1, "bot", skill=None)]
    assert turns_per_skill(records) == {"core": 1}


def test_turns_per_skill_empty():
    assert turns_per_skill([]) == {}


def test_planted_distribution_reproduced(tmp_path):
    """Generator keeps ground truth; analytics must reproduce it exactly."""
    rng = random.Random(99)
    store = LogStore(tmp_path)
    planted_lengths: dict[int, int] = {}
    planted_skills: dict[str, int] = {}
    for i in range(100):
        session = f"s{i:03d}"
        turns = rng.randint(1, 9)
        planted_lengths[turns] = planted_lengths.get(turns, 0) + 1
        for turn in range(1, turns + 1):
            store.append(rec(session, turn, 0, "user", offset=i * 100 + turn))
            skill = rng.choice(["core", "poi", "conference"])
            planted_skills[skill] = planted_skills.get(skill, 0) + 1
            store.append(
                rec(session, turn, 1, "bot", skill=skill, offset=i * 100 + turn)
            )

    records = read_log_dir(tmp_path)
    assert conversation_length_histogram(records) == planted_lengths
    assert turns_per_skill(records) == planted_skills

    # invariants: totals line up with record counts
    hist = conversation_length_histogram(records)
    assert sum(k * v for k, v in hist.items()) == sum(
        1 for r in records if r.direction == "user"
    )
    assert sum(turns_per_skill(records).values()) == sum(
        1 for r in records if r.direction == "bot"
    )


def test_roundtrip_analytics_stable(tmp_path):
    store = LogStore(tmp_path)
    for turn in range(1, 4):
        store.append(rec("s1", turn, 0, "user"))
        store.append(rec("s1", turn, 1, "bot", skill="poi"))
    direct = (
        conversation_length_histogram(store.records()),
        turns_per_skill(store.records()),
    )
    reloaded = read_log_dir(tmp_path)
    assert direct == (
        conversation_length_histogram(reloaded),
        turns_per_skill(reloaded),
    )
