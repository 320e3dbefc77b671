"""User identification, explicit consent, and returning-user memory.

Identification is token-based: QR badge payloads (``dagfinn1:<user_id>``)
and opaque recognition tokens both resolve through one injective index.
Memory is written only for profiles whose consent is granted; denial
purges recognition tokens and wipes memory.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

__all__ = [
    "QR_PREFIX",
    "CONSENT_UNKNOWN",
    "CONSENT_GRANTED",
    "CONSENT_DENIED",
    "ProfileError",
    "Memory",
    "UserProfile",
    "ProfileStore",
]

QR_PREFIX = "dagfinn1:"

CONSENT_UNKNOWN = "unknown"
CONSENT_GRANTED = "granted"
CONSENT_DENIED = "denied"
_CONSENT_STATES = (CONSENT_UNKNOWN, CONSENT_GRANTED, CONSENT_DENIED)

_PROFILES_FILE = "profiles.json"
_BINDINGS_FILE = "bindings.ndjson"


class ProfileError(ValueError):
    """Raised for consent-protocol violations and invalid store operations."""


@dataclass
class Memory:
    accepted_poi_ids: list[str] = field(default_factory=list)
    interests: list[str] = field(default_factory=list)
    last_seen: datetime | None = None

    def to_json(self) -> dict:
        return {
            "accepted_poi_ids": list(self.accepted_poi_ids),
            "interests": list(self.interests),
            "last_seen": self.last_seen.isoformat() if self.last_seen else None,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Memory":
        last_seen = doc.get("last_seen")
        return cls(
            accepted_poi_ids=list(doc.get("accepted_poi_ids", ())),
            interests=list(doc.get("interests", ())),
            last_seen=datetime.fromisoformat(last_seen) if last_seen else None,
        )

    def is_empty(self) -> bool:
        return not self.accepted_poi_ids and not self.interests and self.last_seen is None


@dataclass
class UserProfile:
    user_id: str
    display_name: str | None = None
    consent: str = CONSENT_UNKNOWN
    identifiers: set[str] = field(default_factory=set)
    memory: Memory = field(default_factory=Memory)

    def qr_token(self) -> str:
        return QR_PREFIX + self.user_id

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "display_name": self.display_name,
            "consent": self.consent,
            "identifiers": sorted(self.identifiers),
            "memory": self.memory.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "UserProfile":
        return cls(
            user_id=doc["user_id"],
            display_name=doc.get("display_name"),
            consent=doc.get("consent", CONSENT_UNKNOWN),
            identifiers=set(doc.get("identifiers", ())),
            memory=Memory.from_json(doc.get("memory", {})),
        )


class ProfileStore:
    """Persistent profile collection plus session-attribution records.

    Both files live under the log directory: ``profiles.json`` (atomic
    rewrite on every mutation) and ``bindings.ndjson`` (append per session
    binding; rewritten on delete to scrub attribution).
    """

    def __init__(self, directory: str | Path | None):
        self._lock = threading.RLock()
        self._profiles: dict[str, UserProfile] = {}
        self._token_index: dict[str, str] = {}
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load()

    # ------------------------------------------------------------------
    # persistence

    @property
    def _profiles_path(self) -> Path | None:
        return None if self.directory is None else self.directory / _PROFILES_FILE

    @property
    def _bindings_path(self) -> Path | None:
        return None if self.directory is None else self.directory / _BINDINGS_FILE

    def _load(self) -> None:
        path = self._profiles_path
        if path is None or not path.exists():
            return
        with path.open(encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("schema_version") != 1:
            raise ProfileError(f"unsupported profile schema: {doc.get('schema_version')!r}")
        for raw in doc.get("profiles", ()):
            profile = UserProfile.from_json(raw)
            self._register(profile)

    def _register(self, profile: UserProfile) -> None:
        for token in profile.identifiers:
            owner = self._token_index.get(token)
            if owner is not None and owner != profile.user_id:
                raise ProfileError(
                    f"token registered to both {owner!r} and {profile.user_id!r}"
                )
        self._profiles[profile.user_id] = profile
        for token in profile.identifiers:
            self._token_index[token] = profile.user_id

    def _save(self) -> None:
        path = self._profiles_path
        if path is None:
            return
        doc = {
            "schema_version": 1,
            "profiles": [p.to_json() for p in self._profiles.values()],
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)

    # ------------------------------------------------------------------
    # lookup and linking

    def get(self, user_id: str | None) -> UserProfile | None:
        if user_id is None:
            return None
        with self._lock:
            return self._profiles.get(user_id)

    def identify(self, token: str) -> UserProfile | None:
        """Profile whose identifiers contain the token, else None."""
        with self._lock:
            user_id = self._token_index.get(token)
            return self._profiles.get(user_id) if user_id else None

    def upsert(self, profile: UserProfile) -> UserProfile:
        with self._lock:
            if profile.consent not in _CONSENT_STATES:
                raise ProfileError(f"invalid consent state: {profile.consent!r}")
            profile.identifiers.add(profile.qr_token())
            self._register(profile)
            self._save()
            return profile

    def link_token(self, user_id: str, token: str) -> UserProfile:
        """Attach a recognition token; identifiers stay injective."""
        with self._lock:
            profile = self._require(user_id)
            owner = self._token_index.get(token)
            if owner is not None and owner != user_id:
                raise ProfileError(f"token already registered to {owner!r}")
            profile.identifiers.add(token)
            self._token_index[token] = user_id
            self._save()
            return profile

    def _require(self, user_id: str) -> UserProfile:
        profile = self._profiles.get(user_id)
        if profile is None:
            raise ProfileError(f"unknown profile: {user_id!r}")
        return profile

    # ------------------------------------------------------------------
    # consent

    def record_consent(self, user_id: str, decision: str) -> UserProfile:
        """Apply a consent decision; denial purges recognition tokens and memory."""
        if decision not in (CONSENT_GRANTED, CONSENT_DENIED):
            raise ProfileError(f"invalid consent decision: {decision!r}")
        with self._lock:
            profile = self._require(user_id)
            profile.consent = decision
            if decision == CONSENT_DENIED:
                for token in list(profile.identifiers):
                    if not token.startswith(QR_PREFIX):
                        profile.identifiers.discard(token)
                        self._token_index.pop(token, None)
                profile.memory = Memory()
            self._save()
            return profile

    # ------------------------------------------------------------------
    # memory (granted-consent only)

    def _writable(self, user_id: str) -> UserProfile:
        profile = self._require(user_id)
        if profile.consent != CONSENT_GRANTED:
            raise ProfileError(
                f"memory write without granted consent for {user_id!r}"
            )
        return profile

    def remember_poi(self, user_id: str, item_id: str) -> None:
        with self._lock:
            profile = self._writable(user_id)
            if item_id not in profile.memory.accepted_poi_ids:
                profile.memory.accepted_poi_ids.append(item_id)
                self._save()

    def remember_interests(self, user_id: str, interests: list[str]) -> None:
        with self._lock:
            profile = self._writable(user_id)
            if profile.memory.interests != list(interests):
                profile.memory.interests = list(interests)
                self._save()

    def touch_last_seen(self, user_id: str, now: datetime) -> None:
        with self._lock:
            profile = self._writable(user_id)
            profile.memory.last_seen = now.astimezone(timezone.utc)
            self._save()

    # ------------------------------------------------------------------
    # attribution and deletion

    def bind_session(self, session_id: str, user_id: str, now: datetime) -> None:
        """Record which user a session belongs to (scrubbed on delete)."""
        path = self._bindings_path
        if path is None:
            return
        line = json.dumps(
            {
                "session_id": session_id,
                "user_id": user_id,
                "timestamp": now.astimezone(timezone.utc).isoformat(),
            }
        )
        with self._lock, path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()

    def delete(self, user_id: str) -> bool:
        """Remove the profile and scrub its session attributions."""
        with self._lock:
            profile = self._profiles.pop(user_id, None)
            if profile is None:
                return False
            for token in profile.identifiers:
                self._token_index.pop(token, None)
            self._save()
            path = self._bindings_path
            if path is not None and path.exists():
                kept = []
                with path.open(encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip() and json.loads(line)["user_id"] != user_id:
                            kept.append(line)
                tmp = path.with_suffix(".tmp")
                tmp.write_text("".join(kept), encoding="utf-8")
                os.replace(tmp, path)
            return True

    # ------------------------------------------------------------------
    # import/export

    def export_doc(self) -> dict:
        with self._lock:
            return {
                "schema_version": 1,
                "profiles": [p.to_json() for p in self._profiles.values()],
            }

    def import_doc(self, doc: dict) -> int:
        if doc.get("schema_version") != 1:
            raise ProfileError(f"unsupported profile schema: {doc.get('schema_version')!r}")
        count = 0
        with self._lock:
            for raw in doc.get("profiles", ()):
                self.upsert(UserProfile.from_json(raw))
                count += 1
        return count

    def all_profiles(self) -> list[UserProfile]:
        with self._lock:
            return list(self._profiles.values())
