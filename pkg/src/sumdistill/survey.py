"""Survey sessions, durable response storage, quality flags, and export."""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

QUESTION_TEXTS = {
    "accurate": "Independent of other factors, I feel that the summary is accurate.",
    "complete": "The summary is missing important information, and that can hinder the understanding of the method.",
    "concise": "The summary contains a lot of unnecessary information.",
    "preference": "Overall, which summary is better in your opinion?",
}

# Served top-down in this order; the stored value is the 1..4 agreement level.
LIKERT_OPTIONS = [
    {"value": 4, "label": "Strongly Agree"},
    {"value": 3, "label": "Agree"},
    {"value": 2, "label": "Disagree"},
    {"value": 1, "label": "Strongly Disagree"},
]
PREFERENCE_OPTIONS = [
    {"value": "first", "label": "Summary 1"},
    {"value": "second", "label": "Summary 2"},
    {"value": "undecided", "label": "I really cannot decide."},
]

DEFAULT_ITEMS_PER_SESSION = 30
LOW_EFFORT_SECONDS = 30.0


class SurveyError(ValueError):
    """Invalid survey operation (unknown session, duplicate answer, bad values)."""


@dataclass
class ItemAssignment:
    method_id: str
    first_source: str
    second_source: str


@dataclass
class SurveySession:
    token: str
    participant: str
    items: list[ItemAssignment]

    @property
    def item_count(self) -> int:
        return len(self.items)


def create_session(
    participant: str,
    pool: Iterable[str],
    seed: int,
    sources: tuple[str, str] = ("reference", "teacher"),
    items_per_session: int = DEFAULT_ITEMS_PER_SESSION,
) -> SurveySession:
    """Sample distinct methods and flip a fair coin per item for the first-shown source.

    Deterministic given the seed; the default session length is 30 items.
    """
    pool = sorted(set(pool))
    if len(pool) < items_per_session:
        raise SurveyError(f"method pool has {len(pool)} ids; need {items_per_session}")
    rng = random.Random(seed)
    chosen = rng.sample(pool, items_per_session)
    items = []
    for method_id in chosen:
        first_is_a = rng.random() < 0.5
        a, b = sources
        items.append(
            ItemAssignment(
                method_id=method_id,
                first_source=a if first_is_a else b,
                second_source=b if first_is_a else a,
            )
        )
    digest = hashlib.sha256(
        json.dumps([participant, seed, [i.method_id for i in items]]).encode()
    ).hexdigest()
    return SurveySession(token=digest[:20], participant=participant, items=items)


@dataclass
class StoredResponse:
    """One completed item: both pages' answers plus timing."""

    session: str
    participant: str
    item: int
    method_id: str
    first_source: str
    second_source: str
    accurate: int
    complete: int
    concise: int
    preference: str
    rationale: str
    page1_seconds: float
    page2_seconds: float

    def to_record(self) -> dict:
        preferred = {
            "first": self.first_source,
            "second": self.second_source,
            "undecided": "undecided",
        }[self.preference]
        return {
            "session": self.session,
            "participant": self.participant,
            "item": self.item,
            "method_id": self.method_id,
            "first_source": self.first_source,
            "second_source": self.second_source,
            "rated_source": self.first_source,  # page one rates the first-shown summary
            "accurate": self.accurate,
            "complete": self.complete,
            "concise": self.concise,
            "preference": self.preference,
            "preferred_source": preferred,
            "rationale": self.rationale,
            "page1_seconds": self.page1_seconds,
            "page2_seconds": self.page2_seconds,
        }


class ResponseStore:
    """Append-only line-delimited log of sessions and page answers.

    Every accepted write is flushed and fsynced before acknowledgment, so
    responses survive a crash between calls. Writes are serialized through
    one lock; reads are safe concurrently.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.sessions: dict[str, SurveySession] = {}
        self.page1: dict[tuple[str, int], dict] = {}
        self.page2: dict[tuple[str, int], dict] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._replay(json.loads(line))

    def _replay(self, rec: dict) -> None:
        kind = rec.get("kind")
        if kind == "session":
            items = [ItemAssignment(**i) for i in rec["items"]]
            self.sessions[rec["token"]] = SurveySession(
                token=rec["token"], participant=rec["participant"], items=items
            )
        elif kind == "page1":
            self.page1[(rec["token"], rec["item"])] = rec
        elif kind == "page2":
            self.page2[(rec["token"], rec["item"])] = rec

    def _append(self, rec: dict) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def add_session(self, session: SurveySession) -> None:
        if session.token in self.sessions:
            raise SurveyError(f"session {session.token} already exists")
        rec = {
            "kind": "session",
            "token": session.token,
            "participant": session.participant,
            "items": [vars(i) for i in session.items],
            "ts": time.time(),
        }
        self._append(rec)
        self.sessions[session.token] = session

    def _check_item(self, token: str, item: int) -> SurveySession:
        session = self.sessions.get(token)
        if session is None:
            raise SurveyError(f"unknown session {token!r}")
        if not 1 <= item <= session.item_count:
            raise SurveyError(f"item {item} out of range 1..{session.item_count}")
        return session

    def record_page1(self, token: str, item: int, answers: dict[str, int], elapsed_seconds: float) -> None:
        self._check_item(token, item)
        if (token, item) in self.page1:
            raise SurveyError(f"item {item} page one already answered")
        for q in ("accurate", "complete", "concise"):
            v = answers.get(q)
            if v not in (1, 2, 3, 4):
                raise SurveyError(f"answer for {q!r} must be in 1..4, got {v!r}")
        rec = {
            "kind": "page1",
            "token": token,
            "item": item,
            "accurate": int(answers["accurate"]),
            "complete": int(answers["complete"]),
            "concise": int(answers["concise"]),
            "elapsed_seconds": float(elapsed_seconds),
            "ts": time.time(),
        }
        self._append(rec)
        self.page1[(token, item)] = rec

    def record_page2(self, token: str, item: int, preference: str, rationale: str, elapsed_seconds: float) -> None:
        self._check_item(token, item)
        if (token, item) not in self.page1:
            raise SurveyError(f"item {item} page one not answered yet")
        if (token, item) in self.page2:
            raise SurveyError(f"item {item} already answered")
        if preference not in ("first", "second", "undecided"):
            raise SurveyError(f"preference must be first/second/undecided, got {preference!r}")
        if not rationale or not rationale.strip():
            raise SurveyError("a nonempty rationale is required with the preference")
        rec = {
            "kind": "page2",
            "token": token,
            "item": item,
            "preference": preference,
            "rationale": rationale,
            "elapsed_seconds": float(elapsed_seconds),
            "ts": time.time(),
        }
        self._append(rec)
        self.page2[(token, item)] = rec

    def record_response(self, r: StoredResponse) -> None:
        """Store a complete response (both pages) atomically from the caller's view."""
        self.record_page1(
            r.session, r.item,
            {"accurate": r.accurate, "complete": r.complete, "concise": r.concise},
            r.page1_seconds,
        )
        self.record_page2(r.session, r.item, r.preference, r.rationale, r.page2_seconds)

    def next_position(self, token: str) -> tuple[int, int] | None:
        """(item, page) a participant should see next, or None when finished."""
        session = self.sessions.get(token)
        if session is None:
            raise SurveyError(f"unknown session {token!r}")
        for item in range(1, session.item_count + 1):
            if (token, item) not in self.page1:
                return (item, 1)
            if (token, item) not in self.page2:
                return (item, 2)
        return None

    def completion_code(self, token: str) -> str:
        if token not in self.sessions:
            raise SurveyError(f"unknown session {token!r}")
        return hashlib.sha256(f"completed:{token}".encode()).hexdigest()[:10].upper()

    def responses(self) -> list[StoredResponse]:
        """Completed responses, stable-sorted by (session, item)."""
        out = []
        for (token, item) in sorted(self.page2):
            session = self.sessions[token]
            p1 = self.page1[(token, item)]
            p2 = self.page2[(token, item)]
            assignment = session.items[item - 1]
            out.append(
                StoredResponse(
                    session=token,
                    participant=session.participant,
                    item=item,
                    method_id=assignment.method_id,
                    first_source=assignment.first_source,
                    second_source=assignment.second_source,
                    accurate=p1["accurate"],
                    complete=p1["complete"],
                    concise=p1["concise"],
                    preference=p2["preference"],
                    rationale=p2["rationale"],
                    page1_seconds=p1["elapsed_seconds"],
                    page2_seconds=p2["elapsed_seconds"],
                )
            )
        return out

    def mean_item_seconds(self) -> dict[str, float]:
        """Mean per-item time (both pages) per session, for quality control."""
        per_session: dict[str, list[float]] = {}
        for r in self.responses():
            per_session.setdefault(r.session, []).append(r.page1_seconds + r.page2_seconds)
        return {tok: sum(v) / len(v) for tok, v in per_session.items() if v}


EXPORT_HEADER = {"kind": "survey_export", "version": 1}


def export_responses(store: ResponseStore) -> str:
    """Line-delimited export: header line then one record per completed response."""
    lines = [json.dumps(EXPORT_HEADER)]
    for r in store.responses():
        lines.append(json.dumps(r.to_record(), ensure_ascii=False))
    return "\n".join(lines) + "\n"


def import_responses(text: str) -> list[dict]:
    """Parse an export document back into records (inverse of export)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SurveyError("empty export document")
    header = json.loads(lines[0])
    if header.get("kind") != "survey_export":
        raise SurveyError("not a survey export document")
    if header.get("version") != EXPORT_HEADER["version"]:
        raise SurveyError(f"unsupported export version {header.get('version')}")
    return [json.loads(ln) for ln in lines[1:]]


def flag_low_effort(
    session_mean_seconds: dict[str, float],
    per_item_threshold_seconds: float = LOW_EFFORT_SECONDS,
) -> list[str]:
    """Sessions whose mean per-item time is under the threshold (default 30 s)."""
    if per_item_threshold_seconds <= 0:
        raise SurveyError("threshold must be positive")
    return sorted(tok for tok, mean in session_mean_seconds.items() if mean < per_item_threshold_seconds)
