"""HTTP survey service: session issuing, the two survey pages, and the admin export."""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .survey import (
    LIKERT_OPTIONS,
    PREFERENCE_OPTIONS,
    QUESTION_TEXTS,
    ResponseStore,
    SurveyError,
    create_session,
    export_responses,
)


@dataclass
class SurveyContent:
    """What the survey shows: method code plus the two summary sources to compare."""

    methods: dict[str, str]  # method id -> code
    summaries: dict[str, dict[str, str]]  # source name -> {method id: summary}
    pair: tuple[str, str] = ("reference", "teacher")
    items_per_session: int = 30
    admin_token: str | None = None

    def pool(self) -> list[str]:
        a, b = self.pair
        have_a = set(self.summaries.get(a, {}))
        have_b = set(self.summaries.get(b, {}))
        return sorted(set(self.methods) & have_a & have_b)

    def summary_for(self, source: str, method_id: str) -> str:
        return self.summaries[source][method_id]


class SessionRequest(BaseModel):
    participant_id: str = Field(min_length=1)
    seed: int | None = None


class SessionCreated(BaseModel):
    token: str
    item_count: int


class SessionState(BaseModel):
    item_count: int
    completed: bool
    next_item: int | None = None
    next_page: int | None = None
    completion_code: str | None = None


class QuestionOption(BaseModel):
    value: int | str
    label: str


class Question(BaseModel):
    id: str
    text: str
    options: list[QuestionOption]


class PageOneView(BaseModel):
    item: int
    item_count: int
    code: str
    summary: str
    questions: list[Question]
    answered: bool


class PageOneSubmission(BaseModel):
    accurate: int = Field(ge=1, le=4)
    complete: int = Field(ge=1, le=4)
    concise: int = Field(ge=1, le=4)
    elapsed_seconds: float = Field(ge=0)


class PageTwoView(BaseModel):
    item: int
    item_count: int
    code: str
    summary_1: str
    summary_2: str
    question: Question
    answered: bool


class PageTwoSubmission(BaseModel):
    preference: Literal["first", "second", "undecided"]
    rationale: str
    elapsed_seconds: float = Field(ge=0)


class SubmitAck(BaseModel):
    ok: bool
    next_item: int | None = None
    next_page: int | None = None
    completed: bool = False
    completion_code: str | None = None


def _http_error(exc: SurveyError) -> HTTPException:
    msg = str(exc)
    if "unknown session" in msg:
        return HTTPException(status_code=404, detail=msg)
    if "already" in msg:
        return HTTPException(status_code=409, detail=msg)
    return HTTPException(status_code=400, detail=msg)


def create_app(
    store: ResponseStore,
    content: SurveyContent,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="code summary survey")
    pool = content.pool()

    def get_session(token: str):
        session = store.sessions.get(token)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {token!r}")
        return session

    def get_assignment(token: str, n: int):
        session = get_session(token)
        if not 1 <= n <= session.item_count:
            raise HTTPException(status_code=404, detail=f"item {n} out of range")
        return session, session.items[n - 1]

    def state_of(token: str) -> SessionState:
        session = get_session(token)
        pos = store.next_position(token)
        if pos is None:
            return SessionState(
                item_count=session.item_count,
                completed=True,
                completion_code=store.completion_code(token),
            )
        return SessionState(
            item_count=session.item_count, completed=False, next_item=pos[0], next_page=pos[1]
        )

    @app.post("/api/session", response_model=SessionCreated)
    def new_session(req: SessionRequest) -> SessionCreated:
        seed = req.seed if req.seed is not None else random.SystemRandom().randrange(2**63)
        try:
            session = create_session(
                req.participant_id,
                pool,
                seed,
                sources=content.pair,
                items_per_session=content.items_per_session,
            )
            store.add_session(session)
        except SurveyError as exc:
            raise _http_error(exc)
        return SessionCreated(token=session.token, item_count=session.item_count)

    @app.get("/api/session/{token}/state", response_model=SessionState)
    def session_state(token: str) -> SessionState:
        return state_of(token)

    @app.get("/api/session/{token}/item/{n}/page1", response_model=PageOneView)
    def page_one(token: str, n: int) -> PageOneView:
        session, assignment = get_assignment(token, n)
        questions = [
            Question(id=q, text=QUESTION_TEXTS[q], options=[QuestionOption(**o) for o in LIKERT_OPTIONS])
            for q in ("accurate", "complete", "concise")
        ]
        return PageOneView(
            item=n,
            item_count=session.item_count,
            code=content.methods[assignment.method_id],
            summary=content.summary_for(assignment.first_source, assignment.method_id),
            questions=questions,
            answered=(token, n) in store.page1,
        )

    @app.post("/api/session/{token}/item/{n}/page1", response_model=SubmitAck)
    def submit_page_one(token: str, n: int, body: PageOneSubmission) -> SubmitAck:
        get_assignment(token, n)
        try:
            store.record_page1(
                token, n,
                {"accurate": body.accurate, "complete": body.complete, "concise": body.concise},
                body.elapsed_seconds,
            )
        except SurveyError as exc:
            raise _http_error(exc)
        state = state_of(token)
        return SubmitAck(
            ok=True, next_item=state.next_item, next_page=state.next_page,
            completed=state.completed, completion_code=state.completion_code,
        )

    @app.get("/api/session/{token}/item/{n}/page2", response_model=PageTwoView)
    def page_two(token: str, n: int) -> PageTwoView:
        session, assignment = get_assignment(token, n)
        question = Question(
            id="preference",
            text=QUESTION_TEXTS["preference"],
            options=[QuestionOption(**o) for o in PREFERENCE_OPTIONS],
        )
        return PageTwoView(
            item=n,
            item_count=session.item_count,
            code=content.methods[assignment.method_id],
            summary_1=content.summary_for(assignment.first_source, assignment.method_id),
            summary_2=content.summary_for(assignment.second_source, assignment.method_id),
            question=question,
            answered=(token, n) in store.page2,
        )

    @app.post("/api/session/{token}/item/{n}/page2", response_model=SubmitAck)
    def submit_page_two(token: str, n: int, body: PageTwoSubmission) -> SubmitAck:
        get_assignment(token, n)
        try:
            store.record_page2(token, n, body.preference, body.rationale, body.elapsed_seconds)
        except SurveyError as exc:
            raise _http_error(exc)
        state = state_of(token)
        return SubmitAck(
            ok=True, next_item=state.next_item, next_page=state.next_page,
            completed=state.completed, completion_code=state.completion_code,
        )

    @app.get("/api/export", response_class=PlainTextResponse)
    def export(x_admin_token: str | None = Header(default=None)) -> str:
        if content.admin_token and x_admin_token != content.admin_token:
            raise HTTPException(status_code=403, detail="admin token required")
        return export_responses(store)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
