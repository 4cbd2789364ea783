"""HTTP API over the agenda store and the trained pipeline.

JSON bodies throughout; every response carries ``schema_version``. Errors
are structured as {code, field, message}. A single optional bearer token
guards everything except /healthz.
"""

from __future__ import annotations

from datetime import datetime
from typing import Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from .agenda import (
    SCHEMA_VERSION,
    AgendaError,
    AgendaStore,
    FeedbackEvent,
    MissingRelationship,
    ModelNotLoaded,
    UnknownConflict,
    UnknownContact,
    UnknownMeeting,
    suggest,
)
from .domain import ValidationError
from .pipeline import PipelineModel

_STATUS = {
    UnknownContact: 404,
    UnknownMeeting: 404,
    UnknownConflict: 404,
    MissingRelationship: 409,
    ModelNotLoaded: 503,
}


def _error(status: int, code: str, message: str, field_name: Optional[str] = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={
            "schema_version": SCHEMA_VERSION,
            "code": code,
            "field": field_name,
            "message": message,
        },
    )


def _ok(payload: dict, status: int = 200) -> JSONResponse:
    return JSONResponse(status_code=status, content={"schema_version": SCHEMA_VERSION, **payload})


def create_app(
    store: AgendaStore,
    model: Optional[PipelineModel] = None,
    token: Optional[str] = None,
    user_name: str = "Alice",
    snapshot_every: int = 100,
) -> FastAPI:
    app = FastAPI(title="socialagenda", docs_url=None, redoc_url=None)
    state = {"mutations": 0}

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if token and request.url.path != "/healthz":
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return _error(401, "unauthorized", "missing or invalid bearer token")
        return await call_next(request)

    @app.exception_handler(AgendaError)
    async def _agenda_error(_request, err: AgendaError):
        return _error(_STATUS.get(type(err), 400), err.code, str(err), err.field)

    @app.exception_handler(ValidationError)
    async def _validation_error(_request, err: ValidationError):
        first = err.violations[0]
        return _error(400, first.kind, str(err), first.field)

    def _mutated():
        state["mutations"] += 1
        if snapshot_every and state["mutations"] % snapshot_every == 0:
            store.snapshot()

    @app.get("/healthz")
    async def healthz():
        return _ok({"status": "ok", "model_loaded": model is not None})

    @app.get("/contacts")
    async def list_contacts():
        enriched = []
        for cid, contact in sorted(store.contacts.items()):
            enriched.append({**contact, "has_relationship": cid in store.relationships})
        return _ok({"contacts": enriched})

    @app.put("/contacts/{contact_id}")
    async def put_contact(contact_id: str, body: dict = Body(default={})):
        contact = store.put_contact(contact_id, name=str(body.get("name", "")))
        _mutated()
        return _ok({"contact": contact})

    @app.put("/contacts/{contact_id}/relationship")
    async def put_relationship(contact_id: str, body: dict = Body(...)):
        rel = store.put_relationship(contact_id, body)
        _mutated()
        return _ok({"relationship": rel})

    @app.get("/meetings")
    async def list_meetings():
        meetings = [m.to_dict() for m in
                    sorted(store.meetings.values(), key=lambda m: (m.start, m.id))]
        return _ok({"meetings": meetings})

    @app.post("/meetings")
    async def post_meeting(body: dict = Body(...)):
        meeting = store.put_meeting(body)
        _mutated()
        return _ok({"meeting": meeting.to_dict()}, status=201)

    @app.get("/conflicts")
    async def list_conflicts():
        return _ok({"conflicts": [c.to_dict() for c in store.conflicts()]})

    @app.get("/conflicts/{cid}/suggestion")
    async def conflict_suggestion(cid: str):
        payload = suggest(store, model, cid, user_name=user_name)
        return JSONResponse(status_code=200, content=payload)

    @app.post("/conflicts/{cid}/feedback")
    async def post_feedback(cid: str, body: dict = Body(...)):
        event = FeedbackEvent(
            conflict_id=cid,
            suggested_meeting_id=str(body.get("suggested_meeting_id", "")),
            decision=str(body.get("decision", "")),
            shown_styles=tuple(body.get("shown_styles", ())),
            timestamp=str(body.get("timestamp") or datetime.now().astimezone().isoformat()),
        )
        count = store.record_feedback(event)
        _mutated()
        return _ok({"recorded": event.to_dict(), "feedback_count": count}, status=201)

    @app.get("/feedback")
    async def list_feedback():
        return _ok({"feedback": [e.to_dict() for e in store.feedback]})

    return app
