from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from socialagenda.agenda import AgendaStore
from socialagenda.server import create_app

T0 = datetime(2024, 5, 6, 9, 0, tzinfo=timezone.utc)

RELATIONSHIP = dict(
    role="colleague", hierarchy_level="equal", contact_frequency=4,
    geographical_distance=1, years_known=3, relationship_quality=5,
    depth_of_acquaintance=4, formality_level=5, shared_interests=4,
)


def _meeting_body(mid, start_h, end_h, contact, **cues):
    body = dict(
        id=mid, title=f"meeting {mid}", contact_id=contact,
        start=(T0 + timedelta(hours=start_h)).isoformat(),
        end=(T0 + timedelta(hours=end_h)).isoformat(),
        created_at=T0.isoformat(),
        setting="work", event_frequency="weekly",
        initiator="other_person", help_dynamic="neither",
    )
    body.update(cues)
    return body


@pytest.fixture()
def client(tmp_path, tiny_pipeline):
    model, _, _ = tiny_pipeline
    store = AgendaStore(tmp_path)
    app = create_app(store, model)
    with TestClient(app) as c:
        yield c


def _populate(client):
    assert client.put("/contacts/c1", json={"name": "Ana"}).status_code == 200
    assert client.put("/contacts/c2", json={"name": "Bo"}).status_code == 200
    assert client.put("/contacts/c1/relationship", json=RELATIONSHIP).status_code == 200
    assert client.put(
        "/contacts/c2/relationship", json=dict(RELATIONSHIP, role="friend")
    ).status_code == 200
    assert client.post("/meetings", json=_meeting_body(
        "m1", 0, 2, "c1", help_dynamic="giving_help")).status_code == 201
    assert client.post("/meetings", json=_meeting_body(
        "m2", 1, 3, "c2", setting="casual")).status_code == 201


class TestEndpoints:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body == {"schema_version": "1", "status": "ok", "model_loaded": True}

    def test_full_flow(self, client):
        _populate(client)
        contacts = client.get("/contacts").json()["contacts"]
        assert [c["id"] for c in contacts] == ["c1", "c2"]
        assert all(c["has_relationship"] for c in contacts)

        meetings = client.get("/meetings").json()["meetings"]
        assert [m["id"] for m in meetings] == ["m1", "m2"]

        conflicts = client.get("/conflicts").json()["conflicts"]
        assert len(conflicts) == 1
        cid = conflicts[0]["id"]

        suggestion = client.get(f"/conflicts/{cid}/suggestion")
        assert suggestion.status_code == 200
        payload = suggestion.json()
        assert payload["schema_version"] == "1"
        assert payload["suggestion"]["meeting_id"] in ("m1", "m2")
        assert payload["explanations"]["level1"]["text"]
        assert payload["explanations"]["level2"]["text"]

        feedback = client.post(f"/conflicts/{cid}/feedback", json={
            "suggested_meeting_id": payload["suggestion"]["meeting_id"],
            "decision": "accepted",
            "shown_styles": ["level1", "level2"],
        })
        assert feedback.status_code == 201
        listed = client.get("/feedback").json()["feedback"]
        assert len(listed) == 1
        assert listed[0]["decision"] == "accepted"

    def test_validation_error_shape(self, client):
        _populate(client)
        resp = client.put("/contacts/c1/relationship",
                          json=dict(RELATIONSHIP, relationship_quality=9))
        assert resp.status_code == 400
        body = resp.json()
        assert body["schema_version"] == "1"
        assert body["field"] == "relationship_quality"
        assert body["code"] == "out_of_range"
        assert "relationship_quality" in body["message"]

    def test_unknown_contact_404(self, client):
        resp = client.put("/contacts/ghost/relationship", json=RELATIONSHIP)
        assert resp.status_code == 404
        assert resp.json()["code"] == "unknown_contact"

    def test_unknown_conflict_404(self, client):
        _populate(client)
        resp = client.get("/conflicts/zz+yy/suggestion")
        assert resp.status_code == 404
        assert resp.json()["code"] == "unknown_conflict"

    def test_missing_relationship_409(self, client):
        client.put("/contacts/c9", json={})
        client.put("/contacts/c8", json={})
        client.put("/contacts/c9/relationship", json=RELATIONSHIP)
        client.post("/meetings", json=_meeting_body("a1", 0, 2, "c9"))
        client.post("/meetings", json=_meeting_body("a2", 1, 3, "c8"))
        cid = client.get("/conflicts").json()["conflicts"][0]["id"]
        resp = client.get(f"/conflicts/{cid}/suggestion")
        assert resp.status_code == 409
        assert resp.json()["code"] == "missing_relationship"

    def test_invalid_meeting_400(self, client):
        client.put("/contacts/c1", json={})
        client.put("/contacts/c1/relationship", json=RELATIONSHIP)
        bad = _meeting_body("m9", 3, 1, "c1")
        resp = client.post("/meetings", json=bad)
        assert resp.status_code == 400
        assert resp.json()["code"] == "invalid_meeting"

    def test_suggestion_identical_across_100_calls(self, client):
        _populate(client)
        cid = client.get("/conflicts").json()["conflicts"][0]["id"]
        bodies = {client.get(f"/conflicts/{cid}/suggestion").content for _ in range(100)}
        assert len(bodies) == 1

    def test_model_not_loaded_503(self, tmp_path):
        store = AgendaStore(tmp_path)
        app = create_app(store, model=None)
        with TestClient(app) as c:
            c.put("/contacts/c1", json={})
            c.put("/contacts/c1/relationship", json=RELATIONSHIP)
            c.put("/contacts/c2", json={})
            c.put("/contacts/c2/relationship", json=RELATIONSHIP)
            c.post("/meetings", json=_meeting_body("m1", 0, 2, "c1"))
            c.post("/meetings", json=_meeting_body("m2", 1, 3, "c2"))
            cid = c.get("/conflicts").json()["conflicts"][0]["id"]
            resp = c.get(f"/conflicts/{cid}/suggestion")
            assert resp.status_code == 503
            assert resp.json()["code"] == "model_not_loaded"


class TestAuth:
    def test_bearer_token_enforced(self, tmp_path, tiny_pipeline):
        model, _, _ = tiny_pipeline
        app = create_app(AgendaStore(tmp_path), model, token="sesame")
        with TestClient(app) as c:
            assert c.get("/healthz").status_code == 200  # healthz stays open
            assert c.get("/contacts").status_code == 401
            assert c.get("/contacts", headers={"Authorization": "Bearer wrong"}).status_code == 401
            ok = c.get("/contacts", headers={"Authorization": "Bearer sesame"})
            assert ok.status_code == 200


class TestDurabilityThroughRestart:
    def test_state_survives_server_restart(self, tmp_path, tiny_pipeline):
        model, _, _ = tiny_pipeline
        store = AgendaStore(tmp_path)
        with TestClient(create_app(store, model)) as c:
            _populate(c)
            cid = c.get("/conflicts").json()["conflicts"][0]["id"]
            payload = c.get(f"/conflicts/{cid}/suggestion").json()
            c.post(f"/conflicts/{cid}/feedback", json={
                "suggested_meeting_id": payload["suggestion"]["meeting_id"],
                "decision": "overrode", "shown_styles": ["level1"]})
        # new store and app over the same directory
        with TestClient(create_app(AgendaStore(tmp_path), model)) as c:
            assert len(c.get("/meetings").json()["meetings"]) == 2
            feedback = c.get("/feedback").json()["feedback"]
            assert len(feedback) == 1 and feedback[0]["decision"] == "overrode"
            # suggestion identical before and after restart
            assert c.get(f"/conflicts/{cid}/suggestion").json() == payload
