"""Operational agenda layer: contacts, relationships, meetings, conflicts,
suggestions and the feedback log.

Persistence is a single append-only JSONL log plus an optional snapshot,
both in one directory; replaying the log reproduces the exact state, and
appends are fsynced before acknowledgment. One writer, many readers.

Suggestions never decline anything: the service computes priorities for
both meetings of a conflict, picks the higher one, and returns both
explanation styles; the decision stays with the user.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence, Union

from .domain import (
    CHARACTERISTICS,
    RELATIONSHIP_FIELDS,
    SITUATION_CUE_FIELDS,
    FieldViolation,
    SocialSituationFeatures,
    ValidationError,
    classify_relevance,
    validate_relationship,
)
from .explain import (
    LEVEL1_POOL,
    LEVEL2_POOL,
    Explanation,
    _direction_score,
    _is_ordinal_feature,
    _level1_text,
    _level2_text,
    load_lexicon,
)
from .ingest import FeatureEncoder, ProfileEncoder
from .pipeline import PipelineModel, predict_priority, predict_profile
from .shapley import shap_fast

SCHEMA_VERSION = "1"


class AgendaError(ValueError):
    code = "agenda_error"

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class UnknownContact(AgendaError):
    code = "unknown_contact"


class UnknownMeeting(AgendaError):
    code = "unknown_meeting"


class UnknownConflict(AgendaError):
    code = "unknown_conflict"


class MissingRelationship(AgendaError):
    code = "missing_relationship"


class ModelNotLoaded(AgendaError):
    code = "model_not_loaded"


class InvalidMeeting(AgendaError):
    code = "invalid_meeting"


def _parse_ts(raw: str, field_name: str) -> datetime:
    if not isinstance(raw, str):
        raise InvalidMeeting(f"{field_name} must be an ISO-8601 string", field=field_name)
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as err:
        raise InvalidMeeting(f"{field_name}: {err}", field=field_name)
    if ts.tzinfo is None:
        raise InvalidMeeting(f"{field_name} must be timezone-aware", field=field_name)
    return ts


@dataclass(frozen=True)
class Meeting:
    id: str
    title: str
    start: datetime
    end: datetime
    contact_id: str
    setting: str
    event_frequency: str
    initiator: str
    help_dynamic: str
    created_at: datetime

    def __post_init__(self):
        if self.start >= self.end:
            raise InvalidMeeting("start must be before end", field="start")
        violations: list[FieldViolation] = []
        from .domain import _check_enum

        for cue in SITUATION_CUE_FIELDS:
            _check_enum(cue, getattr(self, cue), violations)
        if violations:
            raise ValidationError(violations)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "contact_id": self.contact_id,
            "setting": self.setting,
            "event_frequency": self.event_frequency,
            "initiator": self.initiator,
            "help_dynamic": self.help_dynamic,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Meeting":
        return cls(
            id=str(d["id"]),
            title=str(d.get("title", "")),
            start=_parse_ts(d["start"], "start"),
            end=_parse_ts(d["end"], "end"),
            contact_id=str(d["contact_id"]),
            setting=d.get("setting"),
            event_frequency=d.get("event_frequency"),
            initiator=d.get("initiator"),
            help_dynamic=d.get("help_dynamic"),
            created_at=_parse_ts(d["created_at"], "created_at"),
        )


@dataclass(frozen=True)
class Conflict:
    id: str
    meeting_ids: tuple[str, str]  # ordered by start time, then id
    overlap_start: datetime
    overlap_end: datetime

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "meeting_ids": list(self.meeting_ids),
            "overlap_start": self.overlap_start.isoformat(),
            "overlap_end": self.overlap_end.isoformat(),
        }


def conflict_id(id_a: str, id_b: str) -> str:
    return "+".join(sorted((id_a, id_b)))


def detect_conflicts(meetings: Sequence[Meeting]) -> list[Conflict]:
    """All pairwise overlaps under half-open [start, end) semantics:
    back-to-back meetings do not conflict. Order-insensitive."""
    ordered = sorted(meetings, key=lambda m: (m.start, m.id))
    out: list[Conflict] = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            lo = max(a.start, b.start)
            hi = min(a.end, b.end)
            if lo < hi:
                out.append(
                    Conflict(
                        id=conflict_id(a.id, b.id),
                        meeting_ids=(a.id, b.id),
                        overlap_start=lo,
                        overlap_end=hi,
                    )
                )
    return out


@dataclass(frozen=True)
class FeedbackEvent:
    conflict_id: str
    suggested_meeting_id: str
    decision: str  # accepted | overrode
    shown_styles: tuple[str, ...]
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "conflict_id": self.conflict_id,
            "suggested_meeting_id": self.suggested_meeting_id,
            "decision": self.decision,
            "shown_styles": list(self.shown_styles),
            "timestamp": self.timestamp,
        }


class AgendaStore:
    """Embedded store: in-memory state backed by an append-only log.

    ``directory`` is optional; without it the store is memory-only (tests,
    dry runs). ``snapshot()`` writes the current state and records how many
    log entries it covers; loading applies the snapshot then replays the
    remainder of the log.
    """

    LOG_NAME = "store.log"
    SNAPSHOT_NAME = "store.snapshot.json"

    def __init__(self, directory: Optional[Union[str, Path]] = None):
        self.directory = Path(directory) if directory else None
        self.contacts: dict[str, dict] = {}
        self.relationships: dict[str, dict] = {}
        self.meetings: dict[str, Meeting] = {}
        self.feedback: list[FeedbackEvent] = []
        self._applied = 0
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence ------------------------------------------------------

    def _log_path(self) -> Path:
        return self.directory / self.LOG_NAME

    def _load(self) -> None:
        snap_path = self.directory / self.SNAPSHOT_NAME
        start = 0
        if snap_path.exists():
            snap = json.loads(snap_path.read_text(encoding="utf-8"))
            self.contacts = snap["contacts"]
            self.relationships = snap["relationships"]
            self.meetings = {k: Meeting.from_dict(v) for k, v in snap["meetings"].items()}
            self.feedback = [FeedbackEvent(**e) if isinstance(e, FeedbackEvent) else FeedbackEvent(
                conflict_id=e["conflict_id"],
                suggested_meeting_id=e["suggested_meeting_id"],
                decision=e["decision"],
                shown_styles=tuple(e["shown_styles"]),
                timestamp=e["timestamp"],
            ) for e in snap["feedback"]]
            start = int(snap["applied"])
        log = self._log_path()
        if log.exists():
            with open(log, "r", encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if i < start or not line.strip():
                        continue
                    self._apply(json.loads(line))
                    self._applied = i + 1
            self._applied = max(self._applied, start)
        else:
            self._applied = start

    def _append(self, entry: dict) -> None:
        self._apply(entry)
        self._applied += 1
        if self.directory:
            with open(self._log_path(), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def _apply(self, entry: dict) -> None:
        op = entry["op"]
        data = entry["data"]
        if op == "put_contact":
            self.contacts[data["id"]] = {"id": data["id"], "name": data.get("name", "")}
        elif op == "put_relationship":
            self.relationships[data["contact_id"]] = {
                k: data[k] for k in RELATIONSHIP_FIELDS if k in data
            } | {"contact_id": data["contact_id"]}
        elif op == "put_meeting":
            meeting = Meeting.from_dict(data)
            self.meetings[meeting.id] = meeting
        elif op == "feedback":
            self.feedback.append(
                FeedbackEvent(
                    conflict_id=data["conflict_id"],
                    suggested_meeting_id=data["suggested_meeting_id"],
                    decision=data["decision"],
                    shown_styles=tuple(data["shown_styles"]),
                    timestamp=data["timestamp"],
                )
            )
        else:
            raise AgendaError(f"unknown log op {op!r}")

    def snapshot(self) -> None:
        if not self.directory:
            return
        snap = {
            "schema_version": SCHEMA_VERSION,
            "applied": self._applied,
            "contacts": self.contacts,
            "relationships": self.relationships,
            "meetings": {k: m.to_dict() for k, m in self.meetings.items()},
            "feedback": [e.to_dict() for e in self.feedback],
        }
        tmp = self.directory / (self.SNAPSHOT_NAME + ".tmp")
        tmp.write_text(json.dumps(snap, sort_keys=True, indent=1), encoding="utf-8")
        tmp.replace(self.directory / self.SNAPSHOT_NAME)

    # -- mutations ---------------------------------------------------------

    def put_contact(self, contact_id: str, name: str = "") -> dict:
        if not contact_id:
            raise AgendaError("contact id must be nonempty", field="id")
        self._append({"op": "put_contact", "data": {"id": contact_id, "name": name}})
        return self.contacts[contact_id]

    def put_relationship(self, contact_id: str, raw: dict) -> dict:
        if contact_id not in self.contacts:
            raise UnknownContact(f"contact {contact_id!r} does not exist", field="contact_id")
        rel = validate_relationship(raw)
        rel["contact_id"] = contact_id
        self._append({"op": "put_relationship", "data": rel})
        return self.relationships[contact_id]

    def put_meeting(self, raw: dict) -> Meeting:
        data = dict(raw)
        if not data.get("id"):
            data["id"] = f"m{len(self.meetings) + 1:05d}"
        if data["id"] in self.meetings:
            raise InvalidMeeting(f"meeting {data['id']!r} already exists", field="id")
        if data.get("contact_id") not in self.contacts:
            raise UnknownContact(
                f"contact {data.get('contact_id')!r} does not exist", field="contact_id"
            )
        if not data.get("created_at"):
            data["created_at"] = datetime.now().astimezone().isoformat()
        meeting = Meeting.from_dict(data)
        self._append({"op": "put_meeting", "data": meeting.to_dict()})
        return meeting

    def conflicts(self) -> list[Conflict]:
        return detect_conflicts(list(self.meetings.values()))

    def get_conflict(self, cid: str) -> Conflict:
        for c in self.conflicts():
            if c.id == cid:
                return c
        raise UnknownConflict(f"conflict {cid!r} does not exist", field="conflict_id")

    def record_feedback(self, event: FeedbackEvent) -> int:
        self.get_conflict(event.conflict_id)  # raises if unknown
        if event.decision not in ("accepted", "overrode"):
            raise AgendaError(
                f"decision must be accepted or overrode, got {event.decision!r}",
                field="decision",
            )
        if event.suggested_meeting_id not in self.meetings:
            raise UnknownMeeting(
                f"meeting {event.suggested_meeting_id!r} does not exist",
                field="suggested_meeting_id",
            )
        self._append({"op": "feedback", "data": event.to_dict()})
        return len(self.feedback)

    # -- feature assembly --------------------------------------------------

    def features_for(self, meeting: Meeting) -> SocialSituationFeatures:
        rel = self.relationships.get(meeting.contact_id)
        if rel is None:
            raise MissingRelationship(
                f"no relationship stored for contact {meeting.contact_id!r}",
                field="contact_id",
            )
        data = {cue: getattr(meeting, cue) for cue in SITUATION_CUE_FIELDS}
        data.update({k: rel.get(k) for k in RELATIONSHIP_FIELDS})
        return SocialSituationFeatures(**data)


# ---------------------------------------------------------------------------
# Suggestion assembly

_ENCODER = FeatureEncoder()
_PROFILE_ENCODER = ProfileEncoder()


def _pick_level1_feature(
    fa: SocialSituationFeatures,
    fb: SocialSituationFeatures,
    chosen: str,
    ranking: Sequence[str],
    directions: dict[str, str],
    lexicon: dict,
) -> Optional[str]:
    """Highest-salience level-1 feature that differs between the meetings
    and whose direction supports the chosen one."""
    pool_first = [f for f in ranking if f in LEVEL1_POOL] + [
        f for f in ranking if f not in LEVEL1_POOL
    ]
    for name in pool_first:
        if name not in lexicon["level1"]:
            continue
        va, vb = getattr(fa, name), getattr(fb, name)
        if va == vb or va is None or vb is None:
            continue
        cv, ov = (va, vb) if chosen == "a" else (vb, va)
        if _is_ordinal_feature(name):
            score = _direction_score(directions.get(name))
            if score == 0:
                continue
            if (cv > ov) == (score > 0):
                return name
        else:
            if _direction_score(directions.get(f"{name}={cv}")) > _direction_score(
                directions.get(f"{name}={ov}")
            ):
                return name
    return None


def _pick_level2_feature(
    profile_a,
    profile_b,
    chosen: str,
    ranking: Sequence[str],
    directions: dict[str, str],
) -> Optional[str]:
    pool_first = [c for c in ranking if c in LEVEL2_POOL] + [
        c for c in ranking if c not in LEVEL2_POOL
    ]
    for name in pool_first:
        if name not in CHARACTERISTICS:
            continue
        ca = classify_relevance(getattr(profile_a, name), profile_a.scale_max)
        cb = classify_relevance(getattr(profile_b, name), profile_b.scale_max)
        if ca == cb:
            continue
        chosen_class = ca if chosen == "a" else cb
        score = _direction_score(directions.get(name))
        if score == 0:
            continue
        if (chosen_class == "high") == (score > 0):
            return name
    return None


def suggest(store: AgendaStore, model: PipelineModel, cid: str, user_name: str = "Alice") -> dict:
    """Resolve a conflict into a suggestion payload: predicted priorities,
    the chosen meeting, both explanation styles and attribution summaries."""
    if model is None:
        raise ModelNotLoaded("no pipeline model loaded")
    conflict = store.get_conflict(cid)
    m1 = store.meetings[conflict.meeting_ids[0]]
    m2 = store.meetings[conflict.meeting_ids[1]]
    f1 = store.features_for(m1)
    f2 = store.features_for(m2)
    prof1 = predict_profile(model, f1)
    prof2 = predict_profile(model, f2)
    pr1 = predict_priority(model, features=f1).value
    pr2 = predict_priority(model, features=f2).value
    if pr1 == pr2:
        chosen = "a" if m1.created_at <= m2.created_at else "b"
    else:
        chosen = "a" if pr1 > pr2 else "b"
    chosen_meeting = m1 if chosen == "a" else m2
    other_meeting = m2 if chosen == "a" else m1
    chosen_label = "1" if chosen == "a" else "2"
    other_label = "2" if chosen == "a" else "1"

    lexicon = load_lexicon()
    directions: dict[str, str] = {}
    ranking_l1: Sequence[str] = LEVEL1_POOL
    ranking_l2: Sequence[str] = LEVEL2_POOL
    if model.salience:
        directions.update(model.salience["level1"].direction)
        directions.update(model.salience["level2"].direction)
        ranking_l1 = model.salience["level1"].ranking
        ranking_l2 = model.salience["level2"].ranking

    feat1 = _pick_level1_feature(f1, f2, chosen, ranking_l1, directions, lexicon)
    if feat1 is not None:
        cv, ov = (
            (getattr(f1, feat1), getattr(f2, feat1))
            if chosen == "a"
            else (getattr(f2, feat1), getattr(f1, feat1))
        )
        text1 = _level1_text(user_name, chosen_label, other_label, feat1, cv, ov, lexicon)
        kind = lexicon["level1"][feat1]["kind"]
        exp1 = Explanation(style="level1", text=text1, cited_feature=feat1,
                           template_id=f"level1/{kind}")
    else:
        exp1 = _fallback_explanation(user_name, chosen_label, "level1")

    feat2 = _pick_level2_feature(prof1, prof2, chosen, ranking_l2, directions)
    if feat2 is not None:
        chosen_prof = prof1 if chosen == "a" else prof2
        chosen_is_high = classify_relevance(getattr(chosen_prof, feat2), 6) == "high"
        text2 = _level2_text(user_name, chosen_label, other_label, feat2, chosen_is_high, lexicon)
        exp2 = Explanation(
            style="level2", text=text2, cited_feature=feat2,
            template_id="level2/high" if chosen_is_high else "level2/low",
        )
    else:
        exp2 = _fallback_explanation(user_name, chosen_label, "level2")

    attributions = {}
    for meeting, feats in ((m1, f1), (m2, f2)):
        att = shap_fast(model.features_priority_model, _ENCODER.encode(feats).values)
        attributions[meeting.id] = {
            "base_value": att.base_value,
            "prediction_raw": att.prediction_raw,
            "grouped_phi": att.grouped(),
        }

    salient = feat2 if feat2 is not None else next(
        (c for c in ranking_l2 if c in LEVEL2_POOL), "duty"
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "conflict": conflict.to_dict(),
        "suggestion": {
            "meeting_id": chosen_meeting.id,
            "other_meeting_id": other_meeting.id,
            "label": chosen_label,
            "tie_breaker": "model_score",
        },
        "priorities": {m1.id: pr1, m2.id: pr2},
        "profiles": {m1.id: prof1.to_dict(), m2.id: prof2.to_dict()},
        "salient_feature": salient,
        "explanations": {
            "level1": {
                "text": exp1.text,
                "cited_feature": exp1.cited_feature,
                "template_id": exp1.template_id,
            },
            "level2": {
                "text": exp2.text,
                "cited_feature": exp2.cited_feature,
                "template_id": exp2.template_id,
            },
        },
        "attributions": attributions,
    }


def _fallback_explanation(user: str, chosen_label: str, style: str) -> Explanation:
    return Explanation(
        style=style,
        text=f"{user} should attend Meeting {chosen_label} because it has a higher predicted priority.",
        cited_feature="predicted_priority",
        template_id=f"{style}/fallback",
    )
