"""Core domain types: social situation features, situation profiles, priority.

All scales and enum tokens are defined here and mirrored verbatim in
``docs/data-dictionary.md``. Parsers and the HTTP layer validate against
these definitions; nothing downstream re-checks ranges.

Every type is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional

DATA_DICTIONARY_VERSION = "1.0"

SETTINGS = ("work", "casual", "family", "other")
EVENT_FREQUENCIES = ("first_time", "rarely", "monthly", "weekly", "daily")
INITIATORS = ("user", "other_person", "external")
HELP_DYNAMICS = ("giving_help", "receiving_help", "neither")
ROLES = (
    "supervisor",
    "colleague",
    "friend",
    "family_member",
    "partner",
    "acquaintance",
    "other",
)
HIERARCHY_LEVELS = ("lower", "equal", "higher")

ENUM_FIELDS = {
    "setting": SETTINGS,
    "event_frequency": EVENT_FREQUENCIES,
    "initiator": INITIATORS,
    "help_dynamic": HELP_DYNAMICS,
    "role": ROLES,
    "hierarchy_level": HIERARCHY_LEVELS,
}

ORDINAL_FIELDS = {
    "contact_frequency": (1, 7),
    "geographical_distance": (1, 5),
    "relationship_quality": (1, 7),
    "depth_of_acquaintance": (1, 7),
    "formality_level": (1, 7),
    "shared_interests": (1, 7),
}

# Canonical field order, shared by the encoder, the CSV schema and the UI.
FEATURE_FIELDS = (
    "setting",
    "event_frequency",
    "initiator",
    "help_dynamic",
    "role",
    "hierarchy_level",
    "contact_frequency",
    "geographical_distance",
    "years_known",
    "relationship_quality",
    "depth_of_acquaintance",
    "formality_level",
    "shared_interests",
    "age_difference",
)

SITUATION_CUE_FIELDS = ("setting", "event_frequency", "initiator", "help_dynamic")
RELATIONSHIP_FIELDS = tuple(
    f for f in FEATURE_FIELDS if f not in SITUATION_CUE_FIELDS
)

# The eight psychological characteristics, in canonical vectorization order.
# Attribution indices, model targets and the profile CSV columns all follow
# this order.
CHARACTERISTICS = (
    "duty",
    "intellect",
    "adversity",
    "mating",
    "positivity",
    "negativity",
    "deception",
    "sociality",
)

CHARACTERISTIC_SCALE = (1, 6)
PRIORITY_SCALE = (1, 7)

# Prediction targets and the closed range model outputs are clamped to.
TARGET_RANGES = {name: CHARACTERISTIC_SCALE for name in CHARACTERISTICS}
TARGET_RANGES["priority"] = PRIORITY_SCALE


class DomainError(ValueError):
    """Base class for domain validation failures."""


class OutOfRangeScore(DomainError):
    pass


class UnsupportedScale(DomainError):
    pass


@dataclass(frozen=True)
class FieldViolation:
    kind: str  # missing_field | out_of_range | unknown_enum_value | bad_type
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


class ValidationError(DomainError):
    """Carries every violation found, not just the first."""

    def __init__(self, violations: Iterable[FieldViolation]):
        self.violations = tuple(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    def fields(self) -> tuple[str, ...]:
        return tuple(v.field for v in self.violations)


def classify_relevance(score: float, scale_max: int) -> str:
    """Classify a characteristic score as 'high' or 'low' relevance.

    High means strictly above the scale midpoint (4 on the 1..7 scale,
    3.5 on 1..6). A score exactly at the midpoint is low.
    """
    if scale_max not in (6, 7):
        raise UnsupportedScale(f"unsupported scale max {scale_max!r}; expected 6 or 7")
    if not 1 <= score <= scale_max:
        raise OutOfRangeScore(f"score {score!r} outside [1, {scale_max}]")
    midpoint = (1 + scale_max) / 2
    return "high" if score > midpoint else "low"


def _check_enum(name: str, value: Any, out: list[FieldViolation]) -> Optional[str]:
    tokens = ENUM_FIELDS[name]
    if not isinstance(value, str) or value not in tokens:
        out.append(
            FieldViolation(
                "unknown_enum_value",
                name,
                f"{value!r} is not one of {', '.join(tokens)}",
            )
        )
        return None
    return value


def _check_number(name: str, value: Any, out: list[FieldViolation]) -> Optional[float]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                out.append(FieldViolation("bad_type", name, f"{value!r} is not numeric"))
                return None
        else:
            out.append(FieldViolation("bad_type", name, f"{value!r} is not numeric"))
            return None
    return float(value)


@dataclass(frozen=True)
class SocialSituationFeatures:
    """Level-1 description of a meeting: 4 situation cues + relationship features."""

    setting: str
    event_frequency: str
    initiator: str
    help_dynamic: str
    role: str
    hierarchy_level: str
    contact_frequency: int
    geographical_distance: int
    years_known: float
    relationship_quality: int
    depth_of_acquaintance: int
    formality_level: int
    shared_interests: int
    age_difference: Optional[float] = None

    def __post_init__(self):
        violations: list[FieldViolation] = []
        for name in ENUM_FIELDS:
            _check_enum(name, getattr(self, name), violations)
        for name, (lo, hi) in ORDINAL_FIELDS.items():
            value = _check_number(name, getattr(self, name), violations)
            if value is not None:
                if value != int(value) or not lo <= value <= hi:
                    violations.append(
                        FieldViolation(
                            "out_of_range",
                            name,
                            f"{getattr(self, name)!r} outside integer range {lo}..{hi}",
                        )
                    )
                else:
                    object.__setattr__(self, name, int(value))
        yk = _check_number("years_known", self.years_known, violations)
        if yk is not None:
            if yk < 0:
                violations.append(
                    FieldViolation("out_of_range", "years_known", f"{yk!r} is negative")
                )
            else:
                object.__setattr__(self, "years_known", yk)
        if self.age_difference is not None:
            ad = _check_number("age_difference", self.age_difference, violations)
            if ad is not None:
                object.__setattr__(self, "age_difference", ad)
        if violations:
            raise ValidationError(violations)

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in FEATURE_FIELDS}

    def replace(self, **changes: Any) -> "SocialSituationFeatures":
        data = self.to_dict()
        data.update(changes)
        return SocialSituationFeatures(**data)


def validate_features(raw: Mapping[str, Any]) -> SocialSituationFeatures:
    """Validate a raw field map into SocialSituationFeatures.

    Collects every violation (missing fields, enum and range errors) before
    raising, so callers can report them all at once. ``age_difference`` is
    the only optional field; empty string or None means absent.
    """
    violations: list[FieldViolation] = []
    known = set(FEATURE_FIELDS)
    for name in raw:
        if name not in known:
            violations.append(
                FieldViolation("unknown_field", name, "not a recognised feature field")
            )
    values: dict[str, Any] = {}
    for name in FEATURE_FIELDS:
        if name == "age_difference":
            v = raw.get(name)
            values[name] = None if v in (None, "") else v
            continue
        if name not in raw or raw[name] in (None, ""):
            violations.append(FieldViolation("missing_field", name, "field is missing"))
            continue
        values[name] = raw[name]
    # Coerce numeric strings up front so dataclass validation sees numbers.
    for name in list(values):
        if name in ORDINAL_FIELDS or name in ("years_known", "age_difference"):
            v = values[name]
            if isinstance(v, str):
                try:
                    values[name] = float(v)
                except ValueError:
                    pass
    if violations:
        # Still try to surface enum/range errors for the fields we do have.
        probe = dict(values)
        for name in FEATURE_FIELDS:
            probe.setdefault(name, _PLACEHOLDERS.get(name))
        try:
            SocialSituationFeatures(**probe)
        except ValidationError as err:
            reported = {v.field for v in violations}
            violations.extend(v for v in err.violations if v.field not in reported)
        raise ValidationError(violations)
    return SocialSituationFeatures(**values)


# Valid stand-ins used only to probe for further violations when fields are
# missing; never stored.
_PLACEHOLDERS: dict[str, Any] = {
    "setting": SETTINGS[0],
    "event_frequency": EVENT_FREQUENCIES[0],
    "initiator": INITIATORS[0],
    "help_dynamic": HELP_DYNAMICS[0],
    "role": ROLES[0],
    "hierarchy_level": HIERARCHY_LEVELS[0],
    "contact_frequency": 1,
    "geographical_distance": 1,
    "years_known": 0.0,
    "relationship_quality": 1,
    "depth_of_acquaintance": 1,
    "formality_level": 1,
    "shared_interests": 1,
    "age_difference": None,
}


def validate_relationship(raw: Mapping[str, Any]) -> dict[str, Any]:
    """Validate the 9+1 relationship fields alone (no situation cues).

    Used where relationships are stored independently of meetings. Returns a
    plain dict in canonical field order.
    """
    merged = dict(raw)
    for cue in SITUATION_CUE_FIELDS:
        if cue in merged:
            raise ValidationError(
                [FieldViolation("unknown_field", cue, "situation cue in relationship data")]
            )
        merged[cue] = _PLACEHOLDERS[cue]
    feats = validate_features(merged)
    return {name: getattr(feats, name) for name in RELATIONSHIP_FIELDS}


@dataclass(frozen=True)
class SituationProfile:
    """Level-2 DIAMONDS vector: the eight characteristics of one situation.

    Training labels are integers on the 6-point scale; model outputs are
    reals in the same interval. Study-2 style annotations use a 7-point
    scale, carried by ``scale_max``; scales are never mixed in one model.
    """

    duty: float
    intellect: float
    adversity: float
    mating: float
    positivity: float
    negativity: float
    deception: float
    sociality: float
    scale_max: int = 6

    def __post_init__(self):
        if self.scale_max not in (6, 7):
            raise UnsupportedScale(f"profile scale max {self.scale_max!r}")
        violations = []
        for name in CHARACTERISTICS:
            v = _check_number(name, getattr(self, name), violations)
            if v is None:
                continue
            if not 1 <= v <= self.scale_max:
                violations.append(
                    FieldViolation(
                        "out_of_range", name, f"{v!r} outside [1, {self.scale_max}]"
                    )
                )
            else:
                object.__setattr__(self, name, v)
        if violations:
            raise ValidationError(violations)

    def as_vector(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in CHARACTERISTICS)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in CHARACTERISTICS}

    @classmethod
    def from_vector(cls, values: Iterable[float], scale_max: int = 6) -> "SituationProfile":
        vals = list(values)
        if len(vals) != len(CHARACTERISTICS):
            raise ValidationError(
                [FieldViolation("bad_type", "profile", f"expected 8 components, got {len(vals)}")]
            )
        return cls(**dict(zip(CHARACTERISTICS, vals)), scale_max=scale_max)


@dataclass(frozen=True)
class Priority:
    """7-point priority rating; labels are integers, predictions reals."""

    value: float

    def __post_init__(self):
        violations: list[FieldViolation] = []
        v = _check_number("priority", self.value, violations)
        if v is not None:
            if not PRIORITY_SCALE[0] <= v <= PRIORITY_SCALE[1]:
                violations.append(
                    FieldViolation("out_of_range", "priority", f"{v!r} outside [1, 7]")
                )
            else:
                object.__setattr__(self, "value", v)
        if violations:
            raise ValidationError(violations)


def clamp_to_target(value: float, target: Optional[str]) -> float:
    """Clamp a raw model output to its target's declared Likert range."""
    if target is None:
        return value
    lo, hi = TARGET_RANGES[target]
    return min(max(value, float(lo)), float(hi))
