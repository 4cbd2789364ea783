"""Comparative explanations for meeting suggestions.

Works on scenario pairs: two meetings sharing every feature but one, and
every characteristic relevance class but one. The suggestion follows the
direction the differing feature pushes priority; the explanation cites only
that feature, phrased as a comparison, in one of three styles (feature
level, characteristic level, or the deliberately irrelevant control).

Phrase fragments live in ``fixtures/explanation_lexicon.json``; they are a
reviewed fixture, not code. The eight curated pairs used by the ``pairs``
command are in ``fixtures/scenario_pairs.json``; only the help-dynamic/duty
pair and the relationship-quality/negativity texts are published verbatim,
the rest are reconstructions and flagged as such in the file.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional

from .domain import (
    CHARACTERISTICS,
    FEATURE_FIELDS,
    ORDINAL_FIELDS,
    classify_relevance,
)
from .ingest import SituationRecord

# Feature pools the explanations draw from in free-form mode: the features
# that carry the most weight when predicting priority, per level.
LEVEL1_POOL = (
    "setting",
    "help_dynamic",
    "role",
    "relationship_quality",
    "age_difference",
    "shared_interests",
)
LEVEL2_POOL = ("duty", "intellect", "positivity", "negativity")

CONTROL_POOL = ("weather", "season", "geographical_location", "time")

STYLES = ("level1", "level2", "control")


class ExplanationError(ValueError):
    pass


class NoDifference(ExplanationError):
    pass


class AmbiguousPair(ExplanationError):
    pass


class ConflictingLevels(ExplanationError):
    pass


class IndeterminateDirection(ExplanationError):
    pass


class UnknownTemplate(ExplanationError):
    pass


@dataclass(frozen=True)
class ScenarioPair:
    pair_id: str
    meeting_a: SituationRecord
    meeting_b: SituationRecord
    description_a: str = ""
    description_b: str = ""
    user_name: str = "Alice"
    scale: int = 7
    known_features: tuple[str, ...] = ()

    def __post_init__(self):
        for rec in (self.meeting_a, self.meeting_b):
            if rec.profile is not None and rec.profile.scale_max != self.scale:
                raise ExplanationError(
                    f"pair {self.pair_id}: profile scale {rec.profile.scale_max} "
                    f"differs from declared scale {self.scale}"
                )

    def record(self, side: str) -> SituationRecord:
        return self.meeting_a if side == "a" else self.meeting_b

    def label(self, side: str) -> str:
        return "1" if side == "a" else "2"


@dataclass(frozen=True)
class Suggestion:
    chosen: str  # "a" | "b"
    tie_breaker_level: str  # level1 | level2 | model_score
    differing_feature: Optional[str]
    rationale_direction: Optional[str]  # increases | decreases
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Explanation:
    style: str
    text: str
    cited_feature: str
    template_id: str


def find_differing_level1(pair: ScenarioPair) -> str:
    """The unique social situation feature on which the meetings differ."""
    fields_to_check = pair.known_features or FEATURE_FIELDS
    differing = [
        name
        for name in fields_to_check
        if getattr(pair.meeting_a.features, name) != getattr(pair.meeting_b.features, name)
    ]
    if not differing:
        raise NoDifference(f"pair {pair.pair_id}: meetings share every feature")
    if len(differing) > 1:
        raise AmbiguousPair(
            f"pair {pair.pair_id}: {len(differing)} features differ: {', '.join(differing)}"
        )
    return differing[0]


def find_differing_level2(pair: ScenarioPair) -> str:
    """The unique characteristic whose relevance class differs.

    Classes, not raw scores, are compared: both meetings may score a
    characteristic differently as long as both fall on the same side of the
    scale midpoint.
    """
    pa, pb = pair.meeting_a.profile, pair.meeting_b.profile
    if pa is None or pb is None:
        raise ExplanationError(f"pair {pair.pair_id}: both meetings need profiles")
    differing = [
        name
        for name in CHARACTERISTICS
        if classify_relevance(getattr(pa, name), pair.scale)
        != classify_relevance(getattr(pb, name), pair.scale)
    ]
    if not differing:
        raise NoDifference(f"pair {pair.pair_id}: no characteristic changes relevance class")
    if len(differing) > 1:
        raise AmbiguousPair(
            f"pair {pair.pair_id}: {len(differing)} characteristics flip class: "
            + ", ".join(differing)
        )
    return differing[0]


def _direction_score(direction: Optional[str]) -> int:
    if direction in ("increases", "increases_priority"):
        return 1
    if direction in ("decreases", "decreases_priority"):
        return -1
    return 0


def _is_ordinal_feature(name: str) -> bool:
    return name in ORDINAL_FIELDS or name in ("years_known", "age_difference")


def _favored_level1(pair: ScenarioPair, feature: str, directions: Mapping[str, str]) -> tuple[str, str]:
    va = getattr(pair.meeting_a.features, feature)
    vb = getattr(pair.meeting_b.features, feature)
    if _is_ordinal_feature(feature):
        score = _direction_score(directions.get(feature))
        if score == 0 or va == vb or va is None or vb is None:
            raise IndeterminateDirection(
                f"pair {pair.pair_id}: no usable direction for {feature}"
            )
        higher = "a" if va > vb else "b"
        lower = "b" if higher == "a" else "a"
        return (higher, "increases") if score > 0 else (lower, "decreases")
    sa = _direction_score(directions.get(f"{feature}={va}"))
    sb = _direction_score(directions.get(f"{feature}={vb}"))
    if sa == sb:
        raise IndeterminateDirection(
            f"pair {pair.pair_id}: values {va!r} and {vb!r} of {feature} point the same way"
        )
    return ("a", "increases") if sa > sb else ("b", "increases")


def _favored_level2(pair: ScenarioPair, characteristic: str, directions: Mapping[str, str]) -> tuple[str, str]:
    score = _direction_score(directions.get(characteristic))
    if score == 0:
        raise IndeterminateDirection(
            f"pair {pair.pair_id}: no usable direction for {characteristic}"
        )
    high_side = (
        "a"
        if classify_relevance(getattr(pair.meeting_a.profile, characteristic), pair.scale) == "high"
        else "b"
    )
    low_side = "b" if high_side == "a" else "a"
    return (high_side, "increases") if score > 0 else (low_side, "decreases")


def decide_suggestion(
    pair: ScenarioPair,
    directions: Optional[Mapping[str, str]] = None,
    priorities: Optional[Mapping[str, float]] = None,
    created_order: tuple[str, str] = ("a", "b"),
    mode: str = "curated",
) -> Suggestion:
    """Pick the meeting to attend.

    Curated mode resolves the differing feature at both levels and requires
    them to agree (pairs were built so the suggestion is the same either
    way); free-form mode takes the higher predicted priority, breaking exact
    ties toward the earlier-created meeting.
    """
    if mode == "model_score":
        if not priorities:
            raise ExplanationError("model_score mode needs predicted priorities")
        pa, pb = priorities["a"], priorities["b"]
        if pa == pb:
            chosen = created_order[0]
        else:
            chosen = "a" if pa > pb else "b"
        return Suggestion(
            chosen=chosen,
            tie_breaker_level="model_score",
            differing_feature=None,
            rationale_direction=None,
            details={"priorities": dict(priorities)},
        )
    if mode != "curated":
        raise ExplanationError(f"unknown suggestion mode {mode!r}")
    if directions is None:
        directions = {}
    f1 = find_differing_level1(pair)
    f2 = find_differing_level2(pair)
    side1, dir1 = _favored_level1(pair, f1, directions)
    side2, dir2 = _favored_level2(pair, f2, directions)
    if side1 != side2:
        raise ConflictingLevels(
            f"pair {pair.pair_id}: level 1 favors meeting {pair.label(side1)} "
            f"but level 2 favors meeting {pair.label(side2)}"
        )
    return Suggestion(
        chosen=side1,
        tie_breaker_level="level1",
        differing_feature=f1,
        rationale_direction=dir1,
        details={"level2_feature": f2, "level2_direction": dir2},
    )


# ---------------------------------------------------------------------------
# Rendering


def load_lexicon() -> dict:
    path = resources.files("socialagenda").joinpath("fixtures/explanation_lexicon.json")
    return json.loads(path.read_text(encoding="utf-8"))


def load_directions() -> dict[str, str]:
    """Bundled tie-breaker directions for the curated pairs (reconstructed
    from the published model behavior; live models supply their own)."""
    path = resources.files("socialagenda").joinpath("fixtures/directions.json")
    return json.loads(path.read_text(encoding="utf-8"))["directions"]


def load_scenario_pairs() -> list[dict]:
    path = resources.files("socialagenda").joinpath("fixtures/scenario_pairs.json")
    return json.loads(path.read_text(encoding="utf-8"))["pairs"]


def pair_from_fixture(entry: dict) -> ScenarioPair:
    from .domain import SituationProfile, SocialSituationFeatures

    scale = int(entry.get("scale", 7))

    def record(side: str) -> SituationRecord:
        return SituationRecord(
            participant_id=entry.get("user_name", "Alice"),
            contact_id=f"{entry['pair_id']}-{side}",
            features=SocialSituationFeatures(**entry[f"features_{side}"]),
            profile=SituationProfile(**entry[f"profile_{side}"], scale_max=scale),
            priority=None,
        )

    return ScenarioPair(
        pair_id=entry["pair_id"],
        meeting_a=record("a"),
        meeting_b=record("b"),
        description_a=entry.get("description_a", ""),
        description_b=entry.get("description_b", ""),
        user_name=entry.get("user_name", "Alice"),
        scale=scale,
        known_features=tuple(entry.get("known_features", ())),
    )


def _level1_text(
    user: str, chosen_label: str, other_label: str, feature: str,
    chosen_value, other_value, lexicon: dict,
) -> str:
    spec = lexicon["level1"].get(feature)
    if spec is None:
        raise UnknownTemplate(f"no level1 lexicon entry for {feature!r}")
    if spec["kind"] == "contrast":
        values = spec["values"]
        if str(chosen_value) not in values or str(other_value) not in values:
            raise UnknownTemplate(
                f"no lexicon phrases for {feature}={chosen_value!r} vs {other_value!r}"
            )
        chosen_spec = values[str(chosen_value)]
        other_spec = values[str(other_value)]
        return (
            f"{user} should attend Meeting {chosen_label} because {chosen_spec['clause']}, "
            f"while in Meeting {other_label} {other_spec['contrast']}, "
            f"and meetings {chosen_spec['generalization']} are usually prioritized."
        )
    if spec["kind"] == "comparative":
        side = "higher" if chosen_value > other_value else "lower"
        entry = spec[side]
        return (
            f"{user} should attend Meeting {chosen_label}, since in it {entry['clause']}, "
            f"and meetings {entry['generalization']} are usually prioritized."
        )
    raise UnknownTemplate(f"unknown level1 template kind {spec['kind']!r}")


def _level2_text(
    user: str, chosen_label: str, other_label: str, characteristic: str,
    chosen_is_high: bool, lexicon: dict,
) -> str:
    spec = lexicon["level2"].get(characteristic)
    if spec is None:
        raise UnknownTemplate(f"no level2 lexicon entry for {characteristic!r}")
    term = spec["term"]
    if chosen_is_high:
        return (
            f"{user} should attend Meeting {chosen_label} because it involves a higher level "
            f"of {term}, which means {spec['gloss']}, and meetings involving a higher level "
            f"of {term} are usually prioritized."
        )
    return (
        f"{user} should attend Meeting {chosen_label}, since Meeting {other_label} could "
        f"entail a high level of {term}, and meetings that entail a low level of {term} "
        f"are usually prioritized."
    )


def _control_text(user: str, chosen_label: str, pair_id: str, lexicon: dict) -> tuple[str, str]:
    # Deterministic pull from the irrelevant pool, stable across runs.
    idx = zlib.crc32(pair_id.encode("utf-8")) % len(CONTROL_POOL)
    feature = CONTROL_POOL[idx]
    clause = lexicon["control"][feature]
    ordinal = "first" if chosen_label == "1" else "second"
    return f"{user} should attend the {ordinal} meeting because {clause}.", feature


def render_explanation(
    suggestion: Suggestion,
    style: str,
    pair: ScenarioPair,
    lexicon: Optional[dict] = None,
) -> Explanation:
    """Fill the style's template for a resolved suggestion. level1/level2
    texts mention exactly the differing feature; control cites one item from
    the irrelevant pool, chosen deterministically by pair id."""
    if style not in STYLES:
        raise UnknownTemplate(f"unknown explanation style {style!r}")
    lexicon = lexicon or load_lexicon()
    chosen = suggestion.chosen
    other = "b" if chosen == "a" else "a"
    chosen_label, other_label = pair.label(chosen), pair.label(other)
    if style == "control":
        text, feature = _control_text(pair.user_name, chosen_label, pair.pair_id, lexicon)
        return Explanation(style=style, text=text, cited_feature=feature,
                           template_id="control")
    if style == "level1":
        feature = find_differing_level1(pair)
        text = _level1_text(
            pair.user_name, chosen_label, other_label, feature,
            getattr(pair.record(chosen).features, feature),
            getattr(pair.record(other).features, feature),
            lexicon,
        )
        kind = lexicon["level1"][feature]["kind"]
        return Explanation(style=style, text=text, cited_feature=feature,
                           template_id=f"level1/{kind}")
    characteristic = find_differing_level2(pair)
    chosen_is_high = (
        classify_relevance(getattr(pair.record(chosen).profile, characteristic), pair.scale)
        == "high"
    )
    text = _level2_text(
        pair.user_name, chosen_label, other_label, characteristic, chosen_is_high, lexicon
    )
    return Explanation(
        style="level2", text=text, cited_feature=characteristic,
        template_id="level2/high" if chosen_is_high else "level2/low",
    )


def mention_markers(lexicon: Optional[dict] = None) -> dict[str, tuple[str, ...]]:
    """Per-feature marker phrases used to check that a rendered text talks
    about one feature only."""
    lexicon = lexicon or load_lexicon()
    return {name: tuple(phrases) for name, phrases in lexicon["mention_markers"].items()}
