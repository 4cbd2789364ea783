"""Bundled synthetic dataset generator.

Ships so every pipeline claim is testable without the external survey data.
The ground-truth mapping is documented here and in the data dictionary:

- features are sampled independently (enums uniform, ordinals uniform
  integers, years_known gamma-ish, age_difference normal and absent for a
  fifth of contacts);
- each characteristic is an affine function of a few features plus Gaussian
  noise (``noise_sigma``, default 0.3), clipped to [1, 6];
- priority is affine in the realized duty and positivity (duty dominant),
  clipped to [1, 7];
- with ``integer_labels`` (default), profile and priority are rounded to the
  Likert grid the way survey answers would be.

Relationship features are drawn once per (participant, contact) pair and
shared by that pair's situations, mirroring how the real data was collected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import (
    EVENT_FREQUENCIES,
    HELP_DYNAMICS,
    HIERARCHY_LEVELS,
    INITIATORS,
    ROLES,
    SETTINGS,
    Priority,
    SituationProfile,
    SocialSituationFeatures,
)
from .ingest import DEFAULT_SEED, SituationRecord

PRIORITY_DUTY_COEF = 0.82
PRIORITY_POSITIVITY_COEF = 0.30
PRIORITY_INTERCEPT = 0.55


@dataclass(frozen=True)
class SynthSpec:
    n_situations: int = 600
    contacts_per_participant: int = 5
    situations_per_participant: int = 8
    noise_sigma: float = 0.3
    integer_labels: bool = True
    seed: int = DEFAULT_SEED


def _clip_scale(v: float, hi: int, integer: bool, rng_round=round) -> float:
    v = min(max(v, 1.0), float(hi))
    return float(rng_round(v)) if integer else v


def profile_truth(f: SocialSituationFeatures) -> dict[str, float]:
    """Noise-free characteristic scores for a feature vector (pre-clipping)."""
    w = 1.0 if f.setting == "work" else 0.0
    leisure = 1.0 if f.setting in ("casual", "family") else 0.0
    return {
        "duty": 1.2 + 2.8 * w + 1.0 * (f.help_dynamic == "giving_help") + 0.18 * f.formality_level,
        "intellect": 1.0 + 2.2 * w + 0.25 * f.shared_interests,
        "adversity": 1.0
        + 1.6 * (f.hierarchy_level == "higher")
        + 1.2 * (f.initiator == "other_person")
        + 0.1 * (8 - f.relationship_quality),
        "mating": 1.0 + 3.5 * (f.role == "partner") + 0.8 * (f.setting == "casual"),
        "positivity": 1.2 + 1.8 * leisure + 0.45 * f.relationship_quality - 0.8 * w,
        "negativity": 0.8
        + 1.5 * (f.hierarchy_level == "higher")
        + 0.35 * (8 - f.relationship_quality)
        + 0.8 * (f.help_dynamic == "receiving_help"),
        "deception": 1.0
        + 1.1 * (f.role == "acquaintance")
        + 0.25 * (8 - f.depth_of_acquaintance),
        "sociality": 1.5 + 1.5 * leisure + 0.4 * f.shared_interests,
    }


def priority_truth(duty: float, positivity: float) -> float:
    """Priority is affine in the realized profile: duty carries the signal."""
    return PRIORITY_INTERCEPT + PRIORITY_DUTY_COEF * duty + PRIORITY_POSITIVITY_COEF * positivity


def _sample_relationship(rng: np.random.Generator) -> dict:
    return {
        "role": ROLES[rng.integers(len(ROLES))],
        "hierarchy_level": HIERARCHY_LEVELS[rng.integers(len(HIERARCHY_LEVELS))],
        "contact_frequency": int(rng.integers(1, 8)),
        "geographical_distance": int(rng.integers(1, 6)),
        "years_known": float(round(rng.gamma(2.0, 4.0), 1)),
        "relationship_quality": int(rng.integers(1, 8)),
        "depth_of_acquaintance": int(rng.integers(1, 8)),
        "formality_level": int(rng.integers(1, 8)),
        "shared_interests": int(rng.integers(1, 8)),
        "age_difference": (
            float(round(rng.normal(0.0, 9.0), 1)) if rng.random() < 0.8 else None
        ),
    }


def generate(spec: Optional[SynthSpec] = None) -> list[SituationRecord]:
    spec = spec or SynthSpec()
    rng = np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, 0x57A7])
    n_participants = max(1, -(-spec.n_situations // spec.situations_per_participant))
    relationships: dict[tuple[str, str], dict] = {}
    for p in range(n_participants):
        pid = f"p{p:04d}"
        for c in range(spec.contacts_per_participant):
            relationships[(pid, f"{pid}-c{c}")] = _sample_relationship(rng)
    records: list[SituationRecord] = []
    for i in range(spec.n_situations):
        pid = f"p{i // spec.situations_per_participant:04d}"
        cid = f"{pid}-c{rng.integers(spec.contacts_per_participant)}"
        rel = relationships[(pid, cid)]
        features = SocialSituationFeatures(
            setting=SETTINGS[rng.integers(len(SETTINGS))],
            event_frequency=EVENT_FREQUENCIES[rng.integers(len(EVENT_FREQUENCIES))],
            initiator=INITIATORS[rng.integers(len(INITIATORS))],
            help_dynamic=HELP_DYNAMICS[rng.integers(len(HELP_DYNAMICS))],
            **rel,
        )
        truth = profile_truth(features)
        scored = {
            name: _clip_scale(v + rng.normal(0.0, spec.noise_sigma), 6, spec.integer_labels)
            for name, v in truth.items()
        }
        profile = SituationProfile(**scored)
        pr = _clip_scale(
            priority_truth(scored["duty"], scored["positivity"]), 7, spec.integer_labels
        )
        records.append(
            SituationRecord(
                participant_id=pid,
                contact_id=cid,
                features=features,
                profile=profile,
                priority=Priority(pr),
            )
        )
    return records
