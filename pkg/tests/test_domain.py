import pytest

from socialagenda.domain import (
    CHARACTERISTICS,
    FEATURE_FIELDS,
    OutOfRangeScore,
    Priority,
    SituationProfile,
    UnsupportedScale,
    ValidationError,
    classify_relevance,
    validate_features,
    validate_relationship,
)

VALID = {
    "setting": "work",
    "event_frequency": "weekly",
    "initiator": "other_person",
    "help_dynamic": "giving_help",
    "role": "colleague",
    "hierarchy_level": "equal",
    "contact_frequency": 4,
    "geographical_distance": 1,
    "years_known": 3.5,
    "relationship_quality": 5,
    "depth_of_acquaintance": 4,
    "formality_level": 5,
    "shared_interests": 4,
    "age_difference": -2.0,
}


class TestClassifyRelevance:
    def test_above_midpoint_is_high(self):
        assert classify_relevance(5, 7) == "high"

    def test_exactly_midpoint_is_low(self):
        # Only strictly above the midpoint counts as high relevance.
        assert classify_relevance(4, 7) == "low"

    def test_minimum_is_low(self):
        assert classify_relevance(1, 6) == "low"

    def test_six_point_midpoint(self):
        assert classify_relevance(3.5, 6) == "low"
        assert classify_relevance(3.6, 6) == "high"

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeScore):
            classify_relevance(0.5, 7)
        with pytest.raises(OutOfRangeScore):
            classify_relevance(7.5, 7)

    def test_unsupported_scale(self):
        with pytest.raises(UnsupportedScale):
            classify_relevance(3, 5)

    def test_monotone(self):
        # once high, any greater score stays high
        for scale in (6, 7):
            scores = [1 + i * 0.25 for i in range(4 * (scale - 1) + 1)]
            classes = [classify_relevance(s, scale) for s in scores]
            first_high = classes.index("high")
            assert all(c == "high" for c in classes[first_high:])
            assert all(c == "low" for c in classes[:first_high])


class TestValidateFeatures:
    def test_valid_map(self):
        feats = validate_features(VALID)
        assert feats.setting == "work"
        assert feats.contact_frequency == 4
        assert feats.age_difference == -2.0

    def test_missing_field_named(self):
        raw = dict(VALID)
        del raw["setting"]
        with pytest.raises(ValidationError) as exc:
            validate_features(raw)
        assert "setting" in exc.value.fields()

    def test_unknown_enum_named(self):
        raw = dict(VALID, hierarchy_level="boss")
        with pytest.raises(ValidationError) as exc:
            validate_features(raw)
        violation = [v for v in exc.value.violations if v.field == "hierarchy_level"]
        assert violation and violation[0].kind == "unknown_enum_value"

    def test_collects_all_violations(self):
        raw = dict(VALID, setting="space", contact_frequency=9)
        del raw["role"]
        with pytest.raises(ValidationError) as exc:
            validate_features(raw)
        assert set(exc.value.fields()) >= {"setting", "contact_frequency", "role"}

    def test_ordinal_range_enforced(self):
        with pytest.raises(ValidationError):
            validate_features(dict(VALID, geographical_distance=6))

    def test_negative_years_rejected(self):
        with pytest.raises(ValidationError) as exc:
            validate_features(dict(VALID, years_known=-1))
        assert "years_known" in exc.value.fields()

    def test_optional_age_difference(self):
        raw = dict(VALID)
        raw["age_difference"] = ""
        feats = validate_features(raw)
        assert feats.age_difference is None

    def test_numeric_strings_coerced(self):
        raw = {k: str(v) for k, v in VALID.items()}
        feats = validate_features(raw)
        assert feats.contact_frequency == 4
        assert feats.years_known == 3.5

    def test_round_trip(self):
        feats = validate_features(VALID)
        again = validate_features(feats.to_dict())
        assert again == feats

    def test_relationship_subset(self):
        rel = {k: VALID[k] for k in VALID if k not in
               ("setting", "event_frequency", "initiator", "help_dynamic")}
        validated = validate_relationship(rel)
        assert validated["role"] == "colleague"
        with pytest.raises(ValidationError):
            validate_relationship(dict(rel, setting="work"))


class TestSituationProfile:
    def test_vector_order_is_canonical(self):
        profile = SituationProfile(duty=6, intellect=5, adversity=1, mating=2,
                                   positivity=3, negativity=4, deception=1, sociality=2)
        assert profile.as_vector() == (6, 5, 1, 2, 3, 4, 1, 2)
        assert CHARACTERISTICS == ("duty", "intellect", "adversity", "mating",
                                   "positivity", "negativity", "deception", "sociality")

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            SituationProfile(duty=7, intellect=1, adversity=1, mating=1,
                             positivity=1, negativity=1, deception=1, sociality=1)

    def test_seven_point_scale(self):
        profile = SituationProfile(duty=7, intellect=1, adversity=1, mating=1,
                                   positivity=1, negativity=1, deception=1,
                                   sociality=1, scale_max=7)
        assert profile.duty == 7

    def test_from_vector_round_trip(self):
        values = (1.5, 2, 3, 4, 5, 6, 1, 2.25)
        profile = SituationProfile.from_vector(values)
        assert profile.as_vector() == values
        assert SituationProfile.from_vector(profile.as_vector()) == profile

    def test_wrong_length_rejected(self):
        with pytest.raises(ValidationError):
            SituationProfile.from_vector([1, 2, 3])


class TestPriority:
    def test_bounds(self):
        assert Priority(7).value == 7
        with pytest.raises(ValidationError):
            Priority(0.5)
        with pytest.raises(ValidationError):
            Priority(7.5)


def test_feature_fields_cover_dataclass():
    feats = validate_features(VALID)
    assert tuple(feats.to_dict()) == FEATURE_FIELDS


def test_features_are_immutable():
    feats = validate_features(VALID)
    with pytest.raises(Exception):
        feats.setting = "casual"
