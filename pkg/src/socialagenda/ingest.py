"""Dataset parsing, feature encoding and reproducible train/test splits.

CSV schemas are fixed by the data dictionary (docs/data-dictionary.md).
External datasets with different column names are bridged by an adapter
config: a ``key=value`` remap file, external name on the left.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from .domain import (
    CHARACTERISTICS,
    ENUM_FIELDS,
    FEATURE_FIELDS,
    ORDINAL_FIELDS,
    RELATIONSHIP_FIELDS,
    Priority,
    SituationProfile,
    SocialSituationFeatures,
    ValidationError,
    validate_features,
)

ID_COLUMNS = ("participant_id", "contact_id")
SITUATIONS_HEADER = ID_COLUMNS + FEATURE_FIELDS + CHARACTERISTICS + ("priority",)
RELATIONSHIPS_HEADER = ID_COLUMNS + RELATIONSHIP_FIELDS

DEFAULT_SEED = 2224


class IngestError(ValueError):
    pass


class HeaderMismatch(IngestError):
    def __init__(self, missing: Sequence[str], unexpected: Sequence[str]):
        self.missing = tuple(missing)
        self.unexpected = tuple(unexpected)
        parts = []
        if missing:
            parts.append(f"missing columns: {', '.join(missing)}")
        if unexpected:
            parts.append(f"unexpected columns: {', '.join(unexpected)}")
        super().__init__("; ".join(parts) or "header mismatch")


class RowError(IngestError):
    """All malformed rows of one file, keyed by 1-based data row number."""

    def __init__(self, errors: Sequence[tuple[int, str]]):
        self.errors = tuple(errors)
        super().__init__(
            "; ".join(f"row {n}: {msg}" for n, msg in self.errors)
        )

    def rows(self) -> tuple[int, ...]:
        return tuple(n for n, _ in self.errors)


class TooFewRecords(IngestError):
    pass


@dataclass(frozen=True)
class SituationRecord:
    participant_id: str
    contact_id: str
    features: SocialSituationFeatures
    profile: Optional[SituationProfile] = None
    priority: Optional[Priority] = None

    def __post_init__(self):
        if not self.participant_id or not self.contact_id:
            raise IngestError("participant_id and contact_id must be nonempty")

    def to_row(self) -> dict[str, str]:
        row = {"participant_id": self.participant_id, "contact_id": self.contact_id}
        for name in FEATURE_FIELDS:
            v = getattr(self.features, name)
            row[name] = "" if v is None else str(v)
        for name in CHARACTERISTICS:
            row[name] = "" if self.profile is None else _fmt(getattr(self.profile, name))
        row["priority"] = "" if self.priority is None else _fmt(self.priority.value)
        return row


def _fmt(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


def read_adapter_config(path: Union[str, Path]) -> dict[str, str]:
    """Parse a column remap file: one ``external=canonical`` pair per line."""
    remap: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IngestError(f"bad adapter line (expected key=value): {raw!r}")
        ext, canon = (part.strip() for part in line.split("=", 1))
        remap[ext] = canon
    return remap


def _open(source: Union[str, Path, IO[str], IO[bytes], bytes]) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        try:
            return io.StringIO(source.decode("utf-8"))
        except UnicodeDecodeError as err:
            raise IngestError(f"stream is not UTF-8: {err}")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def _check_header(got: Sequence[str], expected: Sequence[str]) -> None:
    got_set, exp_set = set(got), set(expected)
    if got_set != exp_set:
        raise HeaderMismatch(
            missing=[c for c in expected if c not in got_set],
            unexpected=[c for c in got if c not in exp_set],
        )


def parse_situations(
    source: Union[str, Path, IO[str], IO[bytes], bytes],
    scale: int = 6,
    remap: Optional[dict[str, str]] = None,
) -> list[SituationRecord]:
    """Parse a situations CSV into records.

    Either returns every record or raises with every malformed row listed;
    there is no partial acceptance. ``scale`` flags the characteristic scale
    the dataset was annotated on (6 for the original study data, 7 for
    study-2 style annotations).
    """
    stream = _open(source)
    reader = _reader_for(stream, SITUATIONS_HEADER, remap)
    records: list[SituationRecord] = []
    errors: list[tuple[int, str]] = []
    for i, row in _iterate_rows(reader, remap):
        try:
            records.append(_situation_from_row(row, scale))
        except (ValidationError, IngestError, ValueError) as err:
            errors.append((i, str(err)))
    if errors:
        raise RowError(errors)
    return records


def _reader_for(stream: IO[str], expected: Sequence[str], remap) -> csv.DictReader:
    # Total parsing: undecodable or structurally broken streams become
    # structured errors, never stray exceptions.
    try:
        reader = csv.DictReader(stream)
        fieldnames = reader.fieldnames
    except (csv.Error, UnicodeDecodeError) as err:
        raise HeaderMismatch(missing=list(expected), unexpected=[f"unreadable header: {err}"])
    if fieldnames is None:
        raise HeaderMismatch(missing=list(expected), unexpected=[])
    names = [remap.get(c, c) if remap else c for c in fieldnames]
    _check_header(names, expected)
    return reader


def _iterate_rows(reader: csv.DictReader, remap):
    i = 0
    while True:
        try:
            raw = next(reader)
        except StopIteration:
            return
        except (csv.Error, UnicodeDecodeError) as err:
            raise RowError([(i + 1, f"unreadable row: {err}")])
        i += 1
        yield i, {remap.get(k, k) if remap else k: v for k, v in raw.items()}


def _situation_from_row(row: dict[str, str], scale: int) -> SituationRecord:
    features = validate_features({k: row.get(k, "") for k in FEATURE_FIELDS})
    char_values = [row.get(c, "") for c in CHARACTERISTICS]
    present = [v not in ("", None) for v in char_values]
    profile = None
    if any(present):
        if not all(present):
            missing = [c for c, p in zip(CHARACTERISTICS, present) if not p]
            raise IngestError(f"partial profile; missing {', '.join(missing)}")
        profile = SituationProfile.from_vector(
            [float(v) for v in char_values], scale_max=scale
        )
    priority = None
    if row.get("priority") not in ("", None):
        priority = Priority(float(row["priority"]))
    return SituationRecord(
        participant_id=row.get("participant_id", ""),
        contact_id=row.get("contact_id", ""),
        features=features,
        profile=profile,
        priority=priority,
    )


def parse_relationships(
    source: Union[str, Path, IO[str], IO[bytes], bytes],
    remap: Optional[dict[str, str]] = None,
) -> list[dict[str, object]]:
    """Parse a relationships CSV: one row per (participant, contact)."""
    from .domain import validate_relationship

    stream = _open(source)
    reader = _reader_for(stream, RELATIONSHIPS_HEADER, remap)
    out: list[dict[str, object]] = []
    errors: list[tuple[int, str]] = []
    for i, row in _iterate_rows(reader, remap):
        try:
            rel = validate_relationship({k: row.get(k, "") for k in RELATIONSHIP_FIELDS})
            if not row.get("participant_id") or not row.get("contact_id"):
                raise IngestError("participant_id and contact_id must be nonempty")
            rel["participant_id"] = row["participant_id"]
            rel["contact_id"] = row["contact_id"]
            out.append(rel)
        except (ValidationError, IngestError, ValueError) as err:
            errors.append((i, str(err)))
    if errors:
        raise RowError(errors)
    return out


def write_situations(records: Iterable[SituationRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SITUATIONS_HEADER)
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.to_row())


# ---------------------------------------------------------------------------
# Encoding


@dataclass(frozen=True)
class EncodedVector:
    values: np.ndarray
    schema: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise IngestError("encoded vector length does not match schema")


class FeatureEncoder:
    """Encodes SocialSituationFeatures into fixed-length numeric vectors.

    Ordinals and numerics pass through as reals. Nominal enums expand to
    one-hot groups (exactly one 1 per group). The optional age_difference
    encodes as (value, presence) with value 0 when absent. The schema is
    frozen at construction and identical for every vector produced.
    """

    def __init__(self):
        schema: list[tuple[str, str]] = []
        groups: list[str] = []
        col_group: list[int] = []
        for name in FEATURE_FIELDS:
            gi = len(groups)
            groups.append(name)
            if name in ENUM_FIELDS:
                for token in ENUM_FIELDS[name]:
                    schema.append((f"{name}={token}", "one_hot_component"))
                    col_group.append(gi)
            elif name in ORDINAL_FIELDS:
                schema.append((name, "ordinal"))
                col_group.append(gi)
            elif name == "age_difference":
                schema.append((name, "numeric"))
                schema.append((f"{name}__present", "numeric"))
                col_group.extend([gi, gi])
            else:  # years_known
                schema.append((name, "numeric"))
                col_group.append(gi)
        self.schema: tuple[tuple[str, str], ...] = tuple(schema)
        self.groups: tuple[str, ...] = tuple(groups)
        self.col_group: np.ndarray = np.asarray(col_group, dtype=np.int64)
        self.column_names: tuple[str, ...] = tuple(name for name, _ in schema)

    @property
    def width(self) -> int:
        return len(self.schema)

    def encode(self, features: SocialSituationFeatures) -> EncodedVector:
        values = np.zeros(self.width, dtype=np.float64)
        col = 0
        for name in FEATURE_FIELDS:
            if name in ENUM_FIELDS:
                tokens = ENUM_FIELDS[name]
                values[col + tokens.index(getattr(features, name))] = 1.0
                col += len(tokens)
            elif name == "age_difference":
                ad = features.age_difference
                values[col] = 0.0 if ad is None else float(ad)
                values[col + 1] = 0.0 if ad is None else 1.0
                col += 2
            else:
                values[col] = float(getattr(features, name))
                col += 1
        return EncodedVector(values, self.schema)

    def encode_matrix(self, feats: Sequence[SocialSituationFeatures]) -> np.ndarray:
        return np.stack([self.encode(f).values for f in feats]) if feats else np.zeros((0, self.width))


class ProfileEncoder:
    """Encodes SituationProfile vectors for the profile->priority model."""

    def __init__(self):
        self.schema: tuple[tuple[str, str], ...] = tuple(
            (name, "ordinal") for name in CHARACTERISTICS
        )
        self.groups: tuple[str, ...] = CHARACTERISTICS
        self.col_group: np.ndarray = np.arange(len(CHARACTERISTICS), dtype=np.int64)
        self.column_names: tuple[str, ...] = CHARACTERISTICS

    @property
    def width(self) -> int:
        return len(CHARACTERISTICS)

    def encode(self, profile: SituationProfile) -> EncodedVector:
        return EncodedVector(np.asarray(profile.as_vector(), dtype=np.float64), self.schema)

    def encode_matrix(self, profiles: Sequence[SituationProfile]) -> np.ndarray:
        return (
            np.stack([self.encode(p).values for p in profiles])
            if profiles
            else np.zeros((0, self.width))
        )


# ---------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = DEFAULT_SEED
    group_by_participant: bool = False

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise IngestError(f"test_fraction {self.test_fraction!r} outside (0, 1)")


def split(
    records: Sequence[SituationRecord], spec: SplitSpec
) -> tuple[list[SituationRecord], list[SituationRecord]]:
    """Deterministic random partition into (train, test).

    |test| = round(test_fraction * N), half away from zero. With
    ``group_by_participant`` all records of one participant land on the same
    side; test size is then approximate.
    """
    n = len(records)
    if n < 5:
        raise TooFewRecords(f"need at least 5 records, got {n}")
    n_test = int(np.floor(spec.test_fraction * n + 0.5))
    rng = np.random.default_rng([_seed_entropy(spec.seed), 0x5B17])
    if spec.group_by_participant:
        pids = sorted({r.participant_id for r in records})
        order = rng.permutation(len(pids))
        test_pids: set[str] = set()
        count = 0
        for idx in order:
            if count >= n_test:
                break
            test_pids.add(pids[idx])
            count += sum(1 for r in records if r.participant_id == pids[idx])
        test = [r for r in records if r.participant_id in test_pids]
        train = [r for r in records if r.participant_id not in test_pids]
        return train, test
    perm = rng.permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train = [records[i] for i in range(n) if i not in test_idx]
    test = [records[i] for i in range(n) if i in test_idx]
    return train, test


def _seed_entropy(seed: int) -> int:
    # SeedSequence entropy must be nonnegative; map negatives into uint64.
    return seed & 0xFFFFFFFFFFFFFFFF


def dataset_fingerprint(records: Sequence[SituationRecord]) -> str:
    payload = json.dumps([r.to_row() for r in records], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
