"""Cohort ingestion: per-participant variant/ECG JSON files joined with the
condition-label CSV into one validated, immutable in-memory cohort.

One JSON file per participant::

    {"participant_id": "p000001",
     "snps": [{"rsid": "rs123", "dosage": 1, "gp": 0.99}, ...],
     "ecg": {"qrs_ms": 98.0, "pr_ms": 162.0, ...}}

Unknown ECG keys land in ``EcgFeatures.extras``. The conditions CSV has the
header ``participant_id,condition`` with one condition per row (RFC 4180
quoting); condition text is trimmed and lowercased on parse so downstream
keyword matching is case-insensitive.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

from ._validation import is_number
from .errors import ParseError, ValidationError

RSID_PATTERN = re.compile(r"rs\d+")

# Canonical ECG feature order; extras sort after these.
ECG_FIELDS = ("qrs_ms", "pr_ms", "qtc_ms", "heart_rate_bpm", "hrv_rmssd_ms")


class Tier(str, enum.Enum):
    """Stratification level: confirmed cardiac diagnosis, indirect
    indicators, or unlabeled."""

    TIER1 = "tier1"
    TIER2 = "tier2"
    TIER3 = "tier3"

    @property
    def rank(self) -> int:
        """1 is highest precedence."""
        return int(self.value[-1])

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class VariantCall:
    """One genotype call: alt-allele dosage plus its posterior confidence.

    Masked calls keep their original dosage but are excluded from all
    downstream statistics via the ``missing`` flag.
    """

    rsid: str
    dosage: int
    genotype_posterior: float
    missing: bool = False

    def __post_init__(self):
        if not self.rsid:
            raise ValidationError("variant call with empty rsid")
        if not self.missing and self.dosage not in (0, 1, 2):
            raise ValidationError(
                f"dosage {self.dosage} outside {{0,1,2}} for rsid {self.rsid}"
            )
        if not 0.0 <= self.genotype_posterior <= 1.0:
            raise ValidationError(
                f"genotype posterior {self.genotype_posterior} outside [0,1]"
                f" for rsid {self.rsid}"
            )


@dataclass(frozen=True, eq=True)
class EcgFeatures:
    """Derived ECG morphology/timing features; any field may be absent."""

    qrs_ms: float | None = None
    pr_ms: float | None = None
    qtc_ms: float | None = None
    heart_rate_bpm: float | None = None
    hrv_rmssd_ms: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.items():
            if not is_number(value) or not math.isfinite(value) or value <= 0:
                raise ValidationError(
                    f"ECG feature {name} must be a finite number > 0, got {value!r}"
                )

    def items(self) -> list[tuple[str, float]]:
        """Present features: canonical order first, extras sorted by name."""
        out = [(n, getattr(self, n)) for n in ECG_FIELDS if getattr(self, n) is not None]
        out.extend(sorted(self.extras.items()))
        return out

    def get(self, name: str) -> float | None:
        if name in ECG_FIELDS:
            return getattr(self, name)
        return self.extras.get(name)


@dataclass(frozen=True)
class Participant:
    id: str
    variants: list[VariantCall] = field(default_factory=list)
    ecg: EcgFeatures = field(default_factory=EcgFeatures)
    conditions: list[str] = field(default_factory=list)
    tier: Tier | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("participant with empty id")
        seen = set()
        for call in self.variants:
            if call.rsid in seen:
                raise ValidationError(
                    f"duplicate rsid {call.rsid} in participant {self.id}"
                )
            seen.add(call.rsid)

    def dosages(self) -> dict[str, int]:
        """Non-missing alt-allele counts keyed by rsid."""
        return {c.rsid: c.dosage for c in self.variants if not c.missing}

    def rsids(self) -> set[str]:
        return {c.rsid for c in self.variants}


@dataclass
class Provenance:
    sources: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass
class Cohort:
    participants: list[Participant]
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        ids = [p.id for p in self.participants]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate participant id: {', '.join(dupes)}")

    def ids(self) -> list[str]:
        return [p.id for p in self.participants]

    def by_id(self) -> dict[str, Participant]:
        return {p.id: p for p in self.participants}

    def panel(self) -> list[str]:
        """Sorted union of rsids present anywhere in the cohort."""
        rsids = set()
        for p in self.participants:
            rsids.update(c.rsid for c in p.variants)
        return sorted(rsids)

    def calls_by_variant(self) -> dict[str, list[VariantCall]]:
        out: dict[str, list[VariantCall]] = defaultdict(list)
        for p in self.participants:
            for call in p.variants:
                out[call.rsid].append(call)
        return dict(out)


def _require(doc: dict, key: str):
    if key not in doc:
        raise ParseError(f"participant document missing required key '{key}'")
    return doc[key]


def parse_participant_json(data: bytes | str) -> Participant:
    """Parse one participant document.

    Raises ParseError (with byte offset) for malformed JSON and
    ValidationError for schema violations such as out-of-range dosages or
    duplicate rsids.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"participant file is not UTF-8 at byte {exc.start}") from exc
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"malformed participant JSON at offset {exc.pos}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ParseError("participant document must be a JSON object")

    pid = _require(doc, "participant_id")
    if not isinstance(pid, str) or not pid:
        raise ParseError("participant_id must be a non-empty string")

    raw_snps = _require(doc, "snps")
    if not isinstance(raw_snps, list):
        raise ParseError(f"snps must be a list for participant {pid}")
    calls = []
    for entry in raw_snps:
        if not isinstance(entry, dict):
            raise ParseError(f"snp entry must be an object for participant {pid}")
        rsid = entry.get("rsid")
        if not isinstance(rsid, str) or not RSID_PATTERN.fullmatch(rsid):
            raise ValidationError(f"invalid rsid {rsid!r} for participant {pid}")
        dosage = entry.get("dosage")
        missing = bool(entry.get("missing", False))
        if not missing and (not isinstance(dosage, int) or isinstance(dosage, bool)
                            or dosage not in (0, 1, 2)):
            raise ValidationError(
                f"dosage {dosage!r} outside {{0,1,2}} for rsid {rsid}"
            )
        gp = entry.get("gp")
        if not is_number(gp) or not 0.0 <= gp <= 1.0:
            raise ValidationError(f"gp {gp!r} outside [0,1] for rsid {rsid}")
        calls.append(VariantCall(rsid, int(dosage) if dosage is not None else 0,
                                 float(gp), missing))

    ecg_doc = doc.get("ecg", {})
    if not isinstance(ecg_doc, dict):
        raise ParseError(f"ecg must be an object for participant {pid}")
    known: dict = {}
    extras: dict = {}
    for key, value in ecg_doc.items():
        if not is_number(value) or not math.isfinite(value) or value <= 0:
            raise ValidationError(
                f"ECG feature {key} must be a finite number > 0 for participant {pid}"
            )
        if key in ECG_FIELDS:
            known[key] = float(value)
        else:
            extras[key] = float(value)
    ecg = EcgFeatures(extras=extras, **known)

    return Participant(id=pid, variants=calls, ecg=ecg)


def serialize_participant(participant: Participant) -> bytes:
    """Inverse of parse_participant_json; output is byte-stable."""
    snps = []
    for call in participant.variants:
        entry = {"rsid": call.rsid, "dosage": call.dosage, "gp": call.genotype_posterior}
        if call.missing:
            entry["missing"] = True
        snps.append(entry)
    ecg = {name: value for name, value in participant.ecg.items()}
    doc = {"participant_id": participant.id, "snps": snps, "ecg": ecg}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def parse_conditions_csv(data: bytes | str) -> tuple[list[tuple[str, str]], list[str]]:
    """Parse the condition-label CSV into (participant_id, condition) rows.

    Rows come back in file order; condition text is trimmed and lowercased.
    Rows with an empty condition cell are skipped with a warning. Returns
    (rows, warnings).
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"conditions CSV is not UTF-8 at byte {exc.start}") from exc
    else:
        text = data
    reader = csv.reader(io.StringIO(text, newline=""))
    rows: list[tuple[str, str]] = []
    warnings: list[str] = []
    try:
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["participant_id", "condition"]:
            raise ParseError("conditions CSV must start with header 'participant_id,condition'")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                warnings.append(f"line {line}: expected 2 columns, got {len(row)}; row skipped")
                continue
            pid = row[0].strip()
            condition = row[1].strip().lower()
            if not pid:
                warnings.append(f"line {line}: empty participant_id; row skipped")
                continue
            if not condition:
                warnings.append(f"line {line}: empty condition for {pid}; row skipped")
                continue
            rows.append((pid, condition))
    except csv.Error as exc:
        raise ParseError(f"malformed conditions CSV near line {reader.line_num}: {exc}") from exc
    return rows, warnings


def join_cohort(participants: list[Participant],
                labels: list[tuple[str, str]],
                sources: list[str] | None = None) -> Cohort:
    """Attach label rows to participants by id (outer join on participants).

    Participants absent from the labels keep empty conditions; labels whose
    id matches no participant are dropped with a warning. Condition lists are
    sorted so the join is label-order invariant.
    """
    by_id: dict[str, Participant] = {}
    for p in participants:
        if p.id in by_id:
            raise ValidationError(f"duplicate participant id: {p.id}")
        by_id[p.id] = p

    warnings: list[str] = []
    conditions: dict[str, list[str]] = defaultdict(list)
    for pid, condition in labels:
        if pid not in by_id:
            warnings.append(f"label for unknown participant {pid}; dropped")
            continue
        conditions[pid].append(condition)

    joined = [replace(p, conditions=sorted(conditions.get(p.id, [])))
              for p in participants]
    return Cohort(joined, Provenance(sources=list(sources or []), warnings=warnings))


def load_cohort(participants_dir: str | Path, conditions_csv: str | Path) -> Cohort:
    """Load every ``*.json`` under participants_dir plus the conditions CSV."""
    participants_dir = Path(participants_dir)
    conditions_csv = Path(conditions_csv)
    participants = []
    for path in sorted(participants_dir.glob("*.json")):
        try:
            participants.append(parse_participant_json(path.read_bytes()))
        except (ParseError, ValidationError) as exc:
            raise type(exc)(f"{path}: {exc}") from exc
    labels, warnings = parse_conditions_csv(conditions_csv.read_bytes())
    cohort = join_cohort(participants, labels,
                         sources=[str(participants_dir), str(conditions_csv)])
    cohort.provenance.warnings = warnings + cohort.provenance.warnings
    return cohort


def write_cohort(cohort: Cohort, out_dir: str | Path) -> dict[str, Path]:
    """Write participants/<id>.json plus conditions.csv under out_dir."""
    out_dir = Path(out_dir)
    participants_dir = out_dir / "participants"
    participants_dir.mkdir(parents=True, exist_ok=True)
    for p in cohort.participants:
        (participants_dir / f"{p.id}.json").write_bytes(serialize_participant(p))
    conditions_path = out_dir / "conditions.csv"
    with conditions_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "condition"])
        for p in cohort.participants:
            for condition in p.conditions:
                writer.writerow([p.id, condition])
    return {"participants": participants_dir, "conditions": conditions_path}
