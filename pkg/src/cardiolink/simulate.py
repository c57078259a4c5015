"""Deterministic synthetic-cohort generator with known ground truth.

Generative model: each variant gets an allele frequency drawn uniformly from
``maf_range`` and genotypes are Binomial(2, p) draws (random mating, so
genotype counts are Hardy-Weinberg consistent). Condition labels follow a
logistic model, sigmoid(base_rate_logit + sum(beta * dosage)) over planted
variant effects. ECG features are Gaussian around clinical normative means
with per-condition mean shifts.

Planted groups stamp fixed condition lists, boosted allele frequencies, and
ECG offsets onto blocks of participants, which gives clustering and
pseudo-labeling tests exact recovery targets. Every participant draws from
its own counter-based substream of the seed, so generation order (or thread
count) cannot change the output.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohort import (ECG_FIELDS, Cohort, EcgFeatures, Participant, Provenance,
                     VariantCall, write_cohort)
from .errors import ConfigError, ValidationError

# Normative resting-adult means used as ECG sampling centers.
NORMATIVE_ECG = {
    "qrs_ms": 100.0,
    "pr_ms": 160.0,
    "qtc_ms": 410.0,
    "heart_rate_bpm": 75.0,
    "hrv_rmssd_ms": 42.0,
}

_GROUP_NAME = re.compile(r"[A-Za-z0-9_-]+")

# Substream ids: (seed, stream, ...counters)
_STREAM_FREQS = 0
_STREAM_BACKGROUND = 1
_STREAM_GROUP = 2
_STREAM_CHILD = 3


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass(frozen=True)
class PlantedEffect:
    """Log-odds contribution of one variant's alt allele to one condition."""

    rsid: str
    condition: str
    beta: float


@dataclass(frozen=True)
class PlantedGroup:
    """A block of participants with a stamped phenotype/genotype profile.

    Members carry the listed conditions verbatim (empty list = unlabeled),
    draw ``hot_rsids`` at ``hot_freq`` instead of the background frequency,
    and add ``ecg_offset`` to their ECG means.
    """

    name: str
    size: int
    conditions: tuple[str, ...] = ()
    hot_rsids: tuple[str, ...] = ()
    hot_freq: float = 0.9
    ecg_offset: dict = field(default_factory=dict)


@dataclass
class SimConfig:
    n_participants: int
    n_variants: int
    maf_range: tuple[float, float] = (0.05, 0.5)
    planted: tuple[PlantedEffect, ...] = ()
    conditions: tuple[str, ...] = ()
    base_rate_logit: float = 0.0
    ecg_shift: dict = field(default_factory=dict)
    seed: int = 0
    groups: tuple[PlantedGroup, ...] = ()
    gp_range: tuple[float, float] = (0.95, 1.0)
    ecg_noise_frac: float = 0.10

    def rsids(self) -> list[str]:
        return [f"rs{i}" for i in range(1, self.n_variants + 1)]

    def total_participants(self) -> int:
        return self.n_participants + sum(g.size for g in self.groups)

    def validate(self) -> None:
        lo, hi = self.maf_range
        if not (0.0 < lo <= hi <= 0.5):
            raise ConfigError(f"maf_range must satisfy 0 < low <= high <= 0.5, got {self.maf_range}")
        if self.n_variants < 1:
            raise ConfigError("n_variants must be >= 1")
        if self.n_participants < 0:
            raise ConfigError("n_participants must be >= 0")
        if self.total_participants() < 1:
            raise ConfigError("config yields an empty cohort")
        glo, ghi = self.gp_range
        if not (0.0 <= glo <= ghi <= 1.0):
            raise ConfigError(f"gp_range must be within [0,1], got {self.gp_range}")
        if self.ecg_noise_frac <= 0:
            raise ConfigError("ecg_noise_frac must be > 0")
        rsids = set(self.rsids())
        for effect in self.planted:
            if effect.rsid not in rsids:
                raise ConfigError(f"planted rsid {effect.rsid} outside the variant set")
            if effect.condition not in self.conditions:
                raise ConfigError(f"planted effect for unlisted condition {effect.condition!r}")
        for condition in self.conditions:
            if condition != condition.strip().lower():
                raise ConfigError(f"conditions must be trimmed lowercase: {condition!r}")
        seen = set()
        for group in self.groups:
            if not _GROUP_NAME.fullmatch(group.name):
                raise ConfigError(f"group name {group.name!r} must be [A-Za-z0-9_-]+")
            if group.name in seen:
                raise ConfigError(f"duplicate group name {group.name!r}")
            seen.add(group.name)
            if group.size < 1:
                raise ConfigError(f"group {group.name} must have size >= 1")
            if not (0.0 < group.hot_freq < 1.0):
                raise ConfigError(f"group {group.name} hot_freq must be in (0,1)")
            for rsid in group.hot_rsids:
                if rsid not in rsids:
                    raise ConfigError(f"group {group.name} hot rsid {rsid} outside the variant set")
            for condition in group.conditions:
                if condition != condition.strip().lower():
                    raise ConfigError(f"conditions must be trimmed lowercase: {condition!r}")


@dataclass
class GroundTruth:
    """Everything the generator knows: per-variant frequencies, planted
    effects, per-participant condition assignment causes, and the
    cluster-defining group of each participant."""

    variant_freqs: dict
    planted: list[PlantedEffect]
    causes: dict
    group_of: dict

    def to_json(self) -> str:
        doc = {
            "variant_freqs": self.variant_freqs,
            "planted": [{"rsid": e.rsid, "condition": e.condition, "beta": e.beta}
                        for e in self.planted],
            "causes": self.causes,
            "group_of": self.group_of,
        }
        return json.dumps(doc, sort_keys=True, indent=2)


_ECG_BASE_MEANS = np.array([NORMATIVE_ECG[n] for n in ECG_FIELDS])


def _sample_ecg(rng: np.random.Generator, offsets: dict, noise_frac: float) -> EcgFeatures:
    means = _ECG_BASE_MEANS
    if offsets:
        means = means + np.array([offsets.get(n, 0.0) for n in ECG_FIELDS])
    values = np.maximum(rng.normal(means, noise_frac * _ECG_BASE_MEANS), 1e-3)
    return EcgFeatures(**dict(zip(ECG_FIELDS, values)))


def _make_calls(rsids: list[str], dosages: np.ndarray, gps: np.ndarray) -> list[VariantCall]:
    return [VariantCall(rsid, int(d), float(g))
            for rsid, d, g in zip(rsids, dosages, gps)]


def simulate_cohort(config: SimConfig) -> tuple[Cohort, GroundTruth]:
    """Generate a cohort plus its ground truth; bit-identical per seed."""
    config.validate()
    rsids = config.rsids()
    index = {rsid: i for i, rsid in enumerate(rsids)}

    lo, hi = config.maf_range
    freqs = _rng(config.seed, _STREAM_FREQS).uniform(lo, hi, size=config.n_variants)

    effects_by_condition: dict[str, list[PlantedEffect]] = {c: [] for c in config.conditions}
    for effect in config.planted:
        effects_by_condition[effect.condition].append(effect)

    participants: list[Participant] = []
    causes: dict = {}
    group_of: dict = {}

    width = max(6, len(str(config.total_participants())))
    for i in range(config.n_participants):
        rng = _rng(config.seed, _STREAM_BACKGROUND, i)
        pid = f"p{i + 1:0{width}d}"
        dosages = rng.binomial(2, freqs)
        gps = rng.uniform(config.gp_range[0], config.gp_range[1], size=config.n_variants)
        assigned = []
        cause: dict = {}
        for condition in config.conditions:
            contributions = {e.rsid: e.beta * int(dosages[index[e.rsid]])
                             for e in effects_by_condition[condition]}
            logit = config.base_rate_logit + sum(contributions.values())
            prob = 1.0 / (1.0 + math.exp(-logit))
            hit = bool(rng.random() < prob)
            if hit:
                assigned.append(condition)
            cause[condition] = {"source": "logistic", "logit": logit, "p": prob,
                                "assigned": hit, "contributions": contributions}
        offsets: dict = {}
        for condition in assigned:
            for name, shift in config.ecg_shift.get(condition, {}).items():
                offsets[name] = offsets.get(name, 0.0) + shift
        ecg = _sample_ecg(rng, offsets, config.ecg_noise_frac)
        participants.append(Participant(pid, _make_calls(rsids, dosages, gps),
                                        ecg, sorted(assigned)))
        causes[pid] = cause
        group_of[pid] = ",".join(sorted(assigned)) if assigned else "none"

    for g_idx, group in enumerate(config.groups):
        hot_idx = np.array([index[r] for r in group.hot_rsids], dtype=int)
        member_freqs = freqs.copy()
        if hot_idx.size:
            member_freqs[hot_idx] = group.hot_freq
        for j in range(group.size):
            rng = _rng(config.seed, _STREAM_GROUP, g_idx, j)
            pid = f"{group.name}-{j + 1:0{width}d}"
            dosages = rng.binomial(2, member_freqs)
            gps = rng.uniform(config.gp_range[0], config.gp_range[1],
                              size=config.n_variants)
            assigned = sorted(group.conditions)
            offsets = dict(group.ecg_offset)
            for condition in assigned:
                for name, shift in config.ecg_shift.get(condition, {}).items():
                    offsets[name] = offsets.get(name, 0.0) + shift
            ecg = _sample_ecg(rng, offsets, config.ecg_noise_frac)
            participants.append(Participant(pid, _make_calls(rsids, dosages, gps),
                                            ecg, assigned))
            causes[pid] = {c: {"source": "group", "group": group.name}
                           for c in assigned}
            group_of[pid] = group.name

    cohort = Cohort(participants, Provenance(sources=[f"simulated(seed={config.seed})"]))
    truth = GroundTruth(variant_freqs=dict(zip(rsids, freqs.tolist())),
                        planted=list(config.planted), causes=causes,
                        group_of=group_of)
    return cohort, truth


def mendelian_child(parent_a: Participant, parent_b: Participant, seed: int,
                    child_id: str | None = None) -> Participant:
    """Draw one child: per variant, one allele sampled uniformly from each
    parent's two alleles (transmission probability dosage/2).

    Calls missing in either parent come back missing in the child.
    """
    calls_b = {c.rsid: c for c in parent_b.variants}
    if {c.rsid for c in parent_a.variants} != set(calls_b):
        raise ValidationError(
            f"parents {parent_a.id} and {parent_b.id} carry different variant sets")

    rng = _rng(seed, _STREAM_CHILD)
    ordered = sorted(parent_a.variants, key=lambda c: c.rsid)
    pa = np.array([c.dosage / 2.0 if not c.missing else 0.0 for c in ordered])
    pb = np.array([calls_b[c.rsid].dosage / 2.0 if not calls_b[c.rsid].missing else 0.0
                   for c in ordered])
    from_a = rng.binomial(1, pa)
    from_b = rng.binomial(1, pb)

    child_calls = []
    for call, a_allele, b_allele in zip(ordered, from_a, from_b):
        other = calls_b[call.rsid]
        if call.missing or other.missing:
            child_calls.append(VariantCall(call.rsid, 0, 0.99, missing=True))
        else:
            child_calls.append(VariantCall(call.rsid, int(a_allele + b_allele), 0.99))

    ecg = _sample_ecg(rng, {}, 0.10)
    return Participant(child_id or f"{parent_a.id}x{parent_b.id}",
                       child_calls, ecg, [])


def write_simulated(cohort: Cohort, truth: GroundTruth, out_dir: str | Path) -> dict:
    """Emit the cohort in the standard on-disk layout plus truth.json."""
    out_dir = Path(out_dir)
    paths = write_cohort(cohort, out_dir)
    truth_path = out_dir / "truth.json"
    truth_path.write_text(truth.to_json(), encoding="utf-8")
    paths["truth"] = truth_path
    return paths


# Demo cohort: two diagnosed strata plus three unlabeled blocks with known
# risk profiles (shared genetics + normal ECG, shared genetics + abnormal
# ECG, background). Sizes are 75/75/300/300/300 = 1050.
DEMO_TIER1_CONDITION = "atrial fibrillation"
DEMO_TIER2_CONDITION = "hypertension"
DEMO_TIER1_RSIDS = tuple(f"rs{i}" for i in range(1, 13))
DEMO_TIER2_RSIDS = tuple(f"rs{i}" for i in range(13, 25))
DEMO_FUTURE_RISK_GROUP = "latent"
DEMO_HIGH_RISK_GROUP = "symptomatic"
DEMO_LOW_RISK_GROUP = "background"


def demo_config(seed: int = 42, n_variants: int = 500) -> SimConfig:
    """Standard desk-scale fixture used by the CLI default and the tests."""
    if n_variants < 24:
        raise ConfigError("demo config needs at least 24 variants")
    groups = (
        PlantedGroup("diagnosed", 75, conditions=(DEMO_TIER1_CONDITION,),
                     hot_rsids=DEMO_TIER1_RSIDS, hot_freq=0.9,
                     ecg_offset={"heart_rate_bpm": 28.0, "hrv_rmssd_ms": 36.0,
                                 "qtc_ms": 30.0}),
        PlantedGroup("indicated", 75, conditions=(DEMO_TIER2_CONDITION,),
                     hot_rsids=DEMO_TIER2_RSIDS, hot_freq=0.9,
                     ecg_offset={"pr_ms": 18.0, "hrv_rmssd_ms": -9.0}),
        # unlabeled, genetically tier1-like, ECG distinct but inside every
        # clinical reference range: the future-risk recovery target
        PlantedGroup(DEMO_FUTURE_RISK_GROUP, 300,
                     hot_rsids=DEMO_TIER1_RSIDS, hot_freq=0.9,
                     ecg_offset={"hrv_rmssd_ms": 26.0, "pr_ms": 18.0,
                                 "heart_rate_bpm": -7.0}),
        PlantedGroup(DEMO_HIGH_RISK_GROUP, 300,
                     hot_rsids=DEMO_TIER1_RSIDS, hot_freq=0.9,
                     ecg_offset={"qrs_ms": 30.0, "qtc_ms": 55.0,
                                 "hrv_rmssd_ms": -18.0}),
        PlantedGroup(DEMO_LOW_RISK_GROUP, 300,
                     ecg_offset={"pr_ms": -20.0, "heart_rate_bpm": 10.0}),
    )
    return SimConfig(n_participants=0, n_variants=n_variants,
                     maf_range=(0.01, 0.05), seed=seed, groups=groups,
                     ecg_noise_frac=0.06)
