"""Shared builders for test fixtures."""

from __future__ import annotations

from cardiolink.cohort import EcgFeatures, Participant, Tier, VariantCall

NORMAL_ECG = dict(qrs_ms=100.0, pr_ms=160.0, qtc_ms=410.0,
                  heart_rate_bpm=75.0, hrv_rmssd_ms=42.0)


def make_ecg(**overrides) -> EcgFeatures:
    extras = overrides.pop("extras", {})
    values = {**NORMAL_ECG, **overrides}
    return EcgFeatures(extras=extras, **values)


def make_participant(pid: str, dosages: dict | None = None, ecg: EcgFeatures | None = None,
                     conditions: tuple = (), gp: float = 0.99,
                     tier: Tier | None = None, missing: tuple = ()) -> Participant:
    calls = [VariantCall(rsid, dosage, gp, missing=rsid in missing)
             for rsid, dosage in sorted((dosages or {}).items())]
    return Participant(id=pid, variants=calls, ecg=ecg or make_ecg(),
                       conditions=sorted(conditions), tier=tier)
