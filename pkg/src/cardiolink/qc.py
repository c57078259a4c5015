"""Variant-level quality control.

Order of operations in apply_qc: calls below the genotype-posterior floor are
masked missing first, then variants failing the minor-allele-frequency floor
or the Hardy-Weinberg chi-square test are dropped cohort-wide.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from scipy.stats import chi2

from ._validation import check_unit_open
from .cohort import Cohort, VariantCall
from .errors import QcError


@dataclass(frozen=True)
class AlleleStats:
    rsid: str
    n_called: int
    counts: tuple[int, int, int]  # (hom_ref, het, hom_alt)
    alt_freq: float
    maf: float


@dataclass(frozen=True)
class QcConfig:
    maf_min: float = 0.01
    hwe_alpha: float = 1e-6
    gp_min: float = 0.9

    def __post_init__(self):
        check_unit_open("maf_min", self.maf_min)
        check_unit_open("hwe_alpha", self.hwe_alpha)
        check_unit_open("gp_min", self.gp_min)


@dataclass
class QcReport:
    variants_in: int
    variants_out: int
    removed_by_maf: list[str] = field(default_factory=list)
    removed_by_hwe: list[str] = field(default_factory=list)
    calls_masked_by_gp: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)


def allele_stats(calls: list[VariantCall]) -> AlleleStats:
    """Genotype counts and allele frequencies for one variant.

    Missing calls are excluded. All calls must share one rsid.
    """
    if not calls:
        raise QcError("no calls supplied")
    rsid = calls[0].rsid
    counts = [0, 0, 0]
    for call in calls:
        if call.rsid != rsid:
            raise QcError(f"mixed rsids in allele_stats: {rsid} vs {call.rsid}")
        if call.missing:
            continue
        counts[call.dosage] += 1
    n_called = sum(counts)
    if n_called == 0:
        raise QcError(f"degenerate stats: no called genotypes for {rsid}")
    alt_freq = (counts[1] + 2 * counts[2]) / (2 * n_called)
    return AlleleStats(rsid=rsid, n_called=n_called, counts=tuple(counts),
                       alt_freq=alt_freq, maf=min(alt_freq, 1.0 - alt_freq))


def hwe_chi_square(counts: tuple[int, int, int]) -> float:
    """1-df chi-square goodness-of-fit p-value against Hardy-Weinberg
    proportions n*(q^2, 2pq, p^2) with p estimated from the counts.

    Monomorphic variants (p = 0 or 1) match their expectation exactly and
    return 1.0.
    """
    hom_ref, het, hom_alt = counts
    if min(counts) < 0:
        raise ValueError(f"negative genotype count: {counts}")
    n = hom_ref + het + hom_alt
    if n <= 0:
        raise ValueError("total genotype count must be > 0")
    p = (het + 2 * hom_alt) / (2 * n)
    if p <= 0.0 or p >= 1.0:
        return 1.0
    q = 1.0 - p
    expected = (n * q * q, n * 2 * p * q, n * p * p)
    stat = sum((obs - exp) ** 2 / exp for obs, exp in zip(counts, expected))
    return float(chi2.sf(stat, df=1))


def apply_qc(cohort: Cohort, config: QcConfig | None = None) -> tuple[Cohort, QcReport]:
    """Mask low-confidence calls, then drop variants failing MAF or HWE.

    Idempotent: a second application leaves the cohort unchanged. Raises
    QcError when nothing survives.
    """
    config = config or QcConfig()
    if not cohort.participants:
        raise QcError("cohort is empty")

    masked = 0
    masked_participants = []
    for p in cohort.participants:
        if any(not c.missing and c.genotype_posterior < config.gp_min
               for c in p.variants):
            calls = []
            for call in p.variants:
                if not call.missing and call.genotype_posterior < config.gp_min:
                    calls.append(replace(call, missing=True))
                    masked += 1
                else:
                    calls.append(call)
            masked_participants.append(replace(p, variants=calls))
        else:
            masked_participants.append(p)

    by_variant: dict[str, list[VariantCall]] = {}
    for p in masked_participants:
        for call in p.variants:
            by_variant.setdefault(call.rsid, []).append(call)

    removed_by_maf: list[str] = []
    removed_by_hwe: list[str] = []
    for rsid in sorted(by_variant):
        calls = by_variant[rsid]
        try:
            stats = allele_stats(calls)
        except QcError:
            # every call masked: no evidence the variant is informative
            removed_by_maf.append(rsid)
            continue
        if stats.maf < config.maf_min:
            removed_by_maf.append(rsid)
        if hwe_chi_square(stats.counts) < config.hwe_alpha:
            removed_by_hwe.append(rsid)

    removed = set(removed_by_maf) | set(removed_by_hwe)
    variants_in = len(by_variant)
    if variants_in and len(removed) == variants_in:
        raise QcError("empty panel after QC")

    if removed:
        survivors = [replace(p, variants=[c for c in p.variants
                                          if c.rsid not in removed])
                     for p in masked_participants]
    else:
        survivors = masked_participants

    report = QcReport(variants_in=variants_in,
                      variants_out=variants_in - len(removed),
                      removed_by_maf=removed_by_maf,
                      removed_by_hwe=removed_by_hwe,
                      calls_masked_by_gp=masked)
    return Cohort(survivors, cohort.provenance), report
