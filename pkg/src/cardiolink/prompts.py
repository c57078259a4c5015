"""Chain-of-thought prompt rendering and stratified dataset splitting.

Prompts flatten the participant's ECG features, list cited SNPs with their
associated conditions, state the diagnostic or risk context, and end with
the fixed instructional query. Rendering is deterministic; prompts are not
truncated here (a warning fires past the soft token budget and truncation is
left to the training side).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .cohort import Participant, Tier
from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

INSTRUCTIONAL_QUERY = (
    "Conclusion: Based on the above SNPs and ECG findings, what is the "
    "participant is likely at risk for? Start your response with: I believe "
    "it is [<cardiac condition>] and follow up with an explanation."
)

SOFT_TOKEN_BUDGET = 480

_ECG_LABELS = {
    "qrs_ms": ("QRS duration", "ms"),
    "pr_ms": ("PR interval", "ms"),
    "qtc_ms": ("QTc", "ms"),
    "heart_rate_bpm": ("Heart rate", "bpm"),
    "hrv_rmssd_ms": ("HRV (RMSSD)", "ms"),
}

_PLACEHOLDERS = ("ecg_block", "snp_block", "context_block", "query_block")


@dataclass(frozen=True)
class PromptTemplate:
    """Plain-text template with {{ecg_block}}, {{snp_block}},
    {{context_block}} and {{query_block}} placeholders."""

    text: str
    name: str = "custom"

    @classmethod
    def default(cls) -> "PromptTemplate":
        text = resources.files("cardiolink").joinpath("templates/cot_v1.txt") \
            .read_text(encoding="utf-8")
        return cls(text=text, name="cot_v1")

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        path = Path(path)
        return cls(text=path.read_text(encoding="utf-8"), name=path.stem)

    def render(self, blocks: dict) -> str:
        out = self.text
        for key in _PLACEHOLDERS:
            out = out.replace("{{" + key + "}}", blocks.get(key, ""))
        return out


@dataclass
class PromptRecord:
    participant_id: str
    tier: Tier
    prompt: str
    label: str
    snps_cited: list[str]


@dataclass
class SplitDataset:
    train: list[PromptRecord]
    test: list[PromptRecord]
    ratio: float
    seed: int


def _format_value(value: float) -> str:
    return format(value, "g")


def render_prompt(participant: Participant,
                  snps: list[tuple[str, str]],
                  label_or_risk: str,
                  template: PromptTemplate | None = None) -> PromptRecord:
    """Render one prompt from (rsid, associated condition) pairs and the
    participant's label or inferred risk category.

    The participant must be tiered; Tier 3 context reads as an inferred risk
    category, Tier 1/2 as a known diagnosis.
    """
    if participant.tier is None:
        raise ValidationError(f"participant {participant.id} has no tier assigned")
    label = label_or_risk.strip()
    if not snps and not label:
        raise ValidationError(f"insufficient context for participant {participant.id}")
    if not label:
        raise ValidationError(f"empty label for participant {participant.id}")
    template = template or PromptTemplate.default()

    ecg_lines = []
    for name, value in participant.ecg.items():
        label_name, unit = _ECG_LABELS.get(name, (name, ""))
        suffix = f" {unit}" if unit else ""
        ecg_lines.append(f"- {label_name}: {_format_value(value)}{suffix}")
    if not ecg_lines:
        ecg_lines.append("- no ECG features recorded")

    dosages = participant.dosages()
    snp_lines = []
    for rsid, condition in sorted(snps):
        dosage = dosages.get(rsid, 0)
        snp_lines.append(f"- {rsid} (alt-allele dosage {dosage}): associated with {condition}")
    if not snp_lines:
        snp_lines.append("- no curated variants carried")

    if participant.tier is Tier.TIER3:
        context = f"Inferred risk category: {label}."
    else:
        context = f"Known diagnosis: {label}."

    prompt = template.render({
        "ecg_block": "\n".join(ecg_lines),
        "snp_block": "\n".join(snp_lines),
        "context_block": context,
        "query_block": INSTRUCTIONAL_QUERY,
    })
    if INSTRUCTIONAL_QUERY not in prompt:
        raise ValidationError(
            f"template {template.name!r} must include the {{{{query_block}}}} placeholder")
    tokens = len(prompt.split())
    if tokens > SOFT_TOKEN_BUDGET:
        logger.warning("prompt for %s is ~%d whitespace tokens (budget %d); "
                       "truncation is left to the training side",
                       participant.id, tokens, SOFT_TOKEN_BUDGET)
    return PromptRecord(participant_id=participant.id, tier=participant.tier,
                        prompt=prompt, label=label,
                        snps_cited=sorted({rsid for rsid, _ in snps}))


def stratified_split(records: list[PromptRecord], ratio: float = 0.8,
                     seed: int = 0) -> SplitDataset:
    """Split records preserving each (tier, label) stratum's proportion to
    within one record. Deterministic given the seed; single-record strata go
    to train with a warning.
    """
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"split ratio must be in (0,1), got {ratio}")
    strata: dict[tuple, list[PromptRecord]] = {}
    for record in records:
        if not record.label:
            raise ValidationError(f"record {record.participant_id} has no label")
        strata.setdefault((record.tier.value, record.label), []).append(record)

    train: list[PromptRecord] = []
    test: list[PromptRecord] = []
    for idx, key in enumerate(sorted(strata)):
        members = sorted(strata[key], key=lambda r: r.participant_id)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(101, idx)))
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        if len(shuffled) == 1:
            logger.warning("stratum %s has a single record; assigned to train", key)
            train.extend(shuffled)
            continue
        n_train = int(np.floor(ratio * len(shuffled) + 0.5))
        n_train = min(max(n_train, 1), len(shuffled))
        train.extend(shuffled[:n_train])
        test.extend(shuffled[n_train:])
    return SplitDataset(train=train, test=test, ratio=ratio, seed=seed)


def write_jsonl(records: list[PromptRecord], path: str | Path) -> None:
    """One {"participant_id", "tier", "prompt", "label"} object per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({"participant_id": record.participant_id,
                                 "tier": record.tier.value,
                                 "prompt": record.prompt,
                                 "label": record.label},
                                sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[PromptRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            records.append(PromptRecord(participant_id=doc["participant_id"],
                                        tier=Tier(doc["tier"]),
                                        prompt=doc["prompt"],
                                        label=doc["label"],
                                        snps_cited=[]))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: bad prompt record: {exc}") from exc
    return records
