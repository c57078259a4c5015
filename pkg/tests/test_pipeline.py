import numpy as np
import pytest

from cardiolink.cluster import LOW_RISK
from cardiolink.cohort import Cohort, Tier
from cardiolink.errors import ValidationError
from cardiolink.gwas import ConditionSnpMap
from cardiolink.pipeline import (PipelineConfig, build_prompt_records, cluster_tier3)
from cardiolink.semantics import HashingEmbedder
from cardiolink.simulate import DEMO_TIER1_RSIDS, DEMO_TIER2_RSIDS
from helpers import make_participant


@pytest.fixture(scope="module")
def demo_prompts(demo_products):
    d = demo_products
    config = PipelineConfig.demo(out_dir="unused", seed=42)
    snp_map = ConditionSnpMap({"atrial fibrillation": sorted(DEMO_TIER1_RSIDS),
                               "hypertension": sorted(DEMO_TIER2_RSIDS)})
    embedder = HashingEmbedder()
    assignment, _, pseudo_labels = cluster_tier3(d.cohort, d.features, d.vocab, config)
    records = build_prompt_records(d.cohort, snp_map, d.vocab, assignment,
                                   pseudo_labels, config, embedder)
    return records, d


def test_prompt_records_cover_cohort(demo_prompts):
    records, d = demo_prompts
    assert len(records) == len(d.cohort.participants)
    assert {r.participant_id for r in records} == set(d.cohort.ids())


def test_snps_cited_within_curated_panel(demo_prompts):
    records, d = demo_prompts
    panel = set(d.vocab.tokens)
    for record in records:
        assert set(record.snps_cited) <= panel


def test_tier_labels_match_stratum(demo_prompts):
    records, d = demo_prompts
    by_id = d.cohort.by_id()
    for record in records:
        participant = by_id[record.participant_id]
        if participant.tier is Tier.TIER1:
            assert record.label == "atrial fibrillation"
        elif participant.tier is Tier.TIER2:
            assert record.label == "hypertension"
        else:
            assert record.label in ("future-risk", "high-risk", "low-risk")


def test_prompt_injectivity(demo_prompts):
    records, _ = demo_prompts
    prompts = [r.prompt for r in records]
    assert len(set(prompts)) == len(prompts)


def test_cluster_tier3_requires_tier1_profile(demo_products):
    d = demo_products
    config = PipelineConfig.demo(out_dir="unused", seed=42)
    headless = Cohort([p for p in d.cohort.participants if p.tier is not Tier.TIER1],
                      d.cohort.provenance)
    with pytest.raises(ValidationError, match="no Tier-1 profile"):
        cluster_tier3(headless, d.features, d.vocab, config)


def test_cluster_tier3_single_member_defaults_low_risk(demo_products):
    d = demo_products
    config = PipelineConfig.demo(out_dir="unused", seed=42)
    tier1 = [p for p in d.cohort.participants if p.tier is Tier.TIER1][:5]
    lone = make_participant("solo", {"rs1": 1}, tier=Tier.TIER3)
    small = Cohort(tier1 + [lone])
    features = dict(d.features)
    features["solo"] = d.features[tier1[0].id]
    assignment, annotations, pseudo = cluster_tier3(small, features, d.vocab, config)
    assert assignment is None and annotations == []
    assert pseudo == {"solo": LOW_RISK}


def test_demo_config_relaxes_hwe():
    config = PipelineConfig.demo()
    assert config.simulate.enabled
    assert config.qc.hwe_alpha < 1e-100
    assert config.qc.maf_min == 0.01
