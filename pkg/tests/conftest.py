import sys
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cardiolink.cohort import Tier
from cardiolink.qc import QcConfig, apply_qc
from cardiolink.simulate import (DEMO_TIER1_RSIDS, DEMO_TIER2_RSIDS, demo_config,
                                 simulate_cohort)
from cardiolink.tiering import assign_tiers
from cardiolink.vectorize import EcgScaler, build_vocabulary, tfidf_vector, vectorize_cohort


@pytest.fixture(scope="session")
def demo_products():
    """Demo cohort taken through qc, tiering and vectorization once.

    HWE is relaxed because the demo cohort has planted subpopulation
    structure that a cohort-wide HWE screen correctly flags.
    """
    config = demo_config(seed=42, n_variants=60)
    cohort, truth = simulate_cohort(config)
    cohort, qc_report = apply_qc(cohort, QcConfig(hwe_alpha=1e-300))
    cohort = assign_tiers(cohort)
    vocab = build_vocabulary(cohort, set(DEMO_TIER1_RSIDS) | set(DEMO_TIER2_RSIDS))
    scaler = EcgScaler.fit(cohort)
    features = vectorize_cohort(cohort, vocab, scaler)
    tier3 = sorted((p for p in cohort.participants if p.tier is Tier.TIER3),
                   key=lambda p: p.id)
    tier1 = [p for p in cohort.participants if p.tier is Tier.TIER1]
    return SimpleNamespace(
        config=config, cohort=cohort, truth=truth, qc_report=qc_report,
        vocab=vocab, scaler=scaler, features=features, tier3=tier3, tier1=tier1,
        tier1_vectors=[tfidf_vector(p, vocab) for p in tier1],
        tier3_features={p.id: features[p.id] for p in tier3},
        tier3_tfidf={p.id: tfidf_vector(p, vocab) for p in tier3},
    )
