import json

import numpy as np
import pytest
from sklearn.base import clone

from cardiolink.cohort import Cohort, Tier
from cardiolink.errors import ConfigError
from cardiolink.tiering import (TierAssigner, TierLexicon, assign_tier,
                                assign_tiers, matching_condition)
from helpers import make_participant


def _p(conditions):
    return make_participant("p1", {"rs1": 1}, conditions=tuple(conditions))


def test_named_tier1_condition():
    assert assign_tier(_p(["atrial fibrillation"])) is Tier.TIER1


def test_named_tier2_condition():
    assert assign_tier(_p(["hypertension"])) is Tier.TIER2


def test_empty_conditions_is_tier3():
    assert assign_tier(_p([])) is Tier.TIER3


def test_comorbid_takes_highest_tier():
    assert assign_tier(_p(["hypertension", "myocarditis"])) is Tier.TIER1


def test_substring_match():
    assert assign_tier(_p(["chronic atrial fibrillation, paroxysmal"])) is Tier.TIER1
    assert assign_tier(_p(["essential hypertension"])) is Tier.TIER2


def test_semantic_match_catches_typo():
    # "atrial fibrilation" is not a substring hit but scores over 0.7
    assert assign_tier(_p(["atrial fibrilation"])) is Tier.TIER1


def test_unrelated_condition_is_tier3():
    assert assign_tier(_p(["asthma"])) is Tier.TIER3


def test_adding_conditions_never_lowers_tier():
    rng = np.random.default_rng(0)
    pool = ["asthma", "hypertension", "myocarditis", "diabetes",
            "arrhythmia", "hyperlipidemia", "eczema"]
    for _ in range(50):
        base = list(rng.choice(pool, size=rng.integers(0, 4), replace=False))
        extra = str(rng.choice(pool))
        before = assign_tier(_p(base))
        after = assign_tier(_p(base + [extra]))
        assert after.rank <= before.rank


def test_order_invariance_and_totality():
    conditions = ["asthma", "hypertension", "arrhythmia"]
    tiers = {assign_tier(_p(perm)) for perm in
             ([conditions[i % 3], conditions[(i + 1) % 3], conditions[(i + 2) % 3]]
              for i in range(3))}
    assert tiers == {Tier.TIER1}


def test_lexicon_validation():
    with pytest.raises(ConfigError, match="disjoint"):
        TierLexicon(tier1_keywords=("hypertension",), tier2_keywords=("hypertension",))
    with pytest.raises(ConfigError, match="lowercase"):
        TierLexicon(tier1_keywords=("Myocarditis",))


def test_lexicon_json_round_trip():
    lexicon = TierLexicon(tier1_keywords=("myocarditis",),
                          tier2_keywords=("obesity",), match_threshold=0.6)
    again = TierLexicon.from_json(lexicon.to_json())
    assert again == lexicon


def test_lexicon_file_format(tmp_path):
    path = tmp_path / "lexicon.json"
    path.write_text(json.dumps({"tier1": ["stroke"], "tier2": ["smoking"],
                                "match_threshold": 0.8}))
    lexicon = TierLexicon.from_file(path)
    assert lexicon.tier1_keywords == ("stroke",)
    assert assign_tier(_p(["stroke"]), lexicon) is Tier.TIER1


def test_assign_tiers_returns_new_cohort():
    cohort = Cohort([_p(["hypertension"])])
    tiered = assign_tiers(cohort)
    assert tiered.participants[0].tier is Tier.TIER2
    assert cohort.participants[0].tier is None


def test_matching_condition_reports_label():
    participant = make_participant("p1", {}, conditions=("essential hypertension",
                                                         "asthma"))
    assert matching_condition(participant, Tier.TIER2) == "essential hypertension"
    assert matching_condition(participant, Tier.TIER3) is None


def test_estimator_predict_and_clone():
    assigner = TierAssigner()
    participants = [_p(["myocarditis"]), _p(["hypertension"]), _p([])]
    assert assigner.fit(participants).predict(participants) == \
        [Tier.TIER1, Tier.TIER2, Tier.TIER3]
    cloned = clone(assigner)
    assert cloned.get_params() == assigner.get_params()
    assert cloned.predict(Cohort([_p(["arrhythmia"])])) == [Tier.TIER1]
