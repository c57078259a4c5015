import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiolink.cohort import Tier
from cardiolink.errors import ValidationError
from cardiolink.prompts import (INSTRUCTIONAL_QUERY, PromptRecord, PromptTemplate,
                                read_jsonl, render_prompt, stratified_split,
                                write_jsonl)
from helpers import make_ecg, make_participant


def _tier1_participant():
    return make_participant("p1", {"rs1": 2, "rs2": 1},
                            conditions=("atrial fibrillation",), tier=Tier.TIER1)


SNPS = [("rs1", "atrial fibrillation"), ("rs2", "atrial fibrillation")]


def test_prompt_contains_verbatim_query():
    record = render_prompt(_tier1_participant(), SNPS, "atrial fibrillation")
    assert "Start your response with: I believe it is" in record.prompt
    assert INSTRUCTIONAL_QUERY in record.prompt


def test_prompt_is_deterministic():
    one = render_prompt(_tier1_participant(), SNPS, "atrial fibrillation")
    two = render_prompt(_tier1_participant(), SNPS, "atrial fibrillation")
    assert one == two


def test_prompt_sections():
    participant = make_participant("p1", {"rs1": 2},
                                   ecg=make_ecg(extras={"st_elevation_mm": 0.1}),
                                   conditions=("atrial fibrillation",), tier=Tier.TIER1)
    record = render_prompt(participant, [("rs1", "atrial fibrillation")],
                           "atrial fibrillation")
    assert "QRS duration: 100 ms" in record.prompt
    assert "st_elevation_mm: 0.1" in record.prompt
    assert "- rs1 (alt-allele dosage 2): associated with atrial fibrillation" in record.prompt
    assert "Known diagnosis: atrial fibrillation." in record.prompt
    assert record.snps_cited == ["rs1"]


def test_tier3_context_carries_risk_category():
    participant = make_participant("p9", {"rs1": 1}, tier=Tier.TIER3)
    record = render_prompt(participant, [("rs1", "cluster signature")], "future-risk")
    assert "Inferred risk category: future-risk." in record.prompt
    assert record.label == "future-risk"


def test_insufficient_context_rejected():
    participant = make_participant("p1", {}, tier=Tier.TIER3)
    with pytest.raises(ValidationError, match="insufficient context"):
        render_prompt(participant, [], "")


def test_untiered_participant_rejected():
    with pytest.raises(ValidationError, match="no tier"):
        render_prompt(make_participant("p1", {"rs1": 1}), SNPS, "x")


def test_template_must_keep_query_block(tmp_path):
    path = tmp_path / "broken.txt"
    path.write_text("ECG: {{ecg_block}}\nSNPs: {{snp_block}}\n{{context_block}}\n")
    template = PromptTemplate.from_file(path)
    with pytest.raises(ValidationError, match="query_block"):
        render_prompt(_tier1_participant(), SNPS, "atrial fibrillation", template)


def test_custom_template_used(tmp_path):
    path = tmp_path / "mine.txt"
    path.write_text("CUSTOM HEADER\n{{ecg_block}}\n{{snp_block}}\n"
                    "{{context_block}}\n{{query_block}}\n")
    record = render_prompt(_tier1_participant(), SNPS, "atrial fibrillation",
                           PromptTemplate.from_file(path))
    assert record.prompt.startswith("CUSTOM HEADER")
    assert INSTRUCTIONAL_QUERY in record.prompt


def test_long_prompt_warns(caplog):
    extras = {f"feature_{i:03d}": 1.0 for i in range(600)}
    participant = make_participant("p1", {"rs1": 1}, ecg=make_ecg(extras=extras),
                                   conditions=("x",), tier=Tier.TIER1)
    with caplog.at_level(logging.WARNING, logger="cardiolink.prompts"):
        render_prompt(participant, SNPS, "x")
    assert any("token" in message for message in caplog.messages)


def _records(per_stratum: dict) -> list[PromptRecord]:
    records = []
    for (tier, label), count in per_stratum.items():
        for i in range(count):
            pid = f"{tier.value}-{label}-{i:04d}"
            records.append(PromptRecord(pid, tier, f"prompt {pid}", label, []))
    return records


def test_split_arithmetic_on_balanced_fixture():
    # 1050 records, 350 per tier, one label per tier, ratio 0.8
    records = _records({(Tier.TIER1, "atrial fibrillation"): 350,
                        (Tier.TIER2, "hypertension"): 350,
                        (Tier.TIER3, "future-risk"): 350})
    split = stratified_split(records, ratio=0.8, seed=1)
    assert len(split.train) == 840 and len(split.test) == 210
    for tier in Tier:
        assert sum(1 for r in split.train if r.tier is tier) == 280
        assert sum(1 for r in split.test if r.tier is tier) == 70


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.2, 1.7])
def test_invalid_ratio_rejected(ratio):
    records = _records({(Tier.TIER1, "x"): 4})
    with pytest.raises(ValidationError, match="ratio"):
        stratified_split(records, ratio=ratio)


def test_split_deterministic():
    records = _records({(Tier.TIER1, "a"): 41, (Tier.TIER3, "b"): 17})
    one = stratified_split(records, 0.8, seed=9)
    two = stratified_split(records, 0.8, seed=9)
    assert [r.participant_id for r in one.train] == [r.participant_id for r in two.train]
    other = stratified_split(records, 0.8, seed=10)
    assert [r.participant_id for r in one.train] != [r.participant_id for r in other.train]


def test_singleton_stratum_goes_to_train(caplog):
    records = _records({(Tier.TIER1, "a"): 1, (Tier.TIER3, "b"): 10})
    with caplog.at_level(logging.WARNING, logger="cardiolink.prompts"):
        split = stratified_split(records, 0.8, seed=0)
    assert sum(1 for r in split.train if r.label == "a") == 1
    assert any("single record" in m for m in caplog.messages)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(Tier)),
                          st.sampled_from(["a", "b", "c"])),
                min_size=2, max_size=60),
       st.floats(min_value=0.1, max_value=0.9))
def test_split_properties(pairs, ratio):
    counts = {}
    for tier, label in pairs:
        counts[(tier, label)] = counts.get((tier, label), 0) + 1
    records = _records(counts)
    split = stratified_split(records, ratio=ratio, seed=3)
    train_ids = {r.participant_id for r in split.train}
    test_ids = {r.participant_id for r in split.test}
    assert not train_ids & test_ids
    assert train_ids | test_ids == {r.participant_id for r in records}
    for key, total in counts.items():
        if total == 1:
            continue
        tier, label = key
        in_train = sum(1 for r in split.train if r.tier is tier and r.label == label)
        assert abs(in_train - ratio * total) <= 1.0 + 1e-9


def test_jsonl_round_trip(tmp_path):
    records = _records({(Tier.TIER1, "a"): 3, (Tier.TIER3, "future-risk"): 2})
    path = tmp_path / "prompts.jsonl"
    write_jsonl(records, path)
    loaded = read_jsonl(path)
    assert [(r.participant_id, r.tier, r.prompt, r.label) for r in loaded] == \
        [(r.participant_id, r.tier, r.prompt, r.label) for r in records]
