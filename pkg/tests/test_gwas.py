import numpy as np
import pytest

from cardiolink.errors import ParseError, StatusError, TransportError
from cardiolink.gwas import (GwasAssociation, build_condition_map, fetch_catalog,
                             filter_significant, parse_catalog_tsv)
from cardiolink.semantics import HashingEmbedder, similarity

HEADER = "DATE ADDED TO CATALOG\tDISEASE/TRAIT\tSNPS\tP-VALUE\tMAPPED_GENE\n"


def _tsv(*rows):
    body = "".join("2020-01-01\t" + "\t".join(row) + "\n" for row in rows)
    return (HEADER + body).encode()


def test_parse_single_association():
    assocs, warnings = parse_catalog_tsv(_tsv(("Atrial fibrillation", "rs2200733", "3E-12", "PITX2")))
    assert warnings == []
    assert assocs == [GwasAssociation(rsid="rs2200733", trait="atrial fibrillation",
                                      p_value=3e-12, mapped_gene="PITX2", source_row=2)]


def test_multi_snp_cell_split():
    assocs, _ = parse_catalog_tsv(_tsv(("Atrial fibrillation", "rs1; rs2", "3E-12", "")))
    assert [a.rsid for a in assocs] == ["rs1", "rs2"]
    assert all(a.trait == "atrial fibrillation" and a.p_value == 3e-12 for a in assocs)

    assocs, _ = parse_catalog_tsv(_tsv(("Hypertension", "rs3 x rs4", "1E-9", "")))
    assert [a.rsid for a in assocs] == ["rs3", "rs4"]


def test_unparseable_p_value_skipped_with_warning():
    assocs, warnings = parse_catalog_tsv(_tsv(("Hypertension", "rs1", "NR", "")))
    assert assocs == []
    assert len(warnings) == 1


def test_out_of_range_p_skipped():
    assocs, warnings = parse_catalog_tsv(_tsv(("Hypertension", "rs1", "0.0", ""),
                                              ("Hypertension", "rs2", "1.5", "")))
    assert assocs == []
    assert len(warnings) == 2


def test_non_rsid_token_skipped():
    assocs, warnings = parse_catalog_tsv(_tsv(("Hypertension", "rs1; chr4:111", "1E-9", "")))
    assert [a.rsid for a in assocs] == ["rs1"]
    assert len(warnings) == 1


def test_missing_required_column():
    bad = "DISEASE/TRAIT\tP-VALUE\nx\t1e-9\n".encode()
    with pytest.raises(ParseError, match="SNPS"):
        parse_catalog_tsv(bad)


def test_row_count_matches_hand_oracle():
    # build <= 50 rows with known token multiplicities
    rng = np.random.default_rng(0)
    rows = []
    expected = 0
    for i in range(50):
        n_tokens = int(rng.integers(1, 4))
        tokens = [f"rs{i * 10 + j}" for j in range(n_tokens)]
        sep = "; " if i % 2 == 0 else " x "
        rows.append((f"trait {i}", sep.join(tokens), "1E-10", ""))
        expected += n_tokens
    assocs, warnings = parse_catalog_tsv(_tsv(*rows))
    assert warnings == []
    assert len(assocs) == expected


def _assoc(rsid, p, trait="t"):
    return GwasAssociation(rsid=rsid, trait=trait, p_value=p)


def test_significance_cutoff_inclusive():
    kept = filter_significant([_assoc("rs1", 5e-8), _assoc("rs2", 6e-8),
                               _assoc("rs3", 1e-12)])
    assert [a.rsid for a in kept] == ["rs1", "rs3"]


def test_filter_subset_idempotent_order_preserving():
    assocs = [_assoc(f"rs{i}", p) for i, p in enumerate((1e-9, 0.5, 4e-8, 1e-3))]
    once = filter_significant(assocs)
    assert filter_significant(once) == once
    assert all(a in assocs for a in once)
    indices = [assocs.index(a) for a in once]
    assert indices == sorted(indices)


def test_condition_map_exact_match():
    assocs = [_assoc("rs2", 1e-9, "atrial fibrillation"),
              _assoc("rs1", 1e-9, "atrial fibrillation")]
    snp_map, warnings = build_condition_map(["atrial fibrillation"], assocs)
    assert snp_map.entries == {"atrial fibrillation": ["rs1", "rs2"]}
    assert warnings == []


def test_condition_map_substring_match():
    assocs = [_assoc("rs1", 1e-9, "chronic hypertension in adults")]
    snp_map, _ = build_condition_map(["hypertension"], assocs)
    assert snp_map.entries["hypertension"] == ["rs1"]


def test_condition_map_semantic_fallback_respects_threshold():
    embedder = HashingEmbedder()
    condition, trait = "coronary atherosclerosis", "coronary artery disease"
    score = similarity(condition, trait, embedder)
    assert 0.0 < score < 1.0
    assocs = [_assoc("rs9", 1e-9, trait)]
    attached, _ = build_condition_map([condition], assocs, matcher=embedder,
                                      threshold=score - 0.01)
    assert attached.entries[condition] == ["rs9"]
    detached, warnings = build_condition_map([condition], assocs, matcher=embedder,
                                             threshold=score + 0.01)
    assert detached.entries[condition] == []
    assert len(warnings) == 1


def test_condition_map_no_match_warning():
    assocs = [_assoc("rs1", 1e-9, "atrial fibrillation")]
    snp_map, warnings = build_condition_map(["asthma"], assocs)
    assert snp_map.entries["asthma"] == []
    assert any("asthma" in w for w in warnings)


def test_condition_map_pins_override():
    assocs = [_assoc("rs1", 1e-9, "atrial fibrillation")]
    snp_map, _ = build_condition_map(["atrial fibrillation"], assocs,
                                     pins={"atrial fibrillation": ["rs7", "rs7", "rs5"]})
    assert snp_map.entries["atrial fibrillation"] == ["rs5", "rs7"]


def test_condition_map_helpers():
    assocs = [_assoc("rs1", 1e-9, "atrial fibrillation"),
              _assoc("rs2", 1e-9, "hypertension"),
              _assoc("rs1", 1e-9, "hypertension")]
    snp_map, _ = build_condition_map(["atrial fibrillation", "hypertension"], assocs)
    assert snp_map.all_rsids() == ["rs1", "rs2"]
    assert snp_map.conditions_for("rs1") == ["atrial fibrillation", "hypertension"]


class _Response:
    def __init__(self, status_code, content):
        self.status_code = status_code
        self.content = content


def test_fetch_caches_and_skips_network(tmp_path):
    calls = []

    def fake_get(url, timeout):
        calls.append(url)
        return _Response(200, b"DISEASE/TRAIT\tSNPS\tP-VALUE\n")

    first = fetch_catalog("atrial fibrillation", endpoint="http://example/api",
                          cache_dir=tmp_path, http_get=fake_get)
    second = fetch_catalog("atrial fibrillation", endpoint="http://example/api",
                           cache_dir=tmp_path, http_get=fake_get)
    assert first == second
    assert len(calls) == 1


def test_fetch_environment_override(tmp_path, monkeypatch):
    seen = []

    def fake_get(url, timeout):
        seen.append(url)
        return _Response(200, b"ok")

    monkeypatch.setenv("CARDIOLINK_GWAS_URL", "http://override.host/api")
    fetch_catalog("x", cache_dir=tmp_path, http_get=fake_get)
    assert seen and seen[0].startswith("http://override.host/api?")


def test_fetch_404_no_cache_entry(tmp_path):
    def fake_get(url, timeout):
        return _Response(404, b"not found")

    with pytest.raises(StatusError, match="404"):
        fetch_catalog("x", endpoint="http://example/api", cache_dir=tmp_path,
                      http_get=fake_get)
    assert list(tmp_path.glob("*.tsv")) == []


def test_fetch_offline_cold_cache(tmp_path):
    with pytest.raises(TransportError, match="offline"):
        fetch_catalog("x", endpoint="http://example/api", cache_dir=tmp_path,
                      offline=True)


def test_fetch_network_failure(tmp_path):
    def fake_get(url, timeout):
        raise OSError("connection refused")

    with pytest.raises(TransportError, match="connection refused"):
        fetch_catalog("x", endpoint="http://example/api", cache_dir=tmp_path,
                      http_get=fake_get)
