import json
import math
from collections import Counter

import numpy as np
import pytest

from cardiolink.errors import ParseError
from cardiolink.semantics import (Embedding, HashingEmbedder, SidecarEmbedder,
                                  best_label, cosine, semantic_match, similarity)


def _unhashed_trigram_cosine(a: str, b: str) -> float:
    """Independent oracle: cosine over exact (unhashed) token counts."""
    def counts(text):
        text = " ".join(text.lower().split())
        padded = f" {text} "
        c = Counter(text.split())
        c.update(padded[i:i + 3] for i in range(len(padded) - 2))
        return c

    ca, cb = counts(a), counts(b)
    dot = sum(v * cb.get(k, 0) for k, v in ca.items())
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb)


def test_embeddings_are_unit_normalized():
    embedder = HashingEmbedder()
    for text in ("atrial fibrillation", "x", "long winded clinical description"):
        assert abs(embedder.embed(text).norm - 1.0) < 1e-9


def test_embedding_determinism():
    embedder = HashingEmbedder()
    a = embedder.embed("coronary atherosclerosis")
    b = embedder.embed("coronary atherosclerosis")
    assert np.array_equal(a.values, b.values)


def test_typo_scores_above_unrelated_condition():
    embedder = HashingEmbedder()
    typo = similarity("atrial fibrillation", "atrial fibrilation", embedder)
    unrelated = similarity("atrial fibrillation", "hypertension", embedder)
    assert typo > unrelated
    # the unhashed trigram-overlap oracle agrees on the ordering
    assert _unhashed_trigram_cosine("atrial fibrillation", "atrial fibrilation") > \
        _unhashed_trigram_cosine("atrial fibrillation", "hypertension")
    # hashing should track the exact-count cosine closely
    assert typo == pytest.approx(
        _unhashed_trigram_cosine("atrial fibrillation", "atrial fibrilation"), abs=0.05)


def test_empty_text_rejected():
    with pytest.raises(ValueError, match="empty text"):
        HashingEmbedder().embed("   ")
    with pytest.raises(ValueError, match="empty text"):
        similarity("", "x")


def test_cosine_identities():
    v = HashingEmbedder().embed("myocarditis")
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)
    neg = Embedding(-v.values)
    assert cosine(v, neg) == pytest.approx(-1.0, abs=1e-12)
    e1 = Embedding(np.array([1.0, 0.0, 0.0]))
    e2 = Embedding(np.array([0.0, 1.0, 0.0]))
    assert cosine(e1, e2) == 0.0


def test_cosine_errors():
    e1 = Embedding(np.array([1.0, 0.0]))
    e3 = Embedding(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValueError, match="dims"):
        cosine(e1, e3)
    zero = Embedding(np.zeros(2))
    with pytest.raises(ValueError, match="zero-norm"):
        cosine(e1, zero)


def test_exact_match_is_similarity_one():
    assert similarity("Atrial  Fibrillation", "atrial fibrillation") == 1.0
    assert semantic_match("atrial fibrillation", "ATRIAL FIBRILLATION")


def test_threshold_is_inclusive():
    embedder = HashingEmbedder()
    score = similarity("atrial fibrillation", "atrial fibrilation", embedder)
    assert semantic_match("atrial fibrillation", "atrial fibrilation",
                          embedder, threshold=score)
    assert not semantic_match("atrial fibrillation", "atrial fibrilation",
                              embedder, threshold=score + 1e-12)


def test_disjoint_characters_do_not_match():
    embedder = HashingEmbedder()
    assert similarity("xyzzy", "qqq www", embedder) == pytest.approx(0.0, abs=1e-9)
    assert not semantic_match("xyzzy", "qqq www", embedder)


def test_match_is_symmetric():
    embedder = HashingEmbedder()
    pairs = [("atrial fibrillation", "arrhythmia"), ("abc", "abd"), ("x y", "y x")]
    for a, b in pairs:
        assert semantic_match(a, b, embedder, 0.3) == semantic_match(b, a, embedder, 0.3)


def test_threshold_monotonicity():
    embedder = HashingEmbedder()
    pairs = [("hypertension", "hypertensive disease"), ("abc", "abd"),
             ("myocarditis", "pericarditis")]
    for a, b in pairs:
        for low, high in ((0.1, 0.5), (0.5, 0.9)):
            if not semantic_match(a, b, embedder, low):
                assert not semantic_match(a, b, embedder, high)


def test_best_label_verbatim_hit():
    label, score = best_label("hypertension", ["arrhythmia", "hypertension"])
    assert (label, score) == ("hypertension", 1.0)


def test_best_label_singleton():
    assert best_label("anything at all", ["only option"])[0] == "only option"


def test_best_label_tie_breaks_lexicographically():
    # both candidates share zero characters with the prediction: score 0 each
    label, score = best_label("xyzzy", ["bbb", "aaa"])
    assert label == "aaa"
    assert score == pytest.approx(0.0, abs=1e-9)


def test_best_label_order_invariant():
    labels = ["hypertension", "arrhythmia", "myocarditis"]
    forward = best_label("myocarditis maybe", labels)
    backward = best_label("myocarditis maybe", list(reversed(labels)))
    assert forward == backward


def test_sidecar_embedder(tmp_path):
    path = tmp_path / "vectors.jsonl"
    rows = [{"text": "Atrial Fibrillation", "vector": [1.0, 0.0]},
            {"text": "hypertension", "vector": [3.0, 4.0]}]
    path.write_text("\n".join(json.dumps(r) for r in rows))
    embedder = SidecarEmbedder(path)
    hit = embedder.embed("atrial  fibrillation")
    assert np.allclose(hit.values, [1.0, 0.0])
    assert abs(embedder.embed("hypertension").norm - 1.0) < 1e-12
    with pytest.raises(KeyError):
        embedder.embed("unknown condition")
    with_fallback = SidecarEmbedder(path, fallback=HashingEmbedder(dim=2))
    assert with_fallback.embed("unknown condition").dim == 2


def test_sidecar_rejects_bad_vectors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"text": "x", "vector": [0.0, 0.0]}))
    with pytest.raises(ParseError, match="zero vector"):
        SidecarEmbedder(path)
    path.write_text(json.dumps({"text": "x", "vector": [1.0]}) + "\n"
                    + json.dumps({"text": "y", "vector": [1.0, 2.0]}))
    with pytest.raises(ParseError, match="dim"):
        SidecarEmbedder(path)
