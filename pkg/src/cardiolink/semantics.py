"""Deterministic text embedding and cosine-similarity matching.

The built-in embedder folds hashed character trigrams and word unigrams into
a fixed-width vector, so tests never need a model download. Heavyweight
biomedical embedders stay out of process: either implement the ``Embedder``
protocol or precompute vectors into a JSON-lines sidecar and load them with
``SidecarEmbedder``.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ParseError

DEFAULT_DIM = 256
DEFAULT_THRESHOLD = 0.7


def normalize_text(text: str) -> str:
    """Lowercase and collapse whitespace; matching is done on this form."""
    return " ".join(text.lower().split())


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@runtime_checkable
class Embedder(Protocol):
    name: str

    def embed(self, text: str) -> Embedding: ...


def _token_counts(normalized: str) -> Counter:
    padded = f" {normalized} "
    counts = Counter(normalized.split())
    counts.update(padded[i:i + 3] for i in range(len(padded) - 2))
    return counts


class HashingEmbedder:
    """Hash-folded trigram + unigram embedder.

    BLAKE2-based hashing keeps vectors identical across processes and
    platforms (no interpreter hash randomization). Output is L2-normalized.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise ValueError(f"embedding dim must be >= 2, got {dim}")
        self.dim = dim
        self.name = f"hashing-trigram-{dim}"

    def _fold(self, counts: Counter, signed: bool) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token, count in counts.items():
            digest = int.from_bytes(
                hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
            sign = -1.0 if signed and digest & (1 << 63) else 1.0
            vec[digest % self.dim] += sign * count
        return vec

    def embed(self, text: str) -> Embedding:
        normalized = normalize_text(text)
        if not normalized:
            raise ValueError("empty text")
        counts = _token_counts(normalized)
        vec = self._fold(counts, signed=True)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # pathological sign cancellation; fall back to unsigned folding
            vec = self._fold(counts, signed=False)
            norm = float(np.linalg.norm(vec))
        return Embedding(vec / norm)


class SidecarEmbedder:
    """Looks up precomputed vectors from a JSON-lines sidecar.

    Each line is ``{"text": str, "vector": [float, ...]}``. Lookup keys are
    whitespace/case-normalized. Unknown text raises KeyError unless a
    fallback embedder is supplied.
    """

    def __init__(self, path: str | Path, fallback: Embedder | None = None):
        path = Path(path)
        self.name = f"sidecar:{path.name}"
        self.fallback = fallback
        self._table: dict[str, Embedding] = {}
        dim = None
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                text, vector = doc["text"], doc["vector"]
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise ParseError(f"{path}:{lineno}: bad sidecar line: {exc}") from exc
            values = np.asarray(vector, dtype=float)
            if values.ndim != 1 or values.size == 0:
                raise ParseError(f"{path}:{lineno}: vector must be a non-empty list")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise ParseError(f"{path}:{lineno}: vector dim {values.size} != {dim}")
            norm = float(np.linalg.norm(values))
            if norm == 0.0:
                raise ParseError(f"{path}:{lineno}: zero vector for {text!r}")
            self._table[normalize_text(text)] = Embedding(values / norm)

    def embed(self, text: str) -> Embedding:
        normalized = normalize_text(text)
        if not normalized:
            raise ValueError("empty text")
        hit = self._table.get(normalized)
        if hit is not None:
            return hit
        if self.fallback is not None:
            return self.fallback.embed(text)
        raise KeyError(f"no precomputed embedding for {text!r}")


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity in [-1, 1]; errors on dim mismatch or zero norm."""
    if a.dim != b.dim:
        raise ValueError(f"embedding dims differ: {a.dim} != {b.dim}")
    na, nb = a.norm, b.norm
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm embedding")
    value = float(np.dot(a.values, b.values) / (na * nb))
    return max(-1.0, min(1.0, value))


def similarity(text_a: str, text_b: str, embedder: Embedder | None = None) -> float:
    """Cosine similarity of two texts; 1.0 exactly when they normalize equal."""
    na, nb = normalize_text(text_a), normalize_text(text_b)
    if not na or not nb:
        raise ValueError("empty text")
    if na == nb:
        return 1.0
    embedder = embedder or HashingEmbedder()
    return cosine(embedder.embed(na), embedder.embed(nb))


def semantic_match(prediction: str, label: str,
                   embedder: Embedder | None = None,
                   threshold: float = DEFAULT_THRESHOLD) -> bool:
    """True iff similarity(prediction, label) >= threshold (inclusive)."""
    return similarity(prediction, label, embedder) >= threshold


def best_label(prediction: str, label_set: list[str],
               embedder: Embedder | None = None) -> tuple[str, float]:
    """Most similar label; ties break to the lexicographically smallest.

    Result is invariant to label_set ordering (candidates are scanned in
    sorted order with a strict improvement rule).
    """
    if not label_set:
        raise ValueError("label_set must be non-empty")
    embedder = embedder or HashingEmbedder()
    best: tuple[str, float] | None = None
    for label in sorted(set(label_set)):
        score = similarity(prediction, label, embedder)
        if best is None or score > best[1]:
            best = (label, score)
    return best
