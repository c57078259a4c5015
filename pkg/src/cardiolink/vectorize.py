"""TF-IDF over SNP profiles fused with z-scored ECG features.

Each participant is a "document" whose tokens are the curated rsIDs it
carries. tf is the alt-allele dosage (or plain presence), idf is the
smoothed form ln((1 + N) / (1 + df)) + 1, and vectors are L2-normalized.
df counts carriers (dosage >= 1), matching the document-contains-token
analogy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .cohort import ECG_FIELDS, Cohort, EcgFeatures, Participant
from .errors import ConfigError, ValidationError

TF_MODES = ("dosage", "presence")


@dataclass(frozen=True)
class Vocabulary:
    """Curated rsID vocabulary with per-token document frequencies."""

    tokens: tuple
    index: dict
    df: dict
    n_docs: int

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df[token])) + 1.0

    def to_json_dict(self) -> dict:
        return {"tokens": list(self.tokens), "df": dict(self.df),
                "n_docs": self.n_docs}


@dataclass
class SparseVector:
    indices: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    dim: int = 0

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        if self.indices:
            dense[np.asarray(self.indices, dtype=int)] = self.values
        return dense

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


@dataclass
class FeatureVector:
    """TF-IDF genotype part plus z-scored ECG part."""

    tfidf: SparseVector
    ecg: np.ndarray

    @property
    def fused_dim(self) -> int:
        return self.tfidf.dim + int(self.ecg.shape[0])

    def to_dense(self) -> np.ndarray:
        return np.concatenate([self.tfidf.to_dense(), self.ecg])


def build_vocabulary(cohort: Cohort, curated: set) -> Vocabulary:
    """Tokens = rsids present in the cohort panel intersected with the
    curated set, sorted. df counts participants carrying the token."""
    if not curated:
        raise ConfigError("curated rsid set is empty")
    tokens = tuple(sorted(set(cohort.panel()) & set(curated)))
    if not tokens:
        raise ValidationError("no curated variants in cohort")
    df = {t: 0 for t in tokens}
    for participant in cohort.participants:
        for rsid, dosage in participant.dosages().items():
            if dosage >= 1 and rsid in df:
                df[rsid] += 1
    index = {t: i for i, t in enumerate(tokens)}
    return Vocabulary(tokens=tokens, index=index, df=df,
                      n_docs=len(cohort.participants))


def tfidf_vector(participant: Participant, vocab: Vocabulary,
                 tf_mode: str = "dosage") -> SparseVector:
    """L2-normalized tf-idf entries for the tokens this participant carries.

    A participant carrying no vocabulary token yields an empty vector
    (norm 0), which downstream code treats as "no genetic signal".
    """
    if tf_mode not in TF_MODES:
        raise ConfigError(f"tf_mode must be one of {TF_MODES}, got {tf_mode!r}")
    pairs = []
    for rsid, dosage in participant.dosages().items():
        if dosage < 1 or rsid not in vocab.index:
            continue
        tf = float(dosage) if tf_mode == "dosage" else 1.0
        pairs.append((vocab.index[rsid], tf * vocab.idf(rsid)))
    pairs.sort()
    if not pairs:
        return SparseVector(dim=len(vocab.tokens))
    values = np.array([v for _, v in pairs])
    values /= np.linalg.norm(values)
    return SparseVector(indices=[i for i, _ in pairs], values=values.tolist(),
                        dim=len(vocab.tokens))


@dataclass(frozen=True)
class EcgScaler:
    """Per-feature cohort means and population stddevs (over present values)."""

    feature_names: tuple
    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, cohort: Cohort) -> "EcgScaler":
        seen = set()
        for participant in cohort.participants:
            seen.update(name for name, _ in participant.ecg.items())
        ordered = tuple([n for n in ECG_FIELDS if n in seen]
                        + sorted(n for n in seen if n not in ECG_FIELDS))
        means, stds = [], []
        for name in ordered:
            values = [p.ecg.get(name) for p in cohort.participants]
            values = np.array([v for v in values if v is not None])
            means.append(float(values.mean()) if values.size else 0.0)
            stds.append(float(values.std()) if values.size else 0.0)
        return cls(ordered, np.array(means), np.array(stds))


def fuse_features(tfidf: SparseVector, ecg: EcgFeatures, scaler: EcgScaler) -> FeatureVector:
    """Concatenate the tf-idf vector with z-scored ECG features.

    Missing features and zero-variance features map to 0 (mean imputation).
    """
    z = np.zeros(len(scaler.feature_names))
    for i, name in enumerate(scaler.feature_names):
        value = ecg.get(name)
        if value is None or scaler.stds[i] == 0.0:
            continue
        z[i] = (value - scaler.means[i]) / scaler.stds[i]
    return FeatureVector(tfidf=tfidf, ecg=z)


def vectorize_cohort(cohort: Cohort, vocab: Vocabulary, scaler: EcgScaler,
                     tf_mode: str = "dosage") -> dict:
    """FeatureVector per participant id."""
    return {p.id: fuse_features(tfidf_vector(p, vocab, tf_mode), p.ecg, scaler)
            for p in cohort.participants}


def export_matrix(features: dict, vocab: Vocabulary,
                  matrix_path: str | Path, vocab_path: str | Path) -> None:
    """Coordinate-format dump (row col value) of the tf-idf block plus a
    vocabulary/row index JSON."""
    import json

    ids = sorted(features)
    with Path(matrix_path).open("w", encoding="utf-8") as fh:
        for row, pid in enumerate(ids):
            sparse = features[pid].tfidf
            for col, value in zip(sparse.indices, sparse.values):
                fh.write(f"{row} {col} {value!r}\n")
    doc = {"rows": ids, "tokens": list(vocab.tokens),
           "index": dict(vocab.index), "n_docs": vocab.n_docs}
    Path(vocab_path).write_text(json.dumps(doc, sort_keys=True, indent=2),
                                encoding="utf-8")


class CohortVectorizer(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: fit learns the vocabulary and ECG scaling from
    a cohort (or participant list), transform returns the dense fused matrix
    with rows in input order."""

    def __init__(self, curated: set | None = None, tf_mode: str = "dosage"):
        self.curated = curated
        self.tf_mode = tf_mode

    @staticmethod
    def _as_cohort(X) -> Cohort:
        if isinstance(X, Cohort):
            return X
        return Cohort(list(X))

    def fit(self, X, y=None):
        cohort = self._as_cohort(X)
        curated = self.curated if self.curated else set(cohort.panel())
        self.vocabulary_ = build_vocabulary(cohort, curated)
        self.scaler_ = EcgScaler.fit(cohort)
        return self

    def transform(self, X) -> np.ndarray:
        cohort = self._as_cohort(X)
        rows = [fuse_features(tfidf_vector(p, self.vocabulary_, self.tf_mode),
                              p.ecg, self.scaler_).to_dense()
                for p in cohort.participants]
        return np.vstack(rows) if rows else np.zeros((0, 0))
