"""Unsupervised risk clustering of unlabeled participants.

k-means with k-means++ seeding and Lloyd iterations, deterministic given the
seed. Cluster count is chosen by mean silhouette when not fixed. Each cluster
is annotated by comparing its members' genotype vectors to the Tier-1 tf-idf
centroid and their ECG features to normative reference ranges; every member
inherits the cluster's risk label as a pseudo-label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.metrics import silhouette_score

from .cohort import Participant
from .errors import ValidationError
from .vectorize import SparseVector

FUTURE_RISK = "future-risk"
HIGH_RISK = "high-risk"
LOW_RISK = "low-risk"

# Standard clinical intervals; "normative ECG" means every measured feature
# with a reference range falls inside it.
DEFAULT_ECG_REFERENCE = {
    "qrs_ms": (80.0, 120.0),
    "pr_ms": (120.0, 200.0),
    "qtc_ms": (0.0, 450.0),
    "heart_rate_bpm": (60.0, 100.0),
}


@dataclass
class ClusterAssignment:
    k: int
    labels: dict
    centroids: np.ndarray
    inertia: float
    seed: int


@dataclass(frozen=True)
class RiskThresholds:
    tier1_similarity_min: float = 0.5
    normative_fraction_min: float = 0.8


@dataclass
class ClusterAnnotation:
    cluster: int
    size: int
    tier1_similarity: float
    normative_ecg_fraction: float
    risk_label: str


def _pairwise_sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)[:, None] + (C * C).sum(axis=1)[None, :]
    sq -= 2.0 * X @ C.T
    return np.maximum(sq, 0.0)


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    closest = _pairwise_sq_dists(X, centroids[:1]).ravel()
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[i] = X[idx]
        closest = np.minimum(closest, _pairwise_sq_dists(X, centroids[i:i + 1]).ravel())
    return centroids


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator, max_iters: int, tol: float):
    centroids = _kmeans_pp_init(X, k, rng)
    previous_inertia = np.inf
    check_monotone = True
    labels = np.zeros(X.shape[0], dtype=int)
    for _ in range(max_iters):
        dists = _pairwise_sq_dists(X, centroids)
        labels = dists.argmin(axis=1)
        inertia = float(dists[np.arange(X.shape[0]), labels].sum())
        # Lloyd guarantees non-increasing inertia except right after an
        # empty-cluster reseed.
        if check_monotone and inertia > previous_inertia + 1e-8 * (1.0 + previous_inertia):
            raise RuntimeError(
                f"inertia increased: {previous_inertia} -> {inertia}")
        previous_inertia = inertia
        check_monotone = True

        new_centroids = centroids.copy()
        reseeded = False
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = X[members].mean(axis=0)
            else:
                farthest = int(dists[np.arange(X.shape[0]), labels].argmax())
                new_centroids[j] = X[farthest]
                reseeded = True
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if reseeded:
            check_monotone = False
        elif shift < tol:
            break
    dists = _pairwise_sq_dists(X, centroids)
    labels = dists.argmin(axis=1)
    inertia = float(dists[np.arange(X.shape[0]), labels].sum())
    return labels, centroids, inertia


def _as_matrix(features: dict) -> tuple[list[str], np.ndarray]:
    ids = sorted(features)
    if not ids:
        raise ValidationError("no feature vectors supplied")
    return ids, np.vstack([features[i].to_dense() for i in ids])


def kmeans(features: dict, k: int, seed: int = 0,
           max_iters: int = 300, tol: float = 1e-6,
           n_init: int = 10) -> ClusterAssignment:
    """Cluster FeatureVectors keyed by participant id.

    Runs n_init seeded k-means++ restarts and keeps the lowest-inertia
    solution. Rows are ordered by id internally, so the result is invariant
    to the mapping's insertion order. Requires k <= number of distinct
    points; deterministic given the seed.
    """
    ids, X = _as_matrix(features)
    distinct = np.unique(X, axis=0).shape[0]
    if k < 1 or k > distinct:
        raise ValidationError(f"k={k} must be in [1, {distinct}] (distinct points)")
    best = None
    for restart in range(max(1, n_init)):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(restart,)))
        labels, centroids, inertia = _lloyd(X, k, rng, max_iters, tol)
        if best is None or inertia < best[2]:
            best = (labels, centroids, inertia)
    labels, centroids, inertia = best
    return ClusterAssignment(k=k, labels={pid: int(c) for pid, c in zip(ids, labels)},
                             centroids=centroids, inertia=inertia, seed=seed)


def select_k(features: dict, k_range=range(2, 11), seed: int = 0,
             max_iters: int = 300, tol: float = 1e-6, score_fn=None) -> int:
    """k maximizing the mean silhouette score; ties go to the smallest k."""
    ks = sorted(set(k_range))
    if not ks:
        raise ValidationError("k_range is empty")
    _, X = _as_matrix(features)
    score_fn = score_fn or (lambda X, labels: float(silhouette_score(X, labels)))
    best_k, best_score = None, -np.inf
    for k in ks:
        assignment = kmeans(features, k, seed=seed, max_iters=max_iters, tol=tol)
        labels = np.array([assignment.labels[pid] for pid in sorted(features)])
        score = score_fn(X, labels)
        if score > best_score:
            best_k, best_score = k, score
    return best_k


def tfidf_centroid(vectors: list[SparseVector]) -> np.ndarray:
    """Mean of dense tf-idf vectors; the Tier-1 genetic profile."""
    if not vectors:
        raise ValidationError("no Tier-1 profile available")
    return np.vstack([v.to_dense() for v in vectors]).mean(axis=0)


def _safe_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def ecg_in_reference(participant: Participant, reference: dict) -> bool:
    """True when every measured feature with a reference range is inside it."""
    for name, (low, high) in reference.items():
        value = participant.ecg.get(name)
        if value is not None and not low <= value <= high:
            return False
    return True


def annotate_and_pseudo_label(assignment: ClusterAssignment,
                              participants: list[Participant],
                              tfidf_by_id: dict,
                              tier1_centroid: np.ndarray,
                              ecg_reference: dict | None = None,
                              thresholds: RiskThresholds | None = None
                              ) -> tuple[list[ClusterAnnotation], dict]:
    """Annotate each cluster against the Tier-1 profile and normative ECG,
    then stamp the cluster's risk label onto every member.

    Risk rule: similarity >= tier1_similarity_min and normative fraction >=
    normative_fraction_min -> future-risk; same similarity with abnormal ECG
    -> high-risk; otherwise low-risk.
    """
    ecg_reference = ecg_reference if ecg_reference is not None else DEFAULT_ECG_REFERENCE
    thresholds = thresholds or RiskThresholds()
    if tier1_centroid is None or not np.any(tier1_centroid):
        raise ValidationError("no Tier-1 profile available")
    by_id = {p.id: p for p in participants}
    missing = sorted(set(assignment.labels) - set(by_id))
    if missing:
        raise ValidationError(f"participants missing for ids: {', '.join(missing[:5])}")

    members: dict[int, list[str]] = {c: [] for c in range(assignment.k)}
    for pid, cluster in assignment.labels.items():
        members[cluster].append(pid)

    annotations: list[ClusterAnnotation] = []
    pseudo_labels: dict = {}
    for cluster in range(assignment.k):
        ids = sorted(members[cluster])
        if not ids:
            annotations.append(ClusterAnnotation(cluster, 0, 0.0, 0.0, LOW_RISK))
            continue
        sims = [_safe_cosine(tfidf_by_id[pid].to_dense(), tier1_centroid) for pid in ids]
        normative = [ecg_in_reference(by_id[pid], ecg_reference) for pid in ids]
        similarity = float(np.mean(sims))
        fraction = float(np.mean(normative))
        if similarity >= thresholds.tier1_similarity_min:
            label = FUTURE_RISK if fraction >= thresholds.normative_fraction_min else HIGH_RISK
        else:
            label = LOW_RISK
        annotations.append(ClusterAnnotation(cluster, len(ids), similarity,
                                             fraction, label))
        for pid in ids:
            pseudo_labels[pid] = label
    return annotations, pseudo_labels


class RiskClusterer(BaseEstimator, ClusterMixin):
    """sklearn-style k-means over dense row matrices.

    k="auto" selects the cluster count by silhouette over k_range. After fit:
    labels_, cluster_centers_, inertia_, n_clusters_.
    """

    def __init__(self, k="auto", k_range=(2, 10), seed: int = 0,
                 max_iters: int = 300, tol: float = 1e-6):
        self.k = k
        self.k_range = k_range
        self.seed = seed
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        features = {f"r{i:08d}": _DenseRow(row) for i, row in enumerate(X)}
        if self.k == "auto":
            distinct = np.unique(X, axis=0).shape[0]
            lo, hi = self.k_range
            hi = min(hi, distinct, X.shape[0] - 1)  # silhouette needs k <= n-1
            if hi < 2:
                k = 1
            else:
                k = select_k(features, range(max(2, min(lo, hi)), hi + 1),
                             seed=self.seed, max_iters=self.max_iters, tol=self.tol)
        else:
            k = int(self.k)
        assignment = kmeans(features, k, seed=self.seed,
                            max_iters=self.max_iters, tol=self.tol)
        self.n_clusters_ = k
        self.labels_ = np.array([assignment.labels[pid] for pid in sorted(features)])
        self.cluster_centers_ = assignment.centroids
        self.inertia_ = assignment.inertia
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return _pairwise_sq_dists(X, self.cluster_centers_).argmin(axis=1)


@dataclass
class _DenseRow:
    row: np.ndarray

    def to_dense(self) -> np.ndarray:
        return np.asarray(self.row, dtype=float)
