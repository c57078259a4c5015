"""Tier assignment from condition strings.

Tier 1 = confirmed cardiac diagnosis, Tier 2 = indirect cardiac indicators,
Tier 3 = unlabeled. A condition matches a keyword on substring containment
(either direction) or on embedding similarity at the lexicon threshold;
Tier 1 takes precedence for comorbid participants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from sklearn.base import BaseEstimator

from . import semantics
from .cohort import Cohort, Participant, Tier
from .errors import ConfigError

DEFAULT_TIER1_KEYWORDS = ("atrial fibrillation", "myocarditis",
                          "coronary atherosclerosis", "arrhythmia")
DEFAULT_TIER2_KEYWORDS = ("hypertension", "hyperlipidemia")


@dataclass(frozen=True)
class TierLexicon:
    tier1_keywords: tuple = DEFAULT_TIER1_KEYWORDS
    tier2_keywords: tuple = DEFAULT_TIER2_KEYWORDS
    match_threshold: float = semantics.DEFAULT_THRESHOLD

    def __post_init__(self):
        for keyword in (*self.tier1_keywords, *self.tier2_keywords):
            if keyword != keyword.strip().lower() or not keyword:
                raise ConfigError(f"lexicon keywords must be trimmed lowercase: {keyword!r}")
        overlap = set(self.tier1_keywords) & set(self.tier2_keywords)
        if overlap:
            raise ConfigError(f"keyword lists must be disjoint, shared: {sorted(overlap)}")
        if not 0.0 < self.match_threshold <= 1.0:
            raise ConfigError(f"match_threshold must be in (0,1], got {self.match_threshold}")

    @classmethod
    def from_json(cls, text: str) -> "TierLexicon":
        doc = json.loads(text)
        return cls(tier1_keywords=tuple(doc.get("tier1", DEFAULT_TIER1_KEYWORDS)),
                   tier2_keywords=tuple(doc.get("tier2", DEFAULT_TIER2_KEYWORDS)),
                   match_threshold=doc.get("match_threshold", semantics.DEFAULT_THRESHOLD))

    @classmethod
    def from_file(cls, path: str | Path) -> "TierLexicon":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_json(self) -> str:
        return json.dumps({"tier1": list(self.tier1_keywords),
                           "tier2": list(self.tier2_keywords),
                           "match_threshold": self.match_threshold},
                          sort_keys=True, indent=2)


def _condition_matches(condition: str, keywords: tuple, threshold: float,
                       embedder: semantics.Embedder) -> bool:
    for keyword in keywords:
        if keyword in condition or condition in keyword:
            return True
    for keyword in keywords:
        if semantics.similarity(condition, keyword, embedder) >= threshold:
            return True
    return False


def assign_tier(participant: Participant,
                lexicon: TierLexicon | None = None,
                embedder: semantics.Embedder | None = None) -> Tier:
    """Highest tier whose keywords match any condition; Tier 3 otherwise."""
    lexicon = lexicon or TierLexicon()
    embedder = embedder or semantics.HashingEmbedder()
    conditions = [semantics.normalize_text(c) for c in participant.conditions]
    conditions = [c for c in conditions if c]
    if any(_condition_matches(c, lexicon.tier1_keywords, lexicon.match_threshold, embedder)
           for c in conditions):
        return Tier.TIER1
    if any(_condition_matches(c, lexicon.tier2_keywords, lexicon.match_threshold, embedder)
           for c in conditions):
        return Tier.TIER2
    return Tier.TIER3


def matching_condition(participant: Participant, tier: Tier,
                       lexicon: TierLexicon | None = None,
                       embedder: semantics.Embedder | None = None) -> str | None:
    """Lexicographically smallest condition that matches the tier's keywords
    (the prompt stage uses this as the participant's label)."""
    lexicon = lexicon or TierLexicon()
    embedder = embedder or semantics.HashingEmbedder()
    if tier is Tier.TIER1:
        keywords = lexicon.tier1_keywords
    elif tier is Tier.TIER2:
        keywords = lexicon.tier2_keywords
    else:
        return None
    for condition in sorted(semantics.normalize_text(c) for c in participant.conditions):
        if condition and _condition_matches(condition, keywords,
                                            lexicon.match_threshold, embedder):
            return condition
    return None


def assign_tiers(cohort: Cohort,
                 lexicon: TierLexicon | None = None,
                 embedder: semantics.Embedder | None = None) -> Cohort:
    """New cohort with every participant's tier populated."""
    tiered = [replace(p, tier=assign_tier(p, lexicon, embedder))
              for p in cohort.participants]
    return Cohort(tiered, cohort.provenance)


class TierAssigner(BaseEstimator):
    """Estimator-style wrapper so tiering drops into sklearn pipelines.

    predict(X) accepts a list of Participants (or a Cohort) and returns the
    tier per row. Stateless: fit is a no-op kept for API compatibility.
    """

    def __init__(self, lexicon: TierLexicon | None = None,
                 embedder: semantics.Embedder | None = None):
        self.lexicon = lexicon
        self.embedder = embedder

    def fit(self, X=None, y=None):
        return self

    def predict(self, X) -> list[Tier]:
        participants = X.participants if isinstance(X, Cohort) else X
        return [assign_tier(p, self.lexicon, self.embedder) for p in participants]
