"""GWAS catalog ingestion and condition -> SNP curation maps.

Input is the association-download TSV layout (columns ``DISEASE/TRAIT``,
``SNPS``, ``P-VALUE``, optionally ``MAPPED_GENE``). Multi-SNP cells are split
on ";" and "x" into one association each. Curation is exact-substring-first
with a semantic fallback, and a manual pin file always wins.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlencode

from . import semantics
from .cohort import RSID_PATTERN
from .errors import ParseError, StatusError, TransportError

GENOME_WIDE_P = 5e-8
ENDPOINT_ENV_VAR = "CARDIOLINK_GWAS_URL"
DEFAULT_ENDPOINT = "https://www.ebi.ac.uk/gwas/api/search/downloads/alternative"

_REQUIRED_COLUMNS = ("DISEASE/TRAIT", "SNPS", "P-VALUE")
_SNP_SPLIT = re.compile(r"[;x]")


@dataclass(frozen=True)
class GwasAssociation:
    rsid: str
    trait: str
    p_value: float
    mapped_gene: str | None = None
    source_row: int = 0


def parse_catalog_tsv(data: bytes | str) -> tuple[list[GwasAssociation], list[str]]:
    """Parse catalog associations; returns (associations, warnings).

    Rows with an unparseable or out-of-range p-value are skipped with a
    warning, as are SNP tokens that are not plain rsIDs.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"catalog TSV is not UTF-8 at byte {exc.start}") from exc
    else:
        text = data
    reader = csv.reader(io.StringIO(text, newline=""), delimiter="\t")
    try:
        header = next(reader, None)
    except csv.Error as exc:
        raise ParseError(f"malformed catalog TSV: {exc}") from exc
    if header is None:
        raise ParseError("catalog TSV is empty")
    columns = {name.strip().upper(): i for i, name in enumerate(header)}
    for required in _REQUIRED_COLUMNS:
        if required not in columns:
            raise ParseError(f"catalog TSV missing required column {required!r}")
    trait_col = columns["DISEASE/TRAIT"]
    snps_col = columns["SNPS"]
    p_col = columns["P-VALUE"]
    gene_col = columns.get("MAPPED_GENE")

    associations: list[GwasAssociation] = []
    warnings: list[str] = []
    while True:
        try:
            row = next(reader, None)
        except csv.Error as exc:
            raise ParseError(f"malformed catalog TSV near line {reader.line_num}: {exc}") from exc
        if row is None:
            break
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) <= max(trait_col, snps_col, p_col):
            warnings.append(f"line {line}: too few columns; row skipped")
            continue
        raw_p = row[p_col].strip()
        try:
            p_value = float(raw_p)
        except ValueError:
            warnings.append(f"line {line}: unparseable p-value {raw_p!r}; row skipped")
            continue
        if not 0.0 < p_value <= 1.0:
            warnings.append(f"line {line}: p-value {p_value} outside (0,1]; row skipped")
            continue
        trait = row[trait_col].strip().lower()
        gene = None
        if gene_col is not None and gene_col < len(row):
            gene = row[gene_col].strip() or None
        for token in _SNP_SPLIT.split(row[snps_col]):
            rsid = token.strip()
            if not rsid:
                continue
            if not RSID_PATTERN.fullmatch(rsid):
                warnings.append(f"line {line}: SNP token {rsid!r} is not an rsID; skipped")
                continue
            associations.append(GwasAssociation(rsid=rsid, trait=trait,
                                                p_value=p_value, mapped_gene=gene,
                                                source_row=line))
    return associations, warnings


def filter_significant(associations: list[GwasAssociation],
                       p_max: float = GENOME_WIDE_P) -> list[GwasAssociation]:
    """Keep associations at genome-wide significance (p <= p_max, inclusive).

    Order-preserving and idempotent.
    """
    return [a for a in associations if a.p_value <= p_max]


@dataclass
class ConditionSnpMap:
    """Curated SNP sets keyed by condition (sorted, deduplicated)."""

    entries: dict

    def all_rsids(self) -> list[str]:
        out = set()
        for rsids in self.entries.values():
            out.update(rsids)
        return sorted(out)

    def conditions_for(self, rsid: str) -> list[str]:
        return sorted(c for c, rsids in self.entries.items() if rsid in rsids)

    def to_json(self) -> str:
        return json.dumps(self.entries, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ConditionSnpMap":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ParseError("condition map must be a JSON object")
        entries = {}
        for condition, rsids in doc.items():
            if not isinstance(rsids, list):
                raise ParseError(f"condition {condition!r} must map to a list of rsids")
            entries[condition.strip().lower()] = sorted(set(rsids))
        return cls(entries)


def build_condition_map(conditions: list[str],
                        associations: list[GwasAssociation],
                        matcher: semantics.Embedder | None = None,
                        threshold: float = semantics.DEFAULT_THRESHOLD,
                        pins: dict | None = None) -> tuple[ConditionSnpMap, list[str]]:
    """Attach each trait's SNPs to the conditions it matches.

    A trait matches a condition on exact substring containment (either
    direction) or, failing that, on matcher similarity >= threshold. Pinned
    conditions take their rsID list from ``pins`` verbatim, overriding the
    computed set. Conditions ending up empty stay in the map with a warning.
    """
    matcher = matcher or semantics.HashingEmbedder()
    pins = pins or {}

    by_trait: dict[str, set] = {}
    for assoc in associations:
        by_trait.setdefault(assoc.trait, set()).add(assoc.rsid)

    trait_embeddings: dict[str, semantics.Embedding] = {}
    entries: dict = {}
    warnings: list[str] = []
    for raw in conditions:
        condition = raw.strip().lower()
        if not condition or condition in entries:
            continue
        if condition in pins:
            entries[condition] = sorted(set(pins[condition]))
            continue
        matched: set = set()
        for trait, rsids in by_trait.items():
            if condition in trait or trait in condition:
                matched.update(rsids)
                continue
            if trait not in trait_embeddings:
                trait_embeddings[trait] = matcher.embed(trait)
            score = semantics.cosine(matcher.embed(condition), trait_embeddings[trait])
            if score >= threshold:
                matched.update(rsids)
        if not matched:
            warnings.append(f"no SNPs matched condition {condition!r}")
        entries[condition] = sorted(matched)
    return ConditionSnpMap(entries), warnings


def _default_http_get(url: str, timeout: float):
    import requests

    return requests.get(url, timeout=timeout)


def fetch_catalog(trait_query: str,
                  endpoint: str | None = None,
                  cache_dir: str | Path = ".cardiolink_cache",
                  offline: bool = False,
                  http_get=None,
                  timeout: float = 30.0) -> bytes:
    """Fetch catalog bytes for a trait query, caching on disk.

    Cache hits never touch the network. The endpoint defaults to the
    CARDIOLINK_GWAS_URL environment variable, then the public catalog URL.
    Writes are atomic (temp file + rename), so concurrent fetches of one key
    cannot interleave.
    """
    base = endpoint or os.environ.get(ENDPOINT_ENV_VAR) or DEFAULT_ENDPOINT
    url = f"{base}?{urlencode({'q': trait_query})}"
    cache_dir = Path(cache_dir)
    key = hashlib.sha256(url.encode("utf-8")).hexdigest()[:32]
    cache_path = cache_dir / f"{key}.tsv"
    if cache_path.exists():
        return cache_path.read_bytes()
    if offline:
        raise TransportError(f"offline mode and no cached copy for {trait_query!r}")

    http_get = http_get or _default_http_get
    try:
        response = http_get(url, timeout=timeout)
    except Exception as exc:  # requests.RequestException or injected failure
        raise TransportError(f"catalog fetch failed for {url}: {exc}") from exc
    status = getattr(response, "status_code", 0)
    body = getattr(response, "content", b"")
    if status != 200:
        excerpt = body[:200].decode("utf-8", errors="replace")
        raise StatusError(status, excerpt)

    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp_path = cache_path.with_suffix(".tmp")
    tmp_path.write_bytes(body)
    os.replace(tmp_path, cache_path)
    return body
