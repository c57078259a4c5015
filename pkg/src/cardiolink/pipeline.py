"""End-to-end pipeline: simulate/ingest -> qc -> curation map -> tier ->
vectorize -> cluster -> prompts/split -> (await completions) -> evaluate.

Each stage appends a manifest entry with content hashes of its inputs and
outputs. The fine-tuning/inference gap is a file handshake: the pipeline
stops after train.jsonl/test.jsonl unless a completions file is configured
and present.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cluster as clustering
from . import gwas, prompts, semantics, tiering, vectorize
from .evaluate import evaluate as evaluate_predictions
from .evaluate import read_completions, render_report
from .cohort import Cohort, Tier, load_cohort
from .errors import ConfigError
from .manifest import Manifest
from .qc import QcConfig, apply_qc
from .simulate import (DEMO_TIER1_CONDITION, DEMO_TIER1_RSIDS, DEMO_TIER2_CONDITION,
                       DEMO_TIER2_RSIDS, demo_config, simulate_cohort, write_simulated)
from .tiering import TierLexicon


@dataclass
class CohortPaths:
    participants_dir: str | None = None
    conditions_csv: str | None = None


@dataclass
class SimulateSettings:
    enabled: bool = False
    n_variants: int = 500


@dataclass
class GwasSettings:
    catalog_tsv: str | None = None
    pins: str | None = None
    fetch_trait: str | None = None
    endpoint: str | None = None
    p_max: float = gwas.GENOME_WIDE_P
    match_threshold: float = semantics.DEFAULT_THRESHOLD


@dataclass
class VectorizeSettings:
    tf_mode: str = "dosage"
    export_matrix: bool = False


@dataclass
class ClusterSettings:
    k: int | None = None
    k_min: int = 2
    k_max: int = 10
    tier1_similarity_min: float = 0.5
    normative_fraction_min: float = 0.8


@dataclass
class PromptSettings:
    template: str | None = None
    split_ratio: float = 0.8
    signature_size: int = 8


@dataclass
class EvalSettings:
    threshold: float = semantics.DEFAULT_THRESHOLD
    average: str = "macro"
    run_name: str = "run"
    completions: str | None = None
    embeddings_sidecar: str | None = None


@dataclass
class PipelineConfig:
    out_dir: str = "out"
    seed: int = 42
    offline: bool = False
    cohort: CohortPaths = field(default_factory=CohortPaths)
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    qc: QcConfig = field(default_factory=QcConfig)
    lexicon: TierLexicon = field(default_factory=TierLexicon)
    gwas: GwasSettings = field(default_factory=GwasSettings)
    vectorize: VectorizeSettings = field(default_factory=VectorizeSettings)
    cluster: ClusterSettings = field(default_factory=ClusterSettings)
    prompts: PromptSettings = field(default_factory=PromptSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def to_json(self) -> str:
        doc = {
            "out_dir": self.out_dir,
            "seed": self.seed,
            "offline": self.offline,
            "cohort": dataclasses.asdict(self.cohort),
            "simulate": dataclasses.asdict(self.simulate),
            "qc": dataclasses.asdict(self.qc),
            "lexicon": {"tier1": list(self.lexicon.tier1_keywords),
                        "tier2": list(self.lexicon.tier2_keywords),
                        "match_threshold": self.lexicon.match_threshold},
            "gwas": dataclasses.asdict(self.gwas),
            "vectorize": dataclasses.asdict(self.vectorize),
            "cluster": dataclasses.asdict(self.cluster),
            "prompts": dataclasses.asdict(self.prompts),
            "eval": dataclasses.asdict(self.eval),
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ConfigError("pipeline config must be a JSON object")
        sections = {
            "cohort": CohortPaths, "simulate": SimulateSettings, "qc": QcConfig,
            "gwas": GwasSettings, "vectorize": VectorizeSettings,
            "cluster": ClusterSettings, "prompts": PromptSettings,
            "eval": EvalSettings,
        }
        kwargs = {}
        for key, value in doc.items():
            if key in ("out_dir", "seed", "offline"):
                kwargs[key] = value
            elif key == "lexicon":
                kwargs[key] = TierLexicon(
                    tier1_keywords=tuple(value.get("tier1", tiering.DEFAULT_TIER1_KEYWORDS)),
                    tier2_keywords=tuple(value.get("tier2", tiering.DEFAULT_TIER2_KEYWORDS)),
                    match_threshold=value.get("match_threshold", semantics.DEFAULT_THRESHOLD))
            elif key in sections:
                known = {f.name for f in dataclasses.fields(sections[key])}
                unknown = set(value) - known
                if unknown:
                    raise ConfigError(f"unknown config keys in '{key}': {sorted(unknown)}")
                kwargs[key] = sections[key](**value)
            else:
                raise ConfigError(f"unknown config section {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def demo(cls, out_dir: str = "out", seed: int = 42,
             n_variants: int = 500) -> "PipelineConfig":
        """Self-contained demo run over the simulated cohort.

        The demo cohort has planted subpopulation structure, which a
        cohort-wide HWE test correctly flags (Wahlund effect), so the HWE
        screen is relaxed to only catch impossible genotype patterns.
        """
        config = cls(out_dir=out_dir, seed=seed)
        config.simulate.enabled = True
        config.simulate.n_variants = n_variants
        config.qc = QcConfig(maf_min=0.01, hwe_alpha=1e-300, gp_min=0.9)
        return config

    def apply_override(self, dotted: str, raw_value: str) -> None:
        """Apply one --set override like 'qc.maf_min=0.02' or 'seed=7'."""
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        parts = dotted.split(".")
        if len(parts) == 1:
            name = parts[0]
            if not hasattr(self, name) or dataclasses.is_dataclass(getattr(self, name)):
                raise ConfigError(f"unknown top-level config field {name!r}")
            setattr(self, name, value)
            return
        if len(parts) != 2:
            raise ConfigError(f"override path must be 'field' or 'section.field': {dotted!r}")
        section_name, field_name = parts
        section = getattr(self, section_name, None)
        if section is None or not dataclasses.is_dataclass(section):
            raise ConfigError(f"unknown config section {section_name!r}")
        if field_name not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigError(f"unknown field {field_name!r} in section {section_name!r}")
        current = getattr(section, field_name)
        if isinstance(current, tuple) and isinstance(value, list):
            value = tuple(value)
        setattr(self, section_name, dataclasses.replace(section, **{field_name: value}))


def _embedder(config: PipelineConfig) -> semantics.Embedder:
    if config.eval.embeddings_sidecar:
        return semantics.SidecarEmbedder(config.eval.embeddings_sidecar,
                                         fallback=semantics.HashingEmbedder())
    return semantics.HashingEmbedder()


def _require_path(label: str, value: str | None) -> Path:
    if not value:
        raise ConfigError(f"missing required path: {label}")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{label} does not exist: {path}")
    return path


def build_condition_map_for(cohort: Cohort,
                            config: PipelineConfig) -> tuple[gwas.ConditionSnpMap, list[str]]:
    """Curation map over the cohort's distinct conditions from the configured
    catalog TSV and/or manual pin file."""
    conditions = sorted({c for p in cohort.participants for c in p.conditions})
    associations = []
    warnings: list[str] = []
    catalog_bytes = None
    if config.gwas.catalog_tsv:
        catalog_path = _require_path("gwas.catalog_tsv", config.gwas.catalog_tsv)
        catalog_bytes = catalog_path.read_bytes()
    elif config.gwas.fetch_trait:
        catalog_bytes = gwas.fetch_catalog(config.gwas.fetch_trait,
                                           endpoint=config.gwas.endpoint,
                                           cache_dir=Path(config.out_dir) / "catalog_cache",
                                           offline=config.offline)
    if catalog_bytes is not None:
        associations, parse_warnings = gwas.parse_catalog_tsv(catalog_bytes)
        warnings.extend(parse_warnings)
        associations = gwas.filter_significant(associations, config.gwas.p_max)
    pins = None
    if config.gwas.pins:
        pins_path = _require_path("gwas.pins", config.gwas.pins)
        pins = json.loads(pins_path.read_text(encoding="utf-8"))
    if catalog_bytes is None and pins is None:
        raise ConfigError("curation needs gwas.catalog_tsv, gwas.fetch_trait, or gwas.pins")
    snp_map, map_warnings = gwas.build_condition_map(
        conditions, associations, matcher=_embedder(config),
        threshold=config.gwas.match_threshold, pins=pins)
    return snp_map, warnings + map_warnings


def cluster_tier3(cohort: Cohort, features: dict, vocab: vectorize.Vocabulary,
                  config: PipelineConfig, tf_mode: str = "dosage"):
    """Cluster Tier-3 participants and pseudo-label them against the Tier-1
    tf-idf centroid. Returns (assignment|None, annotations, pseudo_labels)."""
    tier3 = [p for p in cohort.participants if p.tier is Tier.TIER3]
    tier1 = [p for p in cohort.participants if p.tier is Tier.TIER1]
    if not tier3:
        return None, [], {}
    tier1_vectors = [vectorize.tfidf_vector(p, vocab, tf_mode) for p in tier1]
    centroid = clustering.tfidf_centroid(tier1_vectors)
    tier3_features = {p.id: features[p.id] for p in tier3}
    if len(tier3) == 1:
        only = tier3[0].id
        return None, [], {only: clustering.LOW_RISK}

    settings = config.cluster
    if settings.k is not None:
        k = settings.k
    else:
        distinct = np.unique(np.vstack([f.to_dense() for f in tier3_features.values()]),
                             axis=0).shape[0]
        # silhouette needs 2 <= k <= n-1
        hi = min(settings.k_max, distinct, len(tier3) - 1)
        if hi < 2:
            k = 1
        else:
            lo = max(2, min(settings.k_min, hi))
            k = clustering.select_k(tier3_features, range(lo, hi + 1), seed=config.seed)
    assignment = clustering.kmeans(tier3_features, k, seed=config.seed)
    thresholds = clustering.RiskThresholds(
        tier1_similarity_min=settings.tier1_similarity_min,
        normative_fraction_min=settings.normative_fraction_min)
    tfidf_by_id = {p.id: vectorize.tfidf_vector(p, vocab, tf_mode) for p in tier3}
    annotations, pseudo_labels = clustering.annotate_and_pseudo_label(
        assignment, tier3, tfidf_by_id, centroid, thresholds=thresholds)
    return assignment, annotations, pseudo_labels


def _cluster_signature(assignment, cluster_idx: int, vocab: vectorize.Vocabulary,
                       size: int) -> list[str]:
    """Top-weighted vocabulary tokens of one cluster's centroid."""
    centroid = assignment.centroids[cluster_idx][:len(vocab.tokens)]
    ranked = sorted(range(len(vocab.tokens)), key=lambda i: (-centroid[i], i))
    return [vocab.tokens[i] for i in ranked[:size] if centroid[i] > 0.0]


def build_prompt_records(cohort: Cohort, snp_map: gwas.ConditionSnpMap,
                         vocab: vectorize.Vocabulary, assignment,
                         pseudo_labels: dict, config: PipelineConfig,
                         embedder: semantics.Embedder) -> list[prompts.PromptRecord]:
    template = (prompts.PromptTemplate.from_file(config.prompts.template)
                if config.prompts.template else prompts.PromptTemplate.default())
    curated = set(vocab.tokens)
    records = []
    for participant in cohort.participants:
        if participant.tier in (Tier.TIER1, Tier.TIER2):
            label = tiering.matching_condition(participant, participant.tier,
                                               config.lexicon, embedder)
            label = label or (participant.conditions[0] if participant.conditions else "")
            carried = [rsid for rsid, dosage in sorted(participant.dosages().items())
                       if dosage >= 1 and rsid in curated]
            cited = [(rsid, (snp_map.conditions_for(rsid) or ["curated panel"])[0])
                     for rsid in carried]
        else:
            label = pseudo_labels.get(participant.id, clustering.LOW_RISK)
            if assignment is not None and participant.id in assignment.labels:
                signature = _cluster_signature(assignment,
                                               assignment.labels[participant.id],
                                               vocab, config.prompts.signature_size)
            else:
                signature = []
            cited = [(rsid, (snp_map.conditions_for(rsid) or ["cluster signature"])[0])
                     for rsid in signature]
        records.append(prompts.render_prompt(participant, cited, label, template))
    return records


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute every stage; returns artifact paths. Raises ConfigError for
    unusable configs and other CardiolinkError subclasses for stage failures."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out_dir / "manifest.json")
    artifacts: dict = {"manifest": out_dir / "manifest.json"}

    if config.simulate.enabled:
        sim_config = demo_config(seed=config.seed, n_variants=config.simulate.n_variants)
        cohort_raw, truth = simulate_cohort(sim_config)
        sim_paths = write_simulated(cohort_raw, truth, out_dir / "cohort")
        config.cohort.participants_dir = str(sim_paths["participants"])
        config.cohort.conditions_csv = str(sim_paths["conditions"])
        artifacts["truth"] = sim_paths["truth"]
        if not (config.gwas.catalog_tsv or config.gwas.pins or config.gwas.fetch_trait):
            # the demo is self-contained: pin the planted condition panels
            pins_path = out_dir / "demo_pins.json"
            pins_path.write_text(json.dumps(
                {DEMO_TIER1_CONDITION: list(DEMO_TIER1_RSIDS),
                 DEMO_TIER2_CONDITION: list(DEMO_TIER2_RSIDS)},
                sort_keys=True, indent=2), encoding="utf-8")
            config.gwas.pins = str(pins_path)
            sim_paths["pins"] = pins_path
        manifest.record("simulate", {}, {k: v for k, v in sim_paths.items()},
                        {"seed": config.seed, "n_variants": config.simulate.n_variants})

    participants_dir = _require_path("cohort.participants_dir",
                                     config.cohort.participants_dir)
    conditions_csv = _require_path("cohort.conditions_csv",
                                   config.cohort.conditions_csv)
    cohort = load_cohort(participants_dir, conditions_csv)
    manifest.record("ingest", {"participants": participants_dir,
                               "conditions": conditions_csv}, {},
                    {"participants": len(cohort.participants)})

    cohort, qc_report = apply_qc(cohort, config.qc)
    qc_path = out_dir / "qc_report.json"
    qc_path.write_text(qc_report.to_json(), encoding="utf-8")
    artifacts["qc_report"] = qc_path
    manifest.record("qc", {"participants": participants_dir}, {"report": qc_path},
                    dataclasses.asdict(config.qc))

    snp_map, map_warnings = build_condition_map_for(cohort, config)
    map_path = out_dir / "condition_map.json"
    map_path.write_text(snp_map.to_json(), encoding="utf-8")
    artifacts["condition_map"] = map_path
    manifest.record("gwas_map",
                    {"catalog": config.gwas.catalog_tsv, "pins": config.gwas.pins},
                    {"condition_map": map_path},
                    {"p_max": config.gwas.p_max, "warnings": len(map_warnings)})

    embedder = _embedder(config)
    cohort = tiering.assign_tiers(cohort, config.lexicon, embedder)
    tiers_path = out_dir / "tiers.csv"
    with tiers_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "tier"])
        for p in cohort.participants:
            writer.writerow([p.id, p.tier.value])
    artifacts["tiers"] = tiers_path
    manifest.record("tier", {}, {"tiers": tiers_path},
                    {"lexicon": json.loads(config.lexicon.to_json())})

    vocab = vectorize.build_vocabulary(cohort, set(snp_map.all_rsids()))
    scaler = vectorize.EcgScaler.fit(cohort)
    features = vectorize.vectorize_cohort(cohort, vocab, scaler,
                                          config.vectorize.tf_mode)
    vec_outputs = {}
    if config.vectorize.export_matrix:
        matrix_path = out_dir / "tfidf_matrix.txt"
        vocab_path = out_dir / "vocabulary.json"
        vectorize.export_matrix(features, vocab, matrix_path, vocab_path)
        artifacts["tfidf_matrix"] = matrix_path
        artifacts["vocabulary"] = vocab_path
        vec_outputs = {"matrix": matrix_path, "vocabulary": vocab_path}
    manifest.record("vectorize", {"condition_map": map_path}, vec_outputs,
                    {"tf_mode": config.vectorize.tf_mode,
                     "vocabulary_size": len(vocab.tokens)})

    assignment, annotations, pseudo_labels = cluster_tier3(
        cohort, features, vocab, config, config.vectorize.tf_mode)
    cluster_path = out_dir / "cluster_report.json"
    cluster_doc = {
        "k": assignment.k if assignment else 0,
        "inertia": assignment.inertia if assignment else 0.0,
        "clusters": [dataclasses.asdict(a) for a in annotations],
    }
    cluster_path.write_text(json.dumps(cluster_doc, sort_keys=True, indent=2),
                            encoding="utf-8")
    pseudo_path = out_dir / "pseudo_labels.csv"
    with pseudo_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "pseudo_label"])
        for pid in sorted(pseudo_labels):
            writer.writerow([pid, pseudo_labels[pid]])
    artifacts["cluster_report"] = cluster_path
    artifacts["pseudo_labels"] = pseudo_path
    manifest.record("cluster", {}, {"report": cluster_path, "pseudo_labels": pseudo_path},
                    dataclasses.asdict(config.cluster))

    records = build_prompt_records(cohort, snp_map, vocab, assignment,
                                   pseudo_labels, config, embedder)
    split = prompts.stratified_split(records, config.prompts.split_ratio,
                                     seed=config.seed)
    prompts_path = out_dir / "prompts.jsonl"
    train_path = out_dir / "train.jsonl"
    test_path = out_dir / "test.jsonl"
    prompts.write_jsonl(records, prompts_path)
    prompts.write_jsonl(split.train, train_path)
    prompts.write_jsonl(split.test, test_path)
    artifacts.update({"prompts": prompts_path, "train": train_path, "test": test_path})
    manifest.record("prompts", {},
                    {"prompts": prompts_path, "train": train_path, "test": test_path},
                    {"split_ratio": config.prompts.split_ratio,
                     "train": len(split.train), "test": len(split.test)})

    completions = config.eval.completions
    if not completions or not Path(completions).exists():
        manifest.record("await_completions", {}, {},
                        {"note": "provide eval.completions to resume"})
        return artifacts

    completions_path = _require_path("eval.completions", completions)
    predictions, warnings = read_completions(completions_path.read_bytes())
    truth = {r.participant_id: (r.label, r.tier.value) for r in split.test}
    report = evaluate_predictions(predictions, truth, embedder=embedder,
                                  threshold=config.eval.threshold,
                                  average=config.eval.average,
                                  run_name=config.eval.run_name)
    report_json = out_dir / "report.json"
    report_md = out_dir / "report.md"
    report_json.write_text(render_report(report, "json"), encoding="utf-8")
    report_md.write_text(render_report(report, "markdown"), encoding="utf-8")
    artifacts["report_json"] = report_json
    artifacts["report_md"] = report_md
    manifest.record("evaluate", {"completions": completions_path},
                    {"report_json": report_json, "report_md": report_md},
                    {"threshold": config.eval.threshold,
                     "average": config.eval.average,
                     "warnings": len(warnings)})
    return artifacts
