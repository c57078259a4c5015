"""Command-line interface.

Subcommands mirror the pipeline stages (simulate, qc, tier, vectorize,
cluster, prompts, eval) so each can run standalone on prior-stage artifacts;
``run`` executes the whole pipeline from a config file. Exit codes: 0
success, 1 internal/stage error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import prompts as prompting
from . import semantics, tiering, vectorize
from .cohort import load_cohort, write_cohort
from .errors import CardiolinkError, ConfigError
from .evaluate import evaluate as evaluate_predictions
from .evaluate import read_completions, render_report
from .manifest import Manifest
from .pipeline import (PipelineConfig, build_condition_map_for, build_prompt_records,
                       cluster_tier3, run_pipeline)
from .qc import QcConfig, apply_qc
from .simulate import SimConfig, demo_config, simulate_cohort, write_simulated


def _add_cohort_args(parser):
    parser.add_argument("--participants", required=True,
                        help="directory of per-participant JSON files")
    parser.add_argument("--conditions", required=True,
                        help="conditions CSV (participant_id,condition)")


def _add_curation_args(parser):
    parser.add_argument("--condition-map", help="precomputed condition->rsids JSON")
    parser.add_argument("--catalog", help="catalog association TSV")
    parser.add_argument("--pins", help="manual condition->rsids pin JSON")
    parser.add_argument("--lexicon", help="tier lexicon JSON file")


def _base_config(args) -> PipelineConfig:
    config = PipelineConfig()
    config.seed = getattr(args, "seed", config.seed)
    config.cohort.participants_dir = args.participants
    config.cohort.conditions_csv = args.conditions
    if getattr(args, "catalog", None):
        config.gwas.catalog_tsv = args.catalog
    if getattr(args, "pins", None):
        config.gwas.pins = args.pins
    if getattr(args, "lexicon", None):
        config.lexicon = tiering.TierLexicon.from_file(args.lexicon)
    return config


def _prepare(args, config: PipelineConfig):
    """Shared standalone-stage setup: load cohort, curation map, tiers,
    vocabulary, scaler and feature vectors (no QC: pass a QC'd cohort)."""
    from . import gwas as gwas_mod

    cohort = load_cohort(args.participants, args.conditions)
    if getattr(args, "condition_map", None):
        snp_map = gwas_mod.ConditionSnpMap.from_json(
            Path(args.condition_map).read_text(encoding="utf-8"))
    else:
        snp_map, _ = build_condition_map_for(cohort, config)
    embedder = semantics.HashingEmbedder()
    cohort = tiering.assign_tiers(cohort, config.lexicon, embedder)
    vocab = vectorize.build_vocabulary(cohort, set(snp_map.all_rsids()))
    scaler = vectorize.EcgScaler.fit(cohort)
    features = vectorize.vectorize_cohort(cohort, vocab, scaler,
                                          config.vectorize.tf_mode)
    return cohort, snp_map, vocab, scaler, features, embedder


def _cmd_simulate(args) -> int:
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        from .simulate import PlantedEffect, PlantedGroup

        doc["planted"] = tuple(PlantedEffect(**e) for e in doc.get("planted", []))
        groups = []
        for g in doc.get("groups", []):
            g = dict(g)
            g["conditions"] = tuple(g.get("conditions", ()))
            g["hot_rsids"] = tuple(g.get("hot_rsids", ()))
            groups.append(PlantedGroup(**g))
        doc["groups"] = tuple(groups)
        for key in ("maf_range", "gp_range", "conditions"):
            if key in doc:
                doc[key] = tuple(doc[key])
        sim_config = SimConfig(**doc)
        if args.seed is not None:
            sim_config.seed = args.seed
    else:
        sim_config = demo_config(seed=args.seed if args.seed is not None else 42,
                                 n_variants=args.n_variants)
    cohort, truth = simulate_cohort(sim_config)
    paths = write_simulated(cohort, truth, args.out)
    manifest = Manifest(Path(args.out) / "manifest.json")
    manifest.record("simulate", {}, paths,
                    {"seed": sim_config.seed, "participants": len(cohort.participants),
                     "n_variants": sim_config.n_variants})
    print(f"simulated {len(cohort.participants)} participants -> {args.out}")
    return 0


def _cmd_qc(args) -> int:
    cohort = load_cohort(args.participants, args.conditions)
    config = QcConfig(maf_min=args.maf_min, hwe_alpha=args.hwe_alpha,
                      gp_min=args.gp_min)
    filtered, report = apply_qc(cohort, config)
    out = Path(args.out)
    paths = write_cohort(filtered, out)
    report_path = out / "qc_report.json"
    report_path.write_text(report.to_json(), encoding="utf-8")
    manifest = Manifest(out / "manifest.json")
    manifest.record("qc", {"participants": Path(args.participants)},
                    {**paths, "report": report_path}, dataclasses.asdict(config))
    print(f"qc: {report.variants_in} -> {report.variants_out} variants, "
          f"{report.calls_masked_by_gp} calls masked")
    return 0


def _cmd_tier(args) -> int:
    config = _base_config(args)
    cohort = load_cohort(args.participants, args.conditions)
    cohort = tiering.assign_tiers(cohort, config.lexicon)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "tier"])
        for p in cohort.participants:
            writer.writerow([p.id, p.tier.value])
    counts = {t.value: sum(1 for p in cohort.participants if p.tier is t)
              for t in sorted(set(p.tier for p in cohort.participants), key=lambda t: t.value)}
    print(f"tiers -> {out} {counts}")
    return 0


def _cmd_vectorize(args) -> int:
    config = _base_config(args)
    config.vectorize.tf_mode = args.tf_mode
    _, _, vocab, _, features, _ = _prepare(args, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    matrix_path = out / "tfidf_matrix.txt"
    vocab_path = out / "vocabulary.json"
    vectorize.export_matrix(features, vocab, matrix_path, vocab_path)
    print(f"vectorized {len(features)} participants over {len(vocab.tokens)} tokens -> {out}")
    return 0


def _cmd_cluster(args) -> int:
    config = _base_config(args)
    if args.k is not None:
        config.cluster.k = args.k
    cohort, _, vocab, _, features, _ = _prepare(args, config)
    assignment, annotations, pseudo_labels = cluster_tier3(
        cohort, features, vocab, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "cluster_report.json"
    doc = {"k": assignment.k if assignment else 0,
           "inertia": assignment.inertia if assignment else 0.0,
           "clusters": [dataclasses.asdict(a) for a in annotations]}
    report_path.write_text(json.dumps(doc, sort_keys=True, indent=2), encoding="utf-8")
    pseudo_path = out / "pseudo_labels.csv"
    with pseudo_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "pseudo_label"])
        for pid in sorted(pseudo_labels):
            writer.writerow([pid, pseudo_labels[pid]])
    print(f"clustered tier3 into k={doc['k']} -> {out}")
    return 0


def _cmd_prompts(args) -> int:
    config = _base_config(args)
    config.prompts.split_ratio = args.ratio
    if args.template:
        config.prompts.template = args.template
    cohort, snp_map, vocab, _, features, embedder = _prepare(args, config)
    assignment, _, pseudo_labels = cluster_tier3(cohort, features, vocab, config)
    records = build_prompt_records(cohort, snp_map, vocab, assignment,
                                   pseudo_labels, config, embedder)
    split = prompting.stratified_split(records, config.prompts.split_ratio,
                                       seed=config.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prompting.write_jsonl(records, out / "prompts.jsonl")
    prompting.write_jsonl(split.train, out / "train.jsonl")
    prompting.write_jsonl(split.test, out / "test.jsonl")
    print(f"prompts: {len(records)} records, split {len(split.train)}/{len(split.test)} -> {out}")
    return 0


def _cmd_eval(args) -> int:
    completions_path = Path(args.completions)
    if not completions_path.exists():
        raise ConfigError(f"completions file does not exist: {completions_path}")
    truth_path = Path(args.truth)
    if not truth_path.exists():
        raise ConfigError(f"truth file does not exist: {truth_path}")
    predictions, warnings = read_completions(completions_path.read_bytes())
    truth_records = prompting.read_jsonl(truth_path)
    truth = {r.participant_id: (r.label, r.tier.value) for r in truth_records}
    embedder = (semantics.SidecarEmbedder(args.sidecar, fallback=semantics.HashingEmbedder())
                if args.sidecar else semantics.HashingEmbedder())
    report = evaluate_predictions(predictions, truth, embedder=embedder,
                                  threshold=args.threshold, average=args.average,
                                  run_name=args.run_name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
    (out / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
    if args.loss_csv:
        from .evaluate import reformat_loss_csv

        loss_path = Path(args.loss_csv)
        if not loss_path.exists():
            raise ConfigError(f"loss CSV does not exist: {loss_path}")
        (out / "loss.json").write_text(reformat_loss_csv(loss_path.read_bytes()),
                                       encoding="utf-8")
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"accuracy {report.overall.accuracy:.3f} over {report.overall.support} "
          f"predictions -> {out}")
    return 0


def _cmd_run(args) -> int:
    if args.config:
        config = PipelineConfig.from_file(args.config)
    elif args.simulate:
        config = PipelineConfig.demo(out_dir=args.out or "out",
                                     seed=args.seed if args.seed is not None else 42)
    else:
        config = PipelineConfig()
    for override in args.set or []:
        if "=" not in override:
            raise ConfigError(f"--set expects key=value, got {override!r}")
        key, _, value = override.partition("=")
        config.apply_override(key.strip(), value.strip())
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.out_dir = args.out
    if args.offline:
        config.offline = True
    if args.simulate:
        config.simulate.enabled = True
    if args.completions:
        config.eval.completions = args.completions
    artifacts = run_pipeline(config)
    for name in sorted(artifacts):
        print(f"{name}: {artifacts[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardiolink",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-variants", type=int, default=500)
    p.add_argument("--config", help="full simulator config JSON")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("qc", help="variant quality control")
    _add_cohort_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--maf-min", type=float, default=QcConfig().maf_min)
    p.add_argument("--hwe-alpha", type=float, default=QcConfig().hwe_alpha)
    p.add_argument("--gp-min", type=float, default=QcConfig().gp_min)
    p.set_defaults(func=_cmd_qc)

    p = sub.add_parser("tier", help="assign participants to tiers")
    _add_cohort_args(p)
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True, help="output tiers CSV path")
    p.set_defaults(func=_cmd_tier)

    p = sub.add_parser("vectorize", help="tf-idf matrix + vocabulary export")
    _add_cohort_args(p)
    _add_curation_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--tf-mode", choices=vectorize.TF_MODES, default="dosage")
    p.set_defaults(func=_cmd_vectorize)

    p = sub.add_parser("cluster", help="cluster tier-3 participants")
    _add_cohort_args(p)
    _add_curation_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("prompts", help="render prompts and split train/test")
    _add_cohort_args(p)
    _add_curation_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--template", help="custom prompt template file")
    p.set_defaults(func=_cmd_prompts)

    p = sub.add_parser("eval", help="score completions against truth")
    p.add_argument("--completions", required=True, help="completions JSONL")
    p.add_argument("--truth", required=True, help="test-split JSONL with labels")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=semantics.DEFAULT_THRESHOLD)
    p.add_argument("--average", choices=("macro", "micro"), default="macro")
    p.add_argument("--run-name", default="run")
    p.add_argument("--sidecar", help="precomputed embeddings JSONL")
    p.add_argument("--loss-csv", help="externally produced loss CSV to re-emit "
                                      "as plot-ready loss.json")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config field, e.g. qc.maf_min=0.02")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--offline", action="store_true")
    p.add_argument("--simulate", action="store_true",
                   help="generate the demo cohort first")
    p.add_argument("--completions", help="completions JSONL to evaluate")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error in {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error in {args.command}: missing file {exc.filename}", file=sys.stderr)
        return 2
    except CardiolinkError as exc:
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
