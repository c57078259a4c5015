"""Score externally produced completions against ground-truth labels.

Completions arrive as JSONL ({"participant_id", "completion"}). The claim is
the text following "I believe it is", cut at the first sentence terminator
or explanation connective ("because", "and", ...), since completions follow
the prompt contract of naming the condition before justifying it. A
prediction counts as accurate when its claim semantically matches the true
label at the similarity threshold; class-wise metrics come from a confusion
matrix where each claim is argmax-assigned over the known label set (claims
below threshold become the distinct "no-diagnosis" predicted class).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import semantics
from .cohort import Tier
from .errors import ParseError, ValidationError

CLAIM_PREFIX = "I believe it is"
NO_DIAGNOSIS = "no-diagnosis"

_CHAR_TERMINATORS = (".", "!", "?", "\n", ";", ",")
_WORD_TERMINATORS = (" because ", " and ", " since ", " due to ")
_STRIP_CHARS = " \t[]()\"'.,;:!?"


@dataclass(frozen=True)
class Prediction:
    participant_id: str
    completion: str
    extracted_claim: str
    prefix_found: bool = True


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MatchRecord:
    participant_id: str
    matched: bool
    best_label: str
    score: float


@dataclass
class EvalReport:
    run_name: str
    overall: Metrics
    per_tier: dict = field(default_factory=dict)
    matches: list = field(default_factory=list)
    threshold: float = semantics.DEFAULT_THRESHOLD
    average: str = "macro"


def extract_claim(completion: str) -> tuple[str, bool]:
    """(claim, prefix_found). Falls back to the whole completion when the
    expected prefix is absent."""
    idx = completion.find(CLAIM_PREFIX)
    if idx < 0:
        return completion.strip(), False
    rest = completion[idx + len(CLAIM_PREFIX):]
    # pad so word terminators can hit at the very end of the string
    padded = rest + " "
    cut = len(rest)
    for terminator in _CHAR_TERMINATORS:
        pos = rest.find(terminator)
        if 0 <= pos < cut:
            cut = pos
    for terminator in _WORD_TERMINATORS:
        pos = padded.find(terminator)
        if 0 <= pos < cut:
            cut = pos
    claim = rest[:cut].strip(_STRIP_CHARS)
    return " ".join(claim.split()), True


def read_completions(data: bytes | str) -> tuple[list[Prediction], list[str]]:
    """Parse completions JSONL; malformed lines are skipped with a warning
    and duplicate participant ids keep the last occurrence."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    predictions: dict[str, Prediction] = {}
    warnings: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            warnings.append(f"line {lineno}: malformed JSON ({exc.msg}); skipped")
            continue
        pid = doc.get("participant_id") if isinstance(doc, dict) else None
        completion = doc.get("completion") if isinstance(doc, dict) else None
        if not isinstance(pid, str) or not pid or not isinstance(completion, str):
            warnings.append(f"line {lineno}: missing participant_id/completion; skipped")
            continue
        if pid in predictions:
            warnings.append(f"line {lineno}: duplicate participant_id {pid}; last one wins")
        claim, prefix_found = extract_claim(completion)
        if not prefix_found:
            warnings.append(f"line {lineno}: completion for {pid} lacks "
                            f"{CLAIM_PREFIX!r}; using full text")
        predictions[pid] = Prediction(pid, completion, claim, prefix_found)
    return list(predictions.values()), warnings


def _class_metrics(pairs: list[tuple[str, str]], matched: list[bool],
                   average: str) -> Metrics:
    support = len(pairs)
    if support == 0:
        return Metrics(0.0, 0.0, 0.0, 0.0, 0)
    accuracy = sum(matched) / support
    classes = sorted({true for true, _ in pairs})
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for true, predicted in pairs:
        if predicted == true:
            tp[true] += 1
        else:
            fn[true] += 1
            if predicted in fp:
                fp[predicted] += 1
    if average == "micro":
        tp_sum = sum(tp.values())
        pred_sum = tp_sum + sum(fp.values())
        precision = tp_sum / pred_sum if pred_sum else 0.0
        recall = tp_sum / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    else:
        precisions, recalls, f1s = [], [], []
        for c in classes:
            denom_p = tp[c] + fp[c]
            p = tp[c] / denom_p if denom_p else 0.0
            r = tp[c] / (tp[c] + fn[c])
            precisions.append(p)
            recalls.append(r)
            f1s.append(2 * p * r / (p + r) if p + r else 0.0)
        precision = sum(precisions) / len(classes)
        recall = sum(recalls) / len(classes)
        f1 = sum(f1s) / len(classes)
    return Metrics(accuracy, precision, recall, f1, support)


def evaluate(predictions: list[Prediction], truth: dict,
             embedder: semantics.Embedder | None = None,
             threshold: float = semantics.DEFAULT_THRESHOLD,
             average: str = "macro",
             run_name: str = "run") -> EvalReport:
    """Score predictions against truth: {participant_id: (label, tier)}.

    Accuracy counts semantic matches against the true label; precision,
    recall and F1 come from the argmax confusion matrix (macro by default,
    micro via ``average``). Metrics are computed overall and per tier.
    """
    if average not in ("macro", "micro"):
        raise ValidationError(f"average must be 'macro' or 'micro', got {average!r}")
    embedder = embedder or semantics.HashingEmbedder()
    unknown = sorted({p.participant_id for p in predictions} - set(truth))
    if unknown:
        raise ValidationError(f"predictions for unknown participant ids: "
                              f"{', '.join(unknown)}")
    deduped = {p.participant_id: p for p in predictions}
    ordered = [deduped[pid] for pid in sorted(deduped)]
    # one normalized label space for true classes and argmax candidates
    known_labels = sorted({semantics.normalize_text(label)
                           for label, _ in truth.values()})

    matches: list[MatchRecord] = []
    rows = []  # (tier, true_label, predicted_label, matched)
    for prediction in ordered:
        true_label, tier = truth[prediction.participant_id]
        tier = Tier(tier)
        claim = prediction.extracted_claim
        if not semantics.normalize_text(claim):
            matched, best, score = False, NO_DIAGNOSIS, 0.0
        else:
            matched = semantics.semantic_match(claim, true_label, embedder, threshold)
            best, score = semantics.best_label(claim, known_labels, embedder)
            if score < threshold:
                best = NO_DIAGNOSIS
        matches.append(MatchRecord(prediction.participant_id, matched, best, score))
        rows.append((tier, semantics.normalize_text(true_label), best, matched))

    overall = _class_metrics([(t, p) for _, t, p, _ in rows],
                             [m for _, _, _, m in rows], average)
    per_tier = {}
    for tier in Tier:
        subset = [(t, p) for tr, t, p, _ in rows if tr is tier]
        flags = [m for tr, _, _, m in rows if tr is tier]
        if subset:
            per_tier[tier] = _class_metrics(subset, flags, average)
    return EvalReport(run_name=run_name, overall=overall, per_tier=per_tier,
                      matches=matches, threshold=threshold, average=average)


_TIER_TITLES = {Tier.TIER1: "Tier 1", Tier.TIER2: "Tier 2", Tier.TIER3: "Tier 3"}


def _markdown_table(title: str, run_name: str, metrics: Metrics) -> str:
    return (f"## {title}\n\n"
            "| Model-run | Acc | Prec | Rec | F1 |\n"
            "|---|---|---|---|---|\n"
            f"| {run_name} | {metrics.accuracy:.3f} | {metrics.precision:.3f} "
            f"| {metrics.recall:.3f} | {metrics.f1:.3f} |\n")


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Markdown: one table per scope (overall plus each tier present).
    JSON: lossless, see report_from_json."""
    if fmt == "markdown":
        sections = [_markdown_table("Overall Performance", report.run_name,
                                    report.overall)]
        for tier in Tier:
            if tier in report.per_tier:
                sections.append(_markdown_table(
                    f"{_TIER_TITLES[tier]} Performance", report.run_name,
                    report.per_tier[tier]))
        return "\n".join(sections)
    if fmt == "json":
        doc = {
            "run_name": report.run_name,
            "threshold": report.threshold,
            "average": report.average,
            "overall": report.overall.__dict__,
            "per_tier": {tier.value: metrics.__dict__
                         for tier, metrics in report.per_tier.items()},
            "matches": [m.__dict__ for m in report.matches],
        }
        return json.dumps(doc, sort_keys=True, indent=2)
    raise ValidationError(f"unknown report format {fmt!r}")


def report_from_json(text: str) -> EvalReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad report JSON: {exc.msg}") from exc
    return EvalReport(
        run_name=doc["run_name"],
        overall=Metrics(**doc["overall"]),
        per_tier={Tier(key): Metrics(**value)
                  for key, value in doc["per_tier"].items()},
        matches=[MatchRecord(**m) for m in doc["matches"]],
        threshold=doc["threshold"],
        average=doc["average"],
    )


def reformat_loss_csv(data: bytes | str) -> str:
    """Re-emit an externally produced training-loss CSV as plot-ready JSON.

    No loss is computed here; training happens outside this package. Header
    is ``run,step,loss`` or ``step,loss`` (single run named "run"). Output
    maps each run to parallel step/loss arrays in file order.
    """
    import csv
    import io

    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None:
        raise ParseError("loss CSV is empty")
    header = [h.strip().lower() for h in header]
    if header == ["run", "step", "loss"]:
        named = True
    elif header == ["step", "loss"]:
        named = False
    else:
        raise ParseError("loss CSV header must be 'run,step,loss' or 'step,loss'")
    runs: dict = {}
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            if named:
                run, step, loss = row[0].strip(), float(row[1]), float(row[2])
            else:
                run, step, loss = "run", float(row[0]), float(row[1])
        except (IndexError, ValueError) as exc:
            raise ParseError(f"bad loss CSV row near line {reader.line_num}: {row}") from exc
        series = runs.setdefault(run, {"step": [], "loss": []})
        series["step"].append(step)
        series["loss"].append(loss)
    return json.dumps({"runs": runs}, sort_keys=True, indent=2)
