"""Replay bench: dataset ingestion, scenario trials, delta-F1, reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detection import (
    ClassifierModel,
    ClassLabel,
    make_external,
    make_knn,
    train_decision_tree,
    train_random_forest,
)
from .errors import EmptyTrial, LengthMismatch, MissingLabelColumn, UnknownLabel
from .features import FeatureVector, fit_normalization, parse_flow_csv
from .llm_client import MockProvider
from .pipeline import AlertRecord, BenignLogged, Pipeline, PipelineConfig
from .stats import GroupSamples, one_way_anova, tukey_hsd
from .telemetry import ScriptedMetricsSource

# Fine CICIDS-style labels onto the coarse class set.
DEFAULT_LABEL_MAP: Dict[str, ClassLabel] = {
    "BENIGN": ClassLabel.Benign,
    "DoS Hulk": ClassLabel.DoS,
    "DoS GoldenEye": ClassLabel.DoS,
    "DoS Slowloris": ClassLabel.DoS,
    "DoS Slowhttptest": ClassLabel.DoS,
    "DDoS": ClassLabel.DDoS,
    "FTP-Patator": ClassLabel.BruteForce,
    "SSH-Patator": ClassLabel.BruteForce,
    "Web Attack & Brute Force": ClassLabel.BruteForce,
    "Port Scan": ClassLabel.PortScan,
    "Bot": ClassLabel.Other,
    "Web Attack & XSS": ClassLabel.Other,
    "Web Attack & SQL Injection": ClassLabel.Other,
    "Infiltration": ClassLabel.Other,
    "Heartbleed": ClassLabel.Other,
}


@dataclass(frozen=True)
class ScenarioSpec:
    attack_class: ClassLabel = ClassLabel.BruteForce
    trial_count: int = 62
    windows_per_trial: int = 40
    telemetry_timeline: Tuple[dict, ...] = (
        {"cpu": 47.6, "memory_mb": 372.0, "latency_ms": 48.2, "energy_j": 21.7, "power_w": 5.0},
    )
    provider: str = "mock"
    seed: int = 0

    def __post_init__(self):
        if self.trial_count < 2:
            raise ValueError("trial_count must be >= 2 (stats need replicates)")


def ingest_dataset(
    path,
    label_map: Optional[Dict[str, ClassLabel]] = None,
    subsample: float = 1.0,
    seed: int = 0,
) -> List[Tuple[FeatureVector, ClassLabel]]:
    """Parse a labeled flow CSV into coarse-labeled feature vectors.

    Unknown fine labels abort with the full offending list; the stratified
    subsample preserves class proportions to within one row per class.
    """
    from .features import extract_features

    records = parse_flow_csv(path)
    if any(r.label is None for r in records):
        raise MissingLabelColumn("dataset rows must carry a label")
    unknown = [r.label for r in records if r.label not in (label_map or DEFAULT_LABEL_MAP)]
    if unknown:
        raise UnknownLabel(unknown)
    mapping = label_map or DEFAULT_LABEL_MAP
    data = [(extract_features(r), mapping[r.label]) for r in records]
    if subsample >= 1.0:
        return data
    rng = np.random.default_rng(seed)
    by_class: Dict[ClassLabel, List[int]] = {}
    for i, (_, lbl) in enumerate(data):
        by_class.setdefault(lbl, []).append(i)
    selected: List[int] = []
    for lbl in sorted(by_class, key=lambda c: c.value):
        idx = by_class[lbl]
        k = int(round(subsample * len(idx)))
        chosen = rng.choice(len(idx), size=k, replace=False)
        selected.extend(idx[i] for i in sorted(chosen))
    return [data[i] for i in sorted(selected)]


# ---------------------------------------------------------------------------
# Synthetic fallback dataset (Gaussian class clusters)
# ---------------------------------------------------------------------------

_CLASS_OFFSETS = {
    ClassLabel.Benign: 0.0,
    ClassLabel.DoS: 6.0,
    ClassLabel.DDoS: -6.0,
    ClassLabel.BruteForce: 12.0,
    ClassLabel.PortScan: -12.0,
    ClassLabel.Other: 18.0,
}


def synthetic_dataset(
    counts: Dict[ClassLabel, int], seed: int = 0, spread: float = 1.0
) -> List[Tuple[FeatureVector, ClassLabel]]:
    """Gaussian clusters per class in the 12-dim feature space."""
    rng = np.random.default_rng(seed)
    data = []
    for lbl in sorted(counts, key=lambda c: c.value):
        center = np.full(12, _CLASS_OFFSETS[lbl])
        center[lbl.value % 12] += 3.0  # tilt each class along its own axis
        for _ in range(counts[lbl]):
            v = center + rng.normal(0.0, spread, size=12)
            data.append((FeatureVector.from_array(v), lbl))
    return data


def train_default_models(
    data: Sequence[Tuple[FeatureVector, ClassLabel]], seed: int = 0
):
    """DT / RF / KNN trained on normalized vectors, plus the fitted stats."""
    stats = fit_normalization([v for v, _ in data])
    from .features import normalize

    normalized = [(normalize(v, stats), lbl) for v, lbl in data]
    models = [
        train_decision_tree(normalized, max_depth=8, name="DT"),
        make_knn(normalized, k=5, name="KNN"),
        train_random_forest(normalized, tree_count=10, seed=seed, name="RF"),
    ]
    return models, stats


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def macro_f1(pred: Sequence[ClassLabel], truth: Sequence[ClassLabel]) -> float:
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truths")
    classes = sorted(set(pred) | set(truth), key=lambda c: c.value)
    f1s = []
    for c in classes:
        tp = sum(1 for p, t in zip(pred, truth) if p is c and t is c)
        fp = sum(1 for p, t in zip(pred, truth) if p is c and t is not c)
        fn = sum(1 for p, t in zip(pred, truth) if p is not c and t is c)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / len(f1s)


def precision_recall_f1_accuracy(pred, truth):
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truths")
    classes = sorted(set(pred) | set(truth), key=lambda c: c.value)
    precisions, recalls = [], []
    for c in classes:
        tp = sum(1 for p, t in zip(pred, truth) if p is c and t is c)
        fp = sum(1 for p, t in zip(pred, truth) if p is c and t is not c)
        fn = sum(1 for p, t in zip(pred, truth) if p is not c and t is c)
        precisions.append(tp / (tp + fp) if tp + fp else 0.0)
        recalls.append(tp / (tp + fn) if tp + fn else 0.0)
    accuracy = sum(1 for p, t in zip(pred, truth) if p is t) / len(truth)
    return (
        sum(precisions) / len(precisions),
        sum(recalls) / len(recalls),
        macro_f1(pred, truth),
        accuracy,
    )


def compute_delta_f1(
    before: Tuple[Sequence[ClassLabel], Sequence[ClassLabel]],
    after: Tuple[Sequence[ClassLabel], Sequence[ClassLabel]],
) -> float:
    """macro-F1(after) - macro-F1(before), each given as (labels, truth)."""
    return macro_f1(after[0], after[1]) - macro_f1(before[0], before[1])


# ---------------------------------------------------------------------------
# Scenario replay
# ---------------------------------------------------------------------------

TRIAL_COLUMNS = [
    "trial",
    "attack",
    "windows",
    "alerts",
    "llm_calls",
    "accuracy_ml",
    "precision_ml",
    "recall_ml",
    "f1_ml",
    "accuracy_final",
    "precision_final",
    "recall_final",
    "f1_final",
    "delta_f1",
    "mean_latency_s",
    "total_energy_j",
    "prompt_bytes",
    "cpu_mean",
    "memory_mean_mb",
    "compliance_rate",
]


def run_scenario(
    spec: ScenarioSpec,
    config: PipelineConfig = PipelineConfig(),
    models=None,
    stats=None,
    provider_factory=None,
) -> List[dict]:
    """Replay trial_count independent trials; one metrics row per trial."""
    if spec.windows_per_trial < 1:
        raise EmptyTrial("windows_per_trial must be >= 1")
    if provider_factory is None:
        provider_factory = lambda trial: MockProvider(elapsed_script=(0.2,))
    if models is None:
        counts = {ClassLabel.Benign: 120, spec.attack_class: 120}
        train = synthetic_dataset(counts, seed=spec.seed)
        models, stats = train_default_models(train, seed=spec.seed)

    rows = []
    for trial in range(spec.trial_count):
        rng = np.random.default_rng((spec.seed, trial))
        provider = provider_factory(trial)
        source = ScriptedMetricsSource(list(spec.telemetry_timeline))
        pipe = Pipeline(
            models=models,
            stats=stats,
            metrics_source=source,
            provider=provider,
            config=config,
            timing_script=iter(lambda: (0.01, 0.05), None),
        )
        truth, ml_labels, final_labels = [], [], []
        prompt_bytes = 0
        latencies, energies, cpus, mems, compliant = [], [], [], [], []
        test = synthetic_dataset(
            {ClassLabel.Benign: spec.windows_per_trial // 2,
             spec.attack_class: spec.windows_per_trial - spec.windows_per_trial // 2},
            seed=int(rng.integers(0, 2**31)),
        )
        for w, (vec, lbl) in enumerate(test):
            out = pipe.process_vector(f"t{trial}w{w}", 1_750_000_000_000 + w, vec)
            truth.append(lbl)
            if isinstance(out, BenignLogged):
                ml_labels.append(out.label)
                final_labels.append(out.label)
            else:
                ml_labels.append(out.consensus_label)
                final_labels.append(out.final_label)
                prompt_bytes += _prompt_bytes(out)
                latencies.append(out.latency.t_total_s)
                energies.append(out.energy_j)
                cpus.append(out.snapshot.cpu_percent)
                mems.append(out.snapshot.memory_mb)
                compliant.append(out.verdict.compliant)
        p_ml, r_ml, f_ml, a_ml = precision_recall_f1_accuracy(ml_labels, truth)
        p_fi, r_fi, f_fi, a_fi = precision_recall_f1_accuracy(final_labels, truth)
        rows.append(
            {
                "trial": trial,
                "attack": spec.attack_class.display,
                "windows": len(test),
                "alerts": len(pipe.alerts),
                "llm_calls": provider.call_count,
                "accuracy_ml": a_ml,
                "precision_ml": p_ml,
                "recall_ml": r_ml,
                "f1_ml": f_ml,
                "accuracy_final": a_fi,
                "precision_final": p_fi,
                "recall_final": r_fi,
                "f1_final": f_fi,
                "delta_f1": f_fi - f_ml,
                "mean_latency_s": sum(latencies) / len(latencies) if latencies else 0.0,
                "total_energy_j": sum(energies),
                "prompt_bytes": prompt_bytes,
                "cpu_mean": sum(cpus) / len(cpus) if cpus else 0.0,
                "memory_mean_mb": sum(mems) / len(mems) if mems else 0.0,
                "compliance_rate": (
                    sum(compliant) / len(compliant) if compliant else 1.0
                ),
            }
        )
    return rows


def _prompt_bytes(rec: AlertRecord) -> int:
    return rec.prompt_byte_len


def write_trials_csv(rows: Sequence[dict], path) -> None:
    """Deterministic CSV: fixed column order, repr-stable float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for row in rows:
            writer.writerow([_csv_cell(row[c]) for c in TRIAL_COLUMNS])


def _csv_cell(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def read_trials_csv(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# Report generation
# ---------------------------------------------------------------------------

REPORT_METRICS = [
    "accuracy_final",
    "f1_final",
    "delta_f1",
    "mean_latency_s",
    "total_energy_j",
    "cpu_mean",
    "memory_mean_mb",
]


def emit_report(
    groups: Dict[str, Sequence[dict]], metrics: Sequence[str] = REPORT_METRICS
) -> Tuple[str, dict]:
    """ANOVA / eta-squared / Tukey table across trial groups.

    Returns (plain-text table, JSON-serializable report).  Rows where the
    groups are indistinguishable read "No difference".
    """
    if len(groups) < 2:
        raise ValueError("need at least 2 trial groups")
    report = {"metrics": [], "compliance": {}}
    lines = [
        f"{'Metric':<18} {'ANOVA F':>12} {'p-value':>12} {'Effect Size (η²)':>18} Tukey Result"
    ]
    for metric in metrics:
        g = GroupSamples.from_dict(
            {name: [float(r[metric]) for r in rows] for name, rows in groups.items()}
        )
        anova = one_way_anova(g)
        tukey = tukey_hsd(g)
        sig = [p for p in tukey.pairs if p.significant]
        if anova.f_stat == 0.0 or not sig:
            tukey_text = "No difference"
        else:
            tukey_text = "; ".join(
                f"{p.group_a} {'>' if p.mean_diff > 0 else '<'} {p.group_b}" for p in sig
            )
        report["metrics"].append(
            {
                "metric": metric,
                "f": anova.f_stat,
                "p": anova.p_value,
                "eta_squared": anova.eta_squared,
                "tukey": tukey_text,
            }
        )
        lines.append(
            f"{metric:<18} {anova.f_stat:>12.4f} {anova.p_value:>12.4g} "
            f"{anova.eta_squared:>18.4f} {tukey_text}"
        )
    for name, rows in groups.items():
        rates = [float(r["compliance_rate"]) for r in rows]
        report["compliance"][name] = sum(rates) / len(rates)
        lines.append(f"Compliance [{name}]: {report['compliance'][name]:.3f}")
    return "\n".join(lines), report


# ---------------------------------------------------------------------------
# Golden replay fixture
# ---------------------------------------------------------------------------


def load_golden_fixture() -> dict:
    text = resources.files("edgeids.assets").joinpath("golden_fixture.json").read_text(
        encoding="utf-8"
    )
    return json.loads(text)


def replay_golden(fixture: Optional[dict] = None):
    """Run the canned runtime-log scenario end to end.

    Returns (AlertRecord, Pipeline).  Six external models replay the
    scripted scores; the scripted sampler and mock provider supply the
    telemetry and reasoning output.
    """
    from .detection import label_from_text

    fx = fixture or load_golden_fixture()
    models = []
    for name, label_text, score in fx["model_scores"]:
        label = label_from_text(label_text)
        post = {label: score, ClassLabel.Benign: 1.0 - score}
        models.append(make_external(name, posterior_source=lambda p=post: p))
    source = ScriptedMetricsSource([fx["telemetry"]])
    provider = MockProvider(elapsed_script=(fx["llm_elapsed"],))
    pipe = Pipeline(
        models=models,
        stats=None,
        metrics_source=source,
        provider=provider,
        config=PipelineConfig(),
        timing_script=[tuple(fx["timing"])],
    )
    record = pipe.process_vector(
        fx["session_id"], fx["timestamp"], FeatureVector(tuple(fx["feature_vector"]))
    )
    return record, pipe
