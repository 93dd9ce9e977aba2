"""End-to-end pipeline steps behind the command-line interface.

Each step reads the typed config, writes its artifacts under the output
directory and returns an in-memory summary. All artifacts are
byte-deterministic for a given config and inputs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .archetypes import ARCHETYPES, Archetype
from .autoscaler import (AapaStrategy, HpaStrategy, PredictiveStrategy, bundle_classifier,
                         weak_label_classifier)
from .classifier import (ModelBundle, evaluate_labels, fit_beta_calibrator, load_bundle,
                         save_bundle, train)
from .config import ConfigError, ExperimentConfig, Scenario
from .features import FEATURE_NAMES, compute_features
from .metrics import (MetricsReport, compute_metrics, compute_rei, format_table, mean_ci,
                      sensitivity_sweep, wilcoxon_signed_rank)
from .simulator import SimulationLog, run_simulation
from .trace import (SyntheticSpec, WorkloadTrace, generate_synthetic, load_trace_csv,
                    slide_windows, write_trace_csv)
from .weaklabel import class_distribution, label_dataset

logger = logging.getLogger(__name__)

LABELED_FILE = "labeled.csv"
SPIKE_REFERENCE_RATIO = 7.7


class PipelineError(RuntimeError):
    pass


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


# -- generate ------------------------------------------------------------------

def synthetic_traces(specs: Sequence[SyntheticSpec]) -> list[tuple[WorkloadTrace, str]]:
    out, seen = [], set()
    for spec in specs:
        tr = generate_synthetic(spec)
        if tr.function_id in seen:
            raise ConfigError(f"duplicate synthetic function id {tr.function_id!r}")
        seen.add(tr.function_id)
        out.append((tr, spec.archetype.value))
    return out


def cmd_generate(cfg: ExperimentConfig) -> list[Path]:
    """One trace CSV per synthetic spec plus a ground-truth manifest."""
    if not cfg.synthetic:
        raise ConfigError("no synthetic specs in trace.synthetic")
    tdir = cfg.output_dir / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    paths = []
    manifest = ["function_id,archetype,file,rng_seed,duration_minutes"]
    for (tr, arch), spec in zip(synthetic_traces(cfg.synthetic), cfg.synthetic):
        p = tdir / f"{tr.function_id}.csv"
        write_trace_csv([tr], p)
        paths.append(p)
        manifest.append(f"{tr.function_id},{arch},{p.name},{spec.rng_seed},"
                        f"{spec.duration_minutes}")
    paths.append(_write(tdir / "manifest.csv", "\n".join(manifest) + "\n"))
    return paths


# -- label -----------------------------------------------------------------------

@dataclass
class LabeledSet:
    function_id: list
    start_minute: np.ndarray
    X: np.ndarray
    label: list
    confidence: np.ndarray
    truth: list

    def __len__(self) -> int:
        return len(self.label)


def source_traces(cfg: ExperimentConfig) -> list[tuple[WorkloadTrace, str]]:
    if cfg.traces_csv is not None:
        if not cfg.traces_csv.exists():
            raise ConfigError(f"trace csv {cfg.traces_csv} does not exist")
        return [(t, "") for t in load_trace_csv(cfg.traces_csv, cfg.min_invocations)]
    return synthetic_traces(cfg.synthetic)


def build_labeled_set(traces: Sequence[tuple[WorkloadTrace, str]], window_len: int, stride: int,
                      thresholds) -> LabeledSet:
    fids, starts, rows, labels, confs, truth = [], [], [], [], [], []
    for tr, arch in traces:
        for r in label_dataset(slide_windows(tr, window_len, stride), thresholds):
            fids.append(r.function_id)
            starts.append(r.start_minute)
            rows.append(r.features.values)
            labels.append(r.label.archetype.value)
            confs.append(r.label.confidence)
            truth.append(arch)
    X = np.vstack(rows) if rows else np.empty((0, len(FEATURE_NAMES)))
    return LabeledSet(fids, np.array(starts, dtype=np.int64), X, labels, np.array(confs), truth)


def labeled_csv(ds: LabeledSet) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["function_id", "start_minute", "truth", "label", "confidence", *FEATURE_NAMES])
    for i in range(len(ds)):
        w.writerow([ds.function_id[i], int(ds.start_minute[i]), ds.truth[i], ds.label[i],
                    repr(float(ds.confidence[i])), *(repr(float(v)) for v in ds.X[i])])
    return out.getvalue()


def read_labeled_csv(path: Path) -> LabeledSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["function_id", "start_minute", "truth", "label", "confidence",
                    *FEATURE_NAMES]
        if header != expected:
            raise ConfigError(f"{path}: unexpected labeled-dataset header")
        fids, starts, X, labels, confs, truth = [], [], [], [], [], []
        for row in reader:
            fids.append(row[0])
            starts.append(int(row[1]))
            truth.append(row[2])
            labels.append(row[3])
            confs.append(float(row[4]))
            X.append([float(v) for v in row[5:]])
    X = np.array(X, dtype=float).reshape(-1, len(FEATURE_NAMES))
    return LabeledSet(fids, np.array(starts, dtype=np.int64), X, labels, np.array(confs), truth)


def cmd_label(cfg: ExperimentConfig) -> tuple[Path, dict]:
    ds = build_labeled_set(source_traces(cfg), cfg.window_len, cfg.stride, cfg.thresholds)
    if len(ds) == 0:
        raise PipelineError(f"no windows produced: every trace is shorter than "
                            f"{cfg.window_len} minutes")
    counts = {a.value: ds.label.count(a.value) for a in ARCHETYPES}
    dist = {k: v / len(ds) for k, v in counts.items()}
    path = _write(cfg.output_dir / LABELED_FILE, labeled_csv(ds))
    return path, dist


# -- train -------------------------------------------------------------------------

def temporal_split(start_minute: np.ndarray, window_len: int, proportions=(9, 2, 3)
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Masks for train/validation/test by window start over the covered span."""
    span = int(start_minute.max()) + window_len if len(start_minute) else 0
    total = float(sum(proportions))
    b1 = span * proportions[0] / total
    b2 = span * (proportions[0] + proportions[1]) / total
    train_m = start_minute < b1
    val_m = (start_minute >= b1) & (start_minute < b2)
    return train_m, val_m, start_minute >= b2


@dataclass
class TrainResult:
    bundle: ModelBundle
    accuracy_vs_labels: float
    accuracy_vs_truth: Optional[float]
    report: str
    seconds: float
    inference_ms: float = float("nan")


def train_pipeline(ds: LabeledSet, cfg: ExperimentConfig) -> TrainResult:
    t0 = time.perf_counter()
    tr_m, va_m, te_m = temporal_split(ds.start_minute, cfg.window_len, cfg.split)
    for name, m in (("train", tr_m), ("validation", va_m), ("test", te_m)):
        if not m.any():
            raise PipelineError(f"{name} slice of the temporal split is empty")
    labels = np.array(ds.label)
    model = train(ds.X[tr_m], labels[tr_m], cfg.boosting, cfg.classifier_seed)
    val_idx = np.array([Archetype.parse(l).index for l in labels[va_m]])
    calibrator = fit_beta_calibrator(model.predict_proba(ds.X[va_m]), val_idx,
                                     cfg.calibration_ridge)
    bundle = ModelBundle(model, calibrator)
    proba = model.predict_proba(ds.X[te_m])
    pred = [ARCHETYPES[k].value for k in np.argmax(proba, axis=1)]
    ev = evaluate_labels(labels[te_m], pred)
    truth = np.array(ds.truth)[te_m]
    ev_truth = evaluate_labels(truth, pred) if all(truth) else None

    lines = [f"rows: train={int(tr_m.sum())} validation={int(va_m.sum())} "
             f"test={int(te_m.sum())}",
             f"test accuracy vs weak labels: {ev.accuracy:.4f}"]
    if ev_truth is not None:
        lines.append(f"test accuracy vs generator ground truth: {ev_truth.accuracy:.4f}")
    lines += ["", "per-class (vs weak labels):",
              format_table(["class", "precision", "recall"],
                           [[a.value, ev.precision[a.value], ev.recall[a.value]]
                            for a in ARCHETYPES]),
              "confusion (rows true, columns predicted):", ev.confusion_table(), ""]
    lines += ["beta calibration maps (a, b, c):"]
    lines += [f"  {a.value}: {m.a:.4f} {m.b:.4f} {m.c:.4f}"
              for a, m in zip(ARCHETYPES, calibrator.maps)]
    latency = inference_latency_ms(bundle, ds.X[te_m][:200])
    lines += ["", f"inference latency: {latency:.3f} ms per window "
                  f"(calibrated prediction from features, one row at a time)"]
    return TrainResult(bundle, ev.accuracy, ev_truth.accuracy if ev_truth else None,
                       "\n".join(lines) + "\n", time.perf_counter() - t0, latency)


def inference_latency_ms(bundle: ModelBundle, rows: np.ndarray) -> float:
    if len(rows) == 0:
        return float("nan")
    t0 = time.perf_counter()
    for row in rows:
        bundle.predict(row)
    return 1000.0 * (time.perf_counter() - t0) / len(rows)


def cmd_train(cfg: ExperimentConfig) -> TrainResult:
    path = cfg.output_dir / LABELED_FILE
    if not path.exists():
        raise ConfigError(f"{path} not found; run the label step first")
    result = train_pipeline(read_labeled_csv(path), cfg)
    cfg.model_path.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(result.bundle, cfg.model_path)
    _write(cfg.output_dir / "evaluation.txt", result.report)
    return result


# -- simulate / compare ----------------------------------------------------------------

def trial_seed(cfg: ExperimentConfig, trial: int) -> int:
    return cfg.seed + trial


def scenario_trace(sc: Scenario, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(history prefix, replayed counts) for one scenario trial."""
    if sc.spec is not None:
        spec = replace(sc.spec, duration_minutes=sc.spec.duration_minutes + sc.prefix_minutes,
                       rng_seed=sc.spec.rng_seed + seed,
                       function_id=sc.spec.function_id or sc.name)
        full = generate_synthetic(spec).counts
    else:
        if not sc.csv.exists():
            raise ConfigError(f"scenario {sc.name}: {sc.csv} does not exist")
        traces = load_trace_csv(sc.csv, min_invocations=0)
        pick = [t for t in traces if sc.function_id in (None, t.function_id)]
        if not pick:
            raise ConfigError(f"scenario {sc.name}: function {sc.function_id!r} not in {sc.csv}")
        full = pick[0].counts
    if len(full) <= sc.prefix_minutes:
        raise ConfigError(f"scenario {sc.name}: trace not longer than its history prefix")
    return full[:sc.prefix_minutes], full[sc.prefix_minutes:]


def load_model_if_needed(cfg: ExperimentConfig) -> Optional[ModelBundle]:
    if "aapa" not in cfg.strategies or cfg.aapa_classifier != "model":
        return None
    if not cfg.model_path.exists():
        raise ConfigError(f"AAPA needs a trained model at {cfg.model_path}; run train first "
                          f"or set strategies.aapa.classifier to 'weak'")
    try:
        return load_bundle(cfg.model_path)
    except (ValueError, StopIteration) as exc:
        raise ConfigError(f"cannot read model {cfg.model_path}: {exc}") from None


def make_strategy(name: str, cfg: ExperimentConfig, bundle: Optional[ModelBundle]):
    bounds = cfg.sim.bounds
    if name == "hpa":
        return HpaStrategy(cfg.hpa, bounds)
    if name == "predictive":
        return PredictiveStrategy(cfg.sim.capacity_rps_per_pod, cfg.predictive, bounds)
    if name == "aapa":
        classify = bundle_classifier(bundle) if bundle is not None else \
            weak_label_classifier(cfg.thresholds)
        return AapaStrategy(classify, cfg.aapa, bounds)
    raise ConfigError(f"unknown strategy {name!r}")


def simulate_one(cfg: ExperimentConfig, sc: Scenario, strategy: str, trial: int,
                 bundle: Optional[ModelBundle]) -> SimulationLog:
    prefix, counts = scenario_trace(sc, trial_seed(cfg, trial))
    return run_simulation(counts, make_strategy(strategy, cfg, bundle), cfg.sim,
                          history_prefix=prefix)


def _find_scenario(cfg: ExperimentConfig, name: Optional[str]) -> Scenario:
    if not cfg.scenarios:
        raise ConfigError("no scenarios configured")
    if name is None:
        return cfg.scenarios[0]
    for sc in cfg.scenarios:
        if sc.name == name:
            return sc
    raise ConfigError(f"unknown scenario {name!r}; have {[s.name for s in cfg.scenarios]}")


def cmd_simulate(cfg: ExperimentConfig, scenario: Optional[str] = None,
                 strategy: str = "aapa", trial: int = 0) -> tuple[Path, MetricsReport]:
    sc = _find_scenario(cfg, scenario)
    if strategy not in cfg.strategies:
        raise ConfigError(f"strategy {strategy!r} is not enabled")
    if not 0 <= trial < cfg.trials:
        raise ConfigError(f"trial must be in [0, {cfg.trials})")
    bundle = load_model_if_needed(cfg) if strategy == "aapa" else None
    log = simulate_one(cfg, sc, strategy, trial, bundle)
    report = compute_metrics(log)
    rei = compute_rei(report, weights=cfg.rei)
    d = cfg.output_dir / "simulate" / f"{sc.name}-{strategy}-t{trial}"
    _write(d / "requests.csv", log.requests_csv())
    _write(d / "replicas.csv", log.replicas_csv())
    _write(d / "events.csv", log.events_csv())
    summary = {**report.as_dict(), "s_slo": rei.s_slo, "s_eff": rei.s_eff,
               "s_stab": rei.s_stab, "rei": rei.rei}
    _write(d / "metrics.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return d, report


@dataclass(frozen=True)
class RunRow:
    scenario: str
    archetype: str
    strategy: str
    trial: int
    seed: int
    report: MetricsReport
    s_slo: float
    s_eff: float
    s_stab: float
    rei: float


@dataclass
class ComparisonReport:
    rows: list
    scenarios: tuple
    strategies: tuple
    files: dict

    def values(self, scenario: str, strategy: str, attr: str) -> np.ndarray:
        rows = [r for r in self.rows if r.scenario == scenario and r.strategy == strategy]
        rows.sort(key=lambda r: r.trial)
        return np.array([getattr(r, attr) if hasattr(r, attr) else getattr(r.report, attr)
                         for r in rows], dtype=float)

    def mean(self, scenario: str, strategy: str, attr: str) -> float:
        return float(self.values(scenario, strategy, attr).mean())

    def ratio(self, scenario: str, strategy: str, attr: str = "replica_minutes") -> float:
        """Mean over trials of the per-trial strategy/HPA ratio."""
        num = self.values(scenario, strategy, attr)
        den = self.values(scenario, "hpa", attr)
        return float(np.mean(num / den))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(rows: Sequence[RunRow]) -> str:
    fields_ = MetricsReport.field_names()
    lines = [",".join(["scenario", "archetype", "strategy", "trial", "seed", *fields_,
                       "s_slo", "s_eff", "s_stab", "rei"])]
    for r in rows:
        d = r.report.as_dict()
        lines.append(",".join([r.scenario, r.archetype, r.strategy, str(r.trial), str(r.seed),
                               *(_fmt(d[f]) for f in fields_),
                               *(_fmt(v) for v in (r.s_slo, r.s_eff, r.s_stab, r.rei))]))
    return "\n".join(lines) + "\n"


SIGNIFICANCE_METRICS = (("slo_violation_rate", "SLO violation rate"),
                        ("replica_minutes", "Replica-minutes"),
                        ("cold_starts", "Cold starts"),
                        ("rei", "REI"))


def render_tables(rep: ComparisonReport, cfg: ExperimentConfig) -> dict[str, str]:
    scen, strat = rep.scenarios, rep.strategies
    summary_rows = []
    for s in scen:
        for k in strat:
            summary_rows.append([s, k] + [rep.mean(s, k, a) for a in (
                "slo_violation_rate", "p95_ms", "p99_ms", "replica_minutes", "avg_cpu_util",
                "underutil_rate", "cold_starts", "oscillations")])
    summary = format_table(["scenario", "strategy", "violation", "p95_ms", "p99_ms",
                            "replica_min", "cpu_util", "underutil", "cold_starts",
                            "oscillations"], summary_rows)

    rei_rows = []
    for s in scen:
        for k in strat:
            m, hw = mean_ci(rep.values(s, k, "rei"))
            rei_rows.append([s, k, m, hw, rep.mean(s, k, "s_slo"), rep.mean(s, k, "s_eff"),
                             rep.mean(s, k, "s_stab")])
    w = cfg.rei
    rei = (f"REI weights alpha={w.alpha:g} beta={w.beta:g} gamma={w.gamma:g}; "
           f"mean over {cfg.trials} trials with 95% t-interval half-width\n" +
           format_table(["scenario", "strategy", "rei", "ci95", "s_slo", "s_eff", "s_stab"],
                        rei_rows))

    sig_rows = []
    for s in scen:
        for k in strat:
            if k == "hpa" or "hpa" not in strat:
                continue
            for attr, label in SIGNIFICANCE_METRICS:
                a, b = rep.values(s, k, attr), rep.values(s, "hpa", attr)
                res = wilcoxon_signed_rank(a, b)
                sig_rows.append([s, f"{k} vs hpa", label, float(a.mean()), float(b.mean()),
                                 res.statistic, res.p_value, "yes" if res.significant else "no"])
    wilcoxon = ("Wilcoxon signed-rank, two-sided, paired by trial, alpha=0.05\n" +
                format_table(["scenario", "comparison", "metric", "mean", "hpa_mean", "W",
                              "p_value", "significant"], sig_rows))

    ratio_rows = []
    if "hpa" in strat:
        for s in scen:
            hpa_rm = rep.mean(s, "hpa", "replica_minutes")
            for k in strat:
                ratio_rows.append([s, k, rep.mean(s, k, "replica_minutes"), hpa_rm,
                                   rep.ratio(s, k)])
    ratios = ("Resource usage (pod-minutes), ratio = mean of per-trial strategy/hpa\n" +
              format_table(["scenario", "strategy", "pod_minutes", "hpa_pod_minutes", "ratio"],
                           ratio_rows) +
              f"reference full-scale SPIKE ratio (aapa/hpa): {SPIKE_REFERENCE_RATIO}x\n")

    sens_lines = []
    for s in scen:
        comps = {k: (rep.mean(s, k, "s_slo"), rep.mean(s, k, "s_eff"),
                     rep.mean(s, k, "s_stab")) for k in strat}
        pts = sensitivity_sweep(comps, 0.05, cfg.rei)
        rows = [[p.perturbed, " > ".join(p.ranking) if p.ranking else "-",
                 "yes" if p.changed else "no", p.note or "-"] for p in pts]
        sens_lines.append(f"[{s}]\n" + format_table(["weights", "ranking", "changed", "note"],
                                                     rows))
    sensitivity = "REI weight sensitivity (+/-0.05 per weight, renormalized)\n" + \
        "\n".join(sens_lines)
    return {"summary.txt": summary, "rei_table.txt": rei, "wilcoxon.txt": wilcoxon,
            "ratios.txt": ratios, "sensitivity.txt": sensitivity}


def run_comparison(cfg: ExperimentConfig, bundle: Optional[ModelBundle] = None,
                   write: bool = True) -> ComparisonReport:
    rows = []
    for sc in cfg.scenarios:
        for trial in range(cfg.trials):
            seed = trial_seed(cfg, trial)
            for k in cfg.strategies:
                log = simulate_one(cfg, sc, k, trial, bundle)
                rep = compute_metrics(log)
                score = compute_rei(rep, weights=cfg.rei)
                rows.append(RunRow(sc.name, sc.archetype, k, trial, seed, rep, score.s_slo,
                                   score.s_eff, score.s_stab, score.rei))
                logger.info("%s/%s trial %d: violation=%.4f pod-min=%.1f", sc.name, k, trial,
                            rep.slo_violation_rate, rep.replica_minutes)
    order = {k: i for i, k in enumerate(cfg.strategies)}
    scen_order = {s.name: i for i, s in enumerate(cfg.scenarios)}
    rows.sort(key=lambda r: (scen_order[r.scenario], order[r.strategy], r.trial))
    rep = ComparisonReport(rows, tuple(s.name for s in cfg.scenarios), cfg.strategies, {})
    tables = render_tables(rep, cfg)
    files = {"metrics.csv": metrics_csv(rows), **tables}
    files["report.txt"] = "\n".join(tables[k] for k in (
        "summary.txt", "rei_table.txt", "ratios.txt", "wilcoxon.txt", "sensitivity.txt"))
    if write:
        d = cfg.output_dir / "compare"
        for name, text in files.items():
            _write(d / name, text)
    rep.files = files
    return rep


def cmd_compare(cfg: ExperimentConfig) -> ComparisonReport:
    if not cfg.scenarios:
        raise ConfigError("no scenarios configured")
    bundle = load_model_if_needed(cfg)  # fail before any simulation starts
    for sc in cfg.scenarios:
        scenario_trace(sc, trial_seed(cfg, 0))
    return run_comparison(cfg, bundle)


# -- features --------------------------------------------------------------------------

def features_text(values: Sequence[float]) -> str:
    fv = compute_features(values)
    return "feature,value\n" + "".join(f"{n},{v!r}\n" for n, v in fv.as_dict().items())
