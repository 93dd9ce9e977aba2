"""Experiment configuration: JSON file, environment overrides, validation.

Precedence is built-in defaults, then the config file, then environment
variables, then command-line flags. An environment variable
``ARCHSCALE_<SECTION>__<KEY>`` overrides ``config[section][key]``; a single
segment (``ARCHSCALE_TRIALS``) addresses a top-level key. Values are parsed as
JSON when possible and kept as strings otherwise.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .archetypes import Archetype
from .autoscaler import AapaConfig, HoltWintersParams, HpaConfig, PredictiveConfig
from .classifier import BoostingParams
from .metrics import ReiWeights
from .simulator import SimConfig
from .trace import SyntheticSpec
from .weaklabel import LfThresholds

ENV_PREFIX = "ARCHSCALE_"
CONFIG_VERSION = 1
STRATEGIES = ("hpa", "predictive", "aapa")


class ConfigError(ValueError):
    pass


def _corpus(arch: str, seed0: int, **params) -> dict:
    return {"archetype": arch, "count": 25, "duration_minutes": 1050, "rng_seed": seed0, **params}


def _scenario(name: str, arch: str, **params) -> dict:
    return {"name": name, "prefix_minutes": 60,
            "spec": {"archetype": arch, "duration_minutes": 1440, **params}}


DEFAULTS: dict = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "output_dir": "archscale-out",
    "trace": {
        "csv": None,
        "min_invocations": 1000,
        "synthetic": [
            _corpus("SPIKE", 1000, base_rate=20, amplitude=30, noise_std=4),
            _corpus("PERIODIC", 2000, base_rate=300, amplitude=150, period_minutes=60,
                    noise_std=15),
            _corpus("RAMP", 3000, base_rate=200, slope=2, noise_std=8),
            _corpus("STATIONARY", 4000, base_rate=300, noise_std=45),
        ],
    },
    "window": {"length": 60, "stride": 10},
    "labeling": {},
    "classifier": {"seed": 0, "split": [9, 2, 3], "calibration_ridge": 0.01},
    "strategies": {
        "enabled": list(STRATEGIES),
        "hpa": {},
        "predictive": {},
        "aapa": {"classifier": "model", "warm_pool": 2},
    },
    "sim": {},
    "rei": {},  # empty means the "default" preset
    "trials": 5,
    "model_path": None,
    "scenarios": [
        _scenario("spike", "SPIKE", base_rate=1200, amplitude=25, noise_std=120),
        _scenario("periodic", "PERIODIC", base_rate=3000, amplitude=1500, period_minutes=60,
                  noise_std=150),
        _scenario("ramp", "RAMP", base_rate=1000, slope=3, noise_std=40),
        _scenario("stationary", "STATIONARY", base_rate=3000, noise_std=450),
    ],
}


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def env_overrides(environ: Mapping[str, str]) -> dict:
    result: dict = {}
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        raw = environ[key]
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = result
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = value
    return result


def _build(cls, section: Mapping, what: str, convert: Optional[dict] = None):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    kwargs = dict(section)
    for k, fn in (convert or {}).items():
        if k in kwargs:
            kwargs[k] = fn(kwargs[k])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _spec(entry: Mapping, what: str) -> SyntheticSpec:
    entry = dict(entry)
    entry.pop("count", None)
    try:
        entry["archetype"] = Archetype.parse(entry.get("archetype", ""))
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None
    return _build(SyntheticSpec, entry, what)


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: Optional[SyntheticSpec] = None
    csv: Optional[Path] = None
    function_id: Optional[str] = None
    prefix_minutes: int = 60

    @property
    def archetype(self) -> str:
        return self.spec.archetype.value if self.spec else ""


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    seed: int
    output_dir: Path
    traces_csv: Optional[Path]
    min_invocations: int
    synthetic: tuple
    window_len: int
    stride: int
    thresholds: LfThresholds
    boosting: BoostingParams
    classifier_seed: int
    split: tuple
    calibration_ridge: float
    strategies: tuple
    hpa: HpaConfig
    predictive: PredictiveConfig
    aapa: AapaConfig
    aapa_classifier: str
    sim: SimConfig
    rei: ReiWeights
    trials: int
    scenarios: tuple
    model_path: Path

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"


def _int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{what} must be an integer, got {v!r}")
    return v


def validate(raw: dict) -> ExperimentConfig:
    """Turn a merged config mapping into typed, checked objects (fail-fast)."""
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {raw.get('version')!r}")
    known = set(DEFAULTS)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    seed = _int(raw["seed"], "seed")
    if seed < 0:
        raise ConfigError("seed must be >= 0")

    tr = raw["trace"]
    synthetic = []
    for i, entry in enumerate(tr.get("synthetic") or []):
        count = _int(entry.get("count", 1), f"trace.synthetic[{i}].count")
        if count < 1:
            raise ConfigError(f"trace.synthetic[{i}].count must be >= 1")
        for k in range(count):
            e = dict(entry)
            e["rng_seed"] = int(entry.get("rng_seed", 0)) + k
            synthetic.append(_spec(e, f"trace.synthetic[{i}]"))
    csv = Path(tr["csv"]) if tr.get("csv") else None

    win = raw["window"]
    window_len = _int(win.get("length", 60), "window.length")
    stride = _int(win.get("stride", 10), "window.stride")
    if window_len < 2:
        raise ConfigError("window.length must be >= 2")
    if not 1 <= stride <= window_len:
        raise ConfigError("window.stride must be in [1, window.length]")
    for s in synthetic:
        if s.duration_minutes < window_len:
            raise ConfigError(f"synthetic trace {s.function_id or s.archetype.value} is shorter "
                              f"than one window")

    try:
        thresholds = LfThresholds.from_dict(raw.get("labeling") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"labeling: {exc}") from None

    cl = dict(raw["classifier"])
    classifier_seed = _int(cl.pop("seed", 0), "classifier.seed")
    split = tuple(cl.pop("split", (9, 2, 3)))
    if len(split) != 3 or any(not isinstance(x, (int, float)) or x <= 0 for x in split):
        raise ConfigError("classifier.split must be three positive proportions")
    ridge = float(cl.pop("calibration_ridge", 0.01))
    boosting = _build(BoostingParams, cl, "classifier")

    st = raw["strategies"]
    enabled = tuple(st.get("enabled", STRATEGIES))
    bad = [s for s in enabled if s not in STRATEGIES]
    if bad or not enabled:
        raise ConfigError(f"strategies.enabled must be a non-empty subset of {STRATEGIES}")
    if len(set(enabled)) != len(enabled):
        raise ConfigError("strategies.enabled has duplicates")
    hpa = _build(HpaConfig, st.get("hpa") or {}, "strategies.hpa")
    hw = lambda d: _build(HoltWintersParams, d, "holt-winters")  # noqa: E731
    predictive = _build(PredictiveConfig, st.get("predictive") or {}, "strategies.predictive",
                        {"hw": hw})
    aapa_raw = dict(st.get("aapa") or {})
    aapa_classifier = aapa_raw.pop("classifier", "model")
    if aapa_classifier not in ("model", "weak"):
        raise ConfigError("strategies.aapa.classifier must be 'model' or 'weak'")
    warm_pool = aapa_raw.pop("warm_pool", 2)
    sim = _build(SimConfig, raw["sim"] or {}, "sim")
    aapa = _build(AapaConfig, {**aapa_raw, "capacity_per_pod": sim.capacity_rps_per_pod},
                  "strategies.aapa", {"hw": hw})
    try:
        aapa = aapa.with_warm_pool(_int(warm_pool, "strategies.aapa.warm_pool"))
    except ValueError as exc:
        raise ConfigError(f"strategies.aapa: {exc}") from None
    for name, interval in (("hpa", hpa.decision_interval_s),
                           ("predictive", predictive.decision_interval_s),
                           ("aapa", aapa.decision_interval_s)):
        if _int(interval, f"strategies.{name}.decision_interval_s") < 1:
            raise ConfigError(f"strategies.{name}.decision_interval_s must be >= 1")

    rei_raw = dict(raw["rei"] or {"preset": "default"})
    if "preset" in rei_raw:
        if set(rei_raw) != {"preset"}:
            raise ConfigError("rei: give either a preset or alpha/beta/gamma, not both")
        try:
            rei = ReiWeights.preset(rei_raw["preset"])
        except ValueError as exc:
            raise ConfigError(f"rei: {exc}") from None
    else:
        rei = _build(ReiWeights, rei_raw, "rei")

    trials = _int(raw["trials"], "trials")
    if trials < 1:
        raise ConfigError("trials must be >= 1")

    scenarios = []
    names = set()
    for i, sc in enumerate(raw["scenarios"] or []):
        name = sc.get("name")
        if not name or name in names or "," in name:
            raise ConfigError(f"scenarios[{i}] needs a unique name without commas")
        names.add(name)
        prefix = _int(sc.get("prefix_minutes", 60), f"scenarios[{i}].prefix_minutes")
        if prefix < 0:
            raise ConfigError(f"scenarios[{i}].prefix_minutes must be >= 0")
        if ("spec" in sc) == ("csv" in sc):
            raise ConfigError(f"scenarios[{i}] needs exactly one of 'spec' or 'csv'")
        if "spec" in sc:
            spec = _spec(sc["spec"], f"scenarios[{i}].spec")
            scenarios.append(Scenario(name, spec=spec, prefix_minutes=prefix))
        else:
            scenarios.append(Scenario(name, csv=Path(sc["csv"]),
                                      function_id=sc.get("function_id"), prefix_minutes=prefix))

    out = Path(raw["output_dir"])
    model_path = Path(raw["model_path"]) if raw.get("model_path") else out / "model.txt"
    return ExperimentConfig(
        raw=raw, seed=seed, output_dir=out, traces_csv=csv,
        min_invocations=_int(tr.get("min_invocations", 1000), "trace.min_invocations"),
        synthetic=tuple(synthetic), window_len=window_len, stride=stride,
        thresholds=thresholds, boosting=boosting, classifier_seed=classifier_seed,
        split=split, calibration_ridge=ridge, strategies=enabled, hpa=hpa,
        predictive=predictive, aapa=aapa, aapa_classifier=aapa_classifier, sim=sim, rei=rei,
        trials=trials, scenarios=tuple(scenarios), model_path=model_path)


def load_config(path: Optional[str | Path] = None, environ: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
        # lists replace defaults wholesale; mappings merge key by key
        raw = _merge(raw, data)
    raw = _merge(raw, env_overrides(os.environ if environ is None else environ))
    if overrides:
        raw = _merge(raw, overrides)
    return validate(raw)
