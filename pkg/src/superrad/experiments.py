"""Experiment bundles that regenerate the figure data as CSV files.

Every output is a pure function of the configuration and the master seed.
Rates in configs are in units of the collective decay rate (gamma_c = 1).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .correlation import default_bin_width, g2_histogram, g2_zero_estimate, write_g2_csv
from .errors import ConfigError, EmptyEstimateError, SuperradError
from .model import SystemParams, build_model
from .records import write_records
from .semiclassical import sweep, thermal_g2, write_sweep_csv
from .trajectory import EnsembleConfig, run_ensemble

log = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
EXPERIMENTS = ("fig3", "fig4", "fig5a", "fig5b", "fig5c", "sweep", "custom")
FIG3_GRID = (0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
SEMICLASSICAL_NS = (10, 100, 1000)
FIG5_PUMPS = {"fig5a": 0.25, "fig5b": 5.0, "fig5c": 100.0}
# Lag range per fig5 panel, in units of 1/gamma_c.
FIG5_TAU_MAX = {"fig5a": 16.0, "fig5b": 2.0, "fig5c": 0.1}


@dataclass
class EnsembleSettings:
    n_trajectories: int = 8
    duration: float = 1000.0
    burn_in: float | None = None
    sample_stride: float | None = None


@dataclass
class EstimatorSettings:
    bin_width: float | None = None
    n_lags: int | None = None


@dataclass
class ExperimentConfig:
    experiment: str
    params: SystemParams | None = None
    model: str = "adiabatic"
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    pump_grid: tuple = ()
    n_values: tuple = SEMICLASSICAL_NS
    sweep_points: int = 401
    master_seed: int = 0
    out_dir: str = "results"
    threads: int = 1
    plots: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.model not in ("adiabatic", "full"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.experiment == "custom" and self.params is None:
            raise ConfigError("the custom experiment needs a parameter file")

    def physics(self) -> dict:
        """The part of the config that determines outputs (hashed in the manifest)."""
        out = {
            "experiment": self.experiment,
            "params": None if self.params is None else self.params.to_dict(),
            "model": self.model,
            "ensemble": asdict(self.ensemble),
            "estimator": asdict(self.estimator),
            "pump_grid": list(self.pump_grid),
            "n_values": list(self.n_values),
            "sweep_points": self.sweep_points,
            "master_seed": self.master_seed,
        }
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.physics(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=experiment, **overrides)
    if experiment == "fig3" and not cfg.pump_grid:
        cfg.pump_grid = FIG3_GRID
    return cfg


def load_config_file(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Read a JSON config.

    Either a bare parameter file (``schema_version`` plus SystemParams keys)
    or ``{"schema_version": 1, "experiment": ..., "params": {...},
    "model": ..., "ensemble": {...}, "estimator": {...}, "pump_grid": [...],
    "n_values": [...]}``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "schema_version" not in data:
        raise ConfigError("config lacks the mandatory 'schema_version' field")
    if "n_atoms" in data:
        data = {"schema_version": data["schema_version"], "params": data}
    if data["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {data['schema_version']!r}")
    known = {"schema_version", "experiment", "params", "model", "ensemble", "estimator", "pump_grid", "n_values", "sweep_points"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    exp = experiment or data.get("experiment") or ("custom" if "params" in data else None)
    if exp is None:
        raise ConfigError("no experiment given")
    kw = {}
    if "params" in data:
        p = dict(data["params"])
        p.setdefault("schema_version", data["schema_version"])
        kw["params"] = SystemParams.from_dict(p)
    if "model" in data:
        kw["model"] = data["model"]
    try:
        if "ensemble" in data:
            kw["ensemble"] = EnsembleSettings(**data["ensemble"])
        if "estimator" in data:
            kw["estimator"] = EstimatorSettings(**data["estimator"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if "pump_grid" in data:
        kw["pump_grid"] = tuple(float(x) for x in data["pump_grid"])
    if "n_values" in data:
        kw["n_values"] = tuple(int(x) for x in data["n_values"])
    if "sweep_points" in data:
        kw["sweep_points"] = int(data["sweep_points"])
    return default_config(exp, **kw)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Run:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.outputs: list[dict] = []
        self.errors: list[str] = []

    def add(self, path: Path, kind: str, **meta):
        self.outputs.append({"path": path.name, "kind": kind, **meta})

    def params_for(self, n_atoms: int, w: float) -> SystemParams:
        base = self.cfg.params
        if base is None:
            return SystemParams.from_gamma_c(n_atoms, 1.0, w)
        return base.replace(n_atoms=n_atoms, pump=w * base.coupling**2 / base.kappa)

    def ensemble(self, params: SystemParams, w: float, seed_offset: int, observables=None):
        cfg = self.cfg
        ops = build_model(params, cfg.model)
        gc = params.coupling**2 / params.kappa
        es = cfg.ensemble
        burn = es.burn_in if es.burn_in is not None else max(10.0 / gc, 10.0 / w if w > 0 else 0.0)
        ens = run_ensemble(
            ops,
            EnsembleConfig(
                n_trajectories=es.n_trajectories,
                duration=burn + es.duration,
                burn_in=burn,
                master_seed=(cfg.master_seed + seed_offset) & ((1 << 64) - 1),
                sample_stride=es.sample_stride,
                observables=observables,
                workers=cfg.threads,
            ),
        )
        return ops, ens


def _fig3(run: _Run):
    cfg = run.cfg
    n = cfg.params.n_atoms if cfg.params is not None else 10
    rows = []
    for i, x in enumerate(cfg.pump_grid or FIG3_GRID):
        params = run.params_for(n, x)
        observables = ("jpjm", "jppjmm") if cfg.ensemble.sample_stride else None
        if cfg.model == "full" and observables:
            observables = ("n", "nn")
        ops, ens = run.ensemble(params, x, 1000 * (i + 1), observables)
        rec_path = run.out / f"fig3_records_w{x:g}.txt"
        write_records(rec_path, ens.records)
        run.add(rec_path, "jump-records", w_over_gc=x)
        dt = cfg.estimator.bin_width or default_bin_width(x, n, 1.0)
        try:
            est = g2_histogram(ens.records, "cavity", dt, 1)
            g2, err, nphot = float(est.values[0]), float(est.std_errors[0]), est.n_phot
        except EmptyEstimateError as exc:
            run.errors.append(f"w={x:g}: {exc}")
            g2, err, nphot = math.nan, math.nan, 0
        gs, gs_err = (math.nan, math.nan)
        if observables:
            gs, gs_err = g2_zero_estimate(ens, ops)
        rows.append((x, g2, err, gs, gs_err, nphot, dt))
        log.info("fig3 w/gc=%g g2(0)=%.4f +- %.4f (%d triggers)", x, g2, err, nphot)
    path = run.out / "fig3_montecarlo.csv"
    lines = [
        "# superrad-fig3-montecarlo",
        "# schema_version: 1",
        f"# n_atoms: {n}",
        "# errors: 1-sigma",
        "w_over_gc,g2_zero,g2_err,g2_zero_states,g2_states_err,n_phot,bin_width",
    ]
    for r in rows:
        lines.append(",".join([repr(float(r[0])), repr(r[1]), repr(r[2]), repr(float(r[3])), repr(float(r[4])), str(r[5]), repr(float(r[6]))]))
    path.write_text("\n".join(lines) + "\n")
    run.add(path, "fig3-montecarlo")
    _semiclassical_sweeps(run, prefix="fig3")


def _sweep_grid(n_atoms: int, points: int) -> np.ndarray:
    return np.geomspace(0.1, 10.0 * n_atoms, points)


def _semiclassical_sweeps(run: _Run, prefix: str, ns=None):
    for n in ns or run.cfg.n_values:
        if n < 3:
            run.errors.append(f"semiclassical sweep skipped for N={n} (needs N >= 3)")
            continue
        rows = sweep(n, _sweep_grid(n, run.cfg.sweep_points))
        path = run.out / f"{prefix}_sweep_N{n}.csv"
        write_sweep_csv(path, rows, n)
        run.add(path, "semiclassical-sweep", n_atoms=n)


def _fig4(run: _Run):
    grid = np.geomspace(0.1, 10.0 * max(run.cfg.n_values), run.cfg.sweep_points)
    for n in run.cfg.n_values:
        rows = sweep(n, grid)
        path = run.out / f"fig4_N{n}.csv"
        lines = ["# superrad-fig4", "# schema_version: 1", f"# n_atoms: {n}", "w_over_gc,s,p,z2,z2_minus_s2,flag"]
        for r in rows:
            vals = (r.w_over_gc, r.s, r.p, r.z2, r.z2 - r.s * r.s)
            lines.append(",".join([*(repr(float(v)) for v in vals), r.flag]))
        path.write_text("\n".join(lines) + "\n")
        run.add(path, "fig4-correlations", n_atoms=n)


def _g2_tau(run: _Run, name: str, w: float):
    cfg = run.cfg
    n = cfg.params.n_atoms if cfg.params is not None else 10
    params = run.params_for(n, w)
    _, ens = run.ensemble(params, w, 0)
    rec_path = run.out / f"{name}_records.txt"
    write_records(rec_path, ens.records)
    run.add(rec_path, "jump-records", w_over_gc=w)
    dt = cfg.estimator.bin_width or default_bin_width(w, n, 1.0)
    tau_max = FIG5_TAU_MAX.get(name, 50.0 * dt)
    n_lags = cfg.estimator.n_lags or max(1, int(round(tau_max / dt)))
    est = g2_histogram(ens.records, "cavity", dt, n_lags)
    extra = {"thermal": thermal_g2(est.tau, w)} if name == "fig5c" else None
    path = run.out / f"{name}_g2.csv"
    write_g2_csv(path, est, extra)
    run.add(path, "g2-tau", w_over_gc=w, n_phot=est.n_phot)


def _custom(run: _Run):
    cfg = run.cfg
    params = cfg.params
    gc = params.coupling**2 / params.kappa
    w_rel = params.pump / gc
    obs = ("n", "nn") if cfg.model == "full" else ("jpjm", "jppjmm")
    ops, ens = run.ensemble(params, w_rel, 0, obs if cfg.ensemble.sample_stride else None)
    rec_path = run.out / "custom_records.txt"
    write_records(rec_path, ens.records)
    run.add(rec_path, "jump-records", w_over_gc=w_rel)
    dt = cfg.estimator.bin_width or default_bin_width(params.pump, params.n_atoms, gc)
    est = g2_histogram(ens.records, "cavity", dt, cfg.estimator.n_lags or 50)
    path = run.out / "custom_g2.csv"
    write_g2_csv(path, est)
    meta = {"n_phot": est.n_phot}
    if cfg.ensemble.sample_stride:
        meta["g2_zero_states"], meta["g2_zero_states_err"] = g2_zero_estimate(ens, ops)
    rate, rate_err = ens.event_rate("cavity")
    meta.update(photon_rate=rate, photon_rate_err=rate_err)
    run.add(path, "g2-tau", **meta)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment, write its outputs and a ``manifest.json``.

    On failure the manifest is still written, with ``status: incomplete``,
    and the exception is re-raised.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    start = time.perf_counter()
    failure = None
    try:
        if cfg.experiment == "fig3":
            _fig3(run)
        elif cfg.experiment == "fig4":
            _fig4(run)
        elif cfg.experiment in FIG5_PUMPS:
            w = cfg.params.pump / (cfg.params.coupling**2 / cfg.params.kappa) if cfg.params else FIG5_PUMPS[cfg.experiment]
            _g2_tau(run, cfg.experiment, w)
        elif cfg.experiment == "sweep":
            ns = (cfg.params.n_atoms,) if cfg.params is not None else cfg.n_values
            _semiclassical_sweeps(run, "semiclassical", ns)
        else:
            _custom(run)
    except SuperradError as exc:
        failure = exc
        run.errors.append(f"{type(exc).__name__}: {exc}")
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.physics(),
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "versions": {
            "superrad": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": round(time.perf_counter() - start, 3),
        "status": "incomplete" if failure or run.errors else "complete",
        "errors": run.errors,
        "outputs": [{**o, "sha256": _sha256(out / o["path"])} for o in run.outputs],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if failure is not None:
        raise failure
    return manifest
