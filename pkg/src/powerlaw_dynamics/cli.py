"""Command-line experiment runner.

Each experiment reads a JSON config::

    {"schema_version": 1, "kind": "<subcommand>", "master_seed": 7, "params": {...}}

validates it against the parameter dataclass of its kind, runs, and writes CSV
plot data, JSON summaries and ``manifest.json`` (the fully resolved config)
into the output directory. Feeding the manifest back reproduces the outputs
byte for byte; the thread count never changes a result.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import re
import shutil
import sys
import tempfile
import typing
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, escape, noise_model, pacbayes, stationary, tailfit
from . import rng as rngmod
from .landscape import DoubleWell1D, EmpiricalToyLoss, landscape_from_dict

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; ``str`` carries location diagnostics."""


# ---------------------------------------------------------------- parameter blocks

@dataclass
class SimulateParams:
    landscape: dict = field(default_factory=lambda: {"kind": "quadratic", "center": [0.0], "hessian": [[1.0]]})
    mode: str = "POWER_LAW"
    eta: float = 0.1
    steps: int = 1000
    record_every: int = 1
    w0: list | None = None
    noise: dict | None = field(default_factory=lambda: {"sigma_g": 1.0, "sigma_h": 0.5})
    lambda1: float | None = None
    lambda2: float | None = None
    batch_size: int | None = None
    convention: str = "ito"


@dataclass
class DensityParams:
    kappa: float = 2.0
    sigma_g: float = 1.0
    sigma_h: float = 1.0
    center: float = 0.0
    grid_half_width: float | None = None
    grid_points: int = 1001
    samples: int = 0
    bins: int = 200


@dataclass
class EscapeAnalyticParams:
    h_a: list = field(default_factory=lambda: [1.0])
    h_b_abs: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    delta_l: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    eta: list = field(default_factory=lambda: [0.02])
    sigma_g: list = field(default_factory=lambda: [5.0])
    kappa: list = field(default_factory=lambda: [1.5, 3.0, 10.0])
    alpha: float = 1.5


@dataclass
class EscapeMcParams:
    min_a: float = 0.0
    curvature_a: float = 1.0
    curvature_b_abs: float = 0.5
    barrier: float = 1.0
    eta: float = 0.02
    sigma_g: float = 5.0
    kappa: list = field(default_factory=lambda: [1.5, 3.0])
    mode: str = "POWER_LAW"
    trials: int = 2000
    max_steps: int = 10**7
    target: str = "saddle"
    convention: str = "kinetic"


@dataclass
class SuccessRateParams:
    n: int = 1000
    data_std: float = 0.01
    data_seed: int = 0
    scales: list = field(default_factory=lambda: [1.0, 0.9])
    lambda1: list = field(default_factory=lambda: [0.0, 8.0, 16.0, 32.0, 64.0])
    lambda2: float | None = None
    match_batch_size: int = 1
    match_draws: int = 10000
    eta: float = 0.025
    steps: int = 500
    runs: int = 100
    escape_region: list = field(default_factory=lambda: [0.0, 2.0])
    include_sgd: bool = True
    sgd_batch_size: int = 1


@dataclass
class NoiseScanParams:
    n: int = 1000
    data_std: float = 0.01
    data_seed: int = 0
    scale: float = 1.0
    direction: list = field(default_factory=lambda: [1.0, 1.0])
    step: float = 0.001
    points: int = 10
    batch_size: int = 1
    draws: int = 2000
    curve_points: int = 201


@dataclass
class FitParams:
    samples_csv: str | None = None
    kappa: list = field(default_factory=lambda: [2.0])
    scale: float = 1.0
    center: float = 0.0
    n: int = 100000
    repetitions: int = 1
    bins: int = 100
    overlay_points: int = 400


@dataclass
class BoundParams:
    hessian: list = field(default_factory=lambda: [[1.0]])
    sigma_g_mat: list = field(default_factory=lambda: [[1.0]])
    eta: float = 2.0
    kappa: float = 2.0
    n_samples: int = 1000
    delta: float = 0.05
    empirical_risk: float = 0.0


PARAMS = {
    "simulate": SimulateParams,
    "density": DensityParams,
    "escape-analytic": EscapeAnalyticParams,
    "escape-mc": EscapeMcParams,
    "success-rate": SuccessRateParams,
    "noise-scan": NoiseScanParams,
    "fit": FitParams,
    "bound": BoundParams,
}
DETERMINISTIC_KINDS = {"escape-analytic", "bound"}
TOP_KEYS = {"schema_version", "kind", "master_seed", "params"}


@dataclass
class ExperimentConfig:
    kind: str
    master_seed: int | None
    params: object
    schema_version: int = SCHEMA_VERSION

    def resolved(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "master_seed": self.master_seed,
            "params": dataclasses.asdict(self.params),
        }


# ---------------------------------------------------------------- validation

def _line_of(text: str | None, key: str) -> str:
    if not text:
        return ""
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return f"line {text.count(chr(10), 0, m.start()) + 1}: " if m else ""


def _type_ok(value, tp) -> bool:
    origin = typing.get_origin(tp)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        return any(_type_ok(value, a) for a in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if tp is bool:
        return isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is str:
        return isinstance(value, str)
    if tp is list or origin is list:
        return isinstance(value, list)
    if tp is dict or origin is dict:
        return isinstance(value, dict)
    return True


def _type_name(tp) -> str:
    return str(tp).replace("typing.", "").replace("<class '", "").replace("'>", "")


def parse_config(data: dict, text: str | None = None, kind: str | None = None) -> ExperimentConfig:
    """Validate a config mapping; ``text`` (the raw JSON) sharpens error locations."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"{_line_of(text, unknown[0])}unknown top-level key {unknown[0]!r}")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{_line_of(text, 'schema_version')}schema_version must be {SCHEMA_VERSION}, got {version!r}")
    cfg_kind = data.get("kind", kind)
    if cfg_kind not in PARAMS:
        raise ConfigError(f"{_line_of(text, 'kind')}kind must be one of {sorted(PARAMS)}, got {cfg_kind!r}")
    if kind is not None and cfg_kind != kind:
        raise ConfigError(f"{_line_of(text, 'kind')}config kind {cfg_kind!r} does not match subcommand {kind!r}")
    seed = data.get("master_seed")
    if seed is not None:
        try:
            rngmod.check_seed(seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{_line_of(text, 'master_seed')}master_seed: {exc}") from None
    block = data.get("params", {})
    if not isinstance(block, dict):
        raise ConfigError(f"{_line_of(text, 'params')}params must be an object")
    cls = PARAMS[cfg_kind]
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for key, value in block.items():
        if key not in hints:
            raise ConfigError(f"{_line_of(text, key)}params.{key}: unknown key for kind {cfg_kind!r} "
                              f"(allowed: {', '.join(names)})")
        if not _type_ok(value, hints[key]):
            raise ConfigError(f"{_line_of(text, key)}params.{key}: expected {_type_name(hints[key])}, "
                              f"got {type(value).__name__}")
    params = cls(**block)
    return ExperimentConfig(cfg_kind, None if seed is None else int(seed), params, version)


def load_config(path: str, kind: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return parse_config(data, text, kind)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- results and output

@dataclass
class ExperimentResult:
    kind: str
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    documents: dict = field(default_factory=dict)  # name -> JSON-able dict


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return "" if v is None else str(v)


def emit_plot_data(result: ExperimentResult, fmt: str = "csv") -> dict[str, str]:
    """Render every table of ``result`` as CSV text keyed by file name."""
    if fmt != "csv":
        raise ValueError(f"unsupported plot-data format {fmt!r}; only 'csv' is available")
    files = {}
    for name, (header, rows) in result.tables.items():
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        files[f"{name}.csv"] = buf.getvalue()
    return files


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _write_atomically(out_dir: str, files: dict[str, str]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".staging-", dir=out_dir)
    try:
        for name, text in files.items():
            with open(os.path.join(stage, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(stage, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# ---------------------------------------------------------------- experiment bodies

def _toy(p) -> EmpiricalToyLoss:
    return EmpiricalToyLoss.generate(n=p.n, seed=p.data_seed, std=p.data_std)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _simulate(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: SimulateParams = cfg.params
    land = landscape_from_dict(p.landscape)
    mode = dynamics.Mode(p.mode)
    eta = p.eta
    noise = None
    if mode is dynamics.Mode.POWER_LAW:
        noise_cfg = dict(p.noise or {})
        if "sigma_g_mat" in noise_cfg:
            noise = noise_model.MultivariateNoiseParams(eta=eta, **noise_cfg)
        else:
            noise_cfg.setdefault("center", float(np.ravel(getattr(land, "center", [0.0]))[0]))
            if "curvature" not in noise_cfg:
                noise_cfg["curvature"] = float(np.atleast_2d(getattr(land, "hessian", [[1.0]]))[0, 0])
            noise = noise_model.ScalarNoiseParams(eta=eta, **noise_cfg)
    elif mode is dynamics.Mode.LANGEVIN:
        noise = np.asarray((p.noise or {}).get("const_cov", np.eye(land.dim)), dtype=float)
    config = dynamics.IntegratorConfig(
        eta=eta, steps=p.steps, mode=mode, master_seed=cfg.master_seed, record_every=p.record_every,
        lambda1=p.lambda1, lambda2=p.lambda2, batch_size=p.batch_size, convention=p.convention)
    if p.w0 is not None:
        w0 = np.asarray(p.w0, dtype=float)
    elif hasattr(land, "empirical_minimum"):
        w0 = land.empirical_minimum()
    elif hasattr(land, "min_a"):
        w0 = np.array([land.min_a])
    else:
        w0 = np.asarray(land.center, dtype=float)
    traj = dynamics.run(config, land, noise, w0)
    d = traj.states.shape[1]
    header = ["step"] + [f"w{i + 1}" for i in range(d)] + ["loss"]
    rows = [[int(s), *map(float, w), float(l)] for s, w, l in zip(traj.steps, traj.states, traj.losses)]
    summary = {"config_hash": traj.config_hash, "final_state": traj.states[-1], "final_loss": traj.losses[-1],
               "records": len(rows)}
    return ExperimentResult("simulate", {"trajectory": (header, rows)}, {"summary": summary})


def _density(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: DensityParams = cfg.params
    dist = stationary.PowerLawKappa1D(p.kappa, p.sigma_g, p.sigma_h, p.center)
    half = p.grid_half_width if p.grid_half_width is not None else 10 * dist.scale
    grid = np.linspace(p.center - half, p.center + half, p.grid_points)
    rows = [[float(w), float(v)] for w, v in zip(grid, dist.density(grid))]
    summary = {"normalizer_closed_form": stationary.normalizer_1d(dist),
               "normalizer_quadrature": stationary.normalizer_1d_quadrature(dist),
               "student_t_scale": dist.scale, "student_t_dof": 2 * p.kappa - 1}
    summary["normalizer_rel_error"] = abs(summary["normalizer_closed_form"] / summary["normalizer_quadrature"] - 1)
    tables = {"density": (["w", "p"], rows)}
    if p.samples > 0:
        x = stationary.sample_1d(dist, p.samples, rngmod.stream(cfg.master_seed, rngmod.SAMPLING))
        summary["samples"] = p.samples
        summary["ks_distance"] = tailfit.ks_distance(x, dist)
        lo, hi = np.quantile(x, [0.005, 0.995])
        counts, edges = np.histogram(x, bins=p.bins, range=(lo, hi))
        dens = counts / (p.samples * np.diff(edges))
        tables["histogram"] = (["left", "right", "density"],
                               [[float(a), float(b), float(c)] for a, b, c in zip(edges[:-1], edges[1:], dens)])
    return ExperimentResult("density", tables, {"summary": summary})


def _escape_analytic(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: EscapeAnalyticParams = cfg.params
    header = ["h_a", "h_b_abs", "delta_l", "eta", "sigma_g", "kappa", "temperature_ratio", "width",
              "tau_power_law", "tau_langevin", "tau_alpha_stable", "tau_power_law_multi_d1"]
    rows = []
    for ha in p.h_a:
        for hb in p.h_b_abs:
            for dl in p.delta_l:
                for eta in p.eta:
                    for sg in p.sigma_g:
                        for k in p.kappa:
                            with warnings.catch_warnings():
                                warnings.simplefilter("ignore", escape.LowTemperatureWarning)
                                prob = escape.EscapeProblem1D(ha, hb, dl, eta, sg, k)
                            width = DoubleWell1D(0.0, ha, hb, dl).saddle_b
                            multi = escape.EscapeProblemMulti([[ha]], [[-hb]], sg, dl, eta, k)
                            rows.append([ha, hb, dl, eta, sg, k, prob.temperature_ratio, width,
                                         escape.tau_power_law_1d(prob), escape.tau_langevin_1d(ha, hb, dl, eta, sg),
                                         escape.tau_alpha_stable_1d(p.alpha, eta, sg, width),
                                         escape.tau_power_law_multi(multi)])
    return ExperimentResult("escape-analytic", {"table": (header, rows)}, {"summary": {"rows": len(rows)}})


def _escape_mc(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: EscapeMcParams = cfg.params
    land = DoubleWell1D(p.min_a, p.curvature_a, p.curvature_b_abs, p.barrier)
    mode = dynamics.Mode(p.mode)
    kappas = p.kappa if mode is dynamics.Mode.POWER_LAW else [math.inf]
    points, tables = [], {}
    header = ["index", "kappa", "trials", "escaped", "censored", "mean_time", "ci95",
              "tau_power_law", "tau_langevin", "quadrature_mean", "rel_error_vs_formula"]
    rows = []
    for i, k in enumerate(kappas):
        if mode is dynamics.Mode.POWER_LAW:
            noise = escape.loss_form_noise(land, p.sigma_g, k, p.eta)
            var_fn = noise.variance_at
        else:
            noise = p.sigma_g
            var_fn = lambda w: np.full(np.shape(w)[:-1], p.sigma_g)  # noqa: E731
        stats = escape.mc_first_passage(land, noise, p.eta, p.max_steps, p.trials, cfg.master_seed, mode,
                                        p.target, p.convention, threads)
        tau_l = escape.tau_langevin_1d(p.curvature_a, p.curvature_b_abs, p.barrier, p.eta, p.sigma_g)
        if mode is dynamics.Mode.POWER_LAW:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", escape.LowTemperatureWarning)
                prob = escape.EscapeProblem1D(p.curvature_a, p.curvature_b_abs, p.barrier, p.eta, p.sigma_g, k)
            tau = escape.tau_power_law_1d(prob)
        else:
            tau = tau_l
        quad = escape.mean_passage_time_quadrature(land, var_fn, p.eta, p.target)
        rel = abs(stats.mean_time / tau - 1) if stats.mean_time is not None else math.nan
        rows.append([i, k, stats.trials, stats.escaped, stats.censored,
                     math.nan if stats.mean_time is None else stats.mean_time,
                     math.nan if stats.ci95 is None else stats.ci95, tau, tau_l, quad, rel])
        points.append({"index": i, "kappa": k, "stats": stats.to_json(), "tau_power_law": tau,
                       "tau_langevin": tau_l, "quadrature_mean": quad, "rel_error_vs_formula": rel,
                       "censored_fraction": stats.censored / stats.trials})
        tables[f"passage_times_{i}"] = (["trial", "time"], [[j, t] for j, t in enumerate(stats.passage_times)])
    tables["summary"] = (header, rows)
    return ExperimentResult("escape-mc", tables, {"escape": {"points": points, "saddle_b": land.saddle_b,
                                                            "min_c": land.min_c}})


def _success_rate(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: SuccessRateParams = cfg.params
    base = _toy(p)
    w_star = base.empirical_minimum()
    if p.lambda2 is None:
        lam2 = dynamics.match_lambda2(base, w_star, p.match_batch_size, p.match_draws,
                                      rngmod.stream(cfg.master_seed, rngmod.LAMBDA_MATCH))
    else:
        lam2 = p.lambda2
    region = tuple(p.escape_region)
    rows, points = [], []
    for scale in p.scales:
        land = base.with_scale(scale)
        common = dict(eta=p.eta, steps=p.steps, runs=p.runs, master_seed=cfg.master_seed,
                      escape_region=region, start=w_star, threads=threads)
        for l1 in p.lambda1:
            rate = escape.success_rate(land, l1, lam2, mode=dynamics.Mode.TOY_POWER_LAW, **common)
            rows.append(["power_law", scale, l1, lam2, rate])
            points.append({"dynamic": "power_law", "scale": scale, "lambda1": l1, "lambda2": lam2, "rate": rate})
        if p.include_sgd:
            rate = escape.success_rate(land, 0.0, 0.0, mode=dynamics.Mode.SGD, batch_size=p.sgd_batch_size, **common)
            rows.append(["sgd", scale, math.nan, math.nan, rate])
            points.append({"dynamic": "sgd", "scale": scale, "batch_size": p.sgd_batch_size, "rate": rate})
    doc = {"lambda2": lam2, "w_star": w_star, "loss_at_w_star": float(base.loss(w_star)), "points": points}
    return ExperimentResult("success-rate", {"rates": (["dynamic", "scale", "lambda1", "lambda2", "rate"], rows)},
                            {"rates": doc})


def _noise_scan(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: NoiseScanParams = cfg.params
    land = _toy(p).with_scale(p.scale)
    center = land.empirical_minimum()
    # points w* +- i * step * direction: every coordinate along the raw direction moves by i * step
    unit_step = p.step * float(np.linalg.norm(p.direction))
    offsets = noise_model.symmetric_offsets(unit_step, p.points)
    res = noise_model.scan_noise_trace(land, center, p.direction, offsets, p.batch_size, p.draws,
                                       cfg.master_seed, threads=threads)
    curve_x = np.linspace(offsets[0], offsets[-1], p.curve_points)
    tables = {
        "points": (["offset", "trace"], [[float(o), float(t)] for o, t in zip(res.offsets, res.traces)]),
        "curve": (["offset", "fitted_trace"], [[float(x), float(y)] for x, y in zip(curve_x, res.fitted(curve_x))]),
    }
    doc = res.to_json()
    doc.update({"center": center, "grid_step": unit_step,
                "argmin_within_grid_step": bool(not res.degenerate and abs(res.argmin_offset) <= unit_step)})
    return ExperimentResult("noise-scan", tables, {"fit": doc})


def _fit(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: FitParams = cfg.params
    header = ["index", "kappa_true", "repetition", "kappa_hat", "scale_hat", "center_hat",
              "log_likelihood", "ks_statistic", "converged", "iterations"]
    tables, fits = {}, []
    if p.samples_csv is not None:
        with open(p.samples_csv, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        try:
            vals = [float(r[0]) for r in rows]
        except ValueError:
            vals = [float(r[0]) for r in rows[1:]]
        jobs = [(0, math.nan, 0, np.asarray(vals))]
    else:
        jobs = []
        for ki, k in enumerate(p.kappa):
            dist = stationary.PowerLawKappa1D.from_scale(k, p.scale, p.center)
            for r in range(p.repetitions):
                jobs.append((len(jobs), k, r, (dist, ki, r)))

    def one(job):
        idx, k, r, src = job
        if isinstance(src, tuple):
            dist, ki, rep = src
            x = stationary.sample_1d(dist, p.n, rngmod.stream(cfg.master_seed, rngmod.SAMPLING, ki, rep))
        else:
            x = src
        return idx, k, r, x, tailfit.fit_power_law_kappa(x)

    results = _map(one, jobs, threads)
    rows = []
    for idx, k, r, x, fr in results:
        rows.append([idx, k, r, fr.kappa_hat, fr.scale_hat, fr.center_hat, fr.log_likelihood,
                     fr.ks_statistic, fr.converged, fr.iterations])
        fits.append({"index": idx, "kappa_true": k, "repetition": r, **fr.to_json()})
        lo, hi = np.quantile(x, [0.005, 0.995])
        counts, edges = np.histogram(x, bins=p.bins, range=(lo, hi))
        dens = counts / (x.size * np.diff(edges))
        tables[f"histogram_{idx}"] = (["left", "right", "density"],
                                      [[float(a), float(b), float(c)] for a, b, c in zip(edges[:-1], edges[1:], dens)])
        grid = np.linspace(lo, hi, p.overlay_points)
        tables[f"overlay_{idx}"] = (["w", "density"],
                                    [[float(g), float(v)] for g, v in zip(grid, fr.distribution.density(grid))])
    tables["fits"] = (header, rows)
    return ExperimentResult("fit", tables, {"fits": {"fits": fits}})


def _bound(cfg: ExperimentConfig, threads: int) -> ExperimentResult:
    p: BoundParams = cfg.params
    inputs = pacbayes.BoundInputs(np.asarray(p.hessian, dtype=float), np.asarray(p.sigma_g_mat, dtype=float),
                                  p.eta, p.kappa, p.n_samples, p.delta, p.empirical_risk)
    kl = pacbayes.kl_upper_bound(inputs)
    doc = {"kl_upper_bound": kl, "kl_exact_form": pacbayes.kl_exact_form(inputs),
           "generalization_bound": pacbayes.generalization_bound(inputs, kl)}
    return ExperimentResult("bound", {}, {"bound": doc})


RUNNERS = {
    "simulate": _simulate,
    "density": _density,
    "escape-analytic": _escape_analytic,
    "escape-mc": _escape_mc,
    "success-rate": _success_rate,
    "noise-scan": _noise_scan,
    "fit": _fit,
    "bound": _bound,
}


def run_experiment(config: ExperimentConfig | dict, out_dir: str, threads: int = 1) -> ExperimentResult:
    """Run one experiment and write its files plus ``manifest.json`` into ``out_dir``.

    Nothing is written unless the whole experiment succeeds.
    """
    if isinstance(config, dict):
        config = parse_config(config)
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    if config.master_seed is None and config.kind not in DETERMINISTIC_KINDS:
        config = dataclasses.replace(config, master_seed=rngmod.fresh_seed())
    if config.master_seed is None:
        config = dataclasses.replace(config, master_seed=0)
    result = RUNNERS[config.kind](config, threads)
    files = emit_plot_data(result, "csv")
    for name, doc in result.documents.items():
        files[f"{name}.json"] = _dump_json(doc)
    files["manifest.json"] = _dump_json(config.resolved())
    _write_atomically(out_dir, files)
    return result


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powerlaw-dynamics", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in PARAMS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", help="JSON config; defaults are used when omitted")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config, args.kind)
        else:
            cfg = parse_config({"schema_version": SCHEMA_VERSION, "kind": args.kind})
        if args.seed is not None:
            try:
                cfg = dataclasses.replace(cfg, master_seed=rngmod.check_seed(args.seed))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"--seed: {exc}") from None
        result = run_experiment(cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, dynamics.IntegrationError, OSError) as exc:
        print(f"{args.kind} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for name, doc in result.documents.items():
        print(f"{name}: {json.dumps(_jsonable(doc), sort_keys=True)[:400]}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
