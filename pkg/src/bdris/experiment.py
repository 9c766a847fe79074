"""Seeded Monte Carlo sweeps and closed-form figure data.

Configs are flat ``key = value`` text. Keys (defaults in brackets):

    scenario          localized | distributed | receiver-line | receiver-grid [localized]
    ris               localized | distributed, layout for receiver-* scenarios [distributed]
    sweep_var         N | N_T | a | x | alpha_db_per_m [N]
    values            comma list of sweep values [4, 8, 16, 32, 64]
    architectures     comma list of family/kind[@alpha_db_per_m] [tridiagonal/lossless]
    baseline          family/kind used as the gain reference [single/lossless]
    n, n_t, n_r       elements, transmit and receive antennas [64, 1, 1]
    alpha_db_per_m    attenuation for lossy kinds without their own @alpha [0.05]
    a, c0_db, p_t     path-loss exponent, reference gain, transmit watts [4, -30, 10]
    rx_x, rx_y        receiver position in the xy plane [20, 0]
    fading            rayleigh | los [rayleigh]
    wavelength, z0    line wavelength (m) and impedance (ohm) [0.1, 50]
    trials, seed      Monte Carlo trials and master seed [200, 0]
    mc_trials         draws for the scaling-law validation [10000]
    restarts          optimizer runs per trial [1]
    format, out       csv | json, and output path [csv, -]

Closed-form figures additionally read ``metrics`` (loc, dis, sc, fc),
``a_values``, ``n_values`` and the heatmap box ``x_min, x_max, y_min, y_max,
step`` [-10, 70, -40, 40, 1].
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import ModelKind, TopologyFamily, build_model
from .errors import (
    ContractError,
    ExperimentError,
    OptimizationError,
    RealizabilityError,
    SingularityError,
)
from .geometry import (
    FadingKind,
    FadingSpec,
    distributed_scenario,
    draw_channels,
    localized_scenario,
    parse_flat_config,
)
from .optimizer import OptimizerConfig, optimize
from .scaling import (
    Architecture,
    expected_power,
    expected_power_los,
    gain_dis,
    gain_fc,
    gain_loc,
    gain_sc,
    scaling_inputs,
)
from .units import linear_to_db

log = logging.getLogger(__name__)

SCENARIOS = ("localized", "distributed", "receiver-line", "receiver-grid")
SWEEP_VARS = ("N", "N_T", "a", "x", "alpha_db_per_m")
METRICS = ("loc", "dis", "sc", "fc")
MAX_FAILURE_FRACTION = 0.10
WORKERS_ENV = "BDRIS_WORKERS"

SWEEP_COLUMNS = ["sweep_var", "sweep_value", "architecture", "p_r_dbw", "gain_db",
                 "stderr_db", "trials", "failures", "seed"]
CURVE_COLUMNS = ["metric", "n", "a", "gain_db"]
GRID_COLUMNS = ["metric", "x", "y", "gain_db"]
VALIDATE_COLUMNS = ["architecture", "fading", "n", "closed_form_w", "mc_mean_w",
                    "mc_stderr_w", "z_score", "rel_err", "trials", "seed"]


@dataclass(frozen=True)
class ArchSpec:
    family: TopologyFamily
    kind: ModelKind
    alpha_db_per_m: float | None = None

    @classmethod
    def parse(cls, text):
        text = text.strip()
        body, _, alpha = text.partition("@")
        fam, sep, kind = body.partition("/")
        if not sep:
            raise ContractError(f"architecture {text!r} is not family/kind")
        try:
            spec = cls(TopologyFamily(fam.strip()), ModelKind(kind.strip()),
                       float(alpha) if alpha else None)
        except ValueError:
            raise ContractError(f"unknown architecture {text!r}") from None
        if spec.family is TopologyFamily.CUSTOM:
            raise ContractError("custom topologies cannot be swept")
        return spec

    @property
    def label(self):
        base = f"{self.family.value}/{self.kind.value}"
        return base if self.alpha_db_per_m is None else f"{base}@{self.alpha_db_per_m:g}"


def _floats(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "localized"
    ris: str = "distributed"
    sweep_var: str = "N"
    values: tuple = (4.0, 8.0, 16.0, 32.0, 64.0)
    architectures: tuple = (ArchSpec(TopologyFamily.TRIDIAGONAL, ModelKind.LOSSLESS),)
    baseline: ArchSpec = ArchSpec(TopologyFamily.SINGLE, ModelKind.LOSSLESS)
    n: int = 64
    n_t: int = 1
    n_r: int = 1
    alpha_db_per_m: float = 0.05
    a: float = 4.0
    c0_db: float = -30.0
    p_t: float = 10.0
    rx_x: float = 20.0
    rx_y: float = 0.0
    fading: FadingKind = FadingKind.RAYLEIGH
    wavelength: float = 0.1
    z0: float = 50.0
    trials: int = 200
    mc_trials: int = 10_000
    seed: int = 0
    restarts: int = 1
    format: str = "csv"
    out: str = "-"
    metrics: tuple = METRICS
    a_values: tuple = (2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
    n_values: tuple = (8.0, 16.0, 32.0, 64.0)
    x_min: float = -10.0
    x_max: float = 70.0
    y_min: float = -40.0
    y_max: float = 40.0
    step: float = 1.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ContractError(f"scenario must be one of {SCENARIOS}")
        if self.ris not in ("localized", "distributed"):
            raise ContractError("ris must be localized or distributed")
        if self.sweep_var not in SWEEP_VARS:
            raise ContractError(f"sweep_var must be one of {SWEEP_VARS}")
        if not self.values or not self.architectures:
            raise ContractError("values and architectures must be non-empty")
        if self.trials < 1 or self.mc_trials < 2:
            raise ContractError("trials must be >= 1 and mc_trials >= 2")
        if self.format not in ("csv", "json"):
            raise ContractError("format must be csv or json")
        if any(m not in METRICS for m in self.metrics):
            raise ContractError(f"metrics must come from {METRICS}")
        if not (self.step > 0 and self.x_max >= self.x_min and self.y_max >= self.y_min):
            raise ContractError("heatmap box is empty")
        if self.seed < 0:
            raise ContractError("seed must be a non-negative integer")

    @classmethod
    def from_text(cls, text):
        kv = parse_flat_config(text)
        fields = {}
        conv = {
            "scenario": str, "ris": str, "sweep_var": str, "format": str, "out": str,
            "n": int, "n_t": int, "n_r": int, "trials": int, "mc_trials": int, "seed": int, "restarts": int,
            "alpha_db_per_m": float, "a": float, "c0_db": float, "p_t": float,
            "rx_x": float, "rx_y": float, "wavelength": float, "z0": float,
            "x_min": float, "x_max": float, "y_min": float, "y_max": float, "step": float,
            "values": _floats, "a_values": _floats, "n_values": _floats,
        }
        for key, raw in kv.items():
            raw = raw.strip()
            try:
                if key in conv:
                    fields[key] = conv[key](raw)
                elif key == "architectures":
                    fields[key] = tuple(ArchSpec.parse(p) for p in raw.split(",") if p.strip())
                elif key == "baseline":
                    fields[key] = ArchSpec.parse(raw)
                elif key == "fading":
                    fields[key] = FadingKind(raw)
                elif key == "metrics":
                    fields[key] = tuple(m.strip() for m in raw.split(",") if m.strip())
                else:
                    raise ContractError(f"unknown config key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ContractError):
                    raise
                raise ContractError(f"bad value for {key!r}: {raw!r}") from None
        return cls(**fields)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


# --------------------------------------------------------------------------
# tables


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def where(self, **match):
        idx = {k: self.columns.index(k) for k in match}
        return [dict(zip(self.columns, r)) for r in self.rows
                if all(r[i] == match[k] for k, i in idx.items())]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        # same digits as the CSV; non-finite values become strings
        f = float(_fmt(v))
        return f if np.isfinite(f) else _fmt(v)
    return v


def render(table, fmt):
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.columns)
        for r in table.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()
    if fmt == "json":
        rows = [{c: _json_value(v) for c, v in zip(table.columns, r)} for r in table.rows]
        return json.dumps({"columns": table.columns, "rows": rows}, indent=2) + "\n"
    raise ContractError("format must be csv or json")


def emit(table, fmt, path):
    """Write ``table`` as CSV or JSON; ``path="-"`` returns the text instead."""
    if not len(table):
        raise ContractError("refusing to emit an empty table")
    text = render(table, fmt)
    if path in (None, "-"):
        return text
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def _parse_cell(s):
    if s in ("true", "false"):
        return s == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return ResultTable(rows[0], [[_parse_cell(c) for c in r] for r in rows[1:]])


def read_json(text):
    d = json.loads(text)
    return ResultTable(d["columns"], [[r[c] for c in d["columns"]] for r in d["rows"]])


# --------------------------------------------------------------------------
# sweeps


def _scenario_for(cfg, value):
    n = int(value) if cfg.sweep_var == "N" else cfg.n
    a = value if cfg.sweep_var == "a" else cfg.a
    rx_x = value if cfg.sweep_var == "x" else cfg.rx_x
    kw = dict(c0_db=cfg.c0_db, pathloss_exponent=a, tx_power_w=cfg.p_t,
              rx=(rx_x, cfg.rx_y, 0.0))
    layout = cfg.scenario if cfg.scenario in ("localized", "distributed") else cfg.ris
    if layout == "localized":
        return localized_scenario(n, **kw)
    return distributed_scenario(n, **kw)


def _model_for(cfg, arch, scenario, value):
    if arch.kind.lossless:
        alpha = 0.0
    elif cfg.sweep_var == "alpha_db_per_m":
        alpha = value
    elif arch.alpha_db_per_m is not None:
        alpha = arch.alpha_db_per_m
    else:
        alpha = cfg.alpha_db_per_m
    return build_model(arch.kind, arch.family, scenario.ris_positions,
                       wavelength=cfg.wavelength, alpha_db_per_m=alpha, z0=cfg.z0)


_TRIAL_ERRORS = (OptimizationError, SingularityError, RealizabilityError)


def _run_trial(job):
    """Received power of every architecture (baseline first) on one draw."""
    cfg, value, trial = job
    scenario = _scenario_for(cfg, value)
    n_t = int(value) if cfg.sweep_var == "N_T" else cfg.n_t
    channels = draw_channels(scenario, FadingSpec(cfg.fading, cfg.seed), n_t=n_t,
                             n_r=cfg.n_r, trial=trial)
    opt = OptimizerConfig(restarts=cfg.restarts, rng_seed=cfg.seed)
    out = []
    for arch in (cfg.baseline, *cfg.architectures):
        try:
            model = _model_for(cfg, arch, scenario, value)
            out.append(optimize(channels, model, opt, p_t=cfg.p_t).p_r_watts)
        except _TRIAL_ERRORS as exc:
            log.warning("trial %d at %s=%g failed for %s: %s",
                        trial, cfg.sweep_var, value, arch.label, exc)
            out.append(np.nan)
    return out


def _worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        k = int(raw)
    except ValueError:
        raise ContractError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, k)


def _map_trials(jobs):
    workers = _worker_count()
    if workers == 1:
        return [_run_trial(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps submission order, so results line up with trial indices
        return list(pool.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_experiment(cfg):
    """Paired Monte Carlo sweep; one row per sweep value and architecture.

    Every architecture in a trial sees the same channel draw. ``gain_db`` is
    the mean of per-trial power ratios against the baseline, and
    ``stderr_db`` its standard error mapped to dB to first order. Failed
    optimizations drop that trial for that architecture; more than 10%
    failures aborts.
    """
    if cfg.scenario == "receiver-grid":
        raise ContractError("receiver-grid is a closed-form heatmap; use scaling_figures")
    table = ResultTable(list(SWEEP_COLUMNS))
    for value in cfg.values:
        jobs = [(cfg, value, t) for t in range(cfg.trials)]
        powers = np.array(_map_trials(jobs), dtype=float)  # trials x (1 + archs)
        base = powers[:, 0]
        base_fail = int(np.sum(~np.isfinite(base)))
        for j, arch in enumerate(cfg.architectures, start=1):
            p = powers[:, j]
            ok = np.isfinite(p) & np.isfinite(base)
            failures = int(cfg.trials - ok.sum())
            if failures > MAX_FAILURE_FRACTION * cfg.trials:
                raise ExperimentError(
                    f"{failures}/{cfg.trials} trials failed for {arch.label} at "
                    f"{cfg.sweep_var}={value:g} (baseline failures: {base_fail})"
                )
            ratio = p[ok] / base[ok]
            mean_ratio = float(np.mean(ratio))
            se = float(np.std(ratio, ddof=1) / np.sqrt(len(ratio))) if len(ratio) > 1 else float("nan")
            table.rows.append([
                cfg.sweep_var,
                float(value),
                arch.label,
                float(linear_to_db(np.mean(p[ok]))),
                float(linear_to_db(mean_ratio)),
                10.0 / np.log(10.0) * se / mean_ratio,
                int(ok.sum()),
                failures,
                int(cfg.seed),
            ])
    return table


# --------------------------------------------------------------------------
# closed-form figures


def _metric_db(metric, cfg, n, a, rx):
    kw = dict(c0_db=cfg.c0_db, pathloss_exponent=a, rx=rx)
    if metric == "loc":
        return float(linear_to_db(gain_loc(n)))
    dis = distributed_scenario(n, **kw)
    if metric == "dis":
        return float(linear_to_db(gain_dis(scaling_inputs(distributed=dis))))
    inp = scaling_inputs(localized=localized_scenario(n, **kw), distributed=dis)
    if metric == "sc":
        return float(linear_to_db(gain_sc(inp).exact))
    return float(linear_to_db(gain_fc(inp).exact))


def scaling_curves(cfg):
    """Closed-form gains against the path-loss exponent for each N."""
    table = ResultTable(list(CURVE_COLUMNS))
    rx = (cfg.rx_x, cfg.rx_y, 0.0)
    for metric in cfg.metrics:
        for n in cfg.n_values:
            for a in cfg.a_values:
                table.rows.append([metric, int(n), float(a), _metric_db(metric, cfg, int(n), a, rx)])
    return table


def _axis(lo, hi, step):
    k = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(k + 1)


def scaling_grid(cfg):
    """Closed-form gains over receiver positions ``(x, y, 0)``."""
    table = ResultTable(list(GRID_COLUMNS))
    xs = _axis(cfg.x_min, cfg.x_max, cfg.step)
    ys = _axis(cfg.y_min, cfg.y_max, cfg.step)
    metrics = [m for m in cfg.metrics if m != "loc"]
    for metric in metrics:
        for x in xs:
            for y in ys:
                table.rows.append([metric, float(x), float(y),
                                   _metric_db(metric, cfg, cfg.n, cfg.a, (x, y, 0.0))])
    return table


def scaling_figures(cfg):
    """``{"curves": ..., "grid": ...}`` tables of closed-form gains."""
    return {"curves": scaling_curves(cfg), "grid": scaling_grid(cfg)}


# --------------------------------------------------------------------------
# scaling-law validation through the channel generator


def validate_scaling(cfg, n_values=None):
    """Compare closed-form expected powers with sampled per-draw optima.

    Draws come from the production channel generator; the single-connected
    optimum co-phases every path and the fully-connected optimum is
    ``|h_R|^2 |h_T|^2``.
    """
    table = ResultTable(list(VALIDATE_COLUMNS))
    fading = FadingSpec(cfg.fading, cfg.seed)
    ns = [int(v) for v in (n_values or cfg.n_values)]
    for arch in Architecture:
        for n in ns:
            kw = dict(c0_db=cfg.c0_db, pathloss_exponent=cfg.a, rx=(cfg.rx_x, cfg.rx_y, 0.0))
            sc = localized_scenario(n, **kw) if arch.localized else distributed_scenario(n, **kw)
            trials = cfg.mc_trials
            samples = np.empty(trials)
            for t in range(trials):
                ch = draw_channels(sc, fading, trial=t)
                hr, ht = ch.h_r[0], ch.h_t[:, 0]
                if arch.fully_connected:
                    samples[t] = np.sum(np.abs(hr) ** 2) * np.sum(np.abs(ht) ** 2)
                else:
                    samples[t] = np.sum(np.abs(hr * ht)) ** 2
            inp = scaling_inputs(localized=sc) if arch.localized else scaling_inputs(distributed=sc)
            if cfg.fading is FadingKind.RAYLEIGH:
                target = expected_power(inp, arch)
            else:
                target = expected_power_los(inp, arch)
            mean = float(samples.mean())
            se = float(samples.std(ddof=1) / np.sqrt(trials))
            z = (mean - target) / se if se > 0 else 0.0
            table.rows.append([arch.value, cfg.fading.value, n, target, mean, se, z,
                               (mean - target) / target, trials, cfg.seed])
    return table
