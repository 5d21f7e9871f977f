"""Seeded Monte-Carlo experiments producing bias/variance tradeoff tables.

Every random quantity is drawn from a stream keyed by (seed, purpose,
realization[, pSNR]) so that a cell's value does not depend on which other
cells are computed alongside it, nor on the order jobs finish in.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import analysis
from .channel import PathGenConfig, db_to_linear, generate_paths, solve_noise_for_psnr, synthesize_channel
from .errors import InvalidArgumentError, OutOfValidityError
from .estimation import (
    GridSpec,
    build_dictionary,
    ls_estimate,
    omp_path,
    oracle_variance,
    projection_bias_curve,
)
from .geometry import Sector, make_upa, wavelength_for
from .observation import build_ls_optimal, observe

CSV_COLUMNS = ("estimator", "p", "psnr_db", "rmse", "bias", "variance", "rel_capacity", "realizations", "trials")

ESTIMATORS = ("oracle", "omp", "ls", "ls-opt", "lmmse-opt")

_STREAM_PATHS = 1
_STREAM_NOISE = 2


def _parse_list(value, cast=float):
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    out = []
    for part in str(value).split(","):
        part = part.strip()
        if not part:
            continue
        if cast is int and "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(cast(part))
    return out


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"not a boolean: {value!r}")


def _parse_optional_float(value):
    if value is None or str(value).strip().lower() in ("", "auto", "none"):
        return None
    return float(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Scenario and protocol. Config keys are ``section.field`` (see KEYS)."""

    # scenario
    frequency_hz: float = 28e9
    distance_m: float = 30.0
    tx_rows: int = 8
    tx_cols: int = 8
    spacing_wavelengths: float = 0.5
    # generator
    paths_min: int = 50
    paths_max: int = 100
    clusters: int = 5
    cluster_spread_deg: float = 3.0
    gain_decay: float = 0.5
    az_min_deg: float = -60.0
    az_max_deg: float = 60.0
    el_min_deg: float = 0.0
    el_max_deg: float = 60.0
    # dictionary
    grid_step_deg: float | None = None
    grid_coherence: float = 0.97
    # experiment
    estimators: tuple = ("oracle", "omp")
    p_values: tuple = tuple(range(1, 33))
    psnr_db: tuple = (0.0, 10.0, 20.0, 30.0)
    n_t_values: tuple = (64,)
    unevenness: float = 2.0
    trials: int = 200
    realizations: int = 20
    seed: int = 0
    workers: int = 1
    # output
    out: str = "results.csv"
    svg: bool = False

    def __post_init__(self):
        if not self.p_values:
            raise InvalidArgumentError("p-range must be nonempty")
        if min(self.p_values) < 1:
            raise InvalidArgumentError("p values must be >= 1")
        if self.trials < 1 or self.realizations < 1:
            raise InvalidArgumentError("trials and realizations must be >= 1")
        if not self.psnr_db:
            raise InvalidArgumentError("pSNR list must be nonempty")
        if not self.n_t_values:
            raise InvalidArgumentError("N_t list must be nonempty")
        if not 1 <= self.paths_min <= self.paths_max:
            raise InvalidArgumentError("need 1 <= paths_min <= paths_max")
        if self.clusters > self.paths_min:
            raise InvalidArgumentError("clusters cannot exceed paths_min")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise InvalidArgumentError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        for n_t in self.n_t_values:
            if n_t != self.tx_rows * self.tx_cols and math.isqrt(n_t) ** 2 != n_t:
                raise InvalidArgumentError(f"N_t = {n_t} is not a square (square UPA required)")

    @property
    def sector(self) -> Sector:
        return Sector.from_degrees(self.az_min_deg, self.az_max_deg, self.el_min_deg, self.el_max_deg)

    @property
    def wavelength(self) -> float:
        return wavelength_for(self.frequency_hz)

    @property
    def p_max(self) -> int:
        return max(self.p_values)


# section.key -> (field name, parser)
KEYS = {
    "scenario.frequency_hz": ("frequency_hz", float),
    "scenario.distance_m": ("distance_m", float),
    "scenario.tx_rows": ("tx_rows", int),
    "scenario.tx_cols": ("tx_cols", int),
    "scenario.spacing_wavelengths": ("spacing_wavelengths", float),
    "generator.paths_min": ("paths_min", int),
    "generator.paths_max": ("paths_max", int),
    "generator.clusters": ("clusters", int),
    "generator.cluster_spread_deg": ("cluster_spread_deg", float),
    "generator.gain_decay": ("gain_decay", float),
    "generator.az_min_deg": ("az_min_deg", float),
    "generator.az_max_deg": ("az_max_deg", float),
    "generator.el_min_deg": ("el_min_deg", float),
    "generator.el_max_deg": ("el_max_deg", float),
    "dictionary.grid_step_deg": ("grid_step_deg", _parse_optional_float),
    "dictionary.coherence": ("grid_coherence", float),
    "experiment.estimators": ("estimators", lambda v: tuple(_parse_list(v, str))),
    "experiment.p": ("p_values", lambda v: tuple(_parse_list(v, int))),
    "experiment.psnr_db": ("psnr_db", lambda v: tuple(_parse_list(v, float))),
    "experiment.n_t": ("n_t_values", lambda v: tuple(_parse_list(v, int))),
    "experiment.unevenness": ("unevenness", float),
    "experiment.trials": ("trials", int),
    "experiment.realizations": ("realizations", int),
    "experiment.seed": ("seed", int),
    "experiment.workers": ("workers", int),
    "output.out": ("out", str),
    "output.svg": ("svg", _parse_bool),
}


def config_from_mapping(mapping: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply dotted ``section.key`` overrides on top of ``base``."""
    updates = {}
    for key, raw in mapping.items():
        if key not in KEYS:
            raise InvalidArgumentError(f"unknown config key {key!r}")
        name, parse = KEYS[key]
        try:
            updates[name] = parse(raw)
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"bad value for {key}: {raw!r}") from exc
    return replace(base or ExperimentConfig(), **updates)


def read_config_file(path) -> dict:
    """Flat ``section.key -> raw string`` mapping from an INI-style file."""
    parser = configparser.ConfigParser(interpolation=None)
    with open(path) as fh:
        parser.read_file(fh)
    return {f"{section}.{key}": value for section in parser.sections() for key, value in parser[section].items()}


def load_config(path=None, overrides: dict | None = None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    mapping = read_config_file(path) if path else {}
    mapping.update(overrides or {})
    return config_from_mapping(mapping, base)


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for key, (name, _) in KEYS.items():
        section, option = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        parser[section][option] = "auto" if value is None else str(value)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


@dataclass(frozen=True)
class TradeoffRecord:
    estimator: str
    p: int
    psnr_db: float
    rmse: float
    bias: float
    variance: float
    rel_capacity: float
    realizations: int
    trials: int

    def check(self, tol: float = 1e-9) -> None:
        if abs(self.rmse - (self.bias + self.variance)) > tol * max(1.0, abs(self.rmse)):
            raise AssertionError(f"rmse != bias + variance in {self}")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _psnr_key(psnr_db: float) -> int:
    # pSNR enters the noise stream key in milli-dB, offset to stay nonnegative
    return int(round(psnr_db * 1000)) + 10 ** 6


def realization_paths(cfg: ExperimentConfig, realization: int):
    rng = _rng(cfg.seed, _STREAM_PATHS, realization)
    P = int(rng.integers(cfg.paths_min, cfg.paths_max + 1))
    gen = PathGenConfig(
        P_total=P,
        cluster_count=cfg.clusters,
        cluster_angular_spread=np.deg2rad(cfg.cluster_spread_deg),
        gain_decay=cfg.gain_decay,
        rng_seed=int(rng.integers(2 ** 63)),
        dod_sector=cfg.sector,
        doa_sector=cfg.sector,
        gain_scale=cfg.wavelength / (4 * np.pi * cfg.distance_m),
    )
    return generate_paths(gen)


def _arrays(cfg: ExperimentConfig, n_t: int):
    lam = cfg.wavelength
    if n_t == cfg.tx_rows * cfg.tx_cols:
        rows, cols = cfg.tx_rows, cfg.tx_cols
    else:
        rows = cols = math.isqrt(n_t)
    return make_upa(rows, cols, cfg.spacing_wavelengths * lam, lam), make_upa(1, 1, cfg.spacing_wavelengths * lam, lam)


@lru_cache(maxsize=8)
def _dictionary(cfg: ExperimentConfig, n_t: int):
    tx, rx = _arrays(cfg, n_t)
    step = None if cfg.grid_step_deg is None else np.deg2rad(cfg.grid_step_deg)
    return build_dictionary(tx, rx, GridSpec(cfg.sector, step, cfg.grid_coherence))


@dataclass
class CellStats:
    """Per-realization (rmse, bias, variance) for one estimator, indexed [pSNR, p]."""

    rmse: np.ndarray
    bias: np.ndarray
    variance: np.ndarray


def _realization_job(args):
    cfg, n_t, realization, estimators = args
    return _run_realization(cfg, n_t, realization, estimators)


def _run_realization(cfg: ExperimentConfig, n_t: int, realization: int, estimators) -> dict:
    tx, rx = _arrays(cfg, n_t)
    channel = synthesize_channel(realization_paths(cfg, realization), tx, rx)
    h = channel.h
    energy = 1.0
    p_values = np.array(cfg.p_values)
    shape = (len(cfg.psnr_db), len(p_values))
    out = {}

    if "oracle" in estimators:
        D = _dictionary(cfg, n_t)
        bias_curve = projection_bias_curve(D, h, cfg.p_max)
        bias = np.broadcast_to(bias_curve[p_values - 1], shape).copy()
        var = np.array([[oracle_variance(p, s, True) for p in p_values] for s in db_to_linear(cfg.psnr_db)])
        out["oracle"] = CellStats(bias + var, bias, var)

    empirical = [e for e in estimators if e in ("omp", "ls")]
    if empirical:
        n_s = tx.count
        base = build_ls_optimal(tx.count, rx.count, n_s, rx.count, energy)
        stats = {e: CellStats(*(np.zeros(shape) for _ in range(3))) for e in empirical}
        if "omp" in empirical:
            D = _dictionary(cfg, n_t)
            sensed = base.M @ D.atoms
        for i, snr_db in enumerate(cfg.psnr_db):
            sigma2 = solve_noise_for_psnr(channel, energy, float(db_to_linear(snr_db)))
            setup = base.with_noise(sigma2)
            rng = _rng(cfg.seed, _STREAM_NOISE, realization, _psnr_key(snr_db))
            omp_est = np.zeros((cfg.trials, cfg.p_max, h.size), dtype=complex)
            ls_est = np.zeros((cfg.trials, h.size), dtype=complex)
            for t in range(cfg.trials):
                y = observe(setup, h, rng)
                if "omp" in empirical:
                    for j, est in enumerate(omp_path(D, y, cfg.p_max, sensed=sensed)):
                        omp_est[t, j] = est.h_hat
                if "ls" in empirical:
                    ls_est[t] = ls_estimate(setup, y)
            if "omp" in empirical:
                for j, p in enumerate(p_values):
                    r, b, v = analysis.moments(h, omp_est[:, p - 1])
                    stats["omp"].rmse[i, j], stats["omp"].bias[i, j], stats["omp"].variance[i, j] = r, b, v
            if "ls" in empirical:
                r, b, v = analysis.moments(h, ls_est)
                stats["ls"].rmse[i], stats["ls"].bias[i], stats["ls"].variance[i] = r, b, v
        out.update(stats)
    return out


def _closed_form_rows(cfg: ExperimentConfig, estimator: str, label: str, n_t: int):
    rows = []
    n_r = n_c = 1
    for snr_db in cfg.psnr_db:
        s = float(db_to_linear(snr_db))
        if estimator == "ls-opt":
            rmse = analysis.ls_opt_rmse(n_r, n_t, n_c, n_t, s)
            bias, var = 0.0, rmse
        else:
            size = n_r * n_t
            rmse = analysis.lmmse_opt_rmse_from_unevenness(cfg.unevenness, size, n_c, n_t, s)
            bias, var = analysis.lmmse_opt_split(cfg.unevenness, size, n_c, n_t, s)
        for p in cfg.p_values:
            rows.append(_record(label, p, snr_db, rmse, bias, var, 0, 0))
    return rows


def _rel_capacity(rmse: float, psnr_db: float) -> float:
    try:
        return analysis.relative_capacity_bound(rmse, float(db_to_linear(psnr_db)))
    except OutOfValidityError:
        return float("nan")


def _record(label, p, snr_db, rmse, bias, var, realizations, trials) -> TradeoffRecord:
    return TradeoffRecord(label, int(p), float(snr_db), float(rmse), float(bias), float(var),
                          _rel_capacity(float(rmse), snr_db), realizations, trials)


def _map(cfg: ExperimentConfig, jobs):
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_realization_job, jobs))
    return [_realization_job(j) for j in jobs]


def run_cells(cfg: ExperimentConfig, estimators=None, n_t_values=None, label_nt: bool | None = None):
    """Cartesian product estimator x N_t x p x pSNR, averaged over realizations."""
    estimators = tuple(cfg.estimators if estimators is None else estimators)
    if not estimators:
        raise InvalidArgumentError("estimator list is empty")
    n_t_values = tuple(cfg.n_t_values if n_t_values is None else n_t_values)
    if label_nt is None:
        label_nt = len(n_t_values) > 1
    simulated = [e for e in estimators if e in ("oracle", "omp", "ls")]
    records = []
    for n_t in n_t_values:
        per_real = []
        if simulated:
            jobs = [(cfg, n_t, r, tuple(simulated)) for r in range(cfg.realizations)]
            per_real = _map(cfg, jobs)
        for est in estimators:
            label = f"{est}[nt={n_t}]" if label_nt else est
            if est in ("ls-opt", "lmmse-opt"):
                records.extend(_closed_form_rows(cfg, est, label, n_t))
                continue
            rmse = np.mean([s[est].rmse for s in per_real], axis=0)
            bias = np.mean([s[est].bias for s in per_real], axis=0)
            var = np.mean([s[est].variance for s in per_real], axis=0)
            trials = 0 if est == "oracle" else cfg.trials
            for i, snr_db in enumerate(cfg.psnr_db):
                for j, p in enumerate(cfg.p_values):
                    records.append(_record(label, p, snr_db, rmse[i, j], bias[i, j], var[i, j],
                                           cfg.realizations, trials))
    return sort_records(records)


def sort_records(records):
    return sorted(records, key=lambda r: (r.estimator, r.psnr_db, r.p))


def run_fig1(cfg: ExperimentConfig):
    """Oracle (analytic variance + projection bias) against noisy OMP, single-antenna receiver."""
    return run_cells(cfg, ("oracle", "omp"), (cfg.tx_rows * cfg.tx_cols,), label_nt=False)


def run_fig2(cfg: ExperimentConfig):
    """Oracle against the optimal LMMSE closed form for several array sizes."""
    n_t_values = cfg.n_t_values if len(cfg.n_t_values) > 1 else (16, 64, 256)
    return run_cells(cfg, ("oracle", "lmmse-opt"), n_t_values, label_nt=True)


def run_fig3(cfg: ExperimentConfig):
    """Relative capacity guaranteed by the oracle rMSE."""
    return run_cells(cfg, ("oracle",), (cfg.tx_rows * cfg.tx_cols,), label_nt=False)


def run_sweep(cfg: ExperimentConfig):
    return run_cells(cfg)


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(TradeoffRecord(
            row["estimator"], int(row["p"]), float(row["psnr_db"]), float(row["rmse"]), float(row["bias"]),
            float(row["variance"]), float(row["rel_capacity"]), int(row["realizations"]), int(row["trials"]),
        ))
    return out


def optimal_p(records, estimator: str, psnr_db: float, key: str = "rmse") -> int:
    """p minimizing rmse (or maximizing rel_capacity) for one curve; ties go to the smaller p."""
    rows = [r for r in records if r.estimator == estimator and r.psnr_db == psnr_db]
    if not rows:
        raise InvalidArgumentError(f"no rows for {estimator} at {psnr_db} dB")
    if key == "rel_capacity":
        return min(rows, key=lambda r: (-np.nan_to_num(r.rel_capacity, nan=-np.inf), r.p)).p
    return min(rows, key=lambda r: (getattr(r, key), r.p)).p
