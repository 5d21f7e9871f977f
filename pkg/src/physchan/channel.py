"""Multipath channels: paths, synthesis of the channel matrix, pSNR.

The path generator is a transparent clustered model used in place of a
full ray-based simulator. Cluster centers are drawn area-uniformly over an
angular sector, each path deviates from its cluster center by Gaussian
angle offsets (azimuth wrapped, elevation reflected at the poles), cluster
powers decay geometrically, per-path powers are exponentially distributed
inside a cluster and phases are uniform on [0, 2 pi).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from .errors import InvalidArgumentError, NoValidNoiseError
from .geometry import AntennaArray, Direction, Sector, steering_matrix, wrap_azimuth


@dataclass(frozen=True)
class Path:
    rho: float
    phi: float
    dod: Direction
    doa: Direction
    cluster: int = 0

    def __post_init__(self):
        if not self.rho >= 0:
            raise InvalidArgumentError("path gain must be nonnegative")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "phi", float(self.phi) % (2 * np.pi))

    @property
    def gain(self) -> complex:
        return self.rho * np.exp(1j * self.phi)

    def with_gain(self, c: complex) -> "Path":
        return Path(abs(c), np.angle(c), self.dod, self.doa, self.cluster)


def vec(H: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(H).ravel(order="F")


def unvec(h: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    return np.asarray(h).reshape((n_rows, n_cols), order="F")


@dataclass(frozen=True, eq=False)
class PhysicalChannel:
    paths: tuple
    tx_array: AntennaArray
    rx_array: AntennaArray
    H: np.ndarray = field(repr=False)

    @property
    def h(self) -> np.ndarray:
        return vec(self.H)

    @property
    def shape(self):
        return self.H.shape

    @property
    def frobenius_sq(self) -> float:
        return float(np.sum(np.abs(self.H) ** 2))


def _gains(paths) -> np.ndarray:
    return np.array([p.gain for p in paths], dtype=complex)


def synthesize_channel(paths, tx_array: AntennaArray, rx_array: AntennaArray) -> PhysicalChannel:
    """H = sum_i c_i e_r(doa_i) e_t(dod_i)^H."""
    paths = tuple(paths)
    if not paths:
        raise InvalidArgumentError("at least one path is required")
    E_t = steering_matrix(tx_array, [p.dod.azimuth for p in paths], [p.dod.elevation for p in paths])
    E_r = steering_matrix(rx_array, [p.doa.azimuth for p in paths], [p.doa.elevation for p in paths])
    H = (E_r * _gains(paths)) @ E_t.conj().T
    H.flags.writeable = False
    return PhysicalChannel(paths, tx_array, rx_array, H)


def psnr(channel: PhysicalChannel, energy: float, noise_power: float) -> float:
    """Potential SNR: energy * ||H||_F^2 / noise_power (linear)."""
    if not noise_power > 0:
        raise InvalidArgumentError("noise power must be positive")
    return energy * channel.frobenius_sq / noise_power


def psnr_db(channel: PhysicalChannel, energy: float, noise_power: float) -> float:
    return 10 * np.log10(psnr(channel, energy, noise_power))


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def solve_noise_for_psnr(channel: PhysicalChannel, energy: float, target_psnr: float) -> float:
    if not target_psnr > 0:
        raise InvalidArgumentError("target pSNR must be positive")
    signal = energy * channel.frobenius_sq
    if signal <= 0:
        raise NoValidNoiseError("zero channel: no noise power yields a positive pSNR")
    return signal / target_psnr


@dataclass(frozen=True)
class PathGenConfig:
    """Clustered path generator settings.

    ``cluster_angular_spread`` is the standard deviation (radians) of the
    per-path angle offsets around the cluster center. ``gain_decay`` is the
    power ratio between consecutive clusters, in (0, 1].
    """

    P_total: int
    cluster_count: int
    cluster_angular_spread: float
    gain_decay: float = 0.5
    rng_seed: int = 0
    dod_sector: Sector = field(default_factory=Sector)
    doa_sector: Sector = field(default_factory=Sector)
    gain_scale: float = 1.0

    def __post_init__(self):
        if not self.P_total >= self.cluster_count >= 1:
            raise InvalidArgumentError("need P_total >= cluster_count >= 1")
        if not self.cluster_angular_spread > 0:
            raise InvalidArgumentError("cluster angular spread must be positive")
        if not 0 < self.gain_decay <= 1:
            raise InvalidArgumentError("gain_decay must lie in (0, 1]")
        if not self.gain_scale > 0:
            raise InvalidArgumentError("gain_scale must be positive")


def _reflect_elevation(az, el):
    # folding past a pole flips the azimuth by pi
    over = el > np.pi / 2
    under = el < -np.pi / 2
    el = np.where(over, np.pi - el, np.where(under, -np.pi - el, el))
    az = np.where(over | under, az + np.pi, az)
    return wrap_azimuth(az), el


def _offset_directions(rng, center_az, center_el, sizes, spread):
    az = np.repeat(center_az, sizes) + rng.normal(0.0, spread, sizes.sum())
    el = np.repeat(center_el, sizes) + rng.normal(0.0, spread, sizes.sum())
    return _reflect_elevation(az, el)


def generate_paths(cfg: PathGenConfig) -> list[Path]:
    rng = np.random.default_rng(cfg.rng_seed)
    C = cfg.cluster_count
    sizes = np.array([len(chunk) for chunk in np.array_split(np.arange(cfg.P_total), C)])
    dod_c = cfg.dod_sector.sample(rng, C)
    doa_c = cfg.doa_sector.sample(rng, C)
    dod_az, dod_el = _offset_directions(rng, *dod_c, sizes, cfg.cluster_angular_spread)
    doa_az, doa_el = _offset_directions(rng, *doa_c, sizes, cfg.cluster_angular_spread)

    cluster_of = np.repeat(np.arange(C), sizes)
    cluster_power = cfg.gain_decay ** np.arange(C)
    share = rng.exponential(1.0, cfg.P_total)
    for k in range(C):
        members = cluster_of == k
        share[members] /= share[members].sum()
    power = cluster_power[cluster_of] * share
    phases = rng.uniform(0.0, 2 * np.pi, cfg.P_total)
    rho = cfg.gain_scale * np.sqrt(power / cluster_power.sum())

    return [
        Path(rho[i], phases[i], Direction(dod_az[i], dod_el[i]), Direction(doa_az[i], doa_el[i]), int(cluster_of[i]))
        for i in range(cfg.P_total)
    ]


def uniform_paths(count: int, sector: Sector, rng: np.random.Generator, gain: float = 1.0) -> list[Path]:
    """Equal-gain paths with area-uniform departure directions (arrival at broadside)."""
    az, el = sector.sample(rng, count)
    phases = rng.uniform(0.0, 2 * np.pi, count)
    doa = Direction(0.0, 0.0)
    return [Path(gain, phases[i], Direction(az[i], el[i]), doa) for i in range(count)]


# JSON-lines path files: one object per line with the keys below, angles in radians.
PATH_FIELDS = ("rho", "phi", "dod_az", "dod_el", "doa_az", "doa_el")


def path_to_record(p: Path) -> dict:
    return {
        "rho": p.rho,
        "phi": p.phi,
        "dod_az": p.dod.azimuth,
        "dod_el": p.dod.elevation,
        "doa_az": p.doa.azimuth,
        "doa_el": p.doa.elevation,
    }


def path_from_record(rec: dict) -> Path:
    missing = [k for k in PATH_FIELDS if k not in rec]
    if missing:
        raise InvalidArgumentError(f"path record missing fields: {missing}")
    return Path(
        rec["rho"], rec["phi"],
        Direction(rec["dod_az"], rec["dod_el"]),
        Direction(rec["doa_az"], rec["doa_el"]),
    )


def write_paths_jsonl(paths, target) -> None:
    with open(target, "w") as fh:
        for p in paths:
            fh.write(json.dumps(path_to_record(p)) + "\n")


def read_paths_jsonl(source) -> list[Path]:
    text = FilePath(source).read_text()
    return [path_from_record(json.loads(line)) for line in text.splitlines() if line.strip()]
