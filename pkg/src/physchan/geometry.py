"""Antenna-array geometry and steering vectors.

Conventions (fixed so that phases are reproducible bit for bit):

* a direction is stored as (azimuth, elevation) in radians and maps to the
  unit vector ``(cos(el) cos(az), cos(el) sin(az), sin(el))``;
* a uniform linear array lies along the first coordinate axis;
* a uniform planar array lies in the plane of the first two axes;
* positions are in meters, measured from the array centroid, and the
  wavelength is carried alongside since every formula uses ``a / wavelength``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

SPEED_OF_LIGHT = 299_792_458.0


def wavelength_for(frequency_hz: float) -> float:
    if frequency_hz <= 0:
        raise InvalidArgumentError("frequency must be positive")
    return SPEED_OF_LIGHT / frequency_hz


def unit_vectors(azimuth, elevation) -> np.ndarray:
    """Unit vectors for arrays of angles, stacked along the last axis."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    cos_el = np.cos(el)
    return np.stack([cos_el * np.cos(az), cos_el * np.sin(az), np.sin(el)], axis=-1)


def wrap_azimuth(azimuth):
    """Map azimuth into [-pi, pi); in-range values are returned unchanged."""
    az = np.asarray(azimuth, dtype=float)
    inside = (az >= -np.pi) & (az < np.pi)
    wrapped = (az + np.pi) % (2 * np.pi) - np.pi
    wrapped = np.where(wrapped >= np.pi, wrapped - 2 * np.pi, wrapped)
    return np.where(inside, az, wrapped)


@dataclass(frozen=True)
class Direction:
    """A propagation direction; azimuth is wrapped into [-pi, pi) on construction."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        az, el = float(self.azimuth), float(self.elevation)
        if not (np.isfinite(az) and np.isfinite(el)):
            raise InvalidArgumentError("direction angles must be finite")
        if not -np.pi / 2 <= el <= np.pi / 2:
            raise InvalidArgumentError(f"elevation {el} outside [-pi/2, pi/2]")
        object.__setattr__(self, "azimuth", float(wrap_azimuth(az)))
        object.__setattr__(self, "elevation", el)

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float) -> "Direction":
        return cls(np.deg2rad(azimuth_deg), np.deg2rad(elevation_deg))

    @classmethod
    def from_vector(cls, u) -> "Direction":
        u = np.asarray(u, dtype=float)
        norm = np.linalg.norm(u)
        if norm == 0:
            raise InvalidArgumentError("cannot take the direction of a zero vector")
        u = u / norm
        return cls(np.arctan2(u[1], u[0]), np.arcsin(np.clip(u[2], -1.0, 1.0)))

    @property
    def vector(self) -> np.ndarray:
        return unit_vectors(self.azimuth, self.elevation)

    def degrees(self) -> tuple[float, float]:
        return float(np.rad2deg(self.azimuth)), float(np.rad2deg(self.elevation))


@dataclass(frozen=True, eq=False)
class AntennaArray:
    """Isotropic antenna positions, re-centered on the centroid at construction."""

    positions: np.ndarray
    wavelength: float
    count: int = field(init=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(1, -1)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise InvalidArgumentError("positions must be a nonempty (N, 3) array")
        if not self.wavelength > 0:
            raise InvalidArgumentError("wavelength must be positive")
        pos = pos - pos.mean(axis=0)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "wavelength", float(self.wavelength))
        object.__setattr__(self, "count", pos.shape[0])

    @property
    def normalized_positions(self) -> np.ndarray:
        """Positions in wavelengths."""
        return self.positions / self.wavelength

    def __repr__(self):
        return f"AntennaArray(count={self.count}, wavelength={self.wavelength:g})"


def make_ula(count: int, spacing: float, wavelength: float) -> AntennaArray:
    if count < 1 or spacing <= 0 or wavelength <= 0:
        raise InvalidArgumentError("ULA needs count >= 1, spacing > 0, wavelength > 0")
    pos = np.zeros((count, 3))
    pos[:, 0] = np.arange(count) * spacing
    return AntennaArray(pos, wavelength)


def make_upa(rows: int, cols: int, spacing: float, wavelength: float) -> AntennaArray:
    """Rectangular grid in the (x, y) plane, row index along x."""
    if rows < 1 or cols < 1 or spacing <= 0 or wavelength <= 0:
        raise InvalidArgumentError("UPA needs rows, cols >= 1, spacing > 0, wavelength > 0")
    ix, iy = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pos = np.zeros((rows * cols, 3))
    pos[:, 0] = ix.ravel() * spacing
    pos[:, 1] = iy.ravel() * spacing
    return AntennaArray(pos, wavelength)


def steering_matrix(array: AntennaArray, azimuth, elevation) -> np.ndarray:
    """Steering vectors for many directions, one per column (N x K)."""
    u = unit_vectors(np.atleast_1d(azimuth), np.atleast_1d(elevation))
    phase = -2j * np.pi * (array.normalized_positions @ u.T)
    return np.exp(phase) / np.sqrt(array.count)


def steering_vector(array: AntennaArray, direction: Direction) -> np.ndarray:
    return steering_matrix(array, direction.azimuth, direction.elevation)[:, 0]


def steering_derivatives(array: AntennaArray, direction: Direction):
    """Partial derivatives of the steering vector w.r.t. azimuth and elevation.

    Returns:
        (d_azimuth, d_elevation), each a complex vector of length N.
    """
    az, el = direction.azimuth, direction.elevation
    du_daz = np.array([-np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), 0.0])
    du_del = np.array([-np.sin(el) * np.cos(az), -np.sin(el) * np.sin(az), np.cos(el)])
    e = steering_vector(array, direction)
    k = -2j * np.pi * array.normalized_positions
    return (k @ du_daz) * e, (k @ du_del) * e


def kappa(array: AntennaArray) -> float:
    """Root-mean-square antenna radius in wavelengths (angular sensitivity)."""
    r2 = np.sum(array.normalized_positions ** 2, axis=1)
    return float(np.sqrt(r2.mean()))


@dataclass(frozen=True)
class Sector:
    """Azimuth x elevation box on the sphere, angles in radians."""

    az_min: float = -np.pi / 3
    az_max: float = np.pi / 3
    el_min: float = 0.0
    el_max: float = np.pi / 3

    def __post_init__(self):
        if not (self.az_max > self.az_min and self.el_max > self.el_min):
            raise InvalidArgumentError("empty angular sector")
        if self.el_min < -np.pi / 2 or self.el_max > np.pi / 2:
            raise InvalidArgumentError("sector elevation outside [-pi/2, pi/2]")

    @classmethod
    def from_degrees(cls, az_min, az_max, el_min, el_max) -> "Sector":
        return cls(*np.deg2rad([az_min, az_max, el_min, el_max]))

    def sample(self, rng: np.random.Generator, size: int):
        """Area-uniform (azimuth, elevation) samples."""
        az = rng.uniform(self.az_min, self.az_max, size)
        s = rng.uniform(np.sin(self.el_min), np.sin(self.el_max), size)
        return az, np.arcsin(s)

    def fibonacci(self, count: int):
        """Deterministic, roughly even spread of ``count`` points (azimuth, elevation)."""
        golden = (np.sqrt(5.0) - 1.0) / 2.0
        i = np.arange(count)
        frac_s = (i + 0.5) / count
        frac_az = (i * golden + 0.5) % 1.0
        s_lo, s_hi = np.sin(self.el_min), np.sin(self.el_max)
        el = np.arcsin(s_lo + frac_s * (s_hi - s_lo))
        az = self.az_min + frac_az * (self.az_max - self.az_min)
        return az, el
