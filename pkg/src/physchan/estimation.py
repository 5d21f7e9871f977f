"""Channel estimators: least squares, LMMSE, and the sparse physical-model
estimator built on orthogonal matching pursuit over a steering dictionary."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, RankDeficientError, SingularSystemError
from .geometry import AntennaArray, Direction, Sector, steering_matrix

MAX_CONDITION = 1e12


def ls_estimate(setup, y) -> np.ndarray:
    """(M^H M)^-1 M^H y through the SVD of M; ``y`` may hold one trial per column."""
    U, s, Vh = np.linalg.svd(setup.M, full_matrices=False)
    if s.size < setup.M.shape[1] or s[-1] == 0 or (s[0] / s[-1]) ** 2 > MAX_CONDITION:
        raise RankDeficientError("M^H M is singular or ill-conditioned (is N_s < N_t?)")
    y = np.asarray(y)
    coef = U.conj().T @ y
    coef = coef / (s if coef.ndim == 1 else s[:, None])
    return Vh.conj().T @ coef


def lmmse_estimate(setup, R, y) -> np.ndarray:
    """R M^H (M R M^H + sigma^2 Id)^-1 y."""
    M = setup.M
    R = np.asarray(R)
    RMh = R @ M.conj().T
    S = M @ RMh + setup.noise_power * np.eye(M.shape[0])
    try:
        factor = scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        if setup.noise_power > 0:
            raise
        raise SingularSystemError("M R M^H is singular and the noise power is zero") from None
    return RMh @ scipy.linalg.cho_solve(factor, np.asarray(y))


# --- steering dictionary -------------------------------------------------

def grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def adjacent_coherence(array: AntennaArray, sector: Sector, step: float, probes: int = 5) -> float:
    """Smallest |e(a)^H e(b)| between grid neighbours, probed across the sector."""
    az = np.linspace(sector.az_min, sector.az_max - step, probes)
    el = np.linspace(sector.el_min, sector.el_max - step, probes)
    A, E = [g.ravel() for g in np.meshgrid(az, el)]
    base = steering_matrix(array, A, E)
    worst = 1.0
    for shifted in (steering_matrix(array, A + step, E), steering_matrix(array, A, E + step)):
        worst = min(worst, float(np.abs(np.sum(base.conj() * shifted, axis=0)).min()))
    return worst


def coherent_grid_step(array: AntennaArray, sector: Sector, target: float = 0.97) -> float:
    """Coarsest step (from a fixed ladder) whose neighbouring atoms keep coherence >= target."""
    for deg in (5.0, 4.0, 3.0, 2.5, 2.0, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25):
        step = np.deg2rad(deg)
        if adjacent_coherence(array, sector, step) >= target:
            return step
    return np.deg2rad(0.25)


@dataclass(frozen=True)
class GridSpec:
    """Uniform azimuth x elevation grid; ``step`` None picks a coherent step."""

    sector: Sector = field(default_factory=Sector)
    step: float | None = None
    target_coherence: float = 0.97

    def directions(self, array: AntennaArray) -> list[Direction]:
        if array.count == 1:
            return [Direction(0.0, 0.0)]
        step = self.step if self.step is not None else coherent_grid_step(array, self.sector, self.target_coherence)
        if not step > 0:
            raise InvalidArgumentError("grid step must be positive")
        az = grid_axis(self.sector.az_min, self.sector.az_max, step)
        el = grid_axis(self.sector.el_min, self.sector.el_max, step)
        return [Direction(a, e) for e in el for a in az]


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Atoms conj(e_t(v_t)) kron e_r(v_r); atom k pairs tx_grid[k // G_r] with rx_grid[k % G_r]."""

    tx_grid: tuple
    rx_grid: tuple
    tx_array: AntennaArray
    rx_array: AntennaArray
    atoms: np.ndarray = field(repr=False)

    def __len__(self):
        return self.atoms.shape[1]

    def directions(self, index: int):
        g_r = len(self.rx_grid)
        return self.tx_grid[index // g_r], self.rx_grid[index % g_r]

    def with_extra(self, pairs) -> "Dictionary":
        """Dictionary restricted to, or prepended with, explicit direction pairs
        (one atom per pair rather than a Cartesian product)."""
        extra = _pair_atoms(self.tx_array, self.rx_array, pairs)
        return _PairDictionary(self.tx_grid, self.rx_grid, self.tx_array, self.rx_array,
                               np.column_stack([extra, self.atoms]), list(pairs))


class _PairDictionary(Dictionary):
    def __init__(self, tx_grid, rx_grid, tx_array, rx_array, atoms, pairs):
        super().__init__(tx_grid, rx_grid, tx_array, rx_array, atoms)
        object.__setattr__(self, "_pairs", pairs)

    def directions(self, index: int):
        if index < len(self._pairs):
            return self._pairs[index]
        return Dictionary.directions(self, index - len(self._pairs))


def _pair_atoms(tx_array, rx_array, pairs) -> np.ndarray:
    pairs = list(pairs)
    E_t = steering_matrix(tx_array, [d.azimuth for d, _ in pairs], [d.elevation for d, _ in pairs])
    E_r = steering_matrix(rx_array, [a.azimuth for _, a in pairs], [a.elevation for _, a in pairs])
    # column k is kron(conj(E_t[:, k]), E_r[:, k])
    return (E_t.conj()[:, None, :] * E_r[None, :, :]).reshape(-1, len(pairs))


def pair_dictionary(tx_array: AntennaArray, rx_array: AntennaArray, pairs) -> Dictionary:
    """Dictionary holding exactly one atom per (departure, arrival) pair."""
    pairs = list(pairs)
    return _PairDictionary((), (), tx_array, rx_array, _pair_atoms(tx_array, rx_array, pairs), pairs)


def build_dictionary(tx_array: AntennaArray, rx_array: AntennaArray,
                     tx_grid: GridSpec | None = None, rx_grid: GridSpec | None = None) -> Dictionary:
    tx_dirs = (tx_grid or GridSpec()).directions(tx_array)
    rx_dirs = (rx_grid or GridSpec()).directions(rx_array)
    E_t = steering_matrix(tx_array, [d.azimuth for d in tx_dirs], [d.elevation for d in tx_dirs])
    E_r = steering_matrix(rx_array, [d.azimuth for d in rx_dirs], [d.elevation for d in rx_dirs])
    atoms = np.einsum("ta,rb->trab", E_t.conj(), E_r).reshape(tx_array.count * rx_array.count, -1)
    atoms.flags.writeable = False
    return Dictionary(tuple(tx_dirs), tuple(rx_dirs), tx_array, rx_array, atoms)


# --- orthogonal matching pursuit -----------------------------------------

@dataclass
class SparseEstimate:
    indices: list
    directions: list
    coefficients: np.ndarray
    h_hat: np.ndarray
    residual_norm: float
    residual_history: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.indices)

    def to_json(self) -> str:
        return json.dumps({
            "p": self.p,
            "residual_norm": self.residual_norm,
            "paths": [
                {
                    "dod_deg": list(dod.degrees()),
                    "doa_deg": list(doa.degrees()),
                    "coefficient": [float(c.real), float(c.imag)],
                }
                for (dod, doa), c in zip(self.directions, self.coefficients)
            ],
        })


class _OMPState:
    """Incremental Gram-Schmidt factorization of the selected sensed atoms."""

    def __init__(self, sensed: np.ndarray, y: np.ndarray):
        self.sensed = sensed
        norms = np.linalg.norm(sensed, axis=0)
        self.inv_norms = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        self.y = y
        self.residual = y.copy()
        self.Q = np.zeros((sensed.shape[0], 0), dtype=complex)
        self.R = np.zeros((0, 0), dtype=complex)
        self.qy = np.zeros(0, dtype=complex)
        self.support: list[int] = []
        self.available = np.ones(sensed.shape[1], dtype=bool)

    def step(self) -> None:
        score = np.abs(self.residual.conj() @ self.sensed) * self.inv_norms
        score[~self.available] = -1.0
        k = int(np.argmax(score))  # lowest index wins ties
        a = self.sensed[:, k]
        r_col = self.Q.conj().T @ a
        v = a - self.Q @ r_col
        r2 = self.Q.conj().T @ v  # second pass keeps Q orthonormal
        v = v - self.Q @ r2
        r_col = r_col + r2
        nv = np.linalg.norm(v)
        self.available[k] = False
        if nv <= 1e-12 * max(np.linalg.norm(a), 1e-300):
            # atom already in the span: selection changes nothing
            self.support.append(k)
            self.R = np.block([[self.R, r_col[:, None]], [np.zeros((1, self.R.shape[1])), np.zeros((1, 1))]])
            self.Q = np.column_stack([self.Q, np.zeros(a.shape[0])])
            self.qy = np.append(self.qy, 0.0)
            return
        q = v / nv
        self.support.append(k)
        n = self.R.shape[0]
        R = np.zeros((n + 1, n + 1), dtype=complex)
        R[:n, :n] = self.R
        R[:n, n] = r_col
        R[n, n] = nv
        self.R = R
        self.Q = np.column_stack([self.Q, q])
        qy = q.conj() @ self.residual
        self.qy = np.append(self.qy, qy)
        self.residual = self.residual - q * qy

    def coefficients(self) -> np.ndarray:
        diag = np.abs(np.diag(self.R))
        if np.all(diag > 0):
            return scipy.linalg.solve_triangular(self.R, self.qy, lower=False)
        return np.linalg.lstsq(self.sensed[:, self.support], self.y, rcond=None)[0]


def omp_path(dictionary: Dictionary, y, p_max: int, sensing=None, sensed=None):
    """Run OMP for ``p_max`` iterations, yielding the estimate after each one.

    The estimate after p iterations does not depend on ``p_max``, so one run
    provides the whole curve over p.
    """
    K = len(dictionary)
    if p_max < 1 or p_max > K:
        raise InvalidArgumentError(f"p must lie in [1, {K}]")
    y = np.asarray(y, dtype=complex)
    if sensed is None:
        sensed = dictionary.atoms if sensing is None else np.asarray(sensing) @ dictionary.atoms
    state = _OMPState(sensed, y)
    history = []
    for _ in range(p_max):
        state.step()
        coef = state.coefficients()
        h_hat = dictionary.atoms[:, state.support] @ coef
        history.append(float(np.linalg.norm(state.residual)))
        yield SparseEstimate(
            indices=list(state.support),
            directions=[dictionary.directions(k) for k in state.support],
            coefficients=coef,
            h_hat=h_hat,
            residual_norm=history[-1],
            residual_history=list(history),
        )


def omp_estimate(dictionary: Dictionary, sensing, y, p: int) -> SparseEstimate:
    """OMP on y ~ A h with atoms A @ atom; ``sensing`` None means A = Id."""
    est = None
    for est in omp_path(dictionary, y, p, sensing=sensing):
        pass
    return est


def project_onto_model(dictionary: Dictionary, h, p: int) -> SparseEstimate:
    """Greedy approximation of the projection of h onto p-path channels."""
    return omp_estimate(dictionary, None, getattr(h, "h", h), p)


def relative_bias(h, h_hat) -> float:
    h = np.asarray(h)
    return float(np.sum(np.abs(h - h_hat) ** 2) / np.sum(np.abs(h) ** 2))


def oracle_variance(p: int, psnr: float, single_antenna_side: bool) -> float:
    return (2 if single_antenna_side else 3) * p / psnr


def oracle_rmse(dictionary: Dictionary, h, p: int, psnr: float, single_antenna_side: bool):
    """(bias, variance, rmse) of the oracle estimator with optimal observations."""
    if not psnr > 0:
        raise InvalidArgumentError("pSNR must be positive")
    h = getattr(h, "h", h)
    bias = relative_bias(h, project_onto_model(dictionary, h, p).h_hat)
    variance = oracle_variance(p, psnr, single_antenna_side)
    return bias, variance, bias + variance


def projection_bias_curve(dictionary: Dictionary, h, p_max: int) -> np.ndarray:
    """Projection bias for p = 1..p_max from a single OMP run."""
    h = getattr(h, "h", h)
    return np.array([relative_bias(h, est.h_hat) for est in omp_path(dictionary, h, p_max)])
