"""Closed-form performance figures and the bias and capacity bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PhysicalChannel
from .errors import (
    ConditionViolatedError,
    InvalidArgumentError,
    OutOfValidityError,
    SingularCovarianceError,
    TrialFailureError,
)
from .geometry import AntennaArray, Direction, Sector, steering_matrix, unit_vectors
from .observation import observe


# --- covariance ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    R: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=complex)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise InvalidArgumentError("covariance must be square")
        if not np.allclose(R, R.conj().T, atol=1e-12 * max(1.0, np.abs(R).max())):
            raise InvalidArgumentError("covariance must be Hermitian")
        if np.linalg.eigvalsh(R).min() < -1e-12 * max(1.0, np.abs(R).max()):
            raise InvalidArgumentError("covariance must be positive semidefinite")
        object.__setattr__(self, "R", R)

    @property
    def size(self) -> int:
        return self.R.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.R)

    @property
    def trace(self) -> float:
        return float(np.trace(self.R).real)

    @property
    def trace_inv(self) -> float:
        lam = self.eigenvalues
        if lam.min() <= 1e-14 * max(lam.max(), 1e-300):
            raise SingularCovarianceError("covariance is singular")
        return float(np.sum(1.0 / lam))

    @property
    def unevenness(self) -> float:
        """Tr[R^-1] Tr[R] / N^2, equal to 1 for a flat spectrum."""
        return self.trace_inv * self.trace / self.size ** 2

    def sample(self, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
        """Draws from CN(0, R), one per column when ``count`` is given."""
        lam, U = np.linalg.eigh(self.R)
        root = U * np.sqrt(np.clip(lam, 0, None))
        n = 1 if count is None else count
        z = (rng.standard_normal((self.size, n)) + 1j * rng.standard_normal((self.size, n))) / np.sqrt(2)
        out = root @ z
        return out[:, 0] if count is None else out

    @classmethod
    def from_spectrum(cls, eigenvalues, rng: np.random.Generator) -> "CovarianceSpec":
        lam = np.asarray(eigenvalues, dtype=float)
        n = lam.size
        Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        Q, Rq = np.linalg.qr(Z)
        Q = Q * (np.diag(Rq) / np.abs(np.diag(Rq)))
        R = (Q * lam) @ Q.conj().T
        return cls((R + R.conj().T) / 2)

    @classmethod
    def with_unevenness(cls, size: int, ratio: float, rng: np.random.Generator,
                        trace: float | None = None) -> "CovarianceSpec":
        """Two-level spectrum reaching the requested Tr[R^-1]Tr[R]/N^2."""
        spectrum = two_level_spectrum(size, ratio)
        if trace is not None:
            spectrum = spectrum * trace / spectrum.sum()
        return cls.from_spectrum(spectrum, rng)


def two_level_spectrum(size: int, ratio: float) -> np.ndarray:
    if ratio < 1:
        raise InvalidArgumentError("unevenness ratio is at least 1")
    if size == 1:
        if ratio != 1:
            raise InvalidArgumentError("a scalar covariance has unevenness 1")
        return np.ones(1)
    n1 = size // 2
    n2 = size - n1
    s = (ratio * size ** 2 - n1 ** 2 - n2 ** 2) / (n1 * n2)  # = t + 1/t
    t = (s + np.sqrt(s * s - 4)) / 2
    return np.concatenate([np.full(n1, t), np.ones(n2)])


# --- empirical bias / variance ---------------------------------------------

def rmse_empirical(estimator, setup, channel, trials: int, rng: np.random.Generator):
    """Monte-Carlo (rmse, bias, variance) over noise draws at a fixed channel.

    ``estimator(setup, y)`` returns a channel estimate. Sample moments are
    used throughout, so rmse == bias + variance up to rounding.
    """
    if trials < 2:
        raise InvalidArgumentError("need at least two trials")
    h = getattr(channel, "h", channel)
    h = np.asarray(h)
    estimates = []
    failures = 0
    for _ in range(trials):
        y = observe(setup, h, rng)
        try:
            estimates.append(estimator(setup, y))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            failures += 1
            if failures > 0.01 * trials:
                raise TrialFailureError(f"{failures} of {trials} trials failed") from None
    E = np.array(estimates)
    return moments(h, E)


def moments(h, estimates):
    """(rmse, bias, variance) of a stack of estimates (one per row)."""
    E = np.asarray(estimates)
    scale = float(np.sum(np.abs(h) ** 2))
    mean = E.mean(axis=0)
    bias = float(np.sum(np.abs(h - mean) ** 2)) / scale
    variance = float(np.mean(np.sum(np.abs(E - mean) ** 2, axis=1))) / scale
    rmse = float(np.mean(np.sum(np.abs(E - h) ** 2, axis=1))) / scale
    return rmse, bias, variance


# --- closed forms ------------------------------------------------------------

def ls_opt_rmse(n_r: int, n_t: int, n_c: int, n_s: int, psnr: float) -> float:
    if min(n_r, n_t, n_c, n_s) < 1 or not psnr > 0:
        raise InvalidArgumentError("counts must be >= 1 and pSNR > 0")
    N = n_r * n_t
    return (N / psnr) * (N / (n_c * n_s))


def _lmmse_denominator(unevenness, size, n_c, n_s, expected_psnr):
    return expected_psnr * n_c * n_s / size ** 2 + unevenness


def lmmse_opt_rmse_from_unevenness(unevenness: float, size: int, n_c: int, n_s: int,
                                   expected_psnr: float) -> float:
    return 1.0 / _lmmse_denominator(unevenness, size, n_c, n_s, expected_psnr)


def lmmse_opt_rmse(R, n_c: int, n_s: int, expected_psnr: float) -> float:
    spec = R if isinstance(R, CovarianceSpec) else CovarianceSpec(R)
    return lmmse_opt_rmse_from_unevenness(spec.unevenness, spec.size, n_c, n_s, expected_psnr)


def lmmse_opt_split(unevenness: float, size: int, n_c: int, n_s: int, expected_psnr: float):
    """(bias, variance) of the optimally trained LMMSE, averaged over the prior.

    With the optimal design the estimator is M^H / alpha, which gives
    bias = u / D^2 and variance = (D - u) / D^2 where D is the denominator of
    the optimal rMSE and u the unevenness ratio.
    """
    D = _lmmse_denominator(unevenness, size, n_c, n_s, expected_psnr)
    return unevenness / D ** 2, (D - unevenness) / D ** 2


def variance_lower_bound(p: int, psnr: float, single_antenna_side: bool) -> float:
    if p < 1 or not psnr > 0:
        raise InvalidArgumentError("need p >= 1 and pSNR > 0")
    return (2 if single_antenna_side else 3) * p / psnr


# --- direction-gap lemma and the bias bound --------------------------------

def _gap(u: Direction, v: Direction) -> np.ndarray:
    return u.vector - v.vector


def lemma1_condition(array: AntennaArray, u: Direction, v: Direction) -> bool:
    radius = np.linalg.norm(array.normalized_positions, axis=1).max()
    if radius == 0:
        return True
    return bool(np.linalg.norm(_gap(u, v)) * np.sqrt(2) * np.pi * radius < 1)


def _phase_gaps(array: AntennaArray, u: Direction, v: Direction) -> np.ndarray:
    return 2 * np.pi * (array.normalized_positions @ _gap(u, v))


def _defect_sq(theta: np.ndarray) -> float:
    # 1 - |mean exp(j theta)|^2 written as a sum of squared sines, which stays
    # accurate when the directions nearly coincide
    d = theta[:, None] - theta[None, :]
    return float(2 * np.sum(np.sin(d / 2) ** 2) / theta.size ** 2)


def collinearity_defect(array: AntennaArray, u: Direction, v: Direction) -> float:
    """sqrt(1 - |e(v)^H e(u)|^2)."""
    return float(np.sqrt(_defect_sq(_phase_gaps(array, u, v))))


def lemma1_bound(array: AntennaArray, u: Direction, v: Direction) -> float:
    """2 pi ||u - v|| sqrt(mean_n ||a_n/lambda||^2 cos^2(a_n, u - v))."""
    if not lemma1_condition(array, u, v):
        raise ConditionViolatedError("direction gap too large for the array", pair=(u, v))
    # ||a|| ||d|| cos(a, d) = a . d, so the root collapses to an RMS projection
    return float(np.sqrt(np.mean(_phase_gaps(array, u, v) ** 2)))


def gap_lemma_terms(array: AntennaArray, u: Direction, v: Direction):
    """Intermediate quantities of the direction-gap lemma proof.

    Returns:
        dict with ``defect_sq`` = 1 - |<e(v), e(u)>|^2 and its bound ``quad``
        (4 pi^2 times the mean-square normalized projection), plus
        ``re_defect`` = 1 - Re<e(v), e(u)> and its bound ``re_quad`` (half of
        ``quad``).
    """
    theta = _phase_gaps(array, u, v)
    ms = float(np.mean(theta ** 2))
    return {
        "defect_sq": _defect_sq(theta),
        "quad": ms,
        "re_defect": float(np.mean(2 * np.sin(theta / 2) ** 2)),
        "re_quad": ms / 2,
    }


@dataclass(frozen=True)
class RegionAssignment:
    regions: tuple
    centers: tuple

    def __post_init__(self):
        if len(self.regions) != len(self.centers):
            raise InvalidArgumentError("one center per region is required")
        object.__setattr__(self, "regions", tuple(tuple(int(i) for i in r) for r in self.regions))
        object.__setattr__(self, "centers", tuple(self.centers))
        flat = [i for r in self.regions for i in r]
        if len(flat) != len(set(flat)):
            raise InvalidArgumentError("regions overlap")

    def validate_cover(self, n_paths: int) -> None:
        flat = sorted(i for r in self.regions for i in r)
        if flat != list(range(n_paths)):
            raise InvalidArgumentError("regions do not cover all paths exactly once")

    @property
    def p(self) -> int:
        return len(self.centers)

    def center_of(self) -> dict:
        return {i: k for k, r in enumerate(self.regions) for i in r}


def _side_dirs(paths, side: str):
    if side not in ("tx", "rx"):
        raise InvalidArgumentError("side must be 'tx' or 'rx'")
    return [p.dod if side == "tx" else p.doa for p in paths]


def _side_vectors(array, dirs, side):
    """Channel-space vectors of single-sided paths (the transmit side enters conjugated)."""
    E = steering_matrix(array, [d.azimuth for d in dirs], [d.elevation for d in dirs])
    return E.conj() if side == "tx" else E


@dataclass(frozen=True)
class BiasBound:
    value: float
    normalized: float  # (value / ||h||)^2, comparable to the relative bias


def _bias_setup(paths, assignment, array, side):
    paths = list(paths)
    assignment.validate_cover(len(paths))
    dirs = _side_dirs(paths, side)
    for k, region in enumerate(assignment.regions):
        v = assignment.centers[k]
        for i in region:
            if not lemma1_condition(array, dirs[i], v):
                raise ConditionViolatedError(f"path {i} too far from virtual direction {k}", pair=(i, k))
    gains = np.array([p.gain for p in paths])
    G = _side_vectors(array, dirs, side)
    h_norm = float(np.linalg.norm(G @ gains))
    return paths, dirs, gains, G, h_norm


def bias_upper_bound(paths, assignment: RegionAssignment, array: AntennaArray, side: str = "tx") -> BiasBound:
    """Triangle-inequality bound on ||h - proj(h)|| via the direction-gap lemma, single-antenna other side."""
    paths, dirs, gains, _, h_norm = _bias_setup(paths, assignment, array, side)
    total = 0.0
    for k, region in enumerate(assignment.regions):
        v = assignment.centers[k]
        for i in region:
            total += abs(gains[i]) * lemma1_bound(array, dirs[i], v)
    return BiasBound(total, (total / h_norm) ** 2)


def region_quadratic_form(G_region: np.ndarray, g_center: np.ndarray) -> np.ndarray:
    """Q with q_ij = g_i^H g_j - g_i^H g_v g_v^H g_j."""
    gram = G_region.conj().T @ G_region
    proj = G_region.conj().T @ g_center
    return gram - np.outer(proj, proj.conj())


def bias_bound_quadratic(paths, assignment: RegionAssignment, array: AntennaArray, side: str = "tx") -> BiasBound:
    """Sum over regions of sqrt(c^H Q c): the triangle inequality applied once."""
    paths, dirs, gains, G, h_norm = _bias_setup(paths, assignment, array, side)
    total = 0.0
    for k, region in enumerate(assignment.regions):
        if not region:
            continue
        v = assignment.centers[k]
        g_v = _side_vectors(array, [v], side)[:, 0]
        idx = list(region)
        Q = region_quadratic_form(G[:, idx], g_v)
        c = gains[idx]
        total += float(np.sqrt(max(0.0, np.real(c.conj() @ Q @ c))))
    return BiasBound(total, (total / h_norm) ** 2)


def region_projection(paths, assignment: RegionAssignment, array: AntennaArray, side: str = "tx") -> np.ndarray:
    """The per-region projection estimate used to derive the bias bounds."""
    dirs = _side_dirs(paths, side)
    G = _side_vectors(array, dirs, side)
    gains = np.array([p.gain for p in paths])
    h_hat = np.zeros(G.shape[0], dtype=complex)
    for k, region in enumerate(assignment.regions):
        if not region:
            continue
        g_v = _side_vectors(array, [assignment.centers[k]], side)[:, 0]
        idx = list(region)
        h_hat += g_v * (g_v.conj() @ (G[:, idx] @ gains[idx]))
    return h_hat


# --- region assignment -----------------------------------------------------

def _assign(U: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.argmax(U @ C.T, axis=1)


def _lloyd(U: np.ndarray, C: np.ndarray, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    labels = _assign(U, C)
    for _ in range(max_iter):
        C_new = C.copy()
        for k in range(C.shape[0]):
            members = U[labels == k]
            if len(members):
                m = members.sum(axis=0)
                norm = np.linalg.norm(m)
                if norm > 0:
                    C_new[k] = m / norm
        new_labels = _assign(U, C_new)
        C = C_new
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return C, labels


def _to_assignment(C: np.ndarray, labels: np.ndarray) -> RegionAssignment:
    regions = [np.flatnonzero(labels == k).tolist() for k in range(C.shape[0])]
    return RegionAssignment(regions, [Direction.from_vector(c) for c in C])


def _path_vectors(paths, side):
    dirs = _side_dirs(paths, side)
    return unit_vectors([d.azimuth for d in dirs], [d.elevation for d in dirs])


def nearest_center_assignment(paths, p: int, sector: Sector | None = None, side: str = "tx") -> RegionAssignment:
    """Spherical k-means: Fibonacci-spread initial centers over the sector,
    nearest-center assignment, centers moved to the normalized mean direction."""
    if p < 1:
        raise InvalidArgumentError("p must be >= 1")
    paths = list(paths)
    U = _path_vectors(paths, side)
    if p >= len(paths):
        return RegionAssignment([[i] for i in range(len(paths))], _side_dirs(paths, side))
    C = unit_vectors(*(sector or Sector()).fibonacci(p))
    C, labels = _lloyd(U, C)
    return _to_assignment(C, labels)


def gaps(paths, assignment: RegionAssignment, side: str = "tx") -> np.ndarray:
    """Chordal distance from each path to its region's center, in path order."""
    U = _path_vectors(paths, side)
    out = np.zeros(len(U))
    for k, region in enumerate(assignment.regions):
        c = assignment.centers[k].vector
        for i in region:
            out[i] = np.linalg.norm(U[i] - c)
    return out


def nested_assignments(paths, p_values, sector: Sector | None = None, side: str = "tx") -> dict:
    """Assignments for increasing p, each seeded with the previous centers plus
    the worst-served path; the maximum gap never grows from one p to the next."""
    paths = list(paths)
    U = _path_vectors(paths, side)
    out = {}
    C = None
    for p in sorted(set(int(q) for q in p_values)):
        if p < 1:
            raise InvalidArgumentError("p must be >= 1")
        if p >= len(paths):
            out[p] = RegionAssignment([[i] for i in range(len(paths))], _side_dirs(paths, side))
            continue
        if C is None:
            C = unit_vectors(*(sector or Sector()).fibonacci(p))
            C, labels = _lloyd(U, C)
        else:
            while C.shape[0] < p:
                labels = _assign(U, C)
                far = int(np.argmax(np.linalg.norm(U - C[labels], axis=1)))
                C = np.vstack([C, U[far]])
            labels = _assign(U, C)
            seeded_max = np.linalg.norm(U - C[labels], axis=1).max()
            C2, labels2 = _lloyd(U, C)
            if np.linalg.norm(U - C2[labels2], axis=1).max() <= seeded_max:
                C, labels = C2, labels2
        out[p] = _to_assignment(C, labels)
    return out


# --- capacity ----------------------------------------------------------------

def waterfilling(gains, total_power: float, noise_power: float = 1.0, tol: float = 1e-12) -> np.ndarray:
    """Power per parallel channel (power gains ``gains``) by bisection on the water level."""
    g = np.asarray(gains, dtype=float)
    powers = np.zeros_like(g)
    active = g > 0
    if total_power <= 0 or not active.any():
        return powers
    floor = noise_power / g[active]
    lo, hi = floor.min(), floor.max() + total_power
    while hi - lo > tol * hi:
        mu = (lo + hi) / 2
        if np.clip(mu - floor, 0, None).sum() > total_power:
            hi = mu
        else:
            lo = mu
    on = floor < (lo + hi) / 2
    mu = (total_power + floor[on].sum()) / on.sum()  # exact level for the active set
    powers[active] = np.clip(mu - floor, 0, None)
    return powers


def _matrix(channel):
    return channel.H if isinstance(channel, PhysicalChannel) else np.atleast_2d(np.asarray(channel))


def capacity_optimal(channel, energy: float, noise_power: float) -> float:
    """Water-filled capacity (bits/use) under total transmit power ``energy``."""
    if not noise_power > 0:
        raise InvalidArgumentError("noise power must be positive")
    s = np.linalg.svd(_matrix(channel), compute_uv=False)
    g = s ** 2
    p = waterfilling(g, energy, noise_power)
    return float(np.sum(np.log2(1 + p * g / noise_power)))


def capacity_mismatched(channel, estimate, energy: float, noise_power: float) -> float:
    """Rate with the covariance water-filled on ``estimate`` but sent through ``channel``."""
    H = _matrix(channel)
    H_hat = _matrix(estimate)
    _, s_hat, Vh_hat = np.linalg.svd(H_hat)
    d_hat = waterfilling(s_hat ** 2, energy, noise_power)
    V = Vh_hat.conj().T[:, :d_hat.size]
    Qx = (V * d_hat) @ V.conj().T
    S = np.eye(H.shape[0]) + H @ Qx @ H.conj().T / noise_power
    return float(np.linalg.slogdet(S)[1] / np.log(2))


def capacity_loss_general(channel, estimate, energy: float, noise_power: float) -> float:
    return capacity_optimal(channel, energy, noise_power) - capacity_mismatched(channel, estimate, energy, noise_power)


def correlation_sq(h, h_hat) -> float:
    h = np.asarray(h)
    h_hat = np.asarray(h_hat)
    den = np.sum(np.abs(h) ** 2) * np.sum(np.abs(h_hat) ** 2)
    if den == 0:
        return 0.0
    return float(abs(np.vdot(h, h_hat)) ** 2 / den)


def capacity_loss(h, h_hat, psnr: float):
    """Single-receive-antenna loss and relative capacity.

    Returns:
        (loss in bits, (C_opt - loss) / C_opt). A zero estimate loses everything.
    """
    c_opt = np.log2(1 + psnr)
    loss = c_opt - np.log2(1 + correlation_sq(h, h_hat) * psnr)
    rel = (c_opt - loss) / c_opt if c_opt > 0 else 1.0
    return float(loss), float(rel)


def capacity_loss_bound(rmse: float, psnr: float) -> float:
    if not 0 <= rmse <= 1:
        raise OutOfValidityError(f"capacity bound needs 0 <= rMSE <= 1 (got {rmse})")
    return float(np.log2(1 + psnr) - np.log2(1 + psnr * (1 - rmse * (2 - rmse))))


def relative_capacity_bound(rmse: float, psnr: float) -> float:
    c_opt = np.log2(1 + psnr)
    return float((c_opt - capacity_loss_bound(rmse, psnr)) / c_opt)
