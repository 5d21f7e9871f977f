"""Training/combining designs and the vectorized observation model y = M h + n."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientDimensionsError,
    InvalidArgumentError,
    SnrTooLowError,
    UnderdeterminedDesignError,
)
from .geometry import AntennaArray, steering_derivatives, steering_vector

_TOL = 1e-9


def dft_rows(n_rows: int, size: int) -> np.ndarray:
    """First ``n_rows`` rows of the unitary ``size``-point DFT matrix."""
    j = np.arange(n_rows)[:, None]
    k = np.arange(size)[None, :]
    return np.exp(-2j * np.pi * j * k / size) / np.sqrt(size)


@dataclass(frozen=True, eq=False)
class ObservationSetup:
    """Training matrix X (N_t x N_s), combiner W (N_r x N_c) and noise level.

    Construction checks the constant-power columns of X, orthonormal
    combiners and, when ``n_rf`` is given, the hybrid rank budget.
    """

    X: np.ndarray
    W: np.ndarray
    noise_power: float
    energy: float
    n_rf: int | None = None
    M: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=complex))
        W = np.atleast_2d(np.asarray(self.W, dtype=complex))
        if self.noise_power < 0 or self.energy <= 0:
            raise InvalidArgumentError("need noise_power >= 0 and energy > 0")
        col_sq = np.sum(np.abs(X) ** 2, axis=0)
        if not np.allclose(col_sq, self.energy, rtol=1e-8, atol=0):
            raise InvalidArgumentError("training columns must all carry energy P_e")
        if W.shape[1] > W.shape[0] or not np.allclose(W.conj().T @ W, np.eye(W.shape[1]), atol=1e-10):
            raise InvalidArgumentError("combiners must be orthonormal (W^H W = Id)")
        if self.n_rf is not None:
            if self.n_rf < 1:
                raise InvalidArgumentError("n_rf must be >= 1")
            if np.linalg.matrix_rank(X, tol=1e-8 * np.sqrt(self.energy)) > self.n_rf:
                raise InvalidArgumentError(f"rank(X) exceeds the hybrid budget n_rf={self.n_rf}")
        X.flags.writeable = False
        W.flags.writeable = False
        M = np.kron(X.T, W.conj().T)
        M.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "noise_power", float(self.noise_power))
        object.__setattr__(self, "energy", float(self.energy))
        object.__setattr__(self, "M", M)

    @property
    def n_t(self) -> int:
        return self.X.shape[0]

    @property
    def n_s(self) -> int:
        return self.X.shape[1]

    @property
    def n_r(self) -> int:
        return self.W.shape[0]

    @property
    def n_c(self) -> int:
        return self.W.shape[1]

    @property
    def total_energy(self) -> float:
        return self.n_s * self.energy

    def with_noise(self, noise_power: float) -> "ObservationSetup":
        return ObservationSetup(self.X, self.W, noise_power, self.energy, self.n_rf)


def hybrid_factors(X: np.ndarray, n_rf: int):
    """Split X = V Z with V (N_t x n_rf) and Z (n_rf x N_s); fails if rank(X) > n_rf."""
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    if np.any(s[n_rf:] > 1e-8 * max(s[0], 1.0)):
        raise InvalidArgumentError(f"rank(X) exceeds n_rf={n_rf}")
    return U[:, :n_rf], s[:n_rf, None] * Vh[:n_rf]


def observe(setup: ObservationSetup, h, rng: np.random.Generator) -> np.ndarray:
    """Draw y = M h + n, n ~ CN(0, noise_power Id)."""
    h = getattr(h, "h", h)
    h = np.asarray(h)
    if h.shape[0] != setup.M.shape[1]:
        raise InvalidArgumentError(f"channel length {h.shape[0]} does not match M with {setup.M.shape[1]} columns")
    m = setup.M.shape[0]
    noise = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return setup.M @ h + np.sqrt(setup.noise_power / 2) * noise


def _check_counts(**counts):
    for name, value in counts.items():
        if int(value) != value or value < 1:
            raise InvalidArgumentError(f"{name} must be a positive integer")


def build_ls_optimal(n_t: int, n_r: int, n_s: int, n_c: int, energy: float,
                     noise_power: float = 0.0) -> ObservationSetup:
    """Scaled-DFT training with M^H M = P_e N_c N_s / (N_r N_t) Id.

    Only the full receiver (N_c = N_r) is supported: with fewer orthonormal
    combiners M^H M has rank N_t N_c and cannot be a multiple of the identity.
    """
    _check_counts(n_t=n_t, n_r=n_r, n_s=n_s, n_c=n_c)
    if n_s < n_t:
        raise UnderdeterminedDesignError(f"least squares needs N_s >= N_t (got N_s={n_s}, N_t={n_t})")
    if n_c > n_r:
        raise InvalidArgumentError("cannot have more orthonormal combiners than receive antennas")
    if n_c < n_r:
        raise UnderdeterminedDesignError("least squares needs N_c = N_r orthonormal combiners")
    X = np.sqrt(energy * n_s / n_t) * dft_rows(n_t, n_s)
    return ObservationSetup(X, np.eye(n_r), noise_power, energy)


def lmmse_target_gram(R: np.ndarray, n_s: int, n_c: int, energy: float, noise_power: float) -> np.ndarray:
    """The M^H M that minimizes the LMMSE error for covariance R."""
    N = R.shape[0]
    R_inv = np.linalg.inv(R)
    scale = energy * n_c * n_s / N + noise_power * np.trace(R_inv).real / N
    G = scale * np.eye(N) - noise_power * R_inv
    return (G + G.conj().T) / 2


def build_lmmse_optimal(R, n_s: int, n_c: int, energy: float, noise_power: float,
                        n_r: int = 1) -> ObservationSetup:
    """Training matched to the channel covariance R (size N_r N_t).

    The eigenvalues of the target M^H M set the training energy per eigen-
    direction of X X^H; multiplying by DFT rows then spreads the energy
    evenly over the N_s pilot symbols so that every column carries P_e.
    """
    R = np.asarray(R, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidArgumentError("R must be square")
    if not np.allclose(R, R.conj().T, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise InvalidArgumentError("R must be Hermitian")
    if np.linalg.eigvalsh(R).min() <= 0:
        raise InvalidArgumentError("R must be positive definite")
    N = R.shape[0]
    if N % n_r:
        raise InvalidArgumentError("size of R is not a multiple of n_r")
    n_t = N // n_r
    _check_counts(n_s=n_s, n_c=n_c)
    if n_s < n_t:
        raise UnderdeterminedDesignError(f"design needs N_s >= N_t (got N_s={n_s}, N_t={n_t})")
    if n_c != n_r:
        raise UnderdeterminedDesignError("the optimal design needs N_c = N_r orthonormal combiners")

    G = lmmse_target_gram(R, n_s, n_c, energy, noise_power)
    if np.linalg.eigvalsh(G).min() < -1e-10 * np.abs(G).max():
        raise SnrTooLowError("prescribed M^H M is indefinite: SNR too low for the optimal LMMSE design")
    # M^H M = conj(X X^H) kron (W W^H); with W = Id the receive factor is Id.
    T = np.einsum("iaja->ij", G.reshape(n_t, n_r, n_t, n_r)) / n_r
    if not np.allclose(np.kron(T, np.eye(n_r)), G, atol=1e-10 * np.abs(G).max()):
        raise InvalidArgumentError("prescribed M^H M is not realizable with orthonormal combiners")
    lam, U = np.linalg.eigh(T.conj())
    lam = np.clip(lam, 0.0, None)
    X = (U * np.sqrt(lam)) @ dft_rows(n_t, n_s)
    return ObservationSetup(X, np.eye(n_r), noise_power, energy)


def _span_basis(vectors, rtol=1e-10) -> np.ndarray:
    A = np.column_stack(vectors)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, s > rtol * s[0]]


def oracle_span_vectors(array: AntennaArray, directions) -> list[np.ndarray]:
    """Steering vectors and both angular derivatives at each direction."""
    out = []
    for d in directions:
        out.append(steering_vector(array, d))
        out.extend(steering_derivatives(array, d))
    return out


def span_residual(matrix: np.ndarray, vectors) -> float:
    """Largest relative residual after projecting each vector onto im(matrix)."""
    Q = _span_basis([matrix[:, i] for i in range(matrix.shape[1])])
    worst = 0.0
    for v in vectors:
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        worst = max(worst, np.linalg.norm(v - Q @ (Q.conj().T @ v)) / nv)
    return worst


def oracle_conditions_hold(setup: ObservationSetup, tx_array, rx_array, virtual_dirs, tol=1e-8) -> bool:
    tx = span_residual(setup.X, oracle_span_vectors(tx_array, [d for d, _ in virtual_dirs]))
    rx = span_residual(setup.W, oracle_span_vectors(rx_array, [a for _, a in virtual_dirs]))
    return max(tx, rx) < tol


def build_oracle_observation(virtual_dirs, tx_array: AntennaArray, rx_array: AntennaArray,
                             n_s: int, n_c: int, energy: float, noise_power: float = 0.0,
                             n_rf: int | None = None) -> ObservationSetup:
    """Observation whose training/combining spaces contain the steering vectors
    and their derivatives at the given (departure, arrival) direction pairs."""
    virtual_dirs = list(virtual_dirs)
    p = len(virtual_dirs)
    if p < 1:
        raise InvalidArgumentError("need at least one virtual direction pair")
    n_t, n_r = tx_array.count, rx_array.count
    if n_t > 1 and 3 * p > min(n_s, n_t):
        raise InsufficientDimensionsError(f"3p = {3 * p} exceeds min(N_s, N_t) = {min(n_s, n_t)}")
    if n_r > 1 and not 3 * p <= n_c <= n_r:
        raise InsufficientDimensionsError(f"need 3p = {3 * p} <= N_c = {n_c} <= N_r = {n_r}")
    if n_r == 1 and n_c != 1:
        raise InvalidArgumentError("a single-antenna receiver has exactly one combiner")

    B_t = _span_basis(oracle_span_vectors(tx_array, [d for d, _ in virtual_dirs]))
    d = B_t.shape[1]
    if d > n_s:
        raise InsufficientDimensionsError(f"span dimension {d} exceeds N_s = {n_s}")
    X = np.sqrt(energy * n_s / d) * (B_t @ dft_rows(d, n_s))

    if n_r == 1:
        W = np.ones((1, 1))
    else:
        B_r = _span_basis(oracle_span_vectors(rx_array, [a for _, a in virtual_dirs]))
        Q, _ = np.linalg.qr(np.column_stack([B_r, np.eye(n_r)]))
        W = Q[:, :n_c]
    return ObservationSetup(X, W, noise_power, energy, n_rf)
