"""Multiband SAF update: subband errors, robust scaling, two-step sparse update.

All per-band quantities are vectorised over the band axis. ``U`` is the
(N, M) matrix whose rows are the subband regressors u_i(k) and ``norms``
holds ||u_i(k)||^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

DELTA_REG = 1e-8
MH_THRESHOLD_SCALE = 2.576


class DivergenceError(FloatingPointError):
    def __init__(self, k: int, what: str = "weights"):
        super().__init__(f"non-finite {what} at decimated iteration {k}")
        self.k = k


# --- robustness criteria -------------------------------------------------


class RobustCriterion(Protocol):
    """Maps subband errors to scaling factors in [0, 1].

    ``update`` is called once per iteration with the fresh errors, before
    ``scaling`` is evaluated on the same errors.
    """

    def update(self, errors: np.ndarray) -> None: ...

    def scaling(self, errors: np.ndarray) -> np.ndarray: ...


class LeastSquares:
    """phi(e) = e^2/2, i.e. a constant scaling factor of one."""

    def update(self, errors):
        pass

    def scaling(self, errors):
        return np.ones(np.shape(errors))


class ModifiedHuber:
    """Modified Huber criterion with a median-window threshold per band.

    sigma2[i] = lam * sigma2[i] + c_sigma * (1 - lam) * median(last Nw e_i^2),
    with lam replaced by 0 on the first update, and xi = 2.576 * sqrt(sigma2).
    Before the window has filled the median runs over the samples seen so far.
    """

    def __init__(self, bands: int, lam: float = 0.99, window: int = 20):
        if not 0 <= lam < 1:
            raise ValueError("lam must lie in [0, 1)")
        if window < 2:
            raise ValueError("window must be >= 2")
        self.bands = bands
        self.lam = lam
        self.window = window
        self.c_sigma = 1.483 * (1 + 5 / (window - 1))
        self.sigma2 = np.zeros(bands)
        self.xi = np.zeros(bands)
        self._buf = np.zeros((bands, window))
        self._count = 0

    def update(self, errors):
        e2 = np.asarray(errors, dtype=float) ** 2
        self._buf[:, self._count % self.window] = e2
        self._count += 1
        m = min(self._count, self.window)
        s = np.sort(self._buf[:, :m], axis=1)
        med = 0.5 * (s[:, (m - 1) // 2] + s[:, m // 2])
        lam = 0.0 if self._count == 1 else self.lam
        self.sigma2 = lam * self.sigma2 + self.c_sigma * (1 - lam) * med
        self.xi = MH_THRESHOLD_SCALE * np.sqrt(self.sigma2)

    def scaling(self, errors):
        a = np.abs(np.asarray(errors, dtype=float))
        # xi == 0 only passes an exactly-zero error
        return np.where((a < self.xi) | ((self.xi == 0) & (a == 0)), 1.0, 0.0)


# --- sparsity penalties --------------------------------------------------


class SparsityPenalty(Protocol):
    def grad(self, psi: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class LogPenalty:
    """f(w) = sum ln(1 + |w_m|/theta); gradient sgn(w)/(theta + |w|)."""

    theta: float = 0.005

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    def grad(self, psi):
        psi = np.asarray(psi, dtype=float)
        return np.sign(psi) / (self.theta + np.abs(psi))


class NullPenalty:
    def grad(self, psi):
        return np.zeros(np.shape(psi))


# --- update steps --------------------------------------------------------


def subband_errors(w, U, d_dec):
    """e_i = d_i,D(k) - u_i(k)^T w(k)."""
    return np.asarray(d_dec, dtype=float) - U @ w


def coarse_update(w, U, errors, phi, mu, norms=None, delta_reg=DELTA_REG):
    """psi = w + sum_i mu_i phi_i e_i u_i / (||u_i||^2 + delta)."""
    if norms is None:
        norms = np.einsum("ij,ij->i", U, U)
    gain = mu * phi * errors / (norms + delta_reg)
    return w + gain @ U


def penalty_direction(g, U, norms=None, delta_reg=DELTA_REG):
    """P = g - sum_i u_i (u_i^T g) / (||u_i||^2 + delta), inner products first.

    ``g`` is the penalty gradient evaluated at psi(k).
    """
    if norms is None:
        norms = np.einsum("ij,ij->i", U, U)
    return g - ((U @ g) / (norms + delta_reg)) @ U


def zero_attract(psi, P, rho):
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return psi - rho * P


# --- state ---------------------------------------------------------------


@dataclass
class SafState:
    """Weights and regressor buffers of one multiband adaptive filter.

    ``push`` shifts N new full-rate samples per band into the buffers, so
    row i always holds [u_i(kN), u_i(kN-1), ..., u_i(kN-M+1)].
    """

    M: int
    N: int
    delta_reg: float = DELTA_REG
    w: np.ndarray = field(default=None)
    psi: np.ndarray | None = None
    U: np.ndarray = field(default=None)
    k: int = 0

    def __post_init__(self):
        if self.w is None:
            self.w = np.zeros(self.M)
        if self.U is None:
            self.U = np.zeros((self.N, self.M))

    def push(self, block):
        """Insert an (N, N) block: block[i, j] is band i at time kN - N + 1 + j."""
        block = np.asarray(block, dtype=float)
        s = block.shape[1]
        self.U[:, s:] = self.U[:, :-s].copy()
        self.U[:, :s] = block[:, ::-1]

    @property
    def norms(self):
        return np.einsum("ij,ij->i", self.U, self.U)

    def errors(self, d_dec):
        return subband_errors(self.w, self.U, d_dec)

    def coarse(self, errors, phi, mu):
        self.psi = coarse_update(self.w, self.U, errors, phi, mu, self.norms, self.delta_reg)
        return self.psi

    def direction(self, penalty: SparsityPenalty):
        return penalty_direction(penalty.grad(self.psi), self.U, self.norms, self.delta_reg)

    def advance(self, P, rho):
        w = zero_attract(self.psi, P, rho)
        if not np.all(np.isfinite(w)):
            raise DivergenceError(self.k)
        self.w = w
        self.k += 1
        return w
