"""Alternating adaptation of the subband step-sizes and the penalty weight."""

from __future__ import annotations

import numpy as np

EPS1 = 1e-5
EPS2 = 1e-5


class SubbandStats:
    """Exponential-window power estimates driving the per-band step-size.

    zeta = 1 - 1/(kappa*M). All estimates start at zero, which makes the
    first step-sizes equal to one.
    """

    def __init__(self, bands: int, M: int, kappa: float = 6.0, eps1: float = EPS1, eps2: float = EPS2):
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        self.zeta = 1.0 - 1.0 / (kappa * M)
        self.eps1 = eps1
        self.eps2 = eps2
        self.sigma2_e = np.zeros(bands)
        self.sigma2_u = np.zeros(bands)
        self.r_ue = np.zeros((bands, M))
        self.sigma2_nu = np.zeros(bands)

    def update_error_power(self, phi, errors):
        z = self.zeta
        self.sigma2_e = z * self.sigma2_e + (1 - z) * (phi * errors) ** 2
        return self.sigma2_e

    def update_noise_power(self, phi, errors, u_now, U):
        """u_now: u_i(kN) per band; U: (N, M) regressors. Call after update_error_power."""
        z = self.zeta
        self.sigma2_u = z * self.sigma2_u + (1 - z) * u_now**2
        self.r_ue *= z
        self.r_ue += ((1 - z) * phi * errors)[:, None] * U
        raw = self.sigma2_e - np.einsum("ij,ij->i", self.r_ue, self.r_ue) / (self.sigma2_u + self.eps1)
        # negative estimates keep the previous value
        self.sigma2_nu = np.where(raw < 0, self.sigma2_nu, raw)
        return self.sigma2_nu

    def step_size(self):
        mu = 1.0 - np.sqrt(self.sigma2_nu / (self.sigma2_e + self.eps2))
        return np.clip(mu, 0.0, 1.0)

    def update(self, phi, errors, u_now, U):
        """One iteration of the error/noise power recursions; returns mu_i(k)."""
        self.update_error_power(phi, errors)
        self.update_noise_power(phi, errors, u_now, U)
        return self.step_size()


def rho_opt(psi, w, P, eps1=EPS1):
    """max{(psi - w)^T P / (||P||^2 + eps1), 0}; zero when P vanishes."""
    pp = float(P @ P)
    if pp == 0.0:
        return 0.0
    return max(float((psi - w) @ P) / (pp + eps1), 0.0)


def rho_opt_oracle(psi, w_o, P):
    """Unclipped optimum of Delta(rho) using the true system."""
    return float((psi - w_o) @ P) / float(P @ P)


def rho_bound(psi, w_o, P):
    """Upper end of the interval 0 < rho < bound on which Delta(rho) < 0."""
    return 2.0 * rho_opt_oracle(psi, w_o, P)


def delta_of_rho(psi_dev, P, rho):
    """Change in squared deviation caused by the zero-attraction step.

    ``psi_dev`` is w_o - psi(k); returns 2 rho psi_dev^T P + rho^2 ||P||^2.
    """
    return 2.0 * rho * float(psi_dev @ P) + rho**2 * float(P @ P)


class AdaptiveRho:
    """Penalty weight that is zero at k=0 and rho_opt afterwards."""

    def __init__(self, eps1: float = EPS1):
        self.eps1 = eps1
        self.rho = 0.0
        self.k = 0

    def update(self, psi, w, P):
        self.rho = 0.0 if self.k == 0 else rho_opt(psi, w, P, self.eps1)
        self.k += 1
        return self.rho
