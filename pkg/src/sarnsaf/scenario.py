"""Input, noise and unknown-system generators for identification experiments."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, signal


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class SystemModel:
    w_o: np.ndarray
    label: str = "sparse"

    def __post_init__(self):
        w = np.asarray(self.w_o, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("system taps must be a finite 1-D sequence")
        if not np.any(w):
            raise ValueError("system must have a nonzero tap")
        object.__setattr__(self, "w_o", w)

    @property
    def M(self) -> int:
        return self.w_o.size

    @property
    def chi(self) -> float:
        return sparseness(self.w_o)


@dataclass(frozen=True)
class NoiseModel:
    """kind is 'gaussian' (uses sigma2), 'stable' (uses alpha, gamma) or 'none'."""

    kind: str = "stable"
    alpha: float = 2.0
    gamma: float = 0.02
    sigma2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "stable", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "stable":
            if not 0 < self.alpha <= 2:
                raise ValueError("alpha must lie in (0, 2]")
            if self.gamma <= 0:
                raise ValueError("gamma must be positive")
        if self.kind == "gaussian" and self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "gaussian":
            return np.sqrt(self.sigma2) * rng.standard_normal(n)
        return sample_alpha_stable(self.alpha, self.gamma, rng, n)


def gen_ar1(a: float, length: int, rng: np.random.Generator, variance: float = 1.0) -> np.ndarray:
    """u(n) = a u(n-1) + g(n) with white Gaussian g and u(-1) = 0."""
    if not -1 < a < 1:
        raise ValueError("AR(1) pole must satisfy |a| < 1")
    g = np.sqrt(variance) * rng.standard_normal(length)
    return signal.lfilter([1.0], [1.0, -a], g)


def sample_alpha_stable(alpha: float, gamma: float, rng: np.random.Generator, size=None):
    """Symmetric alpha-stable draws with characteristic function exp(-gamma |t|^alpha).

    Chambers-Mallows-Stuck transform of a uniform angle and a unit exponential.
    """
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.exponential(1.0, size)
    if alpha == 1.0:
        x = np.tan(v)
    else:
        x = (
            np.sin(alpha * v)
            / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
        )
    return gamma ** (1.0 / alpha) * x


def sparseness(w) -> float:
    """chi(w) = M/(M - sqrt(M)) * (1 - ||w||_1 / (sqrt(M) ||w||_2))."""
    w = np.asarray(w, dtype=float)
    M = w.size
    l2 = np.linalg.norm(w)
    if l2 == 0:
        raise ValueError("sparseness is undefined for the zero vector")
    if M < 2:
        raise ValueError("sparseness needs at least two taps")
    sm = np.sqrt(M)
    return float(M / (M - sm) * (1.0 - np.abs(w).sum() / (sm * l2)))


def _sparse_profile(M, taps, rng):
    positions = np.sort(rng.choice(M, size=taps, replace=False))
    signs = rng.choice([-1.0, 1.0], size=taps)
    jitter = rng.uniform(0.5, 1.0, size=taps)
    order = np.arange(taps)

    def build(rate):
        w = np.zeros(M)
        w[positions] = signs * jitter * np.exp(-rate * order)
        return w

    return build, (0.0, 50.0)


def _dispersive_profile(M, rng):
    g = rng.standard_normal(M)
    m = np.arange(M)

    def build(rate):
        return g * np.exp(-rate * m / M)

    return build, (0.0, 5.0 * M)


def synth_system(
    M: int,
    kind: str = "sparse",
    target_chi: float | None = None,
    rng: np.random.Generator | None = None,
    active_taps: int = 16,
    tol: float = 0.02,
    attempts: int = 20,
) -> SystemModel:
    """Synthetic unknown system with a prescribed sparseness.

    The decay rate of the magnitude profile is solved for so that chi hits
    ``target_chi``; a fresh random draw is tried if the reachable chi range
    of a draw excludes the target. Output is scaled to unit l2 norm.
    """
    if rng is None:
        rng = np.random.default_rng()
    if kind not in ("sparse", "dispersive"):
        raise ValueError(f"unknown system kind {kind!r}")
    if target_chi is not None and not 0 <= target_chi < 1:
        raise ValueError("target_chi must lie in [0, 1)")
    if kind == "sparse" and not 1 <= active_taps <= M:
        raise ValueError("active_taps must lie in [1, M]")

    for _ in range(attempts):
        if kind == "sparse":
            build, (lo, hi) = _sparse_profile(M, active_taps, rng)
        else:
            build, (lo, hi) = _dispersive_profile(M, rng)
        if target_chi is None:
            w = build(0.25 if kind == "sparse" else 5.0)
        else:
            f = lambda r: sparseness(build(r)) - target_chi  # noqa: E731
            if f(lo) * f(hi) > 0:
                continue
            w = build(optimize.brentq(f, lo, hi, xtol=1e-12))
            if abs(sparseness(w) - target_chi) > tol:
                continue
        return SystemModel(w / np.linalg.norm(w), kind)
    raise SynthesisError(
        f"could not reach chi={target_chi} for a {kind} system of length {M} "
        f"in {attempts} draws"
    )


def desired(u_regressor, system: SystemModel, noise: float) -> float:
    """d(n) = u(n)^T w_o + nu(n)."""
    return float(np.dot(u_regressor, system.w_o)) + noise


def save_system(path, system: SystemModel) -> None:
    lines = [f"# system M={system.M} chi={system.chi:.6f}"]
    lines += [np.format_float_positional(c, unique=True, trim="-") for c in system.w_o]
    Path(path).write_text("\n".join(lines) + "\n")


def load_system(path, label: str | None = None) -> SystemModel:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# system"):
        raise ValueError(f"{path}: missing '# system M=<m> chi=<chi>' header")
    fields = dict(tok.split("=", 1) for tok in text[0][len("# system"):].split())
    try:
        M = int(fields["M"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header {text[0]!r}") from exc
    taps = [float(line) for line in text[1:] if line.strip() and not line.startswith("#")]
    if len(taps) != M:
        raise ValueError(f"{path}: header says M={M} but found {len(taps)} taps")
    w = np.array(taps)
    if label is None:
        label = "sparse" if sparseness(w) >= 0.5 else "dispersive"
    return SystemModel(w, label)
