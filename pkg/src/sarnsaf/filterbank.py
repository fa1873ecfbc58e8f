"""Cosine-modulated (pseudo-QMF) analysis filter banks.

The prototype is a Kaiser-window lowpass whose cutoff is tuned so that the
modulated bank is as close to power complementary as possible. Stopband
attenuation is measured against the non-adjacent bands: each analysis filter
may overlap its two neighbours, everything farther away must sit below the
attenuation target.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, signal

GRID_POINTS = 4096
# max relative deviation of sum_i |H_i|^2 from its mean accepted for a design
COMPLEMENTARITY_TOL = 0.02


class DesignError(ValueError):
    """Raised when a prototype cannot meet the requested specification."""


@dataclass(frozen=True)
class PrototypeFilter:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("prototype must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("prototype coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    @property
    def L(self) -> int:
        return self.coefficients.size


@dataclass(frozen=True)
class AnalysisBank:
    filters: np.ndarray  # shape (N, L)

    @property
    def N(self) -> int:
        return self.filters.shape[0]

    @property
    def L(self) -> int:
        return self.filters.shape[1]

    def centers(self) -> np.ndarray:
        """Nominal band centre frequencies in rad/sample."""
        return (2 * np.arange(self.N) + 1) * np.pi / (2 * self.N)


def modulate(p: PrototypeFilter, N: int) -> AnalysisBank:
    if N < 1:
        raise ValueError("N must be >= 1")
    h = p.coefficients
    L = h.size
    n = np.arange(L) - (L - 1) / 2
    i = np.arange(N)[:, None]
    phase = (np.pi / N) * (i + 0.5) * n + (-1.0) ** i * np.pi / 4
    return AnalysisBank(2.0 * h * np.cos(phase))


def frequency_response(bank: AnalysisBank, n_points: int = GRID_POINTS):
    """Return (omega, H) with H of shape (N, n_points) on [0, pi)."""
    omega = np.pi * np.arange(n_points) / n_points
    H = np.stack([signal.freqz(h, worN=omega)[1] for h in bank.filters])
    return omega, H


def complementarity_error(bank: AnalysisBank, n_points: int = GRID_POINTS) -> float:
    """max |sum_i |H_i|^2 - c| / c, with c the grid mean of the power sum."""
    _, H = frequency_response(bank, n_points)
    power = np.sum(np.abs(H) ** 2, axis=0)
    c = power.mean()
    return float(np.max(np.abs(power - c)) / c)


def stopband_mask(omega: np.ndarray, center: float, N: int) -> np.ndarray:
    # distance to the nearest spectral image of the band centre, images at +-center mod 2pi
    images = np.array([center, -center, 2 * np.pi - center])
    dist = np.min(np.abs(omega[:, None] - images[None, :]), axis=1)
    return dist >= 3 * np.pi / (2 * N)


def stopband_attenuation(bank: AnalysisBank, n_points: int = GRID_POINTS) -> np.ndarray:
    """Per-band attenuation in dB (positive numbers): passband peak over worst stopband."""
    omega, H = frequency_response(bank, n_points)
    mag = np.abs(H)
    out = np.empty(bank.N)
    for i, center in enumerate(bank.centers()):
        mask = stopband_mask(omega, center, bank.N)
        out[i] = 20 * np.log10(mag[i].max() / mag[i, mask].max())
    return out


def _kaiser_prototype(L: int, cutoff: float, beta: float) -> np.ndarray:
    # cutoff in units of pi rad/sample
    return signal.firwin(L, cutoff, window=("kaiser", beta))


def design_prototype(N: int, L: int, attenuation_db: float = 60.0) -> PrototypeFilter:
    """Design a Kaiser-window pseudo-QMF prototype.

    The Kaiser beta follows from ``attenuation_db``; the cutoff is then
    searched on [0.75, 1.5] x pi/(2N) for minimum power-complementarity error
    of the modulated bank.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if L < 2 * N:
        raise ValueError(f"L must be >= 2N (got L={L}, N={N})")
    if attenuation_db <= 0:
        raise ValueError("attenuation_db must be positive")

    beta = signal.kaiser_beta(attenuation_db)
    nominal = 1.0 / (2 * N)

    def objective(cutoff):
        return complementarity_error(modulate(PrototypeFilter(_kaiser_prototype(L, cutoff, beta)), N))

    res = optimize.minimize_scalar(
        objective,
        bounds=(0.75 * nominal, 1.5 * nominal),
        method="bounded",
        options={"xatol": 1e-9},
    )
    proto = PrototypeFilter(_kaiser_prototype(L, float(res.x), beta))
    bank = modulate(proto, N)
    worst = stopband_attenuation(bank).min()
    if worst < attenuation_db:
        raise DesignError(
            f"L={L} reaches only {worst:.1f} dB stopband attenuation for N={N} "
            f"(target {attenuation_db} dB)"
        )
    if res.fun > COMPLEMENTARITY_TOL:
        raise DesignError(
            f"power-complementarity error {res.fun:.3g} exceeds {COMPLEMENTARITY_TOL}"
        )
    return proto


def design_bank(N: int = 4, L: int = 33, attenuation_db: float = 60.0) -> AnalysisBank:
    return modulate(design_prototype(N, L, attenuation_db), N)


def analyze(bank: AnalysisBank, x) -> np.ndarray:
    """Filter ``x`` through every band with zero initial state. Returns (N, len(x))."""
    x = np.asarray(x, dtype=float)
    return np.stack([signal.lfilter(h, 1.0, x) for h in bank.filters])


def decimate(streams: np.ndarray, N: int) -> np.ndarray:
    """Keep samples at n = kN."""
    return streams[..., ::N]


def save_prototype(path, p: PrototypeFilter, N: int) -> None:
    lines = [f"# prototype N={N} L={p.L}"]
    lines += [np.format_float_positional(c, unique=True, trim="-") for c in p.coefficients]
    Path(path).write_text("\n".join(lines) + "\n")


def load_prototype(path) -> tuple[PrototypeFilter, int]:
    """Read a prototype file; returns the prototype and the band count from its header."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# prototype"):
        raise ValueError(f"{path}: missing '# prototype N=<n> L=<l>' header")
    fields = dict(tok.split("=", 1) for tok in text[0][len("# prototype"):].split())
    try:
        N, L = int(fields["N"]), int(fields["L"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header {text[0]!r}") from exc
    coeffs = [float(line) for line in text[1:] if line.strip() and not line.startswith("#")]
    if len(coeffs) != L:
        raise ValueError(f"{path}: header says L={L} but found {len(coeffs)} coefficients")
    return PrototypeFilter(np.array(coeffs)), N
