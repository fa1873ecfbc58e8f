"""Monte-Carlo identification experiments producing NMSD learning curves."""

from __future__ import annotations

import dataclasses
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .aop import AdaptiveRho, SubbandStats
from .core import (
    DivergenceError,
    LeastSquares,
    LogPenalty,
    ModifiedHuber,
    NullPenalty,
    coarse_update,
    penalty_direction,
    subband_errors,
)
from .filterbank import AnalysisBank, analyze, design_bank, load_prototype, modulate
from .scenario import NoiseModel, SystemModel, gen_ar1, load_system, synth_system

log = logging.getLogger(__name__)

NMSD_FLOOR_DB = -300.0
DECIMALS = 10


@dataclass(frozen=True)
class Algorithm:
    criterion: str  # "ls" | "mh"
    step: str  # "fixed" | "aop"
    rho: str  # "zero" | "fixed" | "aop"


ALGORITHMS = {
    "NSAF": Algorithm("ls", "fixed", "zero"),
    "RNSAF": Algorithm("mh", "fixed", "zero"),
    "SA-NSAF": Algorithm("ls", "fixed", "fixed"),
    "SA-RNSAF": Algorithm("mh", "fixed", "fixed"),
    "AOP-NSAF": Algorithm("ls", "aop", "zero"),
    "AOP-RNSAF": Algorithm("mh", "aop", "zero"),
    "AOP-SA-NSAF": Algorithm("ls", "aop", "aop"),
    "AOP-SA-RNSAF": Algorithm("mh", "aop", "aop"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    M: int = 512
    N: int = 4
    bank_length: int = 33
    atten_db: float = 60.0
    prototype_file: str | None = None
    total_samples: int = 160_000
    runs: int = 50
    algo: str = "AOP-SA-RNSAF"
    theta: float = 0.005
    lam: float = 0.99
    nw: int = 20
    kappa: float = 6.0
    eps1: float = 1e-5
    eps2: float = 1e-5
    delta_reg: float = 1e-8
    mu: float = 1.0
    rho: float = 0.0
    noise: str = "stable"
    alpha: float = 1.6
    gamma: float = 0.02
    sigma2: float = 0.0
    pole: float = 0.9
    system: str = "sparse"
    chi: float = 0.9357
    system_file: str | None = None
    active_taps: int = 16
    switch_system: str = "dispersive"
    switch_chi: float = 0.3663
    switch_file: str | None = None
    switch_at: int = 80_000
    seed: int = 0
    nmsd_stride: int = 1
    fullband_error: bool = False
    workers: int = 1
    engine: str = "compiled"  # "compiled" | "numpy"

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {sorted(ALGORITHMS)}")
        if self.engine not in ("compiled", "numpy"):
            raise ValueError(f"engine must be 'compiled' or 'numpy', got {self.engine!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0 <= self.switch_at <= self.total_samples:
            raise ValueError("switch_at must lie in [0, total_samples]")
        for name in ("M", "N", "total_samples", "nmsd_stride", "workers", "nw", "bank_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("theta", "eps1", "eps2", "atten_db"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mu < 0 or self.rho < 0 or self.delta_reg < 0:
            raise ValueError("mu, rho and delta_reg must be non-negative")
        self.noise_model()  # validates noise parameters

    @property
    def algorithm(self) -> Algorithm:
        return ALGORITHMS[self.algo]

    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise, self.alpha, self.gamma, self.sigma2)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _convert(field: dataclasses.Field, raw: str):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    if kind.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: not a boolean: {raw!r}")
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(known[key], raw)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {raw!r}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


# --- learning curves -----------------------------------------------------


def _quantize(x: np.ndarray) -> np.ndarray:
    # value-preserving through a fixed-decimal text round trip
    return np.array([float(f"{v:.{DECIMALS}f}") for v in x])


def to_db(ratio) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=float)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(ratio)
    return np.maximum(db, NMSD_FLOOR_DB)


@dataclass(eq=False)
class LearningCurve:
    samples: np.ndarray
    msd: np.ndarray  # linear ||w - w_o||^2 / ||w_o||^2
    runs: int = 1
    divergences: int = 0
    e_fullband: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int64)
        self.msd = np.asarray(self.msd, dtype=float)
        self.nmsd_db = _quantize(to_db(self.msd))
        if self.e_fullband is not None:
            self.e_fullband = _quantize(np.asarray(self.e_fullband, dtype=float))

    def steady_state_db(self, start: int, stop: int) -> float:
        """dB of the mean linear deviation over samples in [start, stop)."""
        sel = (self.samples >= start) & (self.samples < stop)
        if not sel.any():
            raise ValueError(f"no reported samples in [{start}, {stop})")
        return float(to_db(self.msd[sel].mean()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = "sample,nmsd_db" + (",e_fullband" if self.e_fullband is not None else "")
        buf.write(cols + "\n")
        for j, n in enumerate(self.samples):
            row = f"{n},{self.nmsd_db[j]:.{DECIMALS}f}"
            if self.e_fullband is not None:
                row += f",{self.e_fullband[j]:.{DECIMALS}f}"
            buf.write(row + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        if header[:2] != ["sample", "nmsd_db"]:
            raise ValueError(f"unexpected CSV header {lines[0]!r}")
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]]).reshape(-1, len(header))
        e = data[:, 2] if len(header) > 2 else None
        return cls(data[:, 0].astype(np.int64), 10 ** (data[:, 1] / 10), e_fullband=e)

    @classmethod
    def read_csv(cls, path) -> "LearningCurve":
        return cls.from_csv(Path(path).read_text())


def nmsd(w, w_o) -> float:
    """NMSD in dB, floored at -300 dB."""
    w_o = np.asarray(w_o, dtype=float)
    den = float(w_o @ w_o)
    if den == 0:
        raise ValueError("NMSD undefined for a zero system")
    dev = np.asarray(w, dtype=float) - w_o
    return float(to_db(float(dev @ dev) / den))


# --- experiment setup ----------------------------------------------------


def build_bank(cfg: ExperimentConfig) -> AnalysisBank:
    if cfg.prototype_file:
        proto, n = load_prototype(cfg.prototype_file)
        if n != cfg.N:
            raise ValueError(f"prototype file is for N={n}, config has N={cfg.N}")
        return modulate(proto, cfg.N)
    return design_bank(cfg.N, cfg.bank_length, cfg.atten_db)


def _system(cfg, kind, chi, path, rng) -> SystemModel:
    if path:
        s = load_system(path, kind)
        if s.M != cfg.M:
            raise ValueError(f"{path}: system has {s.M} taps, config has M={cfg.M}")
        return s
    return synth_system(cfg.M, kind, chi, rng, active_taps=cfg.active_taps)


def build_systems(cfg: ExperimentConfig) -> tuple[SystemModel, SystemModel | None]:
    """Unknown systems before and after the switch, fixed across runs."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
    first = _system(cfg, cfg.system, cfg.chi, cfg.system_file, rng)
    second = None
    if cfg.switch_at < cfg.total_samples:
        second = _system(cfg, cfg.switch_system, cfg.switch_chi, cfg.switch_file, rng)
    return first, second


def trial_seeds(cfg: ExperimentConfig) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(cfg.seed).spawn(2)[1].spawn(cfg.runs)


def _criterion(cfg):
    if cfg.algorithm.criterion == "mh":
        return ModifiedHuber(cfg.N, cfg.lam, cfg.nw)
    return LeastSquares()


def _penalty(cfg):
    return NullPenalty() if cfg.algorithm.rho == "zero" else LogPenalty(cfg.theta)


# --- single trial --------------------------------------------------------


@dataclass
class _Streams:
    u: np.ndarray
    d: np.ndarray
    uf: np.ndarray  # (N, T) subband inputs
    df: np.ndarray  # (N, T) subband desired signals
    rev: np.ndarray  # (N, T+M-1) time-reversed zero-padded uf
    urev: np.ndarray | None
    switch_k: int  # first iteration using the second system, K if none


def _prepare(cfg, seed, systems, bank) -> _Streams:
    M, N, T = cfg.M, cfg.N, cfg.total_samples
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    input_ss, noise_ss = ss.spawn(2)
    u = gen_ar1(cfg.pole, T, np.random.default_rng(input_ss))
    nu = cfg.noise_model().sample(T, np.random.default_rng(noise_ss))
    first, second = systems
    y = signal.lfilter(first.w_o, 1.0, u)
    if second is not None:
        y[cfg.switch_at:] = signal.lfilter(second.w_o, 1.0, u)[cfg.switch_at:]
    d = y + nu
    uf = analyze(bank, u)
    df = analyze(bank, d)
    # row slice [a, a+M) with a = T-1-kN is the regressor u_i(k)
    rev = np.ascontiguousarray(np.concatenate([np.zeros((N, M - 1)), uf], axis=1)[:, ::-1])
    urev = None
    if cfg.fullband_error:
        urev = np.ascontiguousarray(np.concatenate([np.zeros(M - 1), u])[::-1])
    K = -(-T // N)
    switch_k = K if second is None else -(-cfg.switch_at // N)
    return _Streams(u, d, uf, df, rev, urev, switch_k)


def _run_numpy(cfg, st: _Streams, systems, criterion, penalty):
    M, N, T = cfg.M, cfg.N, cfg.total_samples
    algo = cfg.algorithm
    stats = SubbandStats(N, M, cfg.kappa, cfg.eps1, cfg.eps2) if algo.step == "aop" else None
    rho_ctl = AdaptiveRho(cfg.eps1) if algo.rho == "aop" else None
    mu = np.full(N, cfg.mu)
    fixed_rho = cfg.rho if algo.rho == "fixed" else 0.0
    delta = cfg.delta_reg

    K = -(-T // N)
    stride = cfg.nmsd_stride
    n_rep = -(-K // stride)
    msd = np.empty(n_rep)
    efb = np.zeros(n_rep)

    first, second = systems
    w = np.zeros(M)
    w_o = first.w_o
    wo_energy = float(w_o @ w_o)
    for k in range(K):
        n = k * N
        if k == st.switch_k:
            w_o = second.w_o
            wo_energy = float(w_o @ w_o)
        a = T - 1 - n
        if k % stride == 0:
            dev = w - w_o
            msd[k // stride] = float(dev @ dev) / wo_energy
            if st.urev is not None:
                efb[k // stride] = st.d[n] - float(st.urev[a:a + M] @ w)

        U = st.rev[:, a:a + M]
        norms = np.einsum("ij,ij->i", U, U)
        e = subband_errors(w, U, st.df[:, n])
        criterion.update(e)
        phi = criterion.scaling(e)
        if stats is not None:
            mu = stats.update(phi, e, st.uf[:, n], U)
        psi = coarse_update(w, U, e, phi, mu, norms, delta)

        if algo.rho == "zero":
            w_next = psi
        else:
            P = penalty_direction(penalty.grad(psi), U, norms, delta)
            rho = rho_ctl.update(psi, w, P) if rho_ctl is not None else fixed_rho
            w_next = psi - rho * P

        if not np.isfinite(w_next @ w_next):
            raise DivergenceError(k)
        w = w_next
    return msd, efb


def _run_compiled(cfg, st: _Streams, systems):
    from . import _kernel as kern

    M, N, T = cfg.M, cfg.N, cfg.total_samples
    algo = cfg.algorithm
    first, second = systems
    wo2 = second.w_o if second is not None else first.w_o
    msd, efb, bad = kern.run_kernel(
        st.rev, np.ascontiguousarray(st.uf[:, ::N]), np.ascontiguousarray(st.df[:, ::N]),
        M, T, first.w_o, wo2, st.switch_k, cfg.nmsd_stride,
        kern.CRIT_MH if algo.criterion == "mh" else kern.CRIT_LS, cfg.lam, cfg.nw,
        kern.STEP_AOP if algo.step == "aop" else kern.STEP_FIXED, cfg.mu,
        1.0 - 1.0 / (cfg.kappa * M), cfg.eps1, cfg.eps2,
        {"zero": kern.RHO_ZERO, "fixed": kern.RHO_FIXED, "aop": kern.RHO_AOP}[algo.rho],
        cfg.rho, cfg.theta, cfg.delta_reg,
        st.urev is not None, st.urev if st.urev is not None else np.zeros(1), st.d,
    )
    if bad >= 0:
        raise DivergenceError(int(bad))
    return msd, efb


def run_trial(
    cfg: ExperimentConfig,
    seed=None,
    systems: tuple[SystemModel, SystemModel | None] | None = None,
    bank: AnalysisBank | None = None,
    criterion=None,
    penalty=None,
) -> LearningCurve:
    """One realisation of the identification experiment.

    Iteration k consumes the subband samples at n = kN; the curve records
    the deviation of w(k) (before the k-th update) against the system active
    at sample kN. Custom ``criterion``/``penalty`` objects force the numpy
    engine. Raises DivergenceError on non-finite weights.
    """
    if seed is None:
        seed = trial_seeds(cfg)[0]
    if systems is None:
        systems = build_systems(cfg)
    if bank is None:
        bank = build_bank(cfg)
    if cfg.kappa < 1:
        raise ValueError("kappa must be >= 1")
    st = _prepare(cfg, seed, systems, bank)
    if cfg.engine == "numpy" or criterion is not None or penalty is not None:
        msd, efb = _run_numpy(
            cfg, st, systems,
            criterion if criterion is not None else _criterion(cfg),
            penalty if penalty is not None else _penalty(cfg),
        )
    else:
        msd, efb = _run_compiled(cfg, st, systems)
    K = msd.size
    samples = np.arange(K, dtype=np.int64) * cfg.nmsd_stride * cfg.N
    return LearningCurve(samples, msd, e_fullband=efb if cfg.fullband_error else None)


# --- Monte-Carlo average -------------------------------------------------


def _trial_job(args):
    cfg, seed, systems, bank = args
    try:
        return run_trial(cfg, seed, systems, bank)
    except DivergenceError as exc:
        return exc


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> LearningCurve:
    """Average ``cfg.runs`` trials: mean of linear deviation ratios, then dB.

    Diverged trials are excluded from the mean and counted in
    ``divergences``; if every trial diverges a DivergenceError is raised.
    """
    workers = cfg.workers if workers is None else workers
    systems = build_systems(cfg)
    bank = build_bank(cfg)
    jobs = [(cfg, s, systems, bank) for s in trial_seeds(cfg)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]

    curves = [r for r in results if isinstance(r, LearningCurve)]
    failed = [r for r in results if isinstance(r, DivergenceError)]
    for i, r in enumerate(results):
        if isinstance(r, DivergenceError):
            log.warning("trial %d diverged at iteration %d", i, r.k)
    if not curves:
        raise failed[0]
    msd = np.mean([c.msd for c in curves], axis=0)
    efb = None
    if cfg.fullband_error:
        efb = np.mean([c.e_fullband for c in curves], axis=0)
    return LearningCurve(curves[0].samples, msd, runs=len(curves), divergences=len(failed), e_fullband=efb)
