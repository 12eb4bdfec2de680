"""Blue-sideband fluorescence signal: synthesis, shot noise, and inversion.

The model signal for motional populations P_n is

    P_down(tau) = 1/2 [1 + sum_n P_n cos(2 Omega_{n,n+1} tau) exp(-gamma_n tau)],

with gamma_n = gamma0 (n + 1)^p.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, hilbert
from scipy.stats import poisson

from .dynamics import CouplingParams, Transition, _pair_omegas
from .errors import IllConditionedError

DEFAULT_SHOTS = 4000
COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class SignalRecord:
    """P_down sampled on a tau grid.

    ``metadata`` holds g, eta, gamma0, p (decay exponent), shots and seed;
    ``shots_per_point`` is 0 for a noise-free record.
    """

    tau_grid: np.ndarray
    p_down: np.ndarray
    shots_per_point: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        tau = np.array(self.tau_grid, dtype=float)
        p = np.array(self.p_down, dtype=float)
        if tau.ndim != 1 or tau.shape != p.shape:
            raise ValueError("tau_grid and p_down must be 1-D arrays of equal length")
        if np.any(np.diff(tau) <= 0):
            raise ValueError("tau_grid must be strictly increasing")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("p_down entries must lie in [0, 1]")
        tau.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "p_down", p)
        object.__setattr__(self, "metadata", dict(self.metadata))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tau", "p_down"])
        for t, v in zip(self.tau_grid, self.p_down):
            writer.writerow([f"{t:.12g}", f"{v:.12g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def metadata_json(self) -> str:
        keys = ("g", "eta", "gamma0", "p", "shots", "seed")
        meta = {k: self.metadata.get(k) for k in keys}
        return json.dumps(meta, indent=2, sort_keys=True) + "\n"

    def save(self, csv_path) -> None:
        """CSV plus a ``.json`` metadata sidecar next to it."""
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        csv_path.with_suffix(".json").write_text(self.metadata_json())

    @classmethod
    def load(cls, csv_path) -> SignalRecord:
        csv_path = Path(csv_path)
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        return cls(data[:, 0], data[:, 1], int(meta.get("shots") or 0), meta)


def blue_frequencies(c: CouplingParams, n_count: int) -> np.ndarray:
    """Omega_{n,n+1} for n = 0 .. n_count-1."""
    return np.array(_pair_omegas(c.g, c.eta, c.ld_limit, Transition.BLUE_SB, n_count + 1)[:n_count])


def decay_rates(n_count: int, gamma0: float, decay_exponent: float) -> np.ndarray:
    return gamma0 * (np.arange(n_count) + 1.0) ** decay_exponent


def _basis(tau: np.ndarray, c: CouplingParams, n_count: int, gamma0: float, decay_exponent: float) -> np.ndarray:
    """Columns cos(2 Omega_n tau) exp(-gamma_n tau) / 2."""
    w = blue_frequencies(c, n_count)
    g = decay_rates(n_count, gamma0, decay_exponent)
    return 0.5 * np.cos(2 * np.outer(tau, w)) * np.exp(-np.outer(tau, g))


def _check_probabilities(P_n) -> np.ndarray:
    P = np.asarray(P_n, dtype=float)
    if P.ndim != 1 or P.size == 0:
        raise ValueError("P_n must be a non-empty 1-D vector")
    if np.any(P < -1e-12):
        raise ValueError("P_n must be non-negative")
    if abs(P.sum() - 1) > 1e-9:
        raise ValueError(f"P_n must sum to 1 within 1e-9, got {P.sum()!r}")
    return P


def synthesize_signal(P_n, c: CouplingParams, gamma0: float = 0.0, decay_exponent: float = 0.0,
                      tau_grid=None) -> SignalRecord:
    """Noise-free blue-sideband signal for motional populations ``P_n``."""
    P = _check_probabilities(P_n)
    if gamma0 < 0:
        raise ValueError("gamma0 must be >= 0")
    tau = default_tau_grid(c) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    p = 0.5 + _basis(tau, c, P.size, gamma0, decay_exponent) @ P
    meta = {"g": c.g, "eta": c.eta, "gamma0": gamma0, "p": decay_exponent, "shots": 0, "seed": None,
            "ld_limit": c.ld_limit}
    return SignalRecord(tau, np.clip(p, 0.0, 1.0), 0, meta)


def default_tau_grid(c: CouplingParams, n_fit: int = 10, points_per_period: int = 12) -> np.ndarray:
    """Uniform grid starting at 0 that resolves the first ``n_fit`` blue-sideband frequencies.

    The span is the smallest allowed by :func:`required_span` (10% margin) and
    the step samples the fastest component ``points_per_period`` times.
    """
    w = 2 * blue_frequencies(c, n_fit + 1)
    span = 1.1 * required_span(c, n_fit)
    dt = 2 * np.pi / (points_per_period * w.max())
    return np.linspace(0.0, span, int(np.ceil(span / dt)) + 1)


def required_span(c: CouplingParams, n_max_fit: int) -> float:
    """2 pi / (smallest gap between adjacent fit frequencies 2 Omega_{n,n+1})."""
    w = 2 * blue_frequencies(c, n_max_fit + 1)
    gaps = np.abs(np.diff(w))
    if gaps.size == 0:
        return 0.0
    if gaps.min() == 0:
        raise IllConditionedError("degenerate sideband frequencies", np.inf)
    return float(2 * np.pi / gaps.min())


def sample_signal(clean: SignalRecord, shots: int = DEFAULT_SHOTS, seed: int = 0) -> SignalRecord:
    """Binomial(shots, p) / shots at every point, from ``numpy.random.default_rng(seed)``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    counts = rng.binomial(shots, clean.p_down)
    meta = dict(clean.metadata, shots=shots, seed=seed)
    return SignalRecord(clean.tau_grid, counts / shots, shots, meta)


@dataclass(frozen=True)
class PopulationEstimate:
    """Inverted populations.

    ``raw`` is the unconstrained least-squares solution, ``populations`` the
    clipped and renormalized version, ``stderr`` the standard errors of the raw
    coefficients.
    """

    populations: np.ndarray
    stderr: np.ndarray
    raw: np.ndarray
    condition_number: float
    residual_rms: float


def invert_populations(sig: SignalRecord, n_max_fit: int, c: CouplingParams, gamma0: float = 0.0,
                       decay_exponent: float = 0.0, method: str = "lstsq") -> PopulationEstimate:
    """Recover P_0..P_{n_max_fit} from a blue-sideband signal.

    ``method="lstsq"`` fits the damped-cosine model at the known frequencies.
    ``method="cosine"`` projects onto each cosine separately (a discrete
    cosine transform at the known frequencies); it needs a uniform grid and is
    only a cross-check, since it ignores the overlap between components.

    Raises:
        ValueError: if the grid span cannot separate adjacent frequencies.
        IllConditionedError: if the design matrix condition number exceeds 1e8.
    """
    if n_max_fit < 0:
        raise ValueError("n_max_fit must be >= 0")
    tau = sig.tau_grid
    span = tau[-1] - tau[0]
    needed = required_span(c, n_max_fit)
    if span < needed:
        raise ValueError(f"tau grid spans {span:.3g} s but {needed:.3g} s are needed to resolve n <= {n_max_fit}")
    n_count = n_max_fit + 1
    A = _basis(tau, c, n_count, gamma0, decay_exponent)
    b = sig.p_down - 0.5
    cond = float(np.linalg.cond(A))
    if cond > COND_LIMIT:
        raise IllConditionedError(f"signal design matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}", cond)
    if method == "lstsq":
        raw, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = b - A @ raw
        dof = max(len(b) - n_count, 1)
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    elif method == "cosine":
        steps = np.diff(tau)
        if not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("the cosine method needs a uniform tau grid")
        norms = np.sum(A * A, axis=0)
        raw = (A.T @ b) / norms
        resid = b - A @ raw
        stderr = np.full(n_count, np.sqrt(float(resid @ resid) / max(len(b) - n_count, 1)) / np.sqrt(norms))
    else:
        raise ValueError(f"unknown inversion method {method!r}")
    clipped = np.clip(raw, 0, None)
    total = clipped.sum()
    if total <= 0:
        raise ValueError("inversion produced no positive population")
    return PopulationEstimate(clipped / total, stderr, raw, cond, float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class PoissonFit:
    n_bar: float
    stderr: float


def fit_poissonian(P_n, weights=None) -> PoissonFit:
    """Least-squares fit of a Poisson(n_bar) distribution to ``P_n``.

    ``weights`` are per-point inverse standard errors (default uniform).
    """
    P = np.asarray(P_n, dtype=float)
    if P.ndim != 1 or P.size == 0 or not np.all(np.isfinite(P)):
        raise ValueError("P_n must be a finite 1-D vector")
    if not np.any(P > 0):
        raise ValueError("P_n has no positive entry")
    n = np.arange(P.size)
    wts = np.ones_like(P) if weights is None else np.asarray(weights, dtype=float)
    mean = float(n @ P / P.sum())

    def resid(x):
        return wts * (poisson.pmf(n, x[0]) - P)

    sol = least_squares(resid, [max(mean, 1e-6)], bounds=([0.0], [np.inf]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    n_bar = float(sol.x[0])
    # the trust-region solver stops just inside the bound; take the bound if it is no worse
    if 0.5 * np.sum(resid([0.0]) ** 2) <= sol.cost:
        n_bar = 0.0
    J = sol.jac
    dof = max(P.size - 1, 1)
    s2 = 2 * sol.cost / dof
    jtj = float(J[:, 0] @ J[:, 0])
    stderr = float(np.sqrt(s2 / jtj)) if jtj > 0 else float("inf")
    return PoissonFit(n_bar, stderr)


def revival_time(c: CouplingParams, n_bar: float) -> float:
    """Lamb-Dicke estimate of the first revival of a coherent-state signal.

    Adjacent components beat at 2 g eta (sqrt(n+2) - sqrt(n+1)) near n = n_bar,
    and the signal rephases after one beat period.
    """
    if n_bar < 0:
        raise ValueError("n_bar must be >= 0")
    gap = 2 * c.g * c.eta * (np.sqrt(n_bar + 2) - np.sqrt(n_bar + 1))
    return float(2 * np.pi / gap)


@dataclass(frozen=True)
class RevivalDetection:
    collapse_time: float
    revival_time: float
    revival_amplitude: float
    plateau_amplitude: float


def detect_revival(sig: SignalRecord, collapse_fraction: float = 0.5, prominence: float = 0.05) -> RevivalDetection | None:
    """Find the collapse and the first envelope peak after it.

    The envelope is the magnitude of the analytic signal of P_down - 1/2.
    The collapse is where it first falls below ``collapse_fraction`` of its
    initial value; the revival is the first later envelope peak with the given
    prominence.  Returns ``None`` if either is missing.
    """
    env = np.abs(hilbert(sig.p_down - 0.5))
    ref = env[: max(3, len(env) // 100)].max()
    below = np.nonzero(env < collapse_fraction * ref)[0]
    if below.size == 0:
        return None
    i0 = below[0]
    # smooth out fast ripple so peaks track the slow envelope
    width = max(1, len(env) // 200)
    smooth = np.convolve(env, np.ones(width) / width, mode="same")
    peaks, _ = find_peaks(smooth[i0:], prominence=prominence)
    if peaks.size == 0:
        return None
    ip = i0 + peaks[0]
    plateau = float(smooth[i0:ip].min())
    return RevivalDetection(float(sig.tau_grid[i0]), float(sig.tau_grid[ip]), float(smooth[ip]), plateau)
