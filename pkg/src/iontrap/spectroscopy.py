"""Ramsey spectroscopy with uncorrelated and maximally entangled ions.

Free precession for a detuning delta = omega - omega_o over T_R is the
rotating-frame phase exp(-i (delta T_R / 2) sigma_z) on every ion.

* Uncorrelated: pi/2, precession, pi/2 (same phase) on each ion, read out
  <sigma_z> = cos(delta T_R).
* Entangled: GHZ preparation, precession, a pi/2 analysis pulse on every
  ion, read out the parity <prod sigma_z> = (-1)^N cos(N delta T_R).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .dynamics import CouplingParams, PulseSpec, Transition, apply_pulse, free_precession
from .fockspace import InternalLevel
from .protocols import MAX_IONS, RegisterState, prepare_ghz

SIM_TOL = 1e-9
ENTANGLED_ANALYSIS_PHASE = -np.pi / 2
# Fixed chunking of Monte Carlo replicas so results do not depend on the
# number of worker threads.
MC_CHUNKS = 16


class RamseyMode(Enum):
    UNCORRELATED = "uncorrelated"
    ENTANGLED = "entangled"


@dataclass(frozen=True)
class RamseyConfig:
    """One Ramsey experiment.

    Attributes:
        N: number of ions.
        omega: applied frequency (rad/s).
        omega_o: atomic frequency (rad/s).
        T_R: free-precession time (s).
        mode: uncorrelated or entangled.
        shots: repetitions of the sequence per frequency estimate; the total
            averaging time is shots * T_R.
        seed: master seed for Monte Carlo.
        runs: Monte Carlo replicas used to estimate the spread of the estimate.
    """

    N: int
    omega: float
    omega_o: float
    T_R: float
    mode: RamseyMode = RamseyMode.UNCORRELATED
    shots: int = 10_000
    seed: int = 0
    runs: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "mode", RamseyMode(self.mode))
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.T_R > 0:
            raise ValueError("T_R must be positive")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.runs < 2:
            raise ValueError("runs must be >= 2")

    @property
    def detuning(self) -> float:
        return self.omega - self.omega_o

    @classmethod
    def at_max_slope(cls, N: int, T_R: float, mode, omega_o: float = 0.0, **kwargs) -> RamseyConfig:
        """Config whose applied frequency sits at the steepest point of the fringe."""
        return cls(N, omega_o + max_slope_detuning(N, T_R, mode), omega_o, T_R, mode, **kwargs)


def closed_form(cfg: RamseyConfig) -> float:
    d = cfg.detuning * cfg.T_R
    if cfg.mode is RamseyMode.ENTANGLED:
        return float((-1) ** cfg.N * np.cos(cfg.N * d))
    return float(np.cos(d))


def fringe_slope(cfg: RamseyConfig) -> float:
    """d<readout>/d omega at the configured detuning."""
    d = cfg.detuning * cfg.T_R
    if cfg.mode is RamseyMode.ENTANGLED:
        return float(-((-1) ** cfg.N) * cfg.N * cfg.T_R * np.sin(cfg.N * d))
    return float(-cfg.T_R * np.sin(d))


def max_slope_detuning(N: int, T_R: float, mode) -> float:
    """Smallest positive detuning where the mode's fringe is steepest."""
    mode = RamseyMode(mode)
    n_eff = N if mode is RamseyMode.ENTANGLED else 1
    return float(np.pi / (2 * n_eff * T_R))


def _parity(tensor: np.ndarray) -> float:
    sz = np.array([-1.0, 1.0, 0.0])
    probs = np.abs(tensor) ** 2
    n_ions = tensor.ndim - 1
    total = probs.sum(axis=-1)
    for _ in range(n_ions):
        total = np.tensordot(total, sz, axes=([0], [0]))
    return float(total)


def simulate_entangled(cfg: RamseyConfig, c: CouplingParams | None = None, ghz_phase: float = 0.0) -> float:
    """<prod sigma_z> after GHZ preparation, precession and the analysis pulses.

    The analysis pulses all have phase -pi/2, giving the fringe
    (-1)^N cos(N delta T_R - ghz_phase).
    """
    if cfg.N > MAX_IONS:
        raise ValueError(f"state-vector simulation supports N <= {MAX_IONS}")
    c = CouplingParams(ld_limit=True) if c is None else c
    if cfg.N == 1:
        # a single ion: the "GHZ" state is the pi/2-pulse superposition
        t = np.zeros((3, 4), dtype=complex)
        t[InternalLevel.DOWN, 0] = 1.0
        t = apply_pulse(t, PulseSpec(Transition.CARRIER, np.pi / 2, ghz_phase + np.pi / 2), c)
    else:
        t = prepare_ghz(cfg.N, ghz_phase, c).amplitudes
    t = free_precession(t, cfg.detuning * cfg.T_R)
    chi = ENTANGLED_ANALYSIS_PHASE
    for k in range(cfg.N):
        t = apply_pulse(t, PulseSpec(Transition.CARRIER, np.pi / 2, chi, k), c)
    return _parity(RegisterState(t).amplitudes)


def simulate_uncorrelated(cfg: RamseyConfig, c: CouplingParams | None = None) -> float:
    """Per-ion <sigma_z> after pi/2, precession, pi/2 on a single ion."""
    c = CouplingParams(ld_limit=True) if c is None else c
    t = np.zeros((3, 2), dtype=complex)
    t[InternalLevel.DOWN, 0] = 1.0
    pulse = PulseSpec(Transition.CARRIER, np.pi / 2, 0.0)
    t = apply_pulse(t, pulse, c)
    t = free_precession(t, cfg.detuning * cfg.T_R)
    t = apply_pulse(t, pulse, c)
    return _parity(t)


def ramsey_pair(cfg: RamseyConfig) -> tuple[float, float | None]:
    """(closed form, simulated or None when N is too large to simulate)."""
    closed = closed_form(cfg)
    if cfg.mode is RamseyMode.UNCORRELATED:
        return closed, simulate_uncorrelated(cfg)
    if cfg.N > MAX_IONS:
        return closed, None
    return closed, simulate_entangled(cfg)


def ramsey_expectation(cfg: RamseyConfig, simulate: bool = True) -> float:
    """Fringe value for the configured detuning.

    With ``simulate`` the state-vector result is computed as well and must
    match the closed form within 1e-9 (N <= 6).
    """
    closed = closed_form(cfg)
    if not simulate:
        return closed
    if cfg.mode is RamseyMode.ENTANGLED and cfg.N > MAX_IONS:
        raise ValueError(f"simulated Ramsey path supports N <= {MAX_IONS}; pass simulate=False")
    _, sim = ramsey_pair(cfg)
    if abs(sim - closed) > SIM_TOL:
        raise RuntimeError(f"simulated fringe {sim!r} disagrees with closed form {closed!r}")
    return closed


def projection_noise_bound(N: int, T_R: float, tau_total: float, mode) -> float:
    """1/sqrt(N T_R tau) for uncorrelated ions, 1/sqrt(N^2 T_R tau) entangled."""
    mode = RamseyMode(mode)
    if tau_total < T_R:
        raise ValueError("tau_total must be >= T_R")
    if N < 1 or T_R <= 0:
        raise ValueError("N must be >= 1 and T_R > 0")
    n_eff = N**2 if mode is RamseyMode.ENTANGLED else N
    return float(1 / np.sqrt(n_eff * T_R * tau_total))


@dataclass(frozen=True)
class ClockResult:
    mode: str
    N: int
    T_R: float
    shots: int
    seed: int
    delta_omega: float
    stderr: float
    bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def _estimates(cfg: RamseyConfig, rng: np.random.Generator, runs: int, p_plus: float, slope: float,
               centre: float) -> np.ndarray:
    if cfg.mode is RamseyMode.UNCORRELATED:
        # every atom of every shot is an independent +/-1 outcome
        n_atoms = cfg.N * cfg.shots
        ups = rng.binomial(n_atoms, p_plus, size=runs)
        readout = 2 * ups / n_atoms - 1
    else:
        # one +/-1 parity outcome per shot
        plus = rng.binomial(cfg.shots, p_plus, size=runs)
        readout = 2 * plus / cfg.shots - 1
    return cfg.omega + (readout - centre) / slope


def monte_carlo_clock(cfg: RamseyConfig, threads: int = 1) -> ClockResult:
    """Frequency imprecision from simulated projection noise.

    Each replica simulates ``shots`` Ramsey sequences, averages the readout
    and converts it to a frequency estimate through the known fringe slope.
    ``delta_omega`` is the standard deviation of the estimate over
    ``cfg.runs`` replicas; ``stderr`` is its standard error.  Replicas are
    split into fixed chunks whose generators come from
    ``SeedSequence(seed).spawn``, so ``threads`` only changes speed.

    Raises:
        ValueError: if the fringe slope at the configured detuning vanishes.
    """
    slope = fringe_slope(cfg)
    if abs(slope) < 1e-9 * cfg.N * cfg.T_R:
        raise ValueError("zero fringe slope at the operating point; choose a detuning off the fringe extremum")
    centre = closed_form(cfg)
    p_plus = float(np.clip((1 + centre) / 2, 0, 1))
    sizes = [len(a) for a in np.array_split(np.arange(cfg.runs), MC_CHUNKS)]
    children = np.random.SeedSequence(cfg.seed).spawn(MC_CHUNKS)

    def work(i):
        return _estimates(cfg, np.random.default_rng(children[i]), sizes[i], p_plus, slope, centre)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(MC_CHUNKS)))
    else:
        parts = [work(i) for i in range(MC_CHUNKS)]
    est = np.concatenate(parts)
    spread = float(np.std(est, ddof=1))
    stderr = spread / np.sqrt(2 * (cfg.runs - 1))
    bound = projection_noise_bound(cfg.N, cfg.T_R, cfg.shots * cfg.T_R, cfg.mode)
    return ClockResult(cfg.mode.value, cfg.N, cfg.T_R, cfg.shots, cfg.seed, spread, stderr, bound)
