"""Truncated harmonic-oscillator space coupled to a three-level ion.

States are stored densely.  A :class:`HybridState` always carries all three
internal levels (DOWN, UP, AUX) so that gate code can index levels uniformly,
even when AUX is never populated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import TruncationError, TruncationWarning

NORM_TOL = 1e-10
TRUNCATION_TOL = 1e-6
DEFAULT_HEADROOM = 5


class InternalLevel(IntEnum):
    """Internal ion levels; the integer value is the row index in a HybridState."""

    DOWN = 0
    UP = 1
    AUX = 2

    @property
    def sigma_z(self) -> int:
        if self is InternalLevel.AUX:
            raise ValueError("AUX has no sigma_z eigenvalue")
        return 1 if self is InternalLevel.UP else -1


N_LEVELS = len(InternalLevel)


@dataclass(frozen=True)
class FockSpace:
    """Number states |0>, ..., |n_max> of one motional mode."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def lowering(self) -> np.ndarray:
        return _lowering(self.dim)

    def raising(self) -> np.ndarray:
        return _lowering(self.dim).T

    def number(self) -> np.ndarray:
        return np.diag(np.arange(self.dim, dtype=float))

    def basis(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.n_max:
            raise TruncationError(f"|{n}> is outside the space with n_max={self.n_max}")
        v = np.zeros(self.dim, dtype=complex)
        v[n] = 1.0
        return v


@lru_cache(maxsize=64)
def _lowering(dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    a.setflags(write=False)
    return a


def check_truncation(populations, headroom: int = DEFAULT_HEADROOM, tol: float = TRUNCATION_TOL) -> float:
    """Warn if population sits within ``headroom`` levels of the top of the space.

    Returns the population found in the top ``headroom`` levels.
    """
    p = np.asarray(populations, dtype=float)
    n_max = p.size - 1
    top = float(p[max(n_max - headroom + 1, 0):].sum())
    if top > tol:
        warnings.warn(
            f"population {top:.3g} within {headroom} levels of n_max={n_max}; "
            "increase n_max",
            TruncationWarning,
            stacklevel=3,
        )
    return top


@dataclass(frozen=True, eq=False)
class HybridState:
    """Pure state of one ion: amplitudes indexed ``[level, n]``.

    ``amplitudes`` has shape ``(3, n_max + 1)``.  The norm is checked on
    construction; use :meth:`from_amplitudes` with ``normalize=True`` to
    build one from unnormalized data.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != N_LEVELS or amps.shape[1] < 2:
            raise ValueError(f"amplitudes must have shape (3, n_max+1), got {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm!r} differs from 1 by more than {NORM_TOL}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> HybridState:
        amps = np.array(amplitudes, dtype=complex)
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps)

    @classmethod
    def product(cls, level: InternalLevel, motional) -> HybridState:
        """|level> (x) |motional>."""
        motional = np.asarray(motional, dtype=complex)
        amps = np.zeros((N_LEVELS, motional.size), dtype=complex)
        amps[InternalLevel(level)] = motional
        return cls(amps)

    @classmethod
    def basis(cls, level: InternalLevel, n: int, space: FockSpace) -> HybridState:
        return cls.product(level, space.basis(n))

    @classmethod
    def superposition(cls, terms, space: FockSpace) -> HybridState:
        """Normalized sum of ``coefficient * |level, n>`` over ``(coefficient, level, n)`` terms."""
        amps = np.zeros((N_LEVELS, space.dim), dtype=complex)
        for coeff, level, n in terms:
            amps[InternalLevel(level), n] += coeff
        return cls.from_amplitudes(amps, normalize=True)

    @property
    def n_max(self) -> int:
        return self.amplitudes.shape[1] - 1

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.n_max)

    def level(self, level: InternalLevel) -> np.ndarray:
        """Unnormalized motional amplitudes attached to one internal level."""
        return self.amplitudes[InternalLevel(level)].copy()

    def level_population(self, level: InternalLevel) -> float:
        return float(np.sum(np.abs(self.amplitudes[InternalLevel(level)]) ** 2))

    def vector(self) -> np.ndarray:
        """Flattened amplitudes, level-major: index = level * (n_max+1) + n."""
        return self.amplitudes.reshape(-1).copy()

    def motional_density(self) -> MotionalDensityMatrix:
        """Reduced motional state, tracing out the internal levels."""
        a = self.amplitudes
        return MotionalDensityMatrix(a.T @ a.conj())

    def overlap(self, other: HybridState) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class MotionalDensityMatrix:
    """Motional density matrix in the number basis.

    With ``strict=False`` the non-negativity check on the diagonal is skipped;
    linear reconstructions use this since they do not enforce positivity.
    """

    elements: np.ndarray
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
            raise ValueError(f"density matrix must be square with dim >= 2, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > NORM_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace {tr!r} differs from 1")
        if self.strict and np.min(np.diag(rho).real) < -NORM_TOL:
            raise ValueError("density matrix has negative diagonal entries")
        rho = 0.5 * (rho + rho.conj().T)
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    @classmethod
    def pure(cls, vector) -> MotionalDensityMatrix:
        v = np.asarray(vector, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def from_populations(cls, populations) -> MotionalDensityMatrix:
        return cls(np.diag(np.asarray(populations, dtype=complex)))

    @property
    def n_max(self) -> int:
        return self.elements.shape[0] - 1

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.n_max)

    def populations(self) -> np.ndarray:
        return np.diag(self.elements).real.copy()

    def mean_n(self) -> float:
        return float(np.arange(self.n_max + 1) @ self.populations())

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.elements)

    def embed(self, space: FockSpace) -> MotionalDensityMatrix:
        """Zero-pad (or crop, if the dropped block is empty) to another space."""
        d = min(space.dim, self.n_max + 1)
        dropped = self.populations()[d:].sum()
        if dropped > TRUNCATION_TOL:
            raise TruncationError(f"cropping drops population {dropped:.3g}")
        out = np.zeros((space.dim, space.dim), dtype=complex)
        out[:d, :d] = self.elements[:d, :d]
        out /= np.trace(out).real
        return MotionalDensityMatrix(out, strict=self.strict)


def _check_displacement_budget(alpha: complex, space: FockSpace) -> None:
    if abs(alpha) ** 2 > space.n_max / 3 * (1 + 1e-12):
        raise TruncationError(
            f"|alpha|^2 = {abs(alpha) ** 2:.4g} exceeds the budget n_max/3 = {space.n_max / 3:.4g}"
        )


def coherent_amplitudes(alpha: complex, space: FockSpace) -> np.ndarray:
    """Number-basis amplitudes of the coherent state |alpha>.

    The coefficient of |0> is real and positive.  The vector is renormalized
    after truncation; a :class:`TruncationError` is raised if the discarded
    tail carries more than 1e-6 of the probability.
    """
    alpha = complex(alpha)
    _check_displacement_budget(alpha, space)
    mean = abs(alpha) ** 2
    tail = float(poisson.sf(space.n_max, mean)) if mean > 0 else 0.0
    if tail > TRUNCATION_TOL:
        raise TruncationError(f"coherent-state tail beyond n_max={space.n_max} is {tail:.3g}")
    n = np.arange(space.dim)
    if alpha == 0:
        return space.basis(0)
    log_mag = -mean / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return amps / np.linalg.norm(amps)


def coherent_state(alpha: complex, space: FockSpace, level: InternalLevel = InternalLevel.DOWN) -> HybridState:
    return HybridState.product(level, coherent_amplitudes(alpha, space))


def displacement_matrix(alpha: complex, space: FockSpace) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha* a) on the truncated space.

    The exponent is anti-Hermitian on the truncated space, so the result is
    unitary to machine precision; matrix elements near n_max are not those of
    the infinite-dimensional operator.
    """
    alpha = complex(alpha)
    _check_displacement_budget(alpha, space)
    return _displacement(alpha, space.dim).copy()


@lru_cache(maxsize=512)
def _displacement(alpha: complex, dim: int) -> np.ndarray:
    a = _lowering(dim)
    d = expm(alpha * a.T - np.conj(alpha) * a)
    d.setflags(write=False)
    return d


def motional_populations(obj) -> np.ndarray:
    """P_n for a HybridState (summed over levels), density matrix, or ket."""
    if isinstance(obj, HybridState):
        p = np.sum(np.abs(obj.amplitudes) ** 2, axis=0)
    elif isinstance(obj, MotionalDensityMatrix):
        p = obj.populations()
    else:
        v = np.asarray(obj)
        if v.ndim == 1:
            p = np.abs(v) ** 2
        elif v.ndim == 2 and v.shape[0] == v.shape[1]:
            p = np.diag(v).real
        else:
            raise TypeError(f"cannot take populations of an array with shape {v.shape}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"input is not normalized (total population {p.sum()!r})")
    return p


def position_expectation(motional) -> float:
    """<a + a^dag> for a motional ket, i.e. <x> in units of the zero-point spread x0."""
    v = np.asarray(motional, dtype=complex)
    a = _lowering(v.size)
    return float(np.real(np.vdot(v, (a + a.T) @ v)) / np.vdot(v, v).real)


def _as_density(x) -> np.ndarray:
    if isinstance(x, MotionalDensityMatrix):
        return x.elements
    m = np.asarray(x, dtype=complex)
    if m.ndim == 1:
        m = m / np.linalg.norm(m)
        return np.outer(m, m.conj())
    return m


def _pure_vector(rho: np.ndarray, tol: float = 1e-9):
    """Return the state vector if ``rho`` is pure, else None."""
    w, v = np.linalg.eigh(rho)
    if abs(w[-1] - 1.0) < tol and np.all(np.abs(w[:-1]) < tol):
        return v[:, -1]
    return None


def fidelity(a, b) -> float:
    """State fidelity between two motional states.

    If either argument is pure this is the overlap <psi|rho|psi>; otherwise
    the Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))^2.  Kets are accepted in
    place of density matrices.
    """
    ra, rb = _as_density(a), _as_density(b)
    if ra.shape != rb.shape:
        raise ValueError(f"dimension mismatch: {ra.shape} vs {rb.shape}")
    for pure_side, other in ((rb, ra), (ra, rb)):
        psi = _pure_vector(pure_side)
        if psi is not None:
            return float(np.clip(np.real(np.vdot(psi, other @ psi)), 0.0, 1.0))
    w, v = np.linalg.eigh(ra)
    sqrt_a = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = np.linalg.eigvalsh(sqrt_a @ rb @ sqrt_a)
    return float(np.clip(np.sum(np.sqrt(np.clip(inner, 0, None))) ** 2, 0.0, 1.0))
