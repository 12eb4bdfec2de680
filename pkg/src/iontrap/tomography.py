"""Motional-state tomography from coherently displaced number populations.

For a displacement alpha, Q_k(alpha) = <k| D(-alpha) rho D(-alpha)^dag |k>.
The s-parameterized quasiprobability is

    F(alpha, s) = (1/pi) sum_n ((s+1)/2)^n sum_{k<=n} (-1)^k C(n, k) Q_k(alpha),

which gives Q_0/pi at s = -1 and the Wigner function
W(alpha) = (2/pi) sum_k (-1)^k Q_k(alpha) at s = 0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import comb

from .dynamics import CouplingParams
from .errors import IllConditionedError
from .fockspace import FockSpace, MotionalDensityMatrix, displacement_matrix, _displacement
from .signals import default_tau_grid, invert_populations, sample_signal, synthesize_signal

RECON_COND_LIMIT = 1e10


@dataclass(frozen=True, eq=False)
class DisplacedPopulations:
    alpha: complex
    Q: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 1 or Q.size == 0:
            raise ValueError("Q must be a non-empty 1-D vector")
        if np.any(Q < -1e-10) or np.any(Q > 1 + 1e-10):
            raise ValueError("each Q_k must lie in [0, 1]")
        if Q.sum() > 1 + 1e-9:
            raise ValueError(f"sum of Q_k is {Q.sum()!r} > 1")
        Q.setflags(write=False)
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Polar sampling: every radius at ``phases_per_radius`` equally spaced phases.

    ``include_origin`` adds alpha = 0 as the first point.
    """

    radii: tuple = (0.4, 0.8, 1.2, 1.6, 2.0, 2.4)
    phases_per_radius: int = 8
    include_origin: bool = True

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if not radii or radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii must be positive and strictly increasing")
        if self.phases_per_radius < 1:
            raise ValueError("phases_per_radius must be >= 1")
        object.__setattr__(self, "radii", radii)

    def points(self) -> np.ndarray:
        """Complex alphas sorted by radius, then phase."""
        phases = 2 * np.pi * np.arange(self.phases_per_radius) / self.phases_per_radius
        pts = [r * np.exp(1j * phases) for r in self.radii]
        if self.include_origin:
            pts.insert(0, np.array([0j]))
        return np.concatenate(pts)


def displaced_populations(rho: MotionalDensityMatrix, alpha: complex) -> DisplacedPopulations:
    """Number populations of D(-alpha) rho D(-alpha)^dag."""
    D = displacement_matrix(-alpha, rho.space)
    m = D @ rho.elements @ D.conj().T
    Q = np.real(np.diag(m))
    if Q.min() < -1e-10:
        raise ValueError(f"negative displaced population {Q.min():.3g}; is rho positive?")
    return DisplacedPopulations(alpha, np.clip(Q, 0.0, 1.0))


@dataclass(frozen=True)
class Quasiprobability:
    value: float
    tail: float


def quasiprobability(Q: DisplacedPopulations, s: float, n_sum: int | None = None,
                     return_tail: bool = False):
    """Truncated double sum for F(alpha, s), s in [-1, 0].

    ``n_sum`` (default ``len(Q.Q) - 1``) is the last retained n-shell.  With
    ``return_tail`` a :class:`Quasiprobability` is returned whose ``tail`` is
    the magnitude of that last shell's contribution.
    """
    if not -1 <= s <= 0:
        raise ValueError("s must lie in [-1, 0]")
    q = Q.Q
    n_sum = q.size - 1 if n_sum is None else int(n_sum)
    if n_sum < 0:
        raise ValueError("n_sum must be >= 0")
    q = np.concatenate([q, np.zeros(max(0, n_sum + 1 - q.size))])[: n_sum + 1]
    if s == -1:
        shells = np.zeros(n_sum + 1)
        shells[0] = q[0]
    else:
        w = (s + 1) / 2
        k = np.arange(n_sum + 1)
        signs = (-1.0) ** k
        shells = np.array([w**n * np.sum(signs[: n + 1] * comb(n, k[: n + 1]) * q[: n + 1])
                           for n in range(n_sum + 1)])
    value = float(shells.sum() / np.pi)
    if return_tail:
        return Quasiprobability(value, float(abs(shells[-1]) / np.pi))
    return value


def wigner(Q: DisplacedPopulations) -> float:
    """(2/pi) times the displaced parity sum_k (-1)^k Q_k."""
    q = Q.Q
    return float(2 / np.pi * np.sum((-1.0) ** np.arange(q.size) * q))


def wigner_point(rho: MotionalDensityMatrix, alpha: complex) -> float:
    return wigner(displaced_populations(rho, alpha))


@dataclass(frozen=True, eq=False)
class WignerSurface:
    alpha: np.ndarray
    w: np.ndarray

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["re_alpha", "im_alpha", "w"])
        for a, v in zip(self.alpha, self.w):
            writer.writerow([f"{a.real:.12g}", f"{a.imag:.12g}", f"{v:.12g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def wigner_map(rho: MotionalDensityMatrix, grid: PhaseSpaceGrid | np.ndarray) -> WignerSurface:
    """W at every grid point.  Accepts a PhaseSpaceGrid or an explicit array of alphas."""
    alphas = grid.points() if isinstance(grid, PhaseSpaceGrid) else np.asarray(grid, dtype=complex).ravel()
    return WignerSurface(alphas, np.array([wigner_point(rho, a) for a in alphas]))


def disk_integral(rho: MotionalDensityMatrix, radius: float = 4.0, n_r: int = 161, n_phi: int = 64) -> float:
    """Trapezoidal integral of W over the disk |alpha| <= radius in polar coordinates.

    ``rho`` is evaluated on whatever space it lives in; embed it into a space
    large enough for the radius first.
    """
    m = rho.elements
    dim = m.shape[0]
    r = np.linspace(0.0, radius, n_r)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    parity = (-1.0) ** np.arange(dim)
    n = np.arange(dim)
    ring = np.empty(n_r)
    for i, ri in enumerate(r):
        # D(r e^{i phi}) = U D(r) U^dag with U = exp(i phi n)
        Dr = _displacement(-ri, dim)
        vals = []
        for pj in phi:
            u = np.exp(1j * pj * n)
            D = u[:, None] * Dr * u.conj()[None, :]
            q = np.real(np.einsum("kj,jl,kl->k", D, m, D.conj()))
            vals.append(2 / np.pi * parity @ q)
        ring[i] = 2 * np.pi * np.mean(vals)
    return float(trapezoid(ring * r, r))


# ------------------------------------------------------------ synthetic data


def synthetic_data(rho: MotionalDensityMatrix, grid: PhaseSpaceGrid, shots: int | None = None,
                   seed: int = 0, n_keep: int | None = None) -> list[DisplacedPopulations]:
    """Ideal Q_k(alpha) on the grid, optionally with binomial shot noise.

    Each shot lands in one k, so the counts are multinomial and every Q_k is
    marginally Binomial(shots, Q_k)/shots.  Raw fractions are kept without
    renormalization.  ``n_keep`` truncates each vector to k <= n_keep.
    """
    rng = np.random.default_rng(seed)
    data = []
    for a in grid.points():
        q = displaced_populations(rho, a).Q
        if n_keep is not None:
            q = q[: n_keep + 1]
        if shots is not None:
            if shots < 1:
                raise ValueError("shots must be >= 1")
            # one outcome per shot, with an extra bin for mass outside q
            probs = np.append(np.clip(q, 0, 1), max(0.0, 1 - q.sum()))
            q = rng.multinomial(shots, probs / probs.sum())[:-1] / shots
        data.append(DisplacedPopulations(a, q))
    return data


def measured_data(rho: MotionalDensityMatrix, grid: PhaseSpaceGrid, c: CouplingParams, n_fit: int = 10,
                  shots: int = 4000, seed: int = 0) -> list[DisplacedPopulations]:
    """Q_k(alpha) obtained through the full blue-sideband signal pipeline.

    For every alpha the displaced state's signal is synthesized, sampled with
    ``shots`` per point and inverted at ``n_fit``.  Seeds are spawned per
    alpha from ``seed``.
    """
    tau = default_tau_grid(c, n_fit)
    seeds = np.random.SeedSequence(seed).spawn(len(grid.points()))
    data = []
    for a, ss in zip(grid.points(), seeds):
        q = displaced_populations(rho, a).Q
        clean = synthesize_signal(q / q.sum(), c, tau_grid=tau)
        noisy = sample_signal(clean, shots, int(ss.generate_state(1)[0]))
        est = invert_populations(noisy, n_fit, c)
        data.append(DisplacedPopulations(a, est.populations))
    return data


# ------------------------------------------------------------ reconstruction


@dataclass(frozen=True, eq=False)
class Reconstruction:
    rho: MotionalDensityMatrix
    residual: float
    condition_number: float
    eigenvalues: np.ndarray
    n_fit: int

    def to_json(self, path=None) -> str:
        m = self.rho.elements
        payload = {
            "n_fit": self.n_fit,
            "rho": [[[float(f"{v.real:.12g}"), float(f"{v.imag:.12g}")] for v in row] for row in m],
            "residual": float(f"{self.residual:.12g}"),
            "condition_number": float(f"{self.condition_number:.12g}"),
        }
        text = json.dumps(payload, indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _parameter_blocks(n_fit: int):
    """Index pairs of the real parameters: diagonal, then Re and Im of the upper triangle."""
    diag = [(j, j) for j in range(n_fit + 1)]
    upper = [(j, l) for j in range(n_fit + 1) for l in range(j + 1, n_fit + 1)]
    return diag, upper


def reconstruct_density_matrix(data: list[DisplacedPopulations], n_fit: int,
                               n_max: int | None = None) -> Reconstruction:
    """Linear least-squares estimate of rho restricted to n <= n_fit.

    Each datum contributes Q_k(alpha) = sum_{j,l} rho_jl M_kj(alpha) conj(M_kl(alpha))
    with M = D(-alpha).  The unknowns are rho_jj, Re rho_jl and Im rho_jl for
    j < l, so the estimate is Hermitian by construction; positivity is not
    enforced.  The trace is renormalized to 1 afterwards.  ``n_max`` sets the
    working space for D (default: the longest Q vector minus one, at least
    n_fit + 10).

    Raises:
        ValueError: if the grid has fewer than 2 radii or 8 phases, or if
            there are fewer data than real parameters.
        IllConditionedError: if the design matrix condition number exceeds 1e10.
    """
    if not data:
        raise ValueError("no data")
    alphas = np.array([d.alpha for d in data])
    radii = np.unique(np.round(np.abs(alphas[np.abs(alphas) > 1e-12]), 9))
    phases = np.unique(np.round(np.mod(np.angle(alphas[np.abs(alphas) > 1e-12]), 2 * np.pi), 9))
    if radii.size < 2 or phases.size < 8:
        raise ValueError("the grid must span at least 2 radii and 8 phases")
    n_params = (n_fit + 1) ** 2
    n_rows = sum(d.Q.size for d in data)
    if n_rows < n_params:
        raise ValueError(f"{n_rows} data points cannot determine {n_params} real parameters")
    dim = max(max(d.Q.size for d in data), n_fit + 11) if n_max is None else n_max + 1
    diag, upper = _parameter_blocks(n_fit)
    rows, b = [], []
    for d in data:
        M = _displacement(-d.alpha, dim)
        K = d.Q.size
        Mk = M[:K, : n_fit + 1]
        cols = [np.abs(Mk[:, j]) ** 2 for j, _ in diag]
        prods = [Mk[:, j] * Mk[:, l].conj() for j, l in upper]
        # rho_jl M_kj conj(M_kl) + c.c. = 2 Re(rho_jl) Re(P) - 2 Im(rho_jl) Im(P)
        cols += [2 * p.real for p in prods] + [-2 * p.imag for p in prods]
        rows.append(np.column_stack(cols))
        b.append(d.Q)
    A = np.vstack(rows)
    b = np.concatenate(b)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > RECON_COND_LIMIT:
        _, _, vt = np.linalg.svd(A)
        names = [f"rho[{j},{l}]" for j, l in diag] + [f"Re rho[{j},{l}]" for j, l in upper] \
            + [f"Im rho[{j},{l}]" for j, l in upper]
        worst = vt[-1]
        top = [names[i] for i in np.argsort(-np.abs(worst))[:3]]
        raise IllConditionedError(
            f"reconstruction design matrix condition number {cond:.3g} exceeds {RECON_COND_LIMIT:g}; "
            f"weakest direction dominated by {', '.join(top)}", cond)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = float(np.linalg.norm(A @ x - b))
    rho = np.zeros((n_fit + 1, n_fit + 1), dtype=complex)
    nd, nu = len(diag), len(upper)
    for i, (j, _) in enumerate(diag):
        rho[j, j] = x[i]
    for i, (j, l) in enumerate(upper):
        rho[j, l] = x[nd + i] + 1j * x[nd + nu + i]
        rho[l, j] = np.conj(rho[j, l])
    trace = np.trace(rho).real
    if trace <= 0:
        raise ValueError("reconstructed trace is not positive")
    rho /= trace
    rho = 0.5 * (rho + rho.conj().T)
    est = MotionalDensityMatrix(rho, strict=False)
    return Reconstruction(est, residual, cond, np.linalg.eigvalsh(rho), n_fit)
