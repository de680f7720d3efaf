"""Eigenvalues, resolvent sweeps along the imaginary axis and the wave stability function."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import EigenSolverError, IrrationalXi
from .galerkin import SINGULAR_RTOL, DiscreteGenerator, assemble
from .model import ModelParams, classify_damping_point, DampingTag

MAX_MODES = 256


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_abscissa: float
    axis_gap: float
    undamped_witnesses: tuple
    N: int
    params: ModelParams

    def to_json(self) -> dict:
        return {
            "schema": "bridgelab.spectrum/1",
            "N": self.N,
            "params": self.params.to_json(),
            "spectral_abscissa": self.spectral_abscissa,
            "axis_gap": self.axis_gap,
            "undamped_witnesses": list(self.undamped_witnesses),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
        }


def undamped_modes(gen: DiscreteGenerator, atol: float = 1e-12) -> tuple:
    """Mode indices whose basis function vanishes at the damping point."""
    return tuple(int(j) for j in np.flatnonzero(np.abs(gen.phi_xi) <= atol))


def eigenvalues(gen: DiscreteGenerator) -> SpectrumReport:
    """All ``4N`` eigenvalues of ``A_N``, computed in energy coordinates."""
    if gen.N > MAX_MODES:
        raise ValueError(f"dense eigen-analysis limited to N <= {MAX_MODES}")
    try:
        ev = sla.eigvals(gen.energy_matrix)
    except sla.LinAlgError as exc:
        raise EigenSolverError(f"eigensolver did not converge: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise EigenSolverError("eigensolver returned non-finite eigenvalues")
    ev = ev[np.lexsort((ev.imag, ev.real))]
    return SpectrumReport(
        eigenvalues=ev,
        spectral_abscissa=float(np.max(ev.real)),
        axis_gap=float(np.min(np.abs(ev.real))),
        undamped_witnesses=undamped_modes(gen),
        N=gen.N,
        params=gen.params,
    )


def spectral_abscissa(params: ModelParams, N: int) -> float:
    return eigenvalues(assemble(params, N)).spectral_abscissa


def conjugate_closed(ev: np.ndarray, tol: float = 1e-8) -> bool:
    """Every eigenvalue has a conjugate partner within ``tol`` (relative to 1 + |z|)."""
    conj = np.conj(ev)
    for z in ev:
        if np.min(np.abs(conj - z)) > tol * (1.0 + abs(z)):
            return False
    return True


# ---------------------------------------------------------------------------
# resolvent sweep


@dataclass(frozen=True)
class ResolventSweep:
    lambdas: np.ndarray
    norms: np.ndarray
    sup: float

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.sup))

    def to_json(self) -> dict:
        return {
            "schema": "bridgelab.resolvent_sweep/1",
            "lambda": self.lambdas.tolist(),
            "norm": [None if not np.isfinite(v) else float(v) for v in self.norms],
            "sup": None if not np.isfinite(self.sup) else float(self.sup),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# lambda: real frequency; norm: ||(i lambda - A_N)^-1|| in the energy norm (inf = singular)\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lambda", "norm"])
        for lam, val in zip(self.lambdas, self.norms):
            writer.writerow([repr(float(lam)), repr(float(val))])
        return buf.getvalue()


def _resolvent_norm(B: np.ndarray, lam: float, threshold: float) -> float:
    smin = sla.svdvals(1j * lam * np.eye(B.shape[0]) - B)[-1]
    if smin < threshold:
        return math.inf
    return 1.0 / smin


def pruss_sweep(gen: DiscreteGenerator, lam_max: float, n_grid: int,
                lam_min: float = 0.0, threads: Optional[int] = None,
                extra_points: Sequence[float] = ()) -> ResolventSweep:
    """Sample ``||(i lambda - A_N)^{-1}||`` on a uniform grid of ``[lam_min, lam_max]``.

    Singular shifts are recorded as ``inf`` rather than raising. ``extra_points``
    are merged into the grid (useful to hit a known eigenvalue exactly).
    """
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    grid = np.linspace(lam_min, lam_max, n_grid)
    if len(extra_points):
        grid = np.unique(np.concatenate([grid, np.asarray(extra_points, dtype=float)]))
    B = gen.energy_matrix
    threshold = SINGULAR_RTOL * gen.norm
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            norms = list(pool.map(lambda lam: _resolvent_norm(B, lam, threshold), grid))
    else:
        norms = [_resolvent_norm(B, lam, threshold) for lam in grid]
    norms = np.asarray(norms)
    return ResolventSweep(lambdas=grid, norms=norms, sup=float(np.max(norms)))


# ---------------------------------------------------------------------------
# stability function of the damped wave


def F_xi(lam, params: ModelParams):
    """``cos^2(lam ell/k1) + (gamma/k1)^2 sin^2(lam xi/k1) cos^2(lam (ell-xi)/k1)``."""
    k1 = params.k1
    lam = np.asarray(lam, dtype=float)
    out = (np.cos(lam * params.ell / k1) ** 2
           + (params.gamma / k1) ** 2 * np.sin(lam * params.xi / k1) ** 2
           * np.cos(lam * (params.ell - params.xi) / k1) ** 2)
    return float(out) if out.ndim == 0 else out


def F_xi_period(params: ModelParams) -> float:
    """``2 pi k1 q / ell`` for ``xi / ell = p/q`` in lowest terms."""
    if params.xi_ratio is None:
        raise IrrationalXi("no exact period for a float damping location")
    q = Fraction(params.xi_ratio).denominator
    return 2.0 * math.pi * params.k1 * q / params.ell


def golden_section(f, a: float, b: float, xtol: float = 1e-13, maxiter: int = 200):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= xtol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass(frozen=True)
class FxiInfimum:
    minimum: float
    argmin: float
    window: tuple
    exhaustive: bool
    samples: int


def F_xi_inf(params: ModelParams, samples_per_period: int = 100_000, n_refine: int = 10,
             window: Optional[tuple] = None) -> FxiInfimum:
    """Infimum of ``F_xi`` over one period by dense sampling plus golden-section refinement.

    For a float damping location a ``window`` must be supplied and the result
    is flagged non-exhaustive.
    """
    if params.xi_ratio is not None:
        T = F_xi_period(params)
        lo, hi = 0.0, T
        exhaustive = True
    else:
        if window is None:
            raise IrrationalXi("float xi: pass a search window")
        lo, hi = float(window[0]), float(window[1])
        exhaustive = False
    n = max(int(samples_per_period), 2)
    grid = np.linspace(lo, hi, n + 1)
    vals = F_xi(grid, params)
    h = grid[1] - grid[0]
    best_x, best_f = float(grid[np.argmin(vals)]), float(np.min(vals))
    f = lambda lam: F_xi(lam, params)
    for i in np.argsort(vals)[:n_refine]:
        x, fx = golden_section(f, max(grid[i] - h, lo), min(grid[i] + h, hi))
        if fx < best_f:
            best_x, best_f = float(x), float(fx)
    return FxiInfimum(minimum=best_f, argmin=best_x, window=(lo, hi),
                      exhaustive=exhaustive, samples=n + 1)


def classify_and_spectrum(params: ModelParams, N: int) -> dict:
    """Classification of ``xi`` next to the numerical spectrum summary."""
    cls = classify_damping_point(params.ratio)
    rep = eigenvalues(assemble(params, N))
    return {
        "classification": cls.to_json(),
        "spectral_abscissa": rep.spectral_abscissa,
        "axis_gap": rep.axis_gap,
        "undamped_witnesses": list(rep.undamped_witnesses),
        "consistent": (cls.tag is DampingTag.UNDAMPED_MODE_EXISTS) == bool(rep.undamped_witnesses),
    }
