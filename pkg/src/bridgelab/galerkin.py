"""Spectral Galerkin discretisation of the linear coupled system.

The state vector is ``U = [a, adot, b, bdot]`` (length ``4N``). Projecting the
point damping ``gamma v_t(xi) delta_xi`` onto ``phi_j`` gives the rank-one term
``(2 gamma / ell) phi(xi) phi(xi)^T adot``; likewise for the deck.

Norms and singular values are measured in the energy norm. Internally this
uses the Cholesky factor ``G = L L^T`` of the energy Gram matrix: in the
coordinates ``y = L^T U`` the energy norm is Euclidean and the generator
becomes ``B = L^T A L^{-T}``, whose symmetric part is negative semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, SingularShift
from .model import ModalState, ModelParams, basis, energy_gram, mode_frequencies, validate_params

SINGULAR_RTOL = 1e-13
RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    N: int
    params: ModelParams
    phi_xi: np.ndarray
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return 4 * self.N

    @cached_property
    def gram(self) -> np.ndarray:
        return energy_gram(self.params, self.N)

    @cached_property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of the energy Gram matrix."""
        return np.linalg.cholesky(self.gram)

    @cached_property
    def energy_matrix(self) -> np.ndarray:
        """Generator in energy coordinates, ``L^T A L^{-T}``."""
        L = self.chol
        left = L.T @ self.matrix
        return sla.solve_triangular(L, left.T, lower=True).T

    @cached_property
    def norm(self) -> float:
        """Operator norm of ``A_N`` induced by the energy norm."""
        return float(np.linalg.norm(self.energy_matrix, 2))

    def to_energy(self, vec) -> np.ndarray:
        return self.chol.T @ vec

    def from_energy(self, y) -> np.ndarray:
        return sla.solve_triangular(self.chol.T, y, lower=False)

    def enorm(self, vec) -> float:
        """Energy norm ``sqrt(U^T G U)`` (real or complex ``U``)."""
        return float(np.linalg.norm(self.chol.T @ vec))

    def inner(self, u, w) -> float:
        return float(np.real(np.vdot(self.chol.T @ w, self.chol.T @ u)))

    def damping_power(self, vec) -> float:
        vec = np.asarray(vec)
        N = self.N
        vt = self.phi_xi @ vec[N:2 * N]
        ut = self.phi_xi @ vec[3 * N:]
        return float(self.params.gamma * vt ** 2 + self.params.gamma0 * ut ** 2)

    def to_json(self) -> dict:
        """Dense export; each entry is a ``[re, im]`` pair, rows in order."""
        return {
            "schema": "bridgelab.generator/1",
            "N": self.N,
            "params": self.params.to_json(),
            "layout": ["a", "adot", "b", "bdot"],
            "matrix": [[[float(x), 0.0] for x in row] for row in self.matrix],
        }


def assemble(params: ModelParams, N: int) -> DiscreteGenerator:
    """Assemble the ``4N x 4N`` first-order generator."""
    params = validate_params(params)
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    N = int(N)
    mu = mode_frequencies(N, params.ell)
    phi = basis([params.xi], N, params.ell)[0]
    I = np.eye(N)
    k = params.k
    damp = 2.0 / params.ell * np.outer(phi, phi)
    A = np.zeros((4 * N, 4 * N))
    a, ad, b, bd = (slice(i * N, (i + 1) * N) for i in range(4))
    A[a, ad] = I
    A[ad, a] = -np.diag(params.beta0 * mu ** 2) - k * I
    A[ad, b] = k * I
    A[ad, ad] = -params.gamma * damp
    A[b, bd] = I
    A[bd, b] = -np.diag(params.alpha * mu ** 4 + params.alpha0 * mu ** 2) - k * I
    A[bd, a] = k * I
    A[bd, bd] = -params.gamma0 * damp
    A.setflags(write=False)
    phi.setflags(write=False)
    return DiscreteGenerator(N=N, params=params, phi_xi=phi, matrix=A)


def _as_vector(gen: DiscreteGenerator, state) -> np.ndarray:
    vec = state.to_vector() if isinstance(state, ModalState) else np.asarray(state)
    if vec.shape != (gen.dim,):
        raise ValueError(f"state has shape {vec.shape}, expected ({gen.dim},)")
    return vec


def apply(gen: DiscreteGenerator, state):
    """``A_N U``; returns the same kind (ModalState or array) it was given."""
    vec = _as_vector(gen, state)
    out = gen.matrix @ vec
    return ModalState.from_vector(out) if isinstance(state, ModalState) else out


@dataclass(frozen=True)
class ShiftedSolveReport:
    shift: complex
    solution: np.ndarray
    sigma_min: float
    residual: float


def sigma_min(gen: DiscreteGenerator, shift: complex) -> float:
    """Smallest singular value of ``shift I - A_N`` in the energy norm."""
    M = shift * np.eye(gen.dim) - gen.energy_matrix
    return float(sla.svdvals(M)[-1])


class LUSolver:
    """Pivoted LU factors applied through two triangular solves.

    Used instead of ``scipy.linalg.lu_solve``, which is not safe to call from
    several threads at once in some scipy builds.
    """

    def __init__(self, M):
        self.lu, piv = sla.lu_factor(M)
        perm = np.arange(self.lu.shape[0])
        for i, p in enumerate(piv):
            perm[i], perm[p] = perm[p], perm[i]
        self.perm = perm

    def solve(self, rhs):
        z = sla.solve_triangular(self.lu, np.asarray(rhs)[self.perm], lower=True, unit_diagonal=True)
        return sla.solve_triangular(self.lu, z, lower=False)


def solve_shifted(gen: DiscreteGenerator, shift: complex, rhs) -> ShiftedSolveReport:
    """Solve ``(shift I - A_N) x = rhs``.

    Raises :class:`SingularShift` when ``sigma_min < 1e-13 ||A_N||``.
    """
    rhs = _as_vector(gen, rhs)
    shift = complex(shift)
    M = shift * np.eye(gen.dim) - gen.energy_matrix
    if shift.imag == 0.0:
        M = M.real
    smin = float(sla.svdvals(M)[-1])
    if smin < SINGULAR_RTOL * gen.norm:
        raise SingularShift(f"shift {shift} is numerically an eigenvalue (sigma_min={smin:.3e})",
                            shift=shift, sigma_min=smin)
    y_rhs = gen.to_energy(rhs)
    lu = LUSolver(M)
    y = lu.solve(y_rhs)
    # one round of refinement keeps the residual at working precision
    y = y + lu.solve(y_rhs - M @ y)
    res = float(np.linalg.norm(M @ y - y_rhs))
    scale = float(np.linalg.norm(y_rhs))
    if res > RESIDUAL_RTOL * max(scale, np.finfo(float).tiny):
        raise NumericalError(f"shifted solve residual {res:.3e} exceeds tolerance")
    x = gen.from_energy(y)
    if np.isrealobj(rhs) and shift.imag == 0.0:
        x = np.real(x)
    return ShiftedSolveReport(shift=shift, solution=x, sigma_min=smin, residual=res)


def inverse_matrix(gen: DiscreteGenerator) -> np.ndarray:
    """Dense ``A_N^{-1}`` (raises SingularShift if ``A_N`` is singular)."""
    smin = sigma_min(gen, 0.0)
    if smin < SINGULAR_RTOL * gen.norm:
        raise SingularShift("A_N is numerically singular", shift=0.0, sigma_min=smin)
    return np.linalg.inv(gen.matrix)


def h_minus1_norm(gen: DiscreteGenerator, state) -> float:
    """Extrapolation norm ``||A_N^{-1} U||`` measured in the energy norm."""
    vec = _as_vector(gen, state)
    if not np.any(vec):
        return 0.0
    report = solve_shifted(gen, 0.0, vec)
    return gen.enorm(report.solution)
