"""Characteristics solver against the modal Galerkin solver on the decoupled string."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .characteristics import run_characteristics
from .galerkin import assemble
from .model import ModalState, ModelParams, basis, gauss_legendre, project, validate_params
from .timestepper import simulate


def smooth_profile(N: int, ell: float, mode_amp: float = 1.0, bump_amp: float = 0.5,
                   centre: float = 0.6, width: float = 0.08, n_quad: int = 400) -> np.ndarray:
    """Sine coefficients of ``mode_amp phi_0 + P_N(gaussian bump)``.

    The bump is projected onto the first ``N`` modes so that both solvers
    start from the same function.
    """
    x, w = gauss_legendre(n_quad, ell)
    bump = bump_amp * np.exp(-0.5 * ((x - centre * ell) / (width * ell)) ** 2)
    c = project(bump, w, x, N, ell)
    c[0] += mode_amp
    return c


@dataclass
class CrossValidation:
    times: np.ndarray
    err_v: np.ndarray          # L2 discrepancy of v at each compared time
    err_vt: np.ndarray         # L2 discrepancy of v_t
    scale: float               # L2 norm of the initial displacement
    N: int
    M: int
    substeps: int

    @property
    def sup_error(self) -> float:
        return float(max(np.max(self.err_v), np.max(self.err_vt)))

    def to_json(self) -> dict:
        return {
            "schema": "bridgelab.cross_validate/1",
            "N": self.N, "M": self.M, "substeps": self.substeps,
            "sup_error_v": float(np.max(self.err_v)),
            "sup_error_vt": float(np.max(self.err_vt)),
            "sup_error": self.sup_error,
            "initial_l2": self.scale,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# t: time; err_v, err_vt: L2 distance between characteristic and modal solutions\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "err_v", "err_vt"])
        for row in zip(self.times, self.err_v, self.err_vt):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def cross_validate(params: ModelParams, T: float = 2.0, N: int = 64, M: int = 300,
                   substeps: int = 4, coeffs: Optional[np.ndarray] = None,
                   output_every: int = 1) -> CrossValidation:
    """Run both solvers from ``v(0) = sum c_j phi_j``, ``v_t(0) = 0`` and compare.

    The Galerkin step is ``dx / (k1 substeps)`` so both solvers share the
    comparison times ``n dx / k1``. Discrepancies use the midpoint rule on
    the characteristic grid.
    """
    params = validate_params(params)
    if params.k != 0:
        raise ValueError("cross-validation needs the decoupled string (k = 0)")
    ell = params.ell
    c = smooth_profile(N, ell) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.size != N:
        raise ValueError(f"expected {N} coefficients, got {c.size}")
    dx = ell / M
    nodes = np.arange(M + 1) * dx
    mids = (np.arange(M) + 0.5) * dx
    phi_nodes = basis(nodes, N, ell)
    phi_mids = basis(mids, N, ell)

    char = run_characteristics(phi_nodes @ c, np.zeros(M), params, T, M=M, output_every=output_every)
    zero = np.zeros(N)
    U0 = ModalState(a=c, adot=zero, b=zero, bdot=zero)
    dt = char.dt / substeps
    rec = simulate(params, None, U0, char.times[-1], dt, stride=substeps * output_every, gen=assemble(params, N))
    if rec.times.size != char.times.size or not np.allclose(rec.times, char.times, atol=1e-9):
        raise RuntimeError("solvers disagree on output times")
    a = rec.states[:, :N]
    adot = rec.states[:, N:2 * N]
    # node average of v against the midpoint-sampled modal field
    v_char = 0.5 * (char.v[:, 1:] + char.v[:, :-1])
    v_gal = 0.5 * ((a @ phi_nodes.T)[:, 1:] + (a @ phi_nodes.T)[:, :-1])
    vt_gal = adot @ phi_mids.T
    err_v = np.sqrt(dx * np.sum((v_char - v_gal) ** 2, axis=1))
    err_vt = np.sqrt(dx * np.sum((char.v_t - vt_gal) ** 2, axis=1))
    scale = math.sqrt(dx * float(np.sum((phi_mids @ c) ** 2)))
    return CrossValidation(times=char.times, err_v=err_v, err_vt=err_vt, scale=scale,
                           N=N, M=M, substeps=substeps)
