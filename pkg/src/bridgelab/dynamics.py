"""Desk-scale experiments on the semilinear flow.

* :func:`decompose` splits ``U = W + V`` where ``W`` follows the flow with
  ``F_0(W) = F(W) - F(0)`` from ``U0`` and ``V`` carries the constant part,
  starting from zero.
* :func:`absorbing_probe` checks that a seeded ensemble enters and stays in a
  common ball and fits the envelope ``c1 exp(-mu t) R + c2``.
* :func:`attractor_probe` measures pairwise distances (energy and
  extrapolation norms), window contraction factors and a box-counting
  dimension of the late-time cloud. Nothing here is asserted against
  theoretical constants.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import curve_fit

from .galerkin import DiscreteGenerator, assemble, inverse_matrix
from .model import ModalState, ModelParams, random_state, validate_params
from .nonlinearity import NonlinearitySpec, lift_to_state
from .timestepper import TrajectoryRecord, simulate, simulate_batch


def _vec(state) -> np.ndarray:
    return state.to_vector() if isinstance(state, ModalState) else np.asarray(state, dtype=float)


def _enorms(gen: DiscreteGenerator, X) -> np.ndarray:
    """Energy norms of the rows of ``X``."""
    return np.linalg.norm(np.asarray(X) @ gen.chol, axis=-1)


# ---------------------------------------------------------------------------
# decomposition


@dataclass
class DecompositionRecord:
    times: np.ndarray
    U: np.ndarray
    W: np.ndarray
    V: np.ndarray
    norm_W: np.ndarray
    norm_AV: np.ndarray
    norm_Vt: np.ndarray
    forcing: np.ndarray     # F(0) as a phase-space vector
    gen: DiscreteGenerator
    dt: float
    stride: int

    @property
    def additivity_error(self) -> float:
        """``max_t ||U - (W + V)||_E / max(1, max_t ||U||_E)``."""
        err = float(np.max(_enorms(self.gen, self.U - self.W - self.V)))
        scale = max(1.0, float(np.max(_enorms(self.gen, self.U))))
        return err / scale


def decompose(params: ModelParams, spec: NonlinearitySpec, U0, T: float, dt: float,
              stride: int = 1, gen: Optional[DiscreteGenerator] = None) -> DecompositionRecord:
    """Co-evolve ``U`` (full nonlinearity) and ``W`` (nonlinearity minus its value at 0)."""
    params = validate_params(params)
    x0 = _vec(U0)
    N = x0.size // 4
    gen = gen or assemble(params, N)
    F0 = lift_to_state(spec, np.zeros(4 * N), params.ell)
    spec_hom = spec.without_forcing()
    residual_at_zero = lift_to_state(spec_hom, np.zeros(4 * N), params.ell)
    if np.any(residual_at_zero):
        raise ValueError("family does not vanish at zero; constant part must be carried by forcing")
    rec_U = simulate(params, spec, x0, T, dt, stride, gen=gen)
    rec_W = simulate(params, spec_hom, x0, T, dt, stride, gen=gen)
    U, W = rec_U.states, rec_W.states
    V = U - W
    V[0] = 0.0  # identical initial data; exact by construction
    times = rec_U.times
    if V.shape[0] > 1:
        Vt = np.gradient(V, times, axis=0)
    else:
        Vt = np.zeros_like(V)
    A = gen.matrix
    return DecompositionRecord(
        times=times, U=U, W=W, V=V,
        norm_W=_enorms(gen, W),
        norm_AV=_enorms(gen, V @ A.T),
        norm_Vt=_enorms(gen, Vt),
        forcing=F0, gen=gen, dt=dt, stride=stride,
    )


@dataclass(frozen=True)
class RegularityReport:
    sup_AV: float
    sup_Vt: float
    sup_V: float
    tail_sup_AV: float
    forcing_norm: float
    initial_norm: float
    ratio: float
    finite: bool
    steady_state_error: Optional[float]

    def to_json(self) -> dict:
        return dict(self.__dict__)


def regularity_audit(record: DecompositionRecord, gen: Optional[DiscreteGenerator] = None,
                tail_fraction: float = 0.1) -> RegularityReport:
    """Regularity of the ``V`` component against ``||F_0|| + ||U_0||``.

    ``tail_sup_AV`` is the supremum over the last ``tail_fraction`` of the
    horizon; when the nonlinearity is only a constant forcing the distance of
    the final ``V`` to the steady state ``-A_N^{-1} F`` is also reported.
    """
    gen = gen or record.gen
    if record.stride != 1:
        raise ValueError("regularity_audit needs stride 1")
    normV = _enorms(gen, record.V)
    graph = normV + record.norm_AV
    f_norm = gen.enorm(record.forcing)
    u0 = gen.enorm(record.U[0])
    denom = f_norm + u0
    sup_AV = float(np.max(record.norm_AV))
    sup_Vt = float(np.max(record.norm_Vt))
    ratio = 0.0 if denom == 0 else float((sup_Vt + np.max(graph)) / denom)
    t = record.times
    tail = t >= t[-1] - tail_fraction * (t[-1] - t[0])
    steady = None
    if np.any(record.forcing):
        V_star = -np.linalg.solve(gen.matrix, record.forcing)
        steady = gen.enorm(record.V[-1] - V_star) / max(gen.enorm(V_star), 1e-300)
    values = [sup_AV, sup_Vt, float(np.max(normV)), ratio]
    return RegularityReport(
        sup_AV=sup_AV, sup_Vt=sup_Vt, sup_V=float(np.max(normV)),
        tail_sup_AV=float(np.max(record.norm_AV[tail])),
        forcing_norm=f_norm, initial_norm=u0, ratio=ratio,
        finite=bool(np.all(np.isfinite(values))), steady_state_error=steady,
    )


def steady_state(gen: DiscreteGenerator, forcing) -> np.ndarray:
    """Solution of ``A_N U + F = 0``."""
    return -inverse_matrix(gen) @ np.asarray(forcing)


# ---------------------------------------------------------------------------
# ensembles


def sample_ball(N: int, R: float, size: int, seed: int, decay: float = 1.0, params=None) -> list:
    """Seeded states with energy norm in ``[R/2, R]``."""
    from .model import energy_norm
    params = params or ModelParams()
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        s = random_state(N, rng, decay)
        radius = R * rng.uniform(0.5, 1.0)
        out.append(s * (radius / energy_norm(s, params)))
    return out


ENSEMBLE_CHUNK = 16


def run_ensemble(params: ModelParams, spec: NonlinearitySpec, states: Sequence, T: float, dt: float,
                 stride: int, threads: Optional[int] = None) -> list:
    """Independent trajectories, returned in input order.

    Members are integrated in batches of ``ENSEMBLE_CHUNK``. The batching does
    not depend on ``threads``, which only sets how many batches run at once,
    so results are bitwise identical for every thread count.
    """
    gen = assemble(params, _vec(states[0]).size // 4)
    jobs = [_vec(s) for s in states]
    chunks = [jobs[i:i + ENSEMBLE_CHUNK] for i in range(0, len(jobs), ENSEMBLE_CHUNK)]
    run = lambda chunk: simulate_batch(params, spec, chunk, T, dt, stride, gen=gen)
    if threads and threads > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=min(threads, len(chunks))) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return [rec for part in parts for rec in part]


def _envelope(t, c1, mu, c2, R=1.0):
    return c1 * np.exp(-mu * t) * R + c2


@dataclass
class AbsorbingReport:
    ensemble_size: int
    R: float
    times: np.ndarray
    norms: np.ndarray            # (members, n_times)
    c1: float
    mu: float
    c2: float
    fit_residual: float
    ball_radius: float
    entry_times: list            # None marks a member that never settles in the ball
    failed: bool

    def to_json(self) -> dict:
        return {
            "schema": "bridgelab.absorbing/1",
            "ensemble_size": self.ensemble_size, "R": self.R,
            "c1": self.c1, "mu": self.mu, "c2": self.c2,
            "fit_residual": self.fit_residual, "ball_radius": self.ball_radius,
            "entry_times": self.entry_times, "failed": self.failed,
        }


def _entry_time(times, norms, radius):
    outside = np.flatnonzero(norms > radius)
    if outside.size == 0:
        return float(times[0])
    last = outside[-1]
    if last == len(times) - 1:
        return None
    return float(times[last + 1])


def absorbing_probe(params: ModelParams, spec: NonlinearitySpec, R: float, ensemble_size: int,
                    T: float, dt: float, N: int, seed: int, stride: int = 10,
                    margin: float = 0.1, threads: Optional[int] = None) -> AbsorbingReport:
    """Ensemble entry into a common ball.

    The envelope ``c1 exp(-mu t) R + c2`` is fitted (least squares) to the
    ensemble maximum of ``||U(t)||``. The candidate ball has radius
    ``c2 (1 + margin)`` widened, if needed, to the largest norm seen over the
    final 10% of the horizon times ``1 + margin``.
    """
    params = validate_params(params)
    states = sample_ball(N, R, ensemble_size, seed, params=params)
    records = run_ensemble(params, spec, states, T, dt, stride, threads)
    gen = assemble(params, N)
    times = records[0].times
    norms = np.array([_enorms(gen, rec.states) for rec in records])
    envelope = norms.max(axis=0)
    p0 = (max(envelope[0] - envelope[-1], 1e-6) / R, 0.1, max(envelope[-1], 0.0))
    try:
        popt, _ = curve_fit(lambda t, c1, mu, c2: _envelope(t, c1, mu, c2, R), times, envelope,
                            p0=p0, bounds=([0.0, 0.0, 0.0], [np.inf, np.inf, np.inf]), maxfev=20000)
    except RuntimeError:
        popt = np.array(p0)
    c1, mu, c2 = (float(v) for v in popt)
    resid = float(np.sqrt(np.mean((_envelope(times, c1, mu, c2, R) - envelope) ** 2)) / R)
    tail = times >= times[-1] - 0.1 * (times[-1] - times[0])
    radius = max(c2, float(np.max(envelope[tail]))) * (1.0 + margin)
    entries = [_entry_time(times, n, radius) for n in norms]
    return AbsorbingReport(
        ensemble_size=ensemble_size, R=R, times=times, norms=norms,
        c1=c1, mu=mu, c2=c2, fit_residual=resid, ball_radius=radius,
        entry_times=entries, failed=any(e is None for e in entries),
    )


# ---------------------------------------------------------------------------
# attractor probing


def box_counting_dimension(points: np.ndarray, n_dims: int = 4, n_scales: int = 3,
                           rel_tol: float = 1e-9) -> dict:
    """Box-counting slope of a point cloud on its leading principal coordinates.

    The box size starts at the cloud extent and is halved ``n_scales`` times.
    A cloud of negligible extent has dimension 0.
    """
    pts = np.asarray(points, dtype=float)
    centred = pts - pts.mean(axis=0)
    scale = 1.0 + float(np.max(np.linalg.norm(pts, axis=1)))
    extent_total = float(np.max(np.linalg.norm(centred, axis=1))) if len(pts) else 0.0
    if len(pts) < 2 or extent_total <= rel_tol * scale:
        return {"dimension": 0.0, "counts": [1] * n_scales, "dims_used": 0, "extent": extent_total}
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    k = int(min(max(2, n_dims), 6, vt.shape[0]))
    proj = centred @ vt[:k].T
    lo = proj.min(axis=0)
    extent = float(np.max(proj.max(axis=0) - lo))
    counts = []
    for level in range(1, n_scales + 1):
        size = extent / 2 ** level
        idx = np.floor((proj - lo) / size).astype(np.int64)
        idx = np.minimum(idx, 2 ** level - 1)
        counts.append(len({tuple(row) for row in idx}))
    logs = np.log(np.asarray(counts, dtype=float))
    levels = np.arange(1, n_scales + 1) * math.log(2.0)
    slope = float(np.polyfit(levels, logs, 1)[0]) if n_scales > 1 else 0.0
    return {"dimension": max(slope, 0.0), "counts": counts, "dims_used": k, "extent": extent}


@dataclass
class AttractorReport:
    times: np.ndarray
    max_distance: np.ndarray          # energy norm, per stored time
    max_distance_m1: np.ndarray       # extrapolation norm, per stored time
    final_distances: np.ndarray       # pairwise matrix, energy norm
    final_distances_m1: np.ndarray
    contraction_factors: list         # per window: max over pairs of d(t+t*)/d(t)
    t_star: float
    displacement_seminorm: float      # sup over pairs and times of ||B(U - U')||
    velocity_bound: float             # sup over members and times of ||d/dt B U||
    box: dict

    def to_json(self) -> dict:
        return {
            "schema": "bridgelab.attractor/1",
            "t_star": self.t_star,
            "final_max_distance": float(self.max_distance[-1]),
            "final_max_distance_m1": float(self.max_distance_m1[-1]),
            "contraction_factors": [None if c is None else float(c) for c in self.contraction_factors],
            "displacement_seminorm": self.displacement_seminorm,
            "velocity_bound": self.velocity_bound,
            "box_counting": self.box,
        }

    def distances_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# pairwise energy-norm distances between ensemble members at the final time\n")
        w = csv.writer(buf, lineterminator="\n")
        n = self.final_distances.shape[0]
        w.writerow(["member"] + [str(j) for j in range(n)])
        for i in range(n):
            w.writerow([str(i)] + [repr(float(x)) for x in self.final_distances[i]])
        return buf.getvalue()


def _displacement_norm(vec, ell):
    N = vec.size // 4
    return math.sqrt(0.5 * ell * float(vec[:N] @ vec[:N] + vec[2 * N:3 * N] @ vec[2 * N:3 * N]))


def _velocity_norm(vec, ell):
    N = vec.size // 4
    return math.sqrt(0.5 * ell * float(vec[N:2 * N] @ vec[N:2 * N] + vec[3 * N:] @ vec[3 * N:]))


def attractor_probe(params: ModelParams, spec: NonlinearitySpec, ensemble: Sequence, T_long: float,
                    dt: float, t_star: float, stride: int = 10, late_fraction: float = 0.1,
                    n_dims: int = 4, threads: Optional[int] = None) -> AttractorReport:
    """Observe how an ensemble of trajectories draws together."""
    params = validate_params(params)
    records = run_ensemble(params, spec, ensemble, T_long, dt, stride, threads)
    N = records[0].N
    gen = assemble(params, N)
    Ainv = inverse_matrix(gen)
    times = records[0].times
    X = np.stack([rec.states for rec in records])          # (members, times, 4N)
    m = X.shape[0]
    pairs = list(combinations(range(m), 2))
    ell = params.ell
    Lt = gen.chol.T
    Y = X @ Lt.T                                             # energy coordinates
    Ym1 = (X @ Ainv.T) @ Lt.T                                # A^{-1} U in energy coordinates
    d = np.array([np.linalg.norm(Y[i] - Y[j], axis=1) for i, j in pairs]) if pairs else np.zeros((0, len(times)))
    dm1 = np.array([np.linalg.norm(Ym1[i] - Ym1[j], axis=1) for i, j in pairs]) if pairs else d
    final = np.zeros((m, m))
    final_m1 = np.zeros((m, m))
    for (i, j), a, b in zip(pairs, d[:, -1] if pairs else [], dm1[:, -1] if pairs else []):
        final[i, j] = final[j, i] = a
        final_m1[i, j] = final_m1[j, i] = b
    step = max(int(round(t_star / (dt * stride))), 1)
    factors = []
    for start in range(0, len(times) - step, step):
        den = d[:, start] if pairs else np.zeros(0)
        ok = den > 1e-300
        factors.append(float(np.max(d[ok, start + step] / den[ok])) if np.any(ok) else None)
    seminorm = 0.0
    for i, j in pairs:
        seminorm = max(seminorm, max(_displacement_norm(a - b, ell) for a, b in zip(X[i], X[j])))
    velocity = max(_velocity_norm(x, ell) for rec in X for x in rec)
    late = times >= times[-1] - late_fraction * (times[-1] - times[0])
    cloud = Y[:, late, :].reshape(-1, Y.shape[2])
    box = box_counting_dimension(cloud, n_dims=n_dims)
    return AttractorReport(
        times=times,
        max_distance=d.max(axis=0) if pairs else np.zeros(len(times)),
        max_distance_m1=dm1.max(axis=0) if pairs else np.zeros(len(times)),
        final_distances=final, final_distances_m1=final_m1,
        contraction_factors=factors, t_star=step * dt * stride,
        displacement_seminorm=seminorm, velocity_bound=velocity, box=box,
    )


def semigroup_norm(gen: DiscreteGenerator, t: float) -> float:
    """``||exp(A_N t)||`` in the energy norm."""
    return float(np.linalg.norm(sla.expm(t * gen.energy_matrix), 2))
