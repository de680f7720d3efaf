"""Exact characteristic solver for the decoupled damped string.

With ``p = v_t - k1 v_x`` and ``q = v_t + k1 v_x`` the string becomes two
transport equations (``p`` moves right, ``q`` moves left with speed ``k1``).
On a grid with ``dt = dx / k1`` each step is an exact shift by one cell; the
only arithmetic happens at the two ends and at the damper.

Cells are ``[i dx, (i+1) dx]``, ``i = 0..M-1``; ``p`` and ``q`` live at cell
midpoints, displacements at the nodes ``i dx``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import IncommensurableXi
from .model import ModelParams, validate_params

GRID_TOL = 1e-9


def to_riemann(v_nodes, vt_mid, dx: float, k1: float):
    """Riemann invariants at cell midpoints.

    ``v_x`` is the centred difference of the nodal displacements.
    """
    v_nodes = np.asarray(v_nodes, dtype=float)
    vt_mid = np.asarray(vt_mid, dtype=float)
    if v_nodes.size != vt_mid.size + 1:
        raise ValueError("need M+1 nodal displacements for M midpoint velocities")
    vx = np.diff(v_nodes) / dx
    return vt_mid - k1 * vx, vt_mid + k1 * vx


def from_riemann(p, q, dx: float, k1: float, v0: float = 0.0):
    """Inverse of :func:`to_riemann` with ``v(0) = v0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    vt = 0.5 * (p + q)
    vx = (q - p) / (2.0 * k1)
    v = np.concatenate([[v0], v0 + np.cumsum(vx * dx)])
    return v, vt


@dataclass(frozen=True)
class ScatterCoefficients:
    a: float
    d: float
    b: float
    c: float
    ratio: float

    @property
    def velocity(self) -> float:
        """``v_t(xi)``, equal from both sides."""
        return 0.5 * (self.b + self.d)


def scatter_at_damping(a, d, gamma: float, k1: float):
    """Outgoing invariants at the damper from the incoming ones.

    ``a = p(xi-)`` and ``d = q(xi+)`` arrive; ``b = p(xi+)`` and
    ``c = q(xi-)`` leave. They solve continuity of ``v_t`` and
    ``[[beta0 v_x]] = gamma v_t(xi)``::

        b = (2a - g d) / (2 + g),   c = (2d - g a) / (2 + g),   g = gamma / k1,

    so ``b + d = a + c`` (continuity) and ``gamma = 0`` is exactly the identity.
    """
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be non-negative")
    g = np.asarray(gamma) / k1
    a, d = np.asarray(a, dtype=float), np.asarray(d, dtype=float)
    b = (2.0 * a - g * d) / (2.0 + g)
    c = (2.0 * d - g * a) / (2.0 + g)
    return b, c


def scatter_report(a: float, d: float, gamma: float, k1: float) -> ScatterCoefficients:
    b, c = scatter_at_damping(a, d, gamma, k1)
    return ScatterCoefficients(float(a), float(d), float(b), float(c), gamma / k1)


def boundary_closure(q_left, p_right):
    """Reflected invariants at the ends.

    At ``x = 0`` the outgoing ``q`` returns as ``p = -q`` (``v = 0``);
    at ``x = ell`` the outgoing ``p`` returns as ``q = p`` (``v_x = 0``).
    Returns ``(p(0), q(ell))``.
    """
    return -np.asarray(q_left), np.asarray(p_right)


@dataclass(frozen=True)
class RiemannField:
    p: np.ndarray
    q: np.ndarray
    dx: float
    ell: float
    xi: float
    k1: float
    gamma: float
    t: float = 0.0

    def __post_init__(self):
        for name in ("p", "q"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        cells = self.ell / self.dx
        if abs(cells - round(cells)) > GRID_TOL * max(cells, 1.0):
            raise IncommensurableXi(f"ell/dx = {cells} is not an integer")
        if self.p.size != round(cells) or self.q.size != self.p.size:
            raise ValueError("p and q must have one entry per cell")
        self.xi_index  # validates xi

    @property
    def M(self) -> int:
        return self.p.size

    @property
    def dt(self) -> float:
        return self.dx / self.k1

    @property
    def xi_index(self) -> int:
        """Index of the first cell to the right of the damper."""
        pos = self.xi / self.dx
        i = int(round(pos))
        if abs(pos - i) > GRID_TOL * max(pos, 1.0) or not (0 < i < self.M):
            raise IncommensurableXi(f"xi/dx = {pos} is not an interior grid node")
        return i

    def energy(self) -> float:
        """``(1/4) int p^2 + q^2`` by the midpoint rule (exact for cell data)."""
        return 0.25 * self.dx * float(np.sum(self.p ** 2) + np.sum(self.q ** 2))

    def displacement(self):
        """Nodal ``v`` and midpoint ``v_t``."""
        return from_riemann(self.p, self.q, self.dx, self.k1)


@dataclass(frozen=True)
class StepEvent:
    """Bookkeeping from one scattering event."""

    incoming: tuple
    outgoing: tuple
    velocity: float
    trace_jump: float


def step(field: RiemannField) -> tuple:
    """Advance by one exact step; returns ``(new_field, event)``."""
    p, q, i = field.p, field.q, field.xi_index
    a, d = p[i - 1], q[i]
    b, c = scatter_at_damping(a, d, field.gamma, field.k1)
    p_new = np.empty_like(p)
    q_new = np.empty_like(q)
    p_new[1:] = p[:-1]
    q_new[:-1] = q[1:]
    p_new[0], q_new[-1] = boundary_closure(q[0], p[-1])
    p_new[i] = b
    q_new[i - 1] = c
    event = StepEvent((float(a), float(d)), (float(b), float(c)),
                      float(0.5 * (b + d)), float((a + c) - (b + d)))
    return replace(field, p=p_new, q=q_new, t=field.t + field.dt), event


def advance_exact(field: RiemannField, n_steps: int) -> RiemannField:
    for _ in range(int(n_steps)):
        field, _ = step(field)
    return field


@dataclass
class CharacteristicsTrajectory:
    times: np.ndarray
    x_nodes: np.ndarray
    x_mid: np.ndarray
    v: np.ndarray          # (n_out, M+1) nodal displacements
    v_t: np.ndarray        # (n_out, M) midpoint velocities
    energy_times: np.ndarray
    energy: np.ndarray
    damper_velocity: np.ndarray
    trace_jumps: np.ndarray
    dt: float
    gamma: float

    def energy_identity_residual(self) -> float:
        """Max over steps of ``|E_{n+1} - E_n + dt gamma v_t(xi)^2|``."""
        if self.energy.size < 2:
            return 0.0
        loss = self.dt * self.gamma * self.damper_velocity ** 2
        return float(np.max(np.abs(np.diff(self.energy) + loss)))

    def snapshots_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# t: time; x: cell midpoint; v: displacement (node average); v_t: velocity\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "v", "v_t"])
        for n, t in enumerate(self.times):
            v_mid = 0.5 * (self.v[n, 1:] + self.v[n, :-1])
            for x, vv, vt in zip(self.x_mid, v_mid, self.v_t[n]):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(vv)), repr(float(vt))])
        return buf.getvalue()

    def energy_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# t: time; E: string energy (1/4) int p^2 + q^2\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "E"])
        for t, e in zip(self.energy_times, self.energy):
            w.writerow([repr(float(t)), repr(float(e))])
        return buf.getvalue()


Profile = Union[Callable, Sequence[float], np.ndarray]


def _sample(profile: Profile, x: np.ndarray) -> np.ndarray:
    if callable(profile):
        return np.asarray(profile(x), dtype=float) * np.ones_like(x)
    arr = np.asarray(profile, dtype=float)
    if arr.shape != x.shape:
        raise ValueError(f"expected {x.size} samples, got {arr.size}")
    return arr


def initial_field(v0: Profile, v1: Profile, params: ModelParams, M: int) -> RiemannField:
    """Field from displacement ``v0`` (nodes) and velocity ``v1`` (midpoints)."""
    dx = params.ell / M
    nodes = np.arange(M + 1) * dx
    mids = (np.arange(M) + 0.5) * dx
    p, q = to_riemann(_sample(v0, nodes), _sample(v1, mids), dx, params.k1)
    return RiemannField(p=p, q=q, dx=dx, ell=params.ell, xi=params.xi,
                        k1=params.k1, gamma=params.gamma)


def run_characteristics(v0: Profile, v1: Profile, params: ModelParams, T: float,
                        M: int = 300, output_every: int = 1) -> CharacteristicsTrajectory:
    """Evolve the damped string up to the last grid time not exceeding ``T``.

    ``v0`` is sampled at the ``M+1`` nodes, ``v1`` at the ``M`` cell
    midpoints; either may be a callable or an array.
    """
    params = validate_params(params)
    if params.k != 0:
        raise ValueError("the characteristic solver handles the decoupled string only (k = 0)")
    field = initial_field(v0, v1, params, M)
    n_steps = int(math.floor(T / field.dt + 1e-9))
    x_nodes = np.arange(M + 1) * field.dx
    x_mid = (np.arange(M) + 0.5) * field.dx

    times, vs, vts = [], [], []
    energies = [field.energy()]
    velocities, jumps = [], []

    def record(f, n):
        v, vt = f.displacement()
        times.append(n * f.dt)
        vs.append(v)
        vts.append(vt)

    record(field, 0)
    for n in range(1, n_steps + 1):
        field, event = step(field)
        energies.append(field.energy())
        velocities.append(event.velocity)
        jumps.append(event.trace_jump)
        if n % output_every == 0:
            record(field, n)
    return CharacteristicsTrajectory(
        times=np.asarray(times), x_nodes=x_nodes, x_mid=x_mid,
        v=np.asarray(vs), v_t=np.asarray(vts),
        energy_times=np.arange(n_steps + 1) * field.dt,
        energy=np.asarray(energies),
        damper_velocity=np.asarray(velocities),
        trace_jumps=np.asarray(jumps),
        dt=field.dt, gamma=params.gamma,
    )
