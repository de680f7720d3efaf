"""Suspender nonlinearities, their truncations and diagnostics.

Three families act pointwise on the displacements ``(v, u)``:

* ``PowerSeparated``: ``F = F_{1,R}(v)``, ``G = G_{1,R}(u)`` with the power law
  ``mu s|s|^alpha`` continued linearly (slope ``mu R^alpha``) outside ``|s| <= R``.
* ``GradientPotential``: ``(F, G) = coeff * grad p_R`` with
  ``p_R = phi_R(r) v^{2m} u^{2n}``, ``r = |(v, u)|``.
* ``OneSidedSpring``: ``F = -k min(v-u, 0)``, ``G = -k min(u-v, 0)``.

The phase-space map is ``U -> (0, P F, 0, P G) + forcing`` where ``P`` is the
Gauss-Legendre projection onto the sine basis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, NondifferentiableFamily
from .model import ModalState, basis, gauss_legendre


class Family(enum.Enum):
    ZERO = "Zero"
    POWER = "PowerSeparated"
    GRADIENT = "GradientPotential"
    SPRING = "OneSidedSpring"


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    family: Family = Family.ZERO
    mu1: float = 0.0
    alpha: float = 1.0
    mu2: float = 0.0
    beta: float = 1.0
    m: int = 1
    n: int = 1
    coeff: float = 1.0
    stiffness: float = 0.0
    R: float = 1.0
    forcing_cable: Optional[np.ndarray] = None
    forcing_deck: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family is Family.POWER and not (self.alpha > 0 and self.beta > 0):
            raise ValueError("power exponents alpha, beta must be positive")
        if self.family is Family.GRADIENT and (int(self.m) != self.m or int(self.n) != self.n
                                               or self.m < 1 or self.n < 1):
            raise ValueError("gradient exponents m, n must be integers >= 1")
        if self.family is Family.SPRING and self.stiffness < 0:
            raise ValueError("spring stiffness must be non-negative")
        if self.family in (Family.POWER, Family.GRADIENT) and not self.R > 0:
            raise ValueError("truncation radius R must be positive")
        fc, fd = self.forcing_cable, self.forcing_deck
        if (fc is None) != (fd is None):
            fc = np.zeros_like(fd) if fc is None else fc
            fd = np.zeros_like(fc) if fd is None else fd
        for name, arr in (("forcing_cable", fc), ("forcing_deck", fd)):
            if arr is not None:
                arr = np.array(arr, dtype=float, copy=True).reshape(-1)
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if fc is not None and self.forcing_cable.size != self.forcing_deck.size:
            raise ValueError("cable and deck forcing must have the same length")

    # constructors -----------------------------------------------------------

    @classmethod
    def zero(cls, **forcing) -> "NonlinearitySpec":
        return cls(Family.ZERO, **forcing)

    @classmethod
    def power(cls, mu1: float, alpha: float, mu2: float, beta: float, R: float = 1.0,
              **forcing) -> "NonlinearitySpec":
        return cls(Family.POWER, mu1=mu1, alpha=alpha, mu2=mu2, beta=beta, R=R, **forcing)

    @classmethod
    def gradient(cls, m: int, n: int, R: float = 1.0, coeff: float = 1.0,
                 **forcing) -> "NonlinearitySpec":
        return cls(Family.GRADIENT, m=int(m), n=int(n), R=R, coeff=coeff, **forcing)

    @classmethod
    def spring(cls, k: float, **forcing) -> "NonlinearitySpec":
        return cls(Family.SPRING, stiffness=k, **forcing)

    def with_forcing(self, cable, deck) -> "NonlinearitySpec":
        from dataclasses import replace
        return replace(self, forcing_cable=np.asarray(cable, float), forcing_deck=np.asarray(deck, float))

    def without_forcing(self) -> "NonlinearitySpec":
        from dataclasses import replace
        return replace(self, forcing_cable=None, forcing_deck=None)

    @property
    def has_forcing(self) -> bool:
        return self.forcing_cable is not None and bool(
            np.any(self.forcing_cable) or np.any(self.forcing_deck))

    @property
    def degree(self) -> int:
        """``2m + 2n`` for the gradient family."""
        return 2 * self.m + 2 * self.n

    # serialisation -----------------------------------------------------------

    def to_json(self) -> dict:
        out = {"family": self.family.value}
        if self.family is Family.POWER:
            out.update(mu1=self.mu1, alpha=self.alpha, mu2=self.mu2, beta=self.beta, R=self.R)
        elif self.family is Family.GRADIENT:
            out.update(m=self.m, n=self.n, R=self.R, coeff=self.coeff)
        elif self.family is Family.SPRING:
            out.update(k=self.stiffness)
        if self.forcing_cable is not None:
            out["forcing"] = {"cable": self.forcing_cable.tolist(), "deck": self.forcing_deck.tolist()}
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "NonlinearitySpec":
        try:
            family = Family(obj.get("family", "Zero"))
        except ValueError:
            allowed = [f.value for f in Family]
            raise ValueError(f"unknown family {obj.get('family')!r}; allowed: {allowed}") from None
        forcing = {}
        if obj.get("forcing") is not None:
            forcing = {"forcing_cable": obj["forcing"].get("cable"),
                       "forcing_deck": obj["forcing"].get("deck")}
        if family is Family.ZERO:
            return cls.zero(**forcing)
        if family is Family.POWER:
            return cls.power(float(obj["mu1"]), float(obj["alpha"]), float(obj.get("mu2", 0.0)),
                             float(obj.get("beta", obj["alpha"])), float(obj.get("R", 1.0)), **forcing)
        if family is Family.GRADIENT:
            return cls.gradient(int(obj["m"]), int(obj["n"]), float(obj.get("R", 1.0)),
                                float(obj.get("coeff", 1.0)), **forcing)
        return cls.spring(float(obj["k"]), **forcing)


# ---------------------------------------------------------------------------
# radial truncation


def hermite_h(s):
    """Quintic blend ``1 - 10 s^3 + 15 s^4 - 6 s^5`` on ``[0, 1]``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise DomainError("hermite_h is defined on [0, 1]")
    out = 1.0 - 10.0 * s_arr ** 3 + 15.0 * s_arr ** 4 - 6.0 * s_arr ** 5
    return float(out) if out.ndim == 0 else out


def _h(s):
    return 1.0 - 10.0 * s ** 3 + 15.0 * s ** 4 - 6.0 * s ** 5


def _dh(s):
    return -30.0 * s ** 2 + 60.0 * s ** 3 - 30.0 * s ** 4


def _d2h(s):
    return -60.0 * s + 180.0 * s ** 2 - 120.0 * s ** 3


def phi_R(r, R: float, N_deg: int, derivative: int = 0):
    """Radial weight equal to 1 on ``[0, R]`` and ``(R/r)^(N-1)`` beyond ``2R``.

    ``derivative`` in {0, 1, 2} selects the value or a derivative in ``r``.
    """
    if N_deg < 2:
        raise ValueError("N_deg must be at least 2")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("phi_R needs r >= 0")
    e = N_deg - 1
    rs = np.where(r > 0, r, 1.0)
    tail = (R / rs) ** e
    tail1 = -e * tail / rs
    tail2 = e * (e + 1) * tail / rs ** 2
    s = np.clip((r - R) / R, 0.0, 1.0)
    h, h1, h2 = _h(s), _dh(s) / R, _d2h(s) / R ** 2
    if derivative == 0:
        mid = h + (1.0 - h) * tail
        inner = np.ones_like(r)
        outer = tail
    elif derivative == 1:
        mid = h1 * (1.0 - tail) + (1.0 - h) * tail1
        inner = np.zeros_like(r)
        outer = tail1
    elif derivative == 2:
        mid = h2 * (1.0 - tail) - 2.0 * h1 * tail1 + (1.0 - h) * tail2
        inner = np.zeros_like(r)
        outer = tail2
    else:
        raise ValueError("derivative must be 0, 1 or 2")
    out = np.where(r <= R, inner, np.where(r >= 2 * R, outer, mid))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TruncationProfile:
    N_deg: int
    R: float

    def __call__(self, r, derivative: int = 0):
        return phi_R(r, self.R, self.N_deg, derivative)

    def regimes(self) -> dict:
        return {"inner": (0.0, self.R), "blend": (self.R, 2 * self.R), "tail": (2 * self.R, math.inf)}


def gradient_potential(spec: NonlinearitySpec, x, y):
    """Truncated potential ``coeff * phi_R(r) x^{2m} y^{2n}``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    return spec.coeff * phi_R(r, spec.R, spec.degree) * x ** (2 * spec.m) * y ** (2 * spec.n)


# ---------------------------------------------------------------------------
# pointwise evaluation


def truncated_power(s, mu: float, expo: float, R: float):
    """``mu s|s|^expo`` for ``|s| <= R``, ``mu R^expo s`` beyond."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) <= R
    out = np.where(inside, mu * s * np.abs(s) ** expo, mu * R ** expo * s)
    return float(out) if out.ndim == 0 else out


def eval_F(spec: NonlinearitySpec, v_val, u_val):
    """Pointwise ``(F, G)`` at displacements ``(v, u)``; forcing excluded."""
    v = np.asarray(v_val, dtype=float)
    u = np.asarray(u_val, dtype=float)
    fam = spec.family
    if fam is Family.ZERO:
        F = np.zeros(np.broadcast(v, u).shape)
        G = F.copy()
    elif fam is Family.POWER:
        F = truncated_power(v, spec.mu1, spec.alpha, spec.R) * np.ones_like(u)
        G = truncated_power(u, spec.mu2, spec.beta, spec.R) * np.ones_like(v)
    elif fam is Family.GRADIENT:
        m, n = spec.m, spec.n
        r = np.hypot(v, u)
        phi = phi_R(r, spec.R, spec.degree)
        dphi_over_r = np.where(r > spec.R, phi_R(r, spec.R, spec.degree, 1) / np.where(r > 0, r, 1.0), 0.0)
        F = 2 * m * phi * v ** (2 * m - 1) * u ** (2 * n) + dphi_over_r * v ** (2 * m + 1) * u ** (2 * n)
        G = 2 * n * phi * v ** (2 * m) * u ** (2 * n - 1) + dphi_over_r * v ** (2 * m) * u ** (2 * n + 1)
        F, G = spec.coeff * F, spec.coeff * G
    else:
        k = spec.stiffness
        F = -k * np.minimum(v - u, 0.0)
        G = -k * np.minimum(u - v, 0.0)
    if np.ndim(F) == 0:
        return float(F), float(G)
    return F, G


def untruncated_F(spec: NonlinearitySpec, v_val, u_val):
    """Reference formulas without truncation (power and gradient families)."""
    v = np.asarray(v_val, dtype=float)
    u = np.asarray(u_val, dtype=float)
    if spec.family is Family.POWER:
        return spec.mu1 * v * np.abs(v) ** spec.alpha, spec.mu2 * u * np.abs(u) ** spec.beta
    if spec.family is Family.GRADIENT:
        m, n = spec.m, spec.n
        return (spec.coeff * 2 * m * v ** (2 * m - 1) * u ** (2 * n),
                spec.coeff * 2 * n * v ** (2 * m) * u ** (2 * n - 1))
    return eval_F(spec, v, u)


def native_arguments(spec: NonlinearitySpec, v, u):
    """The scalar arguments each component of the family acts on."""
    if spec.family is Family.SPRING:
        return v - u, u - v
    return v, u


# ---------------------------------------------------------------------------
# phase-space map


@dataclass(frozen=True, eq=False)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray
    phi: np.ndarray  # phi[i, j] = phi_j(x_i)
    ell: float

    @classmethod
    def for_modes(cls, N: int, ell: float) -> "Quadrature":
        x, w = gauss_legendre(4 * N + 8, ell)
        return cls(x, w, basis(x, N, ell), ell)

    def fields(self, vec):
        N = self.phi.shape[1]
        return self.phi @ vec[:N], self.phi @ vec[2 * N:3 * N]

    def project(self, values) -> np.ndarray:
        return (2.0 / self.ell) * (self.phi.T @ (self.weights * values))

    def integrate(self, values) -> float:
        return float(self.weights @ values)


_QUAD_CACHE: dict = {}


def quadrature(N: int, ell: float) -> Quadrature:
    key = (int(N), float(ell))
    if key not in _QUAD_CACHE:
        _QUAD_CACHE[key] = Quadrature.for_modes(N, ell)
    return _QUAD_CACHE[key]


def forcing_vector(spec: NonlinearitySpec, N: int) -> np.ndarray:
    out = np.zeros(4 * N)
    if spec.forcing_cable is not None:
        if spec.forcing_cable.size != N:
            raise ValueError(f"forcing has {spec.forcing_cable.size} modes, state has {N}")
        out[N:2 * N] = spec.forcing_cable
        out[3 * N:] = spec.forcing_deck
    return out


def _as_vec(state) -> np.ndarray:
    return state.to_vector() if isinstance(state, ModalState) else np.asarray(state, dtype=float)


def lift_to_state(spec: NonlinearitySpec, state, ell: float = 1.0, include_forcing: bool = True) -> np.ndarray:
    """Phase-space vector ``(0, P F(v,u), 0, P G(v,u)) + forcing``.

    Only the displacement coefficients of ``state`` are read.
    """
    vec = _as_vec(state)
    N = vec.size // 4
    out = np.zeros(4 * N)
    if spec.family is not Family.ZERO:
        quad = quadrature(N, ell)
        v, u = quad.fields(vec)
        F, G = eval_F(spec, v, u)
        out[N:2 * N] = quad.project(F)
        out[3 * N:] = quad.project(G)
    if include_forcing:
        out += forcing_vector(spec, N)
    return out


def nonlinear_pairing(spec: NonlinearitySpec, state, ell: float = 1.0) -> float:
    """``int F s_F + G s_G dx`` with each force paired with its own argument.

    Forcing pairs with the displacement it drives.
    """
    vec = _as_vec(state)
    N = vec.size // 4
    quad = quadrature(N, ell)
    v, u = quad.fields(vec)
    F, G = eval_F(spec, v, u)
    sF, sG = native_arguments(spec, v, u)
    total = quad.integrate(F * sF + G * sG)
    if spec.forcing_cable is not None:
        total += 0.5 * ell * float(spec.forcing_cable @ vec[:N] + spec.forcing_deck @ vec[2 * N:3 * N])
    return total


def potential_integral(spec: NonlinearitySpec, state, ell: float = 1.0) -> float:
    """``int p_R(v, u) dx`` for the gradient family (0 otherwise)."""
    if spec.family is not Family.GRADIENT:
        return 0.0
    vec = _as_vec(state)
    quad = quadrature(vec.size // 4, ell)
    v, u = quad.fields(vec)
    return quad.integrate(gradient_potential(spec, v, u))


# ---------------------------------------------------------------------------
# derivative and Lipschitz diagnostics


def _richardson(f, h: float):
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    return (4.0 * d2 - d1) / 3.0


def pointwise_derivative(spec: NonlinearitySpec, v: float, u: float, dv: float, du: float):
    """Directional derivative of ``(F, G)`` at a point of the ``(v, u)`` plane."""
    if spec.family is Family.SPRING:
        s, ds = v - u, dv - du
        h = 1e-6 * (1.0 + math.hypot(v, u))
        if abs(s) <= h * abs(ds) * 1.01 or (s == 0.0):
            raise NondifferentiableFamily("one-sided spring evaluated at its kink")
    h = 1e-6 * (1.0 + math.hypot(v, u))
    f = lambda t: np.array(eval_F(spec, v + t * dv, u + t * du))
    return tuple(_richardson(f, h))


def directional_derivative(spec: NonlinearitySpec, state, direction, ell: float = 1.0) -> np.ndarray:
    """Finite-difference derivative of the lifted map along ``direction``.

    Central difference with step ``1e-6 (1 + ||state||)`` and one Richardson
    extrapolation. Refused for the one-sided spring when the stencil straddles
    the kink ``v = u`` at any quadrature node.
    """
    x = _as_vec(state)
    d = _as_vec(direction)
    N = x.size // 4
    if spec.family is Family.ZERO:
        return np.zeros(4 * N)
    h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    if spec.family is Family.SPRING:
        quad = quadrature(N, ell)
        v, u = quad.fields(x)
        dv, du = quad.fields(d)
        s, ds = v - u, dv - du
        if np.any(np.abs(s) <= h * np.abs(ds) + 1e-300) or (np.any(s > 0) and np.any(s < 0)):
            raise NondifferentiableFamily("suspender slack changes sign: derivative undefined")
    f = lambda t: lift_to_state(spec, x + t * d, ell, include_forcing=False)
    return _richardson(f, h)


def lipschitz_bound(spec: NonlinearitySpec) -> Optional[float]:
    """Analytic global Lipschitz constant in the family's native arguments."""
    if spec.family is Family.ZERO:
        return 0.0
    if spec.family is Family.SPRING:
        return spec.stiffness
    if spec.family is Family.POWER:
        return max(abs(spec.mu1) * (spec.alpha + 1) * spec.R ** spec.alpha,
                   abs(spec.mu2) * (spec.beta + 1) * spec.R ** spec.beta)
    return None


def lipschitz_estimate(spec: NonlinearitySpec, R_ball: float, n_samples: int, seed: int = 0,
                       mode: str = "native") -> float:
    """Largest sampled difference quotient of ``(F, G)`` on random pairs.

    ``mode="native"`` measures each component against its own scalar argument
    (the gradient family against the ``(v, u)`` pair); ``mode="pair"`` always
    uses the Euclidean norm on ``(v, u)``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    rng = np.random.default_rng(seed)
    radius = R_ball * np.sqrt(rng.random((2, n_samples)))
    angle = 2 * np.pi * rng.random((2, n_samples))
    X = radius[0] * np.cos(angle[0]), radius[0] * np.sin(angle[0])
    Y = radius[1] * np.cos(angle[1]), radius[1] * np.sin(angle[1])
    FX = np.array(eval_F(spec, *X))
    FY = np.array(eval_F(spec, *Y))
    if mode == "pair" or spec.family is Family.GRADIENT:
        num = np.hypot(FX[0] - FY[0], FX[1] - FY[1])
        den = np.hypot(X[0] - Y[0], X[1] - Y[1])
        ok = den > 1e-12
        return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0
    if mode != "native":
        raise ValueError("mode must be 'native' or 'pair'")
    sX = native_arguments(spec, *X)
    sY = native_arguments(spec, *Y)
    best = 0.0
    for c in range(2):
        den = np.abs(sX[c] - sY[c])
        ok = den > 1e-12
        if np.any(ok):
            best = max(best, float(np.max(np.abs(FX[c] - FY[c])[ok] / den[ok])))
    return best


@dataclass(frozen=True)
class GrowthReport:
    lhs: np.ndarray
    kappa0: float
    epsilon: float
    c_epsilon: float
    forcing_norm: float

    def to_json(self) -> dict:
        return {"kappa0": self.kappa0, "epsilon": self.epsilon, "c_epsilon": self.c_epsilon,
                "forcing_norm": self.forcing_norm, "lhs_max": float(np.max(self.lhs)),
                "lhs_final": float(self.lhs[-1])}


def growth_diagnostic(record, spec: NonlinearitySpec, epsilon: float = 0.25) -> GrowthReport:
    """Smallest ``kappa0`` with ``int_0^t (F(U), U) <= kappa0 |U0|^2 + eps |U(t)|^2 + c_eps |F(0)|^2``.

    The pairing is :func:`nonlinear_pairing`; ``c_eps = 1/(4 eps)``.
    Diagnostic only.
    """
    params = record.params
    ell = params.ell
    times = np.asarray(record.times)
    dts = np.diff(times)
    if dts.size and not np.allclose(dts, dts[0], rtol=1e-9, atol=0):
        raise ValueError("growth_diagnostic needs a uniform time step")
    pair = np.array([nonlinear_pairing(spec, s, ell) for s in record.states])
    lhs = np.concatenate([[0.0], np.cumsum(0.5 * (pair[1:] + pair[:-1]) * dts)])
    norms2 = 2.0 * np.asarray(record.energy_total)
    N = record.states.shape[1] // 4
    f0 = lift_to_state(spec, np.zeros(4 * N), ell)
    forcing_norm = math.sqrt(0.5 * ell * float(f0 @ f0))
    c_eps = 1.0 / (4.0 * epsilon)
    slack = lhs - epsilon * norms2 - c_eps * forcing_norm ** 2
    u0 = norms2[0]
    kappa0 = 0.0 if u0 == 0 else max(0.0, float(np.max(slack)) / u0)
    return GrowthReport(lhs=lhs, kappa0=kappa0, epsilon=epsilon, c_epsilon=c_eps, forcing_norm=forcing_norm)
