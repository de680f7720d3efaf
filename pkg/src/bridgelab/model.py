"""Physical parameters, damping-point classification, sine basis and energy.

Both the cable displacement ``v`` and the deck displacement ``u`` are expanded
in the common basis ``phi_j(x) = sin(mu_j x)`` with ``mu_j = (2j+1) pi / (2 ell)``.
Every ``phi_j`` satisfies ``phi(0) = phi''(0) = 0`` and ``phi'(ell) = phi'''(ell) = 0``,
so the boundary conditions of both the string and the beam hold exactly.
The basis is not normalised: ``int_0^ell phi_j^2 dx = ell / 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import NegativeCoefficient, NonPositiveLength, ParameterError, XiOutOfRange

RatioLike = Union[Fraction, float, int, tuple]


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the coupled cable/deck system.

    ``xi`` is the absolute damping position. When ``xi_ratio`` is given it is
    the exact value of ``xi / ell`` and ``xi`` is derived from it.
    """

    ell: float = 1.0
    beta0: float = 1.0
    alpha: float = 1.0
    alpha0: float = 1.0
    k: float = 1.0
    gamma: float = 0.5
    gamma0: float = 0.5
    xi: float = 1.0 / 3.0
    xi_ratio: Optional[Fraction] = None

    def __post_init__(self):
        if self.xi_ratio is not None:
            ratio = Fraction(self.xi_ratio)
            object.__setattr__(self, "xi_ratio", ratio)
            object.__setattr__(self, "xi", float(ratio) * float(self.ell))

    @classmethod
    def rational(cls, num: int, den: int, **kwargs) -> "ModelParams":
        """Parameters with ``xi = (num/den) * ell`` stored exactly."""
        return cls(xi_ratio=Fraction(num, den), **kwargs)

    @property
    def k1(self) -> float:
        """Wave speed of the cable, ``sqrt(beta0)``."""
        return math.sqrt(self.beta0)

    @property
    def ratio(self) -> RatioLike:
        """``xi / ell`` as a Fraction when known exactly, else a float."""
        if self.xi_ratio is not None:
            return self.xi_ratio
        return self.xi / self.ell

    def replace(self, **changes) -> "ModelParams":
        if "xi" in changes and "xi_ratio" not in changes:
            changes["xi_ratio"] = None
        if "ell" in changes and self.xi_ratio is not None and "xi_ratio" not in changes:
            changes["xi_ratio"] = self.xi_ratio
        return replace(self, **changes)

    def to_json(self) -> dict:
        out = {
            "ell": self.ell,
            "beta0": self.beta0,
            "alpha": self.alpha,
            "alpha0": self.alpha0,
            "k": self.k,
            "gamma": self.gamma,
            "gamma0": self.gamma0,
        }
        if self.xi_ratio is not None:
            out["xi"] = {"num": self.xi_ratio.numerator, "den": self.xi_ratio.denominator}
        else:
            out["xi"] = self.xi
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        """Inverse of :meth:`to_json`.

        ``"xi"`` is either a float (absolute position) or ``{"num": p, "den": q}``
        meaning ``xi = (p/q) * ell``.
        """
        known = {"ell", "beta0", "alpha", "alpha0", "k", "gamma", "gamma0", "xi"}
        unknown = set(obj) - known
        if unknown:
            raise ParameterError(f"unknown parameter fields: {sorted(unknown)}")
        kwargs = {key: float(obj[key]) for key in known - {"xi"} if key in obj}
        xi = obj.get("xi", 1.0 / 3.0)
        if isinstance(xi, dict):
            if xi.get("den", 0) == 0:
                raise XiOutOfRange("xi.den must be a non-zero integer")
            return cls(xi_ratio=Fraction(int(xi["num"]), int(xi["den"])), **kwargs)
        return cls(xi=float(xi), **kwargs)


def validate_params(raw: ModelParams) -> ModelParams:
    """Return ``raw`` unchanged if every invariant holds, raise otherwise."""
    if not (math.isfinite(raw.ell) and raw.ell > 0):
        raise NonPositiveLength(f"ell must be positive, got {raw.ell}")
    for name in ("beta0", "alpha"):
        value = getattr(raw, name)
        if not (math.isfinite(value) and value > 0):
            raise NegativeCoefficient(f"{name} must be positive, got {value}")
    for name in ("alpha0", "k", "gamma", "gamma0"):
        value = getattr(raw, name)
        if not (math.isfinite(value) and value >= 0):
            raise NegativeCoefficient(f"{name} must be non-negative, got {value}")
    if raw.xi_ratio is not None:
        if not (0 < raw.xi_ratio < 1):
            raise XiOutOfRange(f"xi/ell must lie in (0, 1), got {raw.xi_ratio}")
    elif not (math.isfinite(raw.xi) and 0 < raw.xi < raw.ell):
        raise XiOutOfRange(f"xi must lie in (0, ell={raw.ell}), got {raw.xi}")
    return raw


def modal_frequency(j, ell: float):
    """``mu_j = (2j+1) pi / (2 ell)``; ``j`` may be an integer array."""
    j = np.asarray(j)
    if np.any(j < 0):
        raise ValueError("mode index must be non-negative")
    mu = (2 * j + 1) * np.pi / (2 * ell)
    return float(mu) if mu.ndim == 0 else mu


def mode_frequencies(N: int, ell: float) -> np.ndarray:
    return modal_frequency(np.arange(N), ell)


def basis(x, N: int, ell: float) -> np.ndarray:
    """Matrix ``Phi[i, j] = phi_j(x_i)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.sin(np.outer(x, mode_frequencies(N, ell)))


def basis_dx(x, N: int, ell: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = mode_frequencies(N, ell)
    return np.cos(np.outer(x, mu)) * mu


# ---------------------------------------------------------------------------
# damping point classification


class DampingTag(enum.Enum):
    EXPONENTIAL_ADMISSIBLE = "ExponentialAdmissible"
    UNDAMPED_MODE_EXISTS = "UndampedModeExists"
    NO_GUARANTEE = "NoGuarantee"


@dataclass(frozen=True)
class DampingPointClass:
    tag: DampingTag
    witness: Optional[int] = None
    p: Optional[int] = None
    q: Optional[int] = None
    exact: bool = True

    def to_json(self) -> dict:
        return {
            "tag": self.tag.value,
            "witness": self.witness,
            "p": self.p,
            "q": self.q,
            "exact": self.exact,
        }


def _as_fraction(ratio) -> Optional[Fraction]:
    if isinstance(ratio, Fraction):
        return ratio
    if isinstance(ratio, tuple):
        return Fraction(int(ratio[0]), int(ratio[1]))
    if isinstance(ratio, int):
        return Fraction(ratio)
    return None


def classify_damping_point(ratio: RatioLike) -> DampingPointClass:
    """Classify ``xi / ell`` by the parity of its lowest-terms representation.

    * odd/odd: no sine mode vanishes at ``xi`` and the uniform-decay argument
      applies (``EXPONENTIAL_ADMISSIBLE``).
    * even/odd: mode ``j = (q-1)/2`` vanishes at ``xi`` (``UNDAMPED_MODE_EXISTS``).
    * odd/even: no mode vanishes but no decay guarantee is available.

    Floats are never snapped: they are reported as ``NO_GUARANTEE`` together
    with the nearest rational of denominator at most 64.
    """
    frac = _as_fraction(ratio)
    if frac is None:
        value = float(ratio)
        if not (0.0 < value < 1.0):
            raise XiOutOfRange(f"xi/ell must lie in (0, 1), got {value}")
        near = Fraction(value).limit_denominator(64)
        return DampingPointClass(DampingTag.NO_GUARANTEE, None, near.numerator,
                                 near.denominator, exact=False)
    if not (0 < frac < 1):
        raise XiOutOfRange(f"xi/ell must lie in (0, 1), got {frac}")
    p, q = frac.numerator, frac.denominator
    if q % 2 == 0:
        return DampingPointClass(DampingTag.NO_GUARANTEE, None, p, q)
    if p % 2 == 0:
        # (2j+1) p / (2q) is an integer iff q | 2j+1 since gcd(p/2, q) = 1
        return DampingPointClass(DampingTag.UNDAMPED_MODE_EXISTS, (q - 1) // 2, p, q)
    return DampingPointClass(DampingTag.EXPONENTIAL_ADMISSIBLE, None, p, q)


# ---------------------------------------------------------------------------
# modal state


@dataclass(frozen=True)
class ModalState:
    """Sine coefficients of ``(v, v_t, u, u_t)``."""

    a: np.ndarray
    adot: np.ndarray
    b: np.ndarray
    bdot: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("a", "adot", "b", "bdot"):
            arr = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrays.append(arr)
        n = arrays[0].size
        if n < 1 or any(arr.size != n for arr in arrays):
            raise ValueError("all four coefficient arrays must share a length N >= 1")
        if not all(np.all(np.isfinite(arr)) for arr in arrays):
            raise ValueError("modal coefficients must be finite")

    @property
    def N(self) -> int:
        return self.a.size

    @classmethod
    def zeros(cls, N: int) -> "ModalState":
        z = np.zeros(N)
        return cls(z, z, z, z)

    @classmethod
    def from_vector(cls, vec) -> "ModalState":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size % 4 or vec.size == 0:
            raise ValueError("state vector length must be a positive multiple of 4")
        a, adot, b, bdot = np.split(vec, 4)
        return cls(a, adot, b, bdot)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.adot, self.b, self.bdot])

    def __add__(self, other: "ModalState") -> "ModalState":
        return ModalState.from_vector(self.to_vector() + other.to_vector())

    def __sub__(self, other: "ModalState") -> "ModalState":
        return ModalState.from_vector(self.to_vector() - other.to_vector())

    def __mul__(self, c: float) -> "ModalState":
        return ModalState.from_vector(c * self.to_vector())

    __rmul__ = __mul__

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("a", "adot", "b", "bdot")}

    @classmethod
    def from_json(cls, obj: dict) -> "ModalState":
        return cls(obj["a"], obj["adot"], obj["b"], obj["bdot"])


def unit_mode(N: int, j: int, slot: str = "a", value: float = 1.0) -> ModalState:
    """State with a single non-zero coefficient."""
    parts = {name: np.zeros(N) for name in ("a", "adot", "b", "bdot")}
    parts[slot][j] = value
    return ModalState(**parts)


def synthesize(state: ModalState, x_samples, ell: float) -> dict:
    """Evaluate ``v, v_t, u, u_t`` at the given positions."""
    x = np.atleast_1d(np.asarray(x_samples, dtype=float))
    if np.any(x < 0) or np.any(x > ell * (1 + 1e-14)):
        raise ValueError("sample positions must lie in [0, ell]")
    phi = basis(x, state.N, ell)
    return {
        "v": phi @ state.a,
        "v_t": phi @ state.adot,
        "u": phi @ state.b,
        "u_t": phi @ state.bdot,
    }


def project(f_values, weights, x_nodes, N: int, ell: float) -> np.ndarray:
    """Sine coefficients ``c_j = (2/ell) int f phi_j`` from quadrature data."""
    phi = basis(x_nodes, N, ell)
    return (2.0 / ell) * (phi.T @ (np.asarray(weights) * np.asarray(f_values)))


def gauss_legendre(n: int, ell: float):
    """Gauss-Legendre nodes and weights on ``[0, ell]``."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * ell * (t + 1.0), 0.5 * ell * w


# ---------------------------------------------------------------------------
# energy


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_cable: float
    potential_cable: float
    kinetic_deck: float
    bending_deck: float
    stretching_deck: float
    coupling: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", sum(self.parts()))

    def parts(self) -> tuple:
        return (self.kinetic_cable, self.potential_cable, self.kinetic_deck,
                self.bending_deck, self.stretching_deck, self.coupling)

    PART_NAMES = ("kinetic_cable", "potential_cable", "kinetic_deck",
                  "bending_deck", "stretching_deck", "coupling")


def total_energy(state: ModalState, params: ModelParams) -> EnergyBreakdown:
    """Energy of the linear system including the coupling term ``(k/2)|v-u|^2``.

    The cable potential uses ``beta0`` (the coefficient of ``v_xx`` in the
    cable equation), which is what makes ``dE/dt`` equal minus the damping
    power exactly.
    """
    mu2 = mode_frequencies(state.N, params.ell) ** 2
    c = params.ell / 4.0
    return EnergyBreakdown(
        kinetic_cable=c * float(np.sum(state.adot ** 2)),
        potential_cable=c * params.beta0 * float(np.sum(mu2 * state.a ** 2)),
        kinetic_deck=c * float(np.sum(state.bdot ** 2)),
        bending_deck=c * params.alpha * float(np.sum(mu2 ** 2 * state.b ** 2)),
        stretching_deck=c * params.alpha0 * float(np.sum(mu2 * state.b ** 2)),
        coupling=c * params.k * float(np.sum((state.a - state.b) ** 2)),
    )


def damping_power(state: ModalState, params: ModelParams) -> float:
    """``gamma v_t(xi)^2 + gamma0 u_t(xi)^2``."""
    vals = synthesize(state, [params.xi], params.ell)
    return float(params.gamma * vals["v_t"][0] ** 2 + params.gamma0 * vals["u_t"][0] ** 2)


def energy_gram(params: ModelParams, N: int) -> np.ndarray:
    """Symmetric matrix ``G`` with ``E(U) = U^T G U / 2`` for ``U = [a, adot, b, bdot]``."""
    mu2 = mode_frequencies(N, params.ell) ** 2
    I = np.eye(N)
    k = params.k
    G = np.zeros((4 * N, 4 * N))
    s = slice
    G[s(0, N), s(0, N)] = np.diag(params.beta0 * mu2) + k * I
    G[s(0, N), s(2 * N, 3 * N)] = -k * I
    G[s(2 * N, 3 * N), s(0, N)] = -k * I
    G[s(N, 2 * N), s(N, 2 * N)] = I
    G[s(2 * N, 3 * N), s(2 * N, 3 * N)] = np.diag(params.alpha * mu2 ** 2 + params.alpha0 * mu2) + k * I
    G[s(3 * N, 4 * N), s(3 * N, 4 * N)] = I
    return 0.5 * params.ell * G


def energy_norm(state, params: ModelParams) -> float:
    """``sqrt(2 E)``, the norm induced by the energy inner product."""
    if isinstance(state, ModalState):
        return math.sqrt(2.0 * total_energy(state, params).total)
    vec = np.asarray(state)
    G = energy_gram(params, vec.size // 4)
    return math.sqrt(max(float(vec @ G @ vec), 0.0))


def random_state(N: int, rng: np.random.Generator, decay: float = 2.0) -> ModalState:
    """Random coefficients with algebraic decay ``(j+1)^-decay`` (smooth-ish fields)."""
    scale = (np.arange(N) + 1.0) ** (-decay)
    return ModalState(*(scale * rng.standard_normal(N) for _ in range(4)))


def ratios_up_to(q_max: int) -> Sequence[Fraction]:
    """All reduced fractions ``p/q`` in (0, 1) with ``q <= q_max``."""
    out = []
    for q in range(2, q_max + 1):
        for p in range(1, q):
            if math.gcd(p, q) == 1:
                out.append(Fraction(p, q))
    return out
