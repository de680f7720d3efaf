import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from bridgelab.errors import NegativeCoefficient, NonPositiveLength, ParameterError, XiOutOfRange
from bridgelab.model import (DampingTag, ModalState, ModelParams, basis, basis_dx, classify_damping_point,
                             damping_power, energy_gram, energy_norm, modal_frequency, mode_frequencies,
                             random_state, ratios_up_to, synthesize, total_energy, unit_mode,
                             validate_params)


class TestParams:
    def test_defaults_valid(self):
        p = validate_params(ModelParams())
        assert p.k1 == 1.0
        assert p.ratio == pytest.approx(1 / 3)

    def test_rational_xi_exact(self):
        p = ModelParams.rational(2, 3, ell=3.0)
        assert p.xi_ratio == Fraction(2, 3)
        assert p.xi == pytest.approx(2.0)

    @pytest.mark.parametrize("field,value,exc", [
        ("ell", 0.0, NonPositiveLength),
        ("ell", -1.0, NonPositiveLength),
        ("beta0", 0.0, NegativeCoefficient),
        ("alpha", -1.0, NegativeCoefficient),
        ("gamma", -0.1, NegativeCoefficient),
        ("k", float("nan"), NegativeCoefficient),
    ])
    def test_invalid_coefficients(self, field, value, exc):
        with pytest.raises(exc):
            validate_params(ModelParams(**{field: value}))

    @pytest.mark.parametrize("xi", [0.0, 1.0, 1.5, -0.2])
    def test_xi_outside_interval(self, xi):
        with pytest.raises(XiOutOfRange):
            validate_params(ModelParams(xi=xi))

    def test_errors_are_value_errors(self):
        assert issubclass(XiOutOfRange, ParameterError)
        assert issubclass(XiOutOfRange, ValueError)

    def test_replace_float_xi_drops_ratio(self):
        p = ModelParams.rational(1, 3).replace(xi=0.4)
        assert p.xi_ratio is None and p.xi == 0.4

    @given(st.integers(1, 40), st.integers(2, 41), st.floats(0.1, 10), st.floats(0, 5))
    def test_json_roundtrip(self, num, den, ell, gamma):
        if num >= den:
            num, den = den - 1, den
        p = ModelParams.rational(num, den, ell=ell, gamma=gamma)
        q = ModelParams.from_json(p.to_json())
        assert q == p

    def test_json_unknown_field(self):
        with pytest.raises(ParameterError):
            ModelParams.from_json({"gama": 1.0})


class TestBasis:
    def test_frequencies(self):
        assert modal_frequency(0, 1.0) == pytest.approx(math.pi / 2)
        assert np.allclose(mode_frequencies(3, 2.0), [math.pi / 4, 3 * math.pi / 4, 5 * math.pi / 4])

    def test_boundary_conditions(self):
        # v(0) = 0, v_x(ell) = 0; the beam additionally needs u_xx(0) = 0 and u_xxx(ell) = 0
        ell, N = 1.7, 12
        mu = mode_frequencies(N, ell)
        assert np.allclose(basis([0.0], N, ell), 0.0)
        assert np.allclose(basis_dx([ell], N, ell)[0] / mu, 0.0, atol=1e-14)
        assert np.allclose(-mu ** 2 * np.sin(mu * 0.0), 0.0)
        assert np.allclose(np.cos(mu * ell), 0.0, atol=1e-14)

    def test_orthogonality_against_adaptive_quadrature(self):
        ell = 1.3
        for i in range(4):
            for j in range(4):
                val, _ = quad(lambda x: basis([x], 4, ell)[0, i] * basis([x], 4, ell)[0, j], 0, ell)
                assert val == pytest.approx(ell / 2 if i == j else 0.0, abs=1e-12)


class TestClassification:
    @pytest.mark.parametrize("num,den,tag,witness", [
        (1, 3, DampingTag.EXPONENTIAL_ADMISSIBLE, None),
        (3, 5, DampingTag.EXPONENTIAL_ADMISSIBLE, None),
        (2, 3, DampingTag.UNDAMPED_MODE_EXISTS, 1),
        (4, 7, DampingTag.UNDAMPED_MODE_EXISTS, 3),
        (1, 2, DampingTag.NO_GUARANTEE, None),
        (3, 4, DampingTag.NO_GUARANTEE, None),
    ])
    def test_table(self, num, den, tag, witness):
        cls = classify_damping_point(Fraction(num, den))
        assert cls.tag is tag and cls.witness == witness

    def test_brute_force_zero_search(self):
        # oracle: search sin(mu_j xi) = 0 over many modes directly
        for r in ratios_up_to(15):
            xi = float(r)
            vanish = [j for j in range(200) if abs(math.sin((2 * j + 1) * math.pi / 2 * xi)) < 1e-9]
            cls = classify_damping_point(r)
            if vanish:
                assert cls.tag is DampingTag.UNDAMPED_MODE_EXISTS
                assert cls.witness == vanish[0]
            else:
                assert cls.tag is not DampingTag.UNDAMPED_MODE_EXISTS

    def test_float_not_snapped(self):
        cls = classify_damping_point(1 / 3)
        assert cls.tag is DampingTag.NO_GUARANTEE and not cls.exact
        assert (cls.p, cls.q) == (1, 3)

    def test_tuple_and_range(self):
        assert classify_damping_point((2, 6)).tag is DampingTag.EXPONENTIAL_ADMISSIBLE
        with pytest.raises(XiOutOfRange):
            classify_damping_point(Fraction(3, 2))


class TestModalState:
    def test_immutable(self):
        s = ModalState.zeros(3)
        with pytest.raises(ValueError):
            s.a[0] = 1.0

    def test_vector_roundtrip(self):
        s = random_state(5, np.random.default_rng(0))
        t = ModalState.from_vector(s.to_vector())
        assert np.array_equal(s.to_vector(), t.to_vector())
        assert np.array_equal(ModalState.from_json(s.to_json()).to_vector(), s.to_vector())

    def test_arithmetic(self):
        s = unit_mode(3, 1, "b", 2.0)
        assert np.array_equal((s + s).b, [0, 4, 0])
        assert np.array_equal((s * 0.5 - s).b, [0, -1, 0])

    def test_synthesize_single_mode(self):
        s = unit_mode(4, 2, "adot", 1.5)
        x = np.linspace(0, 1, 7)
        out = synthesize(s, x, 1.0)
        assert np.allclose(out["v_t"], 1.5 * np.sin(5 * np.pi / 2 * x))
        assert np.allclose(out["v"], 0.0)


def _energy_by_quadrature(state, p):
    """Direct integration of the energy density on a fine Gauss grid."""
    x, w = np.polynomial.legendre.leggauss(200)
    x = 0.5 * p.ell * (x + 1)
    w = 0.5 * p.ell * w
    N = state.N
    mu = mode_frequencies(N, p.ell)
    Phi = basis(x, N, p.ell)
    dPhi = basis_dx(x, N, p.ell)
    d2Phi = -Phi * mu ** 2
    v, vt, vx = Phi @ state.a, Phi @ state.adot, dPhi @ state.a
    u, ut, ux, uxx = Phi @ state.b, Phi @ state.bdot, dPhi @ state.b, d2Phi @ state.b
    dens = vt ** 2 + p.beta0 * vx ** 2 + ut ** 2 + p.alpha * uxx ** 2 + p.alpha0 * ux ** 2 + p.k * (v - u) ** 2
    return 0.5 * float(w @ dens)


class TestEnergy:
    def test_matches_quadrature(self):
        p = ModelParams.rational(1, 3, beta0=1.7, alpha=0.6, alpha0=0.4, k=2.0)
        s = random_state(6, np.random.default_rng(3))
        assert total_energy(s, p).total == pytest.approx(_energy_by_quadrature(s, p), rel=1e-12)

    def test_gram_quadratic_form(self):
        p = ModelParams(k=0.8, alpha0=0.3)
        s = random_state(5, np.random.default_rng(4))
        x = s.to_vector()
        assert 0.5 * x @ energy_gram(p, 5) @ x == pytest.approx(total_energy(s, p).total, rel=1e-13)
        assert energy_norm(s, p) == pytest.approx(energy_norm(x, p), rel=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 3), st.floats(0, 3), st.floats(0.05, 0.95))
    def test_energy_nonnegative(self, k, g, xi):
        p = ModelParams(k=k, gamma=g, xi=xi)
        s = random_state(4, np.random.default_rng(int(1000 * xi)))
        E = total_energy(s, p)
        assert all(part >= 0 for part in E.parts())
        assert E.total == pytest.approx(sum(E.parts()))
        assert damping_power(s, p) >= 0

    def test_zero_state(self):
        assert total_energy(ModalState.zeros(3), ModelParams()).total == 0.0
