import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bridgelab.characteristics import (RiemannField, advance_exact, boundary_closure, from_riemann,
                                       initial_field, run_characteristics, scatter_at_damping,
                                       scatter_report, step, to_riemann)
from bridgelab.crossval import cross_validate, smooth_profile
from bridgelab.errors import IncommensurableXi
from bridgelab.model import ModelParams


def string_params(**kw):
    kw.setdefault("k", 0.0)
    return ModelParams.rational(1, 3, **kw)


class TestRiemann:
    @given(st.integers(2, 40), st.floats(0.1, 4.0), st.integers(0, 1000))
    def test_roundtrip(self, M, k1, seed):
        rng = np.random.default_rng(seed)
        dx = 1.0 / M
        v = np.concatenate([[0.0], rng.standard_normal(M)])
        vt = rng.standard_normal(M)
        p, q = to_riemann(v, vt, dx, k1)
        v2, vt2 = from_riemann(p, q, dx, k1)
        assert np.allclose(v2, v, atol=1e-12)
        assert np.allclose(vt2, vt, atol=1e-12)

    def test_size_check(self):
        with pytest.raises(ValueError):
            to_riemann(np.zeros(4), np.zeros(4), 0.1, 1.0)


class TestScatter:
    @settings(max_examples=200)
    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 20), st.floats(0.1, 5))
    def test_balance_and_dissipation(self, a, d, gamma, k1):
        b, c = scatter_at_damping(a, d, gamma, k1)
        g = gamma / k1
        e_in, e_out = a * a + d * d, b * b + c * c
        assert e_out <= e_in + 1e-12 * (1 + e_in)
        assert e_in - e_out == pytest.approx(g * (b + d) ** 2, abs=1e-12 * (1 + e_in))
        # velocity is continuous across the damper
        assert a + c == pytest.approx(b + d, abs=1e-12 * (1 + abs(a) + abs(d)))

    def test_jump_condition(self):
        # [[beta0 v_x]] = gamma v_t(xi):  k1 v_x = (q - p)/2 on each side
        a, d, gamma, k1 = 0.7, -1.3, 0.8, 1.5
        rep = scatter_report(a, d, gamma, k1)
        vx_left = (rep.c - rep.a) / (2 * k1)
        vx_right = (rep.d - rep.b) / (2 * k1)
        beta0 = k1 ** 2
        assert beta0 * (vx_right - vx_left) == pytest.approx(gamma * rep.velocity)

    def test_undamped_is_identity(self):
        b, c = scatter_at_damping(0.3, -2.0, 0.0, 1.0)
        assert (b, c) == (0.3, -2.0)

    def test_negative_gamma(self):
        with pytest.raises(ValueError):
            scatter_at_damping(1.0, 1.0, -1.0, 1.0)

    def test_boundary_closure(self):
        p0, qL = boundary_closure(2.0, -3.0)
        assert p0 == -2.0 and qL == -3.0


class TestField:
    def test_incommensurable(self):
        with pytest.raises(IncommensurableXi):
            initial_field(lambda x: 0 * x, lambda x: 0 * x, string_params(), 100)

    def test_brute_force_period(self):
        # fixed/free undamped string: after 2 ell / k1 the field is negated, after 4 ell / k1 restored
        M = 8
        rng = np.random.default_rng(0)
        p, q = rng.standard_normal(M), rng.standard_normal(M)
        f = RiemannField(p, q, dx=1 / M, ell=1.0, xi=0.25, k1=1.0, gamma=0.0)
        half = advance_exact(f, 2 * M)
        full = advance_exact(half, 2 * M)
        assert np.array_equal(half.p, -p) and np.array_equal(half.q, -q)
        assert np.array_equal(full.p, p) and np.array_equal(full.q, q)

    def test_energy_never_increases(self):
        rng = np.random.default_rng(1)
        f = RiemannField(rng.standard_normal(30), rng.standard_normal(30), dx=1 / 30, ell=1.0,
                         xi=1 / 3, k1=1.0, gamma=0.7)
        E = f.energy()
        for _ in range(200):
            f, ev = step(f)
            assert f.energy() <= E + 1e-14
            E = f.energy()
            assert ev.trace_jump == pytest.approx(0.0, abs=1e-12)

    def test_step_time(self):
        f = initial_field(lambda x: np.sin(np.pi * x / 2), lambda x: 0 * x, string_params(beta0=4.0), 30)
        g, _ = step(f)
        assert g.t == pytest.approx(f.dx / 2.0)


class TestRun:
    def test_requires_decoupled(self):
        with pytest.raises(ValueError):
            run_characteristics(lambda x: 0 * x, lambda x: 0 * x, ModelParams.rational(1, 3), 1.0, M=30)

    def test_standing_wave_oracle(self):
        # undamped: v = sin(mu0 x) cos(k1 mu0 t) exactly
        p = string_params(gamma=0.0, beta0=2.25)
        mu = math.pi / 2
        tr = run_characteristics(lambda x: np.sin(mu * x), lambda x: 0 * x, p, T=3.0, M=300, output_every=50)
        for t, v in zip(tr.times, tr.v):
            exact = np.sin(mu * tr.x_nodes) * math.cos(1.5 * mu * t)
            assert np.max(np.abs(v - exact)) < 1e-4

    def test_output_times(self):
        tr = run_characteristics(lambda x: np.sin(np.pi * x / 2), lambda x: 0 * x, string_params(), T=1.0,
                                 M=30, output_every=10)
        assert np.allclose(tr.times, [0.0, 1 / 3, 2 / 3, 1.0])

    def test_energy_identity(self):
        tr = run_characteristics(lambda x: np.sin(np.pi * x / 2) + x ** 2, lambda x: np.cos(3 * x),
                                 string_params(gamma=1.3), T=2.0, M=60)
        assert tr.energy_identity_residual() < 1e-13
        assert tr.energy[-1] < tr.energy[0]

    def test_csv_headers(self):
        tr = run_characteristics(lambda x: np.sin(np.pi * x / 2), lambda x: 0 * x, string_params(), T=0.1, M=30)
        snap = tr.snapshots_csv().splitlines()
        assert snap[0].startswith("#") and snap[1] == "t,x,v,v_t"
        en = tr.energy_csv().splitlines()
        assert en[0].startswith("#") and en[1] == "t,E"


class TestCrossValidation:
    def test_agreement(self):
        res = cross_validate(string_params(gamma=0.5), T=1.0, N=32, M=150)
        assert res.sup_error < 3e-2
        assert res.err_v[0] < 1e-4

    def test_undamped_single_mode_agreement_is_tight(self):
        # a single mode has no truncation error, so only the O(dx^2) grid error remains
        c = np.zeros(16)
        c[0] = 1.0
        res = cross_validate(string_params(gamma=0.0), T=2.0, N=16, M=300, coeffs=c, substeps=20)
        assert res.sup_error < 1e-4

    def test_profile_has_bump(self):
        c = smooth_profile(32, 1.0)
        assert c[0] > 1.0 and np.any(np.abs(c[1:]) > 1e-3)

    def test_json(self):
        res = cross_validate(string_params(), T=0.2, N=8, M=30)
        obj = res.to_json()
        assert obj["schema"].startswith("bridgelab.cross_validate/")
        assert res.to_csv().splitlines()[1] == "t,err_v,err_vt"
