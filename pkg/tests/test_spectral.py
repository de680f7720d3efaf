import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bridgelab.errors import IrrationalXi
from bridgelab.galerkin import assemble, sigma_min
from bridgelab.model import DampingTag, ModelParams, classify_damping_point, ratios_up_to
from bridgelab.spectral import (F_xi, F_xi_inf, F_xi_period, classify_and_spectrum, conjugate_closed,
                                eigenvalues, golden_section, pruss_sweep, spectral_abscissa,
                                undamped_modes)


class TestEigenvalues:
    def test_conjugate_closed_and_stable(self):
        rep = eigenvalues(assemble(ModelParams.rational(1, 3), 16))
        assert rep.eigenvalues.size == 64
        assert conjugate_closed(rep.eigenvalues)
        assert rep.spectral_abscissa < 0

    def test_abscissa_plateau(self):
        a16 = spectral_abscissa(ModelParams.rational(1, 3), 16)
        a32 = spectral_abscissa(ModelParams.rational(1, 3), 32)
        assert a16 < 0 and a32 < 0
        assert abs(a16 - a32) <= 0.2 * abs(a32)

    def test_matches_physical_coordinates(self):
        gen = assemble(ModelParams(k=0.3), 5)
        a = np.sort_complex(np.linalg.eigvals(gen.matrix))
        b = np.sort_complex(eigenvalues(gen).eigenvalues)
        assert np.allclose(a, b, atol=1e-9)

    def test_undamped_pair_on_axis(self):
        rep = eigenvalues(assemble(ModelParams.rational(2, 3, k=0.0), 24))
        target = 1.5j * math.pi
        assert np.min(np.abs(rep.eigenvalues - target)) < 1e-8
        assert np.min(np.abs(rep.eigenvalues + target)) < 1e-8
        # every mode with 3 | 2j+1 vanishes at 2/3
        assert rep.undamped_witnesses == tuple(j for j in range(24) if (2 * j + 1) % 3 == 0)
        assert rep.axis_gap < 1e-10

    def test_size_limit(self):
        with pytest.raises(ValueError):
            eigenvalues(assemble(ModelParams(), 257))

    def test_witnesses_agree_with_classification(self):
        for r in ratios_up_to(9):
            gen = assemble(ModelParams(xi_ratio=r), 12)
            cls = classify_damping_point(r)
            has = bool(undamped_modes(gen))
            assert has == (cls.tag is DampingTag.UNDAMPED_MODE_EXISTS and cls.witness < 12)

    def test_classify_and_spectrum(self):
        out = classify_and_spectrum(ModelParams.rational(2, 5), 10)
        assert out["classification"]["tag"] == "UndampedModeExists"
        assert out["undamped_witnesses"] == [2, 7]
        assert out["consistent"]

    def test_json(self):
        obj = eigenvalues(assemble(ModelParams(), 2)).to_json()
        assert obj["schema"].startswith("bridgelab.spectrum/")
        assert len(obj["eigenvalues"]) == 8


class TestResolventSweep:
    def test_zero_entry(self):
        gen = assemble(ModelParams(), 8)
        sw = pruss_sweep(gen, 10.0, 11)
        assert sw.lambdas[0] == 0.0
        assert sw.norms[0] == pytest.approx(1.0 / sigma_min(gen, 0.0), rel=1e-12)

    def test_admissible_sweep_finite(self):
        sw = pruss_sweep(assemble(ModelParams.rational(1, 3), 12), 20.0, 400)
        assert sw.finite
        assert np.all(sw.norms > 0)

    def test_undamped_shift_marked_infinite(self):
        gen = assemble(ModelParams.rational(2, 3, k=0.0), 12)
        sw = pruss_sweep(gen, 20.0, 50, extra_points=[1.5 * math.pi])
        assert not sw.finite
        assert math.isinf(sw.norms[np.argmin(np.abs(sw.lambdas - 1.5 * math.pi))])
        assert sw.to_json()["sup"] is None

    def test_threads_same_result(self):
        gen = assemble(ModelParams(), 6)
        a = pruss_sweep(gen, 15.0, 40)
        b = pruss_sweep(gen, 15.0, 40, threads=3)
        assert np.array_equal(a.norms, b.norms)

    def test_csv_header(self):
        text = pruss_sweep(assemble(ModelParams(), 2), 1.0, 3).to_csv()
        lines = text.splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "lambda,norm"
        assert len(lines) == 5

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            pruss_sweep(assemble(ModelParams(), 2), 1.0, 1)


class TestFxi:
    def test_value_at_zero(self):
        assert F_xi(0.0, ModelParams.rational(1, 3, gamma=3.0)) == 1.0

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(ratios_up_to(9)), st.floats(0.0, 50.0), st.floats(0.0, 3.0))
    def test_periodic_and_nonnegative(self, r, lam, gamma):
        p = ModelParams(xi_ratio=r, gamma=gamma, beta0=2.0)
        T = F_xi_period(p)
        assert F_xi(lam, p) >= 0
        assert F_xi(lam + T, p) == pytest.approx(F_xi(lam, p), abs=1e-9)

    def test_period_uses_denominator(self):
        p = ModelParams.rational(2, 5, beta0=4.0, ell=2.0)
        assert F_xi_period(p) == pytest.approx(2 * math.pi * 2.0 * 5 / 2.0)

    def test_float_xi_requires_window(self):
        p = ModelParams(xi=0.3)
        with pytest.raises(IrrationalXi):
            F_xi_inf(p)
        res = F_xi_inf(p, samples_per_period=1000, window=(0.0, 10.0))
        assert not res.exhaustive

    def test_admissible_positive_and_undamped_zero(self):
        pos = F_xi_inf(ModelParams.rational(1, 3, gamma=1.0), samples_per_period=20_000)
        zero = F_xi_inf(ModelParams.rational(2, 3, gamma=1.0), samples_per_period=20_000)
        assert pos.minimum > 0.05
        assert zero.minimum < 1e-12
        # every zero sits at a frequency of an undamped cable mode
        assert math.isclose(math.cos(zero.argmin) ** 2, 0.0, abs_tol=1e-12)

    def test_minimum_below_samples(self):
        p = ModelParams.rational(1, 3, gamma=1.0)
        res = F_xi_inf(p, samples_per_period=20_000)
        grid = np.linspace(0, F_xi_period(p), 20_001)
        assert res.minimum <= np.min(F_xi(grid, p)) + 1e-15

    def test_golden_section_parabola(self):
        x, fx = golden_section(lambda t: (t - 0.3) ** 2 + 2.0, -1.0, 2.0)
        assert abs(x - 0.3) < 1e-7
        assert fx == pytest.approx(2.0)
