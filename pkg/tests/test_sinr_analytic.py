import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from hmct import sinr_analytic as sa
from hmct.channel import LsrParams, NsddChannelSpec, scattering_function
from hmct.errors import ClosedFormInapplicable, QuadratureError
from hmct.sinr_analytic import (
    SinrConfig,
    closed_form_offset,
    db,
    erfc_approx,
    interference_noise_energy,
    max_sinr_offset,
    objective_ab,
    objective_argmax,
    objective_factors,
    objective_gradients,
    signal_energy,
    sinr_factored,
    sinr_report,
    sinr_theoretical,
    sinr_upper_bound,
)
from hmct.waveform import ambiguity_power, lattice_self_interference

from conftest import SIGMA, T, TS


def cfg_for(lattice, snr_db=30.0, **kw):
    return SinrConfig.from_snr(lattice, SIGMA, snr_db, **kw)


def quad_doppler(fn, f_max):
    """int_{-f}^{f} fn(nu) / sqrt(1 - (nu/f)^2) dnu via the algebraic-weight rule."""
    val, _ = integrate.quad(fn, -f_max, f_max, weight="alg", wvar=(-0.5, -0.5), epsabs=0, epsrel=1e-12)
    return f_max * val


class TestConfig:
    def test_from_snr(self, lattice):
        cfg = cfg_for(lattice, 20.0)
        assert cfg.sigma_w2 == pytest.approx(1e-2)
        assert cfg.offset_search_max == pytest.approx(T / 2)

    @pytest.mark.parametrize("kw", [
        dict(lattice_sum_extent=1),
        dict(delay_order=16),
        dict(doppler_order=8),
        dict(noise_model="other"),
        dict(sigma_w2=-1.0),
    ])
    def test_rejects_invalid(self, lattice, kw):
        with pytest.raises(ValueError):
            SinrConfig(lattice, SIGMA, **kw)


class TestEnergies:
    def test_signal_energy_vs_quad(self, lattice):
        lsr = LsrParams(1e-6, 100.0)
        cfg = cfg_for(lattice)

        def delay_fn(tau):
            return np.exp(-tau / lsr.tau_rms) * ambiguity_power(SIGMA, 0.0, tau, 0.0)

        d, _ = integrate.quad(delay_fn, 0, 40 * lsr.tau_rms, epsabs=0, epsrel=1e-13, limit=200)
        n = quad_doppler(lambda nu: ambiguity_power(SIGMA, 0.0, 0.0, nu), lsr.f_max)
        oracle = d * n / (np.pi * lsr.tau_rms * lsr.f_max)
        assert signal_energy(0.0, lsr, cfg) == pytest.approx(oracle, rel=1e-6)

    def test_interference_vs_quad(self, lattice):
        lsr = LsrParams(1e-5, 100.0)
        cfg = cfg_for(lattice, noise_model="as_printed")
        dt = 5e-6
        ms = np.arange(-4, 5)

        def inner(tau):
            def fn(nu):
                rect = ambiguity_power(SIGMA, dt, ms[:, None] * T + tau, ms[None, :] * lattice.F + nu).sum()
                rect -= ambiguity_power(SIGMA, dt, tau, nu)
                coset = ambiguity_power(SIGMA, dt, (ms[:, None] + 0.5) * T + tau,
                                        (ms[None, :] + 0.5) * lattice.F + nu).sum()
                return rect + coset
            return np.exp(-tau / lsr.tau_rms) * quad_doppler(fn, lsr.f_max)

        pts = [dt] + [k * T / 2 - 0 for k in (1, 2, 3)]
        val, _ = integrate.quad(inner, 0, 40 * lsr.tau_rms, points=[p for p in pts if p < 40 * lsr.tau_rms],
                                epsabs=0, epsrel=1e-11, limit=400)
        oracle = val / (np.pi * lsr.tau_rms * lsr.f_max) + cfg.sigma_w2 * math.exp(-np.pi * dt**2 / (2 * SIGMA))
        assert interference_noise_energy(dt, lsr, cfg) == pytest.approx(oracle, rel=1e-6)

    def test_point_scatterer_limit(self, lattice):
        lsr = LsrParams(1e-10, 1e-3)
        cfg = cfg_for(lattice)
        for dt in (0.0, 5e-6, 2e-5):
            assert signal_energy(dt, lsr, cfg) == pytest.approx(math.exp(-np.pi * dt**2 / SIGMA), rel=1e-3)

    def test_pure_self_interference(self, lattice):
        lsr = LsrParams(1e-10, 1e-3)
        cfg = SinrConfig(lattice, SIGMA, sigma_w2=0.0)
        expected = lattice_self_interference(lattice, SIGMA, extent=6)
        assert interference_noise_energy(0.0, lsr, cfg) == pytest.approx(expected, rel=1e-3)

    def test_lattice_tail(self, lattice):
        lsr = LsrParams(1e-5, 100.0)
        a = interference_noise_energy(3e-6, lsr, cfg_for(lattice, lattice_sum_extent=2))
        b = interference_noise_energy(3e-6, lsr, cfg_for(lattice, lattice_sum_extent=3))
        assert abs(a - b) < 1e-10 * b

    def test_doppler_mirror(self, lattice):
        lsr = LsrParams(1e-5, 100.0)
        cfg = cfg_for(lattice)
        plus = sa._energies(4e-6, lsr, cfg, 32, 32, 1.0)
        minus = sa._energies(4e-6, lsr, cfg, 32, 32, -1.0)
        assert_allclose(plus, minus, rtol=1e-12)

    @pytest.mark.parametrize("G", [1e-4, 1e-3, 1e-2])
    def test_order_doubling(self, lattice, G):
        lsr = LsrParams(G / 100, 100.0)
        cfg = cfg_for(lattice)
        for dt in (0.0, 1e-5):
            a = sinr_theoretical(dt, lsr, cfg)
            b = sinr_theoretical(dt, lsr, cfg.doubled())
            assert abs(a - b) < 1e-6 * b

    def test_quadrature_error_raised(self, lattice, monkeypatch):
        monkeypatch.setattr(sa, "QUAD_RTOL", -1.0)
        with pytest.raises(QuadratureError):
            signal_energy(0.0, LsrParams(1e-5, 100.0), cfg_for(lattice))


class TestSinr:
    def test_factored_form(self, lattice):
        for G in (1e-4, 1e-3, 1e-2):
            lsr = LsrParams(G / 100, 100.0)
            cfg = cfg_for(lattice, 10.0)
            for dt in (0.0, 3e-6, 2e-5):
                assert sinr_factored(dt, lsr, cfg) == pytest.approx(sinr_theoretical(dt, lsr, cfg), rel=1e-9)

    def test_noise_dominated_limit(self, lattice):
        lsr = LsrParams(1e-5, 100.0)
        assert sinr_theoretical(0.0, lsr, SinrConfig(lattice, SIGMA, sigma_w2=1e12)) < 1e-11

    def test_noise_models_agree_at_zero_offset(self, lattice):
        lsr = LsrParams(1e-5, 100.0)
        a = sinr_theoretical(0.0, lsr, cfg_for(lattice, 10.0, noise_model="as_printed"))
        b = sinr_theoretical(0.0, lsr, cfg_for(lattice, 10.0, noise_model="unit_energy"))
        assert a == pytest.approx(b, rel=1e-14)

    def test_upper_bound_maximal(self, lattice, rng):
        lsr = LsrParams(1e-5, 100.0)
        cfg = cfg_for(lattice, 10.0)
        ub = sinr_upper_bound(lsr, cfg)
        probes = rng.uniform(0, T / 2, 100)
        assert all(ub.sinr >= sinr_theoretical(d, lsr, cfg, check=False) for d in probes)
        assert ub.sinr >= sinr_theoretical(0.0, lsr, cfg)

    def test_upper_bound_grid_refinement(self, lattice):
        lsr = LsrParams(3e-6, 100.0)
        cfg = cfg_for(lattice, 30.0)
        a = sinr_upper_bound(lsr, cfg, n_grid=64)
        b = sinr_upper_bound(lsr, cfg, n_grid=256)
        assert abs(a.delta_t - b.delta_t) <= 1e-8

    @pytest.mark.parametrize("snr", [10.0, 30.0])
    def test_offset_grows_with_spread(self, lattice, snr):
        cfg = cfg_for(lattice, snr)
        dts = [sinr_upper_bound(LsrParams(G / 100, 100.0), cfg).delta_t for G in (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)]
        assert np.all(np.diff(dts) >= 0)

    def test_report(self, lattice):
        spec = NsddChannelSpec([LsrParams(1e-6, 100.0), LsrParams(1e-4, 100.0)], 30.0)
        report = sinr_report(spec, cfg_for(lattice))
        assert len(report) == 2
        statuses = [r.closed_status for r in report]
        assert statuses == ["closed_form", "fallback_argmax"]
        for r in report:
            assert r.delta_t_tpr == 0.0
            assert r.bound_chain_holds()
            assert r.sinr_ub_db == pytest.approx(float(db(r.sinr_ub)))


class TestClosedForm:
    def test_reference_point(self):
        dt = closed_form_offset(SIGMA, 1e-6)
        star = objective_argmax(SIGMA, 1e-6)
        assert star == pytest.approx(9.973e-7, rel=1e-3)
        assert dt == pytest.approx(1.668e-6, rel=1e-3)
        loss_db = 10 * np.log10(objective_ab(star, SIGMA, 1e-6) / objective_ab(dt, SIGMA, 1e-6))
        assert 0 <= loss_db <= 0.05

    def test_printed_bracket_is_off(self):
        # the bracket placed under the outer root lands beyond T/2
        printed = closed_form_offset(SIGMA, 1e-6, form="as_printed")
        assert printed > T / 2
        assert printed > 100 * objective_argmax(SIGMA, 1e-6)

    @given(k=st.floats(1e-3, 1e6))
    def test_inner_radicand_never_negative(self, k):
        assert sa._C1**2 * k**2 - sa._C2 * (k**2 - 4) > 0

    def test_inapplicable_for_large_spread(self):
        with pytest.raises(ClosedFormInapplicable):
            closed_form_offset(SIGMA, np.sqrt(SIGMA) / 2 * 1.01)
        closed_form_offset(SIGMA, np.sqrt(SIGMA) / 2 * 0.99)

    def test_fallback(self):
        dt, status = max_sinr_offset(SIGMA, 1e-4, T / 2)
        assert status == "fallback_argmax"
        assert dt == pytest.approx(objective_argmax(SIGMA, 1e-4, T / 2))
        assert max_sinr_offset(SIGMA, 1e-6)[1] == "closed_form"

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            closed_form_offset(0.0, 1e-6)
        with pytest.raises(ValueError):
            closed_form_offset(SIGMA, -1e-6)

    def test_scaling(self, rng):
        for _ in range(20):
            s = SIGMA * rng.uniform(0.2, 5)
            tau = rng.uniform(0.05, 0.45) * np.sqrt(s)
            c = rng.uniform(0.1, 10)
            assert closed_form_offset(c * s, np.sqrt(c) * tau) == pytest.approx(
                np.sqrt(c) * closed_form_offset(s, tau), rel=1e-12)

    def test_objective_ratio_sweep(self):
        for tau in np.linspace(TS, 20 * TS, 40):
            dt = closed_form_offset(SIGMA, tau)
            star = objective_argmax(SIGMA, tau)
            assert objective_ab(dt, SIGMA, tau) >= 0.999 * objective_ab(star, SIGMA, tau)

    def test_argmax_monotone_in_spread(self):
        # exploratory: reported, not required
        taus = np.geomspace(1e-6, 1e-4, 25)
        arg = np.array([objective_argmax(SIGMA, t) for t in taus])
        if not np.all(np.diff(arg) >= 0):
            warnings.warn("objective argmax is not monotone in tau_rms on the sweep grid")


class TestErfcApprox:
    def test_origin(self):
        assert erfc_approx(1e-12) == pytest.approx(1.0, abs=1e-11)

    def test_at_one(self):
        assert erfc_approx(1.0) == pytest.approx(0.31742, abs=1e-5)
        assert math.erfc(1 / math.sqrt(2)) == pytest.approx(0.31731, abs=1e-5)

    def test_relative_error_grid(self):
        x = np.linspace(0.01, 6, 1000)
        ref = np.array([math.erfc(v / math.sqrt(2)) for v in x])
        assert np.max(np.abs(erfc_approx(x) / ref - 1)) <= 0.01

    @pytest.mark.parametrize("x", [0.0, -1.0, np.nan])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            erfc_approx(x)


class TestObjective:
    tau = 1e-6

    def test_b_vs_quadrature(self):
        c = SIGMA / (2 * np.pi * self.tau)
        for dt in (0.0, 5e-7, 2e-6):
            oracle, _ = integrate.quad(lambda t: np.exp(-np.pi / SIGMA * (t - dt + c) ** 2), 0, 1e-3,
                                       points=[max(dt - c, 0.0)], epsabs=0, epsrel=1e-13, limit=200)
            _, b = objective_factors(dt, SIGMA, self.tau)
            assert b == pytest.approx(oracle, rel=1e-9)

    def test_product_is_delay_integral(self):
        for dt in (0.0, 1e-6, 4e-6):
            oracle, _ = integrate.quad(lambda t: np.exp(-t / self.tau - np.pi * (t - dt) ** 2 / SIGMA),
                                       0, 1e-3, points=[dt], epsabs=0, epsrel=1e-13, limit=200)
            assert objective_ab(dt, SIGMA, self.tau) == pytest.approx(oracle, rel=1e-9)
            a, b = objective_factors(dt, SIGMA, self.tau)
            assert a * b == pytest.approx(oracle, rel=1e-9)

    @given(dt=st.floats(0, T / 2), tau=st.floats(1e-7, 1e-4))
    def test_positive(self, dt, tau):
        assert objective_ab(dt, SIGMA, tau) > 0

    def test_gradients_finite_difference(self):
        h = 1e-12
        for dt in (0.0, 1e-6, 3e-6):
            da, dbv = objective_gradients(dt, SIGMA, self.tau)
            ap, bp = objective_factors(dt + h, SIGMA, self.tau)
            am, bm = objective_factors(dt - h, SIGMA, self.tau)
            assert (ap - am) / (2 * h) == pytest.approx(da, rel=1e-6)
            assert (bp - bm) / (2 * h) == pytest.approx(dbv, rel=1e-6)

    def test_stationarity_at_argmax(self):
        star = objective_argmax(SIGMA, self.tau)
        a, b = objective_factors(star, SIGMA, self.tau)
        da, dbv = objective_gradients(star, SIGMA, self.tau)
        assert da * b == pytest.approx(-dbv * a, rel=1e-6)

    def test_argmax_dominates_origin(self):
        for tau in (1e-6, 1e-5, 1e-4):
            assert objective_ab(objective_argmax(SIGMA, tau), SIGMA, tau) >= objective_ab(0.0, SIGMA, tau)

    def test_signal_energy_peak_near_argmax(self, lattice):
        lsr = LsrParams(self.tau, 100.0)
        cfg = cfg_for(lattice)
        grid = np.linspace(0, 5e-6, 501)
        s = [signal_energy(d, lsr, cfg, check=False) for d in grid]
        assert abs(grid[int(np.argmax(s))] - objective_argmax(SIGMA, self.tau)) <= 2 * (grid[1] - grid[0])
