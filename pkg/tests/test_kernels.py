from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragkin.grids import SizeGrid
from fragkin.kernels import (
    DEFAULT_ETAS,
    CoagKernel,
    FragKernel,
    RateModel,
    check_hypotheses,
    constant_coag,
    diffusion_condition_number,
    domination_ratio,
    dump_kernel_table,
    estimate_ell_bars,
    frag_conservativity_residual,
    homogeneous_kernel,
    kappa_delta,
    load_kernel_table,
    max_delta,
    moment_report,
    power_kernel,
    separable_kernel,
    sigma_ell,
    sigma_zero_ell,
    sum_power_coag,
    tabulated_profile_kernel,
    zero_kernel,
)

GRID = SizeGrid(0.01, 100.0, 256)


def binary_table():
    s = np.linspace(0.01, 1.0, 100)
    return tabulated_profile_kernel(s, np.full_like(s, 2.0))


class TestRateModel:
    def test_power_envelopes(self):
        r = RateModel.power(0.2, 0.5, dim=1)
        xi = GRID.nodes
        assert np.allclose(r.alpha(xi) * (1 + xi) ** 0.4, 1.0)
        assert np.allclose(r.beta_envelope(xi) * (1 + xi) ** -0.5, 1.0)
        assert np.all(np.diff(r.alpha(xi)) <= 0) and np.all(np.diff(r.beta_envelope(xi)) >= 0)

    def test_power_needs_positive_exponents(self):
        with pytest.raises(ValueError):
            RateModel.power(0.0, 0.5)

    def test_tabulated_interpolates_in_log(self):
        r = RateModel.tabulated([1.0, 100.0], [1.0, 3.0], [2.0, 2.0])
        assert r.alpha(np.array([10.0]))[0] == pytest.approx(2.0)

    def test_condition_number(self):
        eye = np.broadcast_to(np.eye(2), (3, 4, 2, 2))
        assert diffusion_condition_number(eye) == pytest.approx(1.0)
        aniso = np.broadcast_to(np.diag([1.0, 4.0]), (3, 4, 2, 2))
        assert diffusion_condition_number(aniso) == pytest.approx(4.0)


class TestConservativity:
    def test_binary_unit_parent(self):
        assert frag_conservativity_residual(power_kernel(0.0), 1.0) <= 1e-10

    def test_power_minus_half(self):
        assert frag_conservativity_residual(power_kernel(-0.5), 3.0, m_quad=1024) <= 1e-6

    def test_scaled_table(self):
        k = binary_table().scaled(1.1)
        assert frag_conservativity_residual(k, 7.0) == pytest.approx(0.1, abs=1e-6)

    def test_negative_kernel_rejected(self):
        bad = FragKernel("custom", lambda xi, eta: -np.ones_like(xi))
        with pytest.raises(ValueError, match="non-negative"):
            frag_conservativity_residual(bad, 2.0)

    def test_small_m_quad_rejected(self):
        with pytest.raises(ValueError):
            frag_conservativity_residual(power_kernel(0.0), 1.0, m_quad=32)

    @pytest.mark.parametrize("nu", [0.0, -0.25, -0.5, -0.9])
    def test_power_family_conservative(self, nu):
        for eta in (0.1, 1.0, 50.0):
            assert frag_conservativity_residual(power_kernel(nu), eta) <= 1e-8

    @pytest.mark.parametrize("nu", [0.1, -1.0, -1.5])
    def test_power_parameter_range(self, nu):
        with pytest.raises(ValueError):
            power_kernel(nu)


class TestSigma:
    def test_binary_examples(self):
        k = power_kernel(0.0)
        assert sigma_ell(k, 1.0) == pytest.approx(1.0, abs=1e-8)
        assert sigma_ell(k, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-6)
        assert sigma_ell(k, 9.0) == pytest.approx(0.2, abs=1e-6)

    @pytest.mark.parametrize("nu", [0.0, -0.25, -0.5])
    @pytest.mark.parametrize("ell", [0.5, 1.0, 2.0, 5.0, 9.0])
    def test_closed_form(self, nu, ell):
        assert sigma_ell(power_kernel(nu), ell) == pytest.approx((nu + 2) / (nu + ell + 1), abs=1e-6)

    @pytest.mark.parametrize("nu", [0.0, -0.25, -0.5])
    def test_unit_first_moment(self, nu):
        assert sigma_ell(power_kernel(nu), 1.0) == pytest.approx(1.0, abs=1e-8)

    def test_fragment_counts(self):
        assert sigma_zero_ell(power_kernel(0.0), 0.0) == pytest.approx(2.0, abs=1e-6)
        assert sigma_zero_ell(power_kernel(-0.5), 0.0) == pytest.approx(3.0, abs=1e-5)

    def test_scaled_count_vanishes(self):
        k = power_kernel(0.0)
        small = sigma_zero_ell(k, 2.0, [10, 20, 40, 80])
        large = sigma_zero_ell(k, 2.0, [1e3, 2e3, 4e3, 8e3])
        assert large < small and large < 1e-5

    def test_needs_four_samples(self):
        with pytest.raises(ValueError):
            sigma_ell(power_kernel(0.0), 1.0, [1, 2, 3])

    @given(st.floats(-0.9, 0.0), st.lists(st.floats(1.0, 40.0), min_size=2, max_size=6, unique=True))
    def test_non_increasing_above_one(self, nu, ells):
        k = power_kernel(nu)
        ells = sorted(ells)
        vals = [sigma_ell(k, e) for e in ells]
        assert all(b <= a + 1e-6 for a, b in zip(vals, vals[1:]))


class TestEllBars:
    def test_binary(self):
        assert tuple(estimate_ell_bars(power_kernel(0.0))) == (0.0, 0.0)

    def test_three_families_coincide(self):
        hom = homogeneous_kernel(lambda s: np.full_like(s, 2.0))
        sep = separable_kernel(lambda x: np.ones_like(x))
        pw = power_kernel(0.0)
        xx, ee = np.meshgrid(GRID.nodes[::8], GRID.nodes[::8], indexing="ij")
        assert np.allclose(hom(xx, ee), pw(xx, ee), rtol=1e-12, atol=0)
        assert np.allclose(sep(xx, ee), pw(xx, ee), rtol=1e-9, atol=0)
        assert tuple(estimate_ell_bars(hom)) == (0.0, 0.0)
        assert tuple(estimate_ell_bars(sep)) == (0.0, 0.0)

    def test_growing_count_is_not_taken_at_zero(self):
        # fragment count grows like log(eta): the ell = 0 proxy never settles
        def ev(xi, eta):
            nu = -1.0 + 1.0 / np.log(np.e + eta)
            return (nu + 2.0) / eta * (xi / eta) ** nu

        bars = estimate_ell_bars(FragKernel("custom", ev))
        assert bars.ell0_bar == 0.25 and bars.stable0

    def test_indeterminate_when_nothing_settles(self):
        # a constant kernel has fragment count 2 eta: no grid ell below the top tames it
        flat = FragKernel("custom", lambda xi, eta: np.full_like(xi, 2.0))
        bars = estimate_ell_bars(flat, ell_grid=[0.0, 0.25, 0.5])
        assert bars.ell0_bar is None and not bars.stable0

    def test_ascending_grid_required(self):
        with pytest.raises(ValueError):
            estimate_ell_bars(power_kernel(0.0), ell_grid=[1.0, 0.5])


class TestKappaDelta:
    def test_constants(self):
        r = RateModel.constant(1.0, 1.0)
        for d in (0.0, 0.3, 0.9):
            assert kappa_delta(r, d, GRID) == 1.0

    def test_power_rates_scan(self):
        # exhaustive node scan oracle: min over nodes of (1+xi)^(-0.2) (1+xi)^(0.25)
        r = RateModel.power(0.2, 0.5)
        assert kappa_delta(r, 0.5, GRID) == pytest.approx(1.0004976403245405, rel=1e-14)

    def test_decays_above_critical_delta(self):
        r = RateModel.power(0.4, 0.2)
        d = 0.9
        assert d > max_delta(0.4, 0.2, 1)
        vals = [kappa_delta(r, d, SizeGrid(0.01, top, 64)) for top in (1e2, 1e4, 1e6)]
        assert vals[0] > vals[1] > vals[2]

    def test_delta_range(self):
        with pytest.raises(ValueError):
            kappa_delta(RateModel.constant(1.0, 1.0), 1.0, GRID)


class TestMaxDelta:
    def test_symmetric(self):
        assert max_delta(0.3, 0.3, 2) == pytest.approx(0.5, abs=1e-15)

    def test_worked_value(self):
        assert max_delta(0.2, 0.5, 1) == pytest.approx(0.5 / 0.9, abs=1e-12)

    def test_small_theta_alpha_limit(self):
        assert 1.0 - 1e-6 < max_delta(1e-9, 0.5, 1) < 1.0


class TestCoagKernel:
    def test_rho_range(self):
        with pytest.raises(ValueError):
            constant_coag(1.0, rho=1.5)
        with pytest.raises(ValueError):
            constant_coag(1.0, rho=0.0)

    def test_symmetric_matrix(self):
        km = sum_power_coag(1.0, 0.25).matrix(GRID)
        assert np.array_equal(km, km.T)

    def test_domination_ratio(self):
        r = RateModel.constant(1.0, 1.0)
        assert domination_ratio(constant_coag(3.0), r, GRID) == pytest.approx(1.5)


def _worked(theta_alpha=0.2, theta_beta=0.5):
    rates = RateModel.power(theta_alpha, theta_beta, dim=1)
    frag = power_kernel(0.0)
    coag = sum_power_coag(1.0, 0.25, c_kappa=1.0, rho=0.5)
    return check_hypotheses(rates, frag, coag, 4, 2.0, 0.5, moment_report(frag), size=SizeGrid(0.01, 100.0, 96))


class TestCertificate:
    def test_worked_pass(self):
        rep = _worked()
        assert rep.passed, rep.text()
        assert rep.clause("growth-diffusion").values["bound"] == pytest.approx(0.25, abs=1e-12)
        assert rep.clause("growth-fragmentation").values["bound"] == pytest.approx(4.0 / 7.0, abs=1e-12)
        assert rep.clause("growth-fragment-count").values["bound"] == pytest.approx(1.0, abs=1e-12)
        assert rep.clause("integrability").values["p_bound"] == pytest.approx(2.0, abs=1e-12)

    def test_theta_alpha_perturbation(self):
        assert _worked(theta_alpha=0.3).failed == ["growth-diffusion"]

    def test_theta_beta_perturbation(self):
        assert _worked(theta_beta=0.6).failed == ["growth-fragmentation"]

    def test_text_echoes_numbers(self):
        text = _worked().text()
        assert "0.25" in text and "0.571429" in text and "certificate: PASS" in text

    def test_bad_delta(self):
        frag = power_kernel(0.0)
        with pytest.raises(ValueError):
            check_hypotheses(RateModel.power(0.2, 0.5), frag, constant_coag(1.0), 4, 2.0, 1.2, moment_report(frag))

    def test_non_conservative_kernel_fails(self):
        frag = binary_table().scaled(1.1)
        rep = check_hypotheses(RateModel.power(0.2, 0.5), frag, sum_power_coag(1.0, 0.25), 4, 2.0, 0.5,
                               moment_report(frag))
        assert "kernel-conservative" in rep.failed

    def test_undominated_coagulation_fails(self):
        frag = power_kernel(0.0)
        rep = check_hypotheses(RateModel.power(0.2, 0.5), frag, sum_power_coag(1.0, 0.25, c_kappa=0.5), 4, 2.0,
                               0.5, moment_report(frag))
        assert "coag-dominated" in rep.failed

    @given(st.floats(0.01, 0.3), st.floats(0.0, 1.0))
    def test_decreasing_theta_alpha_keeps_pass(self, ta, frac):
        frag = power_kernel(0.0)
        report = moment_report(frag)
        coag = sum_power_coag(1.0, 0.25, c_kappa=1.0)
        size = SizeGrid(0.01, 100.0, 32)
        names = ("growth-order", "growth-diffusion")

        def status(theta):
            rep = check_hypotheses(RateModel.power(theta, 0.5), frag, coag, 4, 2.0, 0.5, report, size=size)
            return [rep.clause(n).passed for n in names]

        smaller = ta * (0.05 + 0.95 * frac)
        before, after = status(ta), status(smaller)
        for b, a in zip(before, after):
            assert not (b and not a)


class TestKernelTables:
    def test_round_trip(self, tmp_path):
        k = binary_table()
        path = tmp_path / "k.txt"
        path.write_text(dump_kernel_table(k))
        k2 = load_kernel_table(path)
        xx, ee = np.meshgrid(GRID.nodes[::10], GRID.nodes[::10], indexing="ij")
        assert np.array_equal(k(xx, ee), k2(xx, ee))

    def test_header_required(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0.5 2\n1.0 2\n")
        with pytest.raises(ValueError, match="fragkin-kernel v1"):
            load_kernel_table(path)

    def test_matrix_layout(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# fragkin-kernel v1\n# layout: matrix\n# nodes: 1 2 4\n1 1 0.5\n1 0.5\n0.25\n")
        k = load_kernel_table(path)
        assert k(np.array([1.0]), np.array([2.0]))[0] == pytest.approx(1.0)
        assert k(np.array([2.0]), np.array([1.0]))[0] == 0.0

    def test_zero_kernel(self):
        k = zero_kernel()
        assert k.is_zero and np.all(k(GRID.nodes, GRID.nodes) == 0)

    def test_default_eta_list(self):
        assert list(DEFAULT_ETAS) == [10.0, 30.0, 100.0, 300.0, 1000.0]
        assert math.isfinite(moment_report(power_kernel(0.0)).sigma_inf_estimate)
