from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fragkin.coagulation import build_coag_operator, fixed_pivot_split
from fragkin.grids import SizeGrid
from fragkin.kernels import CoagKernel, constant_coag, sum_power_coag, tabulated_coag


@pytest.fixture(scope="module")
def grid():
    return SizeGrid(0.01, 100.0, 48)


def lognormal(size, centre=1.0, width=0.8):
    return np.exp(-0.5 * (np.log(size.nodes / centre) / width) ** 2)


class TestPivot:
    def test_exact_node(self):
        nodes = np.array([1.0, 2.0, 4.0, 8.0])
        a, b, na, nb = fixed_pivot_split(4.0, nodes)
        assert nodes[a] == 4.0 and na == 1.0 and nb == 0.0

    def test_doubling_grid_diagonal_single_target(self):
        size = SizeGrid(1.0, 2.0 ** 9, 10)
        op = build_coag_operator(constant_coag(1.0), size)
        table = op.split_table()
        for i in range(8):
            a, _, na, nb = table[(i, i)]
            assert a == i + 1 and na == 1.0 and nb == 0.0
        # a merged size equal to xi_max is routed to the overflow ledger
        assert table[(8, 8)][0] == -1 and table[(9, 9)][0] == -1

    @pytest.mark.parametrize("v", [1.3, 2.5, 5.999, 7.0001])
    def test_generic_split(self, v):
        nodes = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        a, b, na, nb = fixed_pivot_split(v, nodes)
        assert b == a + 1 and nodes[a] < v < nodes[b]
        assert na + nb == pytest.approx(1.0, abs=1e-13)
        assert na * nodes[a] + nb * nodes[b] == pytest.approx(v, rel=1e-13)
        assert 0 < na < 1

    def test_overflow(self):
        nodes = np.array([1.0, 2.0, 4.0])
        assert fixed_pivot_split(4.0, nodes)[0] == -1
        assert fixed_pivot_split(5.0, nodes)[0] == -1

    def test_below_grid(self):
        with pytest.raises(ValueError):
            fixed_pivot_split(0.5, np.array([1.0, 2.0]))

    def test_table_symmetric(self, grid):
        op = build_coag_operator(sum_power_coag(1.0, 0.25), grid)
        table = op.split_table()
        for (i, j), entry in table.items():
            assert table[(j, i)] == entry


class TestBuild:
    def test_asymmetric_kernel(self, grid):
        kern = CoagKernel("skew", lambda a, b: 1.0 + a + 0.5 * b, c_kappa=10.0, rho=0.5)
        with pytest.raises(ValueError, match="asymmetric"):
            build_coag_operator(kern, grid)

    def test_negative_kernel(self, grid):
        with pytest.raises(ValueError):
            build_coag_operator(CoagKernel("neg", lambda a, b: -np.ones(np.broadcast(a, b).shape), c_kappa=1.0, rho=0.5), grid)

    def test_tabulated_matches_closed_form(self, grid):
        k = sum_power_coag(1.0, 0.5)
        tab = tabulated_coag(grid.nodes, k.matrix(grid), c_kappa=1.0, rho=0.5)
        assert np.allclose(build_coag_operator(tab, grid).kappa, build_coag_operator(k, grid).kappa, rtol=1e-14)


class TestApply:
    def test_zero_argument(self, grid):
        op = build_coag_operator(constant_coag(1.0), grid)
        u = lognormal(grid)
        z = np.zeros_like(u)
        assert np.all(op.apply(u, z) == 0) and np.all(op.apply(z, u) == 0)

    def test_constant_kernel_number_rate(self, grid):
        kappa0 = 0.7
        op = build_coag_operator(constant_coag(kappa0), grid)
        u = lognormal(grid, centre=10.0, width=1.5)  # wide enough to overflow
        w = grid.weights
        rate, over_m, over_n = op.apply_with_overflow(u)
        N = w @ u
        assert over_n > 0
        assert w @ rate + over_n == pytest.approx(-0.5 * kappa0 * N ** 2, rel=1e-10)

    def test_constant_kernel_mass(self, grid):
        op = build_coag_operator(constant_coag(0.7), grid)
        u = lognormal(grid, centre=10.0, width=1.5)
        xi, w = grid.nodes, grid.weights
        rate, over_m, _ = op.apply_with_overflow(u)
        scale = 0.7 * (w @ u) * ((xi * w) @ u)
        assert abs((xi * w) @ rate + over_m) <= 1e-12 * scale

    def test_shape_mismatch(self, grid):
        op = build_coag_operator(constant_coag(1.0), grid)
        with pytest.raises(ValueError, match="shape mismatch"):
            op.apply(np.ones(grid.count), np.ones(grid.count - 1))

    def test_double_sum_oracle(self, grid):
        # direct double sum over ordered pairs with the pivot split, no vectorised
        # tables: each ordered pair removes one particle from each partner's
        # node and creates half a merged particle
        kern = sum_power_coag(1.0, 0.5)
        op = build_coag_operator(kern, grid)
        xi, w = grid.nodes, grid.weights
        u = lognormal(grid)
        K = kern.matrix(grid)
        ref = np.zeros(grid.count)
        for i in range(grid.count):
            for j in range(grid.count):
                rate = K[i, j] * u[i] * u[j] * w[i] * w[j]
                ref[i] -= rate / w[i]
                a, b, na, nb = fixed_pivot_split(xi[i] + xi[j], xi)
                if a >= 0:
                    ref[a] += 0.5 * rate * na / w[a]
                    if nb:
                        ref[b] += 0.5 * rate * nb / w[b]
        assert np.allclose(op.apply(u), ref, rtol=1e-12, atol=1e-14 * np.abs(ref).max())


class TestProperties:
    size = SizeGrid(0.01, 100.0, 32)
    op = build_coag_operator(sum_power_coag(1.0, 0.25), size)
    fields = arrays(np.float64, (3, 32), elements=st.floats(0, 100))
    signed = arrays(np.float64, (3, 32), elements=st.floats(-100, 100))

    def _scale(self, *arrs):
        return float(np.prod([np.abs(a).max() + 1e-300 for a in arrs])) * float(self.op.kappa.max())

    @given(signed, signed)
    def test_symmetry(self, u, v):
        a, b = self.op.apply(u, v), self.op.apply(v, u)
        assert np.allclose(a, b, rtol=0, atol=1e-13 * self._scale(u, v))

    @given(signed, signed, signed, st.floats(-2, 2))
    def test_bilinearity(self, u, v, z, c):
        lhs = self.op.apply(u + c * v, z)
        rhs = self.op.apply(u, z) + c * self.op.apply(v, z)
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * self._scale(np.abs(u) + np.abs(v), z))

    @given(fields)
    def test_mass_balance(self, u):
        xi, w = self.size.nodes, self.size.weights
        rate, over_m, _ = self.op.apply_with_overflow(u)
        scale = (u @ w) * (u @ (xi * w)) * self.op.kappa.max() + 1e-300
        assert np.all(np.abs(rate @ (xi * w) + over_m) <= 1e-12 * scale)

    @given(fields)
    def test_number_decreases(self, u):
        rate = self.op.apply(u)
        scale = (u @ self.size.weights) ** 2 * self.op.kappa.max()
        assert np.all(rate @ self.size.weights <= 1e-13 * scale)

    @given(fields)
    def test_loss_rate_consistent(self, u):
        lr = self.op.loss_rate(u)
        assert np.all(lr >= 0)
        assert lr.shape == u.shape
