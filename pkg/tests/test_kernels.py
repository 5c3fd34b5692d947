import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftfield.flowfield import Vec2
from driftfield.kernels import (
    HyperParams,
    KernelKind,
    build_block_matrix,
    eval_kernel,
    eval_scalar_kernel,
    fd_consistency_report,
)

HP = HyperParams(lengthscale=35000.0, current_variance=0.5, gps_noise_std=3.0)


def fd_second_derivatives(hp: HyperParams, d: Vec2, h: float):
    # independent oracle: the matrix kernel is a second derivative of the
    # scalar kernel in lag space, K11 = -g_yy, K22 = -g_xx, K12 = g_xy
    o = Vec2(0.0, 0.0)

    def g(dx, dy):
        return eval_scalar_kernel(hp, Vec2(dx, dy), o)

    k11 = -(g(d.x, d.y + h) - 2 * g(d.x, d.y) + g(d.x, d.y - h)) / h**2
    k22 = -(g(d.x + h, d.y) - 2 * g(d.x, d.y) + g(d.x - h, d.y)) / h**2
    k12 = (g(d.x + h, d.y + h) - g(d.x + h, d.y - h) - g(d.x - h, d.y + h) + g(d.x - h, d.y - h)) / (4 * h**2)
    return np.array([[k11, k12], [k12, k22]])


class TestHyperParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            HyperParams(0.0, 0.5, 3.0)
        with pytest.raises(ValueError):
            HyperParams(35000.0, -1.0, 3.0)
        with pytest.raises(ValueError):
            HyperParams(35000.0, 0.5, -0.1)
        HyperParams(35000.0, 0.5, 0.0)  # zero GPS noise is legal

    def test_streamfunction_variance(self):
        assert HP.streamfunction_variance == pytest.approx(0.5 * 35000.0**2)


class TestScalarKernel:
    def test_zero_lag(self):
        v = eval_scalar_kernel(HP, Vec2(5.0, 5.0), Vec2(5.0, 5.0))
        assert v == pytest.approx(6.125e8)

    def test_isotropic_decay(self):
        near = eval_scalar_kernel(HP, Vec2(0.0, 0.0), Vec2(35000.0, 0.0))
        same_radius = eval_scalar_kernel(HP, Vec2(0.0, 0.0), Vec2(0.0, -35000.0))
        assert near == pytest.approx(6.125e8 * math.exp(-0.5), rel=1e-12)
        assert near == pytest.approx(same_radius, rel=1e-12)


class TestMatrixKernel:
    def test_zero_lag_is_exactly_variance_times_identity(self):
        k = eval_kernel(HP, KernelKind.INCOMPRESSIBLE, Vec2(7.0, -3.0), Vec2(7.0, -3.0))
        assert k[0, 0] == 0.5 and k[1, 1] == 0.5
        assert k[0, 1] == 0.0 and k[1, 0] == 0.0

    def test_matches_fd_of_scalar_kernel(self):
        h = 1e-4 * HP.lengthscale
        lags = [Vec2(0.0, 0.0), Vec2(10500.0, 0.0), Vec2(0.0, -24500.0),
                Vec2(17500.0, 17500.0), Vec2(-42000.0, 14000.0), Vec2(70000.0, -52500.0)]
        for d in lags:
            k = eval_kernel(HP, KernelKind.INCOMPRESSIBLE, d, Vec2(0.0, 0.0))
            k_fd = fd_second_derivatives(HP, d, h)
            np.testing.assert_allclose(k, k_fd, atol=1e-6 * HP.current_variance)

    def test_transpose_symmetry(self):
        p, q = Vec2(1000.0, -2000.0), Vec2(-500.0, 4000.0)
        k_pq = eval_kernel(HP, KernelKind.INCOMPRESSIBLE, p, q)
        k_qp = eval_kernel(HP, KernelKind.INCOMPRESSIBLE, q, p)
        np.testing.assert_allclose(k_pq, k_qp.T, atol=0)

    def test_far_field_decay(self):
        d = 8.0 * HP.lengthscale
        k = eval_kernel(HP, KernelKind.INCOMPRESSIBLE, Vec2(d, 0.0), Vec2(0.0, 0.0))
        assert np.abs(k).max() <= 1e-12 * HP.current_variance

    def test_standard_diagonal(self):
        p, q = Vec2(0.0, 0.0), Vec2(20000.0, -10000.0)
        k = eval_kernel(HP, KernelKind.STANDARD_DIAGONAL, p, q)
        se = 0.5 * math.exp(-(20000.0**2 + 10000.0**2) / (2 * 35000.0**2))
        assert k[0, 0] == pytest.approx(se, rel=1e-12)
        assert k[1, 1] == pytest.approx(se, rel=1e-12)
        assert k[0, 1] == 0.0 and k[1, 0] == 0.0

    @given(
        st.floats(-1e5, 1e5), st.floats(-1e5, 1e5),
        st.floats(-1e5, 1e5), st.floats(-1e5, 1e5),
    )
    @settings(max_examples=50, deadline=None)
    def test_stationarity(self, px, py, qx, qy):
        # kernel depends on the lag only
        shift = Vec2(1234.5, -6789.0)
        k = eval_kernel(HP, KernelKind.INCOMPRESSIBLE, Vec2(px, py), Vec2(qx, qy))
        k_shifted = eval_kernel(
            HP, KernelKind.INCOMPRESSIBLE, Vec2(px, py) + shift, Vec2(qx, qy) + shift
        )
        np.testing.assert_allclose(k, k_shifted, atol=1e-12)


class TestBlockMatrix:
    def test_matches_pointwise_blocks(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-5e4, 5e4, size=(4, 2))
        b = rng.uniform(-5e4, 5e4, size=(3, 2))
        for kind in KernelKind:
            m = build_block_matrix(HP, kind, a, b)
            assert m.shape == (8, 6)
            for i in range(4):
                for j in range(3):
                    block = eval_kernel(HP, kind, Vec2(*a[i]), Vec2(*b[j]))
                    np.testing.assert_allclose(m[2 * i:2 * i + 2, 2 * j:2 * j + 2], block, atol=1e-15)

    def test_gram_is_symmetric_psd(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-8e4, 8e4, size=(12, 2))
        for kind in KernelKind:
            m = build_block_matrix(HP, kind, pts, pts)
            np.testing.assert_allclose(m, m.T, atol=1e-10)
            eigs = np.linalg.eigvalsh(m)
            assert eigs.min() >= -1e-8 * HP.current_variance

    def test_empty_inputs(self):
        m = build_block_matrix(HP, KernelKind.INCOMPRESSIBLE, np.zeros((0, 2)), np.zeros((2, 2)))
        assert m.shape == (0, 4)


class TestFdConsistencyReport:
    def test_passes_for_default_lags(self):
        rep = fd_consistency_report(HP)
        assert rep["passed"]
        assert rep["worst_rel_error"] < 1e-6
        assert len(rep["lags"]) == 6

    def test_step_scales_with_lengthscale(self):
        rep = fd_consistency_report(HyperParams(500.0, 0.25, 1.0))
        assert rep["step_m"] == pytest.approx(0.05)
        assert rep["passed"]
