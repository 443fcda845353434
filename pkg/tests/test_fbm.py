import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import beta as beta_fn

from roughflow.errors import DomainError
from roughflow.fbm import (
    CHOLESKY_CAP,
    HurstParam,
    SamplePath,
    TimeGrid,
    calibrate_c,
    covariance,
    covariance_matrix,
    kernel_K,
    kernel_covariance,
    sample_fbm,
    sample_fbm_array,
)


class TestHurstParam:
    def test_rough_regime_flag(self):
        assert HurstParam(0.4).in_rough_regime
        assert not HurstParam(0.6).in_rough_regime
        assert not HurstParam(0.25).in_rough_regime

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
    def test_range_enforced(self, bad):
        with pytest.raises(DomainError):
            HurstParam(bad)


class TestTimeGrid:
    def test_uniform_spacing(self):
        g = TimeGrid(2.0, 5)
        assert np.allclose(g.times, [0, 0.5, 1.0, 1.5, 2.0])
        assert g.mesh == 0.5

    def test_index_of_off_grid(self):
        g = TimeGrid(1.0, 5)
        assert g.index_of(0.75) == 3
        with pytest.raises(DomainError):
            g.index_of(0.3)

    def test_nonuniform_rejected(self):
        with pytest.raises(DomainError):
            TimeGrid(1.0, 4, times=np.array([0.0, 0.1, 0.5, 1.0]))


class TestCovariance:
    def test_diagonal_is_one_at_unit_time(self):
        for h in (0.35, 0.4, 0.45, 0.5, 0.7):
            assert covariance(1.0, 1.0, HurstParam(h)) == pytest.approx(1.0)

    def test_brownian_case_is_min(self):
        assert covariance(1.0, 2.0, HurstParam(0.5)) == pytest.approx(1.0)

    def test_rough_value(self):
        # (1 + 2^{0.8} - 1)/2 = 2^{0.8}/2
        assert covariance(1.0, 2.0, HurstParam(0.4)) == pytest.approx(2**0.8 / 2)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            covariance(-1.0, 1.0, HurstParam(0.4))

    @given(
        s=st.floats(0.0, 3.0),
        t=st.floats(0.0, 3.0),
        c=st.floats(0.1, 2.0),
        h=st.floats(0.05, 0.95),
    )
    @settings(max_examples=200, deadline=None)
    def test_symmetry_and_scaling(self, s, t, c, h):
        hp = HurstParam(h)
        assert covariance(s, t, hp) == pytest.approx(covariance(t, s, hp))
        # The cancellation in (s^{2H} + t^{2H} - |t-s|^{2H})/2 limits the
        # attainable relative accuracy of the identity to ~1e-8.
        assert covariance(c * s, c * t, hp) == pytest.approx(
            c ** (2 * h) * covariance(s, t, hp), rel=1e-7, abs=1e-9
        )

    @pytest.mark.parametrize("h", [0.35, 0.4, 0.45])
    def test_matrix_factorizes_with_tiny_jitter(self, h):
        g = TimeGrid(1.0, 129)
        cov = covariance_matrix(g, HurstParam(h))
        # Succeeds with jitter well below the documented 1e-10 ceiling.
        np.linalg.cholesky(cov + 1e-12 * np.eye(128))


class TestSampling:
    def test_seed_determinism_bitwise(self, rough_hurst):
        g = TimeGrid(1.0, 33)
        a = sample_fbm(rough_hurst, g, d=2, n_paths=3, seed=9)
        b = sample_fbm(rough_hurst, g, d=2, n_paths=3, seed=9)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.values, pb.values)

    def test_paths_vanish_at_origin(self, rough_hurst):
        p = sample_fbm(rough_hurst, TimeGrid(1.0, 17), d=3, n_paths=1, seed=0)[0]
        assert np.all(p.values[0] == 0.0)
        with pytest.raises(DomainError):
            SamplePath(TimeGrid(1.0, 3), np.ones((3, 1)), hurst=rough_hurst)

    def test_grid_cap(self, rough_hurst):
        with pytest.raises(DomainError):
            sample_fbm(rough_hurst, TimeGrid(1.0, CHOLESKY_CAP + 1), 1, 1, 0)

    def test_endpoint_variance_matches_law(self, rough_hurst):
        n = 4000
        vals = sample_fbm_array(rough_hurst, TimeGrid(1.0, 65), 1, n, seed=4)
        v = np.var(vals[:, -1, 0], ddof=1)
        se = v * math.sqrt(2.0 / (n - 1))
        assert abs(v - 1.0) < 3 * se

    def test_components_uncorrelated(self, rough_hurst):
        n = 4000
        vals = sample_fbm_array(rough_hurst, TimeGrid(1.0, 33), 2, n, seed=5)
        x, y = vals[:, -1, 0], vals[:, -1, 1]
        corr = np.mean(x * y)
        se = np.std(x * y, ddof=1) / math.sqrt(n)
        assert abs(corr) < 3 * se

    def test_increment_stationarity(self, rough_hurst):
        # Var(B_{t+h} - B_t) depends only on h: exact in law, checked by MC.
        n = 4000
        vals = sample_fbm_array(rough_hurst, TimeGrid(1.0, 33), 1, n, seed=6)[:, :, 0]
        h_steps = 8  # h = 0.25
        for start in (0, 8, 16):
            inc = vals[:, start + h_steps] - vals[:, start]
            v = np.var(inc, ddof=1)
            target = 0.25 ** (2 * rough_hurst.value)
            se = v * math.sqrt(2.0 / (n - 1))
            assert abs(v - target) < 3 * se

    def test_array_sampler_deterministic(self, rough_hurst):
        g = TimeGrid(1.0, 17)
        a = sample_fbm_array(rough_hurst, g, 2, 5, seed=3)
        b = sample_fbm_array(rough_hurst, g, 2, 5, seed=3)
        assert np.array_equal(a, b)


class TestVolterraKernel:
    def test_zero_outside_domain(self):
        assert kernel_K(1.0, 1.5, 0.4) == 0.0
        assert kernel_K(1.0, 1.0, 0.4) == 0.0
        assert kernel_K(1.0, 0.0, 0.4) == 0.0

    @pytest.mark.parametrize("h", [0.35, 0.4, 0.45])
    def test_calibration_matches_beta_identity(self, h):
        # Independent closed form for the same normalization:
        # c_H^2 = 2H / ((1-2H) B(1-2H, H+1/2)).
        closed = math.sqrt(2 * h / ((1 - 2 * h) * beta_fn(1 - 2 * h, h + 0.5)))
        assert calibrate_c(h) == pytest.approx(closed, rel=1e-6)

    def test_square_integral_recovers_power_law(self):
        # int_0^t K(t,r)^2 dr = t^{2H} under the calibration convention.
        for t in (0.5, 1.0):
            val = kernel_covariance(t, t, 0.4)
            assert val == pytest.approx(t**0.8, rel=1e-3)

    def test_cross_integral_recovers_covariance(self):
        val = kernel_covariance(0.5, 1.0, 0.4)
        assert val == pytest.approx(covariance(0.5, 1.0, HurstParam(0.4)), rel=1e-3)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            kernel_K(1.0, -0.5, 0.4)
