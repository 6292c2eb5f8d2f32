import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gptree.kernels import (
    KernelKind,
    KernelParams,
    cross_kernel,
    gram_with_log_grads,
    kernel_eval,
    kernel_eval_1d,
    kernel_matrix,
    kernel_param_grad,
)

ALL_KINDS = list(KernelKind)


# closed forms written out independently of the implementation
def reference_1d(kind, r, l):
    if kind is KernelKind.GAUSSIAN:
        return math.exp(-0.5 * (r / l) ** 2)
    if kind is KernelKind.MATERN32:
        a = math.sqrt(3) * r / l
        return (1 + a) * math.exp(-a)
    a = math.sqrt(5) * r / l
    return (1 + a + a * a / 3) * math.exp(-a)


def reference_kernel(kind, x, x2, sigma2, ls):
    return sigma2 * math.prod(reference_1d(kind, abs(a - b), l) for a, b, l in zip(x, x2, ls))


def mp_kernel(kind, x, x2, log_theta):
    """Kernel value at log-parameters, in 30-digit arithmetic."""
    with mp.workdps(30):
        s2 = mp.e ** mp.mpf(log_theta[0])
        out = s2
        for a, b, t in zip(x, x2, log_theta[1:]):
            r = abs(mp.mpf(a) - mp.mpf(b)) / mp.e ** mp.mpf(t)
            if kind is KernelKind.GAUSSIAN:
                out *= mp.e ** (-r * r / 2)
            elif kind is KernelKind.MATERN32:
                u = mp.sqrt(3) * r
                out *= (1 + u) * mp.e ** (-u)
            else:
                u = mp.sqrt(5) * r
                out *= (1 + u + u * u / 3) * mp.e ** (-u)
        return out


def fd_log_grad(kind, x, x2, params, h=1e-6):
    """Central differences in log-parameter space, step ``h``."""
    theta = [mp.mpf(float(t)) for t in params.to_log()]
    out = np.empty(len(theta))
    with mp.workdps(30):
        for i in range(len(theta)):
            tp, tm = list(theta), list(theta)
            tp[i] += h
            tm[i] -= h
            out[i] = float((mp_kernel(kind, x, x2, tp) - mp_kernel(kind, x, x2, tm)) / (2 * h))
    return out


class TestKernelKind:
    def test_config_strings(self):
        assert [k.value for k in KernelKind] == ["gauss", "matern3_2", "matern5_2"]

    def test_parse_accepts_values_and_members(self):
        assert KernelKind.parse("matern5_2") is KernelKind.MATERN52
        assert KernelKind.parse(KernelKind.GAUSSIAN) is KernelKind.GAUSSIAN

    def test_parse_rejects_other_families(self):
        with pytest.raises(ValueError, match="allowed"):
            KernelKind.parse("rbf")


class TestKernelParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            KernelParams(0.0, [1.0])
        with pytest.raises(ValueError):
            KernelParams(1.0, [1.0, -0.1])

    def test_log_round_trip(self):
        p = KernelParams(2.5, [0.3, 4.0])
        q = KernelParams.from_log(p.to_log())
        np.testing.assert_allclose(q.lengthscales, p.lengthscales, rtol=1e-15)
        assert q.signal_variance == pytest.approx(2.5, rel=1e-15)


class TestKernelEval1D:
    def test_zero_distance(self):
        assert kernel_eval_1d(KernelKind.GAUSSIAN, 0.7, 0.7, 0.3) == 1.0

    def test_matern32_unit(self):
        # (1 + sqrt 3) exp(-sqrt 3), 20 digits from an arbitrary-precision evaluation
        assert kernel_eval_1d("matern3_2", 0.0, 1.0, 1.0) == pytest.approx(0.4833577245965076506, rel=1e-14)

    def test_gaussian_unit(self):
        assert kernel_eval_1d("gauss", 0.0, 1.0, 1.0) == pytest.approx(0.6065306597126334236, rel=1e-14)

    @pytest.mark.parametrize("l", [0.0, -1.0])
    def test_nonpositive_lengthscale(self, l):
        with pytest.raises(ValueError):
            kernel_eval_1d("gauss", 0.0, 1.0, l)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_monotone_decay_on_grid(self, kind):
        r = np.linspace(0, 5, 400)
        k = np.array([kernel_eval_1d(kind, 0.0, v, 0.7) for v in r])
        assert np.all(np.diff(k) < 0)
        assert np.all((k > 0) & (k <= 1))

    @given(kind=st.sampled_from(ALL_KINDS),
           x=st.floats(-10, 10), x2=st.floats(-10, 10), l=st.floats(1e-2, 10))
    def test_symmetric_and_matches_closed_form(self, kind, x, x2, l):
        k = kernel_eval_1d(kind, x, x2, l)
        assert k == kernel_eval_1d(kind, x2, x, l)
        assert k == pytest.approx(reference_1d(kind, abs(x - x2), l), rel=1e-12, abs=1e-300)


class TestKernelEval:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_equal_points_give_signal_variance(self, kind):
        assert kernel_eval(kind, [0.2, -1.0], [0.2, -1.0], KernelParams(2.5, [0.4, 3.0])) == 2.5

    def test_gaussian_product(self):
        k = kernel_eval("gauss", [0, 0], [1, 1], KernelParams(1.0, [1.0, 1.0]))
        assert k == pytest.approx(0.3678794411714423216, rel=1e-14)

    def test_matern52_zero_distance(self):
        assert kernel_eval("matern5_2", [0.0], [0.0], KernelParams(1.0, [0.1])) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval("gauss", [0.0, 1.0], [0.0], KernelParams(1.0, [1.0, 1.0]))
        with pytest.raises(ValueError):
            kernel_eval("gauss", [0.0, 1.0], [0.0, 1.0], KernelParams(1.0, [1.0]))

    @settings(max_examples=200)
    @given(kind=st.sampled_from(ALL_KINDS),
           data=st.data(),
           d=st.integers(1, 4))
    def test_product_form_and_bounds(self, kind, data, d):
        coords = st.lists(st.floats(-3, 3), min_size=d, max_size=d)
        x, x2 = data.draw(coords), data.draw(coords)
        ls = data.draw(st.lists(st.floats(0.05, 5), min_size=d, max_size=d))
        s2 = data.draw(st.floats(0.01, 100))
        p = KernelParams(s2, ls)
        k = kernel_eval(kind, x, x2, p)
        assert k == kernel_eval(kind, x2, x, p)
        assert 0 <= k <= s2
        assert k == pytest.approx(reference_kernel(kind, x, x2, s2, ls), rel=1e-12, abs=1e-300)


class TestKernelMatrix:
    def test_single_point(self):
        K = kernel_matrix("gauss", [[0.3]], KernelParams(1.0, [1.0]), [0.04])
        np.testing.assert_allclose(K, [[1.04]], rtol=1e-15)

    def test_duplicate_rows(self):
        K = kernel_matrix("matern3_2", [[0.5, 0.5], [0.5, 0.5]], KernelParams(1.0, [1.0, 2.0]), [0, 0])
        np.testing.assert_array_equal(K, np.ones((2, 2)))

    def test_noise_length_mismatch(self):
        with pytest.raises(ValueError):
            kernel_matrix("gauss", np.zeros((3, 1)), KernelParams(1.0, [1.0]), [0.0, 0.0])

    def test_gaussian_n6_psd(self):
        rng = np.random.default_rng(3)
        X = rng.random((6, 2))
        K = kernel_matrix("gauss", X, KernelParams(1.3, [0.4, 0.9]), np.full(6, 1e-6))
        assert np.linalg.eigvalsh(K).min() >= -1e-10 * np.trace(K)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_psd_zero_noise_random_sets(self, kind):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n, d = rng.integers(2, 30), rng.integers(1, 5)
            X = rng.random((n, d))
            p = KernelParams(rng.uniform(0.1, 5), rng.uniform(0.05, 2, d))
            K = kernel_matrix(kind, X, p, np.zeros(n))
            np.testing.assert_array_equal(K, K.T)
            np.testing.assert_allclose(np.diag(K), p.signal_variance)
            assert np.linalg.eigvalsh(K).min() >= -1e-10 * np.trace(K)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_matches_pointwise_evaluation(self, kind):
        rng = np.random.default_rng(5)
        X = rng.random((7, 3))
        noise = rng.random(7) * 0.1
        p = KernelParams(0.8, [0.2, 0.5, 1.5])
        K = kernel_matrix(kind, X, p, noise)
        ref = np.array([[kernel_eval(kind, a, b, p) for b in X] for a in X]) + np.diag(noise)
        np.testing.assert_allclose(K, ref, rtol=1e-13)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_cross_kernel_matches_gram(self, kind):
        rng = np.random.default_rng(6)
        X = rng.random((9, 2))
        p = KernelParams(1.7, [0.3, 0.8])
        K, _ = gram_with_log_grads(kind, X, p)
        np.testing.assert_array_equal(cross_kernel(kind, X, X, p), K)


class TestKernelParamGrad:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_distance(self, kind):
        p = KernelParams(1.9, [0.5, 0.7, 2.0])
        g = kernel_param_grad(kind, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3], p)
        np.testing.assert_array_equal(g, [1.9, 0, 0, 0])

    @pytest.mark.parametrize("kind,d,seed", [(KernelKind.GAUSSIAN, 3, 0), (KernelKind.MATERN32, 2, 1)])
    def test_finite_difference_examples(self, kind, d, seed):
        rng = np.random.default_rng(seed)
        x, x2 = rng.random(d), rng.random(d)
        p = KernelParams(rng.uniform(0.5, 2), rng.uniform(0.2, 1.0, d))
        g = kernel_param_grad(kind, x, x2, p)
        np.testing.assert_allclose(g, fd_log_grad(kind, x, x2, p), rtol=1e-5)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_gram_gradients_match_pointwise(self, kind):
        rng = np.random.default_rng(8)
        X = rng.random((5, 2))
        p = KernelParams(1.2, [0.3, 0.6])
        _, dK = gram_with_log_grads(kind, X, p)
        for i in range(5):
            for j in range(5):
                np.testing.assert_allclose(dK[:, i, j], kernel_param_grad(kind, X[i], X[j], p),
                                           rtol=1e-12, atol=1e-15)
