import math

import mpmath
import numpy as np
import pytest
import scipy.special

from varmt import vmf

mpmath.mp.dps = 50


def exact_log_bessel(nu, x):
    return float(mpmath.log(mpmath.besseli(nu, x)))


class TestLogBesselI:
    def test_order_zero_reference_value(self):
        # I_0(1) = 1.2660658777520...
        assert vmf.log_bessel_i(0.0, 1.0) == pytest.approx(
            math.log(1.2660658777520084), abs=1e-12)

    def test_half_integer_closed_form(self):
        # I_{1/2}(x) = sqrt(2/(pi x)) sinh x
        for x in (0.5, 2.0, 17.0, 443.0):
            closed = 0.5 * math.log(2.0 / (math.pi * x)) + x + math.log(
                (1.0 - math.exp(-2.0 * x)) / 2.0)
            assert vmf.log_bessel_i(0.5, x) == pytest.approx(closed, abs=1e-10)

    @pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 7.0, 24.5, 149.0, 500.0])
    def test_against_high_precision_oracle(self, nu):
        for x in (1e-3, 0.1, 1.0, 5.0, 19.0, 21.0, 100.0, 999.0, 1e4):
            got = vmf.log_bessel_i(nu, x)
            want = exact_log_bessel(nu, x)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)

    def test_against_scipy(self):
        for nu in (0.0, 3.0, 30.0):
            for x in (0.3, 3.0, 30.0, 300.0):
                want = math.log(scipy.special.ive(nu, x)) + x
                assert vmf.log_bessel_i(nu, x) == pytest.approx(want, rel=1e-10)

    def test_monotone_in_argument(self):
        xs = np.linspace(0.1, 200.0, 300)
        values = vmf.log_bessel_i(3.0, xs)
        assert np.all(np.diff(values) > 0)

    def test_branch_continuity_at_switchover(self):
        for nu in (0.0, 0.5, 1.0, 7.0, 24.0, 149.0, 500.0):
            boundary = max(vmf.SERIES_LIMIT, nu)
            series = vmf._log_i_series(nu, np.array([boundary]))[0]
            asym = vmf._log_i_asymptotic(nu, np.array([boundary]))[0]
            assert abs(series - asym) < 1e-6

    def test_vectorized_matches_scalar(self):
        xs = np.array([0.5, 5.0, 50.0, 500.0])
        batch = vmf.log_bessel_i(2.0, xs)
        singles = [vmf.log_bessel_i(2.0, float(x)) for x in xs]
        assert np.allclose(batch, singles, rtol=0, atol=0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            vmf.log_bessel_i(1.0, 0.0)
        with pytest.raises(ValueError):
            vmf.log_bessel_i(1.0, -3.0)
        with pytest.raises(ValueError):
            vmf.log_bessel_i(-1.0, 3.0)


class TestNormalizer:
    def test_dim3_closed_form(self):
        # C_3(k) = k / (4 pi sinh k)
        for kappa in (0.1, 1.0, 10.0, 100.0):
            closed = (math.log(kappa) - math.log(4.0 * math.pi)
                      - (kappa + math.log((1.0 - math.exp(-2.0 * kappa)) / 2.0)))
            assert float(vmf.log_vmf_normalizer(3, kappa)) == pytest.approx(
                closed, abs=1e-8)

    def test_ratio_is_normalizer_derivative(self):
        dim, kappa, h = 16, 3.0, 1e-6
        derivative = (float(vmf.log_vmf_normalizer(dim, kappa + h))
                      - float(vmf.log_vmf_normalizer(dim, kappa - h))) / (2 * h)
        ratio = float(vmf.bessel_ratio(dim / 2 - 1, kappa))
        assert derivative == pytest.approx(-ratio, rel=1e-6)


def random_pair(rng, dim):
    prediction = rng.normal(size=dim) * rng.uniform(0.3, 3.0)
    target = rng.normal(size=dim)
    return prediction, target / np.linalg.norm(target)


def finite_difference_grad(fn, prediction, h=1e-5):
    grad = np.empty_like(prediction)
    for i in range(len(prediction)):
        up, down = prediction.copy(), prediction.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2 * h)
    return grad


class TestNllVmf:
    def test_only_dot_term_depends_on_target(self):
        prediction = np.array([1.5, -0.4, 0.7])
        direction = prediction / np.linalg.norm(prediction)
        aligned = vmf.nll_vmf(prediction, direction).loss
        opposed = vmf.nll_vmf(prediction, -direction).loss
        assert aligned - opposed == pytest.approx(-2.0 * np.linalg.norm(prediction),
                                                  abs=1e-10)

    def test_dim3_closed_form_value(self):
        prediction = np.array([2.0, 0.0, 0.0])
        target = np.array([1.0, 0.0, 0.0])
        log_c = math.log(2.0 / (4.0 * math.pi * math.sinh(2.0)))
        assert vmf.nll_vmf(prediction, target).loss == pytest.approx(
            -log_c - 2.0, abs=1e-10)

    def test_loss_decreasing_in_cosine(self):
        rng = np.random.default_rng(0)
        prediction = rng.normal(size=8)
        base = prediction / np.linalg.norm(prediction)
        other = rng.normal(size=8)
        other -= other @ base * base
        other /= np.linalg.norm(other)
        losses = []
        for angle in np.linspace(0.0, math.pi, 9):
            target = math.cos(angle) * base + math.sin(angle) * other
            losses.append(vmf.nll_vmf(prediction, target).loss)
        assert all(a < b for a, b in zip(losses, losses[1:]))

    @pytest.mark.parametrize("dim", [3, 50, 300])
    def test_gradient_against_finite_differences(self, dim):
        rng = np.random.default_rng(dim)
        for _ in range(10):
            prediction, target = random_pair(rng, dim)
            analytic = vmf.nll_vmf(prediction, target).grad_wrt_prediction
            numeric = finite_difference_grad(
                lambda p: vmf.nll_vmf(p, target).loss, prediction)
            rel = np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric))
            assert rel < 1e-4

    def test_tiny_norm_rejected(self):
        with pytest.raises(ValueError):
            vmf.nll_vmf(np.zeros(4) + 1e-10, np.array([1.0, 0, 0, 0]))

    def test_non_unit_target_rejected(self):
        with pytest.raises(ValueError):
            vmf.nll_vmf(np.ones(4), np.ones(4))


class TestRegularized:
    def test_lambda_zero_equals_plain(self):
        rng = np.random.default_rng(1)
        prediction, target = random_pair(rng, 12)
        plain = vmf.nll_vmf(prediction, target)
        reg = vmf.nll_vmf_regularized(prediction, target, 0.0)
        assert reg.loss == plain.loss
        assert np.array_equal(reg.grad_wrt_prediction, plain.grad_wrt_prediction)

    def test_additive_norm_penalty(self):
        prediction = np.array([2.0, 0.0, 0.0])
        target = np.array([1.0, 0.0, 0.0])
        plain = vmf.nll_vmf(prediction, target).loss
        reg = vmf.nll_vmf_regularized(prediction, target, 0.02).loss
        assert reg == pytest.approx(plain + 0.04, abs=1e-12)

    @pytest.mark.parametrize("lambda1", [0.01, 0.1])
    def test_gradient_with_regularizer(self, lambda1):
        rng = np.random.default_rng(7)
        for dim in (3, 50):
            prediction, target = random_pair(rng, dim)
            analytic = vmf.nll_vmf_regularized(prediction, target, lambda1)
            numeric = finite_difference_grad(
                lambda p: vmf.nll_vmf_regularized(p, target, lambda1).loss, prediction)
            rel = np.max(np.abs(analytic.grad_wrt_prediction - numeric)) / np.max(np.abs(numeric))
            assert rel < 1e-4

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            vmf.nll_vmf_regularized(np.ones(3), np.array([1.0, 0, 0]), -0.1)


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    preds = rng.normal(size=(6, 10))
    targets = rng.normal(size=(6, 10))
    targets /= np.linalg.norm(targets, axis=1, keepdims=True)
    losses, grads = vmf.nll_vmf_batch(preds, targets, 0.02)
    for i in range(6):
        single = vmf.nll_vmf_regularized(preds[i], targets[i], 0.02)
        assert losses[i] == pytest.approx(single.loss, abs=1e-12)
        assert np.allclose(grads[i], single.grad_wrt_prediction, atol=1e-12)
