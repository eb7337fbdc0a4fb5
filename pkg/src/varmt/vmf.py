"""Von Mises-Fisher negative log-likelihood with exact gradients.

The predicted vector e_hat is unconstrained; its norm acts as the
concentration kappa and its direction as the mean of a vMF density on the
unit sphere in dim dimensions:

    nll(e_hat; e) = -log C_dim(kappa) - e_hat . e,
    C_dim(kappa)  = kappa^(dim/2 - 1) / ((2 pi)^(dim/2) I_(dim/2-1)(kappa)).

The modified Bessel function is evaluated in log space: a power series for
small arguments and a uniform asymptotic expansion once the argument
dominates the order. Everything here is pure and operates on numpy arrays,
so batches of predictions are handled in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

# Switch to the asymptotic expansion once x >= max(SERIES_LIMIT, nu).
SERIES_LIMIT = 20.0

KAPPA_FLOOR = 1e-8

# Polynomials q_k(y), y = (nu/s)^2 with s = sqrt(nu^2 + x^2), such that the
# k-th correction term of the uniform asymptotic expansion is q_k(y) / s^k.
# Derived from the classical u_k(t) recurrence; coefficients are exact
# rationals, listed highest degree first.
_Q_POLYS = (
    (-5 / 24, 1 / 8),
    (385 / 1152, -77 / 192, 9 / 128),
    (-85085 / 82944, 17017 / 9216, -4563 / 5120, 75 / 1024),
    (37182145 / 7962624, -7436429 / 663552, 144001 / 16384, -96833 / 40960,
     3675 / 32768),
    (-5391411025 / 191102976, 5391411025 / 63700992, -108313205 / 1179648,
     250881631 / 5898240, -67608983 / 9175040, 59535 / 262144),
    (5849680962125 / 27518828544, -1169936192425 / 1528823808,
     4445922195 / 4194304, -33010308331 / 47185920,
     1441372804469 / 6606028800, -388895895 / 14680064, 2401245 / 4194304),
    (-1267709431363375 / 660451885056, 1774793203908725 / 220150628352,
     -36927006432745 / 2717908992, 10559432785187 / 905969664,
     -1602251736839 / 301989888, 1007390378503 / 838860800,
     -25388505925 / 234881024, 57972915 / 33554432),
    (2562040760785380875 / 126806761930752, -512408152157076175 / 5283615080448,
     75358832548684685 / 391378894848, -39803268297948155 / 195689447424,
     3542717254441859 / 28991029248, -276439228010667 / 6710886400,
     667955999804539 / 93952409600, -928090660435 / 1879048192,
     13043905875 / 2147483648),
)


@dataclass
class VmfLossValue:
    loss: float
    grad_wrt_prediction: NDArray[np.float64]


def _log_i_series(nu: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """log I_nu(x) by the ascending power series, summed in log space.

    All terms are positive so there is no cancellation; the cost is the
    number of terms, which peaks near k* = (sqrt(nu^2 + x^2) - nu) / 2.
    """
    x = np.asarray(x, dtype=np.float64)
    xmax = float(np.max(x, initial=0.0))
    k_star = 0.5 * (math.hypot(nu, xmax) - nu)
    nterms = int(k_star + 12.0 * math.sqrt(k_star + 1.0) + 25.0)
    k = np.arange(nterms, dtype=np.float64)
    # log of term k: (nu + 2k) log(x/2) - lgamma(k+1) - lgamma(nu+k+1)
    log_half_x = np.log(0.5 * x)[..., None]
    log_terms = (nu + 2.0 * k) * log_half_x - _lgamma(k + 1.0) - _lgamma(nu + k + 1.0)
    peak = np.max(log_terms, axis=-1, keepdims=True)
    return (peak[..., 0] + np.log(np.sum(np.exp(log_terms - peak), axis=-1)))


_lgamma = np.vectorize(math.lgamma, otypes=[np.float64])


def _log_i_asymptotic(nu: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """log I_nu(x) by the uniform large-parameter expansion.

    Written in terms of s = sqrt(nu^2 + x^2) so it stays valid for small
    orders as long as the argument is large; accuracy is ~1e-12 relative
    for s >= 20.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.hypot(nu, x)
    y = (nu / s) ** 2
    correction = np.ones_like(s)
    s_pow = np.ones_like(s)
    for coeffs in _Q_POLYS:
        s_pow = s_pow * s
        q = np.zeros_like(y)
        for c in coeffs:
            q = q * y + c
        correction = correction + q / s_pow
    return s + nu * np.log(x / (nu + s)) - 0.5 * np.log(2.0 * math.pi * s) + np.log(correction)


def log_bessel_i(nu: float, x):
    """log I_nu(x) for nu >= 0 and x > 0; accepts scalars or arrays."""
    if nu < 0:
        raise ValueError("order nu must be >= 0")
    x_arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x_arr)) or np.any(x_arr <= 0.0):
        raise ValueError("argument x must be positive and finite")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    out = np.empty_like(x_arr)
    boundary = max(SERIES_LIMIT, nu)
    small = x_arr < boundary
    if np.any(small):
        out[small] = _log_i_series(nu, x_arr[small])
    if np.any(~small):
        out[~small] = _log_i_asymptotic(nu, x_arr[~small])
    return float(out[0]) if scalar else out


def log_vmf_normalizer(dim: int, kappa):
    """log C_dim(kappa), the log normalization constant of the density."""
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    nu = 0.5 * dim - 1.0
    kappa_arr = np.asarray(kappa, dtype=np.float64)
    return nu * np.log(kappa_arr) - 0.5 * dim * math.log(2.0 * math.pi) - log_bessel_i(nu, kappa)


def bessel_ratio(nu: float, x):
    """I_(nu+1)(x) / I_nu(x); equals -d/dkappa log C for nu = dim/2 - 1."""
    return np.exp(log_bessel_i(nu + 1.0, x) - log_bessel_i(nu, x))


def _validate_pair(prediction, target):
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    if not (np.all(np.isfinite(prediction)) and np.all(np.isfinite(target))):
        raise ValueError("non-finite prediction or target")
    norms = np.linalg.norm(target, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-4):
        raise ValueError("target vectors must be unit norm")
    kappa = np.linalg.norm(prediction, axis=-1)
    if np.any(kappa < KAPPA_FLOOR):
        raise ValueError(f"prediction norm below {KAPPA_FLOOR}")
    return prediction, target, kappa


def nll_vmf_batch(predictions, targets, lambda1: float = 0.0):
    """Losses and gradients for a batch of (prediction, target) rows.

    Returns (losses, grads) with shapes (n,) and (n, dim). The optional
    lambda1 term penalizes the prediction norm, discouraging runaway
    concentration values.
    """
    if lambda1 < 0:
        raise ValueError("lambda1 must be >= 0")
    predictions, targets, kappa = _validate_pair(predictions, targets)
    dim = predictions.shape[-1]
    nu = 0.5 * dim - 1.0
    losses = -log_vmf_normalizer(dim, kappa) - np.sum(predictions * targets, axis=-1)
    # d(-log C)/dkappa = I_(dim/2)(k) / I_(dim/2-1)(k); chain through
    # dkappa/d(e_hat) = e_hat / kappa.
    ratio = bessel_ratio(nu, kappa)
    unit_pred = predictions / kappa[..., None]
    grads = ratio[..., None] * unit_pred - targets
    if lambda1 > 0.0:
        losses = losses + lambda1 * kappa
        grads = grads + lambda1 * unit_pred
    return losses, grads


def nll_vmf(prediction, target) -> VmfLossValue:
    """Loss and gradient for a single prediction against a unit target."""
    prediction = np.asarray(prediction, dtype=np.float64)
    losses, grads = nll_vmf_batch(prediction[None, :], np.asarray(target, dtype=np.float64)[None, :])
    return VmfLossValue(float(losses[0]), grads[0])


def nll_vmf_regularized(prediction, target, lambda1: float) -> VmfLossValue:
    """nll_vmf plus lambda1 * ||prediction||; lambda1 = 0 reduces exactly."""
    if lambda1 == 0.0:
        return nll_vmf(prediction, target)
    prediction = np.asarray(prediction, dtype=np.float64)
    losses, grads = nll_vmf_batch(
        prediction[None, :], np.asarray(target, dtype=np.float64)[None, :], lambda1
    )
    return VmfLossValue(float(losses[0]), grads[0])
