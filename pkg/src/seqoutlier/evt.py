"""Generalized Extreme Value primitives and block-maxima fitting.

Parameterisation: ``G(x) = exp(-(1 + gamma (x - mu0) / sigma0) ** (-1 / gamma))``
with the Gumbel limit used whenever ``|gamma| < 1e-6``.  Hosking's PWM
formulas use ``k = -gamma``; that sign flip is confined to :func:`fit_pwm`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GevParams",
    "ScaledGev",
    "InsufficientDataError",
    "DegenerateSampleError",
    "FitFailureError",
    "gev_cdf",
    "gev_quantile",
    "block_maxima",
    "fit_pwm",
    "sample_pwms",
    "scale_params",
]

GUMBEL_TOL = 1e-6
EULER_GAMMA = 0.5772156649015329


class InsufficientDataError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


class FitFailureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GevParams:
    gamma: float
    mu0: float
    sigma0: float

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError(f"scale must be positive, got {self.sigma0}")

    def as_tuple(self):
        return (self.gamma, self.mu0, self.sigma0)


@dataclass(frozen=True)
class ScaledGev:
    """GEV parameters valid for maxima over blocks of length ``block_len``."""

    params: GevParams
    block_len: int


def gev_cdf(theta: GevParams, x):
    """Distribution function of the GEV law; vectorised over ``x``."""
    g, mu, sig = theta.gamma, theta.mu0, theta.sigma0
    z = (np.asarray(x, dtype=float) - mu) / sig
    if abs(g) < GUMBEL_TOL:
        out = np.exp(-np.exp(-z))
    else:
        gz = g * z
        base = 1.0 + gz
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.exp(-np.exp(-np.log1p(np.where(base > 0, gz, 0.0)) / g))
        # outside the support: below the lower end (g > 0) or above the upper end (g < 0)
        out = np.where(base > 0, out, 0.0 if g > 0 else 1.0)
    return out if out.ndim else float(out)


def gev_quantile(theta: GevParams, p):
    """Inverse of :func:`gev_cdf` for ``p`` in ``(0, 1)``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    g, mu, sig = theta.gamma, theta.mu0, theta.sigma0
    y = -np.log(p_arr)
    if abs(g) < GUMBEL_TOL:
        out = mu - sig * np.log(y)
    else:
        out = mu + sig * np.expm1(-g * np.log(y)) / g
    return out if out.ndim else float(out)


def block_maxima(residuals, r: int) -> np.ndarray:
    """Maxima of ``|residual|`` over consecutive blocks of length ``r``.

    The incomplete tail block is discarded.
    """
    x = np.abs(np.asarray(residuals, dtype=float))
    if r < 2:
        raise ValueError(f"block length must be at least 2, got {r}")
    m = x.size // r
    if m < 2:
        raise InsufficientDataError(
            f"{x.size} residuals give {m} complete block(s) of length {r}; need 2"
        )
    return x[: m * r].reshape(m, r).max(axis=1)


def sample_pwms(maxima) -> tuple[float, float, float]:
    """Sample probability-weighted moments ``b0, b1, b2``.

    Uses the plotting positions ``(i - 0.35) / m`` on the ascending order
    statistics.
    """
    x = np.sort(np.asarray(maxima, dtype=float))
    m = x.size
    p = (np.arange(1, m + 1) - 0.35) / m
    return float(x.mean()), float((p * x).mean()), float((p * p * x).mean())


def fit_pwm(maxima) -> GevParams:
    """Fit a GEV law to block maxima by probability-weighted moments.

    Hosking, Wallis & Wood (1985) closed form::

        c     = (2 b1 - b0) / (3 b2 - b0) - log 2 / log 3
        k     = 7.8590 c + 2.9554 c^2
        scale = (2 b1 - b0) k / (Gamma(1 + k) (1 - 2^-k))
        loc   = b0 + scale (Gamma(1 + k) - 1) / k

    and ``gamma = -k``.
    """
    x = np.asarray(maxima, dtype=float)
    if x.size < 5:
        raise InsufficientDataError(f"need at least 5 maxima, got {x.size}")
    if np.all(x == x[0]):
        raise DegenerateSampleError("all block maxima are equal")
    b0, b1, b2 = sample_pwms(x)
    l2 = 2.0 * b1 - b0
    denom = 3.0 * b2 - b0
    if denom == 0.0:
        raise FitFailureError("3*b2 - b0 vanished")
    c = l2 / denom - math.log(2.0) / math.log(3.0)
    k = 7.8590 * c + 2.9554 * c * c
    if abs(k) < GUMBEL_TOL:
        sigma = l2 / math.log(2.0)
        mu = b0 - EULER_GAMMA * sigma
    else:
        try:
            gk = math.gamma(1.0 + k)
        except (ValueError, OverflowError) as exc:
            raise FitFailureError(f"Gamma(1 + k) undefined for k = {k:.4g}") from exc
        sigma = l2 * k / (gk * -math.expm1(-k * math.log(2.0)))
        mu = b0 + sigma * (gk - 1.0) / k
    if not (sigma > 0 and math.isfinite(sigma) and math.isfinite(mu)):
        raise FitFailureError(f"PWM fit gave scale {sigma!r}")
    return GevParams(gamma=-k, mu0=mu, sigma0=sigma)


def scale_params(theta_r: GevParams, r: float, n: float) -> ScaledGev:
    """Move GEV parameters from block length ``r`` to block length ``n``.

    With ``s = n / r``: ``sigma_n = sigma_r s^gamma`` and
    ``mu_n = mu_r + sigma_r (s^gamma - 1) / gamma`` (``sigma_r log s`` in
    the Gumbel limit).  The shape is unchanged.
    """
    if r < 1 or n < 1:
        raise ValueError("block lengths must be at least 1")
    g, mu, sig = theta_r.as_tuple()
    log_s = math.log(n / r)
    if abs(g) < GUMBEL_TOL:
        mu_n, sig_n = mu + sig * log_s, sig
    else:
        mu_n = mu + sig * math.expm1(g * log_s) / g
        sig_n = sig * math.exp(g * log_s)
    return ScaledGev(GevParams(g, mu_n, sig_n), block_len=int(round(n)))
