"""One-sided smoothing kernels and their equivalent-kernel transforms.

A kernel here is a weight function supported on ``[-1, 0]`` so that an
estimate at time ``t`` only looks at the past.  Local linear regression with
kernel ``K`` behaves asymptotically like a plain weighted average with the
*equivalent kernel*

    Kbar(x) = (k2 - k1 x) / (k0 k2 - k1^2) * K(x),

and the Jackknife combination ``2 * fit(h / sqrt 2) - fit(h)`` behaves like
a weighted average with

    Kstar(x) = 2 sqrt(2) Kbar(sqrt(2) x) - Kbar(x),

where ``k_l`` is the ``l``-th moment of ``K`` over ``[-1, 0]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "DegenerateMomentsError",
    "Kernel",
    "quartic_kernel",
    "equivalent_kernel",
    "jackknife_kernel",
    "kernel_l2_norms",
]

SQRT2 = np.sqrt(2.0)
_DET_TOL = 1e-12


class DegenerateMomentsError(ValueError):
    """Raised when ``k0 k2 - k1^2`` vanishes and Kbar is undefined."""


@dataclass(frozen=True)
class Kernel:
    """A non-negative weight function on ``[-1, 0]``.

    Attributes
    ----------
    func : callable
        Vectorised weight function.  Must already return 0 outside the support.
    moments : tuple of float
        ``(k0, k1, k2, k3)`` with ``k_l = int_{-1}^0 x^l K(x) dx``.
    lipschitz : float
        A Lipschitz constant of ``func`` on ``(-1, 0)``.
    name : str
    """

    func: Callable[[np.ndarray], np.ndarray]
    moments: tuple[float, float, float, float]
    lipschitz: float
    name: str = "kernel"

    def __call__(self, x):
        return self.func(x)

    def eval(self, x):
        return self.func(x)


def _quartic(x):
    x = np.asarray(x, dtype=float)
    inside = (x >= -1.0) & (x <= 0.0)
    return np.where(inside, 1.875 * (1.0 - x * x) ** 2, 0.0)


def quartic_kernel() -> Kernel:
    """One-sided quartic kernel ``K(x) = 15/8 (1 - x^2)^2`` on ``[-1, 0]``.

    The moments are exact rationals; ``tests/test_kernels.py`` checks them
    against adaptive quadrature.
    """
    return Kernel(
        func=_quartic,
        moments=(1.0, -5.0 / 16.0, 1.0 / 7.0, -5.0 / 64.0),
        # max |K'| = 15/2 * max |x (1 - x^2)| attained at x = -1/sqrt(3)
        lipschitz=5.0 / np.sqrt(3.0),
        name="quartic",
    )


def _denominator(moments):
    k0, k1, k2 = moments[0], moments[1], moments[2]
    det = k0 * k2 - k1 * k1
    if abs(det) < _DET_TOL:
        raise DegenerateMomentsError(f"k0*k2 - k1^2 = {det:.3g} is numerically zero")
    return det


def equivalent_kernel(kernel: Kernel, x, moments=None):
    """First-order equivalent kernel Kbar of a local linear fit.

    ``moments`` overrides ``kernel.moments``; passing the empirical sums
    ``(S0, S1, S2)`` of a concrete window gives the exact finite-sample
    weights of that fit instead of the asymptotic ones.
    """
    m = kernel.moments if moments is None else moments
    det = _denominator(m)
    x = np.asarray(x, dtype=float)
    return (m[2] - m[1] * x) / det * kernel(x)


def jackknife_kernel(kernel: Kernel, x, moments=None, moments_half=None):
    """Effective kernel ``Kstar`` of the Jackknife estimator.

    ``moments`` and ``moments_half`` optionally replace the kernel moments
    used for the ``h`` and ``h / sqrt 2`` fits respectively (see
    :func:`equivalent_kernel`).
    """
    x = np.asarray(x, dtype=float)
    m_half = moments if moments_half is None else moments_half
    return 2.0 * SQRT2 * equivalent_kernel(kernel, SQRT2 * x, m_half) - equivalent_kernel(
        kernel, x, moments
    )


def kernel_l2_norms(kernel: Kernel, scale: float = 1.0) -> tuple[float, float]:
    """L2 norms of ``scale * Kstar`` and of its derivative.

    The derivative is taken by central differences with step ``1e-6``.
    Both integrals split at ``-1/sqrt 2`` where the first Jackknife term
    drops out of its support.
    """
    step = 1e-6

    def kstar(x):
        return scale * float(jackknife_kernel(kernel, x))

    def dkstar(x):
        return (kstar(x + step) - kstar(x - step)) / (2.0 * step)

    brk = [-1.0 / SQRT2]
    opts = dict(points=brk, epsabs=1e-12, epsrel=1e-10, limit=200)
    sq, _ = integrate.quad(lambda x: kstar(x) ** 2, -1.0, 0.0, **opts)
    dsq, _ = integrate.quad(lambda x: dkstar(x) ** 2, -1.0 + step, -step, **opts)
    return float(np.sqrt(sq)), float(np.sqrt(dsq))
