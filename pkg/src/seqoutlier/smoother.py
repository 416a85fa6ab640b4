"""One-sided local linear smoothing over a trailing window.

Time is rescaled, ``t = i / n``.  The fit at ``t`` with bandwidth ``h`` uses
every retained observation ``j`` with ``-1 <= (j - n t) / (n h) <= 0``, so it
never looks into the future.  The Jackknife estimate combines the fits at
``h`` and ``h / sqrt 2`` to cancel the leading ``O(h^2)`` bias term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import SQRT2, Kernel, jackknife_kernel, quartic_kernel

__all__ = [
    "SingularWindowError",
    "SmootherConfig",
    "WindowBuffer",
    "weighted_sums",
    "local_linear_fit",
    "jackknife_estimate",
    "jackknife_weights",
]

DET_TOL = 1e-12


class SingularWindowError(ArithmeticError):
    """The normal equations of a window are (numerically) singular."""


@dataclass(frozen=True)
class SmootherConfig:
    n: int
    h: float
    kernel: Kernel = field(default_factory=quartic_kernel)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"bandwidth must lie in (0, 1), got {self.h}")
        if self.n * self.h < 4.0 - 1e-9:
            raise ValueError(f"n*h = {self.n * self.h:.3g} < 4; window too short")

    @property
    def span(self) -> int:
        """Number of past indices a window of bandwidth ``h`` can reach."""
        return math.ceil(self.n * self.h)


class WindowBuffer:
    """Trailing window of ``(index, value, usable)`` entries.

    Entries live in preallocated arrays so the current window is always a
    contiguous, index-ascending view.  Anything older than ``newest - span``
    is evicted on push.
    """

    def __init__(self, span: int):
        if span < 1:
            raise ValueError("span must be at least 1")
        self.span = int(span)
        self._cap = 2 * self.span + 16
        self._idx = np.empty(self._cap, dtype=np.int64)
        self._val = np.empty(self._cap, dtype=float)
        self._use = np.empty(self._cap, dtype=bool)
        self._lo = 0
        self._hi = 0

    def __len__(self):
        return self._hi - self._lo

    @classmethod
    def from_arrays(cls, span, indices, values, usable=None):
        buf = cls(span)
        if usable is None:
            usable = np.ones(len(indices), dtype=bool)
        for i, x, u in zip(indices, values, usable):
            buf.push(int(i), float(x), bool(u))
        return buf

    def push(self, index: int, value: float, usable: bool = True) -> None:
        if self._hi > self._lo and index <= self._idx[self._hi - 1]:
            raise ValueError(
                f"indices must increase: {index} after {self._idx[self._hi - 1]}"
            )
        self.evict(index - self.span)
        if self._hi == self._cap:
            k = self._hi - self._lo
            self._idx[:k] = self._idx[self._lo:self._hi]
            self._val[:k] = self._val[self._lo:self._hi]
            self._use[:k] = self._use[self._lo:self._hi]
            self._lo, self._hi = 0, k
        self._idx[self._hi] = index
        self._val[self._hi] = value
        self._use[self._hi] = usable
        self._hi += 1

    def evict(self, oldest: int) -> None:
        """Drop entries with index < ``oldest``."""
        lo, hi = self._lo, self._hi
        while lo < hi and self._idx[lo] < oldest:
            lo += 1
        self._lo = lo

    @property
    def indices(self) -> np.ndarray:
        return self._idx[self._lo:self._hi]

    @property
    def values(self) -> np.ndarray:
        return self._val[self._lo:self._hi]

    @property
    def usable(self) -> np.ndarray:
        return self._use[self._lo:self._hi]

    def usable_entries(self) -> tuple[np.ndarray, np.ndarray]:
        use = self.usable
        if use.all():
            return self.indices, self.values
        return self.indices[use], self.values[use]

    def copy(self) -> "WindowBuffer":
        other = WindowBuffer(self.span)
        k = len(self)
        other._idx[:k] = self.indices
        other._val[:k] = self.values
        other._use[:k] = self.usable
        other._hi = k
        return other


def _centre(t: float, n: int) -> float:
    nt = t * n
    r = round(nt)
    # t = i/n may not round-trip exactly; snap so the right edge is included
    return float(r) if abs(nt - r) < 1e-9 else nt


def _window_sums(idx, val, nt, nh, kernel):
    u = (idx - nt) / nh
    inside = (u >= -1.0) & (u <= 0.0)
    if not inside.all():
        u = u[inside]
        val = val[inside]
    k = kernel(u)
    uk = u * k
    s0 = k.sum() / nh
    s1 = uk.sum() / nh
    s2 = (u * uk).sum() / nh
    r0 = (val * k).sum() / nh
    r1 = (val * uk).sum() / nh
    return s0, s1, s2, r0, r1, u.size


def _solve(sums, h):
    s0, s1, s2, r0, r1, m = sums
    det = s0 * s2 - s1 * s1
    if m < 2 or abs(det) < DET_TOL:
        raise SingularWindowError(
            f"singular window: {m} usable point(s), S0*S2 - S1^2 = {det:.3g}"
        )
    return (s2 * r0 - s1 * r1) / det, (s0 * r1 - s1 * r0) / (h * det)


def weighted_sums(buffer: WindowBuffer, t: float, h: float, cfg: SmootherConfig):
    """Kernel-weighted sums ``(S0, S1, S2, R0, R1)`` at time ``t``.

    Only usable entries contribute.  An empty window returns zeros.
    """
    idx, val = buffer.usable_entries()
    nh = cfg.n * h
    return _window_sums(idx, val, _centre(t, cfg.n), nh, cfg.kernel)[:5]


def local_linear_fit(buffer: WindowBuffer, t: float, h: float, cfg: SmootherConfig):
    """Level and slope ``(b0, b1)`` of the one-sided local linear fit.

    Raises
    ------
    SingularWindowError
        Fewer than two usable points in the window, or a numerically
        singular normal-equation matrix.
    """
    idx, val = buffer.usable_entries()
    sums = _window_sums(idx, val, _centre(t, cfg.n), cfg.n * h, cfg.kernel)
    return _solve(sums, h)


def _jackknife(idx, val, nt, n, h, kernel):
    b_half, _ = _solve(_window_sums(idx, val, nt, n * h / SQRT2, kernel), h / SQRT2)
    b_full, _ = _solve(_window_sums(idx, val, nt, n * h, kernel), h)
    return 2.0 * b_half - b_full


def jackknife_estimate(buffer: WindowBuffer, t: float, cfg: SmootherConfig) -> float:
    """Bias-reduced level estimate ``2 fit(h/sqrt 2) - fit(h)`` at ``t``."""
    idx, val = buffer.usable_entries()
    return _jackknife(idx, val, _centre(t, cfg.n), cfg.n, cfg.h, cfg.kernel)


def jackknife_weights(buffer: WindowBuffer, t: float, cfg: SmootherConfig):
    """Per-observation weights of the Jackknife estimate.

    Returns ``(indices, weights)`` over the usable entries such that
    ``weights @ values`` reproduces :func:`jackknife_estimate`.  The weights
    are ``Kstar(u) / (n h)`` with the kernel moments replaced by the window's
    empirical sums, so they converge to the asymptotic ``Kstar`` as the
    window fills.
    """
    idx, _ = buffer.usable_entries()
    nt = _centre(t, cfg.n)
    nh = cfg.n * cfg.h
    zeros = np.zeros(idx.size)
    full = _window_sums(idx, zeros, nt, nh, cfg.kernel)
    half = _window_sums(idx, zeros, nt, nh / SQRT2, cfg.kernel)
    for sums in (full, half):
        if sums[5] < 2:
            raise SingularWindowError("fewer than two usable points")
    u = (idx - nt) / nh
    w = jackknife_kernel(cfg.kernel, u, moments=full[:3], moments_half=half[:3]) / nh
    return idx, w
