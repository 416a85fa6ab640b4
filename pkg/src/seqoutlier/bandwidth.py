"""Bandwidth selection by blocked cross-validation on the calibration prefix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel, quartic_kernel
from .smoother import SingularWindowError, _jackknife

__all__ = ["CvConfig", "NoValidBandwidthError", "default_grid", "cv_errors", "cv_bandwidth"]


class NoValidBandwidthError(ValueError):
    pass


def default_grid(n: int, size: int = 12, upper: float = 0.5) -> tuple[float, ...]:
    """``size`` log-spaced bandwidths from ``4 / n`` (a 4-point window) to ``upper``."""
    return tuple(float(h) for h in np.geomspace(4.0 / n, upper, size))


@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    grid: tuple[float, ...] | None = None
    min_points_per_window: int = 4
    holdout: str = "block"

    def __post_init__(self):
        if self.folds < 1:
            raise ValueError("folds must be positive")
        if self.holdout not in ("block", "point"):
            raise ValueError(f"holdout must be 'block' or 'point', got {self.holdout!r}")

    def resolve_grid(self, n: int) -> tuple[float, ...]:
        grid = default_grid(n) if self.grid is None else tuple(float(h) for h in self.grid)
        if not grid:
            raise ValueError("bandwidth grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("bandwidth grid must be strictly ascending")
        for h in grid:
            if not 0.0 < h < 1.0:
                raise ValueError(f"bandwidth {h} outside (0, 1)")
            if n * h < self.min_points_per_window - 1e-9:
                raise ValueError(
                    f"bandwidth {h:.4g} gives n*h = {n * h:.3g} "
                    f"< {self.min_points_per_window} points per window"
                )
        return grid


def _folds(n, grid, folds):
    start = math.ceil(n * max(grid)) + 1
    scored = np.arange(start, n + 1)
    if scored.size < folds:
        raise NoValidBandwidthError(
            f"only {scored.size} scorable points for {folds} folds"
        )
    return np.array_split(scored, folds)


def cv_errors(values, n: int, cfg: CvConfig = CvConfig(), kernel: Kernel | None = None):
    """Total squared prediction error for every candidate bandwidth.

    Indices ``ceil(n h_max) + 1 .. n`` are split into ``cfg.folds``
    contiguous blocks.  Each held-out point is predicted by the one-sided
    Jackknife estimate computed with the whole held-out block removed
    (``holdout="block"``) or with only the point itself removed
    (``holdout="point"``, i.e. one-step-ahead prediction error).  A candidate
    whose prediction hits a singular window gets ``inf``.

    Under block holdout a candidate whose window is shorter than a fold has
    nothing left to predict the end of the fold from, so it scores ``inf``.

    Returns
    -------
    dict mapping bandwidth to total error.
    """
    x = np.asarray(values, dtype=float)
    if x.size != n:
        raise ValueError(f"expected {n} calibration values, got {x.size}")
    kernel = kernel or quartic_kernel()
    grid = cfg.resolve_grid(n)
    blocks = _folds(n, grid, cfg.folds)
    idx = np.arange(1, n + 1)
    out = {}
    for h in grid:
        span = math.ceil(n * h)
        total = 0.0
        try:
            for block in blocks:
                keep = np.ones(n, dtype=bool)
                if cfg.holdout == "block":
                    keep[block - 1] = False
                for i in block:
                    lo = max(i - span, 1)
                    sel = keep[lo - 1:i].copy()
                    sel[-1] = False
                    j = idx[lo - 1:i][sel]
                    est = _jackknife(j, x[j - 1], float(i), n, h, kernel)
                    total += (x[i - 1] - est) ** 2
        except SingularWindowError:
            total = math.inf
        out[h] = total
    return out


def cv_bandwidth(values, n: int, cfg: CvConfig = CvConfig(), kernel: Kernel | None = None) -> float:
    """Grid bandwidth with the smallest cross-validated squared error.

    Ties go to the smaller bandwidth.  Two errors tie when they differ by less
    than ``1e-9`` relative, or by less than ``1e-12`` times the sum of squared
    values, so round-off on exactly reproducible data counts as a tie.
    """
    errs = cv_errors(values, n, cfg, kernel)
    x = np.asarray(values, dtype=float)
    floor = 1e-12 * float(np.dot(x, x))
    best_h, best = None, math.inf
    for h, e in errs.items():
        if e == math.inf:
            continue
        if best_h is None or e < best - max(1e-9 * best, floor):
            best_h, best = h, e
    if best_h is None:
        raise NoValidBandwidthError("every candidate bandwidth leaves a singular window")
    return best_h
