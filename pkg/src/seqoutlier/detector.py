"""Sequential point-outlier detection with GEV critical values.

Workflow::

    state = calibrate(first_n_values, DetectorConfig(n=100))
    for x in stream:
        verdict = step(state, x)

Observation ``i`` is flagged when ``|x_i - mu_tilde(i/n)|`` exceeds the
``1 - alpha_i`` quantile of a GEV law fitted to calibration residual block
maxima and rescaled to blocks of length ``n``.  The estimate for ``x_i`` is
formed from the window *before* ``x_i`` enters it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .bandwidth import CvConfig, cv_bandwidth
from .evt import GevParams, InsufficientDataError, ScaledGev, block_maxima, fit_pwm, scale_params
from .kernels import Kernel, quartic_kernel
from .smoother import SingularWindowError, SmootherConfig, WindowBuffer, _jackknife

__all__ = [
    "LevelSchedule",
    "DetectorConfig",
    "DetectorState",
    "Verdict",
    "NotCalibratedError",
    "alpha_for_index",
    "upper_quantile",
    "default_block_count",
    "calibrate",
    "step",
    "run_stream",
]

FULL = "full"
PARTIAL = "partial"


class NotCalibratedError(RuntimeError):
    pass


def geometric_weights(k: int) -> float:
    return 0.5 ** k


@dataclass(frozen=True)
class LevelSchedule:
    """Per-test levels for post-calibration observations.

    ``constant``: every test runs at ``alpha``; this bounds the familywise
    error of each run of ``n`` consecutive tests.  ``summable``: tests in the
    ``k``-th post-calibration block of ``n`` run at ``alpha * w_k`` with
    ``sum_k w_k = 1``, bounding the error over the whole stream.
    """

    kind: str = "constant"
    alpha: float = 0.01
    weights: Union[Callable[[int], float], Sequence[float], None] = None

    def __post_init__(self):
        if self.kind not in ("constant", "summable"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.kind == "summable" and self.weights is not None and not callable(self.weights):
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("schedule weights must be positive")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise ValueError(f"schedule weights sum to {math.fsum(w)!r}, not 1")

    @classmethod
    def constant(cls, alpha: float = 0.01) -> "LevelSchedule":
        return cls("constant", alpha)

    @classmethod
    def summable(cls, alpha: float = 0.01, weights=None) -> "LevelSchedule":
        return cls("summable", alpha, weights)

    def weight(self, k: int) -> float:
        if self.weights is None:
            return geometric_weights(k)
        if callable(self.weights):
            return float(self.weights(k))
        # past the end of a finite schedule no level is left to spend
        return float(self.weights[k - 1]) if k <= len(self.weights) else 0.0

    def block_level(self, k: int) -> float:
        if self.kind == "constant":
            return self.alpha
        return self.alpha * self.weight(k)


def alpha_for_index(schedule: LevelSchedule, i: int, n: int) -> float:
    """Level of the test at absolute index ``i`` (``i > n``)."""
    if schedule.kind == "constant":
        return schedule.alpha
    if i <= n:
        raise ValueError(f"index {i} lies inside the calibration prefix 1..{n}")
    k = -((n - i) // n)  # ceil((i - n) / n)
    return schedule.block_level(k)


def upper_quantile(theta: GevParams, alpha: float) -> float:
    """``q_{1-alpha}(theta)``, accurate for tiny ``alpha``; ``inf`` at 0."""
    if alpha <= 0.0:
        return math.inf
    if alpha >= 1.0:
        raise ValueError("alpha must be below 1")
    g, mu, sig = theta.as_tuple()
    y = -math.log1p(-alpha)
    if abs(g) < 1e-6:
        return mu - sig * math.log(y)
    return mu + sig * math.expm1(-g * math.log(y)) / g


def default_block_count(n: int) -> int:
    return min(max(math.isqrt(n), 5), 30)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector settings.

    ``bandwidth`` is either a fixed ``h`` in ``(0, 1)`` or a :class:`CvConfig`
    for cross-validated selection on the calibration prefix.
    """

    n: int
    alpha: float = 0.01
    schedule: LevelSchedule | None = None
    variant: str = FULL
    bandwidth: Union[float, CvConfig] = field(default_factory=CvConfig)
    block_count: int | None = None
    kernel: Kernel = field(default_factory=quartic_kernel)

    def __post_init__(self):
        if self.n < 25:
            raise ValueError(f"calibration length n must be at least 25, got {self.n}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.variant not in (FULL, PARTIAL):
            raise ValueError(f"variant must be 'full' or 'partial', got {self.variant!r}")
        if self.block_count is not None and self.block_count < 5:
            raise ValueError("block_count must be at least 5")
        if self.schedule is None:
            object.__setattr__(self, "schedule", LevelSchedule.constant(self.alpha))

    @property
    def blocks(self) -> int:
        return self.block_count or default_block_count(self.n)


@dataclass(frozen=True)
class Verdict:
    index: int
    value: float
    estimate: float
    residual: float
    threshold: float
    alpha_i: float
    flag: bool
    fallback: bool = False


@dataclass
class DetectorState:
    config: DetectorConfig
    theta_n: ScaledGev
    buffer: WindowBuffer
    h: float
    i: int
    theta_r: GevParams
    block_len: int
    n_maxima: int
    residuals: np.ndarray
    last_estimate: float
    calibrated: bool = True
    _thresholds: dict = field(default_factory=dict, repr=False)

    def threshold(self, alpha_i: float) -> float:
        try:
            return self._thresholds[alpha_i]
        except KeyError:
            q = upper_quantile(self.theta_n.params, alpha_i)
            self._thresholds[alpha_i] = q
            return q

    def step(self, x: float) -> Verdict:
        return step(self, x)


def _calibration_residuals(values, n, h, kernel):
    span = math.ceil(n * h)
    buf = WindowBuffer(span)
    res = []
    last = math.nan
    for i, x in enumerate(values, start=1):
        if i > span:
            last = _jackknife(buf.indices, buf.values, float(i), n, h, kernel)
            res.append(x - last)
        buf.push(i, x, True)
    return np.asarray(res), buf, last


def calibrate(calib, cfg: DetectorConfig) -> DetectorState:
    """Fit the detector on an outlier-free prefix of exactly ``cfg.n`` values.

    Steps: pick ``h``; compute one-sided Jackknife prediction residuals for
    indices past the first full window; take block maxima of their absolute
    values over ``cfg.blocks`` blocks; fit a GEV by PWM; rescale it from the
    block length to ``n``.
    """
    x = np.asarray(calib, dtype=float)
    n = cfg.n
    if x.shape != (n,):
        raise ValueError(f"calibration prefix must hold n = {n} values, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("calibration prefix contains non-finite values")
    if isinstance(cfg.bandwidth, CvConfig):
        h = cv_bandwidth(x, n, cfg.bandwidth, cfg.kernel)
    else:
        h = float(cfg.bandwidth)
    SmootherConfig(n, h, cfg.kernel)  # validates h

    resid, buf, last = _calibration_residuals(x, n, h, cfg.kernel)
    m = cfg.blocks
    r = resid.size // m
    if r < 2:
        raise InsufficientDataError(
            f"{resid.size} calibration residuals cannot fill {m} blocks of length >= 2"
        )
    maxima = block_maxima(resid, r)
    theta_r = fit_pwm(maxima)
    theta_n = scale_params(theta_r, r, n)
    return DetectorState(
        config=cfg,
        theta_n=theta_n,
        buffer=buf,
        h=h,
        i=n,
        theta_r=theta_r,
        block_len=r,
        n_maxima=maxima.size,
        residuals=resid,
        last_estimate=last,
    )


def step(state: DetectorState, x: float) -> Verdict:
    """Test one new observation and append it to the window."""
    if state is None or not state.calibrated:
        raise NotCalibratedError("calibrate the detector before streaming")
    cfg = state.config
    n = cfg.n
    i = state.i + 1
    buf = state.buffer
    idx, val = buf.usable_entries()
    try:
        est = _jackknife(idx, val, float(i), n, state.h, cfg.kernel)
        fallback = False
    except SingularWindowError:
        fallback = True
        try:
            # starved partial window: let flagged points back in so the
            # estimate can follow a level shift instead of freezing
            est = _jackknife(buf.indices, buf.values, float(i), n, state.h, cfg.kernel)
        except SingularWindowError:
            est = state.last_estimate
    alpha_i = alpha_for_index(cfg.schedule, i, n)
    thr = state.threshold(alpha_i)
    resid = abs(x - est)
    flag = bool(resid > thr)
    buf.push(i, x, cfg.variant == FULL or not flag)
    state.i = i
    state.last_estimate = est
    return Verdict(i, float(x), float(est), float(resid), float(thr), float(alpha_i), flag, fallback)


def run_stream(state: DetectorState, values) -> list[Verdict]:
    return [step(state, float(x)) for x in values]
