"""
What calibration computes
=========================

The critical value comes from a GEV law fitted to block maxima of one-sided
prediction residuals on the clean prefix, then moved from the block length
to blocks of length n.
"""

import numpy as np

from seqoutlier import DetectorConfig, LevelSchedule, calibrate
from seqoutlier.evt import block_maxima, fit_pwm, gev_cdf, scale_params

rng = np.random.default_rng(3)
n = 200
calib = 1.0 + 0.05 * rng.normal(size=n)

state = calibrate(calib, DetectorConfig(n))

# residuals start once the first window is full
resid = state.residuals
print(f"{resid.size} residuals, sd {resid.std():.4f}, bandwidth {state.h:.3f}")

# the same steps by hand
r = state.block_len
maxima = block_maxima(resid, r)
theta_r = fit_pwm(maxima)
theta_n = scale_params(theta_r, r, n).params
print(f"{maxima.size} maxima over blocks of {r}")
print("block scale:", theta_r)
print("scaled to n:", theta_n)
assert theta_n == state.theta_n.params

# the scaled law is the block law raised to the power n / r
x = np.array([0.1, 0.15, 0.2])
print("F_n(x)        ", gev_cdf(theta_n, x))
print("F_r(x)^(n/r)  ", gev_cdf(theta_r, x) ** (n / r))

# thresholds shrink as the level grows
for alpha in (0.001, 0.01, 0.05, 0.1):
    print(f"alpha {alpha:<6} threshold {state.threshold(alpha):.4f}")

# a summable schedule spends alpha / 2 on the first block of n, alpha / 4 on the next, ...
sched = LevelSchedule.summable(0.01)
print("summable block levels:", [sched.block_level(k) for k in range(1, 6)])
