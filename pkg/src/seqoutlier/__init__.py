"""Sequential outlier detection for non-stationary time series.

One-sided Jackknife local linear smoothing supplies the mean estimate;
critical values come from a GEV law fitted by probability-weighted moments
to block maxima of calibration residuals.
"""

from .bandwidth import CvConfig, cv_bandwidth
from .detector import (
    DetectorConfig,
    DetectorState,
    LevelSchedule,
    Verdict,
    alpha_for_index,
    calibrate,
    run_stream,
    step,
)
from .evt import GevParams, ScaledGev, block_maxima, fit_pwm, gev_cdf, gev_quantile, scale_params
from .kernels import Kernel, equivalent_kernel, jackknife_kernel, kernel_l2_norms, quartic_kernel
from .smoother import (
    SmootherConfig,
    WindowBuffer,
    jackknife_estimate,
    local_linear_fit,
    weighted_sums,
)

__version__ = "0.1.0"
