"""Monte Carlo harness for the synthetic benchmark.

A series is ``X_i = mu(i/n) + eps_i + c_i`` for ``i = 1 .. 11 n``.  Errors
are built from i.i.d. innovations through an IID, MA(1) or AR(1) filter with
coefficient 1/2 and rescaled to mean 0 and sd 1/20 whenever the variance is
finite.  Outliers are injected after the calibration prefix only.

Randomness: each replication draws from its own Philox stream keyed by
``(seed, replication)`` so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from functools import lru_cache

import numpy as np
from scipy import optimize, signal, stats

from .detector import DetectorConfig, calibrate, step

__all__ = [
    "MEAN_FUNCTIONS",
    "PROCESSES",
    "DISTRIBUTIONS",
    "BENCHMARK_SIZES",
    "Scenario",
    "MetricsReport",
    "make_rng",
    "mean_value",
    "gen_errors",
    "outlier_height",
    "inject_outliers",
    "score",
    "simulate_series",
    "run_scenario",
    "run_scenario_variants",
    "paper_grid",
    "METRICS_COLUMNS",
    "write_metrics_csv",
]

MEAN_FUNCTIONS = ("mu0", "mu1", "mu2", "mu3")
PROCESSES = ("iid", "ma", "ar")
DISTRIBUTIONS = ("normal", "uniform", "exp", "pareto4", "pareto2")
BENCHMARK_SIZES = (50, 100, 200)

TARGET_SD = 1.0 / 20.0
AR_BURN_IN = 100
COEF = 0.5

# (mean, variance) of the raw innovations; variance None when infinite
_INNOVATION_MOMENTS = {
    "normal": (0.0, 1.0),
    "uniform": (0.5, 1.0 / 12.0),
    "exp": (1.0, 1.0),
    "pareto4": (1.0 / 3.0, 2.0 / 9.0),
    "pareto2": (1.0, None),
}


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))


def mean_value(fn: str, t):
    """Benchmark mean functions on rescaled time ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    if fn == "mu0":
        out = np.ones_like(t)
    elif fn == "mu1":
        s = t / 11.0
        out = (s - 0.5) ** 2 + 0.1 * np.sin(2.0 * np.pi * s) + 0.75
    elif fn == "mu2":
        mid = 0.75 - 0.25 * np.sin(2.0 * np.pi * t / 11.0)
        out = np.where(t <= 11.0 / 4.0, 0.5, np.where(t < 33.0 / 4.0, mid, 1.0))
    elif fn == "mu3":
        out = np.where(t <= 11.0 / 2.0, 0.5, 1.0)
    else:
        raise ValueError(f"unknown mean function {fn!r}")
    return out if out.ndim else float(out)


def _innovations(dist, size, rng):
    if dist == "normal":
        return rng.standard_normal(size)
    if dist == "uniform":
        return rng.random(size)
    if dist == "exp":
        return rng.standard_exponential(size)
    if dist in ("pareto4", "pareto2"):
        a = 4.0 if dist == "pareto4" else 2.0
        # inverse of F(x) = 1 - (1 + x)^-a; 1 - U keeps U = 0 off the pole
        return (1.0 - rng.random(size)) ** (-1.0 / a) - 1.0
    raise ValueError(f"unknown distribution {dist!r}")


def process_moments(process: str, dist: str):
    """Stationary mean and variance (None if infinite) of the filtered process."""
    m, v = _INNOVATION_MOMENTS[dist]
    if process == "iid":
        return m, v
    if process == "ma":
        return (1.0 + COEF) * m, None if v is None else (1.0 + COEF**2) * v
    if process == "ar":
        return m / (1.0 - COEF), None if v is None else v / (1.0 - COEF**2)
    raise ValueError(f"unknown error process {process!r}")


def gen_errors(process: str, dist: str, length: int, seed=0) -> np.ndarray:
    """Centred, rescaled error sequence of the given length.

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if length < 1:
        raise ValueError("length must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    mean, var = process_moments(process, dist)
    if process == "iid":
        eps = _innovations(dist, length, rng)
    elif process == "ma":
        eta = _innovations(dist, length + 1, rng)
        eps = eta[1:] + COEF * eta[:-1]
    else:
        eta = _innovations(dist, length + AR_BURN_IN, rng)
        eps = signal.lfilter([1.0], [1.0, -COEF], eta)[AR_BURN_IN:]
    eps = eps - mean
    if var is not None:
        eps = eps * (TARGET_SD / math.sqrt(var))
    return eps


def _abs_quantile_iid(dist, p):
    """Quantile of |eps| for an IID scenario, from the exact marginal cdf."""
    m, v = _INNOVATION_MOMENTS[dist]
    s = 1.0 if v is None else TARGET_SD / math.sqrt(v)
    if dist == "normal":
        return s * stats.norm.ppf(0.5 + p / 2.0)
    cdfs = {
        "uniform": stats.uniform().cdf,
        "exp": stats.expon().cdf,
        "pareto4": lambda x: stats.lomax(4.0).cdf(x),
        "pareto2": lambda x: stats.lomax(2.0).cdf(x),
    }
    F = cdfs[dist]

    def excess(y):
        return F(m + y) - F(m - y) - p

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    return s * optimize.brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-13)


@lru_cache(maxsize=None)
def outlier_height(dist: str, n: int, process: str = "iid") -> float:
    """Minimal outlier height ``2 q_{1-1/n}(|eps|)``.

    Exact for IID errors and for Gaussian MA/AR errors (Gaussian marginal);
    otherwise estimated from 2 million draws of a fixed reference stream.
    """
    p = 1.0 - 1.0 / n
    if process == "iid" or dist == "normal":
        return 2.0 * float(_abs_quantile_iid(dist, p))
    ref = gen_errors(process, dist, 2_000_000, make_rng(0x5EED, PROCESSES.index(process), DISTRIBUTIONS.index(dist)))
    return 2.0 * float(np.quantile(np.abs(ref), p))


def inject_outliers(series, dist: str, n: int, rate: float = 0.05, seed=0, *, process: str = "iid", height: float | None = None):
    """Add outliers to ``floor(rate (len - n))`` distinct post-calibration points.

    Each outlier is ``height * f`` with ``f`` uniform on ``[-2, -1] U [1, 2]``.
    ``height`` defaults to :func:`outlier_height`.

    Returns
    -------
    (contaminated copy, boolean truth mask)
    """
    x = np.array(series, dtype=float)
    if not 0.0 < rate < 1.0:
        raise ValueError("rate must lie in (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    mask = np.zeros(x.size, dtype=bool)
    k = int(math.floor(rate * (x.size - n)))
    if k <= 0:
        return x, mask
    h = outlier_height(dist, n, process) if height is None else float(height)
    pos = n + rng.choice(x.size - n, size=k, replace=False)
    f = rng.uniform(1.0, 2.0, size=k) * rng.choice([-1.0, 1.0], size=k)
    x[pos] += h * f
    mask[pos] = True
    return x, mask


@dataclass(frozen=True)
class Scenario:
    mean_fn: str = "mu0"
    process: str = "iid"
    dist: str = "normal"
    n: int = 100
    contaminated: bool = False
    outlier_rate: float = 0.05
    seed: int = 0
    horizon: int | None = None

    def __post_init__(self):
        if self.mean_fn not in MEAN_FUNCTIONS:
            raise ValueError(f"unknown mean function {self.mean_fn!r}")
        if self.process not in PROCESSES:
            raise ValueError(f"unknown error process {self.process!r}")
        if self.dist not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.n < 25:
            raise ValueError("n must be at least 25")
        if self.horizon is None:
            object.__setattr__(self, "horizon", 11 * self.n)
        if self.horizon < 2 * self.n:
            raise ValueError("horizon must be at least 2 n")


@dataclass
class MetricsReport:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    failed: int = 0

    def __add__(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    @property
    def specificity(self) -> float | None:
        d = self.tn + self.fp
        return self.tn / d if d else None

    @property
    def sensitivity(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def score(flags, truth) -> MetricsReport:
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    return MetricsReport(
        tp=int(np.sum(flags & truth)),
        fp=int(np.sum(flags & ~truth)),
        tn=int(np.sum(~flags & ~truth)),
        fn=int(np.sum(~flags & truth)),
    )


def simulate_series(sc: Scenario, replication: int, errors_fn=None):
    """Series and truth mask for one replication."""
    rng = make_rng(sc.seed, replication)
    i = np.arange(1, sc.horizon + 1)
    if errors_fn is None:
        eps = gen_errors(sc.process, sc.dist, sc.horizon, rng)
    else:
        eps = np.asarray(errors_fn(rng, sc.horizon), dtype=float)
    x = mean_value(sc.mean_fn, i / sc.n) + eps
    if sc.contaminated:
        x, mask = inject_outliers(x, sc.dist, sc.n, sc.outlier_rate, rng, process=sc.process)
    else:
        mask = np.zeros(sc.horizon, dtype=bool)
    return x, mask


def _one_replication(sc, cfgs, replication, errors_fn=None):
    x, mask = simulate_series(sc, replication, errors_fn)
    n = sc.n
    out = []
    state0 = None
    for cfg in cfgs:
        try:
            if state0 is None:
                state0 = calibrate(x[:n], cfg)
            state = _rebind(state0, cfg)
        except (ValueError, ArithmeticError):
            out.append(MetricsReport(failed=1))
            continue
        flags = [step(state, v).flag for v in x[n:]]
        out.append(score(flags, mask[n:]))
    return out


def _rebind(state, cfg):
    """Fresh copy of a calibrated state, switched to ``cfg``'s streaming options."""
    return replace(state, config=cfg, buffer=state.buffer.copy(), _thresholds={})


def _calibration_key(cfg: DetectorConfig):
    return (cfg.n, cfg.bandwidth, cfg.block_count, cfg.kernel)


def run_scenario_variants(sc: Scenario, cfgs, replications: int, *, workers: int = 1, errors_fn=None):
    """Run several detector configurations on identical replications.

    Configurations must agree on everything that affects calibration; they
    may differ in variant and level schedule.  Returns one aggregated
    :class:`MetricsReport` per configuration.
    """
    cfgs = list(cfgs)
    if replications < 1:
        raise ValueError("replications must be at least 1")
    if len({_calibration_key(c) for c in cfgs}) > 1:
        raise ValueError("configurations differ in calibration settings")
    if any(c.n != sc.n for c in cfgs):
        raise ValueError("detector n must match scenario n")
    totals = [MetricsReport() for _ in cfgs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = ex.map(
                _one_replication,
                itertools.repeat(sc),
                itertools.repeat(cfgs),
                range(replications),
                itertools.repeat(errors_fn),
                chunksize=max(1, replications // (4 * workers)),
            )
            for res in results:
                totals = [a + b for a, b in zip(totals, res)]
    else:
        for rep in range(replications):
            res = _one_replication(sc, cfgs, rep, errors_fn)
            totals = [a + b for a, b in zip(totals, res)]
    return totals


def run_scenario(sc: Scenario, detector_cfg: DetectorConfig, replications: int, *, workers: int = 1, errors_fn=None) -> MetricsReport:
    """Aggregate confusion counts of one detector over ``replications`` series.

    Replications whose calibration fails are excluded from the counts and
    tallied in ``failed``.
    """
    return run_scenario_variants(sc, [detector_cfg], replications, workers=workers, errors_fn=errors_fn)[0]


def paper_grid(contaminated: bool = False, seed: int = 0):
    """All 180 benchmark cells: 4 means x 3 processes x 5 distributions x 3 sizes."""
    for n, fn, proc, dist in itertools.product(BENCHMARK_SIZES, MEAN_FUNCTIONS, PROCESSES, DISTRIBUTIONS):
        yield Scenario(fn, proc, dist, n, contaminated, seed=seed)


METRICS_COLUMNS = (
    "mean_fn", "process", "dist", "n", "contaminated", "variant",
    "tp", "fp", "tn", "fn", "specificity", "sensitivity", "failed",
)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(rows, out=None) -> str:
    """Write ``(scenario, variant, report)`` rows as CSV; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for sc, variant, rep in rows:
        w.writerow([
            _fmt(v) for v in (
                sc.mean_fn, sc.process, sc.dist, sc.n, sc.contaminated, variant,
                rep.tp, rep.fp, rep.tn, rep.fn, rep.specificity, rep.sensitivity, rep.failed,
            )
        ])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
