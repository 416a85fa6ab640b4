"""Command-line front end.

    seqoutlier detect    --config run.cfg --input series.csv --output verdicts.csv
    seqoutlier calibrate --input series.csv --n 200 --bandwidth 0.3
    seqoutlier simulate  --seed 1 --paper-grid --replications 200

Configuration files hold ``key = value`` lines; ``#`` starts a comment.
Every key can also be given as a ``--key`` flag, which wins over the file.
Exit codes: 0 ok, 2 usage or parse error, 3 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, fields
from typing import Iterator

from .bandwidth import CvConfig
from .detector import DetectorConfig, LevelSchedule, calibrate, step
from .sim import (
    DISTRIBUTIONS,
    MEAN_FUNCTIONS,
    PROCESSES,
    Scenario,
    paper_grid,
    run_scenario_variants,
    write_metrics_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_CALIBRATION = 0, 2, 3

VERDICT_COLUMNS = ("index", "value", "estimate", "residual", "threshold", "alpha_i", "flag", "fallback")


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


def _int(lo=None):
    def parse(s):
        v = int(s)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return v
    return parse


def _float_open01(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise ValueError("must lie in (0, 1)")
    return v


def _bool(s):
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _choice(*allowed):
    def parse(s):
        if s not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return s
    return parse


def _bandwidth(s):
    return "auto" if s == "auto" else _float_open01(s)


def _block_count(s):
    return "auto" if s == "auto" else _int(5)(s)


def _list(item, allowed=None):
    def parse(s):
        if s == "all" and allowed is not None:
            return tuple(allowed)
        out = tuple(item(p.strip()) for p in s.split(",") if p.strip())
        if not out:
            raise ValueError("empty list")
        if allowed is not None:
            bad = [v for v in out if v not in allowed]
            if bad:
                raise ValueError(f"unknown value(s) {', '.join(map(str, bad))}")
        return out
    return parse


def _grid(s):
    return () if s in ("", "default") else tuple(sorted(_list(_float_open01)(s)))


def _optional_int(s):
    return None if s in ("", "none") else int(s)


def _path(s):
    return s


# key -> (parser, default, help)
_KEYS = {
    "n": (_int(25), 100, "calibration length / resolution"),
    "alpha": (_float_open01, 0.01, "joint level of n consecutive tests"),
    "schedule": (_choice("constant", "summable"), "constant", "level schedule"),
    "variant": (_choice("full", "partial"), "full", "smoother variant"),
    "bandwidth": (_bandwidth, "auto", "'auto' (cross-validation) or a fixed h in (0, 1)"),
    "cv_folds": (_int(2), 5, "cross-validation folds"),
    "cv_grid": (_grid, (), "comma-separated candidate bandwidths (default: 12 log-spaced)"),
    "cv_holdout": (_choice("block", "point"), "block", "remove the whole held-out fold or only the predicted point"),
    "block_count": (_block_count, "auto", "number of calibration blocks"),
    "seed": (_optional_int, None, "master seed (required by simulate)"),
    "input": (_path, "-", "input CSV ('-' for stdin)"),
    "output": (_path, "-", "output file ('-' for stdout)"),
    "mean_fn": (_list(str, MEAN_FUNCTIONS), ("mu0",), "mean functions or 'all'"),
    "process": (_list(str, PROCESSES), ("iid",), "error processes or 'all'"),
    "dist": (_list(str, DISTRIBUTIONS), ("normal",), "error distributions or 'all'"),
    "sizes": (_list(_int(25)), (100,), "series resolutions n for simulate"),
    "contaminated": (_bool, False, "inject outliers in simulate"),
    "outlier_rate": (_float_open01, 0.05, "fraction of monitored points contaminated"),
    "replications": (_int(1), 100, "replications per scenario"),
    "variants": (_list(str, ("full", "partial")), ("full", "partial"), "variants run by simulate"),
    "workers": (_int(1), 1, "worker processes for simulate"),
    "paper_grid": (_bool, False, "simulate all 180 benchmark cells"),
}


@dataclass(frozen=True)
class RunConfig:
    n: int = 100
    alpha: float = 0.01
    schedule: str = "constant"
    variant: str = "full"
    bandwidth: object = "auto"
    cv_folds: int = 5
    cv_grid: tuple = ()
    cv_holdout: str = "block"
    block_count: object = "auto"
    seed: int | None = None
    input: str = "-"
    output: str = "-"
    mean_fn: tuple = ("mu0",)
    process: tuple = ("iid",)
    dist: tuple = ("normal",)
    sizes: tuple = (100,)
    contaminated: bool = False
    outlier_rate: float = 0.05
    replications: int = 100
    variants: tuple = ("full", "partial")
    workers: int = 1
    paper_grid: bool = False

    def detector_config(self, n: int | None = None, variant: str | None = None) -> DetectorConfig:
        if self.bandwidth == "auto":
            bw = CvConfig(folds=self.cv_folds, grid=self.cv_grid or None, holdout=self.cv_holdout)
        else:
            bw = float(self.bandwidth)
        if self.schedule == "constant":
            sched = LevelSchedule.constant(self.alpha)
        else:
            sched = LevelSchedule.summable(self.alpha)
        return DetectorConfig(
            n=self.n if n is None else n,
            alpha=self.alpha,
            schedule=sched,
            variant=self.variant if variant is None else variant,
            bandwidth=bw,
            block_count=None if self.block_count == "auto" else self.block_count,
        )

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_render(v)}")
        return "\n".join(lines) + "\n"


def _render(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(key: str, raw: str):
    if key not in _KEYS:
        raise ConfigError(f"unknown key {key!r}")
    try:
        return _KEYS[key][0](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: invalid value {raw.strip()!r} ({exc})") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a validated mapping."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = parse_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def _check(cfg: RunConfig) -> RunConfig:
    if cfg.bandwidth != "auto" and cfg.n * cfg.bandwidth < 4.0 - 1e-9:
        raise ConfigError(f"bandwidth {cfg.bandwidth} gives fewer than 4 points per window at n = {cfg.n}")
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqoutlier", description="Sequential outlier detection with GEV critical values.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("detect", "stream a CSV and write one verdict per monitored row"),
        ("calibrate", "print calibration diagnostics for a CSV prefix"),
        ("simulate", "run the Monte Carlo benchmark and write a metrics CSV"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
        for key, (_, _, h) in _KEYS.items():
            flag = "--" + key.replace("_", "-")
            if key in ("paper_grid", "contaminated"):
                sp.add_argument(flag, dest=key, nargs="?", const="true", default=None, help=h)
            else:
                sp.add_argument(flag, dest=key, default=None, help=h)
    return p


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        values.update(parse_config_text(text, args.config))
    for key in _KEYS:
        raw = getattr(args, key)
        if raw is not None:
            values[key] = parse_value(key, raw)
    return _check(RunConfig(**values))


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _open_in(path):
    if path == "-":
        return sys.stdin, False
    try:
        return open(path, encoding="utf-8", newline=""), True
    except OSError as exc:
        raise InputError(f"cannot open input: {exc}") from None


def read_rows(fh) -> Iterator[tuple[int | None, float]]:
    """Yield ``(index or None, value)`` from a CSV with a ``value`` column."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("input is empty; expected a header row") from None
    header = [h.strip() for h in header]
    if "value" not in header:
        raise InputError("header row has no 'value' column")
    vcol = header.index("value")
    icol = header.index("index") if "index" in header else None
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
        try:
            value = float(row[vcol])
        except ValueError:
            raise InputError(f"row {rowno}: value {row[vcol]!r} is not a number") from None
        if not math.isfinite(value):
            raise InputError(f"row {rowno}: value {row[vcol]!r} is not finite")
        index = None
        if icol is not None:
            try:
                index = int(row[icol])
            except ValueError:
                raise InputError(f"row {rowno}: index {row[icol]!r} is not an integer") from None
        yield index, value


def _calibrated(cfg: RunConfig, rows):
    prefix = []
    for index, value in rows:
        prefix.append((index, value))
        if len(prefix) == cfg.n:
            break
    if len(prefix) < cfg.n:
        raise ValueError(f"input holds {len(prefix)} rows; calibration needs n = {cfg.n}")
    return calibrate([v for _, v in prefix], cfg.detector_config()), prefix


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_detect(cfg: RunConfig, err=None) -> int:
    err = err or sys.stderr
    fin, close_in = _open_in(cfg.input)
    try:
        rows = read_rows(fin)
        try:
            state, _ = _calibrated(cfg, rows)
        except InputError:
            raise
        except (ValueError, ArithmeticError) as exc:
            print(f"calibration failed: {exc}", file=err)
            return EXIT_CALIBRATION
        fout, close_out = _open_out(cfg.output)
        try:
            w = csv.writer(fout, lineterminator="\n")
            w.writerow(VERDICT_COLUMNS)
            flagged = total = 0
            for index, value in rows:
                v = step(state, value)
                total += 1
                flagged += v.flag
                w.writerow([
                    v.index if index is None else index,
                    _fmt(v.value), _fmt(v.estimate), _fmt(v.residual), _fmt(v.threshold),
                    _fmt(v.alpha_i), int(v.flag), int(v.fallback),
                ])
        finally:
            if close_out:
                fout.close()
    finally:
        if close_in:
            fin.close()
    print(f"flagged {flagged} of {total} monitored observations", file=err)
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    fin, close_in = _open_in(cfg.input)
    try:
        try:
            state, _ = _calibrated(cfg, read_rows(fin))
        except InputError:
            raise
        except (ValueError, ArithmeticError) as exc:
            print(f"calibration failed: {exc}", file=err)
            return EXIT_CALIBRATION
    finally:
        if close_in:
            fin.close()
    tr, tn = state.theta_r, state.theta_n.params
    lines = [
        ("n", cfg.n),
        ("bandwidth", _fmt(state.h)),
        ("block_length", state.block_len),
        ("n_maxima", state.n_maxima),
        ("gamma_block", _fmt(tr.gamma)),
        ("mu0_block", _fmt(tr.mu0)),
        ("sigma0_block", _fmt(tr.sigma0)),
        ("gamma_n", _fmt(tn.gamma)),
        ("mu0_n", _fmt(tn.mu0)),
        ("sigma0_n", _fmt(tn.sigma0)),
        ("alpha", _fmt(cfg.alpha)),
        ("threshold", _fmt(state.threshold(cfg.alpha))),
    ]
    for k, v in lines:
        print(f"{k} = {v}", file=out)
    return EXIT_OK


def scenarios(cfg: RunConfig):
    if cfg.paper_grid:
        return list(paper_grid(cfg.contaminated, seed=cfg.seed))
    out = []
    for n in cfg.sizes:
        for fn in cfg.mean_fn:
            for proc in cfg.process:
                for dist in cfg.dist:
                    out.append(Scenario(fn, proc, dist, n, cfg.contaminated, cfg.outlier_rate, seed=cfg.seed))
    return out


def cmd_simulate(cfg: RunConfig, err=None) -> int:
    err = err or sys.stderr
    if cfg.seed is None:
        raise ConfigError("simulate requires a 'seed'")
    rows = []
    for sc in scenarios(cfg):
        dcfgs = [cfg.detector_config(n=sc.n, variant=v) for v in cfg.variants]
        reports = run_scenario_variants(sc, dcfgs, cfg.replications, workers=cfg.workers)
        rows.extend((sc, v, r) for v, r in zip(cfg.variants, reports))
    fout, close_out = _open_out(cfg.output)
    try:
        write_metrics_csv(rows, fout)
    finally:
        if close_out:
            fout.close()
    failed = sum(r.failed for _, _, r in rows)
    if failed:
        print(f"{failed} replication(s) failed to calibrate", file=err)
    return EXIT_OK


_COMMANDS = {"detect": cmd_detect, "calibrate": cmd_calibrate, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        return _COMMANDS[args.command](cfg)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
