"""Command-line driver: ``modnopo simulate | scan | mc | check``.

Parameters come from an optional ``--config`` file (``key = value`` lines or
JSON) and are overridden by flags.  Rates and times are in the same units as
``gamma`` (1 by default); ``--gamma-si`` only rescales the output columns.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .params import ConfigError, Regime, derive_constants, params_from_mapping, profile_from_mapping, read_config_file, regime_classify
from .positive_p import EnsembleError, ensemble_run, moment_residual_check
from .quadrature import QuadratureError
from .scan import AXES, ScanResult, scan_vmin, validity_check, vary_frequency, vary_mean, vary_modulation, vary_pulse_area
from .semiclassical import ConvergenceError, meanfield_ode, resolved_size, time_grid
from .variance import classify, variance_closedform, variance_ode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

# settings that change how a run executes but never its results
_NOT_EMBEDDED = ("workers", "out", "config")


@dataclass
class RunConfig:
    gamma: float = 1.0
    gamma3: Optional[float] = None
    k: Optional[float] = None
    profile: str = "constant"
    amplitude_unit: str = "absolute"
    f0: Optional[float] = None
    f1: Optional[float] = None
    delta: Optional[float] = None
    fL: Optional[float] = None
    T1: Optional[float] = None
    T2: Optional[float] = None
    n_grid: int = 512
    method: str = "ode"
    gamma_si: Optional[float] = None
    prefix: str = "run"
    # scan
    axis: str = "fbar_over_fth"
    grid: tuple = ()
    grid_start: Optional[float] = None
    grid_stop: Optional[float] = None
    grid_num: int = 0
    grid_spacing: str = "linear"
    curves: tuple = (0.0,)
    fbar_ratio: Optional[float] = None
    f1_ratio: Optional[float] = None
    enforce_validity: bool = False
    # mc
    n_traj: int = 10000
    seed: int = 0
    dt: float = 1e-3
    t_transient: float = 8.0
    n_points: int = 64
    n_periods: int = 1
    # execution only
    workers: int = 1
    out: str = "."

    @classmethod
    def from_mapping(cls, cfg: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in cfg.items():
            if key in ("config",):
                continue
            if key not in known:
                raise ConfigError(f"unknown parameter {key!r}")
            kwargs[key] = _coerce(key, raw, known[key].default)
        rc = cls(**kwargs)
        rc.validate()
        return rc

    def validate(self):
        if self.method not in ("ode", "closedform"):
            raise ConfigError(f"method: expected 'ode' or 'closedform', got {self.method!r}")
        if self.axis not in AXES:
            raise ConfigError(f"axis: expected one of {', '.join(AXES)}, got {self.axis!r}")
        if self.grid_spacing not in ("linear", "log"):
            raise ConfigError(f"grid_spacing: expected 'linear' or 'log', got {self.grid_spacing!r}")
        for name in ("n_grid", "n_traj", "n_points", "n_periods", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be at least 1")
        for name in ("dt", "t_transient"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive")
        if self.gamma_si is not None and not self.gamma_si > 0:
            raise ConfigError("gamma_si: must be positive")

    def embedded(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name in _NOT_EMBEDDED:
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def mapping(self) -> dict:
        return {k: v for k, v in self.embedded().items() if v is not None}

    def scan_grid(self) -> np.ndarray:
        if self.grid:
            return np.array(self.grid, dtype=float)
        if self.grid_start is None or self.grid_stop is None or self.grid_num < 1:
            raise ConfigError("scan grid: give 'grid' or all of grid_start, grid_stop, grid_num")
        if self.grid_spacing == "log":
            if self.grid_start <= 0 or self.grid_stop <= 0:
                raise ConfigError("scan grid: log spacing needs positive bounds")
            return np.geomspace(self.grid_start, self.grid_stop, self.grid_num)
        return np.linspace(self.grid_start, self.grid_stop, self.grid_num)


def _coerce(key, raw, default):
    if isinstance(default, tuple):
        if isinstance(raw, (list, tuple)):
            items = list(raw)
        else:
            items = [s for s in str(raw).replace(";", ",").split(",") if s.strip()]
        try:
            return tuple(float(x) for x in items)
        except ValueError:
            raise ConfigError(f"{key}: expected a comma separated list of numbers, got {raw!r}") from None
    if isinstance(default, bool):
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if v != int(v):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(v)
    if isinstance(default, str):
        return str(raw).strip()
    # optional or float field
    if raw is None:
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as a number") from None


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    if p.suffix == ".json":
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
            doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return {k: v for k, v in doc.items() if v is not None}
    return read_config_file(p)


# --------------------------------------------------------------------------


def _header(rc: RunConfig):
    return {"program": "modnopo", "version": __version__, "config": rc.embedded()}


def _write_json(path: Path, doc):
    with open(path, "w") as fh:
        json.dump(_finite(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _header_lines(rc):
    return [f"modnopo {__version__}", "config " + json.dumps(rc.embedded(), sort_keys=True)]


def _system(rc: RunConfig):
    m = rc.mapping()
    params = params_from_mapping(m)
    dc = derive_constants(params)
    return params, dc


def cmd_simulate(rc: RunConfig, out: Path) -> dict:
    params, dc = _system(rc)
    profile = profile_from_mapping(rc.mapping(), dc.f_th)
    grid = time_grid(profile, dc.gamma, resolved_size(profile, dc.gamma, rc.n_grid))
    n0 = meanfield_ode(params, dc, profile, grid=grid)
    if not n0.converged:
        raise ConvergenceError("mean-field trace did not converge", residual=n0.periodicity_residual)
    vt = variance_ode(params, dc, profile, n0)
    if rc.method == "closedform":
        vt.V = variance_closedform(params, dc, profile, n0, grid)
        vt.method = "closedform"
    gamma_out = rc.gamma_si or rc.gamma
    n0.to_csv(out / f"{rc.prefix}_n0.csv", gamma_out, _header_lines(rc))
    vt.to_csv(out / f"{rc.prefix}_V.csv", gamma_out, _header_lines(rc))
    summary = dict(_header(rc))
    summary.update(vt.summary())
    summary.update(
        {
            "classification": classify(vt.V_min).value,
            "regime": regime_classify(profile, dc).value,
            "validity": validity_check(params, dc, profile),
            "lambda_over_gamma": dc.lambda_over_gamma,
            "f_th": dc.f_th,
            "n0_min": float(n0.n0.min()),
            "n0_max": float(n0.n0.max()),
            "V_max": float(vt.V.max()),
            "gamma_out": gamma_out,
        }
    )
    _write_json(out / f"{rc.prefix}_summary.json", summary)
    return summary


def _scan_family(rc, dc, curve_value):
    need = lambda name: _require(rc, name)  # noqa: E731
    if rc.axis == "fbar_over_fth":
        return vary_mean(dc, curve_value, need("delta"))
    if rc.axis == "f1_over_fbar":
        return vary_modulation(dc, need("fbar_ratio"), need("delta"))
    if rc.axis == "delta_over_gamma":
        return vary_frequency(dc, need("fbar_ratio"), need("f1_ratio"))
    return vary_pulse_area(dc, need("T1"), need("T2"))


def _require(rc, name):
    v = getattr(rc, name)
    if v is None:
        raise ConfigError(f"{name}: required for axis {rc.axis}")
    return v


def cmd_scan(rc: RunConfig, out: Path) -> ScanResult:
    params, dc = _system(rc)
    grid = rc.scan_grid()
    if grid.size == 0:
        raise ConfigError("scan grid is empty")
    curves = rc.curves if rc.axis == "fbar_over_fth" else (None,)
    rows = []
    for c in curves:
        label = "" if c is None else f"f1/fbar={c:g}"
        family = _scan_family(rc, dc, c)
        part = scan_vmin(params, family, grid, rc.axis, curve=label, n_grid=rc.n_grid, enforce_validity=rc.enforce_validity, dc=dc)
        rows.extend(part.rows)
    result = ScanResult(rc.axis, rows)
    result.to_csv(out / f"{rc.prefix}_scan.csv", _header_lines(rc))
    result.to_json(out / f"{rc.prefix}_scan.json", extra=_finite(_header(rc)))
    return result


def cmd_mc(rc: RunConfig, out: Path):
    params, dc = _system(rc)
    profile = profile_from_mapping(rc.mapping(), dc.f_th)
    stats = ensemble_run(
        params,
        dc,
        profile,
        rc.n_traj,
        rc.seed,
        dt=rc.dt,
        t_transient=rc.t_transient,
        n_points=rc.n_points,
        n_periods=rc.n_periods,
        workers=rc.workers,
    )
    extra = dict(_header(rc))
    try:
        extra["residual_check"] = moment_residual_check(params, dc, profile, stats).to_dict()
    except ValueError as exc:
        extra["residual_check"] = {"skipped": str(exc)}
    if regime_classify(profile, dc) is not Regime.ABOVE:
        n0 = meanfield_ode(params, dc, profile, grid=time_grid(profile, dc.gamma, 8))
        V_lin = variance_closedform(params, dc, profile, n0, stats.t_grid)
        z = np.abs(stats.V - V_lin)
        se = stats.se_V
        within = np.where(se > 0, z <= 3 * se, z == 0)
        extra["linear_theory"] = {"V": [float(v) for v in V_lin], "fraction_within_3se": float(within.mean())}
    stats.to_json(out / f"{rc.prefix}_mc.json", extra=extra)
    return stats, extra


def cmd_check(rc: RunConfig, out: Path) -> dict:
    params, dc = _system(rc)
    profile = profile_from_mapping(rc.mapping(), dc.f_th)
    doc = dict(_header(rc))
    doc["validity"] = validity_check(params, dc, profile)
    doc["regime"] = regime_classify(profile, dc).value
    doc["adiabatic_valid"] = params.adiabatic_valid
    json.dump(_finite(doc), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return doc


COMMANDS = {"simulate": cmd_simulate, "scan": cmd_scan, "mc": cmd_mc, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value or JSON file; flags override it")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--prefix", help="output file name prefix")
    g = common.add_argument_group("system")
    g.add_argument("--gamma", type=float)
    g.add_argument("--gamma3", type=float)
    g.add_argument("--k", type=float)
    g.add_argument("--gamma-si", dest="gamma_si", type=float, help="gamma in 1/s for output scaling")
    g = common.add_argument_group("pump")
    g.add_argument("--profile", choices=("constant", "harmonic", "pulse"))
    g.add_argument("--amplitude-unit", dest="amplitude_unit", choices=("absolute", "threshold"))
    for name in ("f0", "f1", "delta", "fL", "T1", "T2"):
        g.add_argument(f"--{name}", type=float)
    g = common.add_argument_group("solver")
    g.add_argument("--n-grid", dest="n_grid", type=int)
    g.add_argument("--method", choices=("ode", "closedform"))

    parser = argparse.ArgumentParser(prog="modnopo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"modnopo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="periodic n0(t) and V(t) traces")
    p = sub.add_parser("scan", parents=[common], help="V_min along one parameter axis")
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--grid", help="comma separated axis values")
    p.add_argument("--grid-start", dest="grid_start", type=float)
    p.add_argument("--grid-stop", dest="grid_stop", type=float)
    p.add_argument("--grid-num", dest="grid_num", type=int)
    p.add_argument("--grid-spacing", dest="grid_spacing", choices=("linear", "log"))
    p.add_argument("--curves", help="f1/fbar values, one curve each (fbar_over_fth axis)")
    p.add_argument("--fbar-ratio", dest="fbar_ratio", type=float)
    p.add_argument("--f1-ratio", dest="f1_ratio", type=float)
    p.add_argument("--enforce-validity", dest="enforce_validity", action="store_const", const="true")
    p = sub.add_parser("mc", parents=[common], help="positive-P Monte Carlo ensemble")
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-transient", dest="t_transient", type=float)
    p.add_argument("--n-points", dest="n_points", type=int)
    p.add_argument("--n-periods", dest="n_periods", type=int)
    p.add_argument("--workers", type=int)
    sub.add_parser("check", parents=[common], help="linearization validity only")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    return RunConfig.from_mapping(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = resolve_config(args)
        out = Path(rc.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](rc, out)
    except ConfigError as exc:
        print(f"modnopo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, QuadratureError, EnsembleError, ArithmeticError, RuntimeError) as exc:
        print(f"modnopo: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # remaining ValueErrors come from parameter validation
        print(f"modnopo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
