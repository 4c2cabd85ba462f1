"""Parameter scans of the minimum variance and linearization validity."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .params import Constant, DerivedConstants, Harmonic, PulseTrain, PumpProfile, SystemParams, derive_constants
from .semiclassical import meanfield_ode, resolved_size, time_grid
from .variance import variance_ode

VALIDITY_FACTOR = 100.0

AXES = ("fbar_over_fth", "f1_over_fbar", "delta_over_gamma", "epsL_T1")


def validity_check(params: SystemParams, dc: DerivedConstants, profile: PumpProfile, factor: float = VALIDITY_FACTOR):
    """Distance from threshold relative to the size of fluctuation corrections.

    Harmonic pumps compare ``|fbar/f_th - 1|`` with
    ``(lam/gamma) exp(2 (f1/f_th)(gamma/delta))``; constant and pulsed pumps
    with ``lam/gamma``.  Evaluated in log space so huge exponents do not overflow.
    """
    dist = abs(profile.mean() / dc.f_th - 1.0)
    log_rhs = math.log(dc.lambda_over_gamma)
    form = "lambda/gamma"
    if isinstance(profile, Harmonic):
        log_rhs += 2.0 * (profile.f1 / dc.f_th) * (dc.gamma / profile.delta)
        form = "lambda/gamma*exp(2*f1/f_th*gamma/delta)"
    elif not isinstance(profile, (Constant, PulseTrain)):
        raise TypeError(f"no validity form for {type(profile).__name__}")
    if dist == 0.0:
        return {"valid": False, "margin": 0.0, "log10_margin": -math.inf, "form": form}
    log_margin = math.log(dist) - log_rhs
    margin = math.exp(log_margin) if log_margin < 700 else math.inf
    return {
        "valid": bool(log_margin >= math.log(factor)),
        "margin": margin,
        "log10_margin": log_margin / math.log(10.0),
        "form": form,
    }


# --------------------------------------------------------------------------
# profile families: axis value -> profile


def vary_mean(dc: DerivedConstants, f1_ratio: float, delta: float) -> Callable[[float], PumpProfile]:
    """Harmonic pump with ``fbar = x f_th`` and ``f1 = f1_ratio fbar``."""
    return lambda x: Harmonic(x * dc.f_th, f1_ratio * x * dc.f_th, delta)


def vary_modulation(dc: DerivedConstants, fbar_ratio: float, delta: float) -> Callable[[float], PumpProfile]:
    """Harmonic pump with ``f1 = x fbar``."""
    return lambda x: Harmonic(fbar_ratio * dc.f_th, x * fbar_ratio * dc.f_th, delta)


def vary_frequency(dc: DerivedConstants, fbar_ratio: float, f1_ratio: float) -> Callable[[float], PumpProfile]:
    """Harmonic pump with ``delta = x gamma``."""
    return lambda x: Harmonic(fbar_ratio * dc.f_th, f1_ratio * fbar_ratio * dc.f_th, x * dc.gamma)


def vary_pulse_area(dc: DerivedConstants, T1: float, T2: float) -> Callable[[float], PumpProfile]:
    """Pulse train with ``eps_L T1 = x``."""
    return lambda x: PulseTrain(x * dc.f_th / (dc.gamma * T1), T1, T2)


# --------------------------------------------------------------------------


@dataclass
class ScanRow:
    curve: str
    x: float
    V_min: float
    t_m: float
    n_min: float
    epr: bool
    valid: bool
    margin: float
    error: str = ""


@dataclass
class ScanResult:
    axis: str
    rows: list = field(default_factory=list)

    COLUMNS = ("curve", "x", "V_min", "t_m", "n_min", "epr", "valid", "margin", "error")

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.curve, r.x))

    @property
    def curves(self) -> list:
        return sorted({r.curve for r in self.rows})

    def curve(self, name: str = "") -> list:
        return [r for r in self.rows if r.curve == name]

    def column(self, name: str, curve: str = "") -> np.ndarray:
        return np.array([getattr(r, name) for r in self.curve(curve)], dtype=float)

    @property
    def errors(self) -> list:
        return [r for r in self.rows if r.error]

    def argmin(self, curve: str = ""):
        ok = [r for r in self.curve(curve) if not r.error]
        return min(ok, key=lambda r: r.V_min) if ok else None

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.axis if c == "x" else c for c in self.COLUMNS])
            for r in self.rows:
                w.writerow(
                    [
                        r.curve,
                        repr(float(r.x)),
                        repr(float(r.V_min)),
                        repr(float(r.t_m)),
                        repr(float(r.n_min)),
                        int(r.epr),
                        int(r.valid),
                        repr(float(r.margin)),
                        r.error,
                    ]
                )

    def summary(self) -> dict:
        out = {"axis": self.axis, "n_rows": len(self.rows), "n_errors": len(self.errors), "argmin": {}}
        for c in self.curves:
            best = self.argmin(c)
            out["argmin"][c] = None if best is None else _jsonable(asdict(best))
        return out

    def to_json(self, path, extra=None):
        doc = self.summary()
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(d: dict) -> dict:
    # JSON has no inf/nan; write them as strings
    return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def _periodic_interp(t, t_grid, y, period):
    tt = np.concatenate([t_grid, [t_grid[0] + period]])
    yy = np.concatenate([y, [y[0]]])
    return float(np.interp(t % period, tt, yy))


def evaluate_row(params, dc, profile, x, curve="", n_grid=512, enforce_validity=False) -> ScanRow:
    """Solve one scan point; failures are recorded in the row, not raised."""
    try:
        val = validity_check(params, dc, profile)
    except TypeError as exc:
        return ScanRow(curve, x, math.nan, math.nan, math.nan, False, False, math.nan, str(exc))
    if enforce_validity and not val["valid"]:
        return ScanRow(curve, x, math.nan, math.nan, math.nan, False, False, val["margin"], "outside linearization validity")
    try:
        n0 = meanfield_ode(params, dc, profile, grid=time_grid(profile, dc.gamma, resolved_size(profile, dc.gamma, n_grid)))
        vt = variance_ode(params, dc, profile, n0)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        return ScanRow(curve, x, math.nan, math.nan, math.nan, False, val["valid"], val["margin"], f"{type(exc).__name__}: {exc}")
    n_min = _periodic_interp(vt.t_m, n0.t_grid, n0.n0, vt.period)
    return ScanRow(
        curve=curve,
        x=float(x),
        V_min=float(vt.V_min),
        t_m=float(vt.t_m),
        n_min=max(n_min, 0.0),
        epr=bool(vt.V_min**2 < 0.25),
        valid=val["valid"],
        margin=val["margin"],
    )


def scan_vmin(
    params: SystemParams,
    family: Callable[[float], PumpProfile],
    grid: Sequence[float],
    axis: str = "x",
    curve: str = "",
    n_grid: int = 512,
    enforce_validity: bool = False,
    dc: DerivedConstants | None = None,
) -> ScanResult:
    """V_min, t_m and n0(t_m) at each value of ``grid``."""
    grid = [float(x) for x in np.atleast_1d(grid)]
    if not grid:
        raise ValueError("scan grid is empty")
    dc = dc or derive_constants(params)
    rows = []
    for x in grid:
        try:
            profile = family(x)
        except ValueError as exc:
            rows.append(ScanRow(curve, x, math.nan, math.nan, math.nan, False, False, math.nan, str(exc)))
            continue
        rows.append(evaluate_row(params, dc, profile, x, curve, n_grid, enforce_validity))
    return ScanResult(axis, rows)


def frequency_sweep(params, fbar_ratio, f1_ratio, deltas, n_grid=512, dc=None) -> ScanResult:
    """V_min against modulation frequency at fixed mean and depth (in units of f_th and fbar)."""
    dc = dc or derive_constants(params)
    deltas = np.atleast_1d(np.asarray(deltas, float))
    if deltas.size and (deltas.min() > 1e-2 or deltas.max() < 1e2):
        warnings.warn("frequency grid does not span [0.01, 100] gamma", stacklevel=2)
    return scan_vmin(params, vary_frequency(dc, fbar_ratio, f1_ratio), deltas, "delta_over_gamma", n_grid=n_grid, dc=dc)


def modulation_curves(params, fbar_grid, f1_ratios=(0.0, 0.75, 2.0), delta=2.0, n_grid=512, dc=None) -> ScanResult:
    """One V_min(fbar/f_th) curve per modulation depth ``f1/fbar``; ``delta`` in units of gamma."""
    dc = dc or derive_constants(params)
    rows = []
    for r in f1_ratios:
        part = scan_vmin(
            params, vary_mean(dc, r, delta * dc.gamma), fbar_grid, "fbar_over_fth", curve=f"f1/fbar={r:g}", n_grid=n_grid, dc=dc
        )
        rows.extend(part.rows)
    return ScanResult("fbar_over_fth", rows)
