"""Linearized two-mode quadrature variance V(t) = V(X1 - X2) = V(Y1 + Y2).

The variance is always reported at the optimal quadrature phase, where
``V = 1 + <R>``.  The vacuum level is 1.  Two routes are provided:

* :func:`variance_ode` integrates the linear variance equation together
  with an auxiliary memory state ``u' = n0 - 4 gamma u`` that replaces the
  exponential memory integral, and locates the periodic solution by
  shooting.
* :func:`variance_closedform` evaluates the periodic asymptotic integral
  representation by nested truncated quadratures.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _integrate
from .params import DerivedConstants, PulseTrain, PumpProfile, Regime, SystemParams, regime_classify
from .quadrature import PanelGrid, QuadratureError, envelope_length
from .semiclassical import (
    ENVELOPE_TOL,
    ConvergenceError,
    SemiclassicalTrace,
    _eps_antiderivative,
    _panel_setup,
    y_on_panels,
    y_window_length,
)


class Entanglement(str, enum.Enum):
    NONE = "none"
    INSEPARABLE = "inseparable"
    EPR = "EPR"


def classify(V):
    """Entanglement class of a two-mode variance.

    EPR when ``V**2 < 1/4``, inseparable when ``V < 1``.  Arrays map
    elementwise to a list.
    """
    arr = np.asarray(V, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("variance must be positive and finite")
    if arr.ndim == 0:
        v = float(arr)
        if v * v < 0.25:
            return Entanglement.EPR
        if v < 1.0:
            return Entanglement.INSEPARABLE
        return Entanglement.NONE
    return [classify(v) for v in arr.ravel()]


def to_output(x, gamma: float):
    """Output-field value ``2*gamma*x`` of an intracavity variance or photon number.

    With ``gamma`` in s^-1 the result is a flux in s^-1.
    """
    return 2.0 * gamma * np.asarray(x, dtype=float) if np.ndim(x) else 2.0 * gamma * float(x)


@dataclass
class VarianceTrace:
    t_grid: np.ndarray
    V: np.ndarray
    V_min: float
    t_m: float
    period: float
    converged: bool = True
    periodicity_residual: float = 0.0
    method: str = "ode"
    info: dict = field(default_factory=dict)

    @property
    def classification(self):
        return classify(self.V)

    def summary(self) -> dict:
        return {
            "V_min": float(self.V_min),
            "t_m": float(self.t_m),
            "epr": bool(self.V_min * self.V_min < 0.25),
            "inseparable": bool(self.V_min < 1.0),
        }

    def to_csv(self, path, gamma_out: float = 1.0, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "V", "V_out", "classification"])
            for t, v, c in zip(self.t_grid, self.V, self.classification):
                w.writerow([repr(float(t)), repr(float(v)), repr(2.0 * gamma_out * float(v)), c.value])


def locate_minimum(t_grid, V, period, breakpoints=()):
    """Grid minimum refined by a parabola through its two neighbours.

    No refinement at a pump discontinuity, where V has a kink.
    """
    t_grid = np.asarray(t_grid, float)
    V = np.asarray(V, float)
    i = int(np.argmin(V))
    n = V.size
    if np.ptp(V) <= 1e-11 * np.max(np.abs(V)):
        # flat trace: report the period start rather than a rounding-noise position
        return float(V[i]), float(t_grid[0] % period)
    if n < 3 or any(abs(t_grid[i] - bp) < 1e-12 * period for bp in breakpoints):
        return float(V[i]), float(t_grid[i] % period)
    tl, tc, tr = t_grid[i - 1], t_grid[i], t_grid[(i + 1) % n]
    if i == 0:
        tl -= period
    if i == n - 1:
        tr += period
    vl, vc, vr = V[i - 1], V[i], V[(i + 1) % n]
    # Newton divided differences of the interpolating parabola
    d1 = (vc - vl) / (tc - tl)
    d2 = (vr - vc) / (tr - tc)
    curv = (d2 - d1) / (tr - tl)
    if curv <= 0:
        return float(vc), float(tc % period)
    t_star = 0.5 * (tl + tc) - d1 / (2.0 * curv)
    if not tl <= t_star <= tr:
        return float(vc), float(tc % period)
    v_star = vl + d1 * (t_star - tl) + curv * (t_star - tl) * (t_star - tc)
    return float(min(v_star, vc)), float(t_star % period)


# --------------------------------------------------------------------------
# ODE route


def _rhs(profile, dc, bright, with_fundamental):
    g = dc.gamma

    def rhs(t, z, seg):
        eps = g * float(profile.amplitude(_integrate.inside(t, seg))) / dc.f_th
        if bright:
            s, w, V = z[0], z[1], z[2]
            y = math.exp(min(s, 700.0))
            head = [2.0 * (eps - g) - 2.0 * y]
            rest = z[3:]
        else:
            w, V = z[0], z[1]
            y = 0.0
            head = []
            rest = z[2:]
        decay = 2.0 * (g + eps + y)
        out = head + [y - 4.0 * g * w, -decay * V + 2.0 * y + 2.0 * g + 4.0 * g * w]
        if with_fundamental:
            # columns of the fundamental matrix of the (w, V) subsystem
            for j in range(2):
                pw, pv = rest[2 * j], rest[2 * j + 1]
                out += [-4.0 * g * pw, 4.0 * g * pw - decay * pv]
        return out

    return rhs


def _initial_log_y(n0_trace: SemiclassicalTrace, dc):
    if "log_lambda_n_at_0" in n0_trace.info:
        return n0_trace.info["log_lambda_n_at_0"]
    if n0_trace.t_grid[0] != 0.0:
        raise ValueError("n0 trace must start at t=0")
    return math.log(dc.lam * n0_trace.n0[0])


def variance_ode(
    params: SystemParams,
    dc: DerivedConstants,
    profile: PumpProfile,
    n0_trace: SemiclassicalTrace,
    grid=None,
    rtol: float = 1e-12,
    tol: float = 1e-10,
) -> VarianceTrace:
    """Periodic solution of the linearized variance equation.

    The photon number is carried along as ``s = ln(lambda n0)`` started on
    the periodic orbit of ``n0_trace``; given it, ``(u, V)`` obey a linear
    system, so the periodic initial state follows exactly from the one-period
    map ``x(T) = Psi x(0) + x_p``.
    """
    if not n0_trace.converged:
        raise ConvergenceError("n0 trace is not converged")
    T = profile.period(dc.gamma)
    t_grid = n0_trace.t_grid if grid is None else np.asarray(grid, float)
    bright = not n0_trace.is_zero
    head = [_initial_log_y(n0_trace, dc)] if bright else []
    rhs_fund = _rhs(profile, dc, bright, True)
    z0 = head + [0.0, 0.0, 1.0, 0.0, 0.0, 1.0]
    zT, _ = _integrate.integrate(rhs_fund, z0, profile, dc.gamma, 0.0, T, rtol=rtol)
    k = len(head)
    xp = zT[k : k + 2]
    Psi = np.array([[zT[k + 2], zT[k + 4]], [zT[k + 3], zT[k + 5]]])
    x0 = np.linalg.solve(np.eye(2) - Psi, xp)

    rhs = _rhs(profile, dc, bright, False)
    t_eval = np.concatenate([t_grid, [T]])
    _, samples = _integrate.integrate(rhs, head + list(x0), profile, dc.gamma, 0.0, T, t_eval=t_eval, rtol=rtol)
    V_all = samples[k + 1]
    u_all = samples[k] / dc.lam
    V = V_all[:-1]
    residual = abs(V_all[-1] - V_all[0]) / np.max(np.abs(V))
    V_min, t_m = locate_minimum(t_grid, V, T, profile.breakpoints())
    return VarianceTrace(
        t_grid=t_grid,
        V=V,
        V_min=V_min,
        t_m=t_m,
        period=T,
        converged=bool(residual < tol),
        periodicity_residual=float(residual),
        method="ode",
        info={"u": u_all[:-1], "floquet_matrix": Psi},
    )


# --------------------------------------------------------------------------
# closed-form (quadrature) route


def _closedform_once(profile, dc, bright, targets, per_period, order, windows):
    g = dc.gamma
    L_y, L_w, L_V = windows
    t_lo, t_hi = float(np.min(targets)), float(np.max(targets))
    start = t_lo - L_V - L_w - L_y
    edges = _panel_setup(profile, dc, start, t_hi if t_hi > start else start + 1.0, targets, per_period)
    grid = PanelGrid(edges, order)
    E_e = _eps_antiderivative(profile, dc, grid.edges)
    E_n = _eps_antiderivative(profile, dc, grid.nodes)
    ref_e = grid.edges[-1]
    if bright:
        y_e, y_n = y_on_panels(profile, dc, grid, start)
        y_ok = start + L_y
        y_e = np.where(grid.edges >= y_ok, y_e, 0.0)
        y_n = np.where(grid.nodes >= y_ok, y_n, 0.0)
        # memory term lambda*u = int exp(-4 gamma (t - s)) y(s) ds
        w_e, w_n = grid.exp_weighted(4 * g * (grid.edges - ref_e), 4 * g * (grid.nodes - ref_e), y_n)
        Y_e, Y_n = grid.cumulative(y_n)
        V_ok = y_ok + L_w
    else:
        y_e = w_e = Y_e = np.zeros(grid.edges.shape)
        y_n = w_n = Y_n = np.zeros(grid.nodes.shape)
        V_ok = start
    K_e = 2.0 * (g * (grid.edges - ref_e) + E_e + Y_e)
    K_n = 2.0 * (g * (grid.nodes - ref_e) + E_n + Y_n)
    K_ref = K_e[-1]
    h_n = np.where(grid.nodes >= V_ok, 2.0 * (g + y_n + 2.0 * g * w_n), 0.0)
    V_e, _ = grid.exp_weighted(K_e - K_ref, K_n - K_ref, h_n)
    idx = np.searchsorted(grid.edges, targets)
    return V_e[idx], y_e[idx]


def _check_branch(n0_trace, targets, n_quad, rtol=1e-6):
    phase = np.mod(targets, n0_trace.period)
    idx = np.searchsorted(n0_trace.t_grid, phase)
    idx = np.minimum(idx, n0_trace.t_grid.size - 1)
    same = np.abs(n0_trace.t_grid[idx] - phase) <= 1e-12 * n0_trace.period
    if not same.any():
        return
    ref = n0_trace.n0[idx[same]]
    mismatch = np.max(np.abs(n_quad[same] - ref) / ref)
    if mismatch > rtol:
        raise ValueError(f"n0 trace disagrees with the photon-number quadrature (relative {mismatch:.2e})")


def variance_closedform(
    params: SystemParams,
    dc: DerivedConstants,
    profile: PumpProfile,
    n0_trace: SemiclassicalTrace,
    t,
    rtol: float = 1e-9,
    orders=(12, 20),
    max_refine: int = 4,
):
    """V(t) from the periodic asymptotic integral representation.

    All improper integrals are truncated where their exponential envelope
    falls below 1e-12.  The photon number inside the integrals is itself
    evaluated by quadrature of the over-transient formula; ``n0_trace``
    selects the branch (zero trace means below threshold) and is checked
    against that quadrature where the two sample the same times.

    Returns ``V`` with the shape of ``t``.
    """
    t_arr = np.asarray(t, dtype=float)
    targets = np.atleast_1d(t_arr).ravel()
    bright = not n0_trace.is_zero
    g = dc.gamma
    exc = 2.0 * g * profile.excursion() / dc.f_th
    L_V = envelope_length(2.0 * g, exc, ENVELOPE_TOL)
    if bright:
        if regime_classify(profile, dc) is not Regime.ABOVE:
            raise ValueError("non-zero n0 trace for a pump that is not above threshold")
        windows = (y_window_length(profile, dc), envelope_length(4.0 * g, 0.0, ENVELOPE_TOL), L_V)
    else:
        windows = (0.0, 0.0, L_V)
    per_period = 16
    last = None
    for _ in range(max_refine + 1):
        (V_lo, _), (V_hi, y_hi) = (
            _closedform_once(profile, dc, bright, targets, per_period, order, windows) for order in orders
        )
        err = float(np.max(np.abs(V_hi - V_lo) / np.abs(V_hi)))
        if err <= rtol:
            if bright:
                _check_branch(n0_trace, targets, y_hi / dc.lam)
            out = V_hi.reshape(t_arr.shape)
            return out[()] if out.ndim == 0 else out
        last = err
        per_period *= 2
    raise QuadratureError(f"variance quadrature did not reach rtol={rtol:g}", residual=last)


def variance_closedform_trace(params, dc, profile, n0_trace, rtol=1e-9) -> VarianceTrace:
    T = profile.period(dc.gamma)
    V = variance_closedform(params, dc, profile, n0_trace, n0_trace.t_grid, rtol=rtol)
    V_min, t_m = locate_minimum(n0_trace.t_grid, V, T, profile.breakpoints())
    return VarianceTrace(n0_trace.t_grid, V, V_min, t_m, T, method="closedform")


# --------------------------------------------------------------------------
# pulsed pump, short pulses


def vmin_pulsed(params: SystemParams, dc: DerivedConstants, profile: PulseTrain) -> float:
    """Minimum variance for short rectangular pulses below and near threshold.

    ``exp(-2 eL T1) (1 - exp(-2 gamma T2)) / (1 - exp(-2 gamma T2 - 2 eL T1))``
    with ``eL = fL k / gamma3``.
    """
    if not isinstance(profile, PulseTrain):
        raise TypeError("vmin_pulsed needs a PulseTrain profile")
    if profile.T1 / profile.T2 > 0.1:
        warnings.warn("short-pulse formula assumes T1 << T2", stacklevel=2)
    x = 2.0 * dc.gamma * profile.fL / dc.f_th * profile.T1
    y = 2.0 * dc.gamma * profile.T2
    return math.exp(-x) * -math.expm1(-y) / -math.expm1(-y - x)
