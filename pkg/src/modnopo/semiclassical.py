"""Periodic mean photon number of the subharmonic modes.

Two independent routes are provided: quadrature of the over-transient
solution (general profile, and the explicit harmonic-pump integrand), and
integration of the noiseless phase-locked mean-field equation

    dn/dt = 2 (eps(t) - gamma) n - 2 lambda n**2

to its periodic attractor.  Internally both work with ``y = lambda * n``,
which is of order gamma and independent of the tiny nonlinearity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from . import _integrate
from .params import (
    DerivedConstants,
    Harmonic,
    PumpProfile,
    Regime,
    SystemParams,
    derive_constants,
    regime_classify,
)
from .quadrature import PanelGrid, QuadratureError, envelope_length, panel_edges

DEFAULT_GRID = 512
ENVELOPE_TOL = 1e-12


class NoNontrivialBranch(ValueError):
    """The pump sits inside the critical band, where no bright solution exists."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def resolved_size(profile: PumpProfile, gamma: float = 1.0, n_min: int = DEFAULT_GRID, spacing: float = 0.02) -> int:
    """Grid size giving at most ``spacing/gamma`` between samples, and at least ``n_min``."""
    return max(n_min, math.ceil(profile.period(gamma) * gamma / spacing))


def time_grid(profile: PumpProfile, gamma: float = 1.0, n: int = DEFAULT_GRID) -> np.ndarray:
    """Sample times covering one period ``[0, T)``.

    Uniform for smooth pumps.  A pulse train gets a quarter of the samples
    inside the pulse, so both edges are grid points.
    """
    if n < 4:
        raise ValueError("time grid needs at least 4 points")
    T = profile.period(gamma)
    bps = profile.breakpoints()
    if not bps:
        return np.linspace(0.0, T, n, endpoint=False)
    T1 = profile.T1
    n_on = max(n // 4, 2)
    return np.concatenate(
        [
            np.linspace(0.0, T1, n_on, endpoint=False),
            np.linspace(T1, T, n - n_on, endpoint=False),
        ]
    )


@dataclass
class SemiclassicalTrace:
    t_grid: np.ndarray
    n0: np.ndarray
    converged: bool
    periodicity_residual: float
    period: float
    regime: Regime
    method: str = "ode"
    info: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.n0)

    def n_out(self, gamma: float) -> np.ndarray:
        return 2.0 * gamma * self.n0

    def rows(self, gamma_out: float):
        for t, n in zip(self.t_grid, self.n0):
            yield float(t), float(n), float(2.0 * gamma_out * n)

    def to_csv(self, path, gamma_out: float = 1.0, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "n0", "n0_out"])
            for row in self.rows(gamma_out):
                w.writerow([repr(x) for x in row])


def _zero_trace(profile, dc, t_grid, regime, method):
    return SemiclassicalTrace(
        t_grid=np.asarray(t_grid, dtype=float),
        n0=np.zeros(len(t_grid)),
        converged=True,
        periodicity_residual=0.0,
        period=profile.period(dc.gamma),
        regime=regime,
        method=method,
    )


# --------------------------------------------------------------------------
# quadrature route


def _eps_antiderivative(profile, dc, s):
    return dc.gamma * profile.integral(s) / dc.f_th


def _eps_max(profile, dc):
    if isinstance(profile, Harmonic):
        peak = abs(profile.f0) + profile.f1
    else:
        peak = float(np.max(np.abs(profile.amplitude(np.linspace(0, profile.period(dc.gamma), 64)))))
        peak = max(peak, abs(profile.mean()), getattr(profile, "fL", 0.0))
    return dc.gamma * peak / dc.f_th


def _panel_setup(profile, dc, a, b, targets, per_period=16):
    T = profile.period(dc.gamma)
    rate = 2.0 * (_eps_max(profile, dc) + dc.gamma)
    return panel_edges(
        a, b, T, per_period, profile.breakpoints(), targets=targets, max_length=2.0 / rate
    )


def y_window_length(profile, dc, tol=ENVELOPE_TOL) -> float:
    """Truncation length of the photon-number integral."""
    gain = dc.gamma * (profile.mean() / dc.f_th - 1.0)
    exc = 2.0 * dc.gamma * profile.excursion() / dc.f_th
    return envelope_length(2.0 * gain, exc, tol) + profile.period(dc.gamma)


def y_on_panels(profile, dc, grid: PanelGrid, start: float):
    """``y = lambda n0`` at grid edges and nodes, accumulated from ``start``.

    Values are meaningful only a full truncation length after ``start``.
    """
    g = dc.gamma
    Ke = 2.0 * (_eps_antiderivative(profile, dc, grid.edges) - g * grid.edges)
    Kn = 2.0 * (_eps_antiderivative(profile, dc, grid.nodes) - g * grid.nodes)
    # offset K for numerical range; only differences matter
    ref = Ke[-1]
    Qe, Qn = grid.exp_weighted(Ke - ref, Kn - ref, np.full(grid.nodes.shape, 2.0))
    with np.errstate(divide="ignore"):
        return 1.0 / Qe, 1.0 / Qn


def _y_quadrature(profile, dc, t, rtol=1e-10, orders=(12, 20), max_refine=4):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    L = y_window_length(profile, dc)
    a, b = float(t.min()) - L, float(t.max())
    if b <= a:
        b = a + 1.0
    per_period = 16
    last = None
    for _ in range(max_refine + 1):
        edges = _panel_setup(profile, dc, a, b, t, per_period)
        idx = np.searchsorted(edges, t)
        results = []
        for order in orders:
            ye, _ = y_on_panels(profile, dc, PanelGrid(edges, order), a)
            results.append(ye[idx])
        err = np.max(np.abs(results[1] - results[0]) / np.abs(results[1]))
        if err <= rtol:
            return results[1], err
        last = err
        per_period *= 2
    raise QuadratureError(f"photon-number quadrature did not reach rtol={rtol:g}", residual=last)


def photon_number_quadrature(params: SystemParams, dc: DerivedConstants, profile: PumpProfile, t, rtol=1e-10):
    """Over-transient photon number n0(t) from the improper-integral formula.

    Zero below threshold; raises :class:`NoNontrivialBranch` inside the
    critical band.
    """
    regime = regime_classify(profile, dc)
    t_arr = np.asarray(t, dtype=float)
    if regime is Regime.BELOW:
        out = np.zeros(t_arr.shape)
        return out[()] if out.ndim == 0 else out
    if regime is Regime.CRITICAL:
        raise NoNontrivialBranch("pump is at threshold: no nontrivial branch")
    y, _ = _y_quadrature(profile, dc, t_arr.ravel(), rtol=rtol)
    out = (y / dc.lam).reshape(t_arr.shape)
    return out[()] if out.ndim == 0 else out


def photon_number_harmonic(params: SystemParams, dc: DerivedConstants, profile: Harmonic, t, rtol=1e-11):
    """n0(t) for ``f = f0 + f1 cos(delta t)`` from the explicit sine-difference integrand.

    Uses adaptive Gauss-Kronrod (``scipy.integrate.quad_vec``) over the
    truncated half line, vectorized across the requested times.
    """
    if not isinstance(profile, Harmonic):
        raise TypeError("photon_number_harmonic needs a Harmonic profile")
    regime = regime_classify(profile, dc)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if regime is Regime.BELOW:
        out = np.zeros(np.shape(t))
        return out[()] if out.ndim == 0 else out
    if regime is Regime.CRITICAL:
        raise NoNontrivialBranch("pump is at threshold: no nontrivial branch")
    g = dc.gamma
    ratio = profile.f0 / dc.f_th
    amp = 2.0 * g * profile.f1 / (profile.delta * dc.f_th)
    decay = 2.0 * g * (ratio - 1.0)
    L = (math.log(1.0 / ENVELOPE_TOL) + 2.0 * amp) / decay
    s0 = np.sin(profile.delta * t_arr)
    # largest possible sine-difference exponent for each t, factored out
    shift = amp * (1.0 - s0)

    def integrand(tau):
        return np.exp(decay * tau + amp * (np.sin(profile.delta * (t_arr + tau)) - s0) - shift)

    T = 2.0 * math.pi / profile.delta
    pts = -T * np.arange(1, int(L // T) + 1)
    pts = tuple(pts[pts > -L])
    val, err = quad_vec(integrand, -L, 0.0, epsabs=0.0, epsrel=rtol, norm="max", points=pts or None, limit=20000)
    if np.any(val <= 0) or err > 1e3 * rtol * np.max(val):
        raise QuadratureError("harmonic photon-number quadrature failed", residual=err)
    n0 = np.exp(-shift) / (2.0 * dc.lam * val)
    out = n0.reshape(np.shape(t))
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# mean-field ODE route


def _log_rhs(profile, dc):
    g = dc.gamma

    def rhs(t, z, seg):
        eps = g * float(profile.amplitude(_integrate.inside(t, seg))) / dc.f_th
        s, eta = z
        # trial stages may overshoot; the attractor itself never gets near the cap
        y = math.exp(min(s, 700.0))
        return (2.0 * (eps - g) - 2.0 * y, -2.0 * y * eta)

    return rhs


def periodic_log_y(profile, dc, s_init, rtol=_integrate.RTOL, tol=1e-11, max_iter=60):
    """Periodic value of ``s = ln(lambda n)`` at t=0, by Newton shooting.

    The period map is contracting on the bright branch; Newton steps on
    ``P(s) - s`` use the variational equation and are capped at 10 in ``s``.
    """
    T = profile.period(dc.gamma)
    rhs = _log_rhs(profile, dc)
    s = float(s_init)
    history = []
    for _ in range(max_iter):
        (sT, eta), _ = _integrate.integrate(rhs, (s, 1.0), profile, dc.gamma, 0.0, T, rtol=rtol)
        g = sT - s
        history.append(abs(g))
        if abs(g) < tol:
            return s, history
        slope = eta - 1.0
        step = -g / slope if slope < 0 else g
        s += max(-10.0, min(10.0, step))
    raise ConvergenceError("mean-field shooting did not converge", residual=history[-1])


def meanfield_ode(
    params: SystemParams,
    dc: DerivedConstants,
    profile: PumpProfile,
    grid=None,
    n_grid: int = DEFAULT_GRID,
    n_init=None,
    rtol: float = _integrate.RTOL,
    max_iter: int = 60,
) -> SemiclassicalTrace:
    """Integrate the noiseless mean-field equation onto its periodic attractor.

    ``n_init`` defaults to ``max((fbar - f_th)/k, 1)``; ``n_init=0`` is the
    dark fixed point and returns a zero trace.
    """
    t_grid = time_grid(profile, dc.gamma, n_grid) if grid is None else np.asarray(grid, float)
    regime = regime_classify(profile, dc)
    if n_init is not None and n_init < 0:
        raise ValueError("n_init must be non-negative")
    if regime is not Regime.ABOVE or n_init == 0:
        return _zero_trace(profile, dc, t_grid, regime, "ode")
    if n_init is None:
        n_init = max((profile.mean() - dc.f_th) / params.k, 1.0)
    s0, history = periodic_log_y(profile, dc, math.log(dc.lam * n_init), rtol=rtol, max_iter=max_iter)
    T = profile.period(dc.gamma)
    t_eval = np.concatenate([t_grid, [T]])
    rhs = _log_rhs(profile, dc)
    _, samples = _integrate.integrate(rhs, (s0, 1.0), profile, dc.gamma, 0.0, T, t_eval=t_eval, rtol=rtol)
    s = samples[0]
    n0 = np.exp(s[:-1]) / dc.lam
    residual = abs(math.expm1(s[-1] - s[0])) * n0[0] / n0.max()
    return SemiclassicalTrace(
        t_grid=t_grid,
        n0=n0,
        converged=residual < 1e-8,
        periodicity_residual=residual * n0.max(),
        period=T,
        regime=regime,
        method="ode",
        info={"log_lambda_n_at_0": s0, "shooting_residuals": history},
    )


def quadrature_trace(params, dc, profile, grid=None, n_grid: int = DEFAULT_GRID) -> SemiclassicalTrace:
    t_grid = time_grid(profile, dc.gamma, n_grid) if grid is None else np.asarray(grid, float)
    regime = regime_classify(profile, dc)
    if regime is not Regime.ABOVE:
        return _zero_trace(profile, dc, t_grid, regime, "quadrature")
    T = profile.period(dc.gamma)
    y, err = _y_quadrature(profile, dc, np.concatenate([t_grid, [T]]))
    n0 = y / dc.lam
    residual = abs(n0[-1] - n0[0])
    return SemiclassicalTrace(
        t_grid=t_grid,
        n0=n0[:-1],
        converged=residual / n0.max() < 1e-8,
        periodicity_residual=residual,
        period=T,
        regime=regime,
        method="quadrature",
        info={"quadrature_error": err},
    )


def semiclassical_trace(params, profile, n_grid: int = DEFAULT_GRID, method: str = "ode", dc=None):
    """Convenience wrapper returning the periodic n0 trace by either route."""
    dc = dc or derive_constants(params)
    if method == "ode":
        return meanfield_ode(params, dc, profile, n_grid=n_grid)
    if method == "quadrature":
        return quadrature_trace(params, dc, profile, n_grid=n_grid)
    raise ValueError(f"unknown method {method!r}")
