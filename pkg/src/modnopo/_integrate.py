"""Period-by-period ODE integration that never steps across a pump discontinuity."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

RTOL = 1e-10
ATOL = 1e-13


def segments(profile, t0: float, t1: float, gamma: float):
    """Split ``[t0, t1]`` at every periodic image of the profile breakpoints."""
    bps = profile.breakpoints()
    if not bps:
        return [(t0, t1)]
    T = profile.period(gamma)
    m = np.arange(np.floor(t0 / T) - 1, np.ceil(t1 / T) + 1)
    cuts = np.sort(np.concatenate([m * T + bp for bp in bps]))
    cuts = cuts[(cuts > t0) & (cuts < t1)]
    pts = np.concatenate(([t0], cuts, [t1]))
    return list(zip(pts[:-1], pts[1:]))


def inside(t, seg):
    """Clip ``t`` strictly inside ``seg`` so one-sided pump limits are used."""
    a, b = seg
    eta = 1e-12 * (b - a)
    return min(max(t, a + eta), b - eta)


def integrate(rhs, x0, profile, gamma, t0, t1, t_eval=None, rtol=RTOL, atol=ATOL):
    """Integrate ``x' = rhs(t, x, seg)`` with explicit Dormand-Prince 5(4) steps.

    ``seg = (a, b)`` is the current smooth segment.  Returns the final state
    and, when ``t_eval`` is given, samples of shape ``(len(x0), len(t_eval))``
    taken from the dense output.
    """
    x = np.asarray(x0, dtype=float)
    samples = None
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        samples = np.full((x.size, t_eval.size), np.nan)
    for a, b in segments(profile, t0, t1, gamma):
        seg = (a, b)
        sol = solve_ivp(
            lambda t, z: rhs(t, z, seg),
            seg,
            x,
            method="RK45",
            dense_output=t_eval is not None,
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise RuntimeError(f"ODE integration failed on [{a}, {b}]: {sol.message}")
        if t_eval is not None:
            sel = (t_eval >= a) & ((t_eval <= b) if b == t1 else (t_eval < b))
            if sel.any():
                samples[:, sel] = sol.sol(t_eval[sel])
        x = sol.y[:, -1]
    return x, samples
