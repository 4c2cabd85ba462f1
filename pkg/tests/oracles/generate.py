"""Reference values computed without the package.

Run ``python tests/oracles/generate.py`` to regenerate; the printed numbers
are frozen in ``tests/oracle_values.py``.  Two independent routes are used:

* closed-form algebra in mpmath (constant pumps, rectangular pulses with a
  dark mode, short-pulse formula);
* brute-force forward integration with an explicit eighth-order solver over many
  periods, in the raw photon number rather than its logarithm, followed by
  bounded scalar minimization on the dense output of the last period.
"""

import math

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

mp.mp.dps = 30

GAMMA = 1.0
GAMMA3 = 25.0
K = 5e-4
LAM = K * K / GAMMA3
F_TH = GAMMA * GAMMA3 / K


def constants():
    return {"lambda_over_gamma": mp.mpf(K) ** 2 / GAMMA3 / GAMMA, "f_th": mp.mpf(GAMMA) * GAMMA3 / mp.mpf(K)}


def pulse_dark_vmin(fbar_ratio, T1, T2):
    """Periodic V for a rectangular pump with no bright mean field.

    During the pulse V relaxes to g/(g+eL) at rate 2(g+eL); between pulses to
    1 at rate 2g.  The minimum sits at the end of the pulse.
    """
    g = mp.mpf(GAMMA)
    T = mp.mpf(T1) + T2
    eL = g * mp.mpf(fbar_ratio) * T / T1
    a = g / (g + eL)
    p = mp.exp(-2 * (g + eL) * T1)
    q = mp.exp(-2 * g * T2)
    # V_end = a + (V0 - a) p, V0 = 1 + (V_end - 1) q
    v_end = (a * (1 - p) + p * (1 - q)) / (1 - p * q)
    return v_end


def pulse_bright_n0(fbar_ratio, T1, T2):
    """n0 at the pulse start: 1/(lam n) obeys x' = -2(eps - g) x + 2, solved piecewise."""
    g = mp.mpf(GAMMA)
    T = mp.mpf(T1) + T2
    eL = g * mp.mpf(fbar_ratio) * T / T1
    a = 2 * (eL - g)
    p_on = mp.exp(-a * T1)
    p_off = mp.exp(2 * g * T2)
    # x1 = x0 p_on + (2/a)(1 - p_on);  x0 = (x1 + 1/g) p_off - 1/g
    x0 = ((2 / a) * (1 - p_on) * p_off + (p_off - 1) / g) / (1 - p_on * p_off)
    return 1 / (mp.mpf(LAM) * x0)


def short_pulse_formula(fbar_ratio, T1, T2):
    g = mp.mpf(GAMMA)
    T = mp.mpf(T1) + T2
    x = 2 * g * mp.mpf(fbar_ratio) * T / T1 * T1
    y = 2 * g * T2
    return mp.exp(-x) * (1 - mp.exp(-y)) / (1 - mp.exp(-y - x))


def forward(pumps, period, n_start, pieces=None, n_periods=60):
    """Integrate (n, w, V) forward and return V_min, t_m, n(t_m), n(0) over the last period.

    ``pumps[i]`` gives the pump on piece ``i``, so a discontinuous pump is
    never evaluated through a rounded modulo near its jumps.
    """

    def rhs(t, z, pump):
        n, w, V = z
        eps = GAMMA * pump(t) / F_TH
        y = LAM * n
        return [
            2 * (eps - GAMMA) * n - 2 * LAM * n * n,
            y - 4 * GAMMA * w,
            -2 * (GAMMA + eps + y) * V + 2 * y + 2 * GAMMA + 4 * GAMMA * w,
        ]

    z = np.array([n_start, LAM * n_start / (4 * GAMMA), 1.0])
    cuts = pieces or [0.0, period]
    for m in range(n_periods):
        sols = []
        for a, b, pump in zip(cuts[:-1], cuts[1:], pumps):
            sol = solve_ivp(
                lambda t, x, pump=pump: rhs(t, x, pump),
                (m * period + a, m * period + b),
                z,
                method="DOP853",
                rtol=1e-12,
                atol=1e-14 * np.maximum(1.0, np.abs(z)),
                dense_output=True,
            )
            z = sol.y[:, -1]
            sols.append((m * period + a, m * period + b, sol))
    t0 = (n_periods - 1) * period
    best = (math.inf, None, None)
    for a, b, sol in sols:
        ts = np.linspace(a, b, 4001)
        V = sol.sol(ts)[2]
        i = int(np.argmin(V))
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
        # the bounded minimizer never probes the interval ends, where a kinked minimum may sit
        cands = [(float(V[i]), float(ts[i]), float(sol.sol(ts[i])[0]))]
        if hi > lo:
            r = minimize_scalar(lambda t: sol.sol(t)[2], bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            cands.append((float(r.fun), float(r.x), float(sol.sol(r.x)[0])))
        best = min([best] + cands)
    n_at_0 = float(sols[0][2].sol(t0)[0])
    return {"V_min": best[0], "t_m": best[1] - t0, "n_min": best[2], "n_at_0": n_at_0}


def harmonic(fbar_ratio, f1_ratio, delta, n_periods=60):
    f0 = fbar_ratio * F_TH
    f1 = f1_ratio * f0
    n_start = max((f0 - F_TH) / K, 0.0)
    return forward([lambda t: f0 + f1 * math.cos(delta * t)], 2 * math.pi / delta, n_start, n_periods=n_periods)


def pulse(fbar_ratio, T1, T2, n_periods=200):
    T = T1 + T2
    fL = fbar_ratio * F_TH * T / T1
    n_start = max((fbar_ratio * F_TH - F_TH) / K, 0.0)
    return forward([lambda t: fL, lambda t: 0.0], T, n_start, pieces=[0.0, T1, T], n_periods=n_periods)


if __name__ == "__main__":
    print("constants", constants())
    for r in (0.9, 1.0):
        print(f"pulse_dark fbar={r} T1=0.01 T2=1:", mp.nstr(pulse_dark_vmin(r, 0.01, 1.0), 16))
    print("pulse_dark fbar=0.9 T1=0.001 T2=1:", mp.nstr(pulse_dark_vmin(0.9, 0.001, 1.0), 16))
    for r in (0.9, 1.0, 1.1):
        print(f"short pulse formula fbar={r} T1=0.01:", mp.nstr(short_pulse_formula(r, 0.01, 1.0), 16))
    print("short pulse formula fbar=0.9 T1=0.001:", mp.nstr(short_pulse_formula(0.9, 0.001, 1.0), 16))
    print("pulse fbar=1.1 exact n0(0):", mp.nstr(pulse_bright_n0(1.1, 0.01, 1.0), 16))
    print("pulse fbar=1.1 forward:", pulse(1.1, 0.01, 1.0))
    for args in [(3.0, 1.2, 2.0), (3.0, 0.4, 2.0), (0.9, 0.5, 2.0), (1.05, 0.0, 2.0), (1.05, 0.75, 2.0), (1.05, 2.0, 2.0)]:
        print("harmonic", args, harmonic(*args))
