"""Positive-P Monte Carlo for the adiabatically eliminated two-mode equations.

Each trajectory carries four independent complex amplitudes
``alpha1, beta1, alpha2, beta2`` (beta is *not* the conjugate of alpha).
Drift, for mode 1 (mode 2 by exchanging the labels)::

    d alpha1 = [-(gamma + lam alpha2 beta2) alpha1 + eps(t) beta2] dt + dW_a1
    d beta1  = [-(gamma + lam alpha2 beta2) beta1  + eps(t) alpha2] dt + dW_b1

The only non-zero Ito correlations are ``dW_a1 dW_a2 = (eps - lam alpha1 alpha2) dt``
and ``dW_b1 dW_b2 = (eps - lam beta1 beta2) dt``.  Integration is Euler-Maruyama.

Every trajectory draws its noise from its own Philox stream keyed by
``(seed, trajectory index)``, and trajectories are simulated in fixed-size
blocks whose results are concatenated in index order.  Results therefore do
not depend on how many worker processes share the blocks.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .params import DerivedConstants, PumpProfile, Regime, SystemParams, regime_classify

RNG_NAME = "numpy Philox4x64-10, key=(seed, trajectory index), standard_normal"
BLOCK_SIZE = 1024
CHUNK_STEPS = 256
ESCAPE_WARN = 0.01
ESCAPE_FAIL = 0.10


class EnsembleError(RuntimeError):
    """Monte Carlo statistics are unreliable."""


def noise_factorize(eps, lam, prod):
    """Noise coefficients for one correlated pair.

    Returns ``(c, c)`` with ``c = sqrt(d/2)``, ``d = eps - lam*prod``
    (principal branch).  With independent real unit noises ``xi1, xi2`` the
    pair ``W1 = c (xi1 + i xi2)``, ``W2 = c (xi1 - i xi2)`` has ``<W1 W2> = d``
    and ``<W1**2> = <W2**2> = 0``.
    """
    c = np.sqrt(0.5 * (eps - lam * np.asarray(prod, dtype=complex)))
    return c, c


def escape_bound(dc: DerivedConstants) -> float:
    if dc.lam <= 0:
        return math.inf
    return 1e6 * max(1.0, math.sqrt(dc.gamma / dc.lam))


@dataclass
class TrajectoryState:
    alpha1: np.ndarray
    beta1: np.ndarray
    alpha2: np.ndarray
    beta2: np.ndarray
    t: float = 0.0
    escaped: np.ndarray = None

    def __post_init__(self):
        for name in ("alpha1", "beta1", "alpha2", "beta2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=complex))
        if self.escaped is None:
            self.escaped = np.zeros(self.alpha1.shape, dtype=bool)

    @classmethod
    def vacuum(cls, n: int = 1, t: float = 0.0):
        z = np.zeros(n, dtype=complex)
        return cls(z.copy(), z.copy(), z.copy(), z.copy(), t)


def _em_update(a1, b1, a2, b2, eps, g, lam, dt, xi):
    sdt = math.sqrt(dt)
    n1 = a1 * b1
    n2 = a2 * b2
    cP = np.sqrt(0.5 * (eps - lam * (a1 * a2)))
    cQ = np.sqrt(0.5 * (eps - lam * (b1 * b2)))
    wp = (xi[0] + 1j * xi[1]) * sdt
    wm = (xi[0] - 1j * xi[1]) * sdt
    vp = (xi[2] + 1j * xi[3]) * sdt
    vm = (xi[2] - 1j * xi[3]) * sdt
    d1 = g + lam * n2
    d2 = g + lam * n1
    a1n = a1 + (eps * b2 - d1 * a1) * dt + cP * wp
    b1n = b1 + (eps * a2 - d1 * b1) * dt + cQ * vp
    a2n = a2 + (eps * b1 - d2 * a2) * dt + cP * wm
    b2n = b2 + (eps * a1 - d2 * b2) * dt + cQ * vm
    return a1n, b1n, a2n, b2n


def _escaped(a1, b1, a2, b2, bound):
    with np.errstate(invalid="ignore", over="ignore"):
        big = np.zeros(a1.shape, dtype=bool)
        for z in (a1, b1, a2, b2):
            big |= ~np.isfinite(z) | (np.abs(z) > bound)
    return big


def sde_step(state: TrajectoryState, params: SystemParams, dc: DerivedConstants, profile: PumpProfile, dt, noise):
    """One Ito Euler-Maruyama step.

    ``noise`` holds four standard normal reals per trajectory, shape ``(4,)``
    or ``(4, n)``: two for the alpha pair and two for the beta pair.
    Escaped trajectories are left untouched.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = np.asarray(noise, dtype=float)
    if xi.shape[0] != 4:
        raise ValueError("noise must supply 4 normal draws per trajectory")
    eps = dc.gamma * float(profile.amplitude(state.t)) / dc.f_th
    with np.errstate(invalid="ignore", over="ignore"):
        new = _em_update(state.alpha1, state.beta1, state.alpha2, state.beta2, eps, dc.gamma, dc.lam, dt, xi)
    frozen = state.escaped
    old = (state.alpha1, state.beta1, state.alpha2, state.beta2)
    new = [np.where(frozen, o, n) for o, n in zip(old, new)]
    escaped = frozen | _escaped(*new, escape_bound(dc))
    return TrajectoryState(*new, t=state.t + dt, escaped=escaped)


# --------------------------------------------------------------------------
# ensemble harness


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([index, seed], dtype=np.uint64)))


@dataclass(frozen=True)
class _Schedule:
    dt: float
    n_steps: int
    record_steps: tuple


def make_schedule(t_grid, dt: float) -> _Schedule:
    """Shrink ``dt`` so every grid time is an integer number of steps."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ValueError("t_grid needs at least two times")
    h = np.diff(t_grid)
    if np.any(h <= 0) or np.ptp(h) > 1e-9 * h[0]:
        raise ValueError("t_grid must be uniformly spaced and increasing")
    h = float(t_grid[1] - t_grid[0])
    sub = math.ceil(h / dt - 1e-9)
    dt_eff = h / sub
    offset = t_grid[0] / h
    if t_grid[0] < 0 or abs(offset - round(offset)) > 1e-6:
        raise ValueError("t_grid must start at a non-negative multiple of its spacing")
    steps = tuple(int(round(offset)) * sub + i * sub for i in range(t_grid.size))
    return _Schedule(dt=dt_eff, n_steps=steps[-1], record_steps=steps)


def default_grid(profile: PumpProfile, gamma: float, t_transient: float = 8.0, n_points: int = 64, n_periods: int = 1):
    """Uniform sampling of ``n_periods`` pump periods starting on a period boundary after the transient."""
    T = profile.period(gamma)
    start = math.ceil(t_transient / T - 1e-12) * T
    return start + np.arange(n_points * n_periods + 1) * (T / n_points)


def _simulate_block(job):
    dc, profile, seed, first, count, sched, bound = job
    g, lam, dt = dc.gamma, dc.lam, sched.dt
    rngs = [trajectory_rng(seed, first + i) for i in range(count)]
    a1 = np.zeros(count, complex)
    b1 = np.zeros(count, complex)
    a2 = np.zeros(count, complex)
    b2 = np.zeros(count, complex)
    rec = np.empty((count, len(sched.record_steps), 4), dtype=complex)
    escaped = np.zeros(count, dtype=bool)
    record_at = {s: i for i, s in enumerate(sched.record_steps)}
    if 0 in record_at:
        rec[:, record_at[0], :] = 0.0
    step = 0
    with np.errstate(invalid="ignore", over="ignore"):
        while step < sched.n_steps:
            k = min(CHUNK_STEPS, sched.n_steps - step)
            xi = np.stack([r.standard_normal((CHUNK_STEPS, 4)) for r in rngs])[:, :k, :]
            xi = np.ascontiguousarray(xi.transpose(1, 2, 0))
            eps_all = g * profile.amplitude((step + np.arange(k)) * dt) / dc.f_th
            for j in range(k):
                a1, b1, a2, b2 = _em_update(a1, b1, a2, b2, float(eps_all[j]), g, lam, dt, xi[j])
                step += 1
                i = record_at.get(step)
                if i is not None:
                    rec[:, i, 0] = a1
                    rec[:, i, 1] = b1
                    rec[:, i, 2] = a2
                    rec[:, i, 3] = b2
                    escaped |= _escaped(a1, b1, a2, b2, bound)
            escaped |= _escaped(a1, b1, a2, b2, bound)
            # frozen trajectories restart from zero; they are excluded from statistics anyway
            if escaped.any():
                for z in (a1, b1, a2, b2):
                    z[escaped] = 0.0
    return rec, escaped


def _mean_se(x):
    """Mean over trajectories and its standard error (real and imaginary parts separately)."""
    n = x.shape[0]
    m = x.mean(axis=0)
    if n < 2:
        return m, np.zeros(m.shape, complex)
    se = (x.real.std(axis=0, ddof=1) + 1j * x.imag.std(axis=0, ddof=1)) / math.sqrt(n)
    return m, se


def derived_moments(samples):
    """Per-trajectory moment estimators from raw amplitudes of shape ``(n, t, 4)``."""
    a1, b1, a2, b2 = (samples[..., i] for i in range(4))
    n1 = a1 * b1
    n2 = a2 * b2
    n_plus = n1 + n2
    R = (a1 - b2) * (b1 - a2)
    return {
        "n1": n1,
        "n2": n2,
        "n_plus": n_plus,
        "R": R,
        "alpha12": a1 * a2,
        "beta12": b1 * b2,
        "Z": (n1 - n2) ** 2 + n_plus,
        "n_plus_sq": n_plus * n_plus,
        "n_plus_R": n_plus * R,
    }


@dataclass
class EnsembleStats:
    """Ensemble moments on ``t_grid``.

    ``se`` maps each moment name to a complex array whose real and imaginary
    parts are the standard errors of the real and imaginary parts of the
    mean.  ``samples`` keeps the raw amplitudes of the kept trajectories.
    """

    t_grid: np.ndarray
    means: dict
    se: dict
    n_trajectories: int
    n_escaped: int
    seed: int
    dt: float
    rng: str = RNG_NAME
    experimental: bool = False
    samples: np.ndarray = field(default=None, repr=False)

    @property
    def mean_n_plus(self):
        return self.means["n_plus"]

    @property
    def mean_R(self):
        return self.means["R"]

    @property
    def mean_cross(self):
        return self.means["alpha12"], self.means["beta12"]

    @property
    def V(self):
        return 1.0 + self.means["R"].real

    @property
    def se_V(self):
        return self.se["R"].real

    @property
    def escaped_fraction(self) -> float:
        return self.n_escaped / self.n_trajectories

    def metadata(self) -> dict:
        return {
            "seed": int(self.seed),
            "n_traj": int(self.n_trajectories),
            "n_kept": int(self.n_trajectories - self.n_escaped),
            "escaped": int(self.n_escaped),
            "dt": float(self.dt),
            "rng": self.rng,
            "experimental": bool(self.experimental),
        }

    def records(self):
        for i, t in enumerate(self.t_grid):
            yield {
                "t": float(t),
                "V": float(self.V[i]),
                "SE_V": float(self.se_V[i]),
                "n_plus": float(self.means["n_plus"][i].real),
                "SE_n": float(self.se["n_plus"][i].real),
                "R_imag": float(self.means["R"][i].imag),
                "SE_R_imag": float(self.se["R"][i].imag),
            }

    def to_json_dict(self, extra_metadata=None) -> dict:
        meta = self.metadata()
        if extra_metadata:
            meta.update(extra_metadata)
        return {"metadata": meta, "records": list(self.records())}

    def to_json(self, path, extra_metadata=None, extra=None):
        doc = self.to_json_dict(extra_metadata)
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def ensemble_run(
    params: SystemParams,
    dc: DerivedConstants,
    profile: PumpProfile,
    n_traj: int,
    seed: int,
    t_grid=None,
    dt: float = 1e-3,
    t_transient: float = 8.0,
    n_points: int = 64,
    n_periods: int = 1,
    workers: int = 1,
    keep_samples: bool = True,
) -> EnsembleStats:
    """Integrate ``n_traj`` trajectories from vacuum and collect moments on ``t_grid``.

    Without an explicit grid, ``n_points`` samples per period are recorded
    over ``n_periods`` periods after a transient of at least ``t_transient``.
    """
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    regime = regime_classify(profile, dc)
    experimental = regime is Regime.ABOVE
    if experimental:
        warnings.warn("positive-P runs above threshold are experimental", stacklevel=2)
    if t_grid is None:
        t_grid = default_grid(profile, dc.gamma, t_transient, n_points, n_periods)
    t_grid = np.asarray(t_grid, dtype=float)
    sched = make_schedule(t_grid, dt)
    bound = escape_bound(dc)
    jobs = [
        (dc, profile, int(seed), first, min(BLOCK_SIZE, n_traj - first), sched, bound)
        for first in range(0, n_traj, BLOCK_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_block, jobs))
    else:
        results = [_simulate_block(job) for job in jobs]
    rec = np.concatenate([r[0] for r in results])
    escaped = np.concatenate([r[1] for r in results])
    n_escaped = int(escaped.sum())
    frac = n_escaped / n_traj
    if frac > ESCAPE_FAIL:
        raise EnsembleError(f"{frac:.1%} of trajectories escaped; statistics unreliable")
    if frac > ESCAPE_WARN:
        warnings.warn(f"{frac:.1%} of trajectories escaped and were excluded", stacklevel=2)
    kept = rec[~escaped]
    moments = derived_moments(kept)
    means, se = {}, {}
    for name, arr in moments.items():
        means[name], se[name] = _mean_se(arr)
    return EnsembleStats(
        t_grid=t_grid,
        means=means,
        se=se,
        n_trajectories=n_traj,
        n_escaped=n_escaped,
        seed=int(seed),
        dt=sched.dt,
        experimental=experimental,
        samples=kept if keep_samples else None,
    )


def variance_at_theta(stats: EnsembleStats, theta):
    """Two-mode variance at quadrature phase ``theta`` (0 is the squeezed optimum)."""
    ph = np.exp(1j * np.asarray(theta, dtype=float))
    m = stats.means
    v = 1.0 + m["n_plus"] - m["alpha12"] * ph - m["beta12"] / ph
    return v.real


# --------------------------------------------------------------------------
# moment hierarchy check


@dataclass
class ResidualReport:
    """Finite-difference time derivatives of ensemble moments minus the exact moment equations.

    Residuals and standard errors refer to real parts, evaluated at the
    interior grid points ``t``.
    """

    t: np.ndarray
    residual: dict
    se: dict
    fraction_within: dict
    threshold: float = 3.0
    required_fraction: float = 0.95

    @property
    def passed(self) -> bool:
        return all(self.fraction_within[k] >= self.required_fraction for k in ("n_plus", "R"))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "threshold_se": self.threshold,
            "required_fraction": self.required_fraction,
            "fraction_within": {k: float(v) for k, v in self.fraction_within.items()},
            "max_abs_normalized": {
                k: float(np.max(_normalized(self.residual[k], self.se[k]), initial=0.0)) for k in self.residual
            },
        }


def _normalized(res, se):
    res = np.abs(res)
    out = np.zeros(res.shape)
    nz = se > 0
    out[nz] = res[nz] / se[nz]
    out[~nz & (res > 0)] = np.inf
    return out


def moment_residual_check(
    params: SystemParams,
    dc: DerivedConstants,
    profile: PumpProfile,
    stats: EnsembleStats,
    threshold: float = 3.0,
    min_points_per_period: int = 16,
) -> ResidualReport:
    """Compare ensemble derivatives with the closed moment equations.

    Checks, trajectory by trajectory so standard errors include all
    correlations::

        d<n+>/dt = (2eps - 2gamma - lam)<n+> - lam<n+^2> - 2eps<R> + lam<Z>
        d<R>/dt  = -(2eps + 2gamma + lam)<R> - lam<n+ R> - 2eps + lam<Z>
        d<Z>/dt  = -4gamma<Z> + 2gamma<n+>
    """
    if stats.samples is None:
        raise ValueError("residual check needs per-trajectory samples")
    t = np.asarray(stats.t_grid, dtype=float)
    h = np.diff(t)
    if t.size < 3 or np.ptp(h) > 1e-9 * h[0]:
        raise ValueError("residual check needs a uniform grid of at least 3 points")
    h = float(h[0])
    if profile.period(dc.gamma) / h < min_points_per_period - 1e-9:
        raise ValueError(f"grid too coarse: fewer than {min_points_per_period} points per period")
    g, lam = dc.gamma, dc.lam
    m = derived_moments(stats.samples)
    eps = g * profile.amplitude(t[1:-1]) / dc.f_th

    def fd(x):
        return (x[:, 2:] - x[:, :-2]) / (2.0 * h)

    def mid(x):
        return x[:, 1:-1]

    n_p, R, Z = m["n_plus"], m["R"], m["Z"]
    rhs = {
        "n_plus": (2 * eps - 2 * g - lam) * mid(n_p) - lam * mid(m["n_plus_sq"]) - 2 * eps * mid(R) + lam * mid(Z),
        "R": -(2 * eps + 2 * g + lam) * mid(R) - lam * mid(m["n_plus_R"]) - 2 * eps + lam * mid(Z),
        "Z": -4 * g * mid(Z) + 2 * g * mid(n_p),
    }
    lhs = {"n_plus": fd(n_p), "R": fd(R), "Z": fd(Z)}
    residual, se, within = {}, {}, {}
    for k in rhs:
        mean, err = _mean_se((lhs[k] - rhs[k]).real)
        residual[k] = mean
        se[k] = err.real
        within[k] = float(np.mean(_normalized(mean, se[k]) <= threshold))
    return ResidualReport(t=t[1:-1], residual=residual, se=se, fraction_within=within, threshold=threshold)
