"""Physical parameters, derived constants and pump profiles.

Rates are expressed in units of the subharmonic decay rate by convention
(``gamma=1``), but every formula keeps ``gamma`` explicit so other unit
choices work too.  Pump amplitudes share the units of the threshold
amplitude ``f_th``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

import numpy as np

#: relative half-width of the band around threshold classified as critical
CRITICAL_BAND = 1e-6

#: minimum gamma3/gamma for which adiabatic elimination of the pump is trusted
ADIABATIC_RATIO = 10.0


class ConfigError(ValueError):
    """Invalid parameter or configuration value."""


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
    return value


def _nonnegative(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be a non-negative finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class SystemParams:
    """Cavity decay rates and down-conversion coupling.

    Parameters
    ----------
    gamma : float
        Decay rate of both subharmonic modes.
    gamma3 : float
        Decay rate of the pump mode, eliminated adiabatically.
    k : float
        Nonlinear coupling constant.
    """

    gamma: float = 1.0
    gamma3: float = 25.0
    k: float = 5e-4

    def __post_init__(self):
        for name in ("gamma", "gamma3", "k"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        if not self.adiabatic_valid:
            warnings.warn(
                f"gamma3/gamma = {self.gamma3 / self.gamma:g} < {ADIABATIC_RATIO:g}; "
                "adiabatic elimination of the pump mode is questionable",
                stacklevel=3,
            )

    @property
    def adiabatic_valid(self) -> bool:
        return self.gamma3 / self.gamma >= ADIABATIC_RATIO

    @classmethod
    def from_ratios(cls, k_over_gamma: float, gamma3_over_gamma: float, gamma: float = 1.0):
        return cls(gamma=gamma, gamma3=gamma3_over_gamma * gamma, k=k_over_gamma * gamma)


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float
    lam: float
    f_th: float
    lambda_over_gamma: float
    #: converts a pump amplitude into the effective parametric gain, k/gamma3
    eps_scale: float

    @property
    def linear_theory_small(self) -> bool:
        """True when lambda/gamma is small enough for the linearized theory."""
        return self.lambda_over_gamma < 1e-2


def derive_constants(params: SystemParams) -> DerivedConstants:
    """Effective nonlinearity ``k**2/gamma3`` and threshold ``gamma*gamma3/k``."""
    if not isinstance(params, SystemParams):
        raise ConfigError("derive_constants expects a SystemParams instance")
    lam = params.k**2 / params.gamma3
    return DerivedConstants(
        gamma=params.gamma,
        lam=lam,
        f_th=params.gamma * params.gamma3 / params.k,
        lambda_over_gamma=lam / params.gamma,
        eps_scale=params.k / params.gamma3,
    )


class PumpProfile:
    """Base class for time-periodic, real pump amplitudes f(t)."""

    kind = "abstract"

    def period(self, gamma: float = 1.0) -> float:
        raise NotImplementedError

    def amplitude(self, t):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def integral(self, t):
        """Exact antiderivative ``int_0^t f(s) ds`` (vectorized)."""
        raise NotImplementedError

    def excursion(self) -> float:
        """Peak-to-peak range of ``int_0^t (f - mean) ds`` over one period."""
        raise NotImplementedError

    def breakpoints(self) -> tuple:
        """Times in ``[0, T)`` where f jumps."""
        return ()

    def as_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(PumpProfile):
    f0: float

    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "f0", _nonnegative("f0", self.f0))

    def period(self, gamma: float = 1.0) -> float:
        # any period is valid for a constant pump; use the natural time unit
        return 1.0 / gamma

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.f0)
        return out[()] if out.ndim == 0 else out

    def mean(self) -> float:
        return self.f0

    def integral(self, t):
        return self.f0 * np.asarray(t, dtype=float)

    def excursion(self) -> float:
        return 0.0

    def as_dict(self) -> dict:
        return {"profile": self.kind, "f0": self.f0}


@dataclass(frozen=True)
class Harmonic(PumpProfile):
    """``f(t) = f0 + f1*cos(delta*t)``."""

    f0: float
    f1: float
    delta: float

    kind = "harmonic"

    def __post_init__(self):
        object.__setattr__(self, "f0", _nonnegative("f0", self.f0))
        object.__setattr__(self, "f1", _nonnegative("f1", self.f1))
        object.__setattr__(self, "delta", _positive("delta", self.delta))

    def period(self, gamma: float = 1.0) -> float:
        return 2.0 * math.pi / self.delta

    def amplitude(self, t):
        return self.f0 + self.f1 * np.cos(self.delta * np.asarray(t, dtype=float))

    def mean(self) -> float:
        return self.f0

    def integral(self, t):
        t = np.asarray(t, dtype=float)
        return self.f0 * t + self.f1 / self.delta * np.sin(self.delta * t)

    def excursion(self) -> float:
        return 2.0 * self.f1 / self.delta

    def as_dict(self) -> dict:
        return {"profile": self.kind, "f0": self.f0, "f1": self.f1, "delta": self.delta}


@dataclass(frozen=True)
class PulseTrain(PumpProfile):
    """Rectangular pulses of height ``fL``, on for ``T1`` then off for ``T2``.

    The pulse occupies the half-open interval ``[0, T1)`` of each period.
    """

    fL: float
    T1: float
    T2: float

    kind = "pulse"

    def __post_init__(self):
        object.__setattr__(self, "fL", _nonnegative("fL", self.fL))
        object.__setattr__(self, "T1", _positive("T1", self.T1))
        object.__setattr__(self, "T2", _positive("T2", self.T2))

    def period(self, gamma: float = 1.0) -> float:
        return self.T1 + self.T2

    def _split(self, t):
        T = self.T1 + self.T2
        t = np.asarray(t, dtype=float)
        m = np.floor(t / T)
        r = t - m * T
        # guard against r == T from rounding
        wrap = r >= T
        m = np.where(wrap, m + 1, m)
        r = np.where(wrap, r - T, r)
        return m, r

    def amplitude(self, t):
        _, r = self._split(t)
        out = np.where(r < self.T1, self.fL, 0.0)
        return out[()] if out.ndim == 0 else out

    def mean(self) -> float:
        return self.fL * self.T1 / (self.T1 + self.T2)

    def integral(self, t):
        m, r = self._split(t)
        return self.fL * (m * self.T1 + np.minimum(r, self.T1))

    def excursion(self) -> float:
        return self.fL * self.T1 * self.T2 / (self.T1 + self.T2)

    def breakpoints(self) -> tuple:
        return (0.0, self.T1)

    def as_dict(self) -> dict:
        return {"profile": self.kind, "fL": self.fL, "T1": self.T1, "T2": self.T2}


def pump_amplitude(profile: PumpProfile, t):
    return profile.amplitude(t)


def pump_mean(profile: PumpProfile) -> float:
    """Period-averaged pump amplitude."""
    return profile.mean()


def epsilon_of_t(profile: PumpProfile, dc: DerivedConstants, t):
    """Effective parametric gain ``f(t) k / gamma3``.

    Written as ``gamma * f/f_th`` so that ``f == f_th`` maps to exactly ``gamma``.
    """
    return dc.gamma * (profile.amplitude(t) / dc.f_th)


class Regime(str, enum.Enum):
    BELOW = "below"
    ABOVE = "above"
    CRITICAL = "critical"


def regime_classify(profile: PumpProfile, dc: DerivedConstants, band: float = CRITICAL_BAND) -> Regime:
    fbar = profile.mean()
    if fbar < dc.f_th * (1.0 - band):
        return Regime.BELOW
    if fbar > dc.f_th * (1.0 + band):
        return Regime.ABOVE
    return Regime.CRITICAL


# --------------------------------------------------------------------------
# flat key=value configuration

Scalar = Union[str, float, int]


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` text file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def _get_float(cfg: Mapping[str, Scalar], key: str, default=None) -> float:
    if key not in cfg or cfg[key] in (None, ""):
        if default is None:
            raise ConfigError(f"missing required parameter {key!r}")
        return float(default)
    try:
        return float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r}: cannot parse {cfg[key]!r} as a number") from None


def params_from_mapping(cfg: Mapping[str, Scalar]) -> SystemParams:
    return SystemParams(
        gamma=_get_float(cfg, "gamma", 1.0),
        gamma3=_get_float(cfg, "gamma3"),
        k=_get_float(cfg, "k"),
    )


def profile_from_mapping(cfg: Mapping[str, Scalar], f_th: float = 1.0) -> PumpProfile:
    """Build a pump profile from config keys.

    With ``amplitude_unit = threshold`` the amplitudes ``f0, f1, fL`` are read
    as multiples of ``f_th``.
    """
    kind = str(cfg.get("profile", "constant")).strip().lower()
    unit = str(cfg.get("amplitude_unit", "absolute")).strip().lower()
    if unit not in ("absolute", "threshold"):
        raise ConfigError(f"amplitude_unit must be 'absolute' or 'threshold', got {unit!r}")
    scale = f_th if unit == "threshold" else 1.0
    if kind == "constant":
        return Constant(f0=scale * _get_float(cfg, "f0"))
    if kind == "harmonic":
        return Harmonic(
            f0=scale * _get_float(cfg, "f0"),
            f1=scale * _get_float(cfg, "f1", 0.0),
            delta=_get_float(cfg, "delta"),
        )
    if kind == "pulse":
        return PulseTrain(
            fL=scale * _get_float(cfg, "fL"),
            T1=_get_float(cfg, "T1"),
            T2=_get_float(cfg, "T2"),
        )
    raise ConfigError(f"unknown profile {kind!r}; expected constant, harmonic or pulse")
