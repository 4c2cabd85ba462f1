"""Entangled light from a nondegenerate OPO with a periodically modulated pump.

Semiclassical photon numbers, linearized two-mode variances, closed-form
special cases and positive-P Monte Carlo checks.
"""

__version__ = "0.1.0"

from .params import (
    Constant,
    ConfigError,
    DerivedConstants,
    Harmonic,
    PulseTrain,
    Regime,
    SystemParams,
    derive_constants,
    epsilon_of_t,
    pump_amplitude,
    pump_mean,
    regime_classify,
)
from .semiclassical import (
    SemiclassicalTrace,
    meanfield_ode,
    photon_number_harmonic,
    photon_number_quadrature,
    semiclassical_trace,
    time_grid,
)
from .variance import (
    Entanglement,
    VarianceTrace,
    classify,
    to_output,
    variance_closedform,
    variance_ode,
    vmin_pulsed,
)
from .positive_p import EnsembleStats, TrajectoryState, ensemble_run, moment_residual_check, noise_factorize, sde_step, variance_at_theta
from .scan import ScanResult, frequency_sweep, modulation_curves, scan_vmin, validity_check


__all__ = [
    "Constant",
    "ConfigError",
    "DerivedConstants",
    "Entanglement",
    "Harmonic",
    "PulseTrain",
    "Regime",
    "SemiclassicalTrace",
    "SystemParams",
    "VarianceTrace",
    "classify",
    "derive_constants",
    "epsilon_of_t",
    "meanfield_ode",
    "photon_number_harmonic",
    "photon_number_quadrature",
    "pump_amplitude",
    "pump_mean",
    "regime_classify",
    "semiclassical_trace",
    "time_grid",
    "to_output",
    "variance_closedform",
    "variance_ode",
    "vmin_pulsed",
    "EnsembleStats",
    "TrajectoryState",
    "ensemble_run",
    "moment_residual_check",
    "noise_factorize",
    "sde_step",
    "variance_at_theta",
    "ScanResult",
    "frequency_sweep",
    "modulation_curves",
    "scan_vmin",
    "validity_check",
]
