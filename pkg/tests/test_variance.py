import csv
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle_values as ov
from modnopo import (
    Constant,
    Entanglement,
    Harmonic,
    PulseTrain,
    SystemParams,
    classify,
    derive_constants,
    meanfield_ode,
    time_grid,
    to_output,
    variance_closedform,
    variance_ode,
    vmin_pulsed,
)
from modnopo.semiclassical import resolved_size
from modnopo.variance import locate_minimum, variance_closedform_trace


def solve(p, dc, profile, n_grid=256):
    n0 = meanfield_ode(p, dc, profile, grid=time_grid(profile, dc.gamma, n_grid))
    return n0, variance_ode(p, dc, profile, n0)


@pytest.mark.parametrize("V, label", [(0.4, Entanglement.EPR), (0.7, Entanglement.INSEPARABLE), (1.2, Entanglement.NONE), (0.5, Entanglement.INSEPARABLE), (1.0, Entanglement.NONE)])
def test_classify(V, label):
    assert classify(V) is label


@pytest.mark.parametrize("V", [0.0, -0.1])
def test_classify_rejects_nonpositive(V):
    with pytest.raises(ValueError):
        classify(V)


def test_classify_array():
    assert classify(np.array([0.4, 0.7])) == [Entanglement.EPR, Entanglement.INSEPARABLE]


@pytest.mark.parametrize("x, gamma, out", [(0.5, 1.0, 1.0), (2e8, 1e6, 4e14), (1.0, 1.0, 2.0)])
def test_to_output(x, gamma, out):
    assert to_output(x, gamma) == pytest.approx(out, rel=1e-15)


@pytest.mark.parametrize("eps", [0.0, 0.3, 0.8, 0.95])
def test_constant_below_threshold(system, eps):
    p, dc = system
    prof = Constant(eps * dc.f_th)
    n0, vt = solve(p, dc, prof, 8)
    assert vt.V == pytest.approx(1.0 / (1.0 + eps), abs=1e-10)
    assert variance_closedform(p, dc, prof, n0, n0.t_grid) == pytest.approx(vt.V, rel=1e-8)


def test_vacuum_floor(system):
    p, dc = system
    n0, vt = solve(p, dc, Constant(0.0), 8)
    assert np.max(np.abs(vt.V - 1.0)) < 1e-10
    assert variance_closedform(p, dc, Constant(0.0), n0, 0.3) == pytest.approx(1.0, abs=1e-10)


def test_threshold_limit_from_below(system):
    p, dc = system
    eps = [0.9, 0.99, 0.999, 0.9999, 0.99999]
    V = [solve(p, dc, Constant(e * dc.f_th), 4)[1].V_min for e in eps]
    assert np.all(np.diff(V) < 0)
    assert V[-1] == pytest.approx(0.5, abs=1e-5)
    assert min(V) > 0.5


@pytest.mark.parametrize("eps", [1.5, 2.0, 3.0, 5.0])
def test_constant_above_threshold(system, eps):
    p, dc = system
    prof = Constant(eps * dc.f_th)
    n0, vt = solve(p, dc, prof, 8)
    assert vt.V == pytest.approx((3 * eps - 1) / (4 * eps), abs=1e-10)
    assert variance_closedform(p, dc, prof, n0, n0.t_grid) == pytest.approx(vt.V, rel=1e-8)


@pytest.mark.parametrize("key", sorted(ov.HARMONIC))
def test_harmonic_against_forward_integration(system, key):
    p, dc = system
    fbar, f1, delta = key
    prof = Harmonic(fbar * dc.f_th, f1 * fbar * dc.f_th, delta)
    _, vt = solve(p, dc, prof, resolved_size(prof, dc.gamma, 512, 0.005))
    ref = ov.HARMONIC[key]
    assert vt.V_min == pytest.approx(ref["V_min"], rel=1e-7)
    if "t_m" in ref:
        assert vt.t_m == pytest.approx(ref["t_m"], abs=1e-4 * vt.period)


def test_deep_modulation_is_epr(system):
    p, dc = system
    _, vt = solve(p, dc, Harmonic(3 * dc.f_th, 3.6 * dc.f_th, 2.0), 512)
    assert vt.V_min < 0.5
    assert vt.summary()["epr"]
    assert Entanglement.EPR in vt.classification


@pytest.mark.parametrize("key", sorted(ov.PULSE_DARK_VMIN))
def test_pulse_dark_mode_exact(system, key):
    p, dc = system
    fbar, T1, T2 = key
    prof = PulseTrain(fbar * (T1 + T2) / T1 * dc.f_th, T1, T2)
    _, vt = solve(p, dc, prof, 64)
    assert vt.V_min == pytest.approx(ov.PULSE_DARK_VMIN[key], rel=1e-8)
    assert vt.t_m == pytest.approx(T1, abs=1e-12)


def test_pulse_bright_against_forward_integration(system):
    p, dc = system
    prof = PulseTrain(1.1 * 101 * dc.f_th, 0.01, 1.0)
    n0, vt = solve(p, dc, prof, 64)
    assert vt.V_min == pytest.approx(ov.PULSE_BRIGHT[(1.1, 0.01, 1.0)]["V_min"], rel=1e-8)
    assert np.all(vt.V < 1.0)
    assert variance_closedform(p, dc, prof, n0, n0.t_grid) == pytest.approx(vt.V, rel=1e-7)


@pytest.mark.parametrize("key", sorted(ov.SHORT_PULSE_FORMULA))
def test_short_pulse_formula_value(system, key):
    p, dc = system
    fbar, T1, T2 = key
    prof = PulseTrain(fbar * (T1 + T2) / T1 * dc.f_th, T1, T2)
    assert vmin_pulsed(p, dc, prof) == pytest.approx(ov.SHORT_PULSE_FORMULA[key], rel=1e-12)


def test_short_pulse_formula_limits(system):
    p, dc = system
    assert vmin_pulsed(p, dc, PulseTrain(1e-9 * dc.f_th, 0.01, 1.0)) == pytest.approx(1.0, abs=1e-9)
    assert vmin_pulsed(p, dc, PulseTrain(1e5 * dc.f_th, 0.01, 1.0)) < 1e-100
    with pytest.warns(UserWarning, match="T1"):
        vmin_pulsed(p, dc, PulseTrain(dc.f_th, 0.5, 1.0))
    with pytest.raises(TypeError):
        vmin_pulsed(p, dc, Constant(dc.f_th))


@pytest.mark.parametrize("fbar", [1.05, 1.5, 2.0, 3.0])
def test_modulation_deepens_minimum(system, fbar):
    p, dc = system
    vm = [solve(p, dc, Harmonic(fbar * dc.f_th, r * fbar * dc.f_th, 2.0), 256)[1].V_min for r in (0.0, 0.75, 2.0)]
    assert vm[2] < vm[1] < vm[0]


def test_minimum_location_grid_independent(system):
    p, dc = system
    prof = Harmonic(3 * dc.f_th, 1.2 * 3 * dc.f_th, 2.0)
    coarse = solve(p, dc, prof, 256)[1]
    fine = solve(p, dc, prof, 2048)[1]
    assert coarse.t_m == pytest.approx(fine.t_m, abs=1e-4 * coarse.period)


def test_locate_minimum_flat_and_wrapped():
    t = np.linspace(0, 1, 8, endpoint=False)
    assert locate_minimum(t, np.full(8, 0.7), 1.0) == (0.7, 0.0)
    V = 1 + np.cos(2 * np.pi * (t - 0.5))
    vmin, tm = locate_minimum(t, V, 1.0)
    assert tm == pytest.approx(0.0, abs=1e-12) and vmin == pytest.approx(0.0, abs=1e-12)


def test_closedform_rejects_inconsistent_trace(system):
    p, dc = system
    prof = Harmonic(2 * dc.f_th, dc.f_th, 2.0)
    n0 = meanfield_ode(p, dc, prof, n_grid=16)
    bad = dataclasses.replace(n0, n0=1.01 * n0.n0)
    with pytest.raises(ValueError, match="disagrees"):
        variance_closedform(p, dc, prof, bad, n0.t_grid)


ode_vs_closed = st.one_of(
    st.tuples(st.just("harmonic"), st.floats(0.1, 0.95), st.floats(0.0, 1.0), st.floats(0.5, 5.0)),
    st.tuples(st.just("harmonic"), st.floats(1.1, 4.0), st.floats(0.0, 1.5), st.floats(0.5, 5.0)),
    st.tuples(st.just("pulse"), st.floats(0.2, 1.5), st.floats(0.01, 0.3), st.floats(0.5, 2.0)),
)


@given(ode_vs_closed)
def test_ode_matches_closed_form(args):
    kind, fbar, a, b = args
    p = SystemParams()
    dc = derive_constants(p)
    if kind == "harmonic":
        prof = Harmonic(fbar * dc.f_th, a * fbar * dc.f_th, b)
    else:
        prof = PulseTrain(fbar * (a + b) / a * dc.f_th, a, b)
    n0, vt = solve(p, dc, prof, 24)
    assert vt.converged
    assert np.all(vt.V > 0)
    V = variance_closedform(p, dc, prof, n0, n0.t_grid)
    assert V == pytest.approx(vt.V, rel=1e-6)


def test_trace_outputs(system, tmp_path):
    p, dc = system
    prof = Harmonic(3 * dc.f_th, 3.6 * dc.f_th, 2.0)
    n0, vt = solve(p, dc, prof, 32)
    s = vt.summary()
    assert set(s) == {"V_min", "t_m", "epr", "inseparable"}
    path = tmp_path / "V.csv"
    vt.to_csv(path, gamma_out=2.0)
    rows = list(csv.DictReader(path.read_text().splitlines()))
    assert list(rows[0]) == ["t", "V", "V_out", "classification"]
    assert float(rows[3]["V_out"]) == pytest.approx(4.0 * float(rows[3]["V"]))
    cf = variance_closedform_trace(p, dc, prof, n0)
    assert cf.V_min == pytest.approx(vt.V_min, rel=1e-7)
    assert 0 <= vt.t_m < vt.period and math.isfinite(vt.V_min)
