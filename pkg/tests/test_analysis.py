import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import curve_fit

from superengine.analysis import (
    FitError,
    PulseFit,
    compare_mf_exact,
    exact_pulse,
    fit_sech2,
    scaling_exponent,
    sech2,
    sweep,
)
from superengine.cycle_driver import CyclePlan
from superengine.mean_field import derive_params, pulse_curve


def synthetic(I0=171.36, t_d=3.0, tau=0.8754, n=801):
    t = np.linspace(t_d - 8 * tau, t_d + 8 * tau, n)
    return t, I0 / np.cosh((t - t_d) / tau) ** 2


# -- fit_sech2 ---------------------------------------------------------------


def test_recovers_exact_parameters():
    t, y = synthetic()
    fit = fit_sech2(t, y)
    assert fit.converged
    assert fit.I0 == pytest.approx(171.36, rel=1e-6)
    assert fit.t_d_fit == pytest.approx(3.0, rel=1e-6)
    assert fit.tau_fit == pytest.approx(0.8754, rel=1e-6)
    assert fit.rms_residual < 1e-8


def test_agrees_with_reference_least_squares_on_noisy_data():
    rng = np.random.default_rng(7)
    t, y = synthetic(I0=50.0, t_d=1.3, tau=0.4, n=300)
    y = y * (1 + 0.03 * rng.standard_normal(y.size)) + 0.2 * rng.standard_normal(y.size)
    ours = fit_sech2(t, y)
    ref, _ = curve_fit(sech2, t, y, p0=[45.0, 1.2, 0.5], xtol=1e-12, ftol=1e-12)
    np.testing.assert_allclose([ours.I0, ours.t_d_fit, ours.tau_fit], ref, rtol=1e-6)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(1e-3, 1e4))
def test_scale_equivariance(c):
    t, y = synthetic(I0=3.0, t_d=0.7, tau=0.25, n=200)
    y = y + 0.05 * np.sin(17 * t)
    a, b = fit_sech2(t, y), fit_sech2(t, c * y)
    assert b.I0 == pytest.approx(c * a.I0, rel=1e-9)
    assert b.t_d_fit == pytest.approx(a.t_d_fit, rel=1e-9, abs=1e-12)
    assert b.tau_fit == pytest.approx(a.tau_fit, rel=1e-9)


def test_rejects_data_without_interior_peak():
    t = np.linspace(0, 1, 50)
    with pytest.raises(FitError, match="no interior maximum"):
        fit_sech2(t, np.zeros_like(t))
    with pytest.raises(FitError, match="no interior maximum"):
        fit_sech2(t, np.exp(-t))
    with pytest.raises(FitError):
        fit_sech2(t[:5], np.ones(5))


def test_iteration_cap_returns_best_so_far():
    t, y = synthetic(n=101)
    y = y + 5 * np.cos(9 * t)
    with pytest.warns(RuntimeWarning):
        fit = fit_sech2(t, y, max_iter=1)
    assert not fit.converged and fit.iterations == 1
    assert isinstance(fit, PulseFit)


# -- scaling_exponent ------------------------------------------------------------


def test_exact_power_laws():
    n = [50, 100, 200, 400]
    assert scaling_exponent(n, [0.3 * k**2 for k in n]).exponent == pytest.approx(2.0, abs=1e-12)
    fit = scaling_exponent(n, [7.0 * k for k in n])
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-6, 1e6), noise=st.lists(st.floats(-0.2, 0.2), min_size=4, max_size=4))
def test_exponent_invariant_under_common_factor(c, noise):
    n = [40, 80, 160, 320]
    peaks = [k**1.9 * math.exp(e) for k, e in zip(n, noise)]
    a = scaling_exponent(n, peaks).exponent
    b = scaling_exponent(n, [c * p for p in peaks]).exponent
    assert b == pytest.approx(a, abs=1e-9)


def test_scaling_input_validation():
    with pytest.raises(ValueError):
        scaling_exponent([1, 2], [1, 4])
    with pytest.raises(ValueError):
        scaling_exponent([1, 2, 3], [1, -4, 9])
    with pytest.raises(ValueError):
        scaling_exponent([2, 2, 2], [1, 1, 1])


# -- compare_mf_exact ---------------------------------------------------------


def test_identical_curves_compare_to_zero():
    p = derive_params(100, 1.0, -0.5, 0.0, 0.01)
    curve = pulse_curve(p, np.linspace(0, 12, 2001))
    assert compare_mf_exact(curve, curve) == {"peak_rel_err": 0.0, "t_d_offset": 0.0, "rel_l2": 0.0}


def test_shift_appears_as_delay_offset():
    p = derive_params(100, 1.0, -0.5, 0.0, 0.01)
    t = np.linspace(-5, 15, 4001)
    delta = 0.37
    mf = (t, sech2(t, 10.0, p.t_d, p.tau))
    shifted = (t, sech2(t, 10.0, p.t_d + delta, p.tau))
    assert compare_mf_exact(mf, shifted)["t_d_offset"] == pytest.approx(delta, abs=1e-4)


def test_disjoint_curves_rejected():
    with pytest.raises(ValueError):
        compare_mf_exact((np.array([0.0, 1.0]), np.ones(2)), (np.array([2.0, 3.0]), np.ones(2)))


def test_exact_pulse_peak_close_to_mean_field():
    run = exact_pulse(200, -0.5, gamma_down=0.01)
    mf = pulse_curve(run.params, run.times)
    cmp = compare_mf_exact(mf, (run.times, run.intensity))
    assert cmp["peak_rel_err"] <= 0.15
    assert cmp["t_d_offset"] > 0


def test_absorption_pulse_mirrors_emission():
    em = exact_pulse(60, -0.5, gamma_down=0.01)
    ab = exact_pulse(60, 0.5, gamma_up=0.01)
    np.testing.assert_allclose(ab.intensity, em.intensity, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(ab.sz, -em.sz, atol=1e-12)


# -- sweep ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def plan():
    return CyclePlan(n_emitters=20, n_cycles=2)


def test_sweep_is_deterministic_and_ordered(plan):
    grid = [2.0, 3.5, 5.0]
    a = sweep(plan, "x", grid, max_workers=3)
    b = sweep(plan, "x", grid, max_workers=1)
    assert a.grid == grid
    assert a.eta == b.eta and a.power == b.power
    assert all(e is None for e in a.errors)


def test_single_point_sweep_matches_engine(plan):
    from superengine.cycle_driver import run_engine

    res = sweep(plan, "T_c", [0.5])
    rep = run_engine(plan)
    assert res.eta == [rep.converged_eta] and res.power == [rep.average_power]


def test_sweep_records_failures_and_validity(plan, tmp_path):
    res = sweep(plan, "x", [0.5, 3.5, 12.0])
    assert res.errors[0] is not None and math.isnan(res.eta[0])
    assert res.errors[1] is None
    assert res.valid == [True, True, False]
    paths = res.write(tmp_path)
    data = json.loads(paths[0].read_text())
    assert data["eta"][0] is None
    assert paths[1].read_text().splitlines()[0] == "x,eta,power,valid,error"


def test_sweep_rejects_unknown_axis(plan):
    with pytest.raises(ValueError):
        sweep(plan, "colour", [1.0])
    with pytest.raises(ValueError):
        sweep(plan, "x", [])


def test_switching_time_has_interior_optimum():
    base = CyclePlan(n_emitters=80, n_cycles=3)
    length = base.stroke_durations()[0]
    grid = list(length / np.array([2000, 1000, 300, 100, 30, 10, 3]))
    res = sweep(base, "tau_switch", grid, max_workers=4)
    best = int(np.argmax(res.eta))
    assert 0 < best < len(grid) - 1


def test_power_scaling_with_n():
    res = sweep(CyclePlan(n_emitters=40, n_cycles=2), "N", [40, 80, 160], max_workers=3)
    fit = scaling_exponent(res.grid, res.power)
    assert 1.8 <= fit.exponent <= 2.05
