"""Pulse fitting, power-law scaling, mean-field comparison and parameter sweeps."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .cycle_driver import VALIDITY_FRACTION, CyclePlan, run_engine
from .dicke_algebra import DickeBasis, build_hamiltonian, thermal_state
from .lindblad_engine import IntegratorConfig, RateSchedule, Trajectory, integrate, suggest_dt
from .mean_field import Branch, MeanFieldParams, derive_params

log = logging.getLogger(__name__)

FWHM_TO_TAU = 1.0 / (2.0 * math.acosh(math.sqrt(2.0)))


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# sech^2 fit


@dataclass(frozen=True)
class PulseFit:
    I0: float
    t_d_fit: float
    tau_fit: float
    rms_residual: float
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        if not (self.I0 > 0 and self.tau_fit > 0):
            raise FitError(f"unphysical fit I0={self.I0}, tau={self.tau_fit}")

    def to_dict(self) -> dict:
        return asdict(self)


def sech2(t, I0, t_d, tau):
    return I0 / np.cosh((np.asarray(t) - t_d) / tau) ** 2


def _sech2_jacobian(t, p):
    I0, t_d, tau = p
    u = (t - t_d) / tau
    s2 = 1.0 / np.cosh(u) ** 2
    th = np.tanh(u)
    d_i0 = s2
    d_td = 2 * I0 * s2 * th / tau
    d_tau = 2 * I0 * s2 * th * u / tau
    return np.column_stack([d_i0, d_td, d_tau])


def _initial_guess(t, y):
    i = int(np.argmax(y))
    peak = y[i]
    half = peak / 2
    widths = []
    left = np.nonzero(y[:i] < half)[0]
    if left.size:
        a = left[-1]
        ta = t[a] + (half - y[a]) * (t[a + 1] - t[a]) / (y[a + 1] - y[a])
        widths.append(t[i] - ta)
    right = np.nonzero(y[i:] < half)[0]
    if right.size:
        b = i + right[0]
        tb = t[b - 1] + (half - y[b - 1]) * (t[b] - t[b - 1]) / (y[b] - y[b - 1])
        widths.append(tb - t[i])
    fwhm = 2 * float(np.mean(widths)) if widths else (t[-1] - t[0]) / 2
    return np.array([peak, t[i], fwhm * FWHM_TO_TAU])


def fit_sech2(times, intensities, *, xtol: float = 1e-8, max_iter: int = 200) -> PulseFit:
    """Least-squares fit of I0 sech^2((t - t_d)/tau) by Levenberg-Marquardt.

    Starts from the sample maximum and the half-maximum width.  Stops when the
    largest relative parameter step drops below ``xtol`` or after
    ``max_iter`` iterations; in the latter case the best parameters so far
    are returned with ``converged=False``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("times and intensities must be 1-D arrays of equal length")
    if t.size < 10:
        raise FitError(f"need at least 10 samples, got {t.size}")
    i = int(np.argmax(y))
    if not y[i] > 0 or i == 0 or i == t.size - 1:
        raise FitError("no interior maximum")

    p = _initial_guess(t, y)
    resid = y - sech2(t, *p)
    sse = float(resid @ resid)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = _sech2_jacobian(t, p)
        a = jac.T @ jac
        g = jac.T @ resid
        while True:
            damped = a + lam * np.diag(np.diag(a))
            try:
                step = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(damped, g, rcond=None)[0]
            rel = float(np.max(np.abs(step) / np.maximum(np.abs(p), 1e-300)))
            trial = p + step
            if trial[0] > 0 and trial[2] > 0:
                r_trial = y - sech2(t, *trial)
                sse_trial = float(r_trial @ r_trial)
            else:
                sse_trial = math.inf
            if sse_trial <= sse:
                p, resid, sse = trial, r_trial, sse_trial
                lam = max(lam / 10, 1e-12)
                break
            lam *= 10
            if rel < xtol or lam > 1e16:
                break
        if rel < xtol:
            converged = True
            break
        if lam > 1e16:
            # no downhill step exists at working precision
            converged = True
            break
    if not converged:
        warnings.warn(f"sech^2 fit did not converge in {max_iter} iterations", RuntimeWarning)
    rms = math.sqrt(sse / t.size) / float(p[0])
    return PulseFit(float(p[0]), float(p[1]), float(p[2]), rms, it, converged)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    log_prefactor: float
    r_squared: float
    n_values: tuple[float, ...]
    values: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_values"] = list(self.n_values)
        d["values"] = list(self.values)
        return d


def scaling_exponent(n_values: Sequence[float], peaks: Sequence[float]) -> ScalingFit:
    """Least-squares line through (ln N, ln peak)."""
    n = np.asarray(n_values, dtype=float)
    y = np.asarray(peaks, dtype=float)
    if n.shape != y.shape:
        raise ValueError("n_values and peaks differ in length")
    if np.unique(n).size < 3:
        raise ValueError("need at least three distinct N")
    if np.any(y <= 0) or np.any(n <= 0):
        raise ValueError("peaks and N must all be positive")
    x, ly = np.log(n), np.log(y)
    b, c = np.polyfit(x, ly, 1)
    ss_res = float(np.sum((ly - (b * x + c)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(b), float(c), min(max(r2, 0.0), 1.0),
                      tuple(n.tolist()), tuple(y.tolist()))


# ---------------------------------------------------------------------------
# exact pulses and comparison with the mean-field curve


@dataclass
class PulseRun:
    params: MeanFieldParams
    times: np.ndarray
    intensity: np.ndarray
    trajectory: Trajectory = field(repr=False)

    @property
    def sz(self) -> np.ndarray:
        return self.trajectory.jz / (self.params.n_emitters / 2)


def exact_pulse(
    n_emitters: int,
    temperature: float,
    gamma_down: float = 0.0,
    gamma_up: float = 0.0,
    omega0: float = 1.0,
    *,
    t_max: float | None = None,
    dt: float | None = None,
    gamma_phi: float = 0.0,
    sample_stride: int = 1,
    renormalize_trace: bool = True,
) -> PulseRun:
    """Collective emission or absorption from a Gibbs state, exactly.

    The intensity is the net energy flow out of (emission) or into
    (absorption) the emitters, omega0 (gamma_down <J+J-> - gamma_up <J-J+>)
    with the sign chosen by the branch.  Defaults: ``t_max`` covers the
    mean-field delay plus twelve pulse widths; ``dt`` from ``suggest_dt``.
    """
    params = derive_params(n_emitters, omega0, temperature, gamma_up, gamma_down)
    basis = DickeBasis(n_emitters)
    if t_max is None:
        t_max = max(params.t_d, 0.0) + 12 * params.tau
    if dt is None:
        dt = suggest_dt(params.tau, n_emitters, gamma_up + gamma_down)
    schedule = RateSchedule(gamma_down, gamma_phi=gamma_phi, gamma_up=gamma_up)
    config = IntegratorConfig(dt=dt, sample_stride=sample_stride,
                              renormalize_trace=renormalize_trace)
    _, traj = integrate(thermal_state(basis, omega0, temperature),
                        build_hamiltonian(basis, omega0), schedule, (0.0, t_max), config)
    net_out = omega0 * (gamma_down * traj.jpjm - gamma_up * traj.jmjp)
    sign = 1.0 if params.branch is Branch.EMISSION else -1.0
    return PulseRun(params, traj.times, sign * net_out, traj)


def _as_curve(curve) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(curve, dict):
        return np.asarray(curve["t"], float), np.asarray(curve["intensity"], float)
    t, y = curve
    return np.asarray(t, float), np.asarray(y, float)


def _peak_time(t, y) -> float:
    i = int(np.argmax(y))
    if 0 < i < len(y) - 1:
        # vertex of the parabola through the three samples around the maximum
        t0, t1, t2 = t[i - 1 : i + 2]
        y0, y1, y2 = y[i - 1 : i + 2]
        denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
        a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
        b = (t2**2 * (y0 - y1) + t1**2 * (y2 - y0) + t0**2 * (y1 - y2)) / denom
        if a < 0:
            return float(-b / (2 * a))
    return float(t[i])


def compare_mf_exact(mf_curve, exact_curve, *, t_d: float | None = None,
                     tau: float | None = None) -> dict[str, float]:
    """Peak error, peak-time offset and relative L2 distance of two pulses.

    Curves are ``(times, intensity)`` pairs or dicts with ``t`` and
    ``intensity``.  The L2 distance is taken over t_d +- 3 tau of the
    mean-field curve (from its peak and half-maximum width unless given),
    with the exact curve linearly interpolated onto the mean-field grid.
    ``t_d_offset`` is exact peak time minus mean-field peak time.
    """
    tm, ym = _as_curve(mf_curve)
    te, ye = _as_curve(exact_curve)
    lo, hi = max(tm[0], te[0]), min(tm[-1], te[-1])
    if not lo < hi:
        raise ValueError("curves do not overlap in time")
    peak_mf = float(ym.max())
    peak_ex = float(ye.max())
    if t_d is None:
        t_d = _peak_time(tm, ym)
    if tau is None:
        tau = _initial_guess(tm, ym)[2]
    a, b = max(lo, t_d - 3 * tau), min(hi, t_d + 3 * tau)
    mask = (tm >= a) & (tm <= b)
    if mask.sum() < 2:
        raise ValueError("comparison window contains fewer than two samples")
    grid = tm[mask]
    ref = ym[mask]
    other = np.interp(grid, te, ye)
    norm = math.sqrt(trapezoid(ref**2, grid))
    dist = math.sqrt(trapezoid((other - ref) ** 2, grid))
    return {
        "peak_rel_err": abs(peak_ex - peak_mf) / peak_mf,
        "t_d_offset": _peak_time(te, ye) - _peak_time(tm, ym),
        "rel_l2": dist / norm if norm > 0 else math.inf,
    }


# ---------------------------------------------------------------------------
# sweeps

SWEEP_AXES = {
    "tau_switch": "tau_switch",
    "stroke_duration": "stroke_duration",
    "x": "x",
    "T_c": "T_c",
    "N": "n_emitters",
}


@dataclass
class SweepResult:
    axis: str
    grid: list[float]
    eta: list[float]
    power: list[float]
    valid: list[bool]
    errors: list[str | None]

    def __post_init__(self):
        n = len(self.grid)
        if not all(len(v) == n for v in (self.eta, self.power, self.valid, self.errors)):
            raise ValueError("sweep columns differ in length")

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir, stem: str = "sweep") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        jpath, cpath = out / f"{stem}.json", out / f"{stem}.csv"
        jpath.write_text(json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n")
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.axis, "eta", "power", "valid", "error"])
            for row in zip(self.grid, self.eta, self.power, self.valid, self.errors):
                g, e, p, v, err = row
                w.writerow([f"{g:.12g}", f"{e:.12g}", f"{p:.12g}", int(v), err or ""])
        return [jpath, cpath]


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _sweep_point(plan: CyclePlan) -> tuple[float, float, str | None]:
    try:
        report = run_engine(plan)
    except Exception as exc:  # per-point failures are recorded, not raised
        log.warning("sweep point failed: %s", exc)
        return math.nan, math.nan, f"{type(exc).__name__}: {exc}"
    eta = report.converged_eta
    return (math.nan if eta is None else eta), report.average_power, None


def sweep(plan_template: CyclePlan, axis: str, grid: Sequence[float],
          max_workers: int | None = None) -> SweepResult:
    """Run the engine at each grid value of ``axis`` (last-cycle eta, power).

    Points run concurrently on a thread pool; results come back in grid
    order.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    name = SWEEP_AXES[axis]
    plans, errors_at_build = [], {}
    for i, value in enumerate(grid):
        if axis == "N":
            value = int(value)
        try:
            plans.append(replace(plan_template, **{name: value}))
        except ValueError as exc:
            plans.append(None)
            errors_at_build[i] = f"ValueError: {exc}"
    with ThreadPoolExecutor(max_workers=max_workers or 1) as pool:
        results = list(pool.map(lambda p: _sweep_point(p) if p is not None else None, plans))
    eta, power, valid, errors = [], [], [], []
    for i, (value, res) in enumerate(zip(grid, results)):
        if res is None:
            res = (math.nan, math.nan, errors_at_build[i])
        eta.append(res[0])
        power.append(res[1])
        errors.append(res[2])
        x = value if axis == "x" else plan_template.x
        valid.append(x * plan_template.gamma_down <= VALIDITY_FRACTION * plan_template.omega0 * (1 + 1e-12))
    return SweepResult(axis, [float(g) for g in grid], eta, power, valid, errors)
