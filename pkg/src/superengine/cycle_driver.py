"""Superabsorption / superradiance engine cycles.

One cycle is an absorption half-stroke (switched collective pump J+ plus the
always-on decay J-) followed by an emission half-stroke (decay only).  Work
integrals use the intensities

    I_em(t)   = omega0 * gamma_down * <J+J->
    I_pump(t) = omega0 * gamma_pump(t) * <J-J+>

integrated with the trapezoidal rule over the stroke windows.  W_net in the
power formula is taken to be W_em.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .dicke_algebra import DensityMatrix, DickeBasis, build_hamiltonian, thermal_state
from .lindblad_engine import (
    IntegrationError,
    IntegratorConfig,
    RateSchedule,
    SwitchingProfile,
    Trajectory,
    integrate,
    suggest_dt,
)
from .mean_field import Branch, derive_params

log = logging.getLogger(__name__)

VALIDITY_FRACTION = 0.1  # peak pump rate x * gamma_down must stay below this * omega0
PUMP_EDGE_FRACTION = 0.1  # tanh centres sit this fraction of the stroke inside each end
DEFAULT_SWITCH_FRACTION = 0.02  # default tau_switch as a fraction of the absorption stroke


class CycleError(RuntimeError):
    def __init__(self, k: int, cause: Exception):
        super().__init__(f"cycle {k}: {cause}")
        self.k = k


class StrokeKind(str, enum.Enum):
    ABSORPTION = "absorption"
    EMISSION = "emission"


@dataclass(frozen=True)
class StrokeWindow:
    kind: StrokeKind
    t_start: float
    t_end: float

    def __post_init__(self):
        object.__setattr__(self, "kind", StrokeKind(self.kind))
        if self.t_end < self.t_start:
            raise ValueError(f"window ends ({self.t_end}) before it starts ({self.t_start})")

    @property
    def length(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class CyclePlan:
    """Engine parameters, all in units where hbar = 1.

    ``stroke_duration`` (both half-strokes) and ``tau_switch`` default to
    values derived from the mean-field pulse of each branch; ``dt`` defaults
    to ``suggest_dt`` on the narrower pulse.  ``hard_switch`` replaces the
    tanh pump envelope by a rectangular window.
    """

    n_emitters: int
    omega0: float = 1.0
    T_c: float = 0.5
    gamma_down: float = 0.01
    x: float = 3.5
    n_cycles: int = 5
    stroke_duration: float | None = None
    tau_switch: float | None = None
    hard_switch: bool = False
    gamma_phi: float = 0.0
    thermal_contact_time: float = 0.0
    dt: float | None = None
    sample_stride: int = 1
    renormalize_trace: bool = True

    def __post_init__(self):
        if int(self.n_emitters) != self.n_emitters or self.n_emitters < 1:
            raise ValueError("n_emitters must be a positive integer")
        object.__setattr__(self, "n_emitters", int(self.n_emitters))
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if not self.T_c > 0:
            raise ValueError("T_c must be a positive temperature")
        if not self.gamma_down > 0:
            raise ValueError("gamma_down must be positive")
        if self.x < 0:
            raise ValueError("x must be non-negative")
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise ValueError("n_cycles must be an integer >= 1")
        for name in ("stroke_duration", "tau_switch", "dt"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.thermal_contact_time < 0:
            raise ValueError("thermal_contact_time must be non-negative")

    @property
    def warnings(self) -> list[str]:
        out = []
        peak = self.x * self.gamma_down
        if peak > VALIDITY_FRACTION * self.omega0 * (1 + 1e-12):
            out.append(
                f"peak pump rate x*gamma_down={peak:.3g} exceeds "
                f"{VALIDITY_FRACTION}*omega0; Born-Markov/RWA rates are not reliable here"
            )
        return out

    @property
    def valid_regime(self) -> bool:
        return not self.warnings

    def stroke_durations(self) -> tuple[float, float]:
        """(absorption, emission) half-stroke lengths.

        Derived as t_d + 5 tau of the mean-field pulse of each branch: the
        absorption pulse from the T_c thermal state under gamma_up = x *
        gamma_down, the emission pulse from its mirror image at -T_c.
        """
        if self.stroke_duration is not None:
            return self.stroke_duration, self.stroke_duration
        try:
            absorb = derive_params(self.n_emitters, self.omega0, self.T_c,
                                   self.x * self.gamma_down, self.gamma_down, Branch.ABSORPTION)
        except ValueError as exc:
            raise ValueError(
                f"cannot derive an absorption stroke for x={self.x} ({exc}); "
                "set stroke_duration explicitly"
            ) from None
        emit = derive_params(self.n_emitters, self.omega0, -self.T_c, 0.0,
                             self.gamma_down, Branch.EMISSION)
        return absorb.t_d + 5 * absorb.tau, emit.t_d + 5 * emit.tau

    def pulse_widths(self) -> list[float]:
        widths = [derive_params(self.n_emitters, self.omega0, -self.T_c, 0.0,
                                self.gamma_down, Branch.EMISSION).tau]
        if self.x > 1:
            widths.append(derive_params(self.n_emitters, self.omega0, self.T_c,
                                        self.x * self.gamma_down, self.gamma_down).tau)
        return widths

    def switch_time(self) -> float:
        if self.tau_switch is not None:
            return self.tau_switch
        return DEFAULT_SWITCH_FRACTION * self.stroke_durations()[0]

    def integrator(self) -> IntegratorConfig:
        dt = self.dt
        if dt is None:
            dt = suggest_dt(min(self.pulse_widths()), self.n_emitters,
                            (1 + self.x) * self.gamma_down)
            dt = min(dt, self.switch_time() / 2)
        return IntegratorConfig(dt=dt, sample_stride=self.sample_stride,
                                renormalize_trace=self.renormalize_trace)

    def pump_profile(self, window: StrokeWindow) -> SwitchingProfile | None:
        if self.x == 0:
            return None
        tau = self.switch_time()
        # centres do not move with tau_switch, so tau_switch -> 0 is the hard window
        margin = PUMP_EDGE_FRACTION * window.length
        return SwitchingProfile(window.t_start + margin, window.t_end - margin, tau, self.x,
                                hard=self.hard_switch)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CycleRecord:
    k: int
    W_pump: float
    W_em: float
    W_leak: float
    eta: float | None
    duration: float
    energy_change: float
    windows: list[StrokeWindow]
    traj: Trajectory = field(repr=False)
    traj_abs: Trajectory = field(repr=False)
    traj_em: Trajectory = field(repr=False)
    flags: list[str] = field(default_factory=list)

    @property
    def audit_residual(self) -> float:
        """|dE - (W_pump - W_em - W_leak)| relative to W_pump."""
        balance = self.W_pump - self.W_em - self.W_leak
        scale = self.W_pump if self.W_pump > 0 else max(abs(self.energy_change), 1e-300)
        return abs(self.energy_change - balance) / scale

    def to_dict(self) -> dict:
        return {
            "k": self.k, "W_pump": self.W_pump, "W_em": self.W_em, "W_leak": self.W_leak,
            "eta": self.eta, "duration": self.duration, "energy_change": self.energy_change,
            "flags": list(self.flags),
        }


@dataclass
class EngineReport:
    plan: CyclePlan
    records: list[CycleRecord]
    average_power: float
    converged_eta: float | None
    total_time: float
    warnings: list[str] = field(default_factory=list)
    final_state: DensityMatrix | None = field(default=None, repr=False)

    @property
    def etas(self) -> list[float | None]:
        return [r.eta for r in self.records]

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "cycles": [r.to_dict() for r in self.records],
            "average_power": self.average_power,
            "converged_eta": self.converged_eta,
            "total_time": self.total_time,
            "warnings": list(self.warnings),
            "glossary": {
                "W_pump": "energy supplied by the pump during the absorption half-stroke",
                "W_em": "energy emitted during the emission half-stroke (the net work)",
                "W_leak": "energy emitted through the decay channel while pumping",
                "eta": "W_em / W_pump for the same cycle; values above 1 are flagged",
                "average_power": "sum of W_em over all cycles / total elapsed time",
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, out_dir) -> list[Path]:
        """Report JSON plus one trajectory CSV per stroke."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json"]
        paths[0].write_text(self.to_json() + "\n")
        for rec in self.records:
            for tag, tr in (("abs", rec.traj_abs), ("em", rec.traj_em)):
                p = out / f"cycle{rec.k}_{tag}.csv"
                tr.to_csv(p)
                paths.append(p)
        return paths


# ---------------------------------------------------------------------------


def _window_integral(t: np.ndarray, f: np.ndarray, a: float, b: float) -> float:
    """Trapezoid of samples ``f(t)`` over [a, b], interpolating at the ends."""
    if b == a:
        return 0.0
    inner = (t > a) & (t < b)
    tt = np.concatenate(([a], t[inner], [b]))
    ff = np.concatenate(([np.interp(a, t, f)], f[inner], [np.interp(b, t, f)]))
    return float(trapezoid(ff, tt))


def work_integrals(
    traj: Trajectory,
    windows: Sequence[StrokeWindow],
    schedule: RateSchedule,
    omega0: float = 1.0,
) -> dict[str, float]:
    """W_pump, W_em and W_leak from a sampled trajectory.

    ``schedule`` supplies the pump rate of the absorption windows and the
    decay rate used everywhere.
    """
    t = np.asarray(traj.times)
    if np.any(np.diff(t) <= 0):
        raise ValueError("trajectory times must be strictly increasing")
    if not windows:
        raise ValueError("no stroke windows given")
    tol = 1e-9 * max(1.0, abs(t[-1]))
    i_em = omega0 * schedule.gamma_down * np.asarray(traj.jpjm)
    i_pump = omega0 * schedule.gamma_pump(t) * np.asarray(traj.jmjp)
    w = {"W_pump": 0.0, "W_em": 0.0, "W_leak": 0.0}
    for win in windows:
        if win.t_start < t[0] - tol or win.t_end > t[-1] + tol:
            raise ValueError(f"window [{win.t_start}, {win.t_end}] outside trajectory range")
        a, b = max(win.t_start, t[0]), min(win.t_end, t[-1])
        if win.kind is StrokeKind.ABSORPTION:
            w["W_pump"] += _window_integral(t, i_pump, a, b)
            w["W_leak"] += _window_integral(t, i_em, a, b)
        else:
            w["W_em"] += _window_integral(t, i_em, a, b)
    return w


def efficiency(record: CycleRecord) -> float:
    if not record.W_pump > 0:
        raise ValueError(f"cycle {record.k}: no supplied energy (W_pump = {record.W_pump})")
    return record.W_em / record.W_pump


def run_ignition(plan: CyclePlan) -> DensityMatrix:
    """Thermal state at the cold-bath temperature; no work is done."""
    return thermal_state(DickeBasis(plan.n_emitters), plan.omega0, plan.T_c)


def _thermal_contact(rho: DensityMatrix, plan: CyclePlan, H, t0: float, config) -> tuple:
    # detailed balance gamma_up / gamma_down = exp(-omega0 / T_c) relaxes to the T_c Gibbs state
    n_bar = 1.0 / math.expm1(plan.omega0 / plan.T_c)
    sched = RateSchedule(plan.gamma_down * (n_bar + 1), gamma_up=plan.gamma_down * n_bar)
    return integrate(rho, H, sched, (t0, t0 + plan.thermal_contact_time), config)


def run_cycle(
    rho_in: DensityMatrix,
    plan: CyclePlan,
    k: int,
    t_start: float = 0.0,
) -> tuple[DensityMatrix, CycleRecord]:
    """One absorption + emission cycle starting from ``rho_in`` at ``t_start``."""
    basis = rho_in.basis
    H = build_hamiltonian(basis, plan.omega0)
    config = plan.integrator()
    l_abs, l_em = plan.stroke_durations()
    w_abs = StrokeWindow(StrokeKind.ABSORPTION, t_start, t_start + l_abs)
    w_em = StrokeWindow(StrokeKind.EMISSION, w_abs.t_end, w_abs.t_end + l_em)
    pump_sched = RateSchedule(plan.gamma_down, plan.pump_profile(w_abs), plan.gamma_phi)
    emit_sched = RateSchedule(plan.gamma_down, None, plan.gamma_phi)

    try:
        rho_mid, tr_abs = integrate(rho_in, H, pump_sched, (w_abs.t_start, w_abs.t_end), config)
        rho_out, tr_em = integrate(rho_mid, H, emit_sched, (w_em.t_start, w_em.t_end), config)
        t_end = w_em.t_end
        if plan.thermal_contact_time > 0:
            rho_out, _ = _thermal_contact(rho_out, plan, H, t_end, config)
            t_end += plan.thermal_contact_time
    except (IntegrationError, ValueError) as exc:
        raise CycleError(k, exc) from exc

    traj = Trajectory.concatenate([tr_abs, tr_em])
    w = work_integrals(traj, [w_abs, w_em], pump_sched, plan.omega0)
    energy_change = float(tr_em.energy[-1] - tr_abs.energy[0])
    flags = []
    eta = None
    if w["W_pump"] > 0:
        eta = w["W_em"] / w["W_pump"]
        if eta > 1:
            flags.append("eta>1: emission subsidised by stored inversion")
    else:
        flags.append("no supplied energy")
    record = CycleRecord(
        k=k, W_pump=w["W_pump"], W_em=w["W_em"], W_leak=w["W_leak"], eta=eta,
        duration=t_end - t_start, energy_change=energy_change, windows=[w_abs, w_em],
        traj=traj, traj_abs=tr_abs, traj_em=tr_em, flags=flags,
    )
    log.debug("cycle %d: W_pump=%.6g W_em=%.6g W_leak=%.6g eta=%s", k, w["W_pump"],
              w["W_em"], w["W_leak"], eta)
    return rho_out, record


def run_engine(plan: CyclePlan) -> EngineReport:
    rho = run_ignition(plan)
    records = []
    t = 0.0
    for k in range(1, plan.n_cycles + 1):
        rho, rec = run_cycle(rho, plan, k, t_start=t)
        records.append(rec)
        t += rec.duration
    total_em = sum(r.W_em for r in records)
    return EngineReport(
        plan=plan,
        records=records,
        average_power=total_em / t,
        converged_eta=records[-1].eta,
        total_time=t,
        warnings=plan.warnings,
        final_state=rho,
    )


def with_overrides(plan: CyclePlan, **changes) -> CyclePlan:
    return replace(plan, **changes)
