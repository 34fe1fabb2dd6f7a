"""Time-dependent Lindblad integration for collective emission and pumping.

Dissipators use the unit convention

    D[c] rho = c rho c^dag - 1/2 {c^dag c, rho},

with the rate multiplying D[c] directly (no factor of two).  The emission
channel is J- at ``gamma_down``; the pump channel is J+ at

    gamma_pump(t) = gamma_up + x * S(t) * gamma_down,

where S is the product of a switch-on and a switch-off tanh step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dicke_algebra import DensityMatrix, Operator, build_collective_operators

log = logging.getLogger(__name__)

Rate = float | Callable[[float], float]


class IntegrationError(RuntimeError):
    pass


class PositivityError(IntegrationError):
    def __init__(self, t: float, eigenvalue: float):
        super().__init__(
            f"state lost positivity at t={t:.6g}: smallest eigenvalue {eigenvalue:.3e}; "
            "reduce dt"
        )
        self.t = t
        self.eigenvalue = eigenvalue


# ---------------------------------------------------------------------------
# Rates


@dataclass(frozen=True)
class SwitchingProfile:
    """Smooth pump window centred on ``t_on`` (switch on) and ``t_off``.

    ``hard=True`` replaces the tanh steps by the indicator of [t_on, t_off],
    i.e. the staircase limit.
    """

    t_on: float
    t_off: float
    tau_switch: float
    x: float
    hard: bool = False

    def __post_init__(self):
        if not self.t_on < self.t_off:
            raise ValueError(f"t_on ({self.t_on}) must precede t_off ({self.t_off})")
        if not self.tau_switch > 0:
            raise ValueError(f"tau_switch must be positive, got {self.tau_switch}")
        if not self.x > 0:
            raise ValueError(f"pump strength x must be positive, got {self.x}")

    @classmethod
    def always_on(cls, x: float) -> SwitchingProfile:
        return cls(-math.inf, math.inf, 1.0, x)

    def __call__(self, t):
        return switching_value(self, t)


def switching_value(profile: SwitchingProfile, t):
    """S_on(t) * (1 - S_off(t)), each step being (1 + tanh((t - t0)/tau)) / 2."""
    t = np.asarray(t, dtype=float)
    if profile.hard:
        out = ((t >= profile.t_on) & (t <= profile.t_off)).astype(float)
    else:
        tau = profile.tau_switch
        s_on = 0.5 * (1.0 + np.tanh((t - profile.t_on) / tau))
        s_off = 0.5 * (1.0 + np.tanh((t - profile.t_off) / tau))
        out = s_on * (1.0 - s_off)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RateSchedule:
    """Collective emission, pumping and optional dephasing rates.

    ``gamma_up`` is a constant absorption rate added to the switched pump; it
    lets a bare superabsorption run (no decay channel) be expressed.
    """

    gamma_down: float
    pump: SwitchingProfile | None = None
    gamma_phi: float = 0.0
    gamma_up: float = 0.0

    def __post_init__(self):
        for name in ("gamma_down", "gamma_phi", "gamma_up"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def gamma_pump(self, t):
        if self.pump is None:
            base = np.zeros_like(np.asarray(t, dtype=float))
        else:
            base = self.pump.x * switching_value(self.pump, t) * self.gamma_down
        out = self.gamma_up + base
        return float(out) if np.ndim(out) == 0 else out

    @property
    def has_pump(self) -> bool:
        return self.gamma_up > 0 or (self.pump is not None and self.gamma_down > 0)

    def max_pump_rate(self) -> float:
        x = self.pump.x if self.pump is not None else 0.0
        return self.gamma_up + x * self.gamma_down


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    method: str = "rk4"
    renormalize_trace: bool = True
    sample_stride: int = 1
    store_states: bool = False
    max_steps: int = 20_000_000
    positivity_tol: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}; only 'rk4' is implemented")
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ValueError("sample_stride must be an integer >= 1")


def suggest_dt(pulse_width: float, n_emitters: int, max_rate: float,
               omega0: float = 0.0, points_per_width: int = 200) -> float:
    """Step size: ``pulse_width / points_per_width``, capped for RK4 stability.

    The cap bounds |lambda| * dt by about 2.5 using a Gershgorin estimate
    ``2 * max_rate * (J(J+1) + 1/4)`` of the dissipative spectrum, plus
    ``omega0 * N`` for coherences when they are present.
    """
    j = n_emitters / 2
    bound = 2.0 * max_rate * (j * (j + 1) + 0.25) + omega0 * n_emitters
    dt = pulse_width / points_per_width
    if bound > 0:
        dt = min(dt, 2.5 / bound)
    return dt


# ---------------------------------------------------------------------------
# Right-hand side


def _matrix(a) -> np.ndarray:
    return a.elements if isinstance(a, (Operator, DensityMatrix)) else np.asarray(a)


def _rate_at(rate: Rate, t: float) -> float:
    value = rate(t) if callable(rate) else rate
    if value < 0:
        raise ValueError(f"negative rate {value} at t={t}")
    return float(value)


def dissipator(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cd = c.conj().T
    cdc = cd @ c
    return c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)


def lindblad_rhs(rho, H, channels: Sequence[tuple[object, Rate]], t: float = 0.0) -> np.ndarray:
    """-i[H, rho] + sum_j gamma_j(t) D[c_j] rho, using dense matrix products.

    ``channels`` holds ``(c, rate)`` pairs where ``rate`` is a number or a
    callable of time.
    """
    r = _matrix(rho)
    h = _matrix(H)
    out = -1j * (h @ r - r @ h)
    for c, rate in channels:
        g = _rate_at(rate, t)
        if g:
            out = out + g * dissipator(_matrix(c), r)
    return out


class _BandChannel:
    """Jump operator with a single nonzero diagonal ``c[a, a + k] = v[a]``."""

    def __init__(self, c: np.ndarray, k: int):
        dim = c.shape[0]
        v = np.zeros(dim, dtype=complex)
        d = np.zeros(dim)
        if k >= 0:
            v[: dim - k] = np.diagonal(c, offset=k)
            d[k:] = np.abs(v[: dim - k]) ** 2
        else:
            v[-k:] = np.diagonal(c, offset=k)
            d[: dim + k] = np.abs(v[-k:]) ** 2
        self.k = k
        self.dim = dim
        self.v = v
        self.jump_pop = np.abs(v) ** 2  # weight of p[a + k] feeding p[a]
        self.cdc = d  # diagonal of c^dag c

    def _shift(self, a: np.ndarray) -> np.ndarray:
        # out[a, b] = in[a + k, b + k] (zero out of range); works on 1-D or 2-D
        k, n = self.k, self.dim
        out = np.zeros_like(a)
        if k == 0:
            return a.copy()
        idx = (slice(0, n - k), slice(k, n)) if k > 0 else (slice(-k, n), slice(0, n + k))
        if a.ndim == 1:
            out[idx[0]] = a[idx[1]]
        else:
            out[idx[0], idx[0]] = a[idx[1], idx[1]]
        return out

    def apply(self, rho: np.ndarray) -> np.ndarray:
        jump = np.outer(self.v, self.v.conj()) * self._shift(rho)
        anti = 0.5 * (self.cdc[:, None] + self.cdc[None, :]) * rho
        return jump - anti

    def apply_populations(self, p: np.ndarray) -> np.ndarray:
        return self.jump_pop * self._shift(p) - self.cdc * p


class _DenseChannel:
    def __init__(self, c: np.ndarray):
        self.c = c
        self.cd = c.conj().T
        self.cdc = self.cd @ c

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return self.c @ rho @ self.cd - 0.5 * (self.cdc @ rho + rho @ self.cdc)


def _make_channel(op: Operator):
    k = op.band_offset()
    return _BandChannel(op.elements, k) if k is not None else _DenseChannel(op.elements)


class _Generator:
    """Precomputed Liouvillian pieces for one (H, channels) pair."""

    def __init__(self, H: Operator, ops: Sequence[Operator], rates: Sequence[Rate]):
        h = H.elements
        self.h_diag = h.diagonal().copy() if not np.any(h - np.diag(h.diagonal())) else None
        self.h = h
        self.channels = [_make_channel(op) for op in ops]
        self.rates = list(rates)

    @property
    def preserves_diagonal(self) -> bool:
        return self.h_diag is not None and all(isinstance(c, _BandChannel) for c in self.channels)

    def rates_at(self, t: float) -> list[float]:
        return [_rate_at(r, t) for r in self.rates]

    def rhs(self, rho: np.ndarray, t: float) -> np.ndarray:
        if self.h_diag is not None:
            out = -1j * (self.h_diag[:, None] - self.h_diag[None, :]) * rho
        else:
            out = -1j * (self.h @ rho - rho @ self.h)
        for ch, g in zip(self.channels, self.rates_at(t)):
            if g:
                out += g * ch.apply(rho)
        return out

    def rhs_populations(self, p: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros_like(p)
        for ch, g in zip(self.channels, self.rates_at(t)):
            if g:
                out += g * ch.apply_populations(p)
        return out


# ---------------------------------------------------------------------------
# Trajectories


_CSV_COLUMNS = ("t", "jz", "jpjm", "jmjp", "trace", "energy")


@dataclass
class Trajectory:
    """Sampled observables of one integration.

    ``trace_drift`` accumulates |Tr(rho) - 1| over all steps before any
    renormalization; ``hermiticity_defect`` is the largest max-norm of
    rho - rho^dag seen before re-symmetrization.
    """

    times: np.ndarray
    jz: np.ndarray
    jpjm: np.ndarray
    jmjp: np.ndarray
    trace: np.ndarray
    energy: np.ndarray
    states: list[DensityMatrix] | None = None
    trace_drift: float = 0.0
    hermiticity_defect: float = 0.0
    n_steps: int = 0
    dt: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def columns(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, "times" if name == "t" else name) for name in _CSV_COLUMNS}

    def to_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w") as fh:
            fh.write(",".join(_CSV_COLUMNS) + "\n")
            for i in range(len(self)):
                fh.write(",".join(f"{cols[c][i]:.12g}" for c in _CSV_COLUMNS) + "\n")

    @staticmethod
    def concatenate(parts: Sequence[Trajectory]) -> Trajectory:
        """Join consecutive trajectories, dropping duplicated boundary samples."""
        keep = []
        for i, p in enumerate(parts):
            mask = np.ones(len(p), dtype=bool)
            if i > 0 and len(p) and np.isclose(p.times[0], parts[i - 1].times[-1], rtol=0, atol=1e-12):
                mask[0] = False
            keep.append(mask)
        cat = {
            name: np.concatenate([getattr(p, name)[m] for p, m in zip(parts, keep)])
            for name in ("times", "jz", "jpjm", "jmjp", "trace", "energy")
        }
        states = None
        if all(p.states is not None for p in parts):
            states = [s for p, m in zip(parts, keep) for s, k in zip(p.states, m) if k]
        return Trajectory(
            **cat,
            states=states,
            trace_drift=sum(p.trace_drift for p in parts),
            hermiticity_defect=max(p.hermiticity_defect for p in parts),
            n_steps=sum(p.n_steps for p in parts),
            dt=min(p.dt for p in parts),
        )


def _ladder_diagonals(basis) -> tuple[np.ndarray, np.ndarray]:
    j, m = basis.j, basis.m_values
    jpjm = j * (j + 1) - m * (m - 1)
    jmjp = j * (j + 1) - m * (m + 1)
    return jpjm, jmjp


def channels_for(basis, schedule: RateSchedule) -> tuple[list[Operator], list[Rate]]:
    ops = build_collective_operators(basis)
    chans: list[Operator] = [ops["Jm"], ops["Jp"]]
    rates: list[Rate] = [schedule.gamma_down, schedule.gamma_pump]
    if schedule.gamma_phi > 0:
        chans.append(ops["Jz"])
        rates.append(schedule.gamma_phi)
    return chans, rates


def integrate(
    rho0: DensityMatrix,
    H: Operator,
    schedule: RateSchedule,
    t_span: tuple[float, float],
    config: IntegratorConfig,
    *,
    force_dense: bool = False,
) -> tuple[DensityMatrix, Trajectory]:
    """Fixed-step RK4 integration of the collective master equation.

    The step is shrunk slightly so an integer number of steps lands exactly
    on ``t_span[1]``.  When the initial state is diagonal and every generator
    preserves diagonality (diagonal H, single-band jump operators) only the
    populations are propagated; the result is identical to propagating the
    full matrix, whose coherences would stay exactly zero.

    Returns the final state and the sampled trajectory.
    """
    t_a, t_b = map(float, t_span)
    if not t_a < t_b:
        raise ValueError(f"empty time span {t_span}")
    if H.basis != rho0.basis:
        raise ValueError("Hamiltonian and state live on different bases")
    n_steps = math.ceil((t_b - t_a) / config.dt - 1e-9)
    if n_steps > config.max_steps:
        raise IntegrationError(f"{n_steps} steps exceeds max_steps={config.max_steps}")
    dt = (t_b - t_a) / n_steps

    basis = rho0.basis
    ops, rates = channels_for(basis, schedule)
    gen = _Generator(H, ops, rates)
    populations_only = gen.preserves_diagonal and rho0.is_diagonal() and not force_dense

    jpjm_d, jmjp_d = _ladder_diagonals(basis)
    m = basis.m_values
    h_diag = H.elements.diagonal().real

    samples: list[tuple] = []
    states: list[DensityMatrix] | None = [] if config.store_states else None
    drift = 0.0
    herm = 0.0
    tol = config.positivity_tol

    def record(t, y):
        if populations_only:
            p = y
            if p.min() < -tol:
                raise PositivityError(t, float(p.min()))
            energy = float(h_diag @ p)
        else:
            p = y.diagonal().real
            lowest = float(np.linalg.eigvalsh(y).min())
            if lowest < -tol:
                raise PositivityError(t, lowest)
            energy = float(np.sum(H.elements * y.T).real)
        samples.append((t, m @ p, jpjm_d @ p, jmjp_d @ p, p.sum(), energy))
        if states is not None:
            states.append(_as_state(basis, y, populations_only))

    if populations_only:
        y = rho0.populations
        f = gen.rhs_populations
    else:
        y = np.array(rho0.elements, dtype=complex)
        f = gen.rhs

    record(t_a, y)
    stride = int(config.sample_stride)
    for n in range(1, n_steps + 1):
        t = t_a + (n - 1) * dt
        k1 = f(y, t)
        k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = f(y + dt * k3, t + dt)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not populations_only:
            herm = max(herm, float(np.max(np.abs(y - y.conj().T))))
            y = 0.5 * (y + y.conj().T)
            tr = float(np.trace(y).real)
        else:
            tr = float(y.sum())
        drift += abs(tr - 1.0)
        if config.renormalize_trace:
            y = y / tr
        if n % stride == 0 or n == n_steps:
            record(t_a + n * dt, y)

    cols = np.array(samples, dtype=float).T
    traj = Trajectory(
        times=cols[0], jz=cols[1], jpjm=cols[2], jmjp=cols[3], trace=cols[4], energy=cols[5],
        states=states, trace_drift=drift, hermiticity_defect=herm, n_steps=n_steps, dt=dt,
        meta={"populations_only": populations_only},
    )
    final = _as_state(basis, y, populations_only)
    return final, traj


def _as_state(basis, y: np.ndarray, populations_only: bool) -> DensityMatrix:
    if populations_only:
        return DensityMatrix(basis, np.diag(y / y.sum()))
    y = 0.5 * (y + y.conj().T)
    return DensityMatrix(basis, y / np.trace(y).real)


# ---------------------------------------------------------------------------
# Rate formulas for a two-level system between an attenuator and an amplifier


@dataclass(frozen=True)
class EffectiveRates:
    gamma_down: float
    gamma_up: float
    gamma_eff: float
    n_bar_eff: float | None  # None when gamma_eff == 0


def effective_rates(Gamma1: float, Gamma2: float, n1: float, n2: float) -> EffectiveRates:
    """Thermally dressed decay/pump rates of the two-reservoir model.

    ``Gamma1``/``n1`` belong to the attenuating reservoir, ``Gamma2``/``n2``
    to the amplifying (counter-rotating) one.
    """
    if Gamma1 < 0 or Gamma2 < 0:
        raise ValueError("reservoir couplings must be non-negative")
    if n1 < 0 or n2 < 0:
        raise ValueError("occupations must be non-negative")
    down = Gamma1 * (n1 + 1) + Gamma2 * n2
    up = Gamma1 * n1 + Gamma2 * (n2 + 1)
    eff = down - up
    n_bar = (down * n1 + up * (n2 + 1)) / eff if eff != 0 else None
    return EffectiveRates(down, up, eff, n_bar)


def steady_state_tls(gamma_up: float, gamma_down: float) -> float:
    """Long-time excited-state population gamma_up / (gamma_up + gamma_down)."""
    if gamma_up < 0 or gamma_down < 0:
        raise ValueError("rates must be non-negative")
    if gamma_up + gamma_down == 0:
        raise ValueError("at least one rate must be positive")
    return gamma_up / (gamma_up + gamma_down)
