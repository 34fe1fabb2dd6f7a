"""Closed-form mean-field description of cooperative emission and absorption.

A single spin in the self-consistent field of the other N - 1 follows

    <sx> = r sech(u) cos(phi0 + omega0 t)
    <sy> = r sech(u) sin(phi0 + omega0 t)
    <sz> = s r tanh(u),        u = (t - t_d) / tau,

with s = -1 while emitting and s = +1 while absorbing, pulse width
tau = 2 / (r N |gamma_down - gamma_up|) and delay t_d = tau ln cot(theta0 / 2).

Coupling convention: the field term of the mean-field Hamiltonian is written
with spin-1/2 expectations <s> = <sigma>/2,

    H_MF = (omega0/2) sigma_z + (N/2) gamma_eff (<s_x> sigma_y - <s_y> sigma_x),

which is the only normalisation for which the trajectories above (with the
tau just quoted) solve -i[H_MF, rho] exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


class Branch(str, enum.Enum):
    EMISSION = "emission"
    ABSORPTION = "absorption"

    @property
    def sz_sign(self) -> int:
        return -1 if self is Branch.EMISSION else 1


@dataclass(frozen=True)
class MeanFieldParams:
    omega0: float
    n_emitters: int
    gamma_up: float
    gamma_down: float
    r: float
    theta0: float
    tau: float
    t_d: float
    branch: Branch
    phi0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "branch", Branch(self.branch))
        if self.gamma_up == self.gamma_down:
            raise ValueError("gamma_up == gamma_down: pulse width diverges")
        if not 0 <= self.r <= 1:
            raise ValueError(f"Bloch radius r={self.r} outside [0, 1]")
        if not 0 < self.theta0 < math.pi:
            raise ValueError(f"theta0={self.theta0} outside (0, pi)")
        tau = pulse_width(self.r, self.n_emitters, self.gamma_eff)
        if not math.isclose(self.tau, tau, rel_tol=1e-12):
            raise ValueError(f"tau={self.tau} inconsistent with r, N, rates (expected {tau})")
        t_d = delay_time(self.tau, self.theta0)
        if not math.isclose(self.t_d, t_d, rel_tol=1e-12, abs_tol=1e-12 * self.tau):
            raise ValueError(f"t_d={self.t_d} inconsistent with tau, theta0 (expected {t_d})")

    @classmethod
    def build(cls, omega0, n_emitters, gamma_up, gamma_down, r, theta0, branch=None, phi0=0.0):
        """Fill in tau and t_d from the independent parameters."""
        gamma_eff = gamma_down - gamma_up
        if gamma_eff == 0:
            raise ValueError("gamma_up == gamma_down: pulse width diverges")
        natural = Branch.EMISSION if gamma_eff > 0 else Branch.ABSORPTION
        branch = natural if branch is None else Branch(branch)
        if branch is not natural:
            raise ValueError(
                f"{branch.value} branch needs "
                f"{'gamma_down > gamma_up' if branch is Branch.EMISSION else 'gamma_up > gamma_down'}"
            )
        tau = pulse_width(r, n_emitters, gamma_eff)
        return cls(omega0, n_emitters, gamma_up, gamma_down, r, theta0, tau,
                   delay_time(tau, theta0), branch, phi0)

    @property
    def gamma_eff(self) -> float:
        return self.gamma_down - self.gamma_up

    @property
    def peak_intensity(self) -> float:
        return (self.n_emitters / 2) ** 2 * self.r * abs(self.gamma_eff) * self.omega0

    def to_dict(self) -> dict:
        return {
            "omega0": self.omega0, "n_emitters": self.n_emitters,
            "gamma_up": self.gamma_up, "gamma_down": self.gamma_down,
            "r": self.r, "theta0": self.theta0, "phi0": self.phi0,
            "tau": self.tau, "t_d": self.t_d, "branch": self.branch.value,
        }


@dataclass(frozen=True)
class BlochSample:
    t: float | np.ndarray
    sx: float | np.ndarray
    sy: float | np.ndarray
    sz: float | np.ndarray

    def __post_init__(self):
        norm2 = np.asarray(self.sx) ** 2 + np.asarray(self.sy) ** 2 + np.asarray(self.sz) ** 2
        if np.any(norm2 > 1 + 1e-12):
            raise ValueError("Bloch vector longer than 1")


def pulse_width(r: float, n_emitters: int, gamma_eff: float) -> float:
    return 2.0 / (r * n_emitters * abs(gamma_eff))


def delay_time(tau: float, theta0: float) -> float:
    return tau * math.log(1.0 / math.tan(theta0 / 2))


def derive_params(
    n_emitters: int,
    omega0: float,
    temperature: float,
    gamma_up: float,
    gamma_down: float,
    branch: Branch | str | None = None,
) -> MeanFieldParams:
    """Mean-field pulse parameters for a Gibbs initial state.

    The thermal polarisation n_z = tanh(omega0 / 2T) fixes r = |n_z|.  The
    initial angle is measured from the pole the pulse leaves: arccos(n_z)
    while absorbing (thermal state near the ground pole) and arccos(-n_z)
    while emitting (inverted state, T < 0, near the excited pole).  The
    branch defaults to the one selected by the sign of gamma_down - gamma_up.
    """
    if temperature == 0:
        raise ValueError("temperature must be nonzero")
    if int(n_emitters) != n_emitters or n_emitters < 1:
        raise ValueError("n_emitters must be a positive integer")
    if gamma_up == gamma_down:
        raise ValueError("gamma_up == gamma_down: pulse width diverges")
    natural = Branch.EMISSION if gamma_down > gamma_up else Branch.ABSORPTION
    branch = natural if branch is None else Branch(branch)

    n_z = math.tanh(omega0 / (2 * temperature))
    r = abs(n_z)
    theta0 = math.acos(n_z if branch is Branch.ABSORPTION else -n_z)
    if theta0 <= 0.0 or theta0 >= math.pi:
        raise ValueError(
            f"|T|={abs(temperature)} is too small: the initial state sits on a pole "
            "and the delay time diverges"
        )
    return MeanFieldParams.build(omega0, int(n_emitters), gamma_up, gamma_down, r, theta0, branch)


def bloch_trajectory(params: MeanFieldParams, t) -> BlochSample:
    u = (np.asarray(t, dtype=float) - params.t_d) / params.tau
    sech = 1.0 / np.cosh(u)
    phase = params.phi0 + params.omega0 * np.asarray(t, dtype=float)
    sx = params.r * sech * np.cos(phase)
    sy = params.r * sech * np.sin(phase)
    sz = params.branch.sz_sign * params.r * np.tanh(u)
    if np.ndim(t) == 0:
        return BlochSample(float(t), float(sx), float(sy), float(sz))
    return BlochSample(np.asarray(t, dtype=float), sx, sy, sz)


def intensity(params: MeanFieldParams, t):
    """Pulse power (N/2)^2 r |gamma_eff| omega0 sech^2((t - t_d)/tau).

    Always non-negative; ``params.branch`` says whether it is emitted
    (emission) or taken up from the pump (absorption).
    """
    u = (np.asarray(t, dtype=float) - params.t_d) / params.tau
    out = params.peak_intensity / np.cosh(u) ** 2
    return float(out) if np.ndim(out) == 0 else out


def h_mf(params: MeanFieldParams, sample: BlochSample) -> np.ndarray:
    """2x2 mean-field Hamiltonian in the (|e>, |g>) Pauli basis."""
    drive = params.n_emitters / 2 * params.gamma_eff
    # field enters through spin-1/2 expectations <s> = <sigma>/2
    return (
        params.omega0 / 2 * SIGMA_Z
        + drive * (sample.sx / 2 * SIGMA_Y - sample.sy / 2 * SIGMA_X)
    )


def bloch_density(sample: BlochSample) -> np.ndarray:
    return 0.5 * (IDENTITY + sample.sx * SIGMA_X + sample.sy * SIGMA_Y + sample.sz * SIGMA_Z)


def mf_residual(params: MeanFieldParams, t_grid) -> float:
    """Largest element of |d rho/dt + i[H_MF, rho]| over ``t_grid``.

    The derivative is a central difference with step equal to the median
    grid spacing.  The result is scaled by (N/2) |gamma_eff| r.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 2:
        raise ValueError("need at least two grid points")
    if np.any(np.abs(t_grid - params.t_d) > 50 * params.tau):
        raise ValueError("grid extends more than 50 pulse widths from the delay time")
    h = float(np.median(np.diff(np.sort(t_grid))))
    limit = min(params.tau, 1.0 / params.omega0) / 20
    if not 0 < h <= limit:
        raise ValueError(
            f"grid spacing {h:.3g} too coarse for a finite-difference check (need <= {limit:.3g})"
        )
    worst = 0.0
    for t in t_grid:
        s = bloch_trajectory(params, t)
        rho = bloch_density(s)
        drho = (bloch_density(bloch_trajectory(params, t + h))
                - bloch_density(bloch_trajectory(params, t - h))) / (2 * h)
        H = h_mf(params, s)
        resid = drho + 1j * (H @ rho - rho @ H)
        worst = max(worst, float(np.max(np.abs(resid))))
    return worst / (params.n_emitters / 2 * abs(params.gamma_eff) * params.r)


def pulse_curve(params: MeanFieldParams, times) -> dict[str, np.ndarray]:
    times = np.asarray(times, dtype=float)
    s = bloch_trajectory(params, times)
    return {"t": times, "intensity": intensity(params, times), "sx": s.sx, "sy": s.sy, "sz": s.sz}
