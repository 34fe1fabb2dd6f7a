"""Collective spin algebra in the symmetric (J = N/2) Dicke manifold.

The basis is ordered by ascending magnetic quantum number, so index 0 is
|J, -J> (all emitters down) and index N is |J, +J>.  With this ordering J+
lives on the first sub-diagonal and J- on the first super-diagonal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-6  # same floor as the integrator positivity check


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DickeBasis:
    """Symmetric subspace of ``n_emitters`` spin-1/2 systems."""

    n_emitters: int

    def __post_init__(self):
        n = self.n_emitters
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise ValueError(f"n_emitters must be a positive integer, got {n!r}")
        object.__setattr__(self, "n_emitters", int(n))

    @property
    def j(self) -> float:
        return self.n_emitters / 2

    @property
    def dim(self) -> int:
        return self.n_emitters + 1

    @cached_property
    def m_values(self) -> np.ndarray:
        m = np.arange(self.dim, dtype=float) - self.j
        m.setflags(write=False)
        return m


@dataclass(frozen=True)
class Operator:
    basis: DickeBasis
    elements: np.ndarray
    label: str = ""

    def __post_init__(self):
        a = _frozen(self.elements)
        if a.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(
                f"operator {self.label!r} has shape {a.shape}, expected "
                f"{(self.basis.dim, self.basis.dim)}"
            )
        object.__setattr__(self, "elements", a)

    def adjoint(self) -> Operator:
        label = self.label[:-1] if self.label.endswith("†") else self.label + "†"
        return Operator(self.basis, self.elements.conj().T, label)

    def __matmul__(self, other: Operator) -> Operator:
        _check_same_basis(self.basis, other.basis)
        return Operator(self.basis, self.elements @ other.elements,
                        f"{self.label}{other.label}")

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.elements - self.elements.conj().T)) <= tol)

    def band_offset(self) -> int | None:
        """Offset ``k`` if every nonzero entry sits on the k-th diagonal.

        ``k > 0`` is above the main diagonal.  Returns ``None`` for operators
        spread over more than one diagonal.
        """
        rows, cols = np.nonzero(self.elements)
        if rows.size == 0:
            return 0
        offsets = np.unique(cols - rows)
        return int(offsets[0]) if offsets.size == 1 else None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_emitters": self.basis.n_emitters,
            "elements": matrix_to_pairs(self.elements),
        }


@dataclass(frozen=True)
class DensityMatrix:
    """Validated state on a Dicke basis.

    Construction checks Hermiticity, unit trace and numerical positivity.
    """

    basis: DickeBasis
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = _frozen(self.elements)
        if a.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"density matrix shape {a.shape} does not match dim {self.basis.dim}")
        herm = np.max(np.abs(a - a.conj().T))
        if herm > HERMITIAN_TOL:
            raise ValueError(f"density matrix is not Hermitian (defect {herm:.3e})")
        tr = np.trace(a).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        lowest = _min_eigenvalue(a)
        if lowest < -POSITIVITY_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lowest:.3e}")
        object.__setattr__(self, "elements", a)

    @property
    def populations(self) -> np.ndarray:
        return self.elements.diagonal().real.copy()

    def is_diagonal(self) -> bool:
        a = self.elements
        return not np.any(a - np.diag(a.diagonal()))

    def to_dict(self) -> dict:
        return {"n_emitters": self.basis.n_emitters, "elements": matrix_to_pairs(self.elements)}


def _min_eigenvalue(a: np.ndarray) -> float:
    if not np.any(a - np.diag(a.diagonal())):
        return float(a.diagonal().real.min())
    return float(np.linalg.eigvalsh((a + a.conj().T) / 2).min())


def _check_same_basis(a: DickeBasis, b: DickeBasis) -> None:
    if a != b:
        raise ValueError(f"basis mismatch: N={a.n_emitters} vs N={b.n_emitters}")


def matrix_to_pairs(a: np.ndarray) -> list[list[float]]:
    """Row-major list of ``[re, im]`` pairs."""
    flat = np.asarray(a, dtype=complex).ravel()
    return [[float(z.real), float(z.imag)] for z in flat]


def dump_csv(op: Operator | DensityMatrix, path) -> None:
    """Debug dump: one matrix row per line, each entry written as ``re,im``."""
    with open(path, "w") as fh:
        for row in op.elements:
            fh.write(",".join(f"{z.real:.12g},{z.imag:.12g}" for z in row) + "\n")


def dump_json(op: Operator | DensityMatrix) -> str:
    return json.dumps(op.to_dict(), sort_keys=True)


def build_collective_operators(basis: DickeBasis) -> dict[str, Operator]:
    """Jx, Jy, Jz, Jp (raising) and Jm (lowering) on ``basis``."""
    j, m = basis.j, basis.m_values
    jz = np.diag(m).astype(complex)
    # <J, m+1 | J+ | J, m>
    ladder = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    jp = np.diag(ladder, k=-1).astype(complex)
    jm = jp.conj().T
    return {
        "Jx": Operator(basis, (jp + jm) / 2, "Jx"),
        "Jy": Operator(basis, (jp - jm) / 2j, "Jy"),
        "Jz": Operator(basis, jz, "Jz"),
        "Jp": Operator(basis, jp, "J+"),
        "Jm": Operator(basis, jm, "J-"),
    }


def build_hamiltonian(basis: DickeBasis, omega0: float) -> Operator:
    if not omega0 > 0:
        raise ValueError(f"omega0 must be positive, got {omega0!r}")
    return Operator(basis, np.diag(omega0 * basis.m_values), "H")


def thermal_state(basis: DickeBasis, omega0: float, temperature: float) -> DensityMatrix:
    """Gibbs state of ``omega0 * Jz`` restricted to the symmetric manifold.

    Negative temperatures give inverted populations.  Weights are formed in
    log space with the maximum subtracted, so ``|omega0 * J / T|`` may be
    arbitrarily large.
    """
    if temperature == 0:
        raise ValueError("temperature must be nonzero; use ground_state() or top_state()")
    if not omega0 > 0:
        raise ValueError(f"omega0 must be positive, got {omega0!r}")
    log_w = -omega0 * basis.m_values / temperature
    w = np.exp(log_w - log_w.max())
    return DensityMatrix(basis, np.diag(w / w.sum()))


def dicke_state(basis: DickeBasis, m: float) -> DensityMatrix:
    idx = int(round(m + basis.j))
    if not 0 <= idx < basis.dim or abs(basis.m_values[idx] - m) > 1e-12:
        raise ValueError(f"m={m} is not in the J={basis.j} manifold")
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    rho[idx, idx] = 1.0
    return DensityMatrix(basis, rho)


def ground_state(basis: DickeBasis) -> DensityMatrix:
    return dicke_state(basis, -basis.j)


def top_state(basis: DickeBasis) -> DensityMatrix:
    return dicke_state(basis, basis.j)


def coherent_spin_state(basis: DickeBasis, theta: float, phi: float = 0.0) -> DensityMatrix:
    """Pure spin-coherent state pointing along polar angle ``theta`` from +z."""
    from scipy.special import gammaln

    n = basis.n_emitters
    k = np.arange(basis.dim)  # number of excitations, m = k - J
    half = theta / 2
    with np.errstate(divide="ignore"):
        log_amp = (
            0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
            + k * np.log(abs(np.cos(half)))
            + (n - k) * np.log(abs(np.sin(half)))
        )
    amp = np.exp(log_amp) * np.sign(np.cos(half)) ** k * np.sign(np.sin(half)) ** (n - k)
    psi = amp * np.exp(-1j * k * phi)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(basis, np.outer(psi, psi.conj()))


def expectation(op: Operator, rho: DensityMatrix) -> complex:
    """Tr(op @ rho)."""
    _check_same_basis(op.basis, rho.basis)
    # Tr(AB) = sum_ij A_ij B_ji
    value = complex(np.sum(op.elements * rho.elements.T))
    if op.is_hermitian(1e-10) and abs(value.imag) > 1e-10:
        raise ArithmeticError(f"<{op.label}> has imaginary part {value.imag:.3e}")
    return value
