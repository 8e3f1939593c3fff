"""Dense operator algebra on finite tensor-product Hilbert spaces.

Everything downstream (model builders, Liouvillian assembly, observables)
works on plain dense complex matrices wrapped with their factor dimensions.
Total dimensions stay in the low hundreds, where dense algebra is both
simpler and faster than anything clever.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Tolerances for state validation, absolute.
HERMITIAN_ATOL = 1e-10
TRACE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-10


@dataclass(frozen=True)
class HilbertDims:
    """Ordered factor dimensions of a tensor-product space."""

    factors: tuple[int, ...]

    def __post_init__(self):
        factors = tuple(int(f) for f in self.factors)
        if not factors or any(f < 1 for f in factors):
            raise ValueError(f"factor dimensions must be >= 1, got {self.factors!r}")
        object.__setattr__(self, "factors", factors)

    @property
    def total(self) -> int:
        return math.prod(self.factors)


def _freeze(matrix, dims: HilbertDims) -> np.ndarray:
    m = np.array(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    if m.shape[0] != dims.total:
        raise ValueError(
            f"matrix of shape {m.shape} inconsistent with factor dims {dims.factors}"
        )
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class Operator:
    """A linear operator tagged with the factor structure of its space."""

    dims: HilbertDims
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _freeze(self.matrix, self.dims))

    def dag(self) -> "Operator":
        return Operator(self.dims, self.matrix.conj().T)

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= atol)

    def _check_dims(self, other: "Operator"):
        if self.dims != other.dims:
            raise ValueError(
                f"dimension mismatch: {self.dims.factors} vs {other.dims.factors}"
            )

    def __add__(self, other: "Operator") -> "Operator":
        self._check_dims(other)
        return Operator(self.dims, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_dims(other)
        return Operator(self.dims, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.dims, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.dims, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_dims(other)
        return Operator(self.dims, self.matrix @ other.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density operator: Hermitian, unit trace, positive.

    ``positivity_atol`` is how far below zero an eigenvalue may sit before
    construction fails; solver outputs carry small negative roundoff and pass
    a looser value than the default.
    """

    dims: HilbertDims
    matrix: np.ndarray
    positivity_atol: float = field(default=POSITIVITY_ATOL, repr=False, compare=False)

    def __post_init__(self):
        m = _freeze(self.matrix, self.dims)
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITIAN_ATOL:
            raise ValueError(f"density matrix not Hermitian: max deviation {herm:.3e}")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {tr:.12f} != 1")
        lo = np.linalg.eigvalsh(m).min()
        if lo < -self.positivity_atol:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", m)


def identity(dim: int) -> Operator:
    """Identity on a single factor of dimension ``dim``."""
    return Operator(HilbertDims((dim,)), np.eye(dim, dtype=complex))


def annihilation(n_levels: int) -> Operator:
    """Bosonic lowering operator on a Fock space truncated to ``n_levels``.

    Levels run 0..n_levels-1 and b[n-1, n] = sqrt(n).
    """
    if n_levels < 2:
        raise ValueError(f"Fock cutoff must be at least 2, got {n_levels}")
    m = np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), k=1)
    return Operator(HilbertDims((n_levels,)), m)


def creation(n_levels: int) -> Operator:
    return annihilation(n_levels).dag()


def number(n_levels: int) -> Operator:
    """b†b on the truncated Fock space (diagonal 0..n_levels-1)."""
    if n_levels < 2:
        raise ValueError(f"Fock cutoff must be at least 2, got {n_levels}")
    return Operator(HilbertDims((n_levels,)), np.diag(np.arange(n_levels, dtype=complex)))


def transition(dim: int, i: int, j: int) -> Operator:
    """|i><j| on a ``dim``-level system; a population projector when i == j."""
    if not (0 <= i < dim and 0 <= j < dim):
        raise ValueError(f"level indices ({i}, {j}) out of range for dim {dim}")
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return Operator(HilbertDims((dim,)), m)


def tensor(a: Operator, b: Operator) -> Operator:
    """Kronecker product; factor lists concatenate."""
    dims = HilbertDims(a.dims.factors + b.dims.factors)
    return Operator(dims, np.kron(a.matrix, b.matrix))


def expectation(op: Operator, rho: DensityMatrix) -> complex:
    """tr(op . rho). Real to within roundoff when ``op`` is Hermitian."""
    if op.dims != rho.dims:
        raise ValueError(
            f"dimension mismatch: operator {op.dims.factors} vs state {rho.dims.factors}"
        )
    # trace of a product without forming it
    return complex(np.sum(op.matrix.T * rho.matrix))


def thermal_state(n_levels: int, n_th: float, positivity_atol: float = POSITIVITY_ATOL) -> DensityMatrix:
    """Truncated thermal (geometric) phonon state with mean occupancy ``n_th``.

    Weights p_n proportional to (n_th / (n_th + 1))**n, renormalized over the
    retained levels, so trace is exactly 1 at any cutoff.
    """
    if n_th < 0:
        raise ValueError(f"thermal occupancy must be >= 0, got {n_th}")
    if n_levels < 2:
        raise ValueError(f"Fock cutoff must be at least 2, got {n_levels}")
    if n_th == 0:
        p = np.zeros(n_levels)
        p[0] = 1.0
    else:
        q = n_th / (n_th + 1.0)
        p = q ** np.arange(n_levels)
        p /= p.sum()
    return DensityMatrix(HilbertDims((n_levels,)), np.diag(p.astype(complex)),
                         positivity_atol=positivity_atol)
