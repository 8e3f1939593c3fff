"""Liouvillian assembly, steady states, time evolution and cutoff control.

Vectorization is column-stacking throughout: vec(A X B) = (B^T kron A) vec(X),
so the generator acts as d vec(rho)/dt = L vec(rho). The steady state comes
from a bordered linear system (one generator row swapped for the trace
constraint), verified against the full generator afterwards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply, spsolve

from .models import ModelInstance, ModelParams, build_model, with_fock_cutoff
from .operators import DensityMatrix, HilbertDims, Operator

# Below this total Hilbert dimension the vectorized generator stays dense.
DENSE_DIM_LIMIT = 64

# Solver-output states may carry this much negative eigenvalue from roundoff.
SOLVER_POSITIVITY_ATOL = 1e-8


class SteadyStateError(RuntimeError):
    """Steady-state solve failed; carries residual and condition diagnostics."""

    def __init__(self, message, residual=None, condition_estimate=None):
        super().__init__(message)
        self.residual = residual
        self.condition_estimate = condition_estimate


class DegenerateSteadyStateError(SteadyStateError):
    """The generator has more than one steady state; no representative is chosen."""


class TruncationError(RuntimeError):
    """Fock-cutoff convergence failed; carries the sequence of values seen."""

    def __init__(self, message, values):
        super().__init__(message)
        self.values = tuple(values)


class EvolutionError(RuntimeError):
    """Master-equation integration failed (typically stiffness)."""


class BathInfluxWarning(UserWarning):
    """Thermal influx gamma * n_th is comparable to the coupling strength."""


def vectorize(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=complex).flatten(order="F")


def unvectorize(vec: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(vec, dtype=complex).reshape((dim, dim), order="F")


@dataclass(frozen=True)
class Superoperator:
    """Vectorized generator; sparse above DENSE_DIM_LIMIT, dense below."""

    dims: HilbertDims
    matrix: object  # scipy sparse matrix or ndarray, shape (total**2, total**2)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def apply(self, operator_matrix: np.ndarray) -> np.ndarray:
        """Generator action on an operator given in matrix form."""
        v = self.matrix @ vectorize(operator_matrix)
        return unvectorize(v, self.dims.total)


@dataclass(frozen=True)
class SteadyStateResult:
    """Steady density matrix with derived observables and solve diagnostics."""

    rho: DensityMatrix
    phonon_number: float
    sigma22: float
    sigma00: float
    figure_of_merit: float
    residual_norm: float
    fock_cutoff_used: int


@dataclass(frozen=True)
class EvolutionTrace:
    """Sampled observable trajectories from master-equation integration."""

    times: np.ndarray
    phonon_number: np.ndarray
    populations: dict[str, np.ndarray]
    final_rho: DensityMatrix


def liouvillian(m: ModelInstance, force_sparse: bool | None = None) -> Superoperator:
    """Assemble the vectorized generator of the model's master equation.

    The coherent part uses the i[rho, H] sign convention; each collapse term
    (rate, O) contributes rate * (O rho O+ - {O+O, rho}/2).
    """
    n = m.dims.total
    use_sparse = force_sparse if force_sparse is not None else n >= DENSE_DIM_LIMIT
    if use_sparse:
        eye = sp.identity(n, format="csr", dtype=complex)
        kron = sp.kron
        h = sp.csr_matrix(m.hamiltonian.matrix)
        gen = 1j * (kron(h.T, eye) - kron(eye, h))
        for rate, op in m.collapse_terms:
            if rate == 0.0:
                continue
            c = sp.csr_matrix(op.matrix)
            cdc = (c.conj().T @ c).tocsr()
            gen = gen + rate * (kron(c.conj(), c)
                                - 0.5 * (kron(eye, cdc) + kron(cdc.T, eye)))
        return Superoperator(m.dims, gen.tocsr())

    eye = np.eye(n, dtype=complex)
    h = m.hamiltonian.matrix
    gen = 1j * (np.kron(h.T, eye) - np.kron(eye, h))
    for rate, op in m.collapse_terms:
        if rate == 0.0:
            continue
        c = op.matrix
        cdc = c.conj().T @ c
        gen = gen + rate * (np.kron(c.conj(), c)
                            - 0.5 * (np.kron(eye, cdc) + np.kron(cdc.T, eye)))
    return Superoperator(m.dims, gen)


def _generator_scale(gen) -> float:
    if sp.issparse(gen):
        return float(np.abs(gen.data).max()) if gen.nnz else 0.0
    return float(np.abs(gen).max()) if gen.size else 0.0


def _nullspace_dimension(gen) -> int:
    dense = gen.toarray() if sp.issparse(gen) else np.asarray(gen)
    scale = max(_generator_scale(dense), 1.0)
    svals = np.linalg.svd(dense, compute_uv=False)
    return int(np.sum(svals < 1e-10 * scale))


def steady_state(m: ModelInstance, tol: float = 1e-10) -> SteadyStateResult:
    """Solve L(rho) = 0 with unit trace and evaluate the model observables.

    ``tol`` bounds the accepted residual ||L vec(rho)|| relative to the
    largest generator entry. A singular bordered system is diagnosed as a
    degenerate steady state when the nullspace dimension exceeds one.
    """
    if not any(rate > 0 for rate, _ in m.collapse_terms):
        raise SteadyStateError("model has no dissipative channel; steady state undefined")

    n = m.dims.total
    superop = liouvillian(m)
    gen = superop.matrix
    scale = max(_generator_scale(gen), 1.0)
    trace_cols = np.arange(n) * (n + 1)
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0

    if superop.is_sparse:
        coo = gen.tocoo()
        keep = coo.row != 0
        rows = np.concatenate([coo.row[keep], np.zeros(n, dtype=coo.row.dtype)])
        cols = np.concatenate([coo.col[keep], trace_cols])
        data = np.concatenate([coo.data[keep], np.ones(n, dtype=complex)])
        bordered = sp.csc_matrix((data, (rows, cols)), shape=gen.shape)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sp.linalg.MatrixRankWarning)
            x = spsolve(bordered, rhs)
    else:
        bordered = np.array(gen)
        bordered[0, :] = 0.0
        bordered[0, trace_cols] = 1.0
        try:
            x = np.linalg.solve(bordered, rhs)
        except np.linalg.LinAlgError:
            x = np.full(n * n, np.nan, dtype=complex)

    residual = float(np.linalg.norm(gen @ x)) if np.all(np.isfinite(x)) else math.inf
    if not np.all(np.isfinite(x)) or residual > tol * scale:
        if n * n <= 4096:
            if _nullspace_dimension(gen) > 1:
                raise DegenerateSteadyStateError(
                    "generator nullspace dimension exceeds 1; steady state is not unique",
                    residual=residual,
                )
            cond = float(np.linalg.cond(bordered.toarray() if sp.issparse(bordered)
                                        else bordered))
        else:
            cond = math.nan
        raise SteadyStateError(
            f"steady-state solve residual {residual:.3e} exceeds tolerance "
            f"{tol * scale:.3e}",
            residual=residual, condition_estimate=cond,
        )

    rho_m = unvectorize(x, n)
    rho_m = 0.5 * (rho_m + rho_m.conj().T)
    rho_m = rho_m / np.trace(rho_m).real
    rho = DensityMatrix(m.dims, rho_m, positivity_atol=SOLVER_POSITIVITY_ATOL)

    def ex(name):
        return float(np.sum(m.observables[name].matrix.T * rho_m).real)

    phonon = ex("phonon_number")
    s22 = ex("sigma22")
    s00 = ex("sigma00")
    fom = phonon / m.n_th if m.n_th > 0 else math.nan
    return SteadyStateResult(rho=rho, phonon_number=phonon, sigma22=s22, sigma00=s00,
                             figure_of_merit=fom, residual_norm=residual,
                             fock_cutoff_used=m.dims.factors[-1])


def evolve(m: ModelInstance, rho0: DensityMatrix, times, rtol: float = 1e-8,
           atol: float = 1e-12, method: str = "BDF") -> EvolutionTrace:
    """Integrate the master equation from t = 0 and sample at ``times``.

    ``method`` is any solve_ivp method (the generator is supplied as the
    constant Jacobian for the implicit ones) or "expm", which steps the
    exact sparse propagator between sample points.
    """
    if rho0.dims != m.dims:
        raise ValueError("initial state dimensions inconsistent with model")
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("times must be a nonnegative strictly increasing sequence")

    n = m.dims.total
    superop = liouvillian(m)
    gen = superop.matrix
    y0 = vectorize(rho0.matrix)

    if method == "expm":
        gen_csc = gen.tocsc() if sp.issparse(gen) else sp.csc_matrix(gen)
        ys = np.empty((t.size, n * n), dtype=complex)
        y = y0
        prev = 0.0
        for k, tk in enumerate(t):
            dt = tk - prev
            if dt > 0:
                y = expm_multiply(gen_csc * dt, y)
            ys[k] = y
            prev = tk
    else:
        def rhs(_t, y):
            return gen @ y

        kwargs = {}
        if method in ("BDF", "Radau", "LSODA"):
            kwargs["jac"] = lambda _t, _y: gen
        sol = solve_ivp(rhs, (0.0, float(t[-1])), y0, t_eval=t, method=method,
                        rtol=rtol, atol=atol, **kwargs)
        if not sol.success:
            raise EvolutionError(
                f"integration failed: {sol.message}; try a shorter time span, a "
                f"looser tolerance, or method='expm'"
            )
        ys = sol.y.T

    obs_names = list(m.observables)
    series = {name: np.empty(t.size) for name in obs_names}
    for k in range(t.size):
        rho_k = unvectorize(ys[k], n)
        for name in obs_names:
            series[name][k] = float(np.sum(m.observables[name].matrix.T * rho_k).real)

    final = unvectorize(ys[-1], n)
    final = 0.5 * (final + final.conj().T)
    final = final / np.trace(final).real
    final_rho = DensityMatrix(m.dims, final, positivity_atol=1e-6)
    phonon = series.pop("phonon_number")
    return EvolutionTrace(times=t, phonon_number=phonon, populations=series,
                          final_rho=final_rho)


def thermal_tail_cutoff(n_th: float, tail_weight: float = 1e-7, minimum: int = 8) -> int:
    """Smallest cutoff N whose truncated-thermal top-level defect N p_top
    falls below ``tail_weight``.

    The steady-state balance identity picks up an error of n_th * N * p_top
    from truncation, so this sets the cutoff needed for identity-grade
    accuracy at thermal-like occupations.
    """
    if n_th <= 0:
        return minimum
    q = n_th / (n_th + 1.0)
    n = minimum
    while n * (1.0 - q) * q ** (n - 1) >= tail_weight:
        n += 1
    return n


def converge_cutoff(params: ModelParams, start_n: int | None = None,
                    tol: float = 1e-6, step: int = 5, n_max: int | None = None,
                    steady_tol: float = 1e-10) -> SteadyStateResult:
    """Increase the Fock cutoff until the steady phonon number stabilizes.

    Solves at N, N+step, ... until successive values differ by less than
    tol * max(value, 1e-12); returns the last solve with its cutoff recorded.
    Raises TruncationError (carrying the value sequence) if n_max is reached
    first.
    """
    if start_n is None:
        start_n = params.fock_cutoff
    if start_n < 4:
        raise ValueError(f"start_n must be >= 4, got {start_n}")
    if n_max is None:
        n_max = max(60, start_n + 4 * step)

    if params.g > 0 and params.gamma * params.n_th >= 0.1 * params.g:
        warnings.warn(
            "thermal influx gamma * n_th is within an order of magnitude of the "
            "coupling g; truncation convergence may be slow or fail",
            BathInfluxWarning, stacklevel=2,
        )

    values: list[float] = []
    previous: SteadyStateResult | None = None
    n = start_n
    while n <= n_max:
        result = steady_state(build_model(with_fock_cutoff(params, n)), tol=steady_tol)
        values.append(result.phonon_number)
        if previous is not None:
            if abs(result.phonon_number - previous.phonon_number) < tol * max(
                    result.phonon_number, 1e-12):
                return result
        previous = result
        n += step
    raise TruncationError(
        f"phonon number did not converge by cutoff {n_max} "
        f"(values: {', '.join(f'{v:.6g}' for v in values)})",
        values,
    )


def save_matrix(path, matrix) -> None:
    """Write a complex matrix as text: 'rows cols' header, then one row per
    line of space-separated real/imaginary pairs in row-major order."""
    m = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=complex)
    if m.ndim != 2:
        raise ValueError("only 2-D matrices are supported")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(f"{v.real:.17g} {v.imag:.17g}" for v in row))
            fh.write("\n")


def load_matrix(path) -> np.ndarray:
    """Inverse of save_matrix."""
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline().split()
        rows, cols = int(first[0]), int(first[1])
        out = np.empty((rows, cols), dtype=complex)
        for i in range(rows):
            parts = [float(tok) for tok in fh.readline().split()]
            if len(parts) != 2 * cols:
                raise ValueError(f"row {i} has {len(parts)} values, expected {2 * cols}")
            vals = np.asarray(parts).reshape(cols, 2)
            out[i] = vals[:, 0] + 1j * vals[:, 1]
    return out
