"""Figure-of-merit evaluation, parameter-sweep engine, cooling-rate fits.

Sweeps solve one converged steady state per grid cell and are deterministic:
cells are independent, assembled by index, and identical for any worker
count. Rate maps additionally integrate the approach to steady state from
the emitter-ground / thermal-phonon initial condition and fit a stretched
exponential to extract an effective phonon decay rate.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.optimize import least_squares

from . import formulas
from .dynamics import (
    EvolutionTrace,
    converge_cutoff,
    evolve,
)
from .models import (
    PARAM_FAMILIES,
    MnFourLevelParams,
    ModelParams,
    build_model,
    ground_thermal_state,
    with_fock_cutoff,
)

FIT_BETA_BOUNDS = (0.05, 1.0)


def identity_residual(result, params) -> float:
    """Steady-state balance defect for any model family."""
    if isinstance(params, MnFourLevelParams):
        # both decay channels drain the upper state, so its total rate enters
        return (result.phonon_number - params.n_th
                + (2.0 * params.gamma2 / params.gamma) * result.sigma22)
    return formulas.steady_identity_residual(result, params)


@dataclass(frozen=True)
class AxisSpec:
    """One sweep axis: a parameter name with a linear or log value grid."""

    name: str
    scale: str
    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.scale not in ("linear", "log"):
            raise ValueError(f"axis scale must be 'linear' or 'log', got {self.scale!r}")
        if self.count < 2:
            raise ValueError(f"axis count must be >= 2, got {self.count}")
        if not self.min < self.max:
            raise ValueError(f"axis requires min < max, got [{self.min}, {self.max}]")
        if self.scale == "log" and self.min <= 0:
            raise ValueError("log axis requires min > 0")

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class SweepSpec:
    """A 2-D (or 1-D when axis2 is None) grid over model parameters."""

    model_family: str
    base_params: ModelParams
    axis1: AxisSpec
    axis2: AxisSpec | None = None
    fixed_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model_family not in PARAM_FAMILIES:
            raise ValueError(f"unknown model family {self.model_family!r}")
        cls = PARAM_FAMILIES[self.model_family]
        if not isinstance(self.base_params, cls):
            raise ValueError(
                f"base_params is {type(self.base_params).__name__}, expected "
                f"{cls.__name__} for family {self.model_family!r}"
            )
        names = {f.name for f in fields(cls)}
        for ax in (self.axis1, self.axis2):
            if ax is not None and ax.name not in names:
                raise ValueError(f"axis parameter {ax.name!r} not a field of "
                                 f"{cls.__name__}")
        for key in self.fixed_overrides:
            if key not in names:
                raise ValueError(f"fixed override {key!r} not a field of {cls.__name__}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axis1.count, self.axis2.count if self.axis2 else 1)

    def axis1_values(self) -> np.ndarray:
        return self.axis1.values()

    def axis2_values(self) -> np.ndarray:
        if self.axis2 is None:
            return np.array([math.nan])
        return self.axis2.values()

    def cell_params(self, i: int, j: int) -> ModelParams:
        updates = dict(self.fixed_overrides)
        updates[self.axis1.name] = float(self.axis1_values()[i])
        if self.axis2 is not None:
            updates[self.axis2.name] = float(self.axis2_values()[j])
        return replace(self.base_params, **updates)


@dataclass(frozen=True)
class CellDiagnostics:
    status: str
    fock_cutoff: int = 0
    residual_norm: float = math.nan
    identity_residual: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class SweepOptions:
    """Per-cell steady-state solver settings."""

    cutoff_tol: float = 1e-6
    cutoff_step: int = 5
    cutoff_max: int | None = None
    steady_tol: float = 1e-10
    start_n: int | None = None


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    figure_of_merit: np.ndarray
    phonon_number: np.ndarray
    diagnostics: list
    optimum: tuple[int, int, float]

    def to_csv(self, path) -> None:
        write_cells_csv(path, self, extra=None)


@dataclass(frozen=True)
class FitResult:
    """Stretched-exponential decay parameters with fit quality metrics."""

    gamma_eff: float
    beta: float
    steady_value: float
    mape: float
    converged: bool


@dataclass(frozen=True)
class RateMapResult:
    spec: SweepSpec
    omega_m: float
    figure_of_merit: np.ndarray
    phonon_number: np.ndarray
    gamma_eff: np.ndarray
    beta: np.ndarray
    mape: np.ndarray
    rate_ratio: np.ndarray  # gamma_eff / omega_m
    efficiency: np.ndarray  # (gamma_eff / omega_m) / F
    diagnostics: list
    optimum: tuple[int, int, float]

    def to_csv(self, path) -> None:
        write_cells_csv(path, self, extra=("gamma_eff", "beta", "mape",
                                           "rate_ratio", "efficiency"))


def figure_of_merit(m, n_th: float, tol: float = 1e-10) -> float:
    """Steady phonon number over thermal occupancy; < 1 means cooling."""
    if n_th <= 0:
        raise ValueError(f"n_th must be > 0, got {n_th}")
    from .dynamics import steady_state

    return steady_state(m, tol=tol).phonon_number / n_th


def _solve_cell(args):
    params, options = args
    try:
        result = converge_cutoff(
            params,
            start_n=options.start_n,
            tol=options.cutoff_tol,
            step=options.cutoff_step,
            n_max=options.cutoff_max,
            steady_tol=options.steady_tol,
        )
    except Exception as exc:  # per-cell failures are recorded, not fatal
        return (math.nan, math.nan,
                CellDiagnostics(status=f"failed:{type(exc).__name__}"))
    fom = result.phonon_number / params.n_th if params.n_th > 0 else math.nan
    diag = CellDiagnostics(
        status="ok",
        fock_cutoff=result.fock_cutoff_used,
        residual_norm=result.residual_norm,
        identity_residual=identity_residual(result, params),
    )
    return (fom, result.phonon_number, diag)


def _run_cells(worker, tasks, jobs: int):
    if jobs is None or jobs <= 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks, chunksize=1))


def sweep(spec: SweepSpec, jobs: int = 1,
          options: SweepOptions | None = None) -> SweepResult:
    """Converged steady-state figure of merit over the grid."""
    options = options or SweepOptions()
    n1, n2 = spec.shape
    tasks = [(spec.cell_params(i, j), options) for i in range(n1) for j in range(n2)]
    outcomes = _run_cells(_solve_cell, tasks, jobs)

    fom = np.full((n1, n2), math.nan)
    phonon = np.full((n1, n2), math.nan)
    diagnostics = [[None] * n2 for _ in range(n1)]
    for k, (f, p, diag) in enumerate(outcomes):
        i, j = divmod(k, n2)
        fom[i, j] = f
        phonon[i, j] = p
        diagnostics[i][j] = diag
    return SweepResult(spec=spec, figure_of_merit=fom, phonon_number=phonon,
                       diagnostics=diagnostics, optimum=_argmin_cell(fom))


def _argmin_cell(grid: np.ndarray) -> tuple[int, int, float]:
    best = None
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            v = grid[i, j]
            if math.isnan(v):
                continue
            if best is None or v < best[2]:
                best = (i, j, float(v))
    if best is None:
        raise ValueError("all grid cells failed; no optimum")
    return best


def locate_optimum(result: SweepResult) -> tuple[float, float, float]:
    """Axis values and figure of merit at the grid minimum.

    Ties break to the lowest axis1 index, then the lowest axis2 index; failed
    (NaN) cells are excluded and an all-failed grid raises.
    """
    i, j, value = _argmin_cell(result.figure_of_merit)
    a1 = float(result.spec.axis1_values()[i])
    a2 = float(result.spec.axis2_values()[j])
    return (a1, a2, value)


def fit_stretched_exponential(trace: EvolutionTrace, n_th: float,
                              steady_value: float | None = None) -> FitResult:
    """Fit n(t) = (n_th - n_s) exp(-(gamma_eff t)^beta) + n_s to a trace.

    ``n_th`` is the occupancy at t = 0 (the thermal value for the standard
    cooling protocol) and fixes the amplitude; ``steady_value`` pins n_s,
    falling back to the final sample when the steady-state solver value is
    not supplied. Only gamma_eff and beta are free, fitted by bounded least
    squares on relative residuals from a small multi-start grid.
    """
    t = np.asarray(trace.times, dtype=float)
    y = np.asarray(trace.phonon_number, dtype=float)
    n_s = float(y[-1]) if steady_value is None else float(steady_value)
    amp = n_th - n_s
    span = max(np.max(np.abs(y)), 1e-300)
    if abs(amp) <= 1e-9 * span or t.size < 8:
        return FitResult(math.nan, math.nan, n_s, math.nan, False)

    weights = np.maximum(np.abs(y), 1e-3 * span)

    def residuals(u):
        gamma_eff = math.exp(u[0])
        model = amp * np.exp(-np.power(gamma_eff * t, u[1])) + n_s
        return (model - y) / weights

    # half-decay time sets the rate scale for the starting grid
    z = (y - n_s) / amp
    below = np.nonzero(z <= 0.5)[0]
    t_half = t[below[0]] if below.size else t[-1]
    t_half = max(t_half, t[0] if t[0] > 0 else t[1])
    lo, hi = math.log(1e-4 / t_half), math.log(1e4 / t_half)

    best = None
    for factor in (0.2, 1.0, 5.0):
        for beta0 in (0.6, 0.8, 1.0):
            u0 = [math.log(factor / t_half), min(beta0, FIT_BETA_BOUNDS[1])]
            try:
                ls = least_squares(
                    residuals, u0,
                    bounds=([lo, FIT_BETA_BOUNDS[0]], [hi, FIT_BETA_BOUNDS[1]]),
                    ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=400,
                )
            except ValueError:
                continue
            if best is None or ls.cost < best.cost:
                best = ls
    if best is None:
        return FitResult(math.nan, math.nan, n_s, math.nan, False)

    gamma_eff = math.exp(best.x[0])
    beta = float(best.x[1])
    model = amp * np.exp(-np.power(gamma_eff * t, beta)) + n_s
    mape = 100.0 * float(np.mean(np.abs(model - y) / np.maximum(np.abs(y), 1e-12 * span)))
    pinned_low = beta <= FIT_BETA_BOUNDS[0] + 1e-9
    converged = bool(best.success and math.isfinite(gamma_eff) and not pinned_low)
    return FitResult(gamma_eff, beta, n_s, mape, converged)


def _cell_rates(params) -> float:
    names = ("omega", "g", "gamma1", "gamma2", "gamma3", "gamma_d", "gamma_p", "big_g")
    rates = [getattr(params, n) for n in names if hasattr(params, n)]
    rates.append(params.gamma * (params.n_th + 1.0))
    return max(r for r in rates if r > 0)


@dataclass(frozen=True)
class RateMapOptions:
    """Evolution and fit settings for cooling-rate maps."""

    points: int = 200
    horizon: float = 20.0  # first-pass time span in units of 1 / gamma
    max_time: float = 1e9  # ns
    settle_fraction: float = 0.01  # stop once within this fraction of the gap
    rtol: float = 1e-8
    solver: SweepOptions = field(default_factory=SweepOptions)


def _rate_cell(args):
    params, options, omega_m = args
    nan = math.nan
    try:
        steady = converge_cutoff(
            params,
            start_n=options.solver.start_n,
            tol=options.solver.cutoff_tol,
            step=options.solver.cutoff_step,
            n_max=options.solver.cutoff_max,
            steady_tol=options.solver.steady_tol,
        )
        n_s = steady.phonon_number
        model = build_model(with_fock_cutoff(params, steady.fock_cutoff_used))
        rho0 = ground_thermal_state(model)
        if params.gamma <= 0:
            raise ValueError("rate map requires gamma > 0")

        t_min = 1e-2 / _cell_rates(params)
        t_max = options.horizon / params.gamma
        gap0 = abs(params.n_th - n_s)
        trace = None
        while True:
            times = np.geomspace(t_min, t_max, options.points)
            trace = evolve(model, rho0, times, rtol=options.rtol)
            settled = np.nonzero(
                np.abs(trace.phonon_number - n_s) <= options.settle_fraction
                * max(gap0, 1e-12))[0]
            if settled.size:
                stop = settled[0] + 1
                trace = EvolutionTrace(times=trace.times[:stop + 1],
                                       phonon_number=trace.phonon_number[:stop + 1],
                                       populations={k: v[:stop + 1] for k, v in
                                                    trace.populations.items()},
                                       final_rho=trace.final_rho)
                break
            if t_max >= options.max_time:
                break
            t_max = min(t_max * 10.0, options.max_time)

        fit = fit_stretched_exponential(trace, params.n_th, steady_value=n_s)
        fom = n_s / params.n_th if params.n_th > 0 else nan
        diag = CellDiagnostics(
            status="ok" if fit.converged else "failed:FitNotConverged",
            fock_cutoff=steady.fock_cutoff_used,
            residual_norm=steady.residual_norm,
            identity_residual=identity_residual(steady, params),
        )
        return (fom, n_s, fit.gamma_eff, fit.beta, fit.mape, diag)
    except Exception as exc:
        return (nan, nan, nan, nan, nan,
                CellDiagnostics(status=f"failed:{type(exc).__name__}"))


def rate_map(spec: SweepSpec, omega_m: float, jobs: int = 1,
             options: RateMapOptions | None = None) -> RateMapResult:
    """Per-cell effective cooling rate, stretch parameter and efficiency.

    Each cell solves the converged steady state, integrates the approach from
    the emitter-ground / thermal-phonon state until it settles, and fits the
    stretched exponential. The efficiency grid is (gamma_eff / omega_m) / F
    cell by cell.
    """
    if omega_m <= 0:
        raise ValueError(f"omega_m must be > 0, got {omega_m}")
    options = options or RateMapOptions()
    n1, n2 = spec.shape
    tasks = [(spec.cell_params(i, j), options, omega_m)
             for i in range(n1) for j in range(n2)]
    outcomes = _run_cells(_rate_cell, tasks, jobs)

    grids = {name: np.full((n1, n2), math.nan)
             for name in ("fom", "phonon", "gamma_eff", "beta", "mape")}
    diagnostics = [[None] * n2 for _ in range(n1)]
    for k, (fom, phonon, gamma_eff, beta, mape, diag) in enumerate(outcomes):
        i, j = divmod(k, n2)
        grids["fom"][i, j] = fom
        grids["phonon"][i, j] = phonon
        grids["gamma_eff"][i, j] = gamma_eff
        grids["beta"][i, j] = beta
        grids["mape"][i, j] = mape
        diagnostics[i][j] = diag

    rate_ratio = grids["gamma_eff"] / omega_m
    efficiency = rate_ratio / grids["fom"]
    return RateMapResult(spec=spec, omega_m=omega_m,
                         figure_of_merit=grids["fom"], phonon_number=grids["phonon"],
                         gamma_eff=grids["gamma_eff"], beta=grids["beta"],
                         mape=grids["mape"], rate_ratio=rate_ratio,
                         efficiency=efficiency, diagnostics=diagnostics,
                         optimum=_argmin_cell(grids["fom"]))


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    return repr(float(value))


def write_cells_csv(path, result, extra=None) -> None:
    """One row per grid cell; shortest round-trip float formatting.

    Shared schema for sweeps and rate maps: axis values, figure of merit,
    phonon number, fit parameters (blank for plain sweeps), identity and
    solver residuals, cutoff and status.
    """
    spec = result.spec
    a2name = spec.axis2.name if spec.axis2 is not None else "axis2"
    base_cols = [spec.axis1.name, a2name, "figure_of_merit", "phonon_number",
                 "gamma_eff", "beta", "mape", "identity_residual",
                 "residual_norm", "fock_cutoff", "status"]
    extra = tuple(extra or ())
    has_fit = hasattr(result, "gamma_eff")
    a1 = spec.axis1_values()
    a2 = spec.axis2_values()
    n1, n2 = spec.shape
    lines = [",".join(base_cols + [c for c in extra if c not in base_cols])]
    for i in range(n1):
        for j in range(n2):
            diag = result.diagnostics[i][j]
            row = [
                _fmt(a1[i]),
                _fmt(a2[j]) if spec.axis2 is not None else "",
                _fmt(result.figure_of_merit[i, j]),
                _fmt(result.phonon_number[i, j]),
                _fmt(result.gamma_eff[i, j]) if has_fit else "",
                _fmt(result.beta[i, j]) if has_fit else "",
                _fmt(result.mape[i, j]) if has_fit else "",
                _fmt(diag.identity_residual),
                _fmt(diag.residual_norm),
                str(diag.fock_cutoff),
                diag.status,
            ]
            for name in extra:
                if name not in base_cols:
                    row.append(_fmt(getattr(result, name)[i, j]))
            lines.append(",".join(row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
