"""Builders for the driven few-level-emitter + phonon-mode Lindblad models.

Three families are supported:

* a three-level emitter whose two excited states exchange a phonon with the
  mechanical mode while a coherent pump drives the ground transition,
* a cavity + two-level-system polariton triplet mapped onto the same form
  with effective pump and coupling strengths, and
* a four-level emitter with a second, shelving ground state.

All frequencies and rates are plain numbers in GHz and enter the Hamiltonian
directly (hbar = 1); GHz * ns = 1 keeps time units consistent everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Union

import numpy as np

from .operators import (
    DensityMatrix,
    HilbertDims,
    Operator,
    annihilation,
    identity,
    tensor,
    thermal_state,
    transition,
)


def _require_nonneg(obj, names):
    for name in names:
        v = getattr(obj, name)
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")


@dataclass(frozen=True)
class ThreeLevelParams:
    """Rotated-frame three-level system parameters (GHz).

    ``delta1`` is the pump-to-first-transition detuning, ``delta2`` the
    phonon-to-second-transition detuning. ``gamma_d`` adds pure dephasing of
    both excited states; ``gamma_p`` adds incoherent pumping into them.
    ``fock_cutoff`` is the number of retained phonon levels and doubles as
    the starting cutoff for convergence sweeps.
    """

    delta1: float
    delta2: float
    omega: float
    g: float
    gamma1: float
    gamma2: float
    gamma: float
    n_th: float
    gamma_d: float = 0.0
    gamma_p: float = 0.0
    fock_cutoff: int = 20

    def __post_init__(self):
        _require_nonneg(self, ("omega", "g", "gamma1", "gamma2", "gamma", "n_th",
                               "gamma_d", "gamma_p"))
        if self.fock_cutoff < 2:
            raise ValueError(f"fock_cutoff must be >= 2, got {self.fock_cutoff}")


@dataclass(frozen=True)
class PolaritonParams:
    """Cavity-TLS polariton system coupled to a mechanical mode (GHz).

    ``big_g`` is the TLS-cavity coupling, ``delta_tc = omega_a - omega_c``
    the TLS-cavity detuning. The pump is taken resonant with the lower
    polariton; ``omega`` is the bare pump strength before the sin(theta)
    projection onto the polariton basis.
    """

    big_g: float
    delta_tc: float
    omega_a: float
    omega_c: float
    g: float
    omega_m: float
    omega: float
    gamma2: float
    gamma: float
    n_th: float
    gamma_d: float = 0.0
    gamma_p: float = 0.0
    fock_cutoff: int = 20

    def __post_init__(self):
        if self.big_g <= 0:
            raise ValueError(f"big_g must be > 0, got {self.big_g}")
        if abs(self.delta_tc - (self.omega_a - self.omega_c)) > 1e-9:
            raise ValueError(
                f"delta_tc={self.delta_tc} inconsistent with omega_a - omega_c = "
                f"{self.omega_a - self.omega_c}"
            )
        _require_nonneg(self, ("g", "omega_m", "omega", "gamma2", "gamma", "n_th",
                               "gamma_d", "gamma_p"))
        if self.fock_cutoff < 2:
            raise ValueError(f"fock_cutoff must be >= 2, got {self.fock_cutoff}")

    @classmethod
    def at_operating_point(cls, big_g, g, omega_m, omega, gamma2, gamma, n_th,
                           omega_a=1000.0, gamma_d=0.0, gamma_p=0.0, fock_cutoff=20):
        """Resonant TLS-cavity point (delta_tc = 0, theta = pi/4)."""
        return cls(big_g=big_g, delta_tc=0.0, omega_a=omega_a, omega_c=omega_a,
                   g=g, omega_m=omega_m, omega=omega, gamma2=gamma2, gamma=gamma,
                   n_th=n_th, gamma_d=gamma_d, gamma_p=gamma_p, fock_cutoff=fock_cutoff)


@dataclass(frozen=True)
class MnFourLevelParams:
    """Four-level emitter with a shelving ground state at splitting omega3.

    Both excited states decay at ``gamma2`` to each of the two ground states;
    the shelved ground state relaxes at ``gamma3``. Detunings are fixed at
    zero for this family.
    """

    omega3: float
    omega_m: float
    g: float
    omega: float
    gamma2: float
    gamma3: float
    gamma: float
    n_th: float
    gamma_d: float = 0.0
    fock_cutoff: int = 20

    def __post_init__(self):
        _require_nonneg(self, ("omega3", "omega_m", "g", "omega", "gamma2", "gamma3",
                               "gamma", "n_th", "gamma_d"))
        if self.fock_cutoff < 2:
            raise ValueError(f"fock_cutoff must be >= 2, got {self.fock_cutoff}")


ModelParams = Union[ThreeLevelParams, PolaritonParams, MnFourLevelParams]

PARAM_FAMILIES: dict[str, type] = {
    "three_level": ThreeLevelParams,
    "polariton": PolaritonParams,
    "mn_four_level": MnFourLevelParams,
}


@dataclass(frozen=True)
class ModelInstance:
    """Hamiltonian, weighted collapse operators and named observables."""

    hamiltonian: Operator
    collapse_terms: tuple[tuple[float, Operator], ...]
    dims: HilbertDims
    observables: dict[str, Operator]
    n_th: float

    def __post_init__(self):
        if not self.hamiltonian.is_hermitian():
            raise ValueError("model Hamiltonian is not Hermitian")
        for rate, op in self.collapse_terms:
            if rate < 0:
                raise ValueError(f"collapse rate must be >= 0, got {rate}")
            if op.dims != self.dims:
                raise ValueError("collapse operator dimensions inconsistent with model")
        object.__setattr__(self, "collapse_terms", tuple(self.collapse_terms))


def _assemble(d: int, n_fock: int, h_sys: np.ndarray, g: float,
              sys_collapse: list[tuple[float, Operator]],
              gamma: float, n_th: float,
              lower_level: int = 1, upper_level: int = 2) -> ModelInstance:
    """Common d-level (x) Fock assembly with the phonon-exchange coupling."""
    i_sys = identity(d)
    i_fock = identity(n_fock)
    b = annihilation(n_fock)
    h = tensor(Operator(HilbertDims((d,)), h_sys), i_fock)
    h = h + g * (tensor(transition(d, lower_level, upper_level), b.dag())
                 + tensor(transition(d, upper_level, lower_level), b))

    terms: list[tuple[float, Operator]] = []
    for rate, op in sys_collapse:
        terms.append((rate, tensor(op, i_fock)))
    terms.append((gamma * (n_th + 1.0), tensor(i_sys, b)))
    terms.append((gamma * n_th, tensor(i_sys, b.dag())))

    obs = {"phonon_number": tensor(i_sys, b.dag() @ b)}
    for lvl in range(d):
        obs[f"sigma{lvl}{lvl}"] = tensor(transition(d, lvl, lvl), i_fock)
    return ModelInstance(hamiltonian=h, collapse_terms=tuple(terms),
                         dims=h.dims, observables=obs, n_th=n_th)


def build_three_level(p: ThreeLevelParams) -> ModelInstance:
    """Three-level model: detuned ladder, coherent pump, phonon exchange.

    Collapse set: radiative decay of each excited state to the ground state,
    the thermal phonon-bath pair, plus optional excited-state dephasing and
    incoherent pumping out of the ground state.
    """
    d = 3
    h = np.zeros((d, d), dtype=complex)
    h[1, 1] = p.delta1
    h[2, 2] = p.delta1 + p.delta2
    h[0, 1] = h[1, 0] = p.omega

    sys_collapse = [
        (p.gamma1, transition(d, 0, 1)),
        (p.gamma2, transition(d, 0, 2)),
    ]
    if p.gamma_d > 0:
        sys_collapse.append((p.gamma_d, transition(d, 1, 1)))
        sys_collapse.append((p.gamma_d, transition(d, 2, 2)))
    if p.gamma_p > 0:
        sys_collapse.append((p.gamma_p, transition(d, 1, 0)))
        sys_collapse.append((p.gamma_p, transition(d, 2, 0)))
    return _assemble(d, p.fock_cutoff, h, p.g, sys_collapse, p.gamma, p.n_th)


def jc_diagonalize(big_g: float, delta_tc: float, omega_a: float, omega_c: float):
    """Polariton frequencies and mixing angle of the one-excitation doublet.

    Returns (omega_minus, omega_plus, theta) with
    omega_pm = (omega_a + omega_c)/2 +- sqrt(big_g**2 + delta_tc**2/4) and
    tan(2 theta) = 2 big_g / delta_tc, theta in (0, pi/2).
    """
    if big_g <= 0:
        raise ValueError(f"big_g must be > 0, got {big_g}")
    split = math.sqrt(big_g ** 2 + 0.25 * delta_tc ** 2)
    mid = 0.5 * (omega_a + omega_c)
    theta = 0.5 * math.atan2(2.0 * big_g, delta_tc)
    return mid - split, mid + split, theta


def polariton_effective_params(p: PolaritonParams) -> ThreeLevelParams:
    """Map polariton parameters onto the rotated three-level form.

    Pump is locked to the lower polariton (delta1 = 0); delta2 is the
    polariton splitting minus the mechanical frequency. Pump and coupling
    pick up the sin/cos mixing-angle factors, and both polaritons decay at
    the same rate.
    """
    w_minus, w_plus, theta = jc_diagonalize(p.big_g, p.delta_tc, p.omega_a, p.omega_c)
    return ThreeLevelParams(
        delta1=0.0,
        delta2=(w_plus - w_minus) - p.omega_m,
        omega=p.omega * math.sin(theta),
        g=p.g * math.sin(theta) * math.cos(theta),
        gamma1=p.gamma2,
        gamma2=p.gamma2,
        gamma=p.gamma,
        n_th=p.n_th,
        gamma_d=p.gamma_d,
        gamma_p=p.gamma_p,
        fock_cutoff=p.fock_cutoff,
    )


def build_polariton(p: PolaritonParams) -> ModelInstance:
    """Polariton triplet {ground, lower, upper} coupled to the phonon mode.

    Built directly in the polariton basis, so one cavity photon at most by
    construction. Equals the three-level builder evaluated at the mapped
    effective parameters.
    """
    eff = polariton_effective_params(p)
    d = 3
    h = np.zeros((d, d), dtype=complex)
    h[1, 1] = eff.delta1
    h[2, 2] = eff.delta1 + eff.delta2
    h[0, 1] = h[1, 0] = eff.omega

    sys_collapse = [
        (p.gamma2, transition(d, 0, 1)),
        (p.gamma2, transition(d, 0, 2)),
    ]
    if p.gamma_d > 0:
        sys_collapse.append((p.gamma_d, transition(d, 1, 1)))
        sys_collapse.append((p.gamma_d, transition(d, 2, 2)))
    if p.gamma_p > 0:
        sys_collapse.append((p.gamma_p, transition(d, 1, 0)))
        sys_collapse.append((p.gamma_p, transition(d, 2, 0)))
    return _assemble(d, p.fock_cutoff, h, eff.g, sys_collapse, p.gamma, p.n_th)


def build_mn_four_level(p: MnFourLevelParams) -> ModelInstance:
    """Four-level model with a shelving ground state.

    Each excited state decays at gamma2 to both ground states; the shelf
    relaxes at gamma3. Pump and phonon exchange act exactly as in the
    three-level model; the shelf is never driven coherently.
    """
    d = 4
    h = np.zeros((d, d), dtype=complex)
    h[3, 3] = p.omega3
    h[0, 1] = h[1, 0] = p.omega

    sys_collapse = [
        (p.gamma2, transition(d, 0, 1)),
        (p.gamma2, transition(d, 0, 2)),
        (p.gamma2, transition(d, 3, 1)),
        (p.gamma2, transition(d, 3, 2)),
        (p.gamma3, transition(d, 0, 3)),
    ]
    if p.gamma_d > 0:
        sys_collapse.append((p.gamma_d, transition(d, 1, 1)))
        sys_collapse.append((p.gamma_d, transition(d, 2, 2)))
    return _assemble(d, p.fock_cutoff, h, p.g, sys_collapse, p.gamma, p.n_th)


def build_model(params: ModelParams) -> ModelInstance:
    """Dispatch to the family builder matching the parameter type."""
    if isinstance(params, ThreeLevelParams):
        return build_three_level(params)
    if isinstance(params, PolaritonParams):
        return build_polariton(params)
    if isinstance(params, MnFourLevelParams):
        return build_mn_four_level(params)
    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def family_name(params: ModelParams) -> str:
    for name, cls in PARAM_FAMILIES.items():
        if isinstance(params, cls):
            return name
    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def with_fock_cutoff(params: ModelParams, n: int) -> ModelParams:
    return replace(params, fock_cutoff=n)


def param_field_names(family: str) -> tuple[str, ...]:
    return tuple(f.name for f in fields(PARAM_FAMILIES[family]))


def ground_thermal_state(m: ModelInstance) -> DensityMatrix:
    """Emitter ground state tensored with a thermal phonon state.

    The standard initial condition for cooling-rate runs.
    """
    d, n_fock = m.dims.factors
    sys = np.zeros((d, d), dtype=complex)
    sys[0, 0] = 1.0
    ph = thermal_state(n_fock, m.n_th)
    return DensityMatrix(m.dims, np.kron(sys, ph.matrix))
