"""Closed-form expressions: thermal occupancy, steady-state balance identity,
optimal control parameters, detuning conditions and the approximate
steady-state phonon numbers of the restricted single-phonon model.

Unit bridge: mode frequencies quoted in GHz are ordinary frequencies, so the
occupancy uses h * nu / (k_B * T) with nu in Hz. This convention reproduces
the reference (frequency, temperature, occupancy) triples to better than 1%.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .dynamics import SteadyStateResult
from .models import MnFourLevelParams, PolaritonParams, ThreeLevelParams


@dataclass(frozen=True)
class PhysicalConstants:
    planck_h: float  # J s
    boltzmann_k: float  # J / K


# CODATA 2018 exact values.
CODATA = PhysicalConstants(planck_h=6.62607015e-34, boltzmann_k=1.380649e-23)


@dataclass(frozen=True)
class OptimalPoint:
    """Cooling-optimal pump strength and excited-state decay rate (GHz)."""

    omega_opt: float
    gamma2_opt: float


def thermal_occupancy(nu_ghz: float, temperature_k: float,
                      constants: PhysicalConstants | None = None) -> float:
    """Bose-Einstein mean occupancy of a mode at ``nu_ghz`` GHz and T kelvin."""
    if nu_ghz <= 0:
        raise ValueError(f"frequency must be > 0 GHz, got {nu_ghz}")
    if temperature_k <= 0:
        raise ValueError(f"temperature must be > 0 K, got {temperature_k}")
    c = constants if constants is not None else CODATA
    x = c.planck_h * nu_ghz * 1e9 / (c.boltzmann_k * temperature_k)
    return 1.0 / math.expm1(x)


def steady_identity_residual(result: SteadyStateResult,
                             params: ThreeLevelParams | PolaritonParams) -> float:
    """Defect of the exact steady-state balance between phonon number and
    excited-state population.

    Returns <b+b>_s - n_th + (gamma2/gamma) <sigma22>_s
    - (gamma_p/gamma) <sigma00>_s, which vanishes for the untruncated model;
    what remains measures Fock-truncation error.
    """
    gamma = params.gamma
    if gamma <= 0:
        raise ValueError("identity requires a nonzero phonon decay rate")
    value = result.phonon_number - params.n_th
    value += (params.gamma2 / gamma) * result.sigma22
    value -= (params.gamma_p / gamma) * result.sigma00
    return value


def optimal_regime1(g: float, omega: float) -> OptimalPoint:
    """Optimal pump and decay rate when the lower excited state is long-lived.

    The pump optimum is g / sqrt(2); the decay-rate optimum depends on the
    operating pump strength as sqrt(4 omega**2 + g**4 / omega**2).
    """
    if g <= 0 or omega <= 0:
        raise ValueError("g and omega must be > 0")
    return OptimalPoint(
        omega_opt=g / math.sqrt(2.0),
        gamma2_opt=math.sqrt(4.0 * omega ** 2 + g ** 4 / omega ** 2),
    )


def detuning_strong_pump(delta1: float, omega: float) -> tuple[float, float]:
    """Optimal second detunings when the pump dominates the phonon coupling:
    delta2 = -delta1/2 +- sqrt(delta1**2/4 + omega**2). Returns (plus, minus)."""
    if omega <= 0:
        raise ValueError("omega must be > 0")
    root = math.sqrt(0.25 * delta1 ** 2 + omega ** 2)
    return -0.5 * delta1 + root, -0.5 * delta1 - root


def detuning_strong_coupling(delta2: float, g: float) -> tuple[float, float]:
    """Optimal first detunings when the phonon coupling dominates the pump:
    delta1 = -delta2/2 +- sqrt(delta2**2/4 + g**2). Returns (plus, minus)."""
    if g <= 0:
        raise ValueError("g must be > 0")
    root = math.sqrt(0.25 * delta2 ** 2 + g ** 2)
    return -0.5 * delta2 + root, -0.5 * delta2 - root


def _require_resonant(p: ThreeLevelParams, what: str):
    if p.delta1 != 0.0 or p.delta2 != 0.0:
        raise ValueError(f"{what} is derived at delta1 = delta2 = 0")


def phonon_closed_form_regime1(p: ThreeLevelParams) -> float:
    """Approximate steady phonon number for gamma1 << gamma2 at zero detuning.

    Rational expression in (gamma, gamma2, g, omega, n_th) from the
    single-phonon-restricted model; exact in that restriction when gamma1 is
    negligible. Warns rather than fails when gamma1 is not small, so the
    breakdown of the approximation can be probed.
    """
    _require_resonant(p, "the gamma1 << gamma2 closed form")
    if p.gamma1 >= 1e-2 * p.gamma2:
        warnings.warn(
            f"closed form assumes gamma1 << gamma2; got gamma1/gamma2 = "
            f"{p.gamma1 / p.gamma2 if p.gamma2 > 0 else math.inf:.3g}",
            UserWarning, stacklevel=2,
        )
    ga, g2, g, om, nth = p.gamma, p.gamma2, p.g, p.omega, p.n_th
    g_sq, om_sq = g * g, om * om
    num = ga * nth * (
        2.0 * g2 * (g2 * g2 * om_sq + g_sq * g_sq + 4.0 * om_sq * om_sq)
        + ga * (g2 * g2 * ((g_sq + 4.0 * om_sq) * nth + 2.0 * (g_sq + 2.0 * om_sq))
                + 4.0 * g_sq * (g_sq + 2.0 * om_sq) * (nth + 1.0))
    )
    den = 2.0 * g2 * (
        2.0 * g2 * g_sq * om_sq
        + ga * ((3.0 * g_sq * g_sq + 4.0 * g_sq * om_sq + 8.0 * om_sq * om_sq) * nth
                + 2.0 * (g_sq * g_sq + g_sq * om_sq + 2.0 * om_sq * om_sq)
                + g2 * g2 * om_sq * (2.0 * nth + 1.0))
    )
    if den == 0.0:
        raise ValueError("closed form singular at these parameters (zero denominator)")
    return num / den


def phonon_closed_form_regime2(p: ThreeLevelParams) -> float:
    """Approximate steady phonon number for gamma1 = gamma2 at zero detuning.

    Transcribed x/y rational expression in (gamma, gamma2, g, omega, n_th)
    from the single-phonon-restricted model. Known caveat: unlike the
    gamma1 << gamma2 form, this published expression does not solve the
    restricted model exactly; treat it as indicative away from the deep
    cooling region.
    """
    _require_resonant(p, "the gamma1 = gamma2 closed form")
    if p.gamma1 != p.gamma2:
        warnings.warn(
            f"closed form assumes gamma1 = gamma2; got gamma1 = {p.gamma1}, "
            f"gamma2 = {p.gamma2}",
            UserWarning, stacklevel=2,
        )
    gm, g2, g, om, nth = p.gamma, p.gamma2, p.g, p.omega, p.n_th
    g2_2 = g2 * g2
    g2_4 = g2_2 * g2_2
    g2_6 = g2_4 * g2_2
    g_2, om_2 = g * g, om * om
    g_4, om_4 = g_2 * g_2, om_2 * om_2
    om_6 = om_4 * om_2

    x = gm * (
        2.0 * g2 * (g2_6 + 3.0 * g_4 * om_2 + g2_4 * (2.0 * g_2 + 9.0 * om_2)
                    + g2_2 * (g_4 + 2.0 * g_2 * om_2 + 24.0 * om_4) + 16.0 * om_6)
        + gm * (2.0 * g2_4 * ((11.0 * g_2 + 42.0 * om_2) * nth + 5.0 * g_2 + 27.0 * om_2)
                + 4.0 * g_2 * om_2 * (g_2 + 4.0 * om_2) * (nth + 1.0)
                + g2_2 * (g_4 + 30.0 * g_2 * om_2
                          + (7.0 * g_4 + 16.0 * g_2 * om_2 + 96.0 * om_4) * nth
                          + 72.0 * om_4)
                + 3.0 * g2_6 * (5.0 * nth + 3.0))
    )
    y = 2.0 * g2 * (
        2.0 * g2 * g_2 * om_2 * (g2_2 + 4.0 * om_2)
        + gm * ((g2_2 + 4.0 * om_2) * (g2_4 + g_4 + g2_2 * (2.0 * g_2 + 5.0 * om_2)
                                       + g_2 * om_2 + 4.0 * om_4)
                + nth * (7.0 * g_4 * om_2 + 12.0 * g_2 * om_4
                         + g2_2 * (2.0 * g_4 + 2.0 * g2_2 * (g2_2 + 2.0 * g_2 + 9.0 * om_2)
                                   + 19.0 * g_2 * om_2 + 48.0 * om_4)
                         + 32.0 * om_6))
    )
    if y == 0.0:
        raise ValueError("closed form singular at these parameters (zero denominator)")
    return x / y


def mn_reduced_three_level(p: MnFourLevelParams) -> ThreeLevelParams:
    """Three-level reduction of the shelving four-level model.

    In the fast-shelf-relaxation limit each excited state decays to the
    single ground state at its total rate 2 * gamma2 (direct plus via the
    shelf), so the equivalent equal-decay three-level model uses
    gamma1 = gamma2 = 2 * gamma2.
    """
    return ThreeLevelParams(
        delta1=0.0, delta2=0.0, omega=p.omega, g=p.g,
        gamma1=2.0 * p.gamma2, gamma2=2.0 * p.gamma2,
        gamma=p.gamma, n_th=p.n_th, gamma_d=p.gamma_d,
        fock_cutoff=p.fock_cutoff,
    )
