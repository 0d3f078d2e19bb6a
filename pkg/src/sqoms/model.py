"""Closed-form parameter layer for the squeezed optomechanical cavity.

A two-photon (parametric) drive of amplitude Lambda at detuning Delta_c turns
the cavity into a squeezed mode a_s via the Bogoliubov transformation

    a = cosh(r_d) a_s - exp(-i Phi_d) sinh(r_d) a_s^dag,
    r_d = (1/4) ln[(Delta_c + 2 Lambda) / (Delta_c - 2 Lambda)],

with squeezed-mode frequency omega_s = sqrt(Delta_c^2 - 4 Lambda^2) and
exponentially enhanced optomechanical couplings

    g_s = g0 Delta_c / omega_s = g0 cosh(2 r_d),
    g_p = 2 g0 Lambda / omega_s = g0 sinh(2 r_d).

Seen from the squeezed mode, an injected broadband squeezed vacuum with
squeezing (r_e, Phi_e) acts as a reservoir with effective moments
(Phi = Phi_e - Phi_d)

    N_s = sinh^2(r_d) cosh^2(r_e) + cosh^2(r_d) sinh^2(r_e)
          + (1/2) cos(Phi) sinh(2 r_d) sinh(2 r_e),
    M_s = exp(i Phi_d) [cosh(r_d) cosh(r_e) + exp(-i Phi) sinh(r_d) sinh(r_e)]
                     * [sinh(r_d) cosh(r_e) + exp(+i Phi) cosh(r_d) sinh(r_e)],

which satisfy |M_s|^2 = N_s (N_s + 1) (the effective reservoir stays a pure
squeezed vacuum) and vanish identically when r_e = r_d and Phi is an odd
multiple of pi. N_s is evaluated here through the cancellation-free identity
N_s = sinh^2(r_e - r_d) + (1/2) sinh(2 r_d) sinh(2 r_e) (1 + cos Phi), which
returns exactly 0.0 at the matched point.

All frequencies are in units of the mechanical frequency (omega_m = 1).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field, replace

WEAK_PROBE_RATIO = 0.1


class StabilityDomainError(ValueError):
    """Parameter set lies outside the stable (sub-critical) pump domain."""


@dataclass(frozen=True, kw_only=True)
class SystemConfig:
    """Physical parameters of one simulation point (omega_m = 1 units)."""

    omega_m: float = 1.0
    g0: float = 0.005
    kappa: float = 0.05
    gamma: float = 1e-4
    Delta_c: float
    Lambda: float = 0.0
    Phi_d: float = 0.0
    r_e: float = 0.0
    Phi_e: float = 0.0
    n_th_m: float = 0.0
    eps_l: float = 0.0
    omega_l_s: float = 0.0
    allow_rescale: bool = False
    stability_margin: float = 1e-6

    def __post_init__(self) -> None:
        if self.omega_m <= 0:
            raise ValueError(f"omega_m must be positive, got {self.omega_m}")
        if self.omega_m != 1.0:
            if not self.allow_rescale:
                raise ValueError(
                    "omega_m must be 1 (mechanical-frequency units); "
                    "set allow_rescale=True to rescale all rates by omega_m"
                )
            w = self.omega_m
            for name in ("g0", "kappa", "gamma", "Delta_c", "Lambda", "eps_l", "omega_l_s"):
                object.__setattr__(self, name, getattr(self, name) / w)
            object.__setattr__(self, "omega_m", 1.0)
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.g0 < 0:
            raise ValueError(f"g0 must be >= 0, got {self.g0}")
        if self.Lambda < 0:
            raise ValueError(f"Lambda must be >= 0, got {self.Lambda}")
        if self.r_e < 0:
            raise ValueError(f"r_e must be >= 0, got {self.r_e}")
        if self.n_th_m < 0:
            raise ValueError(f"n_th_m must be >= 0, got {self.n_th_m}")
        if self.eps_l < 0:
            raise ValueError(f"eps_l must be >= 0, got {self.eps_l}")
        margin = self.stability_margin * self.omega_m
        if self.Delta_c - 2.0 * self.Lambda < margin:
            raise StabilityDomainError(
                f"Delta_c - 2*Lambda = {self.Delta_c - 2.0 * self.Lambda:g} is below "
                f"the stability margin {margin:g}; the pump is at or beyond the "
                "parametric instability threshold"
            )
        if self.eps_l > WEAK_PROBE_RATIO * self.kappa:
            warnings.warn(
                f"eps_l = {self.eps_l:g} is not small against kappa = {self.kappa:g}; "
                "the weak-probe reading of the excitation spectrum degrades",
                stacklevel=2,
            )


@dataclass(frozen=True)
class DerivedParams:
    """Closed-form quantities derived from a SystemConfig."""

    r_d: float
    omega_s: float
    g_s: float
    g_p: float
    F: float
    N: float
    M: complex
    N_s: float
    M_s: complex
    Phi: float


def derive_squeezing(cfg: SystemConfig) -> tuple[float, float, float]:
    """Squeeze parameter r_d, mode frequency omega_s, force offset F."""
    r_d = 0.25 * math.log((cfg.Delta_c + 2.0 * cfg.Lambda) / (cfg.Delta_c - 2.0 * cfg.Lambda))
    # product form avoids the Delta_c^2 - 4 Lambda^2 subtraction near threshold
    omega_s = math.sqrt((cfg.Delta_c - 2.0 * cfg.Lambda) * (cfg.Delta_c + 2.0 * cfg.Lambda))
    F = cfg.g0 * math.sinh(r_d) ** 2
    return r_d, omega_s, F


def couplings(cfg: SystemConfig) -> tuple[float, float]:
    """Enhanced single-photon couplings (g_s, g_p) of the squeezed mode."""
    _, omega_s, _ = derive_squeezing(cfg)
    g_s = cfg.g0 * cfg.Delta_c / omega_s
    g_p = 2.0 * cfg.g0 * cfg.Lambda / omega_s
    return g_s, g_p


def bath_moments(cfg: SystemConfig) -> tuple[float, complex]:
    """Injected squeezed-vacuum moments (N, M) in the lab frame."""
    N = math.sinh(cfg.r_e) ** 2
    M = math.sinh(cfg.r_e) * math.cosh(cfg.r_e) * cmath.exp(1j * cfg.Phi_e)
    return N, M


def _effective_bath_brackets(cfg: SystemConfig, r_d: float) -> tuple[float, complex]:
    """(N_s, bracket product) with the exp(i Phi_d) prefactor left off."""
    phi = cfg.Phi_e - cfg.Phi_d
    ch_d, sh_d = math.cosh(r_d), math.sinh(r_d)
    ch_e, sh_e = math.cosh(cfg.r_e), math.sinh(cfg.r_e)
    n_s = math.sinh(cfg.r_e - r_d) ** 2 + 0.5 * math.sinh(2.0 * r_d) * math.sinh(
        2.0 * cfg.r_e
    ) * (1.0 + math.cos(phi))
    b1 = ch_d * ch_e + cmath.exp(-1j * phi) * sh_d * sh_e
    b2 = sh_d * ch_e + cmath.exp(1j * phi) * ch_d * sh_e
    return n_s, b1 * b2


def effective_bath(cfg: SystemConfig, derived: DerivedParams) -> tuple[float, complex]:
    """Effective reservoir moments (N_s, M_s) seen by the squeezed mode."""
    n_s, product = _effective_bath_brackets(cfg, derived.r_d)
    return n_s, cmath.exp(1j * cfg.Phi_d) * product


def effective_bath_in_drive_gauge(
    cfg: SystemConfig, derived: DerivedParams
) -> tuple[float, complex]:
    """(N_s, M_s exp(-i Phi_d)): the two-photon moment in the gauge where the
    squeezed-frame Hamiltonian is phase-free (a_s -> a_s exp(i Phi_d / 2))."""
    return _effective_bath_brackets(cfg, derived.r_d)


def derive_params(cfg: SystemConfig) -> DerivedParams:
    """Assemble every closed-form derived quantity for one configuration."""
    r_d, omega_s, F = derive_squeezing(cfg)
    g_s, g_p = couplings(cfg)
    N, M = bath_moments(cfg)
    phi = cfg.Phi_e - cfg.Phi_d
    partial = DerivedParams(
        r_d=r_d, omega_s=omega_s, g_s=g_s, g_p=g_p, F=F,
        N=N, M=M, N_s=0.0, M_s=0.0 + 0.0j, Phi=phi,
    )
    n_s, m_s = effective_bath(cfg, partial)
    return replace(partial, N_s=n_s, M_s=m_s)


@dataclass(frozen=True)
class RwaReport:
    """Frequency-scale ratios plus a coarse regime classification.

    Regime labels use the declared thresholds, not the paper-style "much
    smaller than": radiation-pressure when the squeezed mode is fast against
    both the mechanics and the pair coupling, parametric when the mode sits
    near half the mechanical frequency with moderate couplings.
    """

    ratios: dict[str, float]
    thresholds: dict[str, float] = field(
        default_factory=lambda: {
            "rp_scale": 10.0,
            "pi_freq_window": 0.1,
            "pi_gs_max": 0.25,
            "pi_gp_ratio_max": 0.5,
        }
    )
    regime: str = "neither"
    squeezing_active: bool = False


def rwa_validity(cfg: SystemConfig, derived: DerivedParams) -> RwaReport:
    """Classify which rotating-wave reduction (if any) is trustworthy."""
    w = cfg.omega_m
    ratios = {
        "g_p_over_omega_s": derived.g_p / derived.omega_s,
        "omega_m_over_omega_s": w / derived.omega_s,
        "g_s_over_omega_m": derived.g_s / w,
        "half_mech_detuning": abs(derived.omega_s - 0.5 * w) / w,
    }
    report = RwaReport(ratios=ratios)
    th = report.thresholds
    if derived.omega_s >= th["rp_scale"] * max(w, derived.g_p):
        regime = "radiation-pressure"
    elif (
        ratios["half_mech_detuning"] <= th["pi_freq_window"]
        and ratios["g_s_over_omega_m"] <= th["pi_gs_max"]
        and ratios["g_p_over_omega_s"] <= th["pi_gp_ratio_max"]
    ):
        regime = "parametric"
    else:
        regime = "neither"
    return replace(report, regime=regime, squeezing_active=derived.r_d > 0.0)


def single_photon_resonance_shift(derived: DerivedParams, omega_m: float = 1.0) -> float:
    """Polaron shift delta = g_s^2 / omega_m of the zero-phonon resonance."""
    return derived.g_s**2 / omega_m


def probe_frequency_for_detuning(
    cfg: SystemConfig, derived: DerivedParams, delta_s: float
) -> SystemConfig:
    """Return cfg with omega_l_s set so the probe detuning omega_s - omega_l_s
    equals delta_s."""
    return replace(cfg, omega_l_s=derived.omega_s - delta_s)
