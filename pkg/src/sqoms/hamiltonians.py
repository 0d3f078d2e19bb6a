"""Hamiltonian builders for the squeezed optomechanical cavity.

Frames and conventions
----------------------

All builders work in the frame rotating at half the pump frequency, in units
of the mechanical frequency. The cavity phase gauge absorbs the pump phase
(a_s -> a_s exp(i Phi_d / 2)), so every static builder below is exactly the
phase-free form:

* ``build_original``  - lab cavity mode with the parametric pump kept
  explicitly: Delta_c a^dag a + Lambda (a^dag^2 e^{-i Phi_d} + a^2 e^{+i Phi_d})
  + omega_m b^dag b + F (b^dag + b) - g0 a^dag a (b^dag + b).
* ``build_squeezed``  - Bogoliubov frame of the same system:
  omega_s a_s^dag a_s + omega_m b^dag b - g_s a_s^dag a_s (b^dag + b)
  + (g_p / 2)(a_s^dag^2 + a_s^2)(b^dag + b).
  Exact diagonalization also produces the c-number (omega_s - Delta_c)/2,
  which this builder omits (matching the usual normal-ordered convention);
  spectra of the two builders therefore differ by exactly that constant.
* ``build_rwa_oms``   - fast squeezed mode (omega_s >> omega_m, g_p): drop the
  pair term, leaving the standard radiation-pressure form with coupling g_s.
* ``build_parametric_pi`` - squeezed mode near half the mechanical frequency:
  keep only the resonant pair exchange g_p (a_s^2 b^dag + a_s^dag^2 b). This
  variant conserves a_s^dag a_s + 2 b^dag b.
* ``build_probed``    - adds the weak probe. In the gauged frame the two
  tones are eps_l cosh(r_d) e^{+i Phi_d/2} a_s^dag at +omega_l_s and
  -eps_l sinh(r_d) e^{-i Phi_d/2} a_s^dag at -omega_l_s (plus conjugates);
  at Phi_d = 0 this is the familiar two-tone form of the transformed probe.
  With ``rwa=True`` only the cosh tone on top of ``build_rwa_oms`` survives.

``rotate_probe_frame`` moves a single-tone probed Hamiltonian into the frame
rotating at the probe frequency, producing a static operator with
Delta_s = omega_s - omega_l_s in place of omega_s. The cavity dissipators are
form-invariant under that rotation, but any two-photon bath terms acquire
e^{+/- 2 i omega_l_s t} phases; the master-equation module owns that policy.
"""

from __future__ import annotations

import cmath
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .fock import (
    Operator,
    SpaceDims,
    cavity_annihilator,
    cavity_number,
    mech_annihilator,
    mech_number,
)
from .model import DerivedParams, SystemConfig


class Variant(enum.Enum):
    ORIGINAL = "original"
    SQUEEZED_FULL = "squeezed_full"
    RWA_OMS = "rwa_oms"
    PARAMETRIC_PI = "parametric_pi"
    PROBED_EXACT = "probed_exact"
    PROBED_RWA = "probed_rwa"


class UnsupportedFrameError(ValueError):
    """Requested frame transformation is not available for this Hamiltonian."""


@dataclass(frozen=True)
class DriveTerm:
    """One tone: amplitude * exp(-i frequency t) * op + Hermitian conjugate."""

    op: Operator
    amplitude: complex
    frequency: float


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """Static part plus a sum of harmonic drive tones."""

    static_part: Operator
    drive_terms: tuple[DriveTerm, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.static_part.dims

    def evaluate(self, t: float) -> Operator:
        h = self.static_part
        for term in self.drive_terms:
            phase = term.amplitude * cmath.exp(-1j * term.frequency * t)
            h = h + phase * term.op + phase.conjugate() * term.op.dag()
        return h


@dataclass(frozen=True)
class HamiltonianSpec:
    variant: Variant
    cfg: SystemConfig
    derived: DerivedParams
    dims: SpaceDims
    rwa: bool = True


def _mech_position(dims: SpaceDims) -> Operator:
    b = mech_annihilator(dims)
    return b + b.dag()


def build_original(cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims) -> Operator:
    """Lab-frame cavity with explicit parametric pump and force compensation."""
    if cfg.Lambda > 0 and dims.n_cav < 4:
        warnings.warn(
            f"n_cav = {dims.n_cav} leaves no room for pair creation by the "
            "parametric pump; the pumped cavity is not represented meaningfully",
            stacklevel=2,
        )
    a = cavity_annihilator(dims)
    n_c = cavity_number(dims)
    n_m = mech_number(dims)
    x_m = _mech_position(dims)
    pump = cmath.exp(1j * cfg.Phi_d) * (a @ a)
    h = (
        cfg.Delta_c * n_c
        + cfg.Lambda * (pump.dag() + pump)
        + cfg.omega_m * n_m
        + derived.F * x_m
        - cfg.g0 * (n_c @ x_m)
    )
    return h


def build_squeezed(cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims) -> Operator:
    """Bogoliubov (squeezed-mode) frame with the pair coupling kept."""
    a = cavity_annihilator(dims)
    n_c = cavity_number(dims)
    n_m = mech_number(dims)
    x_m = _mech_position(dims)
    aa = a @ a
    h = (
        derived.omega_s * n_c
        + cfg.omega_m * n_m
        - derived.g_s * (n_c @ x_m)
        + 0.5 * derived.g_p * ((aa.dag() + aa) @ x_m)
    )
    return h


def build_rwa_oms(cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims) -> Operator:
    """Radiation-pressure reduction: fast squeezed mode, pair term dropped."""
    n_c = cavity_number(dims)
    n_m = mech_number(dims)
    h = (
        derived.omega_s * n_c
        + cfg.omega_m * n_m
        - derived.g_s * (n_c @ _mech_position(dims))
    )
    return h


def build_parametric_pi(cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims) -> Operator:
    """Resonant pair-exchange reduction near omega_s = omega_m / 2."""
    a = cavity_annihilator(dims)
    b = mech_annihilator(dims)
    n_c = cavity_number(dims)
    n_m = mech_number(dims)
    pair = (a @ a) @ b.dag()
    h = derived.omega_s * n_c + cfg.omega_m * n_m + derived.g_p * (pair + pair.dag())
    return h


def build_probed(
    cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims, *, rwa: bool
) -> TimeDependentHamiltonian:
    """Weak probe added to the squeezed frame (full) or its RWA reduction."""
    adag = cavity_annihilator(dims).dag()
    half_phase = cmath.exp(0.5j * cfg.Phi_d)
    cosh_amp = cfg.eps_l * math.cosh(derived.r_d) * half_phase
    if rwa:
        static = build_rwa_oms(cfg, derived, dims)
        terms = (DriveTerm(adag, cosh_amp, cfg.omega_l_s),)
    else:
        static = build_squeezed(cfg, derived, dims)
        sinh_amp = -cfg.eps_l * math.sinh(derived.r_d) / half_phase
        terms = (
            DriveTerm(adag, cosh_amp, cfg.omega_l_s),
            DriveTerm(adag, sinh_amp, -cfg.omega_l_s),
        )
    return TimeDependentHamiltonian(static, terms)


def build_probed_rotated(
    cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims
) -> TimeDependentHamiltonian:
    """Exact probed Hamiltonian rewritten in the probe rotating frame.

    Physically identical to ``build_probed(..., rwa=False)`` — same dynamics,
    different frame: the co-rotating probe tone becomes static while the
    pair coupling and the sinh probe tone appear as explicit tones at
    -2 omega_l_s. Dropping those two tones recovers the static RWA form, so
    this representation isolates exactly what the rotating-wave
    approximation removes. The frame rotation is generated by the cavity
    number operator, under which plain D dissipators are invariant; use this
    builder only when no two-photon G dissipators are present (they would
    acquire e^{+/-2i omega_l_s t} phases).
    """
    a = cavity_annihilator(dims)
    adag = a.dag()
    x_m = _mech_position(dims)
    half_phase = cmath.exp(0.5j * cfg.Phi_d)
    static = build_rwa_oms(cfg, derived, dims) - cfg.omega_l_s * cavity_number(dims)
    cosh_amp = cfg.eps_l * math.cosh(derived.r_d) * half_phase
    static = static + cosh_amp * adag + complex(cosh_amp).conjugate() * a
    pair_op = (0.5 * derived.g_p) * ((adag @ adag) @ x_m)
    sinh_amp = -cfg.eps_l * math.sinh(derived.r_d) / half_phase
    terms = (
        DriveTerm(pair_op, 1.0, -2.0 * cfg.omega_l_s),
        DriveTerm(adag, sinh_amp, -2.0 * cfg.omega_l_s),
    )
    return TimeDependentHamiltonian(static, terms)


def build(spec: HamiltonianSpec):
    """Dispatch on the variant enum; probed variants return the
    time-dependent container."""
    builders = {
        Variant.ORIGINAL: build_original,
        Variant.SQUEEZED_FULL: build_squeezed,
        Variant.RWA_OMS: build_rwa_oms,
        Variant.PARAMETRIC_PI: build_parametric_pi,
    }
    if spec.variant in builders:
        return builders[spec.variant](spec.cfg, spec.derived, spec.dims)
    if spec.variant is Variant.PROBED_EXACT:
        return build_probed(spec.cfg, spec.derived, spec.dims, rwa=False)
    if spec.variant is Variant.PROBED_RWA:
        return build_probed(spec.cfg, spec.derived, spec.dims, rwa=True)
    raise ValueError(f"unknown variant {spec.variant!r}")


def rotate_probe_frame(
    h: TimeDependentHamiltonian, derived: DerivedParams
) -> Operator:
    """Static Hamiltonian in the frame rotating at the (single) probe tone.

    Requires every drive tone to share one frequency; the exact two-tone
    probe has tones at +/- omega_l_s and admits no static frame, in which
    case an UnsupportedFrameError explains the obstruction.
    """
    if not h.drive_terms:
        raise UnsupportedFrameError("Hamiltonian carries no drive tone to rotate with")
    freqs = {term.frequency for term in h.drive_terms}
    if len(freqs) != 1:
        raise UnsupportedFrameError(
            f"drive tones at frequencies {sorted(freqs)} are incommensurate with a "
            "single rotating frame; use time-domain evolution instead"
        )
    (freq,) = freqs
    dims = h.static_part.dims
    if len(dims) != 2:
        raise UnsupportedFrameError("expected a cavity (x) mechanics product space")
    n_c = cavity_number(SpaceDims(dims[0], dims[1], cap=dims[0] * dims[1]))
    rotated = h.static_part - freq * n_c
    for term in h.drive_terms:
        rotated = rotated + term.amplitude * term.op + complex(term.amplitude).conjugate() * term.op.dag()
    return rotated


def level_structure(
    cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims, k: int
) -> np.ndarray:
    """Lowest k eigenvalues (ascending) of the radiation-pressure form.

    The polaron transform gives E(n, m) = omega_s n - g_s^2 n^2 / omega_m
    + omega_m m exactly in the untruncated limit; this routine diagonalizes
    the truncated operator so truncation effects stay visible.
    """
    if not 1 <= k <= dims.total:
        raise ValueError(f"k must lie in [1, {dims.total}], got {k}")
    h = build_rwa_oms(cfg, derived, dims)
    return _lowest_eigvals(h, k)


def _lowest_eigvals(h: Operator, k: int, dense_cutoff: int = 2000) -> np.ndarray:
    dim = h.shape[0]
    if dim <= dense_cutoff or k >= dim - 1:
        vals = np.linalg.eigvalsh(h.to_dense())
        return vals[:k]
    vals = spla.eigsh(h.matrix, k=k, which="SA", return_eigenvectors=False)
    return np.sort(vals)


def frame_equivalence_offset(cfg: SystemConfig, derived: DerivedParams) -> float:
    """C-number separating the original- and squeezed-frame spectra.

    Diagonalizing the pumped cavity produces omega_s a_s^dag a_s plus the
    constant (omega_s - Delta_c)/2, which the squeezed-frame builder omits.
    """
    return 0.5 * (derived.omega_s - cfg.Delta_c)
