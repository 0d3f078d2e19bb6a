"""Physics-level measurements: spectra, photon correlations, parameter sweeps.

Frame policies
--------------

Long-time expectation values under the weak probe are computed by one of
three routes, selected by ``frame_policy``:

* ``"secular"`` — probe rotating frame. The Hamiltonian is the
  radiation-pressure form plus the co-rotating probe tone, made static by
  rotating at the probe frequency; counter-rotating pieces (the pair
  coupling g_p and the sinh probe tone, both detuned by ~2 omega_s) are
  dropped, and any two-photon G dissipators are kept with frozen phases.
  Everything reduces to a sparse steady-state solve — fast, and exact at the
  phase-matched point up to the rotating-wave approximation since the G
  terms vanish there identically.
* ``"timedomain"`` — half-pump-frequency frame. The full squeezed-frame
  Hamiltonian (pair coupling included) is kept with both probe tones
  explicitly time dependent; the dissipators are static in this frame with
  no approximation. Long-time values are drive-period averages
  (``master.quasi_steady_average``). Exact but orders of magnitude slower.
* ``"auto"`` — ``"secular"`` whenever the dissipator set carries no G term
  (true at phase matching, where the static route loses nothing beyond the
  RWA), ``"timedomain"`` otherwise.

The G terms are the only dissipators that acquire e^{±2i omega_l_s t}
phases under the probe-frame rotation (plain D terms are invariant), which
is why their presence is the policy switch.

Definitions
-----------

* Excitation spectrum: S(Delta_s) = (lim_t <a_s^dag a_s> - N_s)/n_0 with
  n_0 = 4 eps_l^2 / kappa^2 and Delta_s = omega_s - omega_l_s swept by
  moving the probe frequency.
* Steady-state correlation: g2_ss(0) = <a_s^dag a_s^dag a_s a_s>/<a_s^dag
  a_s>^2, probed at the single-photon resonance Delta_s = g_s^2/omega_m
  unless overridden.
* Blockade maps sweep g2_ss(0) along Phi, n_th_m, or Delta_c_tilde =
  Delta_c - 2 Lambda, masking the region g2 < 0.1.

Sweep outputs are plain arrays consumed by the command-line layer; this
module performs no file I/O. Sweep points are independent and may be
dispatched to a process pool; results are always assembled in input order.
"""

from __future__ import annotations

import concurrent.futures
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .fock import Operator, SpaceDims, cavity_annihilator, tensor, thermal_state
from .hamiltonians import build_probed, build_probed_rotated, rotate_probe_frame
from .master import (
    ConvergenceError,
    StiffnessError,
    build_liouvillian,
    evolve,
    expectation_of,
    quasi_steady_average,
    standard_dissipators,
    steady_state,
)
from .model import (
    DerivedParams,
    StabilityDomainError,
    SystemConfig,
    derive_params,
    probe_frequency_for_detuning,
    single_photon_resonance_shift,
)

BLOCKADE_THRESHOLD = 0.1
POPULATION_GUARD = 1e-10
NEGATIVE_S_TOL = -1e-6
SIDEBAND_WINDOW = 0.35  # half-width of the per-order sideband search window, in omega_m

_POLICIES = ("auto", "secular", "timedomain")


class VanishingPopulationError(RuntimeError):
    """Cavity population below the guard; correlation ratio undefined."""


# ---------------------------------------------------------------------------
# Result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumResult:
    """Excitation spectrum over an ascending Delta_s grid."""

    delta_s: np.ndarray
    S: np.ndarray
    n_0: float
    N_s: float
    metadata: dict
    failures: tuple[tuple[int, str], ...] = ()
    negative_indices: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if np.any(np.diff(self.delta_s) <= 0):
            raise ValueError("Delta_s grid must be strictly ascending")


@dataclass(frozen=True)
class BlockadeMap:
    """g2_ss(0) along one axis with the blockade-region mask."""

    axis_name: str
    axis_values: np.ndarray
    g2: np.ndarray
    mask: np.ndarray
    failures: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class TrajectoryResult:
    """g2(0) sampled along a time grid for one Hamiltonian variant."""

    times: np.ndarray
    g2: np.ndarray
    variant: str
    n_values: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CouplingTable:
    """Closed-form coupling ratios along a Lambda or Delta_c sweep."""

    axis_name: str
    axis_values: np.ndarray
    Lambda: np.ndarray
    Delta_c: np.ndarray
    g_s_over_kappa: np.ndarray
    g_p_over_kappa: np.ndarray
    omega_s_over_omega_m: np.ndarray
    g_s_over_omega_m: np.ndarray
    g_p_over_omega_s: np.ndarray
    skipped: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class NoiseTable:
    """Effective bath moments over a (Phi, delta_r) product grid."""

    phi_values: np.ndarray
    delta_r_values: np.ndarray
    N_s: np.ndarray  # shape (len(phi), len(delta_r))
    abs_M_s: np.ndarray
    argmin_delta_r: np.ndarray  # per-Phi delta_r minimizing N_s


# ---------------------------------------------------------------------------
# Policy plumbing
# ---------------------------------------------------------------------------


def _resolve_policy(
    policy: str, cfg: SystemConfig, derived: DerivedParams, dims: SpaceDims
) -> str:
    if policy not in _POLICIES:
        raise ValueError(f"frame_policy must be one of {_POLICIES}, got {policy!r}")
    if policy != "auto":
        return policy
    diss = standard_dissipators(cfg, derived, dims)
    has_g = any(term.kind == "G" for term in diss.terms)
    return "timedomain" if has_g else "secular"


def _cavity_moment_ops(dims: SpaceDims) -> tuple[Operator, Operator]:
    a = cavity_annihilator(dims)
    n_op = Operator(a.dag().matrix @ a.matrix, dims.shape)
    a4 = Operator(
        a.dag().matrix @ a.dag().matrix @ a.matrix @ a.matrix, dims.shape
    )
    return n_op, a4


def _longtime_moments(
    cfg: SystemConfig,
    derived: DerivedParams,
    dims: SpaceDims,
    policy: str,
) -> tuple[float, float]:
    """Long-time (<n>, <a^dag a^dag a a>) under the probe, by the given policy."""
    n_op, a4 = _cavity_moment_ops(dims)
    if policy == "secular":
        h_rot = rotate_probe_frame(build_probed(cfg, derived, dims, rwa=True), derived)
        diss = standard_dissipators(cfg, derived, dims)
        rho = steady_state(build_liouvillian(h_rot, diss))
        return (
            float(expectation_of(rho, n_op).real),
            float(expectation_of(rho, a4).real),
        )
    drive = build_probed(cfg, derived, dims, rwa=False)
    n_val, a4_val = quasi_steady_average(cfg, derived, dims, drive, (n_op, a4))
    return float(n_val), float(a4_val)


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------


def excitation_spectrum(
    cfg: SystemConfig,
    derived: DerivedParams,
    dims: SpaceDims,
    delta_s_grid,
    *,
    frame_policy: str = "auto",
    workers: int = 1,
) -> SpectrumResult:
    """S(Delta_s) on the given grid; per-point failures retained as NaN.

    Each grid point re-targets the probe (omega_l_s = omega_s - Delta_s) and
    computes the long-time cavity occupation by the resolved frame policy.
    Values below -1e-6 are physically impossible and get flagged (never
    clamped); small negative excursions can occur off resonance when the
    N_s background is subtracted.
    """
    if cfg.eps_l <= 0:
        raise ValueError("excitation_spectrum requires eps_l > 0")
    grid = np.asarray(delta_s_grid, dtype=float)
    policy = _resolve_policy(frame_policy, cfg, derived, dims)
    n_0 = 4.0 * cfg.eps_l**2 / cfg.kappa**2

    tasks = [
        (probe_frequency_for_detuning(cfg, derived, float(ds)), derived, dims, policy)
        for ds in grid
    ]
    outcomes = _map_ordered(_spectrum_point, tasks, workers)

    s_vals = np.full(grid.shape, np.nan)
    failures = []
    for i, outcome in enumerate(outcomes):
        if isinstance(outcome, str):
            failures.append((i, outcome))
        else:
            s_vals[i] = (outcome - derived.N_s) / n_0
    negative = tuple(int(i) for i in np.nonzero(s_vals < NEGATIVE_S_TOL)[0])
    if negative:
        warnings.warn(
            f"S(Delta_s) dips below {NEGATIVE_S_TOL} at {len(negative)} grid "
            "points; values reported raw",
            stacklevel=2,
        )
    return SpectrumResult(
        delta_s=grid,
        S=s_vals,
        n_0=n_0,
        N_s=derived.N_s,
        metadata={
            "Phi": derived.Phi,
            "Delta_c_tilde": cfg.Delta_c - 2.0 * cfg.Lambda,
            "truncation": dims.shape,
            "frame_policy": policy,
        },
        failures=tuple(failures),
        negative_indices=negative,
    )


def _spectrum_point(task) -> float | str:
    cfg_pt, derived, dims, policy = task
    try:
        n_val, _ = _longtime_moments(cfg_pt, derived, dims, policy)
        return n_val
    except (ConvergenceError, StiffnessError) as exc:
        return f"{type(exc).__name__}: {exc}"


@dataclass(frozen=True)
class SpectralPeaks:
    """Quadratically refined peak positions extracted from a spectrum."""

    zero_phonon: float
    zero_phonon_height: float
    sidebands: tuple[float, ...]


def spectral_peaks(
    result: SpectrumResult, *, omega_m: float = 1.0, max_orders: int = 6
) -> SpectralPeaks:
    """Zero-phonon peak plus the phonon-sideband comb.

    The zero-phonon line is the global maximum, refined by a three-point
    quadratic fit. Sidebands are searched one mechanical quantum at a time
    in windows zero_phonon + m*omega_m +/- 0.35 omega_m; a window counts
    only if its best point is a genuine local maximum of the full curve.
    """
    s = result.S
    grid = result.delta_s
    finite = np.isfinite(s)
    if not finite.any():
        raise ValueError("spectrum contains no finite values to search")
    idx = int(np.nanargmax(s))
    zpl = _quadratic_refine(grid, s, idx)
    sidebands = []
    for m in range(1, max_orders + 1):
        center = zpl + m * omega_m
        lo, hi = center - SIDEBAND_WINDOW * omega_m, center + SIDEBAND_WINDOW * omega_m
        window = np.nonzero((grid >= lo) & (grid <= hi) & finite)[0]
        if window.size == 0:
            break
        j = int(window[np.nanargmax(s[window])])
        if 0 < j < len(s) - 1 and s[j] >= s[j - 1] and s[j] >= s[j + 1]:
            sidebands.append(_quadratic_refine(grid, s, j))
    return SpectralPeaks(
        zero_phonon=zpl,
        zero_phonon_height=float(s[idx]),
        sidebands=tuple(sidebands),
    )


def _quadratic_refine(x: np.ndarray, y: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(y) - 1:
        return float(x[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if not np.isfinite(denom) or denom == 0:
        return float(x[i])
    shift = 0.5 * (y0 - y2) / denom
    shift = max(-0.5, min(0.5, float(shift)))
    step = 0.5 * (x[i + 1] - x[i - 1])
    return float(x[i] + shift * step)


# ---------------------------------------------------------------------------
# Photon correlations
# ---------------------------------------------------------------------------


def g2_steady(
    cfg: SystemConfig,
    derived: DerivedParams,
    dims: SpaceDims,
    *,
    delta_s: float | None = None,
    frame_policy: str = "auto",
) -> float:
    """Steady-state g2(0) at the single-photon resonance (or a given Delta_s)."""
    if cfg.eps_l <= 0:
        raise ValueError("g2_steady requires eps_l > 0")
    if delta_s is None:
        delta_s = single_photon_resonance_shift(derived, cfg.omega_m)
    cfg_pt = probe_frequency_for_detuning(cfg, derived, delta_s)
    policy = _resolve_policy(frame_policy, cfg_pt, derived, dims)
    n_val, a4_val = _longtime_moments(cfg_pt, derived, dims, policy)
    if n_val < POPULATION_GUARD:
        raise VanishingPopulationError(
            f"<a_s^dag a_s> = {n_val:.2e} is below the {POPULATION_GUARD:.0e} guard; "
            "g2(0) is undefined at negligible population"
        )
    return a4_val / n_val**2


def g2_transient(
    cfg: SystemConfig,
    derived: DerivedParams,
    dims: SpaceDims,
    t_grid,
    *,
    exact: bool,
    initial_cavity_occupancy: float | None = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> TrajectoryResult:
    """g2(0) along a trajectory from a thermal-cavity x vacuum start.

    The cavity starts thermal with occupancy N_s (vacuum at phase matching)
    unless overridden; the mechanics starts in vacuum. ``exact=True`` keeps
    the full squeezed-frame Hamiltonian with both probe tones time dependent
    (half-pump-frequency frame); ``exact=False`` uses the radiation-pressure
    form with the single co-rotating tone in the static probe frame. g2 is
    reported as NaN wherever the population is below the guard — an
    undriven vacuum start yields an all-NaN (empty) trajectory rather than
    0/0 noise.
    """
    times = np.asarray(t_grid, dtype=float)
    if initial_cavity_occupancy is None:
        initial_cavity_occupancy = derived.N_s
    rho0 = tensor(
        thermal_state(initial_cavity_occupancy, dims.n_cav),
        thermal_state(0.0, dims.n_mech),
    )
    diss = standard_dissipators(cfg, derived, dims)
    has_g = any(term.kind == "G" for term in diss.terms)
    if exact:
        # With rotation-invariant dissipators the probe frame carries the
        # exact dynamics with far slower phases than the half-pump frame.
        h_t = (
            build_probed(cfg, derived, dims, rwa=False)
            if has_g
            else build_probed_rotated(cfg, derived, dims)
        )
        liouvillian = build_liouvillian(h_t, diss)
    else:
        h_rot = rotate_probe_frame(build_probed(cfg, derived, dims, rwa=True), derived)
        liouvillian = build_liouvillian(h_rot, diss)
    n_op, a4 = _cavity_moment_ops(dims)
    res = evolve(
        liouvillian,
        rho0,
        times,
        observables=(n_op, a4),
        rtol=rtol,
        atol=atol,
    )
    n_vals = res.expectations[0].real
    a4_vals = res.expectations[1].real
    g2 = np.full(times.shape, np.nan)
    defined = n_vals > POPULATION_GUARD
    g2[defined] = a4_vals[defined] / n_vals[defined] ** 2
    return TrajectoryResult(
        times=times,
        g2=g2,
        variant="exact" if exact else "rwa",
        n_values=n_vals,
        diagnostics={
            "trace_drift": res.trace_drift,
            "min_eigenvalue": res.min_eigenvalue,
            "positivity_ok": res.positivity_ok,
            "step_count": res.step_count,
        },
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

_BLOCKADE_AXES = ("Phi", "n_th_m", "Delta_c_tilde")


def resolve_sweep_point(
    template: SystemConfig, axis: str, value: float, *, match_r_e: bool = True
) -> tuple[SystemConfig, DerivedParams]:
    """Template config with one axis value applied and r_e optionally re-matched.

    ``Phi`` moves the reservoir phase Phi_e (the pump phase is held), and
    ``Delta_c_tilde`` moves Delta_c = 2 Lambda + value. With ``match_r_e``
    the reservoir squeezing tracks the pump (r_e = r_d re-derived per point).
    """
    if axis == "Phi":
        cfg_pt = replace(template, Phi_e=float(value))
    elif axis == "n_th_m":
        cfg_pt = replace(template, n_th_m=float(value))
    elif axis == "Delta_c_tilde":
        cfg_pt = replace(template, Delta_c=2.0 * template.Lambda + float(value))
    else:
        raise ValueError(f"axis must be one of {_BLOCKADE_AXES}, got {axis!r}")
    if match_r_e:
        base = derive_params(cfg_pt)
        cfg_pt = replace(cfg_pt, r_e=base.r_d)
    return cfg_pt, derive_params(cfg_pt)


def blockade_map(
    template: SystemConfig,
    axis: str,
    grid,
    dims: SpaceDims,
    *,
    frame_policy: str = "secular",
    match_r_e: bool = True,
    workers: int = 1,
) -> BlockadeMap:
    """g2_ss(0) swept along Phi, n_th_m, or Delta_c_tilde.

    Each point re-derives the squeezed-frame parameters and the probe
    detuning Delta_s = g_s^2/omega_m, so the probe tracks the single-photon
    resonance across the sweep. Failures are recorded per point and leave
    NaN in the map.
    """
    if axis not in _BLOCKADE_AXES:
        raise ValueError(f"axis must be one of {_BLOCKADE_AXES}, got {axis!r}")
    values = np.asarray(grid, dtype=float)
    tasks = [
        (template, axis, float(v), dims, frame_policy, match_r_e) for v in values
    ]
    outcomes = _map_ordered(_blockade_point, tasks, workers)
    g2_vals = np.full(values.shape, np.nan)
    failures = []
    for i, outcome in enumerate(outcomes):
        if isinstance(outcome, str):
            failures.append((i, outcome))
        else:
            g2_vals[i] = outcome
    mask = np.where(np.isfinite(g2_vals), g2_vals < BLOCKADE_THRESHOLD, False)
    return BlockadeMap(
        axis_name=axis,
        axis_values=values,
        g2=g2_vals,
        mask=mask,
        failures=tuple(failures),
    )


def _blockade_point(task) -> float | str:
    template, axis, value, dims, frame_policy, match_r_e = task
    try:
        cfg_pt, derived_pt = resolve_sweep_point(
            template, axis, value, match_r_e=match_r_e
        )
        return g2_steady(cfg_pt, derived_pt, dims, frame_policy=frame_policy)
    except (
        ConvergenceError,
        StiffnessError,
        VanishingPopulationError,
        StabilityDomainError,
    ) as exc:
        return f"{type(exc).__name__}: {exc}"


def coupling_sweep(template: SystemConfig, axis: str, grid) -> CouplingTable:
    """Closed-form coupling ratios along a Lambda or Delta_c sweep.

    Sweep points outside the stability domain (Delta_c <= 2 Lambda) are
    skipped with the reason recorded; everything else is a pure function of
    the inputs with no truncation dependence.
    """
    if axis not in ("Lambda", "Delta_c"):
        raise ValueError(f"axis must be 'Lambda' or 'Delta_c', got {axis!r}")
    values = np.asarray(grid, dtype=float)
    n = values.size
    lam = np.full(n, np.nan)
    dc = np.full(n, np.nan)
    gs_k = np.full(n, np.nan)
    gp_k = np.full(n, np.nan)
    ws_wm = np.full(n, np.nan)
    gs_wm = np.full(n, np.nan)
    gp_ws = np.full(n, np.nan)
    skipped = []
    for i, v in enumerate(values):
        cfg_pt = replace(template, **{axis: float(v)})
        try:
            cfg_pt = replace(cfg_pt)  # re-run validation
            derived = derive_params(cfg_pt)
        except (StabilityDomainError, ValueError) as exc:
            skipped.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        lam[i] = cfg_pt.Lambda
        dc[i] = cfg_pt.Delta_c
        gs_k[i] = derived.g_s / cfg_pt.kappa
        gp_k[i] = derived.g_p / cfg_pt.kappa
        ws_wm[i] = derived.omega_s / cfg_pt.omega_m
        gs_wm[i] = derived.g_s / cfg_pt.omega_m
        gp_ws[i] = derived.g_p / derived.omega_s
    return CouplingTable(
        axis_name=axis,
        axis_values=values,
        Lambda=lam,
        Delta_c=dc,
        g_s_over_kappa=gs_k,
        g_p_over_kappa=gp_k,
        omega_s_over_omega_m=ws_wm,
        g_s_over_omega_m=gs_wm,
        g_p_over_omega_s=gp_ws,
        skipped=tuple(skipped),
    )


def noise_sweep(template: SystemConfig, phi_grid, delta_r_grid) -> NoiseTable:
    """Effective bath moments N_s, |M_s| over a (Phi, delta_r) grid.

    delta_r shifts the reservoir squeezing relative to the pump:
    r_e = r_d + delta_r, which must stay nonnegative. The per-Phi argmin of
    N_s over delta_r is recorded (it drifts away from 0 as Phi leaves pi).
    """
    phis = np.asarray(phi_grid, dtype=float)
    drs = np.asarray(delta_r_grid, dtype=float)
    base = derive_params(template)
    r_d = base.r_d
    bad = drs[r_d + drs < 0.0]
    if bad.size:
        raise ValueError(
            f"delta_r values {bad.tolist()} give negative reservoir squeezing "
            f"(r_d = {r_d:.6g})"
        )
    n_s = np.empty((phis.size, drs.size))
    abs_m = np.empty_like(n_s)
    for i, phi in enumerate(phis):
        for j, dr in enumerate(drs):
            cfg_pt = replace(template, Phi_e=float(phi), r_e=float(r_d + dr))
            derived = derive_params(cfg_pt)
            n_s[i, j] = derived.N_s
            abs_m[i, j] = abs(derived.M_s)
    argmin = drs[np.argmin(n_s, axis=1)]
    return NoiseTable(
        phi_values=phis,
        delta_r_values=drs,
        N_s=n_s,
        abs_M_s=abs_m,
        argmin_delta_r=argmin,
    )


# ---------------------------------------------------------------------------
# Ordered parallel map
# ---------------------------------------------------------------------------


def _map_ordered(fn, tasks, workers: int):
    """Apply fn over tasks, preserving input order; optional process pool."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
