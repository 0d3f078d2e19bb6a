"""Command-line front end: scenario configs, figure presets, CSV emission.

Config format
-------------

Flat key-value text with ``[section]`` headers, ``key = value`` lines,
``#``/``;`` comments, and decimal numbers with optional exponent notation.
Sections and keys are validated strictly — unknown names are rejected with
the offending field spelled out. Two system fields accept sentinels:
``r_e = match`` ties the reservoir squeezing to the pump (re-derived per
sweep point) and ``omega_l_s = auto`` lets the probe frequency track the
requested detuning axis.

Scenario kinds: ``coupling`` (closed-form coupling ratios), ``noise``
(closed-form bath moments), ``spectrum`` (excitation spectrum S(Delta_s)),
``blockade`` (g2_ss(0) sweeps), ``g2_transient`` (g2(0) trajectories).

Outputs
-------

Every run writes one CSV (header row, ``#`` comment block carrying the
manifest hash) plus a manifest in the same key-value format as configs: the
resolved config echo followed by ``[derived]``, ``[convergence]``, ``[run]``
and ``[integrity]`` sections, which are ignored when a manifest is re-parsed
as a config. The manifest hash covers the config echo and the derived and
convergence blocks — never wall time — so identical configs produce
byte-identical CSVs.

Exit codes: 0 success, 1 validation error, 2 numerical failure (every sweep
point failed), 3 partial success (some points failed).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .fock import DimensionError, SpaceDims
from .model import (
    StabilityDomainError,
    SystemConfig,
    derive_params,
    probe_frequency_for_detuning,
    rwa_validity,
    single_photon_resonance_shift,
)
from .observables import (
    blockade_map,
    coupling_sweep,
    excitation_spectrum,
    g2_transient,
    noise_sweep,
    resolve_sweep_point,
)

CHECK_DEFAULT_TOL = 0.01
CHECK_SUBSAMPLE = 5
CHECK_ENLARGE = (2, 4)  # added to (n_cav, n_mech)

_KINDS = ("coupling", "noise", "spectrum", "blockade", "g2_transient")
_SPACINGS = ("linear", "log", "critlog")
_AXES_BY_KIND = {
    "coupling": ("Lambda", "Delta_c"),
    "noise": ("Phi", "delta_r"),
    "spectrum": ("Delta_s",),
    "blockade": ("Phi", "n_th_m", "Delta_c_tilde"),
    "g2_transient": ("t",),
}
_CURVE_AXES_BY_KIND = {
    "coupling": (),
    "noise": ("Phi", "delta_r"),
    "spectrum": ("Delta_c_tilde",),
    "blockade": ("Delta_c_tilde",),
    "g2_transient": (),
}

_SYSTEM_FIELDS = (
    "omega_m",
    "g0",
    "kappa",
    "gamma",
    "Delta_c",
    "Lambda",
    "Phi_d",
    "r_e",
    "Phi_e",
    "n_th_m",
    "eps_l",
    "omega_l_s",
)
_SWEEP_FIELDS = ("axis", "start", "stop", "count", "spacing", "curve_axis", "curve_values", "variants")
_TRUNCATION_FIELDS = ("n_cav", "n_mech")
_SOLVER_FIELDS = (
    "frame_policy",
    "rtol",
    "atol",
    "t_end",
    "steady_solver",
    "direct_dim_max",
    "workers",
    "initial_cavity_occupancy",
)
_OUTPUT_FIELDS = ("path",)
_SCENARIO_FIELDS = ("name", "kind")
_MANIFEST_ONLY_SECTIONS = ("derived", "convergence", "run", "integrity")


class ConfigError(ValueError):
    """Invalid scenario configuration; message names the offending field."""


@dataclass(frozen=True)
class SystemSpec:
    """System block with sentinels kept symbolic until compute time."""

    omega_m: float = 1.0
    g0: float = 0.005
    kappa: float = 0.05
    gamma: float = 1e-4
    Delta_c: float = 20.0
    Lambda: float = 0.0
    Phi_d: float = 0.0
    r_e: float | None = None  # None = "match" (track r_d)
    Phi_e: float = 0.0
    n_th_m: float = 0.0
    eps_l: float = 0.0
    omega_l_s: float | None = None  # None = "auto" (track the probe axis)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    start: float
    stop: float
    count: int
    spacing: str = "linear"
    curve_axis: str | None = None
    curve_values: tuple[float, ...] = ()
    variants: str = "both"  # g2_transient only: both | exact | rwa


@dataclass(frozen=True)
class SolverSpec:
    frame_policy: str = "auto"
    rtol: float = 1e-8
    atol: float = 1e-10
    t_end: float | None = None
    steady_solver: str = "auto"
    direct_dim_max: int = 150
    workers: int = 1
    initial_cavity_occupancy: float | None = None  # None = "auto" (N_s)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str
    system: SystemSpec
    sweep: SweepSpec
    truncation: tuple[int, int]
    solver: SolverSpec
    output_path: str


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    """Raw section -> {key: value} mapping with duplicate detection."""
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section header")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(
                f"line {lineno}: expected 'key = value' or '[section]', got {line!r}"
            )
        if current is None:
            raise ConfigError(f"line {lineno}: key-value pair before any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {current}.{key}")
        sections[current][key] = value
    return sections


def _parse_float(section: str, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}") from None


def _parse_int(section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected an integer, got {value!r}"
        ) from None


def _reject_unknown(section: str, block: dict[str, str], allowed) -> None:
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{section}]: "
            + ", ".join(f"{section}.{k}" for k in unknown)
        )


def resolve_config(raw: dict[str, dict[str, str]]) -> ScenarioConfig:
    """Validate the raw mapping and build a typed scenario description."""
    known_sections = {"scenario", "system", "sweep", "truncation", "solver", "output"}
    extra = set(raw) - known_sections - set(_MANIFEST_ONLY_SECTIONS)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    scen = raw.get("scenario", {})
    _reject_unknown("scenario", scen, _SCENARIO_FIELDS)
    name = scen.get("name", "")
    kind = scen.get("kind", "")
    if not name:
        raise ConfigError("scenario.name is required")
    if kind not in _KINDS:
        raise ConfigError(f"scenario.kind must be one of {_KINDS}, got {kind!r}")

    sys_block = raw.get("system", {})
    _reject_unknown("system", sys_block, _SYSTEM_FIELDS)
    sys_kwargs: dict = {}
    for key, value in sys_block.items():
        if key == "r_e" and value == "match":
            sys_kwargs[key] = None
        elif key == "omega_l_s" and value == "auto":
            sys_kwargs[key] = None
        else:
            sys_kwargs[key] = _parse_float("system", key, value)
    system = SystemSpec(**sys_kwargs)

    sweep_block = raw.get("sweep", {})
    _reject_unknown("sweep", sweep_block, _SWEEP_FIELDS)
    for required in ("axis", "start", "stop", "count"):
        if required not in sweep_block:
            raise ConfigError(f"sweep.{required} is required")
    axis = sweep_block["axis"]
    if axis not in _AXES_BY_KIND[kind]:
        raise ConfigError(
            f"sweep.axis {axis!r} is not valid for kind {kind!r}; "
            f"choose from {_AXES_BY_KIND[kind]}"
        )
    spacing = sweep_block.get("spacing", "linear")
    if spacing not in _SPACINGS:
        raise ConfigError(f"sweep.spacing must be one of {_SPACINGS}, got {spacing!r}")
    curve_axis = sweep_block.get("curve_axis") or None
    curve_values: tuple[float, ...] = ()
    if curve_axis is not None:
        if curve_axis not in _CURVE_AXES_BY_KIND[kind]:
            raise ConfigError(
                f"sweep.curve_axis {curve_axis!r} is not valid for kind {kind!r}; "
                f"choose from {_CURVE_AXES_BY_KIND[kind] or ('<none>',)}"
            )
        if "curve_values" not in sweep_block:
            raise ConfigError("sweep.curve_values is required with sweep.curve_axis")
        try:
            curve_values = tuple(
                float(tok) for tok in sweep_block["curve_values"].split()
            )
        except ValueError:
            raise ConfigError(
                "sweep.curve_values: expected space-separated numbers, got "
                f"{sweep_block['curve_values']!r}"
            ) from None
        if not curve_values:
            raise ConfigError("sweep.curve_values must contain at least one number")
        if curve_axis == axis:
            raise ConfigError("sweep.curve_axis must differ from sweep.axis")
    elif "curve_values" in sweep_block:
        raise ConfigError("sweep.curve_values requires sweep.curve_axis")
    variants = sweep_block.get("variants", "both")
    if variants not in ("both", "exact", "rwa"):
        raise ConfigError(
            f"sweep.variants must be both, exact, or rwa, got {variants!r}"
        )
    if "variants" in sweep_block and kind != "g2_transient":
        raise ConfigError("sweep.variants is only valid for kind g2_transient")
    count = _parse_int("sweep", "count", sweep_block["count"])
    if count < 1:
        raise ConfigError(f"sweep.count must be >= 1, got {count}")
    sweep = SweepSpec(
        axis=axis,
        start=_parse_float("sweep", "start", sweep_block["start"]),
        stop=_parse_float("sweep", "stop", sweep_block["stop"]),
        count=count,
        spacing=spacing,
        curve_axis=curve_axis,
        curve_values=curve_values,
        variants=variants,
    )

    trunc_block = raw.get("truncation", {})
    _reject_unknown("truncation", trunc_block, _TRUNCATION_FIELDS)
    n_cav = _parse_int("truncation", "n_cav", trunc_block.get("n_cav", "6"))
    n_mech = _parse_int("truncation", "n_mech", trunc_block.get("n_mech", "14"))

    solver_block = raw.get("solver", {})
    _reject_unknown("solver", solver_block, _SOLVER_FIELDS)
    solver_kwargs: dict = {}
    for key, value in solver_block.items():
        if key == "frame_policy":
            if value not in ("auto", "secular", "timedomain"):
                raise ConfigError(
                    f"solver.frame_policy must be auto, secular, or timedomain, "
                    f"got {value!r}"
                )
            solver_kwargs[key] = value
        elif key == "steady_solver":
            if value not in ("auto", "direct", "iterative"):
                raise ConfigError(
                    f"solver.steady_solver must be auto, direct, or iterative, "
                    f"got {value!r}"
                )
            solver_kwargs[key] = value
        elif key in ("direct_dim_max", "workers"):
            solver_kwargs[key] = _parse_int("solver", key, value)
        elif key in ("t_end", "initial_cavity_occupancy"):
            solver_kwargs[key] = (
                None if value == "auto" else _parse_float("solver", key, value)
            )
        else:
            solver_kwargs[key] = _parse_float("solver", key, value)
    solver = SolverSpec(**solver_kwargs)

    out_block = raw.get("output", {})
    _reject_unknown("output", out_block, _OUTPUT_FIELDS)
    output_path = out_block.get("path", f"{name}.csv")

    scenario = ScenarioConfig(
        name=name,
        kind=kind,
        system=system,
        sweep=sweep,
        truncation=(n_cav, n_mech),
        solver=solver,
        output_path=output_path,
    )
    _validate_scenario(scenario)
    return scenario


def _validate_scenario(scn: ScenarioConfig) -> None:
    # Fail early on anything the model layer would reject, with field names.
    try:
        base_system_config(scn)
    except (StabilityDomainError, ValueError) as exc:
        raise ConfigError(f"system block invalid: {exc}") from None
    try:
        SpaceDims(*scn.truncation)
    except (DimensionError, ValueError) as exc:
        raise ConfigError(f"truncation invalid: {exc}") from None
    if scn.sweep.spacing == "log" and (scn.sweep.start <= 0 or scn.sweep.stop <= 0):
        raise ConfigError("sweep: log spacing requires positive start and stop")
    if scn.sweep.spacing == "critlog":
        if scn.sweep.axis == "Lambda":
            crit = scn.system.Delta_c / 2.0
            if not (scn.sweep.start < crit and scn.sweep.stop < crit):
                raise ConfigError(
                    "sweep: critlog Lambda sweep must stay below the instability "
                    f"boundary Delta_c/2 = {crit}"
                )
        elif scn.sweep.axis == "Delta_c":
            crit = 2.0 * scn.system.Lambda
            if not (scn.sweep.start > crit and scn.sweep.stop > crit):
                raise ConfigError(
                    "sweep: critlog Delta_c sweep must stay above the instability "
                    f"boundary 2*Lambda = {crit}"
                )
        else:
            raise ConfigError(
                "sweep: critlog spacing applies only to Lambda or Delta_c axes"
            )
    if scn.kind in ("spectrum", "g2_transient") and scn.system.eps_l <= 0:
        raise ConfigError(f"system.eps_l must be > 0 for kind {scn.kind}")
    if scn.kind == "blockade" and scn.system.eps_l <= 0:
        raise ConfigError("system.eps_l must be > 0 for kind blockade")


def base_system_config(scn: ScenarioConfig, **overrides) -> SystemConfig:
    """SystemConfig from the template block, sentinels resolved at base values."""
    spec = scn.system
    kwargs = dict(
        omega_m=spec.omega_m,
        g0=spec.g0,
        kappa=spec.kappa,
        gamma=spec.gamma,
        Delta_c=spec.Delta_c,
        Lambda=spec.Lambda,
        Phi_d=spec.Phi_d,
        Phi_e=spec.Phi_e,
        n_th_m=spec.n_th_m,
        eps_l=spec.eps_l,
        omega_l_s=spec.omega_l_s if spec.omega_l_s is not None else 0.0,
        r_e=spec.r_e if spec.r_e is not None else 0.0,
    )
    kwargs.update(overrides)
    cfg = SystemConfig(**kwargs)
    if spec.r_e is None and "r_e" not in overrides:
        cfg = replace(cfg, r_e=derive_params(cfg).r_d)
    return cfg


# ---------------------------------------------------------------------------
# Serialization (canonical; manifests reuse it)
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def serialize_config(scn: ScenarioConfig) -> str:
    lines = ["[scenario]", f"name = {scn.name}", f"kind = {scn.kind}", ""]
    lines.append("[system]")
    spec = scn.system
    for key in _SYSTEM_FIELDS:
        value = getattr(spec, key)
        if key == "r_e" and value is None:
            lines.append("r_e = match")
        elif key == "omega_l_s" and value is None:
            lines.append("omega_l_s = auto")
        else:
            lines.append(f"{key} = {_fmt(value)}")
    lines.append("")
    lines.append("[sweep]")
    lines.append(f"axis = {scn.sweep.axis}")
    lines.append(f"start = {_fmt(scn.sweep.start)}")
    lines.append(f"stop = {_fmt(scn.sweep.stop)}")
    lines.append(f"count = {scn.sweep.count}")
    lines.append(f"spacing = {scn.sweep.spacing}")
    if scn.sweep.curve_axis is not None:
        lines.append(f"curve_axis = {scn.sweep.curve_axis}")
        lines.append(
            "curve_values = " + " ".join(_fmt(v) for v in scn.sweep.curve_values)
        )
    if scn.kind == "g2_transient":
        lines.append(f"variants = {scn.sweep.variants}")
    lines.append("")
    lines.append("[truncation]")
    lines.append(f"n_cav = {scn.truncation[0]}")
    lines.append(f"n_mech = {scn.truncation[1]}")
    lines.append("")
    lines.append("[solver]")
    sol = scn.solver
    lines.append(f"frame_policy = {sol.frame_policy}")
    lines.append(f"rtol = {_fmt(sol.rtol)}")
    lines.append(f"atol = {_fmt(sol.atol)}")
    lines.append(f"t_end = {'auto' if sol.t_end is None else _fmt(sol.t_end)}")
    lines.append(f"steady_solver = {sol.steady_solver}")
    lines.append(f"direct_dim_max = {sol.direct_dim_max}")
    lines.append(f"workers = {sol.workers}")
    lines.append(
        "initial_cavity_occupancy = "
        + (
            "auto"
            if sol.initial_cavity_occupancy is None
            else _fmt(sol.initial_cavity_occupancy)
        )
    )
    lines.append("")
    lines.append("[output]")
    lines.append(f"path = {scn.output_path}")
    lines.append("")
    return "\n".join(lines)


def derived_block(scn: ScenarioConfig) -> list[str]:
    cfg = base_system_config(scn)
    derived = derive_params(cfg)
    report = rwa_validity(cfg, derived)
    regime = "bare" if cfg.Lambda == 0.0 else report.regime
    delta = single_photon_resonance_shift(derived, cfg.omega_m)
    lines = [
        "[derived]",
        f"r_d = {_fmt(derived.r_d)}",
        f"omega_s = {_fmt(derived.omega_s)}",
        f"g_s = {_fmt(derived.g_s)}",
        f"g_p = {_fmt(derived.g_p)}",
        f"g_s_over_kappa = {_fmt(derived.g_s / cfg.kappa)}",
        f"g_p_over_kappa = {_fmt(derived.g_p / cfg.kappa)}",
        f"delta = {_fmt(delta)}",
        f"N_s = {_fmt(derived.N_s)}",
        f"abs_M_s = {_fmt(abs(derived.M_s))}",
        f"regime = {regime}",
        "",
    ]
    return lines


# ---------------------------------------------------------------------------
# Sweep grids
# ---------------------------------------------------------------------------


def build_axis(scn: ScenarioConfig) -> np.ndarray:
    sweep = scn.sweep
    if sweep.count == 1:
        return np.array([sweep.start], dtype=float)
    if sweep.spacing == "linear":
        return np.linspace(sweep.start, sweep.stop, sweep.count)
    if sweep.spacing == "log":
        return np.geomspace(sweep.start, sweep.stop, sweep.count)
    # critlog: log-spaced distance from the instability boundary
    if sweep.axis == "Lambda":
        crit = scn.system.Delta_c
        gaps = np.geomspace(crit - 2.0 * sweep.start, crit - 2.0 * sweep.stop, sweep.count)
        return (crit - gaps) / 2.0
    crit = 2.0 * scn.system.Lambda
    gaps = np.geomspace(sweep.start - crit, sweep.stop - crit, sweep.count)
    return crit + gaps


# ---------------------------------------------------------------------------
# Scenario execution
# ---------------------------------------------------------------------------


@dataclass
class RunOutcome:
    columns: list[str]
    rows: list[tuple]
    failures: list[tuple[str, int, str]]  # (curve label, axis index, message)
    total_points: int
    extra_manifest: list[str]


def _curve_labels(scn: ScenarioConfig):
    if scn.sweep.curve_axis is None:
        return [None]
    return list(scn.sweep.curve_values)


def _spectrum_outcome(scn: ScenarioConfig, axis: np.ndarray, workers: int) -> RunOutcome:
    dims = SpaceDims(*scn.truncation)
    rows: list[tuple] = []
    failures: list[tuple[str, int, str]] = []
    total = 0
    for curve in _curve_labels(scn):
        if curve is None:
            cfg = base_system_config(scn)
            label = ""
            tilde = cfg.Delta_c - 2.0 * cfg.Lambda
        else:
            cfg = _config_for_curve(scn, curve)
            label = _fmt(curve)
            tilde = float(curve)
        derived = derive_params(cfg)
        result = excitation_spectrum(
            cfg,
            derived,
            dims,
            axis,
            frame_policy=scn.solver.frame_policy,
            workers=workers,
        )
        for i, (ds, s_val) in enumerate(zip(result.delta_s, result.S)):
            rows.append((float(ds), tilde, float(s_val)))
        for idx, message in result.failures:
            failures.append((label, idx, message))
        total += axis.size
    return RunOutcome(
        columns=["Delta_s", "Delta_c_tilde", "S"],
        rows=rows,
        failures=failures,
        total_points=total,
        extra_manifest=[],
    )


def _config_for_curve(scn: ScenarioConfig, curve_value: float) -> SystemConfig:
    """Apply a Delta_c_tilde curve value to the template (re-matching r_e)."""
    delta_c = 2.0 * scn.system.Lambda + float(curve_value)
    if scn.system.r_e is None:
        cfg = base_system_config(scn, Delta_c=delta_c, r_e=0.0)
        return replace(cfg, r_e=derive_params(cfg).r_d)
    return base_system_config(scn, Delta_c=delta_c)


def _blockade_outcome(scn: ScenarioConfig, axis: np.ndarray, workers: int) -> RunOutcome:
    dims = SpaceDims(*scn.truncation)
    rows: list[tuple] = []
    failures: list[tuple[str, int, str]] = []
    total = 0
    policy = scn.solver.frame_policy
    if policy == "auto":
        policy = "secular"
    for curve in _curve_labels(scn):
        if curve is None:
            template = base_system_config(scn)
            label = ""
            tilde = template.Delta_c - 2.0 * template.Lambda
        else:
            template = _config_for_curve(scn, curve)
            label = _fmt(curve)
            tilde = float(curve)
        result = blockade_map(
            template,
            scn.sweep.axis,
            axis,
            dims,
            frame_policy=policy,
            match_r_e=scn.system.r_e is None,
            workers=workers,
        )
        for value, g2_val, masked in zip(result.axis_values, result.g2, result.mask):
            rows.append((float(value), tilde, float(g2_val), int(bool(masked))))
        for idx, message in result.failures:
            failures.append((label, idx, message))
        total += axis.size
    return RunOutcome(
        columns=[scn.sweep.axis, "Delta_c_tilde", "g2_ss", "blockade"],
        rows=rows,
        failures=failures,
        total_points=total,
        extra_manifest=[],
    )


def _coupling_outcome(scn: ScenarioConfig, axis: np.ndarray) -> RunOutcome:
    cfg = base_system_config(scn)
    table = coupling_sweep(cfg, scn.sweep.axis, axis)
    rows = []
    for i in range(axis.size):
        rows.append(
            (
                float(axis[i]),
                float(table.g_s_over_kappa[i]),
                float(table.g_p_over_kappa[i]),
                float(table.omega_s_over_omega_m[i]),
                float(table.g_s_over_omega_m[i]),
                float(table.g_p_over_omega_s[i]),
            )
        )
    failures = [("", idx, reason) for idx, reason in table.skipped]
    return RunOutcome(
        columns=[
            scn.sweep.axis,
            "g_s_over_kappa",
            "g_p_over_kappa",
            "omega_s_over_omega_m",
            "g_s_over_omega_m",
            "g_p_over_omega_s",
        ],
        rows=rows,
        failures=failures,
        total_points=int(axis.size),
        extra_manifest=[],
    )


def _noise_outcome(scn: ScenarioConfig, axis: np.ndarray) -> RunOutcome:
    cfg = base_system_config(scn)
    curves = _curve_labels(scn)
    if curves == [None]:
        raise ConfigError(
            "noise scenarios need sweep.curve_axis (the other bath coordinate)"
        )
    if scn.sweep.axis == "Phi":
        phi_grid, dr_grid = axis, np.asarray(curves, dtype=float)
        table = noise_sweep(cfg, phi_grid, dr_grid)
        rows = [
            (float(phi), float(dr), float(table.N_s[i, j]), float(table.abs_M_s[i, j]))
            for j, dr in enumerate(dr_grid)
            for i, phi in enumerate(phi_grid)
        ]
        columns = ["Phi", "delta_r", "N_s", "abs_M_s"]
        argmin_lines = []
    else:
        phi_grid, dr_grid = np.asarray(curves, dtype=float), axis
        table = noise_sweep(cfg, phi_grid, dr_grid)
        rows = [
            (float(dr), float(phi), float(table.N_s[i, j]), float(table.abs_M_s[i, j]))
            for i, phi in enumerate(phi_grid)
            for j, dr in enumerate(dr_grid)
        ]
        columns = ["delta_r", "Phi", "N_s", "abs_M_s"]
        argmin_lines = [
            f"argmin_delta_r_at_Phi_{_fmt(float(phi))} = {_fmt(float(table.argmin_delta_r[i]))}"
            for i, phi in enumerate(phi_grid)
        ]
    return RunOutcome(
        columns=columns,
        rows=rows,
        failures=[],
        total_points=len(rows),
        extra_manifest=argmin_lines,
    )


def _transient_outcome(scn: ScenarioConfig, axis: np.ndarray) -> RunOutcome:
    dims = SpaceDims(*scn.truncation)
    cfg = base_system_config(scn)
    derived = derive_params(cfg)
    if scn.system.omega_l_s is None:
        delta_s = single_photon_resonance_shift(derived, cfg.omega_m)
        cfg = probe_frequency_for_detuning(cfg, derived, delta_s)
    variant_names = (
        ("exact", "rwa") if scn.sweep.variants == "both" else (scn.sweep.variants,)
    )
    rows: list[tuple] = []
    failures: list[tuple[str, int, str]] = []
    for variant in variant_names:
        try:
            traj = g2_transient(
                cfg,
                derived,
                dims,
                axis,
                exact=variant == "exact",
                initial_cavity_occupancy=scn.solver.initial_cavity_occupancy,
                rtol=scn.solver.rtol,
                atol=scn.solver.atol,
            )
        except Exception as exc:  # per-variant failure keeps the other variant
            failures.append((variant, 0, f"{type(exc).__name__}: {exc}"))
            for i, t in enumerate(axis):
                rows.append((float(t), variant, float("nan"), float("nan")))
            continue
        for t, g2_val, n_val in zip(traj.times, traj.g2, traj.n_values):
            rows.append((float(t), variant, float(g2_val), float(n_val)))
    return RunOutcome(
        columns=["t", "variant", "g2", "n"],
        rows=rows,
        failures=failures,
        total_points=len(variant_names) * int(axis.size),
        extra_manifest=[],
    )


def execute_scenario(scn: ScenarioConfig, workers: int) -> RunOutcome:
    axis = build_axis(scn)
    if scn.kind == "coupling":
        return _coupling_outcome(scn, axis)
    if scn.kind == "noise":
        return _noise_outcome(scn, axis)
    if scn.kind == "spectrum":
        return _spectrum_outcome(scn, axis, workers)
    if scn.kind == "blockade":
        return _blockade_outcome(scn, axis, workers)
    return _transient_outcome(scn, axis)


# ---------------------------------------------------------------------------
# Manifest, CSV, hashing
# ---------------------------------------------------------------------------


def _convergence_block(scn: ScenarioConfig) -> list[str]:
    if scn.kind in ("coupling", "noise"):
        return [
            "[convergence]",
            "status = exact",
            "max_rel_drift = 0.0",
            "note = closed-form scenario has no truncation dependence",
            "",
        ]
    return [
        "[convergence]",
        "status = not_checked",
        "note = run 'sqoms check <config>' for a truncation drift report",
        "",
    ]


def manifest_hash_text(scn: ScenarioConfig) -> str:
    text = serialize_config(scn)
    text += "\n".join(derived_block(scn)) + "\n"
    text += "\n".join(_convergence_block(scn)) + "\n"
    return text


def compute_manifest_hash(scn: ScenarioConfig) -> str:
    digest = hashlib.sha256(manifest_hash_text(scn).encode("utf-8")).hexdigest()
    return f"sha256:{digest}"


def write_outputs(
    scn: ScenarioConfig, outcome: RunOutcome, out_dir, wall_time: float
) -> tuple[str, str]:
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, scn.output_path)
    manifest_path = csv_path + ".manifest"
    digest = compute_manifest_hash(scn)

    lines = [
        f"# sqoms scenario={scn.name} kind={scn.kind}",
        f"# manifest_hash={digest}",
        ",".join(outcome.columns),
    ]
    for row in outcome.rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    manifest = [manifest_hash_text(scn)]
    manifest.append("[run]")
    manifest.append(f"wall_time_s = {wall_time:.3f}")
    manifest.append(f"points_total = {outcome.total_points}")
    manifest.append(f"points_failed = {len(outcome.failures)}")
    for label, idx, message in outcome.failures[:20]:
        prefix = f"curve {label}, " if label else ""
        manifest.append(f"# failed: {prefix}index {idx}: {message}")
    for line in outcome.extra_manifest:
        manifest.append(line)
    manifest.append("")
    manifest.append("[integrity]")
    manifest.append(f"manifest_hash = {digest}")
    manifest.append("")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(manifest))
    return csv_path, manifest_path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(scn: ScenarioConfig, out_dir: str, workers: int) -> int:
    start = time.perf_counter()
    outcome = execute_scenario(scn, workers)
    wall = time.perf_counter() - start
    csv_path, manifest_path = write_outputs(scn, outcome, out_dir, wall)
    n_fail = len(outcome.failures)
    print(f"wrote {csv_path}")
    print(f"wrote {manifest_path}")
    if n_fail == 0:
        print(f"{outcome.total_points} points in {wall:.1f}s")
        return 0
    print(
        f"{outcome.total_points - n_fail}/{outcome.total_points} points succeeded "
        f"({n_fail} failed; see manifest)"
    )
    return 2 if n_fail >= outcome.total_points else 3


def cmd_derive(scn: ScenarioConfig) -> int:
    cfg = base_system_config(scn)
    derived = derive_params(cfg)
    report = rwa_validity(cfg, derived)
    regime = "bare" if cfg.Lambda == 0.0 else report.regime
    delta = single_photon_resonance_shift(derived, cfg.omega_m)
    print(f"scenario {scn.name} ({scn.kind})")
    print(f"  r_d            = {derived.r_d:.12g}")
    print(f"  omega_s        = {derived.omega_s:.12g}  ({derived.omega_s / cfg.omega_m:.12g} omega_m)")
    print(f"  g_s            = {derived.g_s:.12g}  ({derived.g_s / cfg.kappa:.12g} kappa, {derived.g_s / cfg.omega_m:.12g} omega_m)")
    print(f"  g_p            = {derived.g_p:.12g}  ({derived.g_p / cfg.kappa:.12g} kappa, {derived.g_p / derived.omega_s:.12g} omega_s)")
    print(f"  delta          = {delta:.12g}  ({delta / cfg.kappa:.12g} kappa)")
    print(f"  N_s            = {derived.N_s:.12g}")
    print(f"  |M_s|          = {abs(derived.M_s):.12g}")
    print(f"  regime         = {regime}")
    for key, value in report.ratios.items():
        print(f"  ratio {key} = {value:.6g}")
    return 0


def _check_observable(scn: ScenarioConfig, dims: SpaceDims, subsample: np.ndarray):
    """Primary observable values on a subsample of the sweep grid."""
    if scn.kind == "spectrum":
        curve = scn.sweep.curve_values[0] if scn.sweep.curve_axis else None
        cfg = _config_for_curve(scn, curve) if curve is not None else base_system_config(scn)
        derived = derive_params(cfg)
        result = excitation_spectrum(
            cfg, derived, dims, subsample, frame_policy=scn.solver.frame_policy
        )
        return result.S
    if scn.kind == "blockade":
        curve = scn.sweep.curve_values[0] if scn.sweep.curve_axis else None
        template = _config_for_curve(scn, curve) if curve is not None else base_system_config(scn)
        policy = scn.solver.frame_policy
        if policy == "auto":
            policy = "secular"
        result = blockade_map(
            template,
            scn.sweep.axis,
            subsample,
            dims,
            frame_policy=policy,
            match_r_e=scn.system.r_e is None,
        )
        return result.g2
    # g2_transient
    cfg = base_system_config(scn)
    derived = derive_params(cfg)
    if scn.system.omega_l_s is None:
        delta_s = single_photon_resonance_shift(derived, cfg.omega_m)
        cfg = probe_frequency_for_detuning(cfg, derived, delta_s)
    grid = np.unique(np.concatenate(([0.0], subsample)))
    traj = g2_transient(
        cfg,
        derived,
        dims,
        grid,
        exact=scn.sweep.variants != "rwa",
        initial_cavity_occupancy=scn.solver.initial_cavity_occupancy,
        rtol=scn.solver.rtol,
        atol=scn.solver.atol,
    )
    keep = np.isin(traj.times, subsample)
    return traj.g2[keep]


def cmd_check(scn: ScenarioConfig, tol: float) -> int:
    if scn.kind in ("coupling", "noise"):
        print(f"check {scn.name}: closed-form scenario, no truncation dependence")
        print("max relative drift 0.0")
        print("PASS")
        return 0
    axis = build_axis(scn)
    take = min(CHECK_SUBSAMPLE, axis.size)
    idx = np.unique(np.linspace(0, axis.size - 1, take).astype(int))
    subsample = axis[idx]
    base_dims = SpaceDims(*scn.truncation)
    big_dims = SpaceDims(
        scn.truncation[0] + CHECK_ENLARGE[0], scn.truncation[1] + CHECK_ENLARGE[1]
    )
    base_vals = np.asarray(_check_observable(scn, base_dims, subsample), dtype=float)
    big_vals = np.asarray(_check_observable(scn, big_dims, subsample), dtype=float)
    finite = np.isfinite(base_vals) & np.isfinite(big_vals)
    if not finite.any():
        print(f"check {scn.name}: no finite observable values at subsample")
        print("FAIL")
        return 0
    denom = np.maximum(np.abs(big_vals[finite]), 1e-12)
    drift = float(np.max(np.abs(base_vals[finite] - big_vals[finite]) / denom))
    verdict = "PASS" if drift < tol else "FAIL"
    print(
        f"check {scn.name}: {finite.sum()} subsample points, truncation "
        f"{scn.truncation} -> ({big_dims.n_cav}, {big_dims.n_mech})"
    )
    print(f"max relative drift {drift:.3e} (threshold {tol:.1e})")
    print(verdict)
    return 0


# ---------------------------------------------------------------------------
# Presets (figure-reproduction parameter sets)
# ---------------------------------------------------------------------------


def _preset_raw() -> dict[str, dict[str, dict[str, str]]]:
    pi = math.pi
    lam_fig3 = 10.0 * math.tanh(2.0)  # pins r_d = 1 at Delta_c = 20
    presets: dict[str, dict[str, dict[str, str]]] = {}

    presets["fig2a"] = {
        "scenario": {"name": "fig2a", "kind": "coupling"},
        "system": {"Delta_c": "4000.0", "Lambda": "0.0", "g0": "0.005", "kappa": "0.05"},
        "sweep": {
            "axis": "Lambda",
            "start": "0.0",
            "stop": "1999.0",
            "count": "200",
            "spacing": "critlog",
        },
        "output": {"path": "fig2a.csv"},
    }
    presets["fig2b"] = {
        "scenario": {"name": "fig2b", "kind": "coupling"},
        "system": {"Delta_c": "8000.0", "Lambda": "2000.0", "g0": "0.005", "kappa": "0.05"},
        "sweep": {
            "axis": "Delta_c",
            "start": "4000.2",
            "stop": "8000.0",
            "count": "200",
            "spacing": "critlog",
        },
        "output": {"path": "fig2b.csv"},
    }
    presets["fig2c"] = {
        "scenario": {"name": "fig2c", "kind": "coupling"},
        "system": {"Delta_c": "20.0", "Lambda": "0.0", "g0": "0.005", "kappa": "0.05"},
        "sweep": {
            "axis": "Lambda",
            "start": "0.0",
            "stop": "9.996875",
            "count": "200",
            "spacing": "critlog",
        },
        "output": {"path": "fig2c.csv"},
    }
    presets["fig2d"] = {
        "scenario": {"name": "fig2d", "kind": "coupling"},
        "system": {"Delta_c": "200.0", "Lambda": "10.0", "g0": "0.005", "kappa": "0.05"},
        "sweep": {
            "axis": "Delta_c",
            "start": "20.00625",
            "stop": "200.0",
            "count": "200",
            "spacing": "critlog",
        },
        "output": {"path": "fig2d.csv"},
    }
    presets["fig3a"] = {
        "scenario": {"name": "fig3a", "kind": "noise"},
        "system": {"Delta_c": "20.0", "Lambda": repr(lam_fig3), "g0": "0.005"},
        "sweep": {
            "axis": "Phi",
            "start": "0.0",
            "stop": repr(4.0 * pi),
            "count": "401",
            "spacing": "linear",
            "curve_axis": "delta_r",
            "curve_values": "-0.1 -0.05 0.0 0.05 0.1",
        },
        "output": {"path": "fig3a.csv"},
    }
    presets["fig3b"] = {
        "scenario": {"name": "fig3b", "kind": "noise"},
        "system": {"Delta_c": "20.0", "Lambda": repr(lam_fig3), "g0": "0.005"},
        "sweep": {
            "axis": "delta_r",
            "start": "-1.0",
            "stop": "1.0",
            "count": "401",
            "spacing": "linear",
            "curve_axis": "Phi",
            "curve_values": f"{pi!r} {0.95 * pi!r} {0.9 * pi!r} {0.8 * pi!r}",
        },
        "output": {"path": "fig3b.csv"},
    }
    presets["fig4a"] = {
        "scenario": {"name": "fig4a", "kind": "spectrum"},
        "system": {
            "Delta_c": "4000.4",
            "Lambda": "2000.0",
            "g0": "0.005",
            "kappa": "0.05",
            "gamma": "0.0001",
            "eps_l": "0.001",
            "Phi_e": repr(pi),
            "r_e": "match",
            "omega_l_s": "auto",
        },
        "sweep": {
            "axis": "Delta_s",
            "start": "-0.5",
            "stop": "3.5",
            "count": "400",
            "spacing": "linear",
            "curve_axis": "Delta_c_tilde",
            "curve_values": "0.4 0.6 1.0",
        },
        "truncation": {"n_cav": "6", "n_mech": "14"},
        "output": {"path": "fig4a.csv"},
    }
    presets["fig4b"] = {
        "scenario": {"name": "fig4b", "kind": "blockade"},
        "system": {
            "Delta_c": "4000.4",
            "Lambda": "2000.0",
            "g0": "0.005",
            "kappa": "0.05",
            "gamma": "0.0001",
            "eps_l": "0.001",
            "Phi_d": "0.0",
            "r_e": "match",
            "omega_l_s": "auto",
        },
        "sweep": {
            "axis": "Phi",
            "start": repr(pi * 0.994),
            "stop": repr(pi * 1.006),
            "count": "41",
            "spacing": "linear",
            "curve_axis": "Delta_c_tilde",
            "curve_values": "0.4 0.6 1.0",
        },
        "truncation": {"n_cav": "6", "n_mech": "14"},
        "solver": {"frame_policy": "secular"},
        "output": {"path": "fig4b.csv"},
    }
    presets["fig4c"] = {
        "scenario": {"name": "fig4c", "kind": "blockade"},
        "system": {
            "Delta_c": "4000.4",
            "Lambda": "2000.0",
            "g0": "0.005",
            "kappa": "0.05",
            "gamma": "0.0001",
            "eps_l": "0.001",
            "Phi_e": repr(pi),
            "r_e": "match",
            "omega_l_s": "auto",
        },
        "sweep": {
            "axis": "n_th_m",
            "start": "0.1",
            "stop": "30.0",
            "count": "25",
            "spacing": "log",
            "curve_axis": "Delta_c_tilde",
            "curve_values": "0.4 0.6 1.0",
        },
        "truncation": {"n_cav": "6", "n_mech": "30"},
        "solver": {"frame_policy": "secular"},
        "output": {"path": "fig4c.csv"},
    }
    presets["fig4d"] = {
        "scenario": {"name": "fig4d", "kind": "g2_transient"},
        "system": {
            "Delta_c": "4000.4",
            "Lambda": "2000.0",
            "g0": "0.005",
            "kappa": "0.05",
            "gamma": "0.0001",
            "eps_l": "0.001",
            "Phi_e": repr(pi),
            "r_e": "match",
            "omega_l_s": "auto",
        },
        "sweep": {
            "axis": "t",
            "start": "0.0",
            "stop": "150.0",
            "count": "601",
            "spacing": "linear",
            "variants": "both",
        },
        "truncation": {"n_cav": "6", "n_mech": "14"},
        "output": {"path": "fig4d.csv"},
    }
    return presets


PRESET_NAMES = tuple(sorted(_preset_raw()))


def load_preset(name: str, overrides: list[str]) -> ScenarioConfig:
    presets = _preset_raw()
    if name not in presets:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(presets))}"
        )
    raw = presets[name]
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        path, value = item.split("=", 1)
        if "." not in path:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        section, key = path.split(".", 1)
        raw.setdefault(section.strip(), {})[key.strip()] = value.strip()
    return resolve_config(raw)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _load_config_file(path: str) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return resolve_config(parse_config_text(text))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sqoms",
        description=(
            "Squeezed-cavity optomechanics: coupling/noise tables, excitation "
            "spectra, photon-blockade maps, and correlation trajectories."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config file")
    p_run.add_argument("config")
    p_derive = sub.add_parser("derive", help="print derived parameters for a config")
    p_derive.add_argument("config")
    p_check = sub.add_parser("check", help="truncation-convergence report")
    p_check.add_argument("config")
    p_preset = sub.add_parser("preset", help="run a built-in figure preset")
    p_preset.add_argument("name")
    p_preset.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
    )
    p_preset.add_argument(
        "--dry-run",
        action="store_true",
        help="print the resolved config without computing",
    )
    for p in (p_run, p_preset):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=None)
    for p in (p_run, p_check, p_preset):
        p.add_argument(
            "--tol",
            type=float,
            default=CHECK_DEFAULT_TOL,
            help="relative drift threshold for convergence checks",
        )

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            scn = _load_config_file(args.config)
            workers = args.workers if args.workers is not None else scn.solver.workers
            return cmd_run(scn, args.out, workers)
        if args.command == "derive":
            scn = _load_config_file(args.config)
            return cmd_derive(scn)
        if args.command == "check":
            scn = _load_config_file(args.config)
            return cmd_check(scn, args.tol)
        scn = load_preset(args.name, args.overrides)
        if args.dry_run:
            print(serialize_config(scn), end="")
            return 0
        workers = args.workers if args.workers is not None else scn.solver.workers
        return cmd_run(scn, args.out, workers)
    except (ConfigError, StabilityDomainError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
