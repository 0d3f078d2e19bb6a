"""Lindblad engine: dissipators, Liouvillian assembly, steady states, evolution.

Master equation handled here (squeezed frame, gauge with the pump phase
absorbed into the cavity mode)::

    drho/dt = -i[H, rho]
              + kappa (N_s + 1) D[a_s] rho + kappa N_s D[a_s^dag] rho
              - kappa M_s G[a_s] rho - kappa M_s^* G[a_s^dag] rho
              + gamma (n_th + 1) D[b] rho + gamma n_th D[b^dag] rho

with D[o] rho = o rho o^dag - (o^dag o rho + rho o^dag o)/2 and the
two-photon (anomalous) superoperator G[o] rho = o rho o - (o o rho +
rho o o)/2. G terms always occur in mutually conjugate pairs so the
right-hand side maps Hermitian matrices to Hermitian matrices.

Vectorization is row-major: vec(rho)[i*d + j] = rho[i, j], so
vec(A rho B) = (A kron B^T) vec(rho) and the trace of a vectorized state is
the sum of the stride-(d+1) entries. The trace functional is a left null
vector of every static Liouvillian built here (checked at assembly).

Binary container formats (debugging aids, little-endian throughout):

* Liouvillian file: magic ``SQOMSLV1``, uint32 number of modes, uint32 mode
  dimensions, uint64 superoperator dimension n, uint64 nnz, then the CSR
  triplet of the n x n matrix: int64 indptr (n+1), int64 indices (nnz),
  complex128 data (nnz).
* State file: magic ``SQOMSST1``, uint32 number of modes, uint32 mode
  dimensions, uint64 Hilbert dimension d, complex128 entries (d*d,
  row-major).
"""

from __future__ import annotations

import cmath
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate as integrate
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fock import (
    DensityMatrix,
    Operator,
    SpaceDims,
    cavity_annihilator,
    mech_annihilator,
    tensor,
    thermal_state,
)
from .hamiltonians import DriveTerm, TimeDependentHamiltonian
from .model import DerivedParams, SystemConfig, effective_bath_in_drive_gauge

TRACE_NULL_TOL = 1e-10
STEADY_RESIDUAL_TOL = 1e-10
TRACE_DRIFT_TOL = 1e-8
POSITIVITY_FLAG_TOL = -1e-6
DEFAULT_DROP_TOL = 1e-12
DIRECT_DIM_MAX = 150
QUASI_STEADY_REL_TOL = 1e-4
PERIOD_SAMPLES = 64

_LIOUVILLIAN_MAGIC = b"SQOMSLV1"
_STATE_MAGIC = b"SQOMSST1"


class ConvergenceError(RuntimeError):
    """Long-time average has not settled to the requested tolerance."""


class StiffnessError(RuntimeError):
    """Explicit integrator could not advance; problem is too stiff as posed."""


class DegenerateSteadyStateError(RuntimeError):
    """The Liouvillian null space has dimension > 1."""

    def __init__(self, nullity: int, message: str) -> None:
        super().__init__(message)
        self.nullity = nullity


@dataclass(frozen=True)
class DissipatorTerm:
    """One Lindblad term: rate * D[op] (kind 'D') or rate * G[op] (kind 'G')."""

    kind: str
    op: Operator
    rate: complex

    def __post_init__(self) -> None:
        if self.kind not in ("D", "G"):
            raise ValueError(f"kind must be 'D' or 'G', got {self.kind!r}")


@dataclass(frozen=True)
class DissipatorSpec:
    """Validated list of dissipator terms sharing one product space.

    Invariants enforced at construction: all operators act on the same mode
    dimensions; D rates are real and nonnegative; G terms are closed under
    (op, rate) -> (op^dag, conj(rate)) so the superoperator they generate
    preserves Hermiticity.
    """

    terms: tuple[DissipatorTerm, ...]

    def __post_init__(self) -> None:
        dims = {term.op.dims for term in self.terms}
        if len(dims) > 1:
            raise ValueError(f"dissipator operators live on mixed spaces: {dims}")
        for term in self.terms:
            if term.kind == "D":
                rate = complex(term.rate)
                scale = max(1.0, abs(rate))
                if abs(rate.imag) > 1e-12 * scale or rate.real < -1e-12 * scale:
                    raise ValueError(
                        f"D rate must be real nonnegative, got {term.rate!r}"
                    )
        self._check_g_pairing()

    def _check_g_pairing(self) -> None:
        g_terms = [t for t in self.terms if t.kind == "G"]
        unmatched = list(range(len(g_terms)))
        while unmatched:
            i = unmatched[0]
            partner = None
            for j in unmatched:
                if _is_conjugate_pair(g_terms[i], g_terms[j]):
                    partner = j
                    break
            if partner is None:
                raise ValueError(
                    "G terms must come in conjugate pairs (op^dag, conj(rate)); "
                    f"term with rate {g_terms[i].rate!r} has no partner"
                )
            unmatched.remove(i)
            if partner != i:
                unmatched.remove(partner)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.terms[0].op.dims if self.terms else ()


def _is_conjugate_pair(t1: DissipatorTerm, t2: DissipatorTerm) -> bool:
    if abs(complex(t1.rate) - complex(t2.rate).conjugate()) > 1e-12 * max(
        1.0, abs(t1.rate)
    ):
        return False
    diff = t1.op.matrix - t2.op.dag().matrix
    if diff.nnz == 0:
        return True
    scale = max(1.0, abs(t1.op.matrix).max())
    return abs(diff).max() <= 1e-12 * scale


def standard_dissipators(
    cfg: SystemConfig,
    derived: DerivedParams,
    dims: SpaceDims,
    *,
    drop_tol: float = DEFAULT_DROP_TOL,
) -> DissipatorSpec:
    """Six-term dissipator set of the squeezed-frame master equation.

    Cavity terms use the effective bath moments in the same gauge as the
    Hamiltonian builders (pump phase absorbed into a_s). Terms whose rate
    magnitude falls below ``drop_tol`` times the largest rate of their mode
    are omitted: at the phase-matched point (Phi = pi, r_e = r_d) this
    removes the thermal-feeding term kappa N_s D[a_s^dag] and both G terms
    identically, leaving plain vacuum decay. Pass ``drop_tol=0`` to keep
    every term regardless of magnitude.
    """
    n_s, m_gauged = effective_bath_in_drive_gauge(cfg, derived)
    a_s = cavity_annihilator(dims)
    b = mech_annihilator(dims)
    kappa, gamma, nbar = cfg.kappa, cfg.gamma, cfg.n_th_m

    cav_scale = kappa * max(n_s + 1.0, abs(m_gauged))
    mech_scale = gamma * (nbar + 1.0)

    candidates = [
        DissipatorTerm("D", a_s, kappa * (n_s + 1.0)),
        DissipatorTerm("D", a_s.dag(), kappa * n_s),
        DissipatorTerm("G", a_s, -kappa * m_gauged),
        DissipatorTerm("G", a_s.dag(), -kappa * m_gauged.conjugate()),
        DissipatorTerm("D", b, gamma * (nbar + 1.0)),
        DissipatorTerm("D", b.dag(), gamma * nbar),
    ]
    scales = [cav_scale] * 4 + [mech_scale] * 2
    kept = tuple(
        term
        for term, scale in zip(candidates, scales)
        if abs(complex(term.rate)) > drop_tol * scale
    )
    return DissipatorSpec(kept)


def _superop_hamiltonian(h: Operator) -> sp.csr_matrix:
    d = h.shape[0]
    eye = sp.identity(d, dtype=np.complex128, format="csr")
    return (-1j * (sp.kron(h.matrix, eye) - sp.kron(eye, h.matrix.T))).tocsr()


def _superop_term(term: DissipatorTerm) -> sp.csr_matrix:
    o = term.op.matrix
    d = o.shape[0]
    eye = sp.identity(d, dtype=np.complex128, format="csr")
    if term.kind == "D":
        sandwich = sp.kron(o, o.conjugate())
        odo = (o.conjugate().T @ o).tocsr()
        anti = sp.kron(odo, eye) + sp.kron(eye, odo.T)
    else:
        sandwich = sp.kron(o, o.T)
        oo = (o @ o).tocsr()
        anti = sp.kron(oo, eye) + sp.kron(eye, oo.T)
    return (complex(term.rate) * (sandwich - 0.5 * anti)).tocsr()


@dataclass(frozen=True)
class Liouvillian:
    """Static generator on vectorized density matrices, plus optional tones."""

    matrix: sp.csr_matrix
    dims: tuple[int, ...]
    drive: tuple[DriveTerm, ...] = ()

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def is_static(self) -> bool:
        return not self.drive


def build_liouvillian(h, diss: DissipatorSpec) -> Liouvillian:
    """Assemble the superoperator for a Hamiltonian plus dissipators.

    ``h`` may be a static Operator or a TimeDependentHamiltonian; in the
    latter case the tones are carried on the returned Liouvillian for
    ``evolve`` to apply. The trace functional is verified to be a left null
    vector of the static part.
    """
    drive: tuple[DriveTerm, ...] = ()
    if isinstance(h, TimeDependentHamiltonian):
        static = h.static_part
        drive = h.drive_terms
    else:
        static = h
    if diss.terms and diss.dims != static.dims:
        raise ValueError(
            f"Hamiltonian dims {static.dims} do not match dissipator dims {diss.dims}"
        )
    l_mat = _superop_hamiltonian(static)
    for term in diss.terms:
        l_mat = l_mat + _superop_term(term)
    l_mat = l_mat.tocsr()

    d = static.shape[0]
    trace_residual = _trace_functional_residual(l_mat, d)
    scale = max(1.0, abs(l_mat).max() if l_mat.nnz else 0.0)
    if trace_residual > TRACE_NULL_TOL * scale:
        raise ValueError(
            f"trace functional fails to annihilate the Liouvillian "
            f"(residual {trace_residual:.2e}); dissipator list is inconsistent"
        )
    return Liouvillian(l_mat, static.dims, drive)


def _trace_functional_residual(l_mat: sp.csr_matrix, d: int) -> float:
    trace_vec = np.zeros(d * d, dtype=np.complex128)
    trace_vec[:: d + 1] = 1.0
    left = l_mat.T @ trace_vec
    return float(np.abs(left).max()) if left.size else 0.0


def apply_master_equation(
    h: Operator, diss: DissipatorSpec, rho: np.ndarray
) -> np.ndarray:
    """Direct term-by-term right-hand side, free of any vectorization.

    Reference implementation used to cross-check ``build_liouvillian``.
    """
    out = -1j * (h.matrix @ rho - rho @ h.matrix)
    for term in diss.terms:
        o = term.op.matrix
        rate = complex(term.rate)
        if term.kind == "D":
            od = o.conjugate().T
            sandwich = o @ rho @ od
            square = (od @ o) @ rho + rho @ (od @ o)
        else:
            sandwich = o @ rho @ o
            square = (o @ o) @ rho + rho @ (o @ o)
        out = out + rate * (sandwich - 0.5 * square)
    return np.asarray(out)


def _vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=np.complex128).reshape(-1)


def _unvec(y: np.ndarray, d: int) -> np.ndarray:
    return y.reshape(d, d)


def _vec_trace(y: np.ndarray, d: int) -> complex:
    return complex(y[:: d + 1].sum())


def _tone_superops(
    drive: tuple[DriveTerm, ...], d: int
) -> list[tuple[complex, float, sp.csr_matrix]]:
    """Per tone, the pair (amplitude, frequency, commutator superoperator).

    Each physical tone contributes amp e^{-i nu t} op + h.c.; both halves are
    returned as separate rows so the RHS is a plain linear combination.
    """
    eye = sp.identity(d, dtype=np.complex128, format="csr")
    rows: list[tuple[complex, float, sp.csr_matrix]] = []
    for term in drive:
        for op, amp, freq in (
            (term.op.matrix, complex(term.amplitude), term.frequency),
            (
                term.op.dag().matrix,
                complex(term.amplitude).conjugate(),
                -term.frequency,
            ),
        ):
            superop = (-1j * (sp.kron(op, eye) - sp.kron(eye, op.T))).tocsr()
            rows.append((amp, freq, superop))
    return rows


@dataclass
class EvolveResult:
    """Sampled trajectory with integration diagnostics."""

    times: np.ndarray
    expectations: np.ndarray | None
    states: list[DensityMatrix] | None
    trace_drift: float
    min_eigenvalue: float
    step_count: int
    positivity_ok: bool
    diagnostics: dict = field(default_factory=dict)


def evolve(
    liouvillian: Liouvillian,
    rho0: DensityMatrix,
    t_grid,
    *,
    observables: tuple[Operator, ...] | list[Operator] | None = None,
    store_states: bool = False,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    positivity_samples: int = 16,
) -> EvolveResult:
    """Integrate the master equation over an ascending time grid.

    Uses adaptive high-order explicit Runge-Kutta stepping (DOP853) with the
    vectorized static generator; drive tones carried by the Liouvillian are
    applied as time-harmonic commutator superoperators. Diagnostics report
    the worst trace drift over all samples, the minimum eigenvalue over a
    subsample of at most ``positivity_samples`` states, and the number of
    right-hand-side evaluations.
    """
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("t_grid must be a nonempty 1-D array")
    if np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be strictly ascending")
    d = liouvillian.hilbert_dim
    if rho0.entries.shape != (d, d):
        raise ValueError(
            f"initial state dimension {rho0.entries.shape} does not match "
            f"Liouvillian Hilbert dimension {d}"
        )

    l_mat = liouvillian.matrix
    tones = _tone_superops(liouvillian.drive, d)

    if tones:

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            dy = l_mat @ y
            for amp, freq, superop in tones:
                dy = dy + (amp * cmath.exp(-1j * freq * t)) * (superop @ y)
            return dy

    else:

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            return l_mat @ y

    y0 = _vec(rho0.entries)
    t0, t1 = float(times[0]), float(times[-1])
    if t1 > t0:
        sol = integrate.solve_ivp(
            rhs,
            (t0, t1),
            y0,
            method="DOP853",
            t_eval=times,
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise StiffnessError(
                f"integrator stopped: {sol.message} — the generator is too stiff "
                "for explicit stepping at this truncation; reduce the Fock "
                "dimensions or the squeezed-bath occupancy, or use an implicit "
                "scheme externally"
            )
        samples = sol.y.T
        nfev = int(sol.nfev)
    else:
        samples = y0[np.newaxis, :]
        nfev = 0

    trace_drift = float(np.abs([_vec_trace(y, d) - 1.0 for y in samples]).max())
    if trace_drift > TRACE_DRIFT_TOL:
        warnings.warn(
            f"trace drift {trace_drift:.2e} exceeds {TRACE_DRIFT_TOL:.0e}; "
            "tighten tolerances",
            stacklevel=2,
        )

    check_idx = np.unique(
        np.linspace(0, len(samples) - 1, min(positivity_samples, len(samples))).astype(
            int
        )
    )
    min_eig = math.inf
    for idx in check_idx:
        rho = _unvec(samples[idx], d)
        eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conjugate().T))
        min_eig = min(min_eig, float(eigs[0]))
    positivity_ok = min_eig > POSITIVITY_FLAG_TOL
    if not positivity_ok:
        warnings.warn(
            f"state eigenvalue {min_eig:.2e} below {POSITIVITY_FLAG_TOL:.0e}: "
            "truncation is too tight for this trajectory",
            stacklevel=2,
        )

    expectations = None
    if observables is not None:
        weights = [np.asarray(o.matrix.T.todense()).reshape(-1) for o in observables]
        expectations = np.empty((len(weights), len(samples)), dtype=np.complex128)
        for i, w in enumerate(weights):
            expectations[i] = samples @ w

    states = None
    if store_states:
        states = [
            DensityMatrix(_unvec(y, d), liouvillian.dims, validate=False)
            for y in samples
        ]

    return EvolveResult(
        times=times,
        expectations=expectations,
        states=states,
        trace_drift=trace_drift,
        min_eigenvalue=min_eig,
        step_count=nfev,
        positivity_ok=positivity_ok,
        diagnostics={"rtol": rtol, "atol": atol},
    )


def steady_state(
    liouvillian: Liouvillian,
    *,
    method: str = "auto",
    direct_dim_max: int = DIRECT_DIM_MAX,
    residual_tol: float = STEADY_RESIDUAL_TOL,
) -> DensityMatrix:
    """Unique steady state of a static Liouvillian.

    Solves L vec(rho) = 0 with the unit-trace condition closing the system:
    the direct path replaces one row by a weighted trace row and factorizes;
    the iterative path (Hilbert dimension above ``direct_dim_max``) solves
    the same singular system with the trace constraint enforced through a
    rank-one projection onto the trace functional, preconditioned by an
    incomplete factorization. The result is Hermitized, renormalized, and
    checked against ``residual_tol * ||L||_inf``; an uninformative residual
    triggers a null-space diagnosis and a degeneracy error when the steady
    state is not unique.
    """
    if not liouvillian.is_static:
        raise ValueError("steady_state requires a static Liouvillian (no drive tones)")
    if method not in ("auto", "direct", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    d = liouvillian.hilbert_dim
    n = d * d
    l_mat = liouvillian.matrix
    if method == "auto":
        method = "direct" if d <= direct_dim_max else "iterative"

    diag = l_mat.diagonal()
    weight = float(np.mean(np.abs(diag))) or 1.0

    y = None
    if method == "iterative":
        y = _steady_iterative(l_mat, d, weight)
        if y is None:
            method = "direct"
    if y is None:
        y = _steady_direct(l_mat, d, weight)

    rho = _unvec(y, d)
    rho = 0.5 * (rho + rho.conjugate().T)
    trace = np.trace(rho).real
    if abs(trace) < 1e-300:
        raise DegenerateSteadyStateError(
            _null_space_dimension(l_mat, n)[0],
            "solver returned a traceless kernel vector; steady state is not unique",
        )
    rho /= trace

    residual = float(np.abs(l_mat @ _vec(rho)).max())
    l_norm = float(np.abs(l_mat).sum(axis=1).max()) if l_mat.nnz else 1.0
    if residual > residual_tol * l_norm:
        nullity, saturated = _null_space_dimension(l_mat, n)
        if nullity > 1:
            qualifier = "at least " if saturated else ""
            raise DegenerateSteadyStateError(
                nullity,
                f"Liouvillian null space has dimension {qualifier}{nullity}; the "
                "steady state is not unique (residual "
                f"{residual:.2e} vs bound {residual_tol * l_norm:.2e})",
            )
        raise ConvergenceError(
            f"steady-state residual {residual:.2e} exceeds bound "
            f"{residual_tol * l_norm:.2e} and the null space is one-dimensional; "
            "the system is badly conditioned at this truncation"
        )
    return DensityMatrix(rho, liouvillian.dims, validate=False)


def _steady_direct(l_mat: sp.csr_matrix, d: int, weight: float) -> np.ndarray:
    n = d * d
    a = l_mat.tolil(copy=True)
    trace_row = np.zeros(n, dtype=np.complex128)
    trace_row[:: d + 1] = weight
    a[0, :] = trace_row
    b = np.zeros(n, dtype=np.complex128)
    b[0] = weight
    try:
        solver = spla.splu(a.tocsc())
        return solver.solve(b)
    except RuntimeError as exc:
        raise DegenerateSteadyStateError(
            _null_space_dimension(l_mat, n)[0],
            f"direct factorization failed ({exc}); the constrained Liouvillian "
            "is singular, so the steady state is not unique",
        ) from exc


def _steady_iterative(l_mat: sp.csr_matrix, d: int, weight: float) -> np.ndarray | None:
    n = d * d
    trace_idx = np.arange(0, n, d + 1)

    def matvec(y: np.ndarray) -> np.ndarray:
        out = l_mat @ y
        out[0] += weight * y[trace_idx].sum()
        return out

    operator = spla.LinearOperator((n, n), matvec=matvec, dtype=np.complex128)
    b = np.zeros(n, dtype=np.complex128)
    b[0] = weight

    a = l_mat.tolil(copy=True)
    row = np.zeros(n, dtype=np.complex128)
    row[trace_idx] = weight
    a[0, :] = row
    try:
        precond = spla.spilu(a.tocsc(), drop_tol=1e-5, fill_factor=20)
        m = spla.LinearOperator((n, n), matvec=precond.solve, dtype=np.complex128)
    except RuntimeError:
        return None
    y, info = spla.lgmres(operator, b, M=m, rtol=1e-12, atol=0.0, maxiter=400)
    if info != 0:
        return None
    return y


def _null_space_dimension(
    l_mat: sp.csr_matrix, n: int, *, tol_scale: float = 1e-8
) -> tuple[int, bool]:
    """Near-zero eigenvalue count of L (shift-inverted Arnoldi).

    Returns (count, saturated); ``saturated`` means the count hit the number
    of eigenvalues requested, so the true nullity may be larger.
    """
    k = min(6, n - 2)
    scale = max(1.0, float(np.abs(l_mat).max()))
    try:
        vals = spla.eigs(
            l_mat.tocsc() + 0j, k=k, sigma=1e-14 * scale, return_eigenvectors=False
        )
    except Exception:
        if n <= 4096:
            vals = np.linalg.eigvals(l_mat.toarray())
            k = n
        else:
            return 1, True
    count = max(1, int(np.sum(np.abs(vals) < tol_scale * scale)))
    return count, count >= k


def _drive_period(drive: tuple[DriveTerm, ...]) -> float | None:
    """Common period of the drive tones; None when every tone is static."""
    freqs = sorted({abs(t.frequency) for t in drive if abs(t.frequency) > 0.0})
    if not freqs:
        return None
    base = freqs[0]
    for f in freqs[1:]:
        ratio = f / base
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConvergenceError(
                f"drive tones with frequencies {freqs} share no period; "
                "quasi-steady averaging is undefined for incommensurate tones"
            )
    return 2.0 * math.pi / base


def _fold_static_tones(
    h: TimeDependentHamiltonian,
) -> TimeDependentHamiltonian:
    """Absorb zero-frequency tones into the static part."""
    static = h.static_part
    rest = []
    for term in h.drive_terms:
        if term.frequency == 0.0:
            static = (
                static
                + term.amplitude * term.op
                + complex(term.amplitude).conjugate() * term.op.dag()
            )
        else:
            rest.append(term)
    return TimeDependentHamiltonian(static, tuple(rest))


def quasi_steady_average(
    cfg: SystemConfig,
    derived: DerivedParams,
    dims: SpaceDims,
    drive: TimeDependentHamiltonian,
    observable,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    t_end: float | None = None,
    rel_tol: float = QUASI_STEADY_REL_TOL,
):
    """Long-time period-averaged expectation value(s) under a periodic drive.

    Integrates the master equation in the half-pump-frequency frame (static
    dissipators, time-harmonic Hamiltonian tones) from a thermal product
    state to ``t_end = max(20/kappa, 200/omega_m)``, then averages each
    observable over one drive period. The averages over the last two periods
    must agree to ``rel_tol`` relative, otherwise a ConvergenceError suggests
    a longer horizon. With no oscillating tone the static steady state is
    returned directly.

    ``observable`` may be a single Operator or a sequence; the return type
    (float or tuple of floats — real parts) mirrors the input.
    """
    single = isinstance(observable, Operator)
    obs_list = (observable,) if single else tuple(observable)

    folded = _fold_static_tones(drive)
    diss = standard_dissipators(cfg, derived, dims)
    liouvillian = build_liouvillian(folded, diss)
    period = _drive_period(folded.drive_terms)

    if period is None:
        static_l = Liouvillian(liouvillian.matrix, liouvillian.dims)
        rho_ss = steady_state(static_l)
        values = tuple(
            float(np.trace(o.matrix @ rho_ss.entries).real) for o in obs_list
        )
        return values[0] if single else values

    if t_end is None:
        t_end = max(20.0 / cfg.kappa, 200.0 / cfg.omega_m)

    n_s = derived.N_s
    rho0 = tensor(
        thermal_state(n_s, dims.n_cav), thermal_state(cfg.n_th_m, dims.n_mech)
    )

    samples_per_period = PERIOD_SAMPLES
    window = np.linspace(
        t_end, t_end + 2.0 * period, 2 * samples_per_period + 1
    )
    t_grid = np.concatenate(([0.0], window)) if t_end > 0 else window
    result = evolve(
        liouvillian,
        rho0,
        t_grid,
        observables=obs_list,
        rtol=rtol,
        atol=atol,
    )
    offset = 1 if t_end > 0 else 0
    values = []
    estimates = []
    for row in result.expectations:
        tail = row[offset:].real
        first = np.trapezoid(
            tail[: samples_per_period + 1], window[: samples_per_period + 1]
        ) / period
        second = np.trapezoid(
            tail[samples_per_period:], window[samples_per_period:]
        ) / period
        scale = max(abs(first), abs(second), 1e-30)
        estimates.append(abs(second - first) / scale)
        values.append(float(second))
    worst = max(estimates)
    if worst > rel_tol:
        raise ConvergenceError(
            f"period averages differ by {worst:.2e} relative (> {rel_tol:.0e}); "
            f"the drive transient has not decayed by t_end = {t_end:g} — rerun "
            "with a longer t_end"
        )
    return values[0] if single else tuple(values)


def expectation_of(rho: DensityMatrix, op: Operator) -> complex:
    """Tr(op rho) for a dense state and sparse operator."""
    return complex((op.matrix @ rho.entries).trace())


# ---------------------------------------------------------------------------
# Binary debugging containers (format documented in the module docstring)
# ---------------------------------------------------------------------------


def dump_liouvillian(liouvillian: Liouvillian, path) -> None:
    mat = liouvillian.matrix.tocsr()
    mat.sort_indices()
    with open(path, "wb") as fh:
        fh.write(_LIOUVILLIAN_MAGIC)
        fh.write(struct.pack("<I", len(liouvillian.dims)))
        for dim in liouvillian.dims:
            fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<QQ", mat.shape[0], mat.nnz))
        fh.write(mat.indptr.astype("<i8").tobytes())
        fh.write(mat.indices.astype("<i8").tobytes())
        fh.write(mat.data.astype("<c16").tobytes())


def load_liouvillian(path) -> Liouvillian:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _LIOUVILLIAN_MAGIC:
            raise ValueError(f"not a Liouvillian container (magic {magic!r})")
        (ndims,) = struct.unpack("<I", fh.read(4))
        dims = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndims))
        n, nnz = struct.unpack("<QQ", fh.read(16))
        indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8")
        indices = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
        data = np.frombuffer(fh.read(16 * nnz), dtype="<c16")
    expected = int(np.prod(dims)) ** 2
    if n != expected:
        raise ValueError(f"container dims {dims} inconsistent with matrix size {n}")
    mat = sp.csr_matrix(
        (data.astype(np.complex128), indices.astype(np.int64), indptr.astype(np.int64)),
        shape=(n, n),
    )
    return Liouvillian(mat, dims)


def dump_state(rho: DensityMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_STATE_MAGIC)
        fh.write(struct.pack("<I", len(rho.dims)))
        for dim in rho.dims:
            fh.write(struct.pack("<I", dim))
        d = rho.entries.shape[0]
        fh.write(struct.pack("<Q", d))
        fh.write(np.ascontiguousarray(rho.entries).astype("<c16").tobytes())


def load_state(path) -> DensityMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _STATE_MAGIC:
            raise ValueError(f"not a state container (magic {magic!r})")
        (ndims,) = struct.unpack("<I", fh.read(4))
        dims = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndims))
        (d,) = struct.unpack("<Q", fh.read(8))
        entries = np.frombuffer(fh.read(16 * d * d), dtype="<c16").reshape(d, d)
    if d != int(np.prod(dims)):
        raise ValueError(f"container dims {dims} inconsistent with state size {d}")
    return DensityMatrix(entries.astype(np.complex128), dims, validate=False)
