"""Truncated Fock-space operator algebra for a cavity-mechanics product space.

Conventions used throughout the package:

* single-mode ladder operators follow <n-1|a|n> = sqrt(n) on a truncated
  basis {|0>, ..., |dim-1>};
* composite spaces are cavity-major: the product basis index is
  i = i_cav * n_mech + i_mech, i.e. composite operators are
  kron(cavity_op, mech_op);
* operators are stored sparse (CSR), states dense.

Truncation is explicit, not hidden: the canonical commutator [a, a^dag] on a
truncated space equals the identity except for the corner entry
(dim-1, dim-1) = 1 - dim, and tests pin that defect rather than pretending
the space is infinite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DEFAULT_DIM_CAP = 4096

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-8
NORM_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when mode dimensions are invalid or inconsistent."""


@dataclass(frozen=True)
class SpaceDims:
    """Truncation of the cavity (x) mechanics product space."""

    n_cav: int
    n_mech: int
    cap: int = DEFAULT_DIM_CAP

    def __post_init__(self) -> None:
        for name, value in (("n_cav", self.n_cav), ("n_mech", self.n_mech)):
            if not isinstance(value, (int, np.integer)) or value < 2:
                raise DimensionError(f"{name} must be an integer >= 2, got {value!r}")
        if self.total > self.cap:
            raise DimensionError(
                f"total dimension {self.total} exceeds cap {self.cap}; "
                "raise cap explicitly if this size is intended"
            )

    @property
    def total(self) -> int:
        return self.n_cav * self.n_mech

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_cav, self.n_mech)


def _as_mode_dims(dims) -> tuple[int, ...]:
    if isinstance(dims, SpaceDims):
        return dims.shape
    if isinstance(dims, (int, np.integer)):
        return (int(dims),)
    return tuple(int(d) for d in dims)


class Operator:
    """Sparse linear operator with the mode dimensions it acts on recorded."""

    def __init__(self, matrix, dims) -> None:
        self.dims: tuple[int, ...] = _as_mode_dims(dims)
        mat = sp.csr_matrix(matrix, dtype=np.complex128)
        total = int(np.prod(self.dims))
        if mat.shape != (total, total):
            raise DimensionError(
                f"matrix shape {mat.shape} does not match mode dims {self.dims}"
            )
        self.matrix = mat

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def dag(self) -> "Operator":
        return Operator(self.matrix.conjugate().transpose().tocsr(), self.dims)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def _check_same_space(self, other: "Operator") -> None:
        if self.dims != other.dims:
            raise DimensionError(f"operator dims differ: {self.dims} vs {other.dims}")

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.matrix @ other.matrix, self.dims)

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.matrix + other.matrix, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.matrix - other.matrix, self.dims)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.matrix * complex(scalar), self.dims)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.matrix, self.dims)

    def __repr__(self) -> str:
        return f"Operator(dims={self.dims}, nnz={self.nnz})"


class StateVector:
    """Pure state on a truncated product space; unit norm enforced."""

    def __init__(self, amplitudes, dims, *, validate: bool = True) -> None:
        self.dims = _as_mode_dims(dims)
        amp = np.asarray(amplitudes, dtype=np.complex128).ravel()
        total = int(np.prod(self.dims))
        if amp.size != total:
            raise DimensionError(f"state length {amp.size} != product of dims {self.dims}")
        if validate:
            norm = float(np.linalg.norm(amp))
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"state norm {norm} deviates from 1 beyond {NORM_TOL}")
        self.amplitudes = amp

    def to_density_matrix(self) -> "DensityMatrix":
        rho = np.outer(self.amplitudes, self.amplitudes.conjugate())
        return DensityMatrix(rho, self.dims, validate=False)

    def __repr__(self) -> str:
        return f"StateVector(dims={self.dims})"


class DensityMatrix:
    """Dense density matrix; Hermitian, unit trace, numerically positive."""

    def __init__(self, entries, dims, *, validate: bool = True) -> None:
        self.dims = _as_mode_dims(dims)
        rho = np.asarray(entries, dtype=np.complex128)
        total = int(np.prod(self.dims))
        if rho.shape != (total, total):
            raise DimensionError(f"matrix shape {rho.shape} != dims {self.dims}")
        self.entries = rho
        if validate:
            herm = float(np.max(np.abs(rho - rho.conjugate().T))) if total else 0.0
            if herm > HERMITICITY_TOL:
                raise ValueError(f"hermiticity defect {herm} exceeds {HERMITICITY_TOL}")
            tr = complex(np.trace(rho))
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
            min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conjugate().T)).min())
            if min_eig < POSITIVITY_TOL:
                raise ValueError(f"minimum eigenvalue {min_eig} below {POSITIVITY_TOL}")

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def __repr__(self) -> str:
        return f"DensityMatrix(dims={self.dims})"


def annihilator(dim: int) -> Operator:
    """Single-mode lowering operator, <n-1|a|n> = sqrt(n)."""
    if dim < 2:
        raise DimensionError(f"mode dimension must be >= 2, got {dim}")
    off = np.sqrt(np.arange(1, dim, dtype=np.float64))
    return Operator(sp.diags(off, offsets=1, shape=(dim, dim), format="csr"), (dim,))


def creator(dim: int) -> Operator:
    return annihilator(dim).dag()


def number_op(dim: int) -> Operator:
    return Operator(
        sp.diags(np.arange(dim, dtype=np.float64), shape=(dim, dim), format="csr"),
        (dim,),
    )


def identity(dim: int) -> Operator:
    return Operator(sp.identity(dim, dtype=np.complex128, format="csr"), (dim,))


def dagger(op: Operator) -> Operator:
    return op.dag()


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def tensor(a, b):
    """Kronecker product; first factor is the slow (cavity-major) index.

    Accepts Operator, StateVector or DensityMatrix pairs of matching kind.
    """
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(sp.kron(a.matrix, b.matrix, format="csr"), a.dims + b.dims)
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), a.dims + b.dims)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(np.kron(a.entries, b.entries), a.dims + b.dims, validate=False)
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def expectation(op: Operator, state) -> complex:
    """<A> = Tr(A rho) for density matrices, <psi|A|psi> for pure states."""
    if isinstance(state, StateVector):
        if op.dims != state.dims:
            raise DimensionError(f"dims differ: {op.dims} vs {state.dims}")
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    if isinstance(state, DensityMatrix):
        if op.dims != state.dims:
            raise DimensionError(f"dims differ: {op.dims} vs {state.dims}")
        # Tr(A rho) = sum_ij A_ij rho_ji without forming the product matrix
        return complex(op.matrix.multiply(state.entries.T).sum())
    raise TypeError(f"unsupported state type {type(state).__name__}")


def thermal_state(nbar: float, dim: int) -> DensityMatrix:
    """Truncated thermal state, renormalized so the trace is exactly one."""
    if nbar < 0:
        raise ValueError(f"thermal occupancy must be >= 0, got {nbar}")
    if dim < 2:
        raise DimensionError(f"mode dimension must be >= 2, got {dim}")
    if nbar == 0.0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        ratio = nbar / (nbar + 1.0)
        p = ratio ** np.arange(dim, dtype=np.float64)
        p /= p.sum()
    return DensityMatrix(np.diag(p.astype(np.complex128)), (dim,), validate=False)


def fock_state(n_c: int, n_m: int, dims: SpaceDims) -> StateVector:
    """Product number state |n_c, n_m> on the composite space."""
    if not (0 <= n_c < dims.n_cav and 0 <= n_m < dims.n_mech):
        raise DimensionError(
            f"occupation ({n_c}, {n_m}) outside truncation {dims.shape}"
        )
    amp = np.zeros(dims.total, dtype=np.complex128)
    amp[n_c * dims.n_mech + n_m] = 1.0
    return StateVector(amp, dims)


def vacuum(dims: SpaceDims) -> DensityMatrix:
    return fock_state(0, 0, dims).to_density_matrix()


def cavity_annihilator(dims: SpaceDims) -> Operator:
    return tensor(annihilator(dims.n_cav), identity(dims.n_mech))


def mech_annihilator(dims: SpaceDims) -> Operator:
    return tensor(identity(dims.n_cav), annihilator(dims.n_mech))


def cavity_number(dims: SpaceDims) -> Operator:
    return tensor(number_op(dims.n_cav), identity(dims.n_mech))


def mech_number(dims: SpaceDims) -> Operator:
    return tensor(identity(dims.n_cav), number_op(dims.n_mech))
