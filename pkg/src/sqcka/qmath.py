"""Exact complex linear algebra and entropy kernels for composite systems.

Everything is dense, double precision, and immutable after construction;
operations are pure functions, safe to call from parallel workers.  The
exact-simulation size is capped at :data:`DIM_CAP` amplitudes — callers
needing more must fall back to analytic paths.

Index convention: the first subsystem of a layout occupies the most
significant position of the flat index (big-endian multi-index).  This is
the convention of a C-order ``reshape`` and is used everywhere.
"""

from __future__ import annotations

import math
import string as _string
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

#: Hard cap on statevector length for exact simulation.
DIM_CAP = 1 << 22

NORM_ATOL = 1e-12
HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
UNITARY_ATOL = 1e-10
IDEMPOTENT_ATOL = 1e-10
#: Eigenvalues below this are treated as exact zeros inside entropies.
EIGENVALUE_CLIP = 1e-12
#: Projection probabilities at or below this leave no post-state.
NULL_PROB = 1e-14

_LOG2 = math.log(2.0)


class CapacityError(RuntimeError):
    """A requested object exceeds the exact-simulation size cap."""


class ValidationError(ValueError):
    """An input violates a structural requirement (unitarity, hermiticity, ...)."""


class LayoutError(ValueError):
    """A register label is unknown or a layout is malformed."""


class DomainError(ValueError):
    """A scalar or index argument lies outside its admissible range."""


class NumericalError(ArithmeticError):
    """A computed quantity left its mathematically guaranteed range."""


# ---------------------------------------------------------------------------
# bit-string index helpers
# ---------------------------------------------------------------------------


def bits_to_index(bits: str | Sequence[int]) -> int:
    """Big-endian bit string (e.g. "011" or (0,1,1)) to integer index."""
    idx = 0
    for b in bits:
        v = int(b)
        if v not in (0, 1):
            raise DomainError(f"bit value {b!r} is not 0/1")
        idx = (idx << 1) | v
    return idx


def index_to_bits(index: int, width: int) -> str:
    if not 0 <= index < (1 << width):
        raise DomainError(f"index {index} does not fit in {width} bits")
    return format(index, f"0{width}b")


def complement_index(index: int, width: int) -> int:
    """Bitwise complement of an n-bit string, as an index."""
    return index ^ ((1 << width) - 1)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


class RegisterLayout:
    """Ordered map of register labels to dimensions.

    Supplies the multi-index <-> flat-index arithmetic for all subsystem
    operations.  Labels are arbitrary unique strings; dimensions are
    positive integers.
    """

    __slots__ = ("_labels", "_dims", "_axis")

    def __init__(self, pairs: Iterable[tuple[str, int]]):
        labels: list[str] = []
        dims: list[int] = []
        for label, dim in pairs:
            if not isinstance(label, str) or not label:
                raise LayoutError(f"bad register label {label!r}")
            if int(dim) < 1:
                raise LayoutError(f"register {label!r} has non-positive dim {dim}")
            labels.append(label)
            dims.append(int(dim))
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate register labels in {labels}")
        self._labels = tuple(labels)
        self._dims = tuple(dims)
        self._axis = {lab: i for i, lab in enumerate(labels)}

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def total_dim(self) -> int:
        return math.prod(self._dims)

    def axis(self, label: str) -> int:
        try:
            return self._axis[label]
        except KeyError:
            raise LayoutError(f"unknown register label {label!r}") from None

    def axes_of(self, labels: Iterable[str]) -> tuple[int, ...]:
        """Axes of the given labels, sorted into layout order."""
        return tuple(sorted(self.axis(lab) for lab in labels))

    def dim_of(self, labels: Iterable[str]) -> int:
        return math.prod(self._dims[ax] for ax in self.axes_of(labels))

    def restrict(self, labels: Iterable[str]) -> "RegisterLayout":
        keep = set(labels)
        for lab in keep:
            self.axis(lab)
        return RegisterLayout((lab, d) for lab, d in zip(self._labels, self._dims)
                              if lab in keep)

    def without(self, labels: Iterable[str]) -> "RegisterLayout":
        drop = set(labels)
        for lab in drop:
            self.axis(lab)
        return self.restrict(l for l in self._labels if l not in drop)

    def basis_index(self, values: dict[str, int]) -> int:
        """Flat index of a computational basis state given per-register values."""
        if set(values) != set(self._labels):
            raise LayoutError("basis_index needs a value for every register")
        idx = 0
        for lab, dim in zip(self._labels, self._dims):
            v = int(values[lab])
            if not 0 <= v < dim:
                raise DomainError(f"value {v} out of range for register {lab!r}")
            idx = idx * dim + v
        return idx

    def __repr__(self) -> str:
        body = ", ".join(f"{lab}:{d}" for lab, d in zip(self._labels, self._dims))
        return f"RegisterLayout({body})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, RegisterLayout)
                and self._labels == other._labels and self._dims == other._dims)

    def __hash__(self):
        return hash((self._labels, self._dims))


def _frozen_complex(data, dim_hint: str) -> np.ndarray:
    arr = np.array(data, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{dim_hint} contains NaN/Inf")
    arr.setflags(write=False)
    return arr


class StateVector:
    """A pure state as a flat complex amplitude array."""

    __slots__ = ("amps", "normalized")

    def __init__(self, amps, normalized: bool = True):
        arr = _frozen_complex(np.asarray(amps).reshape(-1), "state vector")
        if arr.size < 1:
            raise ValidationError("empty state vector")
        if arr.size > DIM_CAP:
            raise CapacityError(f"state of dim {arr.size} exceeds cap {DIM_CAP}")
        if normalized:
            nrm = float(np.vdot(arr, arr).real)
            if abs(nrm - 1.0) > NORM_ATOL:
                raise ValidationError(f"state marked normalized has norm^2 {nrm!r}")
        self.amps = arr
        self.normalized = normalized

    @property
    def dim(self) -> int:
        return self.amps.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim}, normalized={self.normalized})"


def basis_state(dim: int, index: int) -> StateVector:
    if not 0 <= index < dim:
        raise DomainError(f"basis index {index} out of range for dim {dim}")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(amps)


class DensityOperator:
    """A density operator; Hermitian with unit trace (checked at build)."""

    __slots__ = ("entries",)

    def __init__(self, entries, *, check: bool = True):
        mat = _frozen_complex(np.asarray(entries), "density operator")
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValidationError(f"density operator must be square, got {mat.shape}")
        if check:
            herm = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
            if herm > HERMITIAN_ATOL:
                raise ValidationError(f"not Hermitian within {HERMITIAN_ATOL} (dev {herm:.3e})")
            tr = complex(np.trace(mat))
            if abs(tr - 1.0) > TRACE_ATOL:
                raise ValidationError(f"trace {tr} differs from 1")
        self.entries = mat

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def validate_psd(self, atol: float = 1e-10) -> None:
        lo = float(self.eigenvalues().min())
        if lo < -atol:
            raise ValidationError(f"negative eigenvalue {lo:.3e} below -{atol}")

    def __repr__(self) -> str:
        return f"DensityOperator(dim={self.dim})"


def density_from_state(state: StateVector) -> DensityOperator:
    rho = np.outer(state.amps, state.amps.conj())
    return DensityOperator(rho, check=state.normalized)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def tensor(x: StateVector, y: StateVector) -> StateVector:
    """Kronecker product of two states, x-major (x's index most significant)."""
    if x.dim * y.dim > DIM_CAP:
        raise CapacityError(f"tensor dim {x.dim * y.dim} exceeds cap {DIM_CAP}")
    return StateVector(np.kron(x.amps, y.amps),
                       normalized=x.normalized and y.normalized)


def tensor_all(states: Sequence[StateVector]) -> StateVector:
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def _check_unitary(U: np.ndarray, atol: float = UNITARY_ATOL) -> np.ndarray:
    U = np.asarray(U, dtype=np.complex128)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValidationError(f"operator must be square, got {U.shape}")
    dev = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
    if dev > atol:
        raise ValidationError(f"operator is not unitary within {atol} (dev {dev:.3e})")
    return U


def apply_on_subsystems(U, state: StateVector, layout: RegisterLayout,
                        targets: Iterable[str]) -> StateVector:
    """Apply unitary ``U`` to the target registers, identity elsewhere.

    ``U`` must be indexed big-endian over the targets in *layout order*.
    """
    if layout.total_dim != state.dim:
        raise LayoutError(f"layout dim {layout.total_dim} != state dim {state.dim}")
    axes = layout.axes_of(targets)
    if not axes:
        raise LayoutError("no target registers given")
    tdim = math.prod(layout.dims[ax] for ax in axes)
    U = _check_unitary(U)
    if U.shape[0] != tdim:
        raise ValidationError(f"unitary dim {U.shape[0]} != target dim {tdim}")
    out = _kernels.apply_matrix(state.amps, layout.dims, axes, U)
    return StateVector(out, normalized=state.normalized)


def subsystem_probabilities(state: StateVector, layout: RegisterLayout,
                            targets: Sequence[str]) -> np.ndarray:
    """Exact Z-basis outcome distribution over the target registers.

    The result axes follow the *given* target order (not layout order).
    """
    if layout.total_dim != state.dim:
        raise LayoutError(f"layout dim {layout.total_dim} != state dim {state.dim}")
    axes = [layout.axis(lab) for lab in targets]
    flat = _kernels.axis_probabilities(state.amps, layout.dims, axes)
    return flat.reshape([layout.dims[ax] for ax in axes])


def partial_trace(rho: DensityOperator, layout: RegisterLayout,
                  keep: Iterable[str]) -> DensityOperator:
    """Trace out every register not in ``keep`` (kept axes keep layout order)."""
    keep_set = set(keep)
    if not keep_set:
        raise DomainError("keep set must be non-empty")
    keep_axes = set(layout.axes_of(keep_set))
    if layout.total_dim != rho.dim:
        raise LayoutError(f"layout dim {layout.total_dim} != operator dim {rho.dim}")
    dims = layout.dims
    k = len(dims)
    tens = rho.entries.reshape(dims + dims)
    letters = _string.ascii_letters
    row, col, out_sub = [], [], []
    nxt = 0
    for i in range(k):
        if i in keep_axes:
            a, b = letters[nxt], letters[nxt + 1]
            nxt += 2
            row.append(a)
            col.append(b)
        else:
            a = letters[nxt]
            nxt += 1
            row.append(a)
            col.append(a)
    for i in range(k):
        if i in keep_axes:
            out_sub.append(row[i])
    for i in range(k):
        if i in keep_axes:
            out_sub.append(col[i])
    spec = "".join(row) + "".join(col) + "->" + "".join(out_sub)
    red = np.einsum(spec, tens)
    d = math.prod(dims[i] for i in sorted(keep_axes))
    return DensityOperator(red.reshape(d, d), check=False)


def project(state: StateVector, projector) -> tuple[float, StateVector | None]:
    """Born probability and renormalized post-state for an idempotent operator.

    Returns ``(prob, None)`` when the branch weight is numerically zero.
    """
    P = projector.entries if isinstance(projector, DensityOperator) else \
        np.asarray(projector, dtype=np.complex128)
    if P.shape != (state.dim, state.dim):
        raise ValidationError(f"projector shape {P.shape} != state dim {state.dim}")
    dev = np.max(np.abs(P @ P - P))
    if dev > IDEMPOTENT_ATOL:
        raise ValidationError(f"projector is not idempotent within {IDEMPOTENT_ATOL}")
    branch = P @ state.amps
    prob = float(np.vdot(state.amps, branch).real)
    if prob < -1e-10:
        raise NumericalError(f"projection probability {prob} < 0")
    prob = min(max(prob, 0.0), 1.0)
    if prob <= NULL_PROB:
        return prob, None
    return prob, StateVector(branch / math.sqrt(prob))


def entropy_of_spectrum(eigenvalues: np.ndarray) -> float:
    """Shannon entropy (bits) of a spectrum, clipping values below the cutoff."""
    w = np.asarray(eigenvalues, dtype=np.float64)
    w = w[w > EIGENVALUE_CLIP]
    if w.size == 0:
        return 0.0
    return float(-(w * np.log(w)).sum() / _LOG2)


def von_neumann_entropy(rho: DensityOperator) -> float:
    """S(rho) = -Tr(rho log2 rho), in bits."""
    return entropy_of_spectrum(rho.eigenvalues())


def conditional_entropy(rho: DensityOperator, layout: RegisterLayout,
                        part_a: Iterable[str], part_e: Iterable[str]) -> float:
    """S(A|E) = S(AE) - S(E) for a bipartition covering the layout."""
    a = set(part_a)
    e = set(part_e)
    if a & e:
        raise ValidationError(f"parts overlap: {sorted(a & e)}")
    if a | e != set(layout.labels):
        raise ValidationError("parts must cover the layout")
    s_ae = von_neumann_entropy(rho)
    s_e = von_neumann_entropy(partial_trace(rho, layout, e))
    return s_ae - s_e


def reduced_spectrum(state: StateVector, layout: RegisterLayout,
                     keep: Iterable[str]) -> np.ndarray:
    """Nonzero spectrum of the reduced state on ``keep``, from a pure state.

    Uses the smaller Gram side (eigenvalues of M M^dag equal those of
    M^dag M), so huge kept dimensions stay cheap as long as the complement
    is small.
    """
    keep_axes = layout.axes_of(keep)
    if not keep_axes:
        raise DomainError("keep set must be non-empty")
    dims = layout.dims
    order = list(keep_axes) + [i for i in range(len(dims)) if i not in keep_axes]
    mat = state.amps.reshape(dims).transpose(order)
    dk = math.prod(dims[i] for i in keep_axes)
    mat = mat.reshape(dk, -1)
    if mat.shape[0] <= mat.shape[1]:
        gram = mat @ mat.conj().T
    else:
        gram = mat.conj().T @ mat
    w = np.linalg.eigvalsh(gram)
    return w[w > EIGENVALUE_CLIP]


def binary_entropy(x: float) -> float:
    """Shannon entropy (bits) of the distribution {x, 1-x}."""
    if not -1e-12 <= x <= 1.0 + 1e-12:
        raise DomainError(f"binary_entropy argument {x} outside [0, 1]")
    x = min(max(x, 0.0), 1.0)
    if x == 0.0 or x == 1.0:
        return 0.0
    return float(-(x * math.log(x) + (1.0 - x) * math.log(1.0 - x)) / _LOG2)
