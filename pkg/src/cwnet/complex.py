"""Finite CW-complexes stored as skeleton sizes plus signed incidence matrices.

A complex of dimension ``n`` keeps one integer matrix ``B_k`` of shape
``N_{k-1} x N_k`` for every ``k = 1..n``.  Column ``j`` of ``B_k`` is the
boundary of the ``j``-th ``k``-cell written as a ``(k-1)``-chain; the sign of
an entry records relative orientation.

Complexes produced by the dataset generator are padded to a shared size
profile.  Real cells always come first in each dimension; ``real_sizes`` says
how many of them there are and everything after is padding (zero rows and
columns in every incidence matrix).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CWComplex",
    "ComplexError",
    "ValidationReport",
    "Violation",
    "build_complex",
    "from_graph",
    "incidence_matrix",
    "total_cells",
    "validate",
]


class ComplexError(ValueError):
    """Raised when a complex cannot be constructed or queried."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        super().__init__(message)
        self.violations = list(violations)


@dataclass(frozen=True)
class Violation:
    rule: str
    location: tuple
    message: str

    def __str__(self) -> str:
        return f"{self.rule} at {self.location}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


def _frozen(matrix) -> np.ndarray:
    arr = np.array(matrix, dtype=np.int64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CWComplex:
    """An immutable finite CW-complex.

    Attributes
    ----------
    dimension : int
        Top dimension ``n``.
    skeleton_sizes : tuple of int
        ``(N_0, ..., N_n)`` including padding cells.
    incidence : tuple of ndarray
        ``(B_1, ..., B_n)``; read-only int64 arrays.
    real_sizes : tuple of int
        Number of non-padding cells per dimension.
    labels : tuple of tuple of str, optional
        Per-cell names, diagnostics only.
    """

    dimension: int
    skeleton_sizes: tuple[int, ...]
    incidence: tuple[np.ndarray, ...]
    real_sizes: tuple[int, ...] = field(default=())
    labels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "skeleton_sizes", tuple(int(s) for s in self.skeleton_sizes))
        object.__setattr__(self, "incidence", tuple(_frozen(b) for b in self.incidence))
        if not self.real_sizes:
            object.__setattr__(self, "real_sizes", self.skeleton_sizes)
        else:
            object.__setattr__(self, "real_sizes", tuple(int(s) for s in self.real_sizes))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CWComplex):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.skeleton_sizes == other.skeleton_sizes
            and self.real_sizes == other.real_sizes
            and len(self.incidence) == len(other.incidence)
            and all(np.array_equal(a, b) for a, b in zip(self.incidence, other.incidence))
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def is_padded(self) -> bool:
        return self.real_sizes != self.skeleton_sizes

    def boundary(self, k: int) -> np.ndarray:
        """Read-only view of ``B_k``; use :func:`incidence_matrix` for a copy."""
        _check_k(self, k)
        return self.incidence[k - 1]

    def cell_mask(self, k: int) -> np.ndarray:
        """Float vector with 1.0 for real ``k``-cells and 0.0 for padding."""
        mask = np.zeros(self.skeleton_sizes[k])
        mask[: self.real_sizes[k]] = 1.0
        return mask


def _check_k(complex_: CWComplex, k: int) -> None:
    if k == 0:
        raise ComplexError("no B_0: boundary of 0-cells undefined")
    if not 1 <= k <= complex_.dimension:
        raise ComplexError(f"k={k} out of range 1..{complex_.dimension}")


def validate(complex_: CWComplex) -> ValidationReport:
    """Check every structural invariant and list all violations found."""
    out: list[Violation] = []
    n = complex_.dimension
    sizes = complex_.skeleton_sizes
    real = complex_.real_sizes

    if n < 0:
        out.append(Violation("sizes", (), f"negative dimension {n}"))
        return ValidationReport(tuple(out))
    if len(sizes) != n + 1:
        out.append(Violation("sizes", (), f"expected {n + 1} skeleton sizes, got {len(sizes)}"))
        return ValidationReport(tuple(out))
    if len(real) != n + 1:
        out.append(Violation("sizes", (), f"expected {n + 1} real sizes, got {len(real)}"))
        return ValidationReport(tuple(out))
    for k, (s, r) in enumerate(zip(sizes, real)):
        if s < 0 or not 0 <= r <= s:
            out.append(Violation("sizes", (k,), f"N_{k}={s} with {r} real cells"))
    if real[0] < 1:
        out.append(Violation("sizes", (0,), "a complex needs at least one 0-cell"))
    if len(complex_.incidence) != n:
        out.append(Violation("shape", (), f"expected {n} incidence matrices, got {len(complex_.incidence)}"))
        return ValidationReport(tuple(out))

    shapes_ok = True
    for k, b in enumerate(complex_.incidence, start=1):
        want = (sizes[k - 1], sizes[k])
        if b.shape != want:
            out.append(Violation("shape", (k,), f"B_{k} has shape {b.shape}, expected {want}"))
            shapes_ok = False
            continue
        for r, c in zip(*np.nonzero((b < -1) | (b > 1))):
            out.append(Violation("entry-range", (k, int(r), int(c)), f"B_{k}[{r},{c}]={b[r, c]}"))
        col_nonzero = np.any(b != 0, axis=0)
        for c in range(real[k]):
            if not col_nonzero[c]:
                out.append(Violation("dangling-cell", (k, c), f"{k}-cell {c} has empty boundary"))
        pad_rows = b[real[k - 1]:, :]
        pad_cols = b[:, real[k]:]
        if pad_rows.any() or pad_cols.any():
            out.append(Violation("padding", (k,), f"B_{k} has nonzero entries on padding cells"))

    if shapes_ok:
        for k in range(1, n):
            prod = complex_.incidence[k - 1] @ complex_.incidence[k]
            for r, c in zip(*np.nonzero(prod)):
                out.append(
                    Violation(
                        "boundary-composition",
                        (k, int(r), int(c)),
                        f"(B_{k} B_{k + 1})[{r},{c}]={prod[r, c]}",
                    )
                )
    return ValidationReport(tuple(out))


def build_complex(
    dimension: int,
    skeleton_sizes: Sequence[int],
    incidence: Sequence,
    real_sizes: Sequence[int] | None = None,
    labels=None,
) -> CWComplex:
    """Construct a complex, raising :class:`ComplexError` unless it validates."""
    mats = []
    for k, b in enumerate(incidence, start=1):
        arr = np.asarray(b)
        if arr.ndim != 2:
            raise ComplexError(f"B_{k} must be a matrix, got {arr.ndim} dimensions")
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ComplexError(f"B_{k} has non-integer entries")
        mats.append(arr.astype(np.int64))
    cx = CWComplex(
        dimension=int(dimension),
        skeleton_sizes=tuple(skeleton_sizes),
        incidence=tuple(mats),
        real_sizes=tuple(real_sizes) if real_sizes is not None else (),
        labels=labels,
    )
    report = validate(cx)
    if not report.ok:
        raise ComplexError("; ".join(str(v) for v in report.violations[:5]), report.violations)
    return cx


def from_graph(num_vertices: int, oriented_edges: Sequence[tuple[int, int]]) -> CWComplex:
    """1-dimensional complex of a loopless graph; vertices are 0-based.

    Each edge ``(tail, head)`` becomes a column with -1 at ``tail`` and +1 at
    ``head``.
    """
    edges = list(oriented_edges)
    b1 = np.zeros((num_vertices, len(edges)), dtype=np.int64)
    for j, (tail, head) in enumerate(edges):
        if tail == head:
            raise ComplexError(f"loop: edge {j} joins vertex {tail} to itself")
        for v in (tail, head):
            if not 0 <= v < num_vertices:
                raise ComplexError(f"edge {j}: vertex {v} out of range 0..{num_vertices - 1}")
        b1[tail, j] = -1
        b1[head, j] = 1
    return build_complex(1, [num_vertices, len(edges)], [b1])


def incidence_matrix(complex_: CWComplex, k: int) -> np.ndarray:
    """Writable copy of ``B_k``."""
    return complex_.boundary(k).copy()


def total_cells(complex_: CWComplex) -> int:
    return int(sum(complex_.real_sizes))
