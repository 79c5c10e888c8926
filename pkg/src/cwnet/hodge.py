"""Chains, cochains and weighted Hodge Laplacians on a :class:`CWComplex`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complex import ComplexError, CWComplex

__all__ = [
    "Chain",
    "Cochain",
    "WeightStack",
    "boundary_apply",
    "coboundary_apply",
    "coboundary_adjoint",
    "graph_laplacian",
    "hodge_laplacian",
    "inner_product",
    "pinv_diag",
]

# Entries of a diagonal weight with magnitude at or below this are treated as
# zero by the pseudoinverse.
PINV_CUTOFF = 1e-12


@dataclass(frozen=True, eq=False)
class Chain:
    """Integer combination of ``k``-cells."""

    degree: int
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=np.int64))

    def __eq__(self, other):
        return (
            isinstance(other, Chain)
            and self.degree == other.degree
            and np.array_equal(self.coefficients, other.coefficients)
        )


@dataclass(frozen=True, eq=False)
class Cochain:
    """Real value on every ``k``-cell."""

    degree: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))


@dataclass(frozen=True)
class WeightStack:
    """Diagonal cell weights ``w^0 .. w^n`` (one vector per dimension)."""

    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        for k, w in enumerate(ws):
            if w.ndim != 1:
                raise ValueError(f"w^{k} must be a vector")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"w^{k} has non-finite entries")
        object.__setattr__(self, "weights", ws)

    @classmethod
    def identity(cls, complex_: CWComplex) -> "WeightStack":
        return cls(tuple(np.ones(n) for n in complex_.skeleton_sizes))

    def __getitem__(self, k: int) -> np.ndarray:
        return self.weights[k]

    def __len__(self) -> int:
        return len(self.weights)

    def inverse(self, k: int) -> np.ndarray:
        return pinv_diag(self.weights[k])


def pinv_diag(w: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of ``diag(w)``, returned as a vector."""
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    big = np.abs(w) > PINV_CUTOFF
    out[big] = 1.0 / w[big]
    return out


def boundary_apply(complex_: CWComplex, k: int, chain: Chain) -> Chain:
    if chain.degree != k:
        raise ComplexError(f"chain has degree {chain.degree}, expected {k}")
    b = complex_.boundary(k)
    if chain.coefficients.shape != (b.shape[1],):
        raise ComplexError(f"chain length {chain.coefficients.shape} does not match N_{k}={b.shape[1]}")
    return Chain(k - 1, b @ chain.coefficients)


def coboundary_apply(complex_: CWComplex, k: int, cochain: Cochain) -> Cochain:
    """``d_k f = B_{k+1}^T f``; the top-dimension coboundary is the zero map."""
    if cochain.degree != k:
        raise ComplexError(f"cochain has degree {cochain.degree}, expected {k}")
    if not 0 <= k <= complex_.dimension:
        raise ComplexError(f"k={k} out of range 0..{complex_.dimension}")
    if cochain.values.shape != (complex_.skeleton_sizes[k],):
        raise ComplexError(f"cochain length {cochain.values.shape} does not match N_{k}")
    if k == complex_.dimension:
        return Cochain(k + 1, np.zeros(0))
    return Cochain(k + 1, complex_.boundary(k + 1).T @ cochain.values)


def coboundary_adjoint(complex_: CWComplex, k: int, cochain: Cochain, weights: WeightStack) -> Cochain:
    """``d_k^*`` with respect to the weighted inner products: ``W_k^+ B_{k+1} W_{k+1} f``."""
    if cochain.degree != k + 1:
        raise ComplexError(f"cochain has degree {cochain.degree}, expected {k + 1}")
    b = complex_.boundary(k + 1)
    return Cochain(k, weights.inverse(k) * (b @ (weights[k + 1] * cochain.values)))


def inner_product(f: Cochain, g: Cochain, weights: np.ndarray | WeightStack) -> float:
    if f.degree != g.degree:
        raise ComplexError(f"degree mismatch: {f.degree} vs {g.degree}")
    w = weights[f.degree] if isinstance(weights, WeightStack) else np.asarray(weights, dtype=np.float64)
    if not (w.shape == f.values.shape == g.values.shape):
        raise ComplexError(f"length mismatch: w{w.shape} f{f.values.shape} g{g.values.shape}")
    return float(np.sum(w * f.values * g.values))


def hodge_laplacian(complex_: CWComplex, k: int, weights: WeightStack | None = None) -> np.ndarray:
    """Weighted Hodge Laplacian

        Delta_k = B_k^T W_{k-1}^+ B_k W_k  +  W_k^+ B_{k+1} W_{k+1} B_{k+1}^T

    The first term is dropped at ``k = 0`` and the second at ``k = n``.
    """
    n = complex_.dimension
    if not 0 <= k <= n:
        raise ComplexError(f"k={k} out of range 0..{n}")
    if weights is None:
        weights = WeightStack.identity(complex_)
    if len(weights) != n + 1:
        raise ComplexError(f"weight stack has {len(weights)} levels, complex needs {n + 1}")
    for d, (w, size) in enumerate(zip(weights.weights, complex_.skeleton_sizes)):
        if w.shape != (size,):
            raise ComplexError(f"w^{d} has length {w.shape[0]}, expected N_{d}={size}")

    size = complex_.skeleton_sizes[k]
    out = np.zeros((size, size))
    if k > 0:
        b = complex_.boundary(k).astype(np.float64)
        out += b.T @ (weights.inverse(k - 1)[:, None] * b) * weights[k][None, :]
    if k < n:
        b = complex_.boundary(k + 1).astype(np.float64)
        out += weights.inverse(k)[:, None] * ((b * weights[k + 1][None, :]) @ b.T)
    return out


def graph_laplacian(complex_: CWComplex) -> np.ndarray:
    """Combinatorial ``D - A`` of the 1-skeleton, built edge by edge from ``B_1``."""
    if complex_.dimension != 1:
        raise ComplexError(f"graph_laplacian needs a 1-dimensional complex, got {complex_.dimension}")
    b = complex_.boundary(1)
    n0 = complex_.skeleton_sizes[0]
    lap = np.zeros((n0, n0))
    for col in b.T:
        ends = np.flatnonzero(col)
        if len(ends) != 2:
            continue
        u, v = ends
        lap[u, u] += 1
        lap[v, v] += 1
        lap[u, v] -= 1
        lap[v, u] -= 1
    return lap


def random_weights(complex_: CWComplex, rng: np.random.Generator, low: float = 0.5, high: float = 1.5) -> WeightStack:
    return WeightStack(tuple(rng.uniform(low, high, size=n) for n in complex_.skeleton_sizes))


def spectrum(complex_: CWComplex, k: int, weights: WeightStack | None = None) -> np.ndarray:
    """Sorted eigenvalues of ``Delta_k`` (real part; exact for identity weights)."""
    lap = hodge_laplacian(complex_, k, weights)
    if weights is None:
        return np.linalg.eigvalsh(lap)
    return np.sort(np.linalg.eigvals(lap).real)

