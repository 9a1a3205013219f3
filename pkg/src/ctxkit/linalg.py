"""Weighted spectral linear algebra.

All spectral objects in this package live in L2 spaces weighted by a
probability vector w. The integral operator of a symmetric kernel matrix K
with respect to the empirical measure w is

    (T_K f)(x_i) = sum_j K[i, j] w[j] f(x_j),

i.e. the (non-symmetric) matrix K @ diag(w). Conjugating by diag(sqrt(w))
turns it into the symmetric matrix diag(sqrt(w)) K diag(sqrt(w)) with the
same eigenvalues; eigenvectors u map back to eigenfunctions f = u / sqrt(w)
that are orthonormal in the weighted inner product

    <f, g>_w = sum_i w[i] f(x_i) g(x_i).

This module provides that eigendecomposition, the symmetric-definite
generalized eigenproblem B v = lambda C v with C-orthonormal eigenvectors,
fixed-step-size Richardson iteration for linear systems, weighted
least-squares probes, principal angles between weighted subspaces, and a
power-iteration estimate of a top eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import BoundsError, DomainError, StructuralError
from .runtime import make_rng

__all__ = [
    "WeightedMatrix",
    "Spectrum",
    "RichardsonResult",
    "ProbeResult",
    "weighted_sym_eig",
    "generalized_eig",
    "richardson_solve",
    "linear_probe",
    "fix_signs",
    "subspace_max_angle",
    "power_top_eigenvalue",
]

SYMMETRY_TOL = 1e-10
WEIGHT_SUM_TOL = 1e-12


def _as_2d_float(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.ndim != 2:
        raise StructuralError(f"{name} must be a 2-D array, got ndim={out.ndim}")
    return out


def check_symmetric(matrix: np.ndarray, tol: float = SYMMETRY_TOL, name: str = "matrix") -> None:
    """Raise unless ``matrix`` is square and symmetric within ``tol``."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise StructuralError(f"{name} must be square, got shape {matrix.shape}")
    gap = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if gap > tol:
        raise StructuralError(f"{name} is not symmetric: max |M - M^T| = {gap:.3e} > {tol:g}")


def check_weights(weights, n: int | None = None, tol: float = WEIGHT_SUM_TOL) -> np.ndarray:
    """Validate a probability vector: nonnegative, sums to 1 within ``tol``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise StructuralError(f"weights must be 1-D, got ndim={w.ndim}")
    if n is not None and w.shape[0] != n:
        raise StructuralError(f"weights length {w.shape[0]} does not match size {n}")
    if w.size and float(np.min(w)) < 0.0:
        raise StructuralError(f"weights must be nonnegative, min = {np.min(w):.3e}")
    total = float(np.sum(w))
    if abs(total - 1.0) > tol:
        raise StructuralError(f"weights must sum to 1 within {tol:g}, got {total!r}")
    return w


@dataclass
class WeightedMatrix:
    """A symmetric kernel matrix together with the probability weights of its sample points."""

    entries: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.entries = _as_2d_float(self.entries, "entries")
        check_symmetric(self.entries, name="entries")
        self.weights = check_weights(self.weights, n=self.entries.shape[0])

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def operator(self) -> np.ndarray:
        """The (non-symmetric) action matrix K @ diag(w)."""
        return self.entries * self.weights[np.newaxis, :]

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Apply the integral operator to function values ``f``."""
        return self.entries @ (self.weights * np.asarray(f, dtype=float))


@dataclass
class Spectrum:
    """Top eigenpairs of a weighted kernel operator.

    ``eigenvalues`` are in descending order; column i of ``functions`` holds
    the values of the i-th eigenfunction on the sample points, orthonormal in
    the weighted inner product given by ``weights``.
    """

    eigenvalues: np.ndarray
    functions: np.ndarray
    weights: np.ndarray
    has_constant_top: bool = field(default=False)

    def __post_init__(self) -> None:
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.functions = _as_2d_float(self.functions, "functions")
        self.weights = check_weights(self.weights, n=self.functions.shape[0])
        if self.eigenvalues.shape[0] != self.functions.shape[1]:
            raise StructuralError(
                f"{self.eigenvalues.shape[0]} eigenvalues but "
                f"{self.functions.shape[1]} eigenfunction columns"
            )

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n(self) -> int:
        return self.functions.shape[0]


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    Ties in magnitude resolve to the first (lowest-index) such entry, making
    the sign choice deterministic.
    """
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[np.newaxis, :]


def weighted_sym_eig(m: WeightedMatrix, k: int | None = None) -> Spectrum:
    """Top-k eigenpairs of the weighted operator K @ diag(w).

    The problem is symmetrized as diag(sqrt(w)) K diag(sqrt(w)) and solved
    densely; eigenfunctions are returned in function coordinates (divided by
    sqrt(w)), weighted-orthonormal. Zero-weight samples get eigenfunction
    value 0 (they carry no L2 mass).
    """
    n = m.n
    if k is None:
        k = n
    if not isinstance(k, (int, np.integer)):
        raise BoundsError(f"k must be an integer, got {type(k).__name__}")
    if k < 1 or k > n:
        raise BoundsError(f"k must be in [1, {n}], got {k}")
    sqrt_w = np.sqrt(m.weights)
    sym = sqrt_w[:, np.newaxis] * m.entries * sqrt_w[np.newaxis, :]
    sym = 0.5 * (sym + sym.T)
    evals, evecs = scipy.linalg.eigh(sym)
    order = np.argsort(evals)[::-1][:k]
    evals = evals[order]
    evecs = evecs[:, order]
    with np.errstate(divide="ignore", invalid="ignore"):
        funcs = np.where(sqrt_w[:, np.newaxis] > 0.0, evecs / sqrt_w[:, np.newaxis], 0.0)
    funcs = fix_signs(funcs)
    return Spectrum(eigenvalues=evals, functions=funcs, weights=m.weights)


def generalized_eig(b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the symmetric-definite problem B v = lambda C v.

    Returns eigenvalues in descending order and eigenvectors satisfying
    V^T C V = I (C-orthonormal), with the deterministic sign convention of
    :func:`fix_signs`. C must be positive definite; a smallest eigenvalue
    at or below 1e-12 is reported as rank deficiency.
    """
    b = _as_2d_float(b, "b")
    c = _as_2d_float(c, "c")
    check_symmetric(b, name="b")
    check_symmetric(c, name="c")
    if b.shape != c.shape:
        raise StructuralError(f"shape mismatch: b {b.shape} vs c {c.shape}")
    c_min = float(scipy.linalg.eigvalsh(0.5 * (c + c.T))[0]) if c.size else 0.0
    if c_min <= 1e-12:
        raise DomainError(
            f"right-hand matrix is rank deficient: smallest eigenvalue {c_min:.6e} <= 1e-12"
        )
    evals, evecs = scipy.linalg.eigh(0.5 * (b + b.T), 0.5 * (c + c.T))
    order = np.argsort(evals)[::-1]
    return evals[order], fix_signs(evecs[:, order])


@dataclass
class RichardsonResult:
    """Outcome of a fixed-step Richardson iteration."""

    solution: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float


def richardson_solve(
    apply_op: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    gamma: float,
    eps: float = 1e-8,
    max_iters: int = 10_000,
) -> RichardsonResult:
    """Solve A x = b by x <- x + gamma (b - A x), starting from x = 0.

    Stops when the prospective step is small: gamma * ||b - A x|| < eps * ||b||,
    which bounds the returned residual by gamma^{-1} * eps * ||b||. If
    ``max_iters`` updates pass without meeting the criterion, the best (last)
    iterate is returned with ``converged=False``.
    """
    b = np.asarray(b, dtype=float)
    if gamma <= 0.0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps!r}")
    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    iterations = 0
    while True:
        residual = b - np.asarray(apply_op(x), dtype=float)
        r_norm = float(np.linalg.norm(residual))
        if not np.isfinite(r_norm):
            return RichardsonResult(x, iterations, False, r_norm)
        if gamma * r_norm < eps * b_norm or b_norm == 0.0:
            return RichardsonResult(x, iterations, True, r_norm)
        if iterations >= max_iters:
            return RichardsonResult(x, iterations, False, r_norm)
        x = x + gamma * residual
        iterations += 1


@dataclass
class ProbeResult:
    """Weighted least-squares fit of a target on encoder columns."""

    coef: np.ndarray
    bias: float
    weighted_mse: float
    fitted: np.ndarray


def linear_probe(
    encoder_values: np.ndarray,
    target: np.ndarray,
    weights,
    with_bias: bool = True,
) -> ProbeResult:
    """Minimum-norm weighted least squares of ``target`` on encoder columns.

    Minimizes sum_i w[i] (Phi[i] . coef + bias - y[i])^2; among minimizers the
    one with the smallest Euclidean norm of (coef, bias) is returned, so
    rank-deficient encoders are handled deterministically.
    """
    phi = _as_2d_float(encoder_values, "encoder_values")
    y = np.asarray(target, dtype=float)
    if y.ndim != 1:
        raise StructuralError(f"target must be 1-D, got ndim={y.ndim}")
    n = phi.shape[0]
    if y.shape[0] != n:
        raise StructuralError(f"target length {y.shape[0]} does not match {n} rows")
    w = check_weights(weights, n=n)
    design = np.hstack([phi, np.ones((n, 1))]) if with_bias else phi
    sqrt_w = np.sqrt(w)
    solution, *_ = np.linalg.lstsq(sqrt_w[:, np.newaxis] * design, sqrt_w * y, rcond=None)
    if with_bias:
        coef, bias = solution[:-1], float(solution[-1])
    else:
        coef, bias = solution, 0.0
    fitted = phi @ coef + bias
    mse = float(np.sum(w * (fitted - y) ** 2))
    return ProbeResult(coef=coef, bias=bias, weighted_mse=mse, fitted=fitted)


def _weighted_orthonormal_basis(columns: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Orthonormal basis (in the sqrt-weighted coordinates) of a column span."""
    scaled = np.sqrt(weights)[:, np.newaxis] * columns
    q, r = np.linalg.qr(scaled)
    diag = np.abs(np.diag(r))
    keep = diag > 1e-12 * max(1.0, float(diag.max(initial=0.0)))
    return q[:, keep]


def subspace_max_angle(a: np.ndarray, b: np.ndarray, weights) -> float:
    """Largest principal angle (radians) between two weighted column spans."""
    a = _as_2d_float(a, "a")
    b = _as_2d_float(b, "b")
    if a.shape[0] != b.shape[0]:
        raise StructuralError("subspace bases must share the sample dimension")
    w = check_weights(weights, n=a.shape[0])
    qa = _weighted_orthonormal_basis(a, w)
    qb = _weighted_orthonormal_basis(b, w)
    if qa.shape[1] != qb.shape[1]:
        return float(np.pi / 2.0)
    if qa.shape[1] == 0:
        return 0.0
    svals = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return float(np.arccos(np.clip(svals.min(), -1.0, 1.0)))


def power_top_eigenvalue(
    apply_op: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-10,
    seed: int = 0,
    max_iters: int = 100_000,
) -> float:
    """Top eigenvalue of a symmetric PSD operator by seeded power iteration."""
    rng = make_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(max_iters):
        av = np.asarray(apply_op(v), dtype=float)
        norm = float(np.linalg.norm(av))
        if norm == 0.0:
            return 0.0
        v = av / norm
        new_estimate = float(v @ np.asarray(apply_op(v), dtype=float))
        if abs(new_estimate - estimate) <= tol * max(1.0, abs(new_estimate)):
            return new_estimate
        estimate = new_estimate
    return estimate
