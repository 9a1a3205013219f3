"""Kernel regression with spectrally reshaped kernels on finite sample sets.

Given a base positive-semidefinite kernel with eigendecomposition
``k = sum_i lam_i mu_i mu_i^T``, a transformed kernel replaces each ``lam_i``
by ``s(lam_i)`` while keeping the eigenfunctions.  This module provides the
exact transformed kernel at desk scale, kernel ridge regression, two
matrix-free iterative solvers (one for polynomial ``s``, one for polynomial
``1/s``), label propagation on graphs, and the normalized-adjacency base
kernel with its edge-list and split-file formats.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import jsonio
from .context import DualKernel
from .errors import BoundsError, DomainError, StructuralError
from .linalg import Spectrum, power_top_eigenvalue

__all__ = [
    "STKSpec",
    "SemiSupProblem",
    "stk_exact",
    "khat_power",
    "krr",
    "SimplePropResult",
    "InversePropResult",
    "stkr_prop_simple_s",
    "stkr_prop_inverse",
    "label_prop",
    "graph_base_kernel",
    "graph_kernel_rows",
    "save_edge_list",
    "load_edge_list",
    "save_splits",
    "load_splits",
]

_GRAM_SYM_TOL = 1e-8
_RHO_GRID_POINTS = 1025
_DIVERGENCE_LIMIT = 1e12
_SPLIT_KEYS = ("train", "val", "test", "other")


# ---------------------------------------------------------------------------
# Spectral transformation specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class STKSpec:
    """How to reshape a kernel spectrum.

    Kinds: ``poly`` applies ``s(lam) = sum_p pi[p-1] lam^p``; ``power`` is the
    single monomial ``lam^p``; ``truncation`` keeps the ``d`` largest modes
    unchanged and zeroes the rest; ``inverse_poly`` defines ``s`` through its
    reciprocal ``1/s(lam) = sum_p xi[p] lam^(p-r)``; ``inverse_laplacian`` is
    the geometric series ``s(lam) = lam / (1 - eta*lam)``.
    """

    kind: str
    pi: tuple = ()
    xi: tuple = ()
    r: int = 0
    p: int = 0
    d: int = 0
    eta: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "poly":
            if not self.pi:
                raise StructuralError("poly transform needs coefficients")
            if any(c < 0 for c in self.pi):
                raise DomainError("poly transform needs nonnegative coefficients")
        elif self.kind == "power":
            if self.p < 1:
                raise BoundsError(f"power transform needs p >= 1, got {self.p}")
        elif self.kind == "truncation":
            if self.d < 1:
                raise BoundsError(f"truncation needs d >= 1, got {self.d}")
        elif self.kind == "inverse_poly":
            if not self.xi:
                raise StructuralError("inverse_poly transform needs coefficients")
            if self.xi[0] <= 0:
                raise DomainError(
                    f"inverse_poly needs a positive constant term, got {self.xi[0]}"
                )
            if self.r < 1:
                raise BoundsError(f"inverse_poly needs r >= 1, got {self.r}")
        elif self.kind == "inverse_laplacian":
            if self.eta < 0:
                raise DomainError(f"inverse_laplacian needs eta >= 0, got {self.eta}")
        else:
            raise StructuralError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def poly(cls, *pi: float) -> "STKSpec":
        return cls(kind="poly", pi=tuple(float(c) for c in pi))

    @classmethod
    def power(cls, p: int) -> "STKSpec":
        return cls(kind="power", p=int(p))

    @classmethod
    def truncation(cls, d: int) -> "STKSpec":
        return cls(kind="truncation", d=int(d))

    @classmethod
    def inverse_poly(cls, xi, r: int) -> "STKSpec":
        return cls(kind="inverse_poly", xi=tuple(float(c) for c in xi), r=int(r))

    @classmethod
    def inverse_laplacian(cls, eta: float) -> "STKSpec":
        return cls(kind="inverse_laplacian", eta=float(eta))

    def transform(self, lam) -> np.ndarray:
        """Evaluate ``s`` elementwise; nonpositive eigenvalues map to 0."""
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        pos = lam > 0
        x = lam[pos]
        if self.kind == "poly":
            acc = np.zeros_like(x)
            for coef in reversed(self.pi):
                acc = x * (acc + coef)
            out[pos] = acc
        elif self.kind == "power":
            out[pos] = x**self.p
        elif self.kind == "truncation":
            out[pos] = x
        elif self.kind == "inverse_laplacian":
            scaled = self.eta * x
            if np.any(scaled >= 1.0):
                raise DomainError(
                    f"eta = {self.eta} reaches the pole: eta * lam >= 1 "
                    f"at lam = {x[scaled >= 1.0].max()}"
                )
            out[pos] = x / (1.0 - scaled)
        elif self.kind == "inverse_poly":
            rho = np.zeros_like(x)
            for coef in reversed(self.xi):
                rho = x * rho + coef
            if np.any(rho <= 0):
                raise DomainError(
                    "reciprocal polynomial is nonpositive at an eigenvalue"
                )
            out[pos] = x**self.r / rho
        return out

    def as_poly(self) -> tuple:
        """Coefficients ``pi`` for the polynomial-side solver."""
        if self.kind == "poly":
            return self.pi
        if self.kind == "power":
            return (0.0,) * (self.p - 1) + (1.0,)
        raise StructuralError(f"{self.kind!r} is not a simple polynomial transform")

    def as_inverse_poly(self) -> tuple[tuple, int]:
        """Coefficients ``(xi, r)`` for the reciprocal-side solver."""
        if self.kind == "inverse_poly":
            return self.xi, self.r
        if self.kind == "inverse_laplacian":
            return (1.0, -self.eta), 1
        raise StructuralError(f"{self.kind!r} has no simple reciprocal form")


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------


@dataclass
class SemiSupProblem:
    """Gram matrix over labeled-first samples plus labels for the first n.

    ``beta`` is the ridge coefficient; when omitted it defaults to
    ``n ** -0.5``.  By default the Gram must be positive semidefinite;
    normalized-adjacency graph kernels are indefinite by construction, so
    callers feeding those set ``indefinite_ok``.
    """

    gram: np.ndarray
    y: np.ndarray
    beta: float | None = None
    indefinite_ok: bool = False
    _lam1: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.gram = np.asarray(self.gram, dtype=float)
        if self.gram.ndim != 2 or self.gram.shape[0] != self.gram.shape[1]:
            raise StructuralError("Gram matrix must be square")
        if not np.allclose(self.gram, self.gram.T, rtol=0.0, atol=_GRAM_SYM_TOL):
            raise StructuralError("Gram matrix must be symmetric within 1e-8")
        if not self.indefinite_ok:
            scale = max(1.0, float(np.abs(self.gram).max(initial=0.0)))
            min_eig = float(np.linalg.eigvalsh(self.gram)[0])
            if min_eig < -_GRAM_SYM_TOL * scale:
                raise StructuralError(
                    f"Gram matrix must be positive semidefinite within 1e-8; "
                    f"smallest eigenvalue {min_eig}"
                )
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or not 1 <= self.y.size <= self.gram.shape[0]:
            raise StructuralError(
                "labels must be a vector with 1 <= n <= sample count"
            )
        if self.beta is None:
            self.beta = float(self.y.size) ** -0.5
        self.beta = float(self.beta)
        if self.beta <= 0:
            raise DomainError(f"ridge coefficient must be positive, got {self.beta}")

    @property
    def total(self) -> int:
        return self.gram.shape[0]

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.total - self.n

    @property
    def gram_nn(self) -> np.ndarray:
        return self.gram[: self.n, : self.n]

    @property
    def cross(self) -> np.ndarray:
        """Kernel values between every sample (rows) and labeled ones (cols)."""
        return self.gram[:, : self.n]

    def top_eigenvalue(self) -> float:
        """Largest eigenvalue of gram/total, by power iteration."""
        if self._lam1 is None:
            ghat = self.gram / self.total
            self._lam1 = power_top_eigenvalue(
                lambda v: ghat @ v, self.total, tol=1e-10, seed=0
            )
        return self._lam1


# ---------------------------------------------------------------------------
# Exact transformed kernels
# ---------------------------------------------------------------------------


def stk_exact(spec: STKSpec, base: Spectrum) -> DualKernel:
    """Assemble the transformed kernel from a full base spectrum."""
    lam = np.clip(base.eigenvalues, 0.0, None)
    if spec.kind == "truncation":
        vals = lam.copy()
        vals[spec.d :] = 0.0
    else:
        vals = spec.transform(lam)
    entries = (base.functions * vals) @ base.functions.T
    entries = 0.5 * (entries + entries.T)
    return DualKernel(
        entries=entries,
        weights=base.weights.copy(),
        side="derived",
        meta={"op": "stk", "kind": spec.kind},
    )


def khat_power(prob: SemiSupProblem, p: int, x_cross=None) -> np.ndarray:
    """Monte-Carlo kernel power via repeated products, never a matrix power.

    Without ``x_cross`` returns the power-kernel Gram on the samples; with a
    kernel row (or stack of rows) ``v_k(x)`` returns the transformed rows.
    """
    if p < 1:
        raise BoundsError(f"kernel power needs p >= 1, got {p}")
    total = prob.total
    if x_cross is None:
        result = prob.gram.copy()
        for _ in range(p - 1):
            result = prob.gram @ result / total
        return result
    rows = np.atleast_2d(np.asarray(x_cross, dtype=float))
    if rows.shape[1] != total:
        raise StructuralError(
            f"kernel rows must have {total} entries, got {rows.shape[1]}"
        )
    out = rows
    for _ in range(p - 1):
        out = out @ prob.gram / total
    return out[0] if np.ndim(x_cross) == 1 else out


# ---------------------------------------------------------------------------
# Ridge regression and the two iterative solvers
# ---------------------------------------------------------------------------


def krr(gram_n: np.ndarray, y, beta: float) -> np.ndarray:
    """Kernel ridge regression coefficients ``(G_n + n*beta*I)^-1 y``."""
    gram_n = np.asarray(gram_n, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if gram_n.shape != (n, n):
        raise StructuralError(f"Gram block must be {n} x {n}, got {gram_n.shape}")
    if beta <= 0:
        raise DomainError(f"ridge coefficient must be positive, got {beta}")
    system = gram_n + n * beta * np.eye(n)
    return scipy.linalg.solve(system, y, assume_a="pos")


@dataclass
class SimplePropResult:
    """Iterative solution for a polynomial transform, with prediction cache."""

    alpha: np.ndarray
    v_cache: np.ndarray
    pi: tuple
    n: int
    iterations: int
    converged: bool
    residual_norm: float
    gamma: float

    def predict(self, kernel_rows) -> np.ndarray:
        """Predict from base-kernel rows ``v_k(x)`` against all samples."""
        rows = np.atleast_2d(np.asarray(kernel_rows, dtype=float))
        if rows.shape[1] != self.v_cache.size:
            raise StructuralError(
                f"kernel rows must have {self.v_cache.size} entries"
            )
        values = rows @ self.v_cache + self.pi[0] * (rows[:, : self.n] @ self.alpha)
        return values[0] if np.ndim(kernel_rows) == 1 else values


def stkr_prop_simple_s(
    prob: SemiSupProblem,
    pi,
    gamma: float | None = None,
    eps: float = 1e-6,
    max_iters: int = 50_000,
) -> SimplePropResult:
    """Matrix-free ridge solve for ``s(lam) = sum_p pi[p-1] lam^p``.

    Richardson iteration on ``(G_{s,n} + n*beta*I) alpha = y`` where each
    application of the transformed Gram uses only products with the base
    Gram.  Returns when the residual drops below ``eps * ||y||``; a
    non-converged result is flagged rather than raised.
    """
    pi = tuple(float(c) for c in pi)
    if not pi:
        raise StructuralError("need at least one polynomial coefficient")
    if any(c < 0 for c in pi):
        raise DomainError("polynomial coefficients must be nonnegative")
    gram = prob.gram
    total = prob.total
    n = prob.n
    beta = prob.beta
    y = prob.y
    cross = prob.cross
    gram_nn = prob.gram_nn
    q = len(pi)
    if gamma is None:
        lam1 = prob.top_eigenvalue()
        s_top = sum(c * lam1**p for p, c in enumerate(pi, start=1))
        gamma = 2.0 / (total * s_top + 2.0 * n * beta)
    if gamma <= 0:
        raise DomainError(f"step size must be positive, got {gamma}")

    alpha = np.zeros(n)
    y_norm = float(np.linalg.norm(y))
    tol = eps * y_norm
    for iteration in range(max_iters + 1):
        alpha_tilde = cross @ alpha / total
        v = np.zeros(total)
        for p in range(q, 1, -1):
            v = gram @ v / total + pi[p - 1] * alpha_tilde
        u = cross.T @ v + pi[0] * (gram_nn @ alpha) + n * beta * alpha
        residual = float(np.linalg.norm(u - y))
        diverged = not math.isfinite(residual) or residual > _DIVERGENCE_LIMIT * max(
            y_norm, 1.0
        )
        if residual < tol or diverged or iteration == max_iters:
            return SimplePropResult(
                alpha=alpha,
                v_cache=v,
                pi=pi,
                n=n,
                iterations=iteration,
                converged=residual < tol,
                residual_norm=residual,
                gamma=gamma,
            )
        alpha = alpha - gamma * (u - y)
    raise AssertionError("unreachable")


@dataclass
class InversePropResult:
    """Iterative solution for a reciprocal-polynomial transform."""

    theta: np.ndarray
    cache: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    gamma: float

    def predict(self, kernel_rows) -> np.ndarray:
        """Predict from base-kernel rows ``v_k(x)`` against all samples."""
        rows = np.atleast_2d(np.asarray(kernel_rows, dtype=float))
        if rows.shape[1] != self.cache.size:
            raise StructuralError(f"kernel rows must have {self.cache.size} entries")
        values = rows @ self.cache
        return values[0] if np.ndim(kernel_rows) == 1 else values


def stkr_prop_inverse(
    prob: SemiSupProblem,
    xi,
    r: int,
    gamma: float | None = None,
    eps: float = 1e-6,
    max_iters: int = 50_000,
) -> InversePropResult:
    """Matrix-free solve when ``1/s(lam) = sum_p xi[p] lam^(p-r)`` is short.

    Finds ``theta`` with ``M theta = [y, 0]`` for
    ``M = total * I_n (G/total)^r + n*beta*Q`` and
    ``Q = sum_p xi[p] (G/total)^p``; predictions use the cached
    ``(G/total)^(r-1) theta``.  The reciprocal polynomial must stay positive
    on ``[0, top eigenvalue]``.
    """
    xi = tuple(float(c) for c in xi)
    if not xi:
        raise StructuralError("need at least one reciprocal coefficient")
    if xi[0] <= 0:
        raise DomainError(f"constant reciprocal term must be positive, got {xi[0]}")
    if r < 1:
        raise BoundsError(f"need r >= 1, got {r}")
    lam1 = prob.top_eigenvalue()
    grid = np.linspace(0.0, max(lam1, 0.0), _RHO_GRID_POINTS)
    rho = np.zeros_like(grid)
    for coef in reversed(xi):
        rho = grid * rho + coef
    if np.any(rho <= 0):
        raise DomainError(
            "reciprocal polynomial must be positive on [0, top eigenvalue]; "
            f"minimum {rho.min()} "
        )
    gram = prob.gram
    total = prob.total
    n = prob.n
    beta = prob.beta
    if gamma is None:
        gamma = 1.0 / (n * lam1**r) if lam1 > 0 else 1.0 / (n * beta * xi[0])
    if gamma <= 0:
        raise DomainError(f"step size must be positive, got {gamma}")

    q = len(xi)
    theta = np.zeros(total)
    y_tilde = np.concatenate([prob.y, np.zeros(prob.m)])
    tol = eps * float(np.linalg.norm(prob.y))
    iterations = 0
    converged = False
    residual = math.inf
    while iterations < max_iters:
        v = np.zeros(total)
        for p in range(q - 1, -1, -1):
            v = gram @ v / total + xi[p] * theta
        powered = theta
        for _ in range(r):
            powered = gram @ powered / total
        u = np.concatenate([total * powered[:n], np.zeros(prob.m)]) + n * beta * v
        a = u - y_tilde
        theta = theta - gamma * a
        iterations += 1
        residual = float(np.linalg.norm(a))
        if residual < tol:
            converged = True
            break
        if not math.isfinite(residual) or residual > _DIVERGENCE_LIMIT * max(
            float(np.linalg.norm(prob.y)), 1.0
        ):
            break
    cache = theta
    for _ in range(r - 1):
        cache = gram @ cache / total
    return InversePropResult(
        theta=theta,
        cache=cache,
        iterations=iterations,
        converged=converged,
        residual_norm=residual,
        gamma=gamma,
    )


# ---------------------------------------------------------------------------
# Graphs: label propagation and the normalized-adjacency kernel
# ---------------------------------------------------------------------------


def _check_adjacency(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise StructuralError("adjacency matrix must be square")
    if not np.allclose(w, w.T, rtol=0.0, atol=1e-10):
        raise StructuralError("adjacency matrix must be symmetric")
    if np.any(w < 0):
        raise StructuralError("adjacency weights must be nonnegative")
    return w


def label_prop(w, y_labeled, eta: float) -> np.ndarray:
    """Diffuse labels over a graph: solve ``(I - eta*S) yhat = [y, 0]``.

    ``S`` is the symmetrically normalized adjacency.  Labeled nodes come
    first.  Zero-degree nodes are excluded from the diffusion (their
    prediction is their own input value) with a warning.
    """
    w = _check_adjacency(w)
    if not 0.0 <= eta < 1.0:
        raise DomainError(f"diffusion strength must be in [0, 1), got {eta}")
    y_labeled = np.asarray(y_labeled, dtype=float)
    n_nodes = w.shape[0]
    if y_labeled.ndim != 1 or not 1 <= y_labeled.size <= n_nodes:
        raise StructuralError("labels must cover between 1 and all nodes")
    degrees = w.sum(axis=1)
    isolated = degrees <= 0
    if np.any(isolated):
        warnings.warn(
            f"{int(isolated.sum())} zero-degree node(s) excluded from diffusion",
            RuntimeWarning,
            stacklevel=2,
        )
    inv_root = np.zeros(n_nodes)
    inv_root[~isolated] = degrees[~isolated] ** -0.5
    s = inv_root[:, np.newaxis] * w * inv_root[np.newaxis, :]
    y_tilde = np.concatenate([y_labeled, np.zeros(n_nodes - y_labeled.size)])
    system = np.eye(n_nodes) - eta * s
    return scipy.linalg.solve(system, y_tilde, assume_a="pos")


def graph_base_kernel(w, visible=None, degree_nodes=None):
    """Normalized-adjacency kernel Gram over the visible nodes.

    ``k(x, x') = count * W(x, x') / sqrt(D(x) D(x'))`` where ``count`` is the
    number of retained visible nodes and degrees are summed over
    ``degree_nodes`` (defaults to the visible set, which gives the
    transductive kernel when everything is visible).  Visible nodes with zero
    degree are dropped with a warning; returns ``(gram, kept_indices)``.
    """
    w = _check_adjacency(w)
    n_nodes = w.shape[0]
    visible = (
        np.arange(n_nodes) if visible is None else np.asarray(visible, dtype=int)
    )
    if visible.size == 0:
        raise StructuralError("need at least one visible node")
    if np.any(visible < 0) or np.any(visible >= n_nodes):
        raise BoundsError("visible indices out of range")
    degree_nodes = (
        visible if degree_nodes is None else np.asarray(degree_nodes, dtype=int)
    )
    degrees = w[np.ix_(visible, degree_nodes)].sum(axis=1)
    alive = degrees > 0
    if not np.all(alive):
        warnings.warn(
            f"dropping {int((~alive).sum())} isolated visible node(s)",
            RuntimeWarning,
            stacklevel=2,
        )
    kept = visible[alive]
    if kept.size == 0:
        raise StructuralError("every visible node is isolated")
    deg_kept = degrees[alive]
    count = kept.size
    gram = count * w[np.ix_(kept, kept)] / np.sqrt(np.outer(deg_kept, deg_kept))
    return gram, kept


def graph_kernel_rows(w, kept, queries, degree_nodes=None) -> np.ndarray:
    """Kernel rows between query nodes and the retained sample nodes.

    Query degrees are summed over ``degree_nodes`` (default: the retained
    samples); queries with zero degree get all-zero rows.
    """
    w = _check_adjacency(w)
    kept = np.asarray(kept, dtype=int)
    queries = np.asarray(queries, dtype=int)
    degree_nodes = kept if degree_nodes is None else np.asarray(degree_nodes, int)
    deg_kept = w[np.ix_(kept, degree_nodes)].sum(axis=1)
    if np.any(deg_kept <= 0):
        raise StructuralError("retained sample nodes must have positive degree")
    deg_q = w[np.ix_(queries, degree_nodes)].sum(axis=1)
    rows = kept.size * w[np.ix_(queries, kept)]
    scale = np.zeros(queries.size)
    live = deg_q > 0
    scale[live] = deg_q[live] ** -0.5
    return rows * scale[:, np.newaxis] / np.sqrt(deg_kept)[np.newaxis, :]


# ---------------------------------------------------------------------------
# Edge-list and split files
# ---------------------------------------------------------------------------


def save_edge_list(path, w) -> None:
    """Write the upper triangle of a weighted adjacency as u,v,weight rows."""
    w = _check_adjacency(w)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["u", "v", "weight"])
        rows, cols = np.nonzero(np.triu(w, k=1))
        for u, v in zip(rows, cols):
            writer.writerow([int(u), int(v), jsonio.format_float(float(w[u, v]))])


def load_edge_list(path, n_nodes: int | None = None) -> np.ndarray:
    """Read a u,v,weight CSV into a symmetric adjacency matrix."""
    entries = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["u", "v", "weight"]:
            raise StructuralError("edge list must start with a u,v,weight header")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise StructuralError(f"edge list line {line_no} needs u,v,weight")
            try:
                u, v, weight = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise StructuralError(f"bad edge list line {line_no}: {exc}") from exc
            if u < 0 or v < 0:
                raise StructuralError(f"negative node id on line {line_no}")
            if weight < 0:
                raise StructuralError(f"negative weight on line {line_no}")
            entries.append((u, v, weight))
    size = max((max(u, v) for u, v, _ in entries), default=-1) + 1
    if n_nodes is not None:
        if n_nodes < size:
            raise BoundsError(f"edge list references node {size - 1} >= {n_nodes}")
        size = n_nodes
    w = np.zeros((size, size))
    for u, v, weight in entries:
        w[u, v] = weight
        w[v, u] = weight
    return w


def save_splits(path, splits: dict) -> None:
    """Write train/val/test/other node-index lists as deterministic JSON."""
    _validate_splits(splits)
    payload = {key: [int(i) for i in splits[key]] for key in _SPLIT_KEYS}
    jsonio.dump_path(payload, path)


def load_splits(path) -> dict:
    """Read and validate a train/val/test/other split file."""
    text = Path(path).read_text()
    data = jsonio.loads(text)
    if not isinstance(data, dict):
        raise StructuralError("split file must hold an object")
    _validate_splits(data)
    return {key: [int(i) for i in data[key]] for key in _SPLIT_KEYS}


def _validate_splits(splits: dict) -> None:
    missing = [key for key in _SPLIT_KEYS if key not in splits]
    if missing:
        raise StructuralError(f"split file missing keys: {missing}")
    extra = [key for key in splits if key not in _SPLIT_KEYS]
    if extra:
        raise StructuralError(f"split file has unknown keys: {extra}")
    seen: set[int] = set()
    for key in _SPLIT_KEYS:
        values = splits[key]
        if not isinstance(values, (list, tuple)):
            raise StructuralError(f"split {key!r} must be a list")
        for value in values:
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise StructuralError(f"split {key!r} holds a non-integer {value!r}")
            if int(value) in seen:
                raise StructuralError(f"node {value} appears in two splits")
            seen.add(int(value))
