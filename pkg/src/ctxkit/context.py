"""Finite contexts: joint input/view distributions and their dual kernels.

A context is a joint probability table P over inputs x (rows) and views a
(columns). Its row conditionals P(a|x) define the expectation operator

    (T g)(x) = sum_a P(a|x) g(a),

whose adjoint under the marginal-weighted inner products is
(T* f)(a) = sum_x P(x|a) f(x). The two self-adjoint compositions have kernels

    k_X(x, x') = sum_a P(a|x) P(a|x') / P_A(a)      (input-side dual kernel)
    k_A(a, a') = sum_x P(x|a) P(x|a') / P_X(x)      (view-side pair kernel)

with identical eigenvalues in [0, 1]; the constant function is always an
eigenfunction with eigenvalue 1. Builders cover classification labels,
k-nearest-neighbor graphs, RBF affinities, weighted graphs, and coordinate
masking over sign vectors. Masking joints with many reachable views are stored
sparse (scipy CSR); every operation here accepts both layouts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BoundsError, DomainError, StructuralError
from .jsonio import format_float, loads
from .linalg import Spectrum, WeightedMatrix, fix_signs, weighted_sym_eig

__all__ = [
    "Context",
    "DualKernel",
    "from_joint",
    "make_context",
    "dual_kernel",
    "expectation_apply",
    "adjoint_apply",
    "context_spectrum",
    "center_kernel",
    "standardize_kernel",
    "is_standardized",
    "teacher_kernel",
    "context_to_json",
    "context_from_json",
]

# joints with at most this many cells are stored dense
_DENSE_CELL_LIMIT = 1 << 20
# refuse to densify (serialization, view-side kernels) beyond this many cells
_DENSIFY_LIMIT = 1 << 24
_MAX_MASKING_DIM = 12


@dataclass
class DualKernel(WeightedMatrix):
    """A kernel matrix on context samples, weighted by the matching marginal.

    ``side`` records which marginal the weights came from ("x" for inputs,
    "a" for views, "derived" for transformed kernels); ``meta`` carries
    provenance flags such as ``standardized`` or ``degenerate``.
    """

    side: str = "x"
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Context:
    """An immutable joint distribution over inputs (rows) and views (columns)."""

    joint: Any  # ndarray or scipy.sparse.csr_matrix, nonnegative, sums to 1
    labels_x: tuple
    labels_a: tuple
    px: np.ndarray
    pa: np.ndarray
    dropped_x: tuple = ()
    dropped_a: tuple = ()

    @property
    def n(self) -> int:
        return self.joint.shape[0]

    @property
    def m(self) -> int:
        return self.joint.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.joint)

    def dense_joint(self) -> np.ndarray:
        if self.is_sparse:
            if self.n * self.m > _DENSIFY_LIMIT:
                raise BoundsError(
                    f"joint with {self.n} x {self.m} cells is too large to densify"
                )
            return np.asarray(self.joint.todense())
        return self.joint

    def conditional_x(self):
        """Row conditionals P(a|x); same layout as the joint."""
        if self.is_sparse:
            return sp.diags(1.0 / self.px) @ self.joint
        return self.joint / self.px[:, np.newaxis]

    def conditional_a(self):
        """Column conditionals P(x|a); same layout as the joint."""
        if self.is_sparse:
            return self.joint @ sp.diags(1.0 / self.pa)
        return self.joint / self.pa[np.newaxis, :]


def _marginals(joint) -> tuple[np.ndarray, np.ndarray]:
    if sp.issparse(joint):
        px = np.asarray(joint.sum(axis=1)).ravel()
        pa = np.asarray(joint.sum(axis=0)).ravel()
    else:
        px = joint.sum(axis=1)
        pa = joint.sum(axis=0)
    return px, pa


def _assemble(joint, labels_x, labels_a, dropped_x=(), dropped_a=()) -> Context:
    px, pa = _marginals(joint)
    if not sp.issparse(joint):
        joint = np.ascontiguousarray(joint, dtype=float)
        joint.setflags(write=False)
    px.setflags(write=False)
    pa.setflags(write=False)
    return Context(
        joint=joint,
        labels_x=tuple(labels_x),
        labels_a=tuple(labels_a),
        px=px,
        pa=pa,
        dropped_x=tuple(dropped_x),
        dropped_a=tuple(dropped_a),
    )


def from_joint(joint, labels_x: Sequence | None = None, labels_a: Sequence | None = None) -> Context:
    """Build a context from a nonnegative table, renormalizing its mass to 1.

    Zero-mass rows and columns are dropped; the dropped labels are recorded on
    the returned context. An all-zero or negative table is rejected.
    """
    sparse = sp.issparse(joint)
    if sparse:
        joint = joint.tocsr().astype(float)
    else:
        joint = np.asarray(joint, dtype=float)
        if joint.ndim != 2:
            raise StructuralError(f"joint must be 2-D, got ndim={joint.ndim}")
    n, m = joint.shape
    min_entry = joint.data.min() if sparse and joint.nnz else (joint.min() if not sparse and joint.size else 0.0)
    if float(min_entry) < 0.0:
        raise StructuralError(f"joint entries must be nonnegative, min = {float(min_entry):.3e}")
    total = float(joint.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise StructuralError("joint must have positive total mass")
    joint = joint / total
    labels_x = list(labels_x) if labels_x is not None else list(range(n))
    labels_a = list(labels_a) if labels_a is not None else list(range(m))
    if len(labels_x) != n or len(labels_a) != m:
        raise StructuralError("label lengths must match the joint's shape")
    px, pa = _marginals(joint)
    keep_x = px > 0.0
    keep_a = pa > 0.0
    dropped_x = [lab for lab, k in zip(labels_x, keep_x) if not k]
    dropped_a = [lab for lab, k in zip(labels_a, keep_a) if not k]
    if dropped_x or dropped_a:
        joint = joint[keep_x][:, keep_a]
        labels_x = [lab for lab, k in zip(labels_x, keep_x) if k]
        labels_a = [lab for lab, k in zip(labels_a, keep_a) if k]
    if sparse and joint.shape[0] * joint.shape[1] <= _DENSE_CELL_LIMIT:
        joint = np.asarray(joint.todense())
        sparse = False
    return _assemble(joint, labels_x, labels_a, dropped_x, dropped_a)


# ---------------------------------------------------------------------------
# operators and kernels
# ---------------------------------------------------------------------------


def expectation_apply(ctx: Context, g) -> np.ndarray:
    """Apply the expectation operator: (T g)(x) = sum_a P(a|x) g(a)."""
    g = np.asarray(g, dtype=float)
    if g.shape[0] != ctx.m:
        raise StructuralError(f"g has length {g.shape[0]}, expected {ctx.m}")
    if ctx.is_sparse:
        return np.asarray(ctx.joint @ g).ravel() / ctx.px
    return (ctx.joint @ g) / ctx.px


def adjoint_apply(ctx: Context, f) -> np.ndarray:
    """Apply the adjoint operator: (T* f)(a) = sum_x P(x|a) f(x)."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != ctx.n:
        raise StructuralError(f"f has length {f.shape[0]}, expected {ctx.n}")
    if ctx.is_sparse:
        return np.asarray(ctx.joint.T @ f).ravel() / ctx.pa
    return (ctx.joint.T @ f) / ctx.pa


def dual_kernel(ctx: Context, side: str = "x") -> DualKernel:
    """Dense dual kernel on the requested side, weighted by that marginal."""
    if side == "x":
        cond = ctx.conditional_x()
        if ctx.is_sparse:
            entries = np.asarray((cond.multiply(1.0 / ctx.pa[np.newaxis, :]) @ cond.T).todense())
        else:
            entries = (cond / ctx.pa[np.newaxis, :]) @ cond.T
        weights = ctx.px
    elif side == "a":
        if ctx.m * ctx.m > _DENSIFY_LIMIT:
            raise BoundsError(f"view-side kernel with {ctx.m}^2 cells is too large")
        cond = ctx.conditional_a()
        if ctx.is_sparse:
            entries = np.asarray((cond.T.multiply(1.0 / ctx.px[np.newaxis, :]) @ cond).todense())
        else:
            entries = cond.T @ (cond / ctx.px[:, np.newaxis])
        weights = ctx.pa
    else:
        raise StructuralError(f"side must be 'x' or 'a', got {side!r}")
    entries = 0.5 * (entries + entries.T)
    return DualKernel(entries=entries, weights=weights, side=side)


def context_spectrum(ctx: Context, k: int | None = None, side: str = "x") -> Spectrum:
    """Eigen-decompose the dual kernel, pinning the constant mode at index 0.

    The constant function is always an eigenfunction with eigenvalue 1; when
    the top eigenvalue is degenerate the solver returns an arbitrary basis of
    that eigenspace, so the basis is rotated to put the exact constant first
    and ``has_constant_top`` is set. If the constant does not lie in the top
    eigenvalue group (possible for raw kernels fed through this routine), the
    spectrum is returned unrotated with the flag off.
    """
    kernel = dual_kernel(ctx, side=side)
    spec = weighted_sym_eig(kernel, k if k is not None else kernel.n)
    return _pin_constant_mode(spec)


def _pin_constant_mode(spec: Spectrum, tie_tol: float = 1e-9, cos_tol: float = 1e-6) -> Spectrum:
    w = spec.weights
    n = spec.n
    if spec.k == 0:
        return spec
    top = spec.eigenvalues[0]
    group = np.where(np.abs(spec.eigenvalues - top) <= tie_tol)[0]
    cols = spec.functions[:, group]
    # weighted coefficients of the constant in the top eigenspace
    coeffs = cols.T @ (w * np.ones(n))
    proj_norm_sq = float(coeffs @ coeffs)  # ||1||_w = 1
    if proj_norm_sq < 1.0 - cos_tol:
        return Spectrum(
            eigenvalues=spec.eigenvalues,
            functions=spec.functions,
            weights=w,
            has_constant_top=False,
        )
    g = group.size
    new_cols = np.empty_like(cols)
    new_cols[:, 0] = 1.0
    if g > 1:
        # complete the tie group with a weighted-orthonormal basis of the
        # remaining directions, all orthogonal to the constant
        residual = cols - np.outer(np.ones(n), np.ones(n) @ (w[:, np.newaxis] * cols))
        scaled = np.sqrt(w)[:, np.newaxis] * residual
        u, svals, _ = np.linalg.svd(scaled, full_matrices=False)
        basis = u[:, : g - 1] / np.sqrt(w)[:, np.newaxis]
        new_cols[:, 1:] = fix_signs(basis)
    functions = spec.functions.copy()
    functions[:, group] = new_cols
    return Spectrum(
        eigenvalues=spec.eigenvalues,
        functions=functions,
        weights=w,
        has_constant_top=True,
    )


def center_kernel(kernel: WeightedMatrix) -> DualKernel:
    """Doubly center a kernel under its weights.

    Subtracts weighted row means and column means and adds back the weighted
    grand mean, so the centered operator annihilates the constant function.
    """
    k = kernel.entries
    w = kernel.weights
    row = k @ w
    grand = float(w @ row)
    centered = k - row[:, np.newaxis] - row[np.newaxis, :] + grand
    centered = 0.5 * (centered + centered.T)
    side = getattr(kernel, "side", "derived")
    return DualKernel(entries=centered, weights=w, side=side, meta={"centered": True})


def standardize_kernel(kernel: WeightedMatrix) -> DualKernel:
    """Standardize a kernel: center, rescale to unit top eigenvalue, add 1.

    The result has the constant function as an eigenfunction with eigenvalue
    exactly 1 and all other operator eigenvalues in [0, 1] (for PSD input).
    A kernel that centers to zero has no nonconstant signal; the rank-1
    constant kernel is returned with ``meta["degenerate"] = True``.
    """
    centered = center_kernel(kernel)
    w = kernel.weights
    n = kernel.n
    scale = max(1.0, float(np.abs(kernel.entries).max())) if kernel.entries.size else 1.0
    top = weighted_sym_eig(centered, 1).eigenvalues[0]
    side = getattr(kernel, "side", "derived")
    if top <= 1e-12 * scale:
        return DualKernel(
            entries=np.ones((n, n)),
            weights=w,
            side=side,
            meta={"standardized": True, "degenerate": True, "scale": 0.0},
        )
    entries = centered.entries / top + 1.0
    return DualKernel(
        entries=entries,
        weights=w,
        side=side,
        meta={"standardized": True, "degenerate": False, "scale": float(top)},
    )


def is_standardized(kernel: WeightedMatrix, tol: float = 1e-8) -> bool:
    """Check the two standardization marks: K w = 1 and top eigenvalue <= 1."""
    w = kernel.weights
    if not np.allclose(kernel.entries @ w, 1.0, atol=max(tol, 1e-8)):
        return False
    top = weighted_sym_eig(kernel, 1).eigenvalues[0]
    return top <= 1.0 + max(tol, 1e-8)


def teacher_kernel(encoder_values, weights, whiten: bool = False) -> DualKernel:
    """Linear kernel of centered encoder features, optionally whitened.

    Whitening rescales the centered features by the inverse square root of
    their weighted covariance (dropping null directions), which makes every
    nonzero eigenvalue of the resulting weighted kernel operator equal to 1.
    ``meta["rank"]`` records the retained feature rank.
    """
    phi = np.asarray(encoder_values, dtype=float)
    if phi.ndim != 2:
        raise StructuralError("encoder_values must be 2-D")
    n = phi.shape[0]
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise StructuralError("weights must match the number of encoder rows")
    centered = phi - (w @ phi)[np.newaxis, :]
    if whiten:
        cov = centered.T @ (w[:, np.newaxis] * centered)
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
        keep = evals > 1e-12 * max(1.0, float(evals.max(initial=0.0)))
        rank = int(np.count_nonzero(keep))
        centered = centered @ evecs[:, keep] / np.sqrt(evals[keep])[np.newaxis, :]
    else:
        rank = int(np.linalg.matrix_rank(centered)) if centered.size else 0
    entries = centered @ centered.T
    entries = 0.5 * (entries + entries.T)
    return DualKernel(
        entries=entries,
        weights=w,
        side="x",
        meta={"teacher": True, "whitened": bool(whiten), "rank": rank},
    )


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def make_context(kind: str, **params) -> Context:
    """Build a named context.

    Kinds:
      classification(labels, px=None)       -- deterministic label views
      knn(data, k)                          -- uniform over k nearest neighbors
      rbf(data, gamma)                      -- Gaussian affinity views
      graph(adjacency)                      -- random-walk views of a graph
      masking(d_x, alpha, style)            -- coordinate masking of sign vectors
    """
    builders = {
        "classification": _make_classification,
        "knn": _make_knn,
        "rbf": _make_rbf,
        "graph": _make_graph,
        "masking": _make_masking,
    }
    if kind not in builders:
        raise StructuralError(f"unknown context kind {kind!r}; choose from {sorted(builders)}")
    return builders[kind](**params)


def _default_px(n: int, px) -> np.ndarray:
    if px is None:
        return np.full(n, 1.0 / n)
    px = np.asarray(px, dtype=float)
    if px.shape != (n,) or px.min() < 0:
        raise StructuralError("px must be a nonnegative vector matching the sample count")
    total = px.sum()
    if total <= 0:
        raise StructuralError("px must have positive mass")
    return px / total


def _make_classification(labels: Sequence, px=None) -> Context:
    labels = list(labels)
    n = len(labels)
    if n == 0:
        raise StructuralError("classification context needs at least one sample")
    classes = sorted(set(labels), key=lambda c: (str(type(c)), str(c)))
    col = {c: j for j, c in enumerate(classes)}
    px = _default_px(n, px)
    joint = np.zeros((n, len(classes)))
    for i, lab in enumerate(labels):
        joint[i, col[lab]] = px[i]
    return from_joint(joint, labels_x=list(range(n)), labels_a=classes)


def _make_knn(data, k: int, px=None) -> Context:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise StructuralError("data must be a 2-D array")
    n = data.shape[0]
    if not 1 <= k <= n - 1:
        raise BoundsError(f"k must be in [1, {n - 1}], got {k}")
    px = _default_px(n, px)
    sq = np.sum(data**2, axis=1)
    dist = sq[:, np.newaxis] + sq[np.newaxis, :] - 2.0 * (data @ data.T)
    np.fill_diagonal(dist, np.inf)  # a point is not its own neighbor
    joint = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        # squared-Euclidean distance, ties broken toward the smaller index
        order = np.lexsort((idx, dist[i]))[:k]
        joint[i, order] = px[i] / k
    return from_joint(joint, labels_x=list(range(n)), labels_a=list(range(n)))


def _make_rbf(data, gamma: float, px=None) -> Context:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise StructuralError("data must be a 2-D array")
    if gamma <= 0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    n = data.shape[0]
    px = _default_px(n, px)
    sq = np.sum(data**2, axis=1)
    dist = np.maximum(sq[:, np.newaxis] + sq[np.newaxis, :] - 2.0 * (data @ data.T), 0.0)
    aff = np.exp(-gamma * dist)
    cond = aff / aff.sum(axis=1, keepdims=True)
    return from_joint(cond * px[:, np.newaxis], labels_x=list(range(n)), labels_a=list(range(n)))


def _make_graph(adjacency) -> Context:
    w = np.asarray(adjacency, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise StructuralError("adjacency must be square")
    if np.max(np.abs(w - w.T)) > 1e-10:
        raise StructuralError("adjacency must be symmetric")
    if w.min() < 0:
        raise StructuralError("adjacency must be nonnegative")
    # joint mass of (u, v) is edge weight over total weight; marginals are the
    # degree distribution on both sides, so P_A = P_X exactly
    return from_joint(w, labels_x=list(range(w.shape[0])), labels_a=list(range(w.shape[0])))


def _sign_labels(vectors: np.ndarray) -> list[str]:
    chars = {-1: "-", 0: "0", 1: "+"}
    return ["".join(chars[int(v)] for v in row) for row in vectors]


def _ternary_labels(d: int, indices: np.ndarray) -> list[str]:
    chars = "-0+"
    out = []
    for idx in indices:
        digits = []
        rest = int(idx)
        for _ in range(d):
            digits.append(chars[rest % 3])
            rest //= 3
        out.append("".join(digits))
    return out


def _make_masking(d_x: int, alpha: float, style: str = "random") -> Context:
    if not isinstance(d_x, (int, np.integer)) or d_x < 1:
        raise BoundsError(f"d_x must be a positive integer, got {d_x!r}")
    if d_x > _MAX_MASKING_DIM:
        raise BoundsError(
            f"d_x = {d_x} exceeds the exact-enumeration limit {_MAX_MASKING_DIM}"
        )
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha!r}")
    if style not in ("random", "block", "block_flip"):
        raise StructuralError(f"style must be random|block|block_flip, got {style!r}")
    d = int(d_x)
    n = 1 << d
    signs = np.array(list(itertools.product((-1, 1), repeat=d)), dtype=np.int64)
    pow3 = 3 ** np.arange(d, dtype=np.int64)
    base_digits = (signs + 1).astype(np.int64)  # -1 -> 0, +1 -> 2; masked digit is 1
    px_val = 1.0 / n

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    row_idx = np.arange(n, dtype=np.int64)

    if style == "random":
        for bits in range(1 << d):
            mask = np.array([(bits >> i) & 1 for i in range(d)], dtype=bool)
            r = int(mask.sum())
            prob = px_val * (alpha**r) * ((1.0 - alpha) ** (d - r))
            col = base_digits[:, ~mask] @ pow3[~mask] + int(pow3[mask].sum())
            rows.append(row_idx)
            cols.append(col)
            data.append(np.full(n, prob))
    else:
        r = int(np.ceil(alpha * d))
        positions = d - r + 1  # all contiguous length-r windows
        if style == "block":
            for p in range(positions):
                mask = np.zeros(d, dtype=bool)
                mask[p : p + r] = True
                col = base_digits[:, ~mask] @ pow3[~mask] + int(pow3[mask].sum())
                rows.append(row_idx)
                cols.append(col)
                data.append(np.full(n, px_val / positions))
        else:  # block_flip: flip each unmasked coordinate with probability alpha/2
            flip_p = alpha / 2.0
            free = d - r
            for p in range(positions):
                mask = np.zeros(d, dtype=bool)
                mask[p : p + r] = True
                keep_pow = pow3[~mask]
                masked_offset = int(pow3[mask].sum())
                kept_digits = base_digits[:, ~mask]
                for fbits in range(1 << free):
                    fmask = np.array([(fbits >> i) & 1 for i in range(free)], dtype=bool)
                    nf = int(fmask.sum())
                    prob = px_val / positions * (flip_p**nf) * ((1.0 - flip_p) ** (free - nf))
                    digits = kept_digits.copy()
                    digits[:, fmask] = 2 - digits[:, fmask]  # flip the sign digit
                    col = digits @ keep_pow + masked_offset
                    rows.append(row_idx)
                    cols.append(col)
                    data.append(np.full(n, prob))

    joint = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, 3**d),
    ).tocsr()
    col_mass = np.asarray(joint.sum(axis=0)).ravel()
    keep = np.where(col_mass > 0.0)[0]
    joint = joint[:, keep]
    labels_a = _ternary_labels(d, keep)
    return from_joint(joint, labels_x=_sign_labels(signs), labels_a=labels_a)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def context_to_json(ctx: Context) -> str:
    """Serialize a context with round-trip-exact floating-point encoding.

    Layout: {"joint": row-major doubles, "labels_a": [...], "labels_x": [...]}.
    """
    joint = ctx.dense_joint()
    parts = ['{"joint": [']
    parts.append(", ".join(format_float(v) for v in joint.ravel(order="C")))
    parts.append('], "labels_a": ')
    parts.append(_labels_json(ctx.labels_a))
    parts.append(', "labels_x": ')
    parts.append(_labels_json(ctx.labels_x))
    parts.append("}")
    return "".join(parts)


def _labels_json(labels: tuple) -> str:
    import json

    return json.dumps([lab if isinstance(lab, (str, int, bool)) else str(lab) for lab in labels])


def context_from_json(text: str) -> Context:
    """Inverse of :func:`context_to_json`; entries are kept bit-for-bit.

    The stored joint was normalized before writing, so no renormalization is
    applied (it would perturb the parsed doubles); the total is only validated.
    """
    doc = loads(text)
    if not isinstance(doc, dict) or not {"joint", "labels_x", "labels_a"} <= set(doc):
        raise StructuralError("context JSON must contain joint, labels_x, labels_a")
    labels_x = list(doc["labels_x"])
    labels_a = list(doc["labels_a"])
    flat = np.asarray(doc["joint"], dtype=float)
    n, m = len(labels_x), len(labels_a)
    if flat.size != n * m:
        raise StructuralError(f"joint has {flat.size} entries, expected {n}*{m}")
    joint = flat.reshape(n, m)
    if joint.size == 0:
        raise StructuralError("joint must be nonempty")
    if joint.min() < 0.0:
        raise StructuralError("joint entries must be nonnegative")
    total = float(joint.sum())
    if abs(total - 1.0) > 1e-9:
        raise StructuralError(f"joint mass must be 1 within 1e-9, got {total!r}")
    px, pa = _marginals(joint)
    if px.min() <= 0.0 or pa.min() <= 0.0:
        raise StructuralError("serialized contexts must have strictly positive marginals")
    return _assemble(joint, labels_x, labels_a)
