"""Shared oracle utilities for the test suite.

These deliberately re-derive quantities with independent code paths
(numpy-only, direct loops, closed forms) so that library routines are checked
against something other than themselves.
"""

from __future__ import annotations

import numpy as np


def random_probability_vector(rng: np.random.Generator, n: int, min_mass: float = 0.05) -> np.ndarray:
    """A strictly positive probability vector with entries bounded away from 0."""
    w = rng.uniform(min_mass, 1.0, size=n)
    return w / w.sum()


def random_psd_kernel(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    """A random symmetric PSD matrix (Gram of random vectors)."""
    rank = rank if rank is not None else n
    g = rng.standard_normal((n, rank))
    k = g @ g.T
    return 0.5 * (k + k.T)


def oracle_weighted_eig(kernel: np.ndarray, weights: np.ndarray):
    """Independent eigendecomposition of K @ diag(w) via numpy.

    Returns (eigenvalues descending, eigenfunctions weighted-orthonormal).
    """
    sqrt_w = np.sqrt(weights)
    sym = np.outer(sqrt_w, sqrt_w) * kernel
    evals, evecs = np.linalg.eigh(0.5 * (sym + sym.T))
    order = np.argsort(evals)[::-1]
    funcs = evecs[:, order] / sqrt_w[:, np.newaxis]
    return evals[order], funcs


def oracle_generalized_eig(b: np.ndarray, c: np.ndarray):
    """Independent route for B v = lambda C v: whiten by C^{-1/2} and eigh."""
    c_evals, c_evecs = np.linalg.eigh(0.5 * (c + c.T))
    c_inv_half = c_evecs @ np.diag(1.0 / np.sqrt(c_evals)) @ c_evecs.T
    m = c_inv_half @ (0.5 * (b + b.T)) @ c_inv_half
    evals, u = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(evals)[::-1]
    return evals[order], c_inv_half @ u[:, order]


def weighted_gram(columns: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Matrix of weighted inner products between columns."""
    return columns.T @ (weights[:, np.newaxis] * columns)


def tie_groups(values: np.ndarray, tol: float = 1e-9):
    """Partition indices of a descending value sequence into tie groups."""
    groups, current = [], [0]
    for i in range(1, len(values)):
        if abs(values[i] - values[current[-1]]) <= tol:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    return groups


def oracle_dual_kernel_x(joint: np.ndarray) -> np.ndarray:
    """Triple-loop dual kernel on the input side: sum_a P(a|x)P(a|x')/P_A(a)."""
    px = joint.sum(axis=1)
    pa = joint.sum(axis=0)
    n, m = joint.shape
    cond = joint / px[:, np.newaxis]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                acc += cond[i, a] * cond[j, a] / pa[a]
            out[i, j] = acc
    return out


def oracle_dual_kernel_a(joint: np.ndarray) -> np.ndarray:
    """Triple-loop positive-pair kernel: sum_x P(x|a)P(x|a')/P_X(x)."""
    px = joint.sum(axis=1)
    pa = joint.sum(axis=0)
    n, m = joint.shape
    cond = joint / pa[np.newaxis, :]
    out = np.zeros((m, m))
    for a in range(m):
        for b in range(m):
            acc = 0.0
            for i in range(n):
                acc += cond[i, a] * cond[i, b] / px[i]
            out[a, b] = acc
    return out


def random_joint(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """A strictly positive joint probability table."""
    j = rng.uniform(0.05, 1.0, size=(n, m))
    return j / j.sum()


def weighted_orthonormal_with_constant(rng: np.random.Generator, n: int, k: int, weights: np.ndarray) -> np.ndarray:
    """k columns orthonormal in the weighted inner product, first column all-ones."""
    cols = [np.ones(n)]
    raw = rng.standard_normal((n, k - 1))
    for j in range(k - 1):
        v = raw[:, j].copy()
        for u in cols:
            v -= np.sum(weights * v * u) * u
        v /= np.sqrt(np.sum(weights * v * v))
        cols.append(v)
    return np.column_stack(cols)


def synthetic_spectrum(rng: np.random.Generator, n: int, nonconstant_eigenvalues):
    """A Spectrum with prescribed nonconstant eigenvalues over uniform weights."""
    from ctxkit.linalg import Spectrum

    lams = np.asarray(nonconstant_eigenvalues, dtype=float)
    w = np.full(n, 1.0 / n)
    funcs = weighted_orthonormal_with_constant(rng, n, lams.shape[0] + 1, w)
    return Spectrum(
        eigenvalues=np.concatenate([[1.0], lams]),
        functions=funcs,
        weights=w,
        has_constant_top=True,
    )


def dense_stk_gram(gram: np.ndarray, transform) -> np.ndarray:
    """Dense spectral-assembly oracle for transformed-kernel Grams.

    The transform is applied to the raw spectrum (no clipping): iterative
    solvers run matrix polynomials of the empirical Gram, so their implicit
    transform acts on negative eigenvalues too (graph kernels have them).
    """
    total = gram.shape[0]
    lam, u = np.linalg.eigh(gram / total)
    return total * (u * transform(lam)) @ u.T


def motivation_graph() -> np.ndarray:
    """Six-node graph whose first three nodes are pairwise unconnected."""
    w = np.zeros((6, 6))
    for u, v in [(0, 3), (1, 3), (4, 3), (1, 5), (4, 5), (5, 2)]:
        w[u, v] = w[v, u] = 1.0
    return w


def random_connected_graph(rng: np.random.Generator, n: int, extra: float = 0.1, weighted: bool = False) -> np.ndarray:
    """Random spanning path plus extra edges; optional random edge weights."""
    w = np.zeros((n, n))
    order = rng.permutation(n)
    w[order[:-1], order[1:]] = 1.0
    extras = np.triu(rng.random((n, n)) < extra, 1)
    w[extras] = 1.0
    w = np.maximum(w, w.T)
    if weighted:
        scale = rng.uniform(0.5, 2.0, size=(n, n))
        w *= 0.5 * (scale + scale.T)
    return w


def sbm_graph(rng: np.random.Generator, sizes, p_in: float, p_out: float):
    """Stochastic block model; returns (adjacency, block index per node)."""
    blocks = np.repeat(np.arange(len(sizes)), sizes)
    probs = np.where(blocks[:, np.newaxis] == blocks[np.newaxis, :], p_in, p_out)
    upper = np.triu(rng.random(probs.shape) < probs, 1).astype(float)
    return upper + upper.T, blocks
