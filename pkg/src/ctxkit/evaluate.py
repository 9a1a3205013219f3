"""Encoder and context evaluation against the dual-kernel spectrum.

An encoder is a matrix of feature columns on the context's input samples.
Write Phi~ for the weighted-centered columns. Two matrices drive every metric
here:

    C = Cov_w[Phi]            (weighted feature covariance)
    B = Cov_{P_A}[T* Phi]     (covariance of the adjoint-projected features)

B equals Phi~^T W K W Phi~ for the input-side dual kernel K, so C - B >= 0 and
the generalized eigenvalues of (B, C) lie in [0, 1]. The metrics:

* ratio trace  Tr(C^{-1} B), invariant to invertible column maps, maximized by
  the top eigenfunctions where it equals the sum of their eigenvalues;
* post-hoc recovery: solve B v = lambda C v to re-express an encoder in
  spectral coordinates and estimate the eigenvalues it spans;
* compatibility of a single target with the context, in [0, 1];
* worst/approximate prediction-error characterizations for encoders spanning
  (or approximately spanning) the top eigenspace;
* the tau model-selection curve over embedding dimensions, with an abstention
  flag when the context carries no usable association;
* Fisher discriminant 2 Tr[(C - B)^{-1} B] and the kernelized single-encoder
  objective Tr(C) - Tr(B).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .context import Context, adjoint_apply, context_spectrum
from .errors import BoundsError, DomainError, StructuralError
from .linalg import Spectrum, generalized_eig, linear_probe

__all__ = [
    "Encoder",
    "MetricConfig",
    "PostHocResult",
    "TauResult",
    "learn_contexture",
    "post_hoc_recover",
    "compatibility",
    "compatibility_direct",
    "worst_case_error",
    "ratio_trace",
    "trace_gap_upper",
    "approx_error_bound",
    "tau_metric",
    "fisher_discriminant",
    "kise_objective",
]

INF = float("inf")


@dataclass
class Encoder:
    """Feature columns evaluated on weighted samples."""

    values: np.ndarray
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise StructuralError("encoder values must be 2-D")
        if self.values.shape[1] < 1:
            raise StructuralError("encoder needs at least one column")
        if not np.all(np.isfinite(self.values)):
            raise StructuralError("encoder values must be finite")
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.values.shape[0],):
            raise StructuralError("weights must match the number of encoder rows")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def centered(self) -> np.ndarray:
        return self.values - (self.weights @ self.values)[np.newaxis, :]


@dataclass
class MetricConfig:
    """Parameters of the tau model-selection metric."""

    beta: float = 1.0
    d0: int = 512

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise DomainError(f"beta must be positive, got {self.beta!r}")
        if self.d0 < 1:
            raise BoundsError(f"d0 must be >= 1, got {self.d0!r}")


# ---------------------------------------------------------------------------
# spectra helpers
# ---------------------------------------------------------------------------


def _constant_index(spectrum: Spectrum, cos_tol: float = 1e-6) -> int:
    """Index of the constant eigenfunction; -1 if absent."""
    if spectrum.has_constant_top:
        return 0
    w = spectrum.weights
    for j in range(spectrum.k):
        col = spectrum.functions[:, j]
        norm = float(np.sqrt(np.sum(w * col * col)))
        if norm == 0.0:
            continue
        cos = abs(float(np.sum(w * col))) / norm
        if cos > 1.0 - cos_tol:
            return j
    return -1


def nonconstant_eigenvalues(spectrum: Spectrum) -> np.ndarray:
    """Eigenvalues with the constant mode removed (descending)."""
    idx = _constant_index(spectrum)
    if idx < 0:
        raise StructuralError("spectrum has no recognizable constant mode")
    return np.delete(spectrum.eigenvalues, idx)


def _align(enc: Encoder, ctx: Context) -> None:
    if enc.n != ctx.n:
        raise StructuralError(f"encoder has {enc.n} rows but context has {ctx.n} inputs")
    if not np.allclose(enc.weights, ctx.px, rtol=0.0, atol=1e-12):
        raise StructuralError("encoder weights do not match the context's input marginal")


def _cov_matrices(enc: Encoder, ctx: Context) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(centered values, C, B) for an encoder on its context."""
    _align(enc, ctx)
    phi = enc.centered()
    w = ctx.px
    c = phi.T @ (w[:, np.newaxis] * phi)
    projected = np.column_stack([adjoint_apply(ctx, phi[:, j]) for j in range(phi.shape[1])])
    b = projected.T @ (ctx.pa[:, np.newaxis] * projected)
    return phi, 0.5 * (c + c.T), 0.5 * (b + b.T)


# ---------------------------------------------------------------------------
# contexture extraction and recovery
# ---------------------------------------------------------------------------


def learn_contexture(spectrum: Spectrum, d: int) -> Encoder:
    """Top-d nonconstant eigenfunctions as an encoder."""
    if d < 1:
        raise BoundsError(f"d must be >= 1, got {d}")
    const = _constant_index(spectrum)
    if const < 0:
        raise StructuralError("spectrum has no recognizable constant mode")
    order = [j for j in range(spectrum.k) if j != const]
    if len(order) < d:
        raise BoundsError(f"spectrum has only {len(order)} nonconstant modes, need {d}")
    cols = order[:d]
    return Encoder(
        values=spectrum.functions[:, cols],
        weights=spectrum.weights,
        metadata={"source": "learn_contexture", "d": d, "eigenvalues": [float(spectrum.eigenvalues[j]) for j in cols]},
    )


@dataclass
class PostHocResult:
    """Spectral re-expression of an encoder on a context."""

    eigenvalues: np.ndarray
    q: np.ndarray
    encoder: Encoder
    kept_indices: tuple


def _independent_columns(phi: np.ndarray, weights: np.ndarray, rel_tol: float = 1e-9) -> list[int]:
    """Maximal independent column subset via pivoted QR in weighted coordinates."""
    scaled = np.sqrt(weights)[:, np.newaxis] * phi
    _, r, piv = scipy.linalg.qr(scaled, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        raise DomainError("encoder has no usable (nonconstant) signal")
    kept = [int(piv[j]) for j in range(len(diag)) if diag[j] > rel_tol * diag[0]]
    return sorted(kept)


def post_hoc_recover(enc: Encoder, ctx: Context) -> PostHocResult:
    """Estimate spanned eigenvalues by solving B v = lambda C v.

    Dependent encoder columns are dropped first (their indices are reported);
    the returned mixing matrix Q re-expresses the kept centered columns as
    unit-weighted-variance directions ordered by recovered eigenvalue.
    """
    phi, c, b = _cov_matrices(enc, ctx)
    kept = _independent_columns(phi, ctx.px)
    c_r = c[np.ix_(kept, kept)]
    b_r = b[np.ix_(kept, kept)]
    evals, q = generalized_eig(b_r, c_r)
    values = phi[:, kept] @ q
    encoder = Encoder(
        values=values,
        weights=enc.weights,
        metadata={"source": "post_hoc_recover", "kept": tuple(kept)},
    )
    return PostHocResult(eigenvalues=evals, q=q, encoder=encoder, kept_indices=tuple(kept))


# ---------------------------------------------------------------------------
# target-level metrics
# ---------------------------------------------------------------------------


def _center_target(f, weights: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (weights.shape[0],):
        raise StructuralError("target length must match the sample count")
    return f - float(np.sum(weights * f))


def compatibility(spectrum: Spectrum, f) -> float:
    """Alignment of a target with the context, in [0, 1].

    Equals sqrt(sum_i s_i^2 u_i^2 / ||f~||^2) with u_i the weighted
    coefficients of the centered target on the nonconstant eigenfunctions;
    expansion mass outside the supplied modes counts as zero-eigenvalue.
    """
    w = spectrum.weights
    f_c = _center_target(f, w)
    var = float(np.sum(w * f_c * f_c))
    if var <= 1e-14:
        raise DomainError("target is constant (weighted variance <= 1e-14)")
    const = _constant_index(spectrum)
    if const < 0:
        raise StructuralError("spectrum has no recognizable constant mode")
    idx = [j for j in range(spectrum.k) if j != const]
    coeffs = spectrum.functions[:, idx].T @ (w * f_c)
    num = float(np.sum(np.clip(spectrum.eigenvalues[idx], 0.0, None) * coeffs**2))
    return float(np.sqrt(min(max(num / var, 0.0), 1.0)))


def compatibility_direct(ctx: Context, f) -> float:
    """Direct-maximization route: ||T* f~||_{P_A} / ||f~||_{P_X}.

    The best-aligned view function is g* proportional to T* f~, and plugging it
    into the alignment objective gives exactly this ratio; used to cross-check
    the closed form on small contexts.
    """
    f_c = _center_target(f, ctx.px)
    var = float(np.sum(ctx.px * f_c * f_c))
    if var <= 1e-14:
        raise DomainError("target is constant (weighted variance <= 1e-14)")
    g = adjoint_apply(ctx, f_c)
    num = float(np.sum(ctx.pa * g * g))
    return float(np.sqrt(min(max(num / var, 0.0), 1.0)))


def worst_case_error(spectrum: Spectrum, d: int, eps: float) -> float:
    """Worst normalized probe error over targets with compatibility >= 1 - eps,
    for encoders spanning the top-d nonconstant eigenspace:
    (s1^2 - (1-eps)^2) / (s1^2 - s_{d+1}^2), clipped to [0, 1]."""
    if d < 1:
        raise BoundsError(f"d must be >= 1, got {d}")
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must be in [0, 1], got {eps!r}")
    lam = np.clip(nonconstant_eigenvalues(spectrum), 0.0, None)
    if lam.shape[0] < d + 1:
        raise BoundsError(f"need at least {d + 1} nonconstant eigenvalues, have {lam.shape[0]}")
    s1_sq = float(lam[0])
    sd1_sq = float(lam[d])
    s1 = float(np.sqrt(s1_sq))
    if 1.0 - eps > s1 + 1e-15:
        raise DomainError(f"hypothesis 1 - eps <= s1 violated: 1 - {eps} > {s1}")
    if s1_sq <= sd1_sq:
        raise DomainError(f"hypothesis s1^2 > s_(d+1)^2 violated: {s1_sq} <= {sd1_sq}")
    value = (s1_sq - (1.0 - eps) ** 2) / (s1_sq - sd1_sq)
    return float(min(max(value, 0.0), 1.0))


# ---------------------------------------------------------------------------
# encoder-level metrics
# ---------------------------------------------------------------------------


def ratio_trace(enc: Encoder, ctx: Context) -> float:
    """Tr(C^{-1} B) on the encoder's independent columns."""
    phi, c, b = _cov_matrices(enc, ctx)
    kept = _independent_columns(phi, ctx.px)
    c_r = c[np.ix_(kept, kept)]
    b_r = b[np.ix_(kept, kept)]
    return float(np.trace(scipy.linalg.solve(c_r, b_r, assume_a="pos")))


def trace_gap_upper(enc: Encoder, ctx: Context) -> float:
    """Upper bound on the encoder's trace gap by nested-prefix search.

    Recovered directions are ordered by post-hoc eigenvalue; for each prefix
    length d' the candidate gap is (s_1^2 + ... + s_{d'+1}^2) minus the prefix
    ratio trace (= the top-d' recovered eigenvalue sum), and the minimum over
    prefixes is returned. Context eigenvalues beyond the available spectrum
    count as zero.
    """
    post = post_hoc_recover(enc, ctx)
    d = post.eigenvalues.shape[0]
    lam = np.clip(nonconstant_eigenvalues(context_spectrum(ctx)), 0.0, None)
    padded = np.zeros(d + 1)
    take = min(lam.shape[0], d + 1)
    padded[:take] = lam[:take]
    s_prefix = np.cumsum(padded)  # s_prefix[j] = s_1^2 + ... + s_{j+1}^2
    rt_prefix = np.cumsum(post.eigenvalues)
    gaps = [float(s_prefix[dp] - rt_prefix[dp - 1]) for dp in range(1, d + 1)]
    return float(min(gaps))


def approx_error_bound(enc: Encoder, ctx: Context, eps: float) -> float:
    """Prediction-error bound from the trace gap:
    (s1^2 - (1-eps)^2 + s1*TG) / (s1^2 - TG^2)."""
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"eps must be in [0, 1], got {eps!r}")
    tg = trace_gap_upper(enc, ctx)
    lam = np.clip(nonconstant_eigenvalues(context_spectrum(ctx)), 0.0, None)
    if lam.shape[0] == 0:
        raise DomainError("context has no nonconstant spectrum")
    s1 = float(np.sqrt(lam[0]))
    if tg >= s1:
        raise DomainError(f"hypothesis trace_gap < s1 violated: {tg} >= {s1}")
    if eps <= 1.0 - s1:
        raise DomainError(f"hypothesis eps > 1 - s1 violated: {eps} <= {1.0 - s1}")
    return float((s1**2 - (1.0 - eps) ** 2 + s1 * tg) / (s1**2 - tg**2))


# ---------------------------------------------------------------------------
# tau model-selection metric
# ---------------------------------------------------------------------------


@dataclass
class TauResult:
    """The tau curve over candidate dimensions and its minimizer."""

    taus: list  # list of (d, tau_d); non-finite values are +inf
    d_star: int
    tau_star: float
    abstain: bool
    beta: float
    d0: int


def tau_metric(spectrum: Spectrum, cfg: MetricConfig | None = None) -> TauResult:
    """Compute tau_d = 1/(1 - s_{d+1}^2) + beta * prefix energy ratio.

    The curve is evaluated for d in [1, d0 - 1] with d0 clipped to the
    available nonconstant spectrum. A dimension whose (d+1)-th eigenvalue is
    within 1e-12 of 1 gets the +inf sentinel. Ties in the argmin resolve to
    the smaller d. The abstention flag is set when the minimum is within 1e-3
    of beta + 1, the value signaling no usable association.
    """
    cfg = cfg or MetricConfig()
    lam = np.clip(nonconstant_eigenvalues(spectrum), 0.0, 1.0)
    d0 = min(cfg.d0, lam.shape[0])
    if d0 < 2:
        raise BoundsError("tau needs at least two nonconstant eigenvalues")
    total = float(np.sum(lam[:d0]))
    prefix = np.cumsum(lam[:d0])
    taus: list[tuple[int, float]] = []
    for d in range(1, d0):
        s_next_sq = float(lam[d])
        ratio = 1.0 if total <= 1e-300 else float(prefix[d - 1]) / total
        if 1.0 - s_next_sq <= 1e-12:
            taus.append((d, INF))
        else:
            taus.append((d, 1.0 / (1.0 - s_next_sq) + cfg.beta * ratio))
    values = np.array([t for _, t in taus])
    d_star = int(np.argmin(values)) + 1
    tau_star = float(values[d_star - 1])
    abstain = bool(np.isfinite(tau_star) and abs(tau_star - (cfg.beta + 1.0)) <= 1e-3)
    return TauResult(
        taus=taus, d_star=d_star, tau_star=tau_star, abstain=abstain, beta=cfg.beta, d0=d0
    )


# ---------------------------------------------------------------------------
# discriminant / objective values
# ---------------------------------------------------------------------------


def fisher_discriminant(enc: Encoder, ctx: Context) -> float:
    """Generalized Fisher criterion 2 Tr[(C - B)^{-1} B]."""
    _, c, b = _cov_matrices(enc, ctx)
    m = c - b
    smallest = float(scipy.linalg.eigvalsh(0.5 * (m + m.T))[0])
    if smallest <= 1e-10:
        raise DomainError(
            f"C - B is singular (smallest eigenvalue {smallest:.3e}); encoder saturates the context"
        )
    return float(2.0 * np.trace(scipy.linalg.solve(m, b, assume_a="pos")))


def kise_objective(enc: Encoder, ctx: Context) -> float:
    """Sum over columns of ||phi~||_w^2 - <phi~, T_K phi~>_w = Tr(C) - Tr(B)."""
    _, c, b = _cov_matrices(enc, ctx)
    return float(np.trace(c) - np.trace(b))
