"""Association strength of a finite context, measured on the dual-kernel diagonal.

The diagonal entry at an input ``x`` equals ``1 +`` the chi-squared divergence
between the conditional view distribution at ``x`` and the view marginal, so it
is always at least 1 and grows with how sharply ``x`` pins down its views. The
quantity of interest, written ``kappa_sq`` throughout, is the worst case of that
diagonal (or a quantile of it, for heavy-tailed contexts where a single rare
input would dominate).

Three routes are provided:

* :func:`kappa_masking_analytic` -- closed forms for sign-vector masking
  contexts on the hypercube ``{-1, +1}^d``, exact for independent coordinate
  masking and upper bounds for the contiguous-block variants;
* :func:`kappa_brute` -- exact maximum by enumerating the context;
* :func:`kappa_percentile` -- seeded empirical quantile under input sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .context import Context
from .errors import BoundsError, DomainError, StructuralError
from .runtime import make_rng

__all__ = [
    "ComplexityEstimate",
    "MASKING_STYLES",
    "dual_kernel_diagonal",
    "kappa_masking_analytic",
    "kappa_brute",
    "kappa_percentile",
]

MASKING_STYLES = ("random", "block", "block_flip")

_METHODS = ("analytic", "brute", "percentile")
_UNIT_SLACK = 1e-9  # the diagonal is 1 + a nonnegative divergence
_LOW_PRECISION_SAMPLES = 10


@dataclass(frozen=True)
class ComplexityEstimate:
    """A single ``kappa_sq`` value together with how it was obtained.

    ``is_bound`` marks values that are proven upper bounds rather than exact;
    ``low_precision`` marks percentile estimates drawn from fewer than
    ``10`` samples, which are too noisy to rank contexts reliably.
    """

    kappa_sq: float
    method: str
    samples_used: int = 0
    percentile_q: float | None = None
    is_bound: bool = False
    low_precision: bool = False

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise StructuralError(
                f"method must be one of {_METHODS}, got {self.method!r}"
            )
        if not np.isfinite(self.kappa_sq) or self.kappa_sq < 1.0 - _UNIT_SLACK:
            raise DomainError(
                f"kappa_sq must be finite and >= 1 (got {self.kappa_sq!r}); the "
                "dual-kernel diagonal is one plus a nonnegative divergence"
            )
        if not isinstance(self.samples_used, (int, np.integer)) or self.samples_used < 0:
            raise BoundsError(f"samples_used must be a count, got {self.samples_used!r}")
        if self.method == "percentile":
            if self.percentile_q is None or not 0.0 < self.percentile_q < 1.0:
                raise DomainError(
                    f"percentile estimates need q in (0, 1), got {self.percentile_q!r}"
                )
        elif self.percentile_q is not None:
            raise StructuralError(f"{self.method} estimates carry no percentile_q")


def dual_kernel_diagonal(ctx: Context, rows: np.ndarray | None = None) -> np.ndarray:
    """Diagonal of the input-side dual kernel: ``sum_a P(a|x)^2 / P(a)`` per row.

    Computed row-wise without assembling the full kernel, so it stays cheap for
    sparse contexts with many views. ``rows`` restricts the computation to the
    given input indices (in that order).
    """
    cond = ctx.conditional_x()
    inv_pa = 1.0 / ctx.pa
    if rows is not None:
        rows = np.asarray(rows, dtype=int)
        if rows.size and (rows.min() < 0 or rows.max() >= ctx.n):
            raise BoundsError("row indices out of range for this context")
        cond = cond[rows]
    if ctx.is_sparse:
        sq = cond.multiply(cond).multiply(inv_pa[np.newaxis, :])
        return np.asarray(sq.sum(axis=1)).ravel()
    return ((cond * cond) * inv_pa[np.newaxis, :]).sum(axis=1)


def _check_masking_args(d_x: int, alpha: float, style: str) -> int:
    if not isinstance(d_x, (int, np.integer)) or d_x < 1:
        raise BoundsError(f"d_x must be a positive integer, got {d_x!r}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha!r}")
    if style not in MASKING_STYLES:
        raise StructuralError(
            f"style must be one of {MASKING_STYLES}, got {style!r}"
        )
    return int(d_x)


def kappa_masking_analytic(d_x: int, alpha: float, style: str = "random") -> ComplexityEstimate:
    """Closed-form ``kappa_sq`` for masking contexts on ``{-1, +1}^d_x``.

    * ``random`` -- each coordinate is masked independently with probability
      ``alpha``; the value ``(2 - alpha)^d_x`` is exact.
    * ``block`` -- a contiguous window of ``ceil(alpha * d_x)`` coordinates is
      masked at a uniformly random valid position; ``2^((1 - alpha) * d_x)``
      is an upper bound (the enumerated value is ``2^(d_x - r)``).
    * ``block_flip`` -- block masking followed by flipping each surviving
      coordinate with probability ``alpha / 2``;
      ``(alpha^2 - 2*alpha + 2)^((1 - alpha/2) * d_x)`` is an upper bound.

    Bounds are marked with ``is_bound=True``.
    """
    d = _check_masking_args(d_x, alpha, style)
    if style == "random":
        value = (2.0 - alpha) ** d
        bound = False
    elif style == "block":
        value = 2.0 ** ((1.0 - alpha) * d)
        bound = True
    else:
        value = (alpha * alpha - 2.0 * alpha + 2.0) ** ((1.0 - alpha / 2.0) * d)
        bound = True
    return ComplexityEstimate(kappa_sq=float(value), method="analytic", is_bound=bound)


def kappa_brute(ctx: Context) -> ComplexityEstimate:
    """Exact ``kappa_sq``: the maximum dual-kernel diagonal entry over all inputs."""
    diag = dual_kernel_diagonal(ctx)
    return ComplexityEstimate(
        kappa_sq=float(diag.max()), method="brute", samples_used=int(ctx.n)
    )


def kappa_percentile(
    ctx: Context, q: float, n_samples: int, seed: int | None = 0
) -> ComplexityEstimate:
    """Empirical lower ``q``-quantile of the diagonal under input sampling.

    Draws ``n_samples`` inputs from the input marginal (with replacement),
    evaluates the diagonal at each, and returns the order statistic at position
    ``ceil(q * n_samples)``, i.e. the lower empirical quantile. This discards
    the heaviest tail of the diagonal, which is the point of using a quantile
    instead of the maximum. Estimates from fewer than 10 samples are flagged
    ``low_precision``.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must be in (0, 1), got {q!r}")
    if not isinstance(n_samples, (int, np.integer)) or n_samples < 1:
        raise BoundsError(f"n_samples must be a positive count, got {n_samples!r}")
    n_samples = int(n_samples)
    rng = make_rng(seed)
    idx = rng.choice(ctx.n, size=n_samples, replace=True, p=ctx.px)
    unique, inverse = np.unique(idx, return_inverse=True)
    values = np.sort(dual_kernel_diagonal(ctx, rows=unique)[inverse])
    # the tiny slack keeps q * n that should be an exact integer from being
    # pushed up one order statistic by float rounding
    order = min(n_samples, max(1, math.ceil(q * n_samples - 1e-12)))
    return ComplexityEstimate(
        kappa_sq=float(values[order - 1]),
        method="percentile",
        samples_used=n_samples,
        percentile_q=float(q),
        low_precision=n_samples < _LOW_PRECISION_SAMPLES,
    )
