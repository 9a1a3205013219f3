"""Build new contexts from existing ones.

Three composition rules operate on dual kernels that share a sample space and
measure: operator composition (a palindromic matrix product through the
measure), convex combination, and column-wise concatenation of encoders.
A multiplicative-weights solver plays the adversarial weighting game whose
per-step loss is ``d`` minus the top-``d`` eigenvalue sum of the mixed kernel,
and certifies the averaged play against a simplex grid search.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .context import DualKernel, center_kernel, is_standardized
from .errors import BoundsError, DomainError, StructuralError
from .evaluate import Encoder, nonconstant_eigenvalues
from .linalg import Spectrum, WeightedMatrix, weighted_sym_eig

__all__ = [
    "MixWeights",
    "convolve",
    "convex_combine",
    "minimax_hedge",
    "grid_game_value",
    "concatenate",
    "choose_concat_dims",
]

_SIMPLEX_TOL = 1e-12
_EXACT_GRID_MAX_KERNELS = 4
_FINE_GRID_RESOLUTION = 0.01
_COARSE_GRID_RESOLUTION = 0.1
_GRID_CHUNK = 4096


@dataclass
class MixWeights:
    """A point on the probability simplex over kernels, with solver history.

    ``trajectory`` holds the per-step weight vectors when produced by the
    game solver; ``game_value`` is the time-averaged realized loss; and
    ``certificate`` records the regret guarantee against a grid search.
    """

    w: np.ndarray
    trajectory: list | None = None
    game_value: float | None = None
    certificate: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 1 or self.w.size < 1:
            raise StructuralError("mix weights must be a nonempty vector")
        if np.any(self.w < 0):
            raise StructuralError("mix weights must be nonnegative")
        if abs(float(self.w.sum()) - 1.0) > _SIMPLEX_TOL:
            raise StructuralError(
                f"mix weights must sum to 1 within {_SIMPLEX_TOL}, got {self.w.sum()!r}"
            )

    @property
    def r(self) -> int:
        return self.w.size


def _shared_base(kernels) -> DualKernel:
    kernels = list(kernels)
    if not kernels:
        raise StructuralError("need at least one kernel to mix")
    base = kernels[0]
    for idx, kern in enumerate(kernels[1:], start=1):
        if kern.n != base.n:
            raise StructuralError(
                f"kernel {idx} has {kern.n} samples, expected {base.n}"
            )
        if not np.allclose(kern.weights, base.weights, rtol=0.0, atol=1e-12):
            raise StructuralError(f"kernel {idx} uses a different sample measure")
        if getattr(kern, "side", None) != getattr(base, "side", None):
            raise StructuralError(f"kernel {idx} lives on a different sample side")
    return base


def _warn_unstandardized(kernels) -> None:
    for idx, kern in enumerate(kernels):
        if not is_standardized(kern):
            warnings.warn(
                f"kernel {idx} is not standardized; one kernel's scale may "
                "dominate the mixture",
                RuntimeWarning,
                stacklevel=3,
            )


def convolve(kernels) -> DualKernel:
    """Compose kernels through the shared measure.

    With ``D = diag(weights)``, the composed operator is
    ``K_1 D K_2 D ... K_r ... D K_2 D K_1`` expressed again as a kernel:
    the first kernel in the list is the outermost factor.  The result is
    symmetric positive semidefinite, and keeps the constant eigenvalue at 1
    when the inputs are standardized.
    """
    kernels = list(kernels)
    base = _shared_base(kernels)
    _warn_unstandardized(kernels)
    w = base.weights
    prefix = np.eye(base.n)
    for kern in kernels[:-1]:
        prefix = prefix @ (kern.entries * w[np.newaxis, :])
    result = prefix @ kernels[-1].entries @ prefix.T
    result = 0.5 * (result + result.T)
    return DualKernel(
        entries=result,
        weights=w.copy(),
        side=base.side,
        meta={"op": "convolve", "inputs": len(kernels)},
    )


def convex_combine(kernels, weights: MixWeights) -> DualKernel:
    """Weighted sum of kernels with simplex weights."""
    kernels = list(kernels)
    base = _shared_base(kernels)
    if weights.r != len(kernels):
        raise StructuralError(
            f"{weights.r} weights for {len(kernels)} kernels"
        )
    mix = np.zeros((base.n, base.n))
    for coef, kern in zip(weights.w, kernels):
        mix += coef * kern.entries
    mix = 0.5 * (mix + mix.T)
    return DualKernel(
        entries=mix,
        weights=base.weights.copy(),
        side=base.side,
        meta={"op": "combine", "w": [float(v) for v in weights.w]},
    )


def _simplex_grid(r: int, resolution: float):
    """Yield integer-count simplex points at the given resolution."""
    ticks = int(round(1.0 / resolution))
    # Stars and bars: cut points between ticks define the per-kernel counts.
    for cuts in itertools.combinations(range(ticks + r - 1), r - 1):
        counts = np.diff((-1, *cuts, ticks + r - 1)) - 1
        yield counts / ticks


def _conjugated_stack(kernels) -> tuple[np.ndarray, np.ndarray]:
    """Stack kernels conjugated by sqrt-weights so plain eigensolvers apply."""
    base = kernels[0]
    root = np.sqrt(base.weights)
    stack = np.stack(
        [root[:, np.newaxis] * kern.entries * root[np.newaxis, :] for kern in kernels]
    )
    return stack, root


def grid_game_value(kernels, d: int, resolution: float | None = None) -> dict:
    """Best adversarial loss ``d - sum of top-d eigenvalues`` over a simplex grid.

    Exhaustive at the fine resolution for up to four kernels; beyond that a
    coarse grid is used and the result is flagged approximate.
    """
    kernels = [center_kernel(kern) for kern in kernels]
    base = _shared_base(kernels)
    r = len(kernels)
    if not 1 <= d <= base.n - 1:
        raise BoundsError(f"need 1 <= d <= {base.n - 1}, got {d}")
    approximate = r > _EXACT_GRID_MAX_KERNELS
    if resolution is None:
        resolution = _COARSE_GRID_RESOLUTION if approximate else _FINE_GRID_RESOLUTION
    stack, _ = _conjugated_stack(kernels)
    best_sum = math.inf
    best_w = None
    batch: list[np.ndarray] = []

    def flush(points: list[np.ndarray]) -> None:
        nonlocal best_sum, best_w
        if not points:
            return
        ws = np.stack(points)
        mats = np.tensordot(ws, stack, axes=(1, 0))
        eigs = np.linalg.eigvalsh(mats)
        sums = eigs[:, -d:].sum(axis=1)
        hit = int(np.argmin(sums))
        if sums[hit] < best_sum:
            best_sum = float(sums[hit])
            best_w = ws[hit]

    for point in _simplex_grid(r, resolution):
        batch.append(point)
        if len(batch) >= _GRID_CHUNK:
            flush(batch)
            batch = []
    flush(batch)
    return {
        "value": float(d - best_sum),
        "w": best_w,
        "resolution": float(resolution),
        "approximate": approximate,
    }


def minimax_hedge(
    kernels,
    d: int,
    steps: int,
    loss_bound: float | None = None,
    seed: int = 0,
) -> MixWeights:
    """Multiplicative-weights play of the adversarial kernel-weighting game.

    Each step takes the exact top-``d`` eigenspace of the centered mixture as
    the feature player's best response, pays the weight player the reward
    ``d`` minus the captured eigenvalue mass per kernel, and exponentiates the
    weights.  The returned certificate compares the best time-averaged reward
    against a grid-search game value plus the regret allowance
    ``2 * C * sqrt(log r / steps)``.

    The solver is deterministic; ``seed`` is accepted for interface
    uniformity and recorded in the certificate.
    """
    kernels = list(kernels)
    base = _shared_base(kernels)
    _warn_unstandardized(kernels)
    r = len(kernels)
    n = base.n
    if not 1 <= d <= n - 1:
        raise BoundsError(f"need 1 <= d <= {n - 1}, got {d}")
    if steps < 1:
        raise BoundsError(f"need at least one step, got {steps}")
    if steps <= math.log(r):
        raise DomainError(
            f"step count {steps} must exceed log(r) = {math.log(r):.6g} "
            "for the step-size rule"
        )
    if loss_bound is None:
        loss_bound = float(d)
    if loss_bound <= 0:
        raise DomainError(f"loss bound must be positive, got {loss_bound}")

    centered = [center_kernel(kern) for kern in kernels]
    stack = np.stack([kern.entries for kern in centered])
    sample_w = base.weights
    eta = math.sqrt(math.log(r)) / (loss_bound * math.sqrt(steps))

    w = np.full(r, 1.0 / r)
    trajectory = [w.copy()]
    reward_total = np.zeros(r)
    losses = np.empty(steps)
    for t in range(steps):
        mix = np.tensordot(w, stack, axes=(0, 0))
        spec = weighted_sym_eig(WeightedMatrix(mix, sample_w), k=d)
        weighted_phi = spec.functions * sample_w[:, np.newaxis]
        captured = np.einsum("ni,jnm,mi->j", weighted_phi, stack, weighted_phi)
        rewards = d - captured
        losses[t] = float(w @ rewards)
        reward_total += rewards
        w = w * np.exp(eta * rewards)
        w = w / w.sum()
        trajectory.append(w.copy())

    avg_rewards = reward_total / steps
    sup_avg_loss = float(avg_rewards.max())
    regret_allowance = 2.0 * loss_bound * math.sqrt(math.log(r) / steps)
    grid = grid_game_value(kernels, d)
    certificate = {
        "avg_rewards": avg_rewards,
        "sup_avg_loss": sup_avg_loss,
        "grid_value": grid["value"],
        "grid_w": grid["w"],
        "regret_allowance": regret_allowance,
        "certified": sup_avg_loss <= grid["value"] + regret_allowance + 1e-9,
        "approximate": grid["approximate"],
        "eta": eta,
        "loss_bound": loss_bound,
        "seed": seed,
        "per_step_loss": losses,
    }
    return MixWeights(
        w=w,
        trajectory=trajectory,
        game_value=float(losses.mean()),
        certificate=certificate,
    )


def concatenate(encoders) -> Encoder:
    """Stack encoder columns over a shared sample space."""
    encoders = list(encoders)
    if not encoders:
        raise StructuralError("need at least one encoder to concatenate")
    base = encoders[0]
    for idx, enc in enumerate(encoders[1:], start=1):
        if enc.n != base.n:
            raise StructuralError(
                f"encoder {idx} has {enc.n} rows, expected {base.n}"
            )
        if not np.allclose(enc.weights, base.weights, rtol=0.0, atol=1e-12):
            raise StructuralError(f"encoder {idx} uses a different sample measure")
    values = np.hstack([enc.values for enc in encoders])
    return Encoder(
        values=values,
        weights=base.weights.copy(),
        metadata={"op": "concatenate", "dims": [enc.d for enc in encoders]},
    )


def choose_concat_dims(spectra, threshold: float) -> list[int]:
    """Per-spectrum dimension cut: smallest d whose next mode is weak.

    For each spectrum the chosen ``d`` is the smallest count such that the
    next nonconstant singular value is at or below ``threshold`` (the full
    length when every mode stays above it).
    """
    if threshold < 0:
        raise DomainError(f"threshold must be nonnegative, got {threshold}")
    dims = []
    for spec in spectra:
        if not isinstance(spec, Spectrum):
            raise StructuralError("choose_concat_dims expects spectra")
        singulars = np.sqrt(np.clip(nonconstant_eigenvalues(spec), 0.0, None))
        below = np.flatnonzero(singulars <= threshold)
        dims.append(int(below[0]) if below.size else int(singulars.size))
    return dims
