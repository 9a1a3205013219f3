"""Reweighted and distributionally robust training for linear models.

Three groups of tools:

* generalized reweighting (GRW): full-batch gradient descent on a weighted
  empirical risk, covering ERM (uniform weights), importance weighting (fixed
  weights), and group-DRO (exponential group-weight updates) — plus the
  max-margin direction those methods converge to on separable data;
* worst-case risks: CVaR and the Cressie-Read family evaluated through their
  dual forms, with the outlier-filtered variant that drops the largest
  ``floor(eps * n)`` losses before the dual (robust to contaminated data);
* a small training loop that minimizes either risk per epoch and records
  average / worst-group test metrics.

Losses operate on linear scores ``yhat = <theta, x>``; classification losses
take labels in ``{-1, +1}``. All feature vectors are expected to satisfy
``||x||_2 <= 1`` (see :func:`normalize_features`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .errors import DomainError, NumericalError, StructuralError

__all__ = [
    "LossSpec",
    "RobustConfig",
    "GRWState",
    "GRWTrainResult",
    "EpochRecord",
    "DoroTrainResult",
    "normalize_features",
    "grw_step",
    "grw_train",
    "group_dro_weights",
    "group_sample_weights",
    "cvar_risk",
    "cressie_read_risk",
    "doro_risk",
    "doro_train",
    "max_margin_direction",
]

_LOSS_KINDS = ("squared", "logistic", "poly_tailed")
_SIMPLEX_TOL = 1e-9
_FEATURE_NORM_TOL = 1e-9
_BRACKET_WIDENINGS = 6
_LN2 = math.log(2.0)

DRO_METHODS = ("erm", "cvar", "chisq", "cvar_doro", "chisq_doro")
GRW_METHODS = ("erm", "iw", "gdro")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossSpec:
    """A pointwise loss on linear scores with its derivative and smoothness.

    ``squared`` is the regression loss ``(yhat - y)^2 / 2``; ``logistic`` and
    ``poly_tailed`` are margin losses for labels in ``{-1, +1}``. The
    polynomially tailed loss equals ``(m - beta_p + 1)^(-alpha_p)`` for margins
    ``m >= beta_p`` and is completed on the left by a scaled logistic curve
    chosen so the whole function is convex, strictly decreasing, and C^1 at
    the junction (value 1, slope ``-alpha_p``).
    """

    kind: str
    alpha_p: float = 1.0
    beta_p: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _LOSS_KINDS:
            raise StructuralError(f"loss kind must be one of {_LOSS_KINDS}, got {self.kind!r}")
        if self.kind == "poly_tailed" and self.alpha_p <= 0:
            raise DomainError(f"poly_tailed needs alpha_p > 0, got {self.alpha_p!r}")

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls(kind="squared")

    @classmethod
    def logistic(cls) -> "LossSpec":
        return cls(kind="logistic")

    @classmethod
    def poly_tailed(cls, alpha_p: float = 1.0, beta_p: float = 1.0) -> "LossSpec":
        return cls(kind="poly_tailed", alpha_p=alpha_p, beta_p=beta_p)

    def value(self, yhat, y) -> np.ndarray:
        yhat = np.asarray(yhat, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return 0.5 * (yhat - y) ** 2
        m = yhat * y
        if self.kind == "logistic":
            return np.logaddexp(0.0, -m)
        a, b = self.alpha_p, self.beta_p
        c = 2.0 * a * _LN2
        left = np.logaddexp(0.0, -c * (m - b)) / _LN2
        right = np.power(np.maximum(m - b + 1.0, 1.0), -a)
        return np.where(m < b, left, right)

    def deriv(self, yhat, y) -> np.ndarray:
        """Derivative with respect to the score ``yhat``."""
        yhat = np.asarray(yhat, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return yhat - y
        m = yhat * y
        if self.kind == "logistic":
            return -y * expit(-m)
        a, b = self.alpha_p, self.beta_p
        c = 2.0 * a * _LN2
        left = -2.0 * a * expit(-c * (m - b))
        right = -a * np.power(np.maximum(m - b + 1.0, 1.0), -a - 1.0)
        return y * np.where(m < b, left, right)

    def smoothness(self) -> float:
        """Upper bound on the loss curvature, used for the default step size."""
        if self.kind == "squared":
            return 1.0
        if self.kind == "logistic":
            return 0.25
        return self.alpha_p * (self.alpha_p + 1.0)


# ---------------------------------------------------------------------------
# robust-risk configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RobustConfig:
    """Worst-case-risk parameters: group fraction, divergence order, outlier cut.

    ``alpha`` is the assumed minimal group fraction; ``beta_cr`` selects the
    divergence in the Cressie-Read family (``2`` gives chi-squared,
    ``math.inf`` gives CVaR); ``eps_doro`` is the fraction of largest losses
    discarded as suspected outliers before the dual is evaluated.
    """

    alpha: float
    beta_cr: float = math.inf
    eps_doro: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if not self.beta_cr > 1.0:
            raise DomainError(f"beta_cr must be in (1, inf], got {self.beta_cr!r}")
        if not 0.0 <= self.eps_doro < 0.5:
            raise DomainError(f"eps_doro must be in [0, 0.5), got {self.eps_doro!r}")

    @property
    def beta_star(self) -> float:
        """Conjugate exponent ``beta / (beta - 1)``; 1 in the CVaR limit."""
        if math.isinf(self.beta_cr):
            return 1.0
        return self.beta_cr / (self.beta_cr - 1.0)

    @property
    def rho(self) -> float:
        """Divergence budget matching a minimal group fraction of ``alpha``."""
        if math.isinf(self.beta_cr):
            return -math.log(self.alpha)
        b = self.beta_cr
        t = 1.0 / self.alpha
        return (t**b - b * t + b - 1.0) / (b * (b - 1.0))

    @property
    def c_coef(self) -> float:
        """Dual scaling ``c_beta(rho) = (1 + beta (beta-1) rho)^(1/beta)``."""
        if math.isinf(self.beta_cr):
            return 1.0 / self.alpha
        b = self.beta_cr
        return (1.0 + b * (b - 1.0) * self.rho) ** (1.0 / b)


# ---------------------------------------------------------------------------
# generalized reweighting
# ---------------------------------------------------------------------------


def normalize_features(features) -> np.ndarray:
    """Scale all rows by the largest row norm so every ``||x||_2 <= 1``."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise StructuralError("features must be a 2-D array")
    norms = np.linalg.norm(x, axis=1)
    top = float(norms.max(initial=0.0))
    if top <= 1.0:
        return x.copy()
    return x / top


def _check_features(x: np.ndarray) -> None:
    norms = np.linalg.norm(x, axis=1)
    worst = float(norms.max(initial=0.0))
    if worst > 1.0 + _FEATURE_NORM_TOL:
        raise StructuralError(
            f"features must satisfy ||x||_2 <= 1 (max norm {worst:.6g}); "
            "rescale with normalize_features first"
        )


def _check_simplex(w: np.ndarray, what: str) -> None:
    if w.ndim != 1 or w.size == 0:
        raise StructuralError(f"{what} must be a nonempty vector")
    if w.min() < -_SIMPLEX_TOL or abs(float(w.sum()) - 1.0) > _SIMPLEX_TOL:
        raise StructuralError(f"{what} must be nonnegative and sum to 1")


@dataclass(frozen=True)
class GRWState:
    """One snapshot of reweighted gradient descent on a linear model.

    ``anchor`` is the reference point of the ridge penalty
    ``mu/2 * ||theta - anchor||^2``; it defaults to the initial parameters.
    """

    theta: np.ndarray
    sample_weights: np.ndarray
    learning_rate: float
    mu: float = 0.0
    loss: LossSpec = field(default_factory=LossSpec.squared)
    anchor: np.ndarray | None = None
    step: int = 0

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1:
            raise StructuralError("theta must be a 1-D vector")
        object.__setattr__(self, "theta", theta)
        w = np.array(self.sample_weights, dtype=float)
        _check_simplex(w, "sample_weights")
        object.__setattr__(self, "sample_weights", w)
        if self.learning_rate <= 0:
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.mu < 0:
            raise DomainError(f"mu must be nonnegative, got {self.mu!r}")
        anchor = self.anchor
        anchor = theta.copy() if anchor is None else np.array(anchor, dtype=float)
        if anchor.shape != theta.shape:
            raise StructuralError("anchor must match theta's shape")
        object.__setattr__(self, "anchor", anchor)


def grw_step(state: GRWState, features, labels) -> GRWState:
    """One full-batch reweighted gradient step on the linear model.

    Minimizes ``sum_i q_i loss(<theta, x_i>, y_i) + mu/2 ||theta - anchor||^2``
    with the state's fixed weights; dynamic schedules update the weights
    between calls. Non-finite gradients abort with diagnostics.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise StructuralError("features must be n x d and labels length n")
    if x.shape[0] != state.sample_weights.size:
        raise StructuralError("sample_weights length must match the number of samples")
    if x.shape[1] != state.theta.size:
        raise StructuralError("theta dimension must match the feature dimension")
    _check_features(x)
    # overflow surfaces as the explicit non-finite check below, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        yhat = x @ state.theta
        deriv = state.loss.deriv(yhat, y)
        grad = x.T @ (state.sample_weights * deriv) + state.mu * (
            state.theta - state.anchor
        )
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite gradient at step {state.step} "
                f"(loss={state.loss.kind}, max |score| = {float(np.abs(yhat).max()):.6g})"
            )
        return replace(
            state, theta=state.theta - state.learning_rate * grad, step=state.step + 1
        )


def group_dro_weights(group_risks, group_weights, nu: float) -> np.ndarray:
    """Exponential-weights update on the group simplex.

    Each group weight is multiplied by ``exp(nu * risk)`` and the vector is
    renormalized, tilting mass toward the worst-performing groups.
    """
    if nu <= 0:
        raise DomainError(f"nu must be positive, got {nu!r}")
    risks = np.asarray(group_risks, dtype=float)
    g = np.asarray(group_weights, dtype=float)
    if risks.shape != g.shape or risks.ndim != 1:
        raise StructuralError("group_risks and group_weights must be 1-D and aligned")
    _check_simplex(g, "group_weights")
    updated = g * np.exp(nu * (risks - risks.max()))  # shift for overflow safety
    return updated / updated.sum()


def group_sample_weights(groups, group_weights) -> np.ndarray:
    """Spread group weights evenly inside each group: ``q_i = g_k / n_k``."""
    groups = np.asarray(groups)
    g = np.asarray(group_weights, dtype=float)
    counts = np.bincount(groups.astype(int), minlength=g.size)
    if groups.size == 0 or groups.min() < 0 or groups.max() >= g.size:
        raise StructuralError("groups must be ids in [0, n_groups)")
    if np.any(counts == 0):
        raise StructuralError("every group must contain at least one sample")
    return g[groups] / counts[groups]


@dataclass(frozen=True)
class GRWTrainResult:
    theta: np.ndarray
    risk_history: np.ndarray  # uniform-weight empirical risk after each step
    final_weights: np.ndarray
    steps: int
    theta_trace: tuple = ()  # per-epoch parameters when tracing was requested


def grw_train(
    features,
    labels,
    *,
    method: str = "erm",
    loss: LossSpec | None = None,
    sample_weights=None,
    groups=None,
    nu: float = 1.0,
    learning_rate: float | None = None,
    mu: float = 0.0,
    epochs: int = 1000,
    theta0=None,
    trace: bool = False,
) -> GRWTrainResult:
    """Full-batch reweighted training: ERM, importance weighting, or group DRO.

    ``erm`` uses uniform weights; ``iw`` uses the given fixed
    ``sample_weights``; ``gdro`` re-derives the weights every epoch from
    per-group risks via :func:`group_dro_weights` (requires ``groups``).
    The recorded history is the uniform-weight empirical risk after each
    epoch, the common yardstick for all variants.
    """
    if method not in GRW_METHODS:
        raise StructuralError(f"method must be one of {GRW_METHODS}, got {method!r}")
    if epochs < 1:
        raise DomainError(f"epochs must be positive, got {epochs}")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise StructuralError("features must be n x d and labels length n")
    n, d = x.shape
    loss = loss if loss is not None else LossSpec.squared()
    if learning_rate is None:
        learning_rate = 1.0 / (2.0 * (loss.smoothness() + mu))
    if method == "iw":
        if sample_weights is None:
            raise StructuralError("method 'iw' needs sample_weights")
        weights = np.asarray(sample_weights, dtype=float)
    else:
        weights = np.full(n, 1.0 / n)
    group_ids = None
    g = None
    if method == "gdro":
        if groups is None:
            raise StructuralError("method 'gdro' needs groups")
        group_ids = np.asarray(groups, dtype=int)
        if group_ids.shape != (n,):
            raise StructuralError("groups must be one id per sample")
        k = int(group_ids.max()) + 1
        g = np.full(k, 1.0 / k)
        weights = group_sample_weights(group_ids, g)
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    state = GRWState(
        theta=theta0,
        sample_weights=weights,
        learning_rate=learning_rate,
        mu=mu,
        loss=loss,
    )
    history = np.empty(epochs)
    snapshots = []
    for epoch in range(epochs):
        if method == "gdro":
            values = loss.value(x @ state.theta, y)
            risks = np.bincount(group_ids, weights=values) / np.bincount(group_ids)
            g = group_dro_weights(risks, g, nu)
            state = replace(state, sample_weights=group_sample_weights(group_ids, g))
        state = grw_step(state, x, y)
        with np.errstate(over="ignore", invalid="ignore"):
            history[epoch] = float(np.mean(loss.value(x @ state.theta, y)))
        if trace:
            snapshots.append(state.theta.copy())
    return GRWTrainResult(
        theta=state.theta,
        risk_history=history,
        final_weights=state.sample_weights,
        steps=state.step,
        theta_trace=tuple(snapshots),
    )


# ---------------------------------------------------------------------------
# worst-case risks
# ---------------------------------------------------------------------------


def _check_losses(losses) -> np.ndarray:
    values = np.asarray(losses, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise StructuralError("losses must be a nonempty 1-D vector")
    if values.min() < 0:
        raise DomainError(f"losses must be nonnegative, min = {values.min():.6g}")
    return values


def _uniform_or(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise StructuralError("weights must match the number of losses")
    _check_simplex(w, "weights")
    return w


def cvar_risk(losses, weights=None, alpha: float = 0.5) -> tuple[float, float]:
    """Average loss over the worst ``alpha`` fraction, with its dual threshold.

    Evaluates ``inf_eta { alpha^-1 E[(loss - eta)_+] + eta }`` exactly: the
    minimizer is the upper ``alpha``-quantile of the losses (the smallest
    support value with tail mass at most ``alpha``). ``alpha = 1`` is the
    plain mean, reported with the always-optimal threshold 0 so downstream
    gradients keep every sample.
    """
    values = _check_losses(losses)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must be in (0, 1], got {alpha!r}")
    w = _uniform_or(weights, values.size)
    if alpha == 1.0:
        return float(w @ values), 0.0
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    tail = 1.0 - np.cumsum(w[order])  # mass strictly above each sorted value (ties pooled below)
    # pool ties: the tail mass of a value is the mass above its last occurrence
    eta = None
    for j in range(values.size):
        last = j
        while last + 1 < values.size and sorted_vals[last + 1] == sorted_vals[j]:
            last += 1
        if tail[last] <= alpha + _SIMPLEX_TOL:
            eta = float(sorted_vals[j])
            break
        # skip the rest of the tie block
    assert eta is not None  # tail mass above the maximum is 0 <= alpha
    value = float((w @ np.maximum(values - eta, 0.0)) / alpha + eta)
    return value, eta


def _dual_objective(eta: float, values: np.ndarray, w: np.ndarray, beta_star: float, c: float) -> float:
    excess = np.maximum(values - eta, 0.0)
    return c * float(w @ excess**beta_star) ** (1.0 / beta_star) + eta


def _brent_dual(values: np.ndarray, w: np.ndarray, beta_star: float, c: float) -> tuple[float, float]:
    """Minimize the dual objective over eta, widening the bracket on failure."""
    top = float(values.max())
    bottom = float(values.min())
    if top == bottom:
        return top, top  # constant losses: the objective is minimized at eta = loss
    lo, hi = -top, top
    for _ in range(_BRACKET_WIDENINGS):
        result = minimize_scalar(
            _dual_objective,
            bounds=(lo, hi),
            args=(values, w, beta_star, c),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, top)},
        )
        eta = float(result.x)
        if eta > lo + 1e-6 * (hi - lo):
            return float(result.fun), eta
        lo *= 10.0  # minimizer pinned to the lower edge: widen and retry
    raise NumericalError(
        f"dual minimization failed: minimizer stuck at the lower bracket edge {lo:.3g}"
    )


def cressie_read_risk(losses, weights=None, cfg: RobustConfig | None = None) -> float:
    """Worst-case risk over a Cressie-Read divergence ball, via the dual form.

    Computes ``inf_eta { c * E[(loss - eta)_+^(beta*)]^(1/beta*) + eta }`` by
    bounded scalar minimization on ``[-max loss, max loss]``, widening the
    lower end tenfold when the minimizer is pinned there. ``beta_cr = inf``
    dispatches to the exact CVaR evaluation.
    """
    if cfg is None:
        raise StructuralError("cressie_read_risk needs a RobustConfig")
    values = _check_losses(losses)
    w = _uniform_or(weights, values.size)
    if math.isinf(cfg.beta_cr):
        return cvar_risk(values, w, cfg.alpha)[0]
    value, _ = _brent_dual(values, w, cfg.beta_star, cfg.c_coef)
    return value


def _filtered_indices(values: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (kept, dropped): remove the floor(eps n) largest losses.

    Ties are broken by index — among equal losses the earliest index is
    dropped first. Both outputs are sorted ascending so downstream sums run
    in the original sample order.
    """
    n = values.size
    n_drop = int(math.floor(eps * n))
    if n_drop == 0:
        return np.arange(n), np.empty(0, dtype=int)
    order = np.lexsort((np.arange(n), -values))  # decreasing loss, ties by index
    dropped = np.sort(order[:n_drop])
    kept = np.sort(order[n_drop:])
    return kept, dropped


def doro_risk(losses, cfg: RobustConfig) -> tuple[float, float, np.ndarray]:
    """Outlier-filtered worst-case risk: drop the largest losses, then the dual.

    Removes the ``floor(eps_doro * n)`` largest losses (suspected outliers)
    and evaluates the configured dual risk on the survivors with uniform
    weights. Returns the risk, the optimal dual threshold, and the dropped
    indices. ``eps_doro = 0`` reduces exactly to the unfiltered risk.
    """
    values = _check_losses(losses)
    kept, dropped = _filtered_indices(values, cfg.eps_doro)
    if kept.size == 0:
        raise StructuralError("all samples would be dropped; lower eps_doro")
    survivors = values[kept]
    w = np.full(survivors.size, 1.0 / survivors.size)
    if math.isinf(cfg.beta_cr):
        value, eta = cvar_risk(survivors, w, cfg.alpha)
    else:
        value, eta = _brent_dual(survivors, w, cfg.beta_star, cfg.c_coef)
    return value, eta, dropped


# ---------------------------------------------------------------------------
# robust training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    avg_acc: float
    worst_acc: float


@dataclass(frozen=True)
class DoroTrainResult:
    theta: np.ndarray
    records: tuple[EpochRecord, ...]
    method: str


def _accuracy_metrics(scores: np.ndarray, y: np.ndarray, groups) -> tuple[float, float]:
    correct = (np.where(scores >= 0.0, 1.0, -1.0) == y).astype(float)
    avg = float(correct.mean())
    if groups is None:
        return avg, avg
    groups = np.asarray(groups, dtype=int)
    counts = np.bincount(groups)
    if np.any(counts == 0):
        raise StructuralError("every group must contain at least one sample")
    per_group = np.bincount(groups, weights=correct) / counts
    return avg, float(per_group.min())


def _risk_gradient_weights(
    values: np.ndarray, eta: float, method: str, cfg: RobustConfig
) -> np.ndarray:
    """Per-sample weights for one descent step on the dual at fixed eta."""
    n = values.size
    if method == "erm":
        return np.full(n, 1.0 / n)
    excess = np.maximum(values - eta, 0.0)
    if method in ("cvar", "cvar_doro"):
        active = (values > eta).astype(float)
        return (cfg.c_coef / n) * active
    root = math.sqrt(float(np.mean(excess**2)))
    if root == 0.0:
        return np.zeros(n)
    return (cfg.c_coef / (n * root)) * excess


def doro_train(
    features,
    labels,
    *,
    method: str = "erm",
    cfg: RobustConfig | None = None,
    loss: LossSpec | None = None,
    learning_rate: float | None = None,
    epochs: int = 100,
    mu: float = 0.0,
    groups=None,
    eval_data=None,
    theta0=None,
) -> DoroTrainResult:
    """Per-epoch dual-risk minimization for a linear classifier.

    Each epoch computes the sample losses, optionally drops the
    ``floor(eps_doro * n)`` largest (the ``*_doro`` methods), finds the
    optimal dual threshold on the survivors, and takes one gradient step on
    the dual at that threshold. Group labels are used for metrics only —
    training never sees them. ``eval_data`` is an optional
    ``(features, labels, groups)`` triple for the reported accuracies
    (defaults to the training data).
    """
    if method not in DRO_METHODS:
        raise StructuralError(f"method must be one of {DRO_METHODS}, got {method!r}")
    if method != "erm" and cfg is None:
        raise StructuralError(f"method {method!r} needs a RobustConfig")
    if epochs < 1:
        raise DomainError(f"epochs must be positive, got {epochs}")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise StructuralError("features must be n x d and labels length n")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise StructuralError("labels must be in {-1, +1}")
    _check_features(x)
    n, d = x.shape
    loss = loss if loss is not None else LossSpec.logistic()
    if method in ("cvar", "chisq") and cfg is not None and cfg.eps_doro != 0.0:
        raise StructuralError(f"method {method!r} must use eps_doro = 0")
    if learning_rate is None:
        scale = 1.0 if method == "erm" else cfg.c_coef
        learning_rate = 1.0 / (2.0 * (scale * loss.smoothness() + mu))
    if eval_data is None:
        eval_x, eval_y, eval_groups = x, y, groups
    else:
        eval_x = np.asarray(eval_data[0], dtype=float)
        eval_y = np.asarray(eval_data[1], dtype=float)
        eval_groups = eval_data[2] if len(eval_data) > 2 else None
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
    anchor = theta.copy()
    records = []
    use_cfg = cfg if cfg is not None else RobustConfig(alpha=0.5)
    eps = use_cfg.eps_doro if method in ("cvar_doro", "chisq_doro") else 0.0
    for epoch in range(1, epochs + 1):
        scores = x @ theta
        values = loss.value(scores, y)
        kept, _ = _filtered_indices(values, eps)
        sub = values[kept]
        if method == "erm":
            eta = 0.0
        elif method in ("cvar", "cvar_doro"):
            _, eta = cvar_risk(sub, None, use_cfg.alpha)
        else:
            _, eta = _brent_dual(
                sub, np.full(sub.size, 1.0 / sub.size), use_cfg.beta_star, use_cfg.c_coef
            )
        grad_w = _risk_gradient_weights(sub, eta, method, use_cfg)
        deriv = loss.deriv(scores[kept], y[kept])
        grad = x[kept].T @ (grad_w * deriv) + mu * (theta - anchor)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite gradient at epoch {epoch} (method={method}, "
                f"max |score| = {float(np.abs(scores).max()):.6g})"
            )
        theta = theta - learning_rate * grad
        train_loss = float(np.mean(loss.value(x @ theta, y)))
        avg_acc, worst_acc = _accuracy_metrics(eval_x @ theta, eval_y, eval_groups)
        records.append(
            EpochRecord(epoch=epoch, train_loss=train_loss, avg_acc=avg_acc, worst_acc=worst_acc)
        )
    return DoroTrainResult(theta=theta, records=tuple(records), method=method)


# ---------------------------------------------------------------------------
# max-margin direction
# ---------------------------------------------------------------------------


def max_margin_direction(
    features,
    labels,
    seed: int = 0,
    max_iters: int = 200_000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Unit vector maximizing the minimal margin ``min_i y_i <theta, x_i>``.

    Solves ``min ||theta||^2`` subject to ``y_i <theta, x_i> >= 1`` through
    its nonnegative dual by projected gradient ascent from a seed-fixed
    random start, then normalizes the primal solution. Raises if the data is
    not linearly separable (the margin program is infeasible).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise StructuralError("features must be n x d and labels length n")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise StructuralError("labels must be in {-1, +1}")
    a = y[:, np.newaxis] * x  # constraint rows: y_i x_i
    gram = a @ a.T
    lipschitz = float(np.linalg.eigvalsh(gram).max())
    if lipschitz <= 0.0:
        raise DomainError("data is not linearly separable (all margins vanish)")
    step = 1.0 / lipschitz
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    lam = rng.uniform(0.0, 1.0, size=x.shape[0])
    for _ in range(max_iters):
        new = np.maximum(0.0, lam + step * (1.0 - gram @ lam))
        if float(np.max(np.abs(new - lam))) <= tol * (1.0 + float(np.max(np.abs(lam)))):
            lam = new
            break
        lam = new
    theta = a.T @ lam
    norm = float(np.linalg.norm(theta))
    if norm <= 1e-9 * max(1.0, float(np.abs(lam).max())):
        raise DomainError("data is not linearly separable (dual is unbounded)")
    direction = theta / norm
    if float((a @ direction).min()) <= 1e-9:
        raise DomainError("data is not linearly separable (no positive-margin direction)")
    return direction
