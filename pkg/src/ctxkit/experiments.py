"""Experiment configuration, batch runners, and deterministic report files.

Each runner consumes one :class:`ExperimentConfig`, executes a single study
end to end (build inputs, compute, write reports into an output directory),
and returns the summary dictionary that was written to ``summary.json``.
Floating-point values are serialized through a fixed 17-digit encoding so two
runs with the same config and seed produce byte-identical reports.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .context import context_spectrum, dual_kernel, make_context, standardize_kernel
from .complexity import (
    MASKING_STYLES,
    kappa_brute,
    kappa_masking_analytic,
    kappa_percentile,
)
from .data import DEFAULT_FRACTIONS, check_fractions, ingest_csv, make_splits
from .errors import ConfigError, CtxkitError, NumericalError
from .evaluate import MetricConfig, learn_contexture, tau_metric
from .jsonio import dump_path, format_float
from .linalg import linear_probe, weighted_sym_eig
from .mixing import (
    MixWeights,
    choose_concat_dims,
    concatenate,
    convex_combine,
    convolve,
    minimax_hedge,
)
from .robust import (
    DRO_METHODS,
    GRW_METHODS,
    LossSpec,
    RobustConfig,
    doro_train,
    grw_train,
    normalize_features,
)
from .runtime import make_rng, thread_cap
from .stkr import (
    SemiSupProblem,
    graph_base_kernel,
    label_prop,
    load_edge_list,
    stkr_prop_inverse,
    stkr_prop_simple_s,
)

__all__ = [
    "ExperimentConfig",
    "SUBCOMMANDS",
    "load_config",
    "run_experiment",
    "write_csv",
]

SUBCOMMANDS = (
    "spectrum",
    "tau",
    "probe",
    "mix",
    "stkr",
    "labelprop",
    "grw",
    "doro",
    "kappa",
)

_CONFIG_KEYS = {
    "seed",
    "seeds",
    "fractions",
    "context",
    "contexts",
    "mix",
    "predictor",
    "data",
    "training",
    "graph",
    "kappa",
    "out",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a seed, split fractions, and per-stage recipes."""

    seed: int = 0
    seeds: tuple = ()
    fractions: tuple = DEFAULT_FRACTIONS
    context: dict | None = None
    contexts: tuple = ()
    mix: dict | None = None
    predictor: dict | None = None
    data: dict | None = None
    training: dict | None = None
    graph: dict | None = None
    kappa: dict | None = None
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        seeds = raw.get("seeds", ())
        if seeds and (
            not isinstance(seeds, list)
            or any(not isinstance(s, int) or isinstance(s, bool) for s in seeds)
        ):
            raise ConfigError("seeds must be a list of integers")
        if isinstance(seeds, list) and len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be distinct")
        try:
            fractions = check_fractions(raw.get("fractions", DEFAULT_FRACTIONS))
        except CtxkitError as exc:
            raise ConfigError(str(exc)) from exc
        contexts = raw.get("contexts", ())
        if contexts and (
            not isinstance(contexts, list)
            or any(not isinstance(c, dict) for c in contexts)
        ):
            raise ConfigError("contexts must be a list of recipe objects")
        for key in ("context", "mix", "predictor", "data", "training", "graph", "kappa"):
            value = raw.get(key)
            if value is not None and not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
        return cls(
            seed=seed,
            seeds=tuple(seeds),
            fractions=fractions,
            context=raw.get("context"),
            contexts=tuple(contexts),
            mix=raw.get("mix"),
            predictor=raw.get("predictor"),
            data=raw.get("data"),
            training=raw.get("training"),
            graph=raw.get("graph"),
            kappa=raw.get("kappa"),
            out=raw.get("out"),
        )


def load_config(path) -> ExperimentConfig:
    """Read and validate an experiment config JSON file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def write_csv(path, header, rows) -> None:
    """Write a CSV with deterministic float formatting."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, (bool, np.bool_)):
                cells.append("true" if value else "false")
            elif isinstance(value, (int, np.integer)):
                cells.append(str(int(value)))
            elif isinstance(value, (float, np.floating)):
                cells.append(format_float(float(value)))
            else:
                cells.append(str(value))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@contextmanager
def _stage(name: str):
    """Re-raise module errors with the failing pipeline stage named."""
    try:
        yield
    except ConfigError as exc:
        raise ConfigError(f"stage {name!r}: {exc}") from exc
    except CtxkitError as exc:
        raise type(exc)(f"stage {name!r}: {exc}") from exc
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"stage {name!r}: {exc}") from exc


def _require(recipe: dict, key: str, where: str):
    if key not in recipe:
        raise ConfigError(f"{where} needs {key!r}")
    return recipe[key]


def _jsonable(value):
    """Convert numpy containers and scalars to plain JSON-ready values."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


# ---------------------------------------------------------------------------
# recipe builders
# ---------------------------------------------------------------------------


def _recipe_matrix(recipe: dict, rng, where: str) -> np.ndarray:
    """Sample points for data-driven contexts: a CSV or a seeded Gaussian."""
    if "csv" in recipe:
        csv = recipe["csv"]
        dataset = ingest_csv(
            _require(csv, "path", f"{where}.csv"),
            features=csv.get("features"),
            zscore=bool(csv.get("zscore", False)),
        )
        return dataset.features
    n = int(_require(recipe, "n", where))
    dim = int(recipe.get("dim", 2))
    if n < 1 or dim < 1:
        raise ConfigError(f"{where} needs positive n and dim")
    return rng.standard_normal((n, dim))


def _build_context(recipe: dict, rng, where: str = "context"):
    kind = _require(recipe, "kind", where)
    if kind == "classification":
        if "labels" in recipe:
            labels = list(recipe["labels"])
        else:
            classes = int(_require(recipe, "classes", where))
            per_class = int(_require(recipe, "per_class", where))
            if classes < 1 or per_class < 1:
                raise ConfigError(f"{where} needs positive classes and per_class")
            labels = [c for c in range(classes) for _ in range(per_class)]
        return make_context("classification", labels=labels, px=recipe.get("px"))
    if kind == "knn":
        data = _recipe_matrix(recipe, rng, where)
        return make_context("knn", data=data, k=int(_require(recipe, "k", where)))
    if kind == "rbf":
        data = _recipe_matrix(recipe, rng, where)
        return make_context(
            "rbf", data=data, gamma=float(_require(recipe, "gamma", where))
        )
    if kind == "masking":
        return make_context(
            "masking",
            d_x=int(_require(recipe, "d_x", where)),
            alpha=float(_require(recipe, "alpha", where)),
            style=recipe.get("style", "random"),
        )
    if kind == "graph":
        return make_context("graph", adjacency=_build_graph(recipe, rng, where))
    raise ConfigError(f"{where} has unknown kind {kind!r}")


def _build_graph(recipe: dict, rng, where: str = "graph") -> np.ndarray:
    """Adjacency from an edge-list file, an inline matrix, or a seeded SBM."""
    if "edges" in recipe:
        w = load_edge_list(recipe["edges"], n_nodes=recipe.get("n_nodes"))
    elif "adjacency" in recipe:
        w = np.asarray(recipe["adjacency"], dtype=float)
    elif recipe.get("model") == "sbm":
        sizes = [int(s) for s in _require(recipe, "sizes", where)]
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError(f"{where} needs positive block sizes")
        p_in = float(_require(recipe, "p_in", where))
        p_out = float(_require(recipe, "p_out", where))
        if not (0.0 <= p_out <= p_in <= 1.0):
            raise ConfigError(f"{where} needs 0 <= p_out <= p_in <= 1")
        blocks = np.repeat(np.arange(len(sizes)), sizes)
        probs = np.where(blocks[:, None] == blocks[None, :], p_in, p_out)
        n = blocks.size
        upper = np.triu(rng.random((n, n)) < probs, k=1).astype(float)
        w = upper + upper.T
    else:
        raise ConfigError(f"{where} needs 'edges', 'adjacency', or model 'sbm'")
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ConfigError(f"{where} adjacency must be square")
    return w


def _build_target(recipe: dict, spectrum, rng, where: str = "target") -> np.ndarray:
    kind = _require(recipe, "kind", where)
    if kind == "values":
        values = np.asarray(_require(recipe, "values", where), dtype=float)
        if values.shape != (spectrum.n,):
            raise ConfigError(
                f"{where} values must have length {spectrum.n}, got {values.shape}"
            )
        return values
    if kind == "eigenfunction_mix":
        coeffs = np.asarray(_require(recipe, "coeffs", where), dtype=float)
        start = 1 if spectrum.has_constant_top else 0
        available = spectrum.functions.shape[1] - start
        if coeffs.ndim != 1 or not 1 <= coeffs.size <= available:
            raise ConfigError(
                f"{where} needs between 1 and {available} coefficients"
            )
        columns = spectrum.functions[:, start : start + coeffs.size]
        target = columns @ coeffs
        noise = float(recipe.get("noise", 0.0))
        if noise < 0.0:
            raise ConfigError(f"{where} noise must be nonnegative")
        if noise > 0.0:
            target = target + noise * rng.standard_normal(spectrum.n)
        return target
    raise ConfigError(f"{where} has unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# training-task builders
# ---------------------------------------------------------------------------


def _group_ids_from_sizes(sizes, n: int, where: str) -> np.ndarray:
    sizes = [int(s) for s in sizes]
    if sum(sizes) != n or any(s < 1 for s in sizes):
        raise ConfigError(f"{where} group_sizes must be positive and sum to {n}")
    return np.repeat(np.arange(len(sizes)), sizes)


def _training_data(recipe: dict | None, seed: int):
    """Features, labels, optional groups, and an audit dict for the report."""
    if recipe is None:
        raise ConfigError("a 'data' recipe is required")
    kind = _require(recipe, "kind", "data")
    if kind == "csv":
        dataset = ingest_csv(
            _require(recipe, "path", "data"),
            target=_require(recipe, "target", "data"),
            group=recipe.get("group"),
            features=recipe.get("features"),
            zscore=bool(recipe.get("zscore", False)),
        )
        x = normalize_features(dataset.features)
        meta = {"n": dataset.n, "n_dropped": dataset.n_dropped}
        return x, dataset.target, dataset.groups, meta
    rng = make_rng(seed)
    if kind == "two_gaussians":
        n_major = int(recipe.get("n_major", 160))
        n_minor = int(recipe.get("n_minor", 40))
        dim = int(recipe.get("dim", 5))
        if n_major < 1 or n_minor < 1 or dim < 1:
            raise ConfigError("data needs positive n_major, n_minor, dim")
        sep = float(recipe.get("sep", 0.5))
        noise = float(recipe.get("noise", 0.35))
        flip = float(recipe.get("flip_frac", 0.0))
        if not 0.0 <= flip < 1.0:
            raise ConfigError("data flip_frac must be in [0, 1)")
        mu = rng.standard_normal(dim)
        mu /= np.linalg.norm(mu)
        x = np.vstack(
            [
                sep * mu + noise * rng.standard_normal((n_major, dim)),
                -sep * mu + noise * rng.standard_normal((n_minor, dim)),
            ]
        )
        y = np.array([1.0] * n_major + [-1.0] * n_minor)
        groups = np.array([0] * n_major + [1] * n_minor)
        if flip > 0.0:
            n_flip = int(flip * y.size)
            idx = rng.choice(y.size, size=n_flip, replace=False)
            y[idx] *= -1.0
        meta = {"n": int(y.size), "n_flipped": int(flip * y.size)}
        return normalize_features(x), y, groups, meta
    if kind == "gaussian_regression":
        n = int(recipe.get("n", 6))
        dim = int(recipe.get("dim", 50))
        if n < 1 or dim < 1:
            raise ConfigError("data needs positive n and dim")
        x = normalize_features(rng.standard_normal((n, dim)))
        y = rng.standard_normal(n)
        groups = None
        if "group_sizes" in recipe:
            groups = _group_ids_from_sizes(recipe["group_sizes"], n, "data")
        return x, y, groups, {"n": n}
    raise ConfigError(f"data has unknown kind {kind!r}")


_TRAINING_KEYS = {
    "method",
    "alpha",
    "eps",
    "nu",
    "lr",
    "epochs",
    "reg",
    "seed",
    "loss",
    "weights",
    "theta0_scale",
}

_LOSS_BUILDERS = {
    "squared": LossSpec.squared,
    "logistic": LossSpec.logistic,
}


@dataclass(frozen=True)
class TrainingPlan:
    method: str
    loss: LossSpec
    robust: RobustConfig | None
    nu: float
    lr: float | None
    epochs: int
    reg: float
    seed: int
    weights: np.ndarray | None
    theta0_scale: float


def _parse_training(
    recipe: dict | None, *, allowed, default_loss: str, default_seed: int
) -> TrainingPlan:
    if recipe is None:
        raise ConfigError("a 'training' recipe is required")
    unknown = set(recipe) - _TRAINING_KEYS
    if unknown:
        raise ConfigError(f"unknown training keys {sorted(unknown)}")
    method = _require(recipe, "method", "training")
    if method not in allowed:
        raise ConfigError(f"training.method must be one of {sorted(allowed)}")
    loss_name = recipe.get("loss", default_loss)
    if loss_name not in _LOSS_BUILDERS:
        raise ConfigError(f"training.loss must be one of {sorted(_LOSS_BUILDERS)}")
    eps = float(recipe.get("eps", 0.0))
    robust = None
    if method in ("cvar", "chisq", "cvar_doro", "chisq_doro"):
        if "alpha" not in recipe:
            raise ConfigError(f"training.method {method!r} needs 'alpha'")
        if method in ("cvar", "chisq") and eps != 0.0:
            raise ConfigError(f"training.method {method!r} requires eps = 0")
        beta_cr = np.inf if method.startswith("cvar") else 2.0
        try:
            robust = RobustConfig(
                alpha=float(recipe["alpha"]), beta_cr=beta_cr, eps_doro=eps
            )
        except CtxkitError as exc:
            raise ConfigError(f"training: {exc}") from exc
    epochs = recipe.get("epochs", 100)
    if not isinstance(epochs, int) or isinstance(epochs, bool) or epochs < 1:
        raise ConfigError(f"training.epochs must be a positive integer, got {epochs!r}")
    lr = recipe.get("lr")
    if lr is not None and float(lr) <= 0.0:
        raise ConfigError(f"training.lr must be positive, got {lr!r}")
    reg = float(recipe.get("reg", 0.0))
    if reg < 0.0:
        raise ConfigError(f"training.reg must be nonnegative, got {reg!r}")
    nu = float(recipe.get("nu", 1.0))
    weights = recipe.get("weights")
    if weights is not None:
        if method != "iw":
            raise ConfigError("training.weights is only valid for method 'iw'")
        weights = np.asarray(weights, dtype=float)
    elif method == "iw":
        raise ConfigError("training.method 'iw' needs 'weights'")
    theta0_scale = float(recipe.get("theta0_scale", 0.01))
    seed = recipe.get("seed", default_seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"training.seed must be an integer, got {seed!r}")
    return TrainingPlan(
        method=method,
        loss=_LOSS_BUILDERS[loss_name](),
        robust=robust,
        nu=nu,
        lr=None if lr is None else float(lr),
        epochs=epochs,
        reg=reg,
        seed=seed,
        weights=weights,
        theta0_scale=theta0_scale,
    )


def _accuracy(scores: np.ndarray, labels: np.ndarray, groups) -> tuple:
    """Sign-agreement average and worst-group accuracy."""
    hits = (scores >= 0.0) == (labels >= 0.0)
    avg = float(hits.mean())
    if groups is None:
        return avg, avg
    worst = min(float(hits[groups == g].mean()) for g in np.unique(groups))
    return avg, worst


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def _run_spectrum(cfg: ExperimentConfig, out: Path) -> dict:
    if cfg.context is None:
        raise ConfigError("spectrum needs a 'context' recipe")
    rng = make_rng(cfg.seed)
    with _stage("context"):
        ctx = _build_context(cfg.context, rng)
    top = (cfg.predictor or {}).get("top")
    with _stage("spectrum"):
        spec = context_spectrum(ctx, k=top)
    write_csv(
        out / "spectrum.csv",
        ["i", "s_sq"],
        [(i, float(v)) for i, v in enumerate(spec.eigenvalues)],
    )
    return {
        "n": ctx.n,
        "m": ctx.m,
        "modes": int(spec.k),
        "eigenvalues": [float(v) for v in spec.eigenvalues],
    }


def _run_tau(cfg: ExperimentConfig, out: Path) -> dict:
    if cfg.context is None:
        raise ConfigError("tau needs a 'context' recipe")
    rng = make_rng(cfg.seed)
    pred = cfg.predictor or {}
    try:
        metric_cfg = MetricConfig(
            beta=float(pred.get("beta", 1.0)), d0=int(pred.get("d0", 512))
        )
    except CtxkitError as exc:
        raise ConfigError(f"predictor: {exc}") from exc
    with _stage("context"):
        ctx = _build_context(cfg.context, rng)
    with _stage("spectrum"):
        spec = context_spectrum(ctx)
    with _stage("tau"):
        result = tau_metric(spec, metric_cfg)
    write_csv(out / "tau.csv", ["d", "tau"], [(d, t) for d, t in result.taus])
    return {
        "d_star": result.d_star,
        "tau_star": float(result.tau_star) if np.isfinite(result.tau_star) else None,
        "abstain": bool(result.abstain),
        "beta": float(result.beta),
        "d0": int(result.d0),
    }


def _run_probe(cfg: ExperimentConfig, out: Path) -> dict:
    if cfg.context is None:
        raise ConfigError("probe needs a 'context' recipe")
    pred = cfg.predictor or {}
    if "target" not in pred:
        raise ConfigError("probe needs predictor.target")
    rng = make_rng(cfg.seed)
    with _stage("context"):
        ctx = _build_context(cfg.context, rng)
    with _stage("spectrum"):
        spec = context_spectrum(ctx)
    with _stage("target"):
        target = _build_target(pred["target"], spec, rng)
    start = 1 if spec.has_constant_top else 0
    usable = spec.functions.shape[1] - start
    dims = pred.get("dims", list(range(1, min(usable, 8) + 1)))
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 or d > usable for d in dims):
        raise ConfigError(f"probe dims must lie in [1, {usable}]")
    rows = []
    with _stage("probe"):
        for d in dims:
            enc = learn_contexture(spec, d)
            fit = linear_probe(enc.values, target, ctx.px)
            rows.append((d, float(fit.weighted_mse)))
    write_csv(out / "probe.csv", ["d", "error"], rows)
    best_d, best_err = min(rows, key=lambda item: item[1])
    return {
        "dims": dims,
        "best_d": int(best_d),
        "best_error": float(best_err),
    }


_MIX_OPS = ("convolve", "convex", "hedge", "concat")


def _run_mix(cfg: ExperimentConfig, out: Path) -> dict:
    if not cfg.contexts:
        raise ConfigError("mix needs a 'contexts' list")
    mix = cfg.mix or {}
    op = mix.get("op")
    if op not in _MIX_OPS:
        raise ConfigError(f"mix.op must be one of {_MIX_OPS}")
    rng = make_rng(cfg.seed)
    shared = None
    if "shared_data" in mix:
        shared = _recipe_matrix(mix["shared_data"], rng, "mix.shared_data")
    contexts = []
    with _stage("context"):
        for i, recipe in enumerate(cfg.contexts):
            where = f"contexts[{i}]"
            if shared is not None and recipe.get("kind") in ("knn", "rbf"):
                recipe = dict(recipe, n=shared.shape[0], dim=shared.shape[1])
                contexts.append(_build_context(recipe, _FixedData(shared), where))
            else:
                contexts.append(_build_context(recipe, rng, where))
    with _stage("kernels"):
        duals = [dual_kernel(ctx) for ctx in contexts]

    if op == "concat":
        # dimension choice and encoder learning work on the raw spectra,
        # whose constant top mode marks the baseline; centering would
        # remove it
        threshold = float(mix.get("threshold", 0.1))
        with _stage("concat"):
            spectra = [weighted_sym_eig(k) for k in duals]
            dims = choose_concat_dims(spectra, threshold)
            encoders = [
                learn_contexture(spec, max(d, 1)) for spec, d in zip(spectra, dims)
            ]
            combined = concatenate(encoders)
        return {
            "op": op,
            "dims": [int(d) for d in dims],
            "total_d": int(combined.d),
        }

    with _stage("kernels"):
        kernels = [standardize_kernel(k) for k in duals]
    summary: dict = {"op": op, "inputs": len(kernels)}
    if op == "convolve":
        with _stage("mix"):
            mixed = convolve(kernels)
    elif op == "convex":
        weights = mix.get("weights")
        if weights is None:
            raise ConfigError("mix.op 'convex' needs 'weights'")
        with _stage("mix"):
            mixed = convex_combine(kernels, MixWeights(np.asarray(weights, float)))
        summary["weights"] = [float(v) for v in weights]
    else:  # hedge
        d = int(mix.get("d", 1))
        steps = int(mix.get("steps", 100))
        with _stage("hedge"):
            played = minimax_hedge(
                kernels,
                d,
                steps,
                loss_bound=mix.get("loss_bound"),
                seed=cfg.seed,
            )
            mixed = convex_combine(kernels, MixWeights(played.w))
        write_csv(
            out / "weights.csv",
            ["step"] + [f"w{i}" for i in range(len(kernels))],
            [
                (step, *[float(v) for v in w])
                for step, w in enumerate(played.trajectory)
            ],
        )
        summary["weights"] = [float(v) for v in played.w]
        summary["game_value"] = float(played.game_value)
        summary["certificate"] = _jsonable(played.certificate)
    with _stage("spectrum"):
        spec = weighted_sym_eig(mixed)
    write_csv(
        out / "spectrum.csv",
        ["i", "s_sq"],
        [(i, float(v)) for i, v in enumerate(spec.eigenvalues)],
    )
    summary["eigenvalues"] = [float(v) for v in spec.eigenvalues[:16]]
    return summary


class _FixedData:
    """Stand-in rng whose standard_normal returns preset points."""

    def __init__(self, data: np.ndarray):
        self._data = data

    def standard_normal(self, shape):
        if tuple(shape) != self._data.shape:
            raise ConfigError(
                f"shared data has shape {self._data.shape}, recipe wants {shape}"
            )
        return self._data


def _graph_problem(cfg: ExperimentConfig, rng):
    """Adjacency, labeled-first permutation, labels, and the Gram matrix."""
    if cfg.graph is None:
        raise ConfigError("a 'graph' recipe is required")
    with _stage("graph"):
        w = _build_graph(cfg.graph, rng)
        if np.any(w.sum(axis=1) <= 0.0):
            raise ConfigError("graph has isolated nodes; connect or drop them first")
    labeled = np.asarray(_require(cfg.graph, "labeled", "graph"), dtype=int)
    y = np.asarray(_require(cfg.graph, "y", "graph"), dtype=float)
    n_nodes = w.shape[0]
    if labeled.ndim != 1 or labeled.size < 1 or y.shape != labeled.shape:
        raise ConfigError("graph.labeled and graph.y must be equal-length lists")
    if np.unique(labeled).size != labeled.size:
        raise ConfigError("graph.labeled must not repeat nodes")
    if labeled.min() < 0 or labeled.max() >= n_nodes:
        raise ConfigError(f"graph.labeled indices must lie in [0, {n_nodes})")
    rest = np.setdiff1d(np.arange(n_nodes), labeled)
    order = np.concatenate([labeled, rest])
    return w, order, y


def _run_stkr(cfg: ExperimentConfig, out: Path) -> dict:
    rng = make_rng(cfg.seed)
    w, order, y = _graph_problem(cfg, rng)
    pred = cfg.predictor or {}
    transform = pred.get("transform")
    if not isinstance(transform, dict) or "kind" not in transform:
        raise ConfigError("stkr needs predictor.transform with a 'kind'")
    w_perm = w[np.ix_(order, order)]
    with _stage("kernel"):
        gram, kept = graph_base_kernel(w_perm)
    with _stage("solve"):
        prob = SemiSupProblem(
            gram=gram, y=y, beta=pred.get("beta"), indefinite_ok=True
        )
        eps = float(pred.get("eps", 1e-6))
        max_iters = int(pred.get("max_iters", 50_000))
        gamma = pred.get("gamma")
        kind = transform["kind"]
        if kind == "poly":
            result = stkr_prop_simple_s(
                prob,
                _require(transform, "pi", "transform"),
                gamma=gamma,
                eps=eps,
                max_iters=max_iters,
            )
        elif kind == "inverse":
            result = stkr_prop_inverse(
                prob,
                _require(transform, "xi", "transform"),
                int(_require(transform, "r", "transform")),
                gamma=gamma,
                eps=eps,
                max_iters=max_iters,
            )
        elif kind == "inverse_laplacian":
            eta = float(_require(transform, "eta", "transform"))
            result = stkr_prop_inverse(
                prob, (1.0, -eta), 1, gamma=gamma, eps=eps, max_iters=max_iters
            )
        else:
            raise ConfigError(f"unknown transform kind {kind!r}")
        scores_perm = result.predict(gram)
    scores = np.empty(w.shape[0])
    scores[order] = scores_perm
    write_csv(
        out / "predictions.csv",
        ["node", "score"],
        [(int(i), float(s)) for i, s in enumerate(scores)],
    )
    return {
        "transform": transform["kind"],
        "n_labeled": int(y.size),
        "n_nodes": int(w.shape[0]),
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "residual_norm": float(result.residual_norm),
        "gamma": float(result.gamma),
        "beta": float(prob.beta),
    }


def _run_labelprop(cfg: ExperimentConfig, out: Path) -> dict:
    rng = make_rng(cfg.seed)
    w, order, y = _graph_problem(cfg, rng)
    eta = float((cfg.predictor or {}).get("eta", 0.5))
    with _stage("labelprop"):
        scores_perm = label_prop(w[np.ix_(order, order)], y, eta)
    scores = np.empty(w.shape[0])
    scores[order] = scores_perm
    write_csv(
        out / "predictions.csv",
        ["node", "score"],
        [(int(i), float(s)) for i, s in enumerate(scores)],
    )
    return {"eta": eta, "n_labeled": int(y.size), "n_nodes": int(w.shape[0])}


def _run_grw(cfg: ExperimentConfig, out: Path) -> dict:
    plan = _parse_training(
        cfg.training, allowed=GRW_METHODS, default_loss="squared",
        default_seed=cfg.seed,
    )
    with _stage("data"):
        x, y, groups, meta = _training_data(cfg.data, plan.seed)
    if plan.method == "gdro" and groups is None:
        raise ConfigError("training.method 'gdro' needs grouped data")
    if plan.weights is not None and plan.weights.shape != (x.shape[0],):
        raise ConfigError(
            f"training.weights must have length {x.shape[0]}, "
            f"got {plan.weights.shape[0]}"
        )
    with _stage("train"):
        result = grw_train(
            x,
            y,
            method=plan.method,
            loss=plan.loss,
            sample_weights=plan.weights,
            groups=groups if plan.method == "gdro" else None,
            nu=plan.nu,
            learning_rate=plan.lr,
            mu=plan.reg,
            epochs=plan.epochs,
            trace=True,
        )
    rows = []
    for epoch, theta in enumerate(result.theta_trace, start=1):
        avg, worst = _accuracy(x @ theta, y, groups)
        rows.append((epoch, float(result.risk_history[epoch - 1]), avg, worst))
    write_csv(out / "epochs.csv", ["epoch", "train_loss", "avg_acc", "worst_acc"], rows)
    return {
        "method": plan.method,
        "epochs": plan.epochs,
        "final_loss": float(result.risk_history[-1]),
        "theta_norm": float(np.linalg.norm(result.theta)),
        "data": meta,
    }


def _run_doro(cfg: ExperimentConfig, out: Path) -> dict:
    plan = _parse_training(
        cfg.training, allowed=DRO_METHODS, default_loss="logistic",
        default_seed=cfg.seed,
    )
    with _stage("data"):
        x, y, groups, meta = _training_data(cfg.data, plan.seed)
    theta0 = plan.theta0_scale * make_rng(plan.seed).standard_normal(x.shape[1])
    with _stage("train"):
        result = doro_train(
            x,
            y,
            method=plan.method,
            cfg=plan.robust,
            loss=plan.loss,
            learning_rate=plan.lr,
            epochs=plan.epochs,
            mu=plan.reg,
            groups=groups,
            theta0=theta0,
        )
    write_csv(
        out / "epochs.csv",
        ["epoch", "train_loss", "avg_acc", "worst_acc"],
        [
            (r.epoch, float(r.train_loss), float(r.avg_acc), float(r.worst_acc))
            for r in result.records
        ],
    )
    last = result.records[-1]
    return {
        "method": plan.method,
        "epochs": plan.epochs,
        "alpha": None if plan.robust is None else float(plan.robust.alpha),
        "eps": None if plan.robust is None else float(plan.robust.eps_doro),
        "final_loss": float(last.train_loss),
        "final_avg_acc": float(last.avg_acc),
        "final_worst_acc": float(last.worst_acc),
        "data": meta,
    }


def _run_kappa(cfg: ExperimentConfig, out: Path) -> dict:
    recipe = cfg.kappa
    if recipe is None:
        raise ConfigError("kappa needs a 'kappa' recipe")
    style = recipe.get("style", "random")
    if style not in MASKING_STYLES:
        raise ConfigError(f"kappa.style must be one of {MASKING_STYLES}")
    d_x = int(_require(recipe, "d_x", "kappa"))
    if "alphas" in recipe:
        alphas = [float(a) for a in recipe["alphas"]]
    else:
        alphas = [float(_require(recipe, "alpha", "kappa"))]
    if not alphas:
        raise ConfigError("kappa needs at least one alpha")
    brute = bool(recipe.get("brute", False))
    percentile = recipe.get("percentile")
    if percentile is not None and (
        not isinstance(percentile, dict)
        or "q" not in percentile
        or "n_samples" not in percentile
    ):
        raise ConfigError("kappa.percentile needs 'q' and 'n_samples'")
    rows = []
    estimates = []
    for alpha in alphas:
        with _stage("analytic"):
            est = kappa_masking_analytic(d_x, alpha, style)
        rows.append((alpha, est.method, est.kappa_sq, est.is_bound, est.samples_used))
        estimates.append(
            {"alpha": alpha, "method": est.method, "kappa_sq": est.kappa_sq,
             "is_bound": est.is_bound}
        )
        if brute or percentile is not None:
            with _stage("context"):
                ctx = make_context("masking", d_x=d_x, alpha=alpha, style=style)
            if brute:
                with _stage("brute"):
                    est = kappa_brute(ctx)
                rows.append(
                    (alpha, est.method, est.kappa_sq, est.is_bound, est.samples_used)
                )
                estimates.append(
                    {"alpha": alpha, "method": est.method, "kappa_sq": est.kappa_sq,
                     "is_bound": est.is_bound}
                )
            if percentile is not None:
                with _stage("percentile"):
                    est = kappa_percentile(
                        ctx,
                        float(percentile["q"]),
                        int(percentile["n_samples"]),
                        seed=cfg.seed,
                    )
                rows.append(
                    (alpha, est.method, est.kappa_sq, est.is_bound, est.samples_used)
                )
                estimates.append(
                    {"alpha": alpha, "method": est.method, "kappa_sq": est.kappa_sq,
                     "is_bound": est.is_bound, "low_precision": est.low_precision}
                )
    write_csv(
        out / "kappa.csv",
        ["alpha", "method", "kappa_sq", "is_bound", "samples_used"],
        rows,
    )
    return {"style": style, "d_x": d_x, "estimates": estimates}


_RUNNERS = {
    "spectrum": _run_spectrum,
    "tau": _run_tau,
    "probe": _run_probe,
    "mix": _run_mix,
    "stkr": _run_stkr,
    "labelprop": _run_labelprop,
    "grw": _run_grw,
    "doro": _run_doro,
    "kappa": _run_kappa,
}


def _single_run(name: str, cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    body = _RUNNERS[name](cfg, out)
    summary = {"subcommand": name, "seed": cfg.seed, **body}
    dump_path(summary, out / "summary.json")
    return summary


def run_experiment(name: str, cfg: ExperimentConfig, out_dir) -> dict:
    """Execute one subcommand; with ``seeds`` set, sweep them in parallel.

    Parallel sweeps run one thread per seed up to the cap from
    ``CTXKIT_THREADS``; each seed writes into ``out_dir/seed_<s>/`` and the
    top-level summary indexes the runs.
    """
    if name not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {name!r}; choose from {SUBCOMMANDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.seeds:
        sub = {
            s: dataclasses.replace(cfg, seed=s, seeds=()) for s in cfg.seeds
        }
        with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
            futures = {
                s: pool.submit(_single_run, name, sub[s], out / f"seed_{s}")
                for s in cfg.seeds
            }
            runs = {s: future.result() for s, future in futures.items()}
        summary = {
            "subcommand": name,
            "sweep_seeds": sorted(cfg.seeds),
            "runs": [
                {"seed": s, "dir": f"seed_{s}", "summary": runs[s]}
                for s in sorted(cfg.seeds)
            ],
        }
        dump_path(summary, out / "summary.json")
        return summary
    return _single_run(name, cfg, out)
