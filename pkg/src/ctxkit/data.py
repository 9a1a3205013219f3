"""Tabular data ingestion, export, and seeded train/val/test splits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DomainError
from .jsonio import format_float
from .runtime import make_rng

__all__ = ["Dataset", "ingest_csv", "export_csv", "make_splits"]

DEFAULT_FRACTIONS = (0.7, 0.15, 0.15)
_FRACTION_TOL = 1e-9


@dataclass(frozen=True)
class Dataset:
    """Numeric samples with an optional target and optional group ids.

    Rows containing NaN in any used column are dropped at ingestion time and
    counted in ``n_dropped``. Group ids are integer codes; the original
    group values are kept in ``group_levels``.
    """

    features: np.ndarray
    target: np.ndarray | None = None
    groups: np.ndarray | None = None
    feature_names: tuple = ()
    target_name: str | None = None
    group_name: str | None = None
    group_levels: tuple = ()
    n_dropped: int = 0
    zscored: bool = False
    scale_info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise ConfigError("features must be a 2-D table")
        if not np.all(np.isfinite(feats)):
            raise ConfigError("features must be finite after ingestion")
        object.__setattr__(self, "features", feats)
        if self.target is not None:
            tgt = np.asarray(self.target, dtype=float)
            if tgt.shape != (feats.shape[0],):
                raise ConfigError("target length must match the number of rows")
            object.__setattr__(self, "target", tgt)
        if self.groups is not None:
            grp = np.asarray(self.groups, dtype=int)
            if grp.shape != (feats.shape[0],):
                raise ConfigError("groups length must match the number of rows")
            object.__setattr__(self, "groups", grp)
        if not self.feature_names:
            object.__setattr__(
                self,
                "feature_names",
                tuple(f"x{i}" for i in range(feats.shape[1])),
            )
        elif len(self.feature_names) != feats.shape[1]:
            raise ConfigError("one feature name per column required")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def ingest_csv(
    path,
    *,
    target: str | None = None,
    group: str | None = None,
    features: list | None = None,
    zscore: bool = False,
) -> Dataset:
    """Read a CSV into a :class:`Dataset`, preserving file row order.

    ``features`` selects the feature columns (default: every numeric column
    that is not the target or the group). Rows with NaN in any used column
    are dropped and counted. With ``zscore`` each feature column is centered
    and scaled by its standard deviation (constant columns are only
    centered).
    """
    try:
        # the default float parser is fast but not correctly rounded, which
        # would break export/ingest bit-identity
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if frame.shape[0] == 0:
        raise ConfigError(f"{path} has no data rows")

    for name, role in ((target, "target"), (group, "group")):
        if name is not None and name not in frame.columns:
            raise ConfigError(f"{role} column {name!r} not in {list(frame.columns)}")

    if features is None:
        numeric = frame.select_dtypes(include=[np.number]).columns
        features = [c for c in numeric if c not in (target, group)]
    else:
        missing = [c for c in features if c not in frame.columns]
        if missing:
            raise ConfigError(f"feature columns {missing} not in {list(frame.columns)}")
    if not features:
        raise ConfigError("no feature columns selected")

    used = list(features) + [c for c in (target, group) if c is not None]
    keep = ~frame[used].isna().any(axis=1)
    n_dropped = int((~keep).sum())
    frame = frame.loc[keep]
    if frame.shape[0] == 0:
        raise ConfigError("every row was dropped for NaN values")

    try:
        feats = frame[features].to_numpy(dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"feature columns are not numeric: {exc}") from exc

    scale_info: dict = {}
    if zscore:
        mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        safe = np.where(std > 0.0, std, 1.0)
        feats = (feats - mean) / safe
        scale_info = {
            "mean": [float(v) for v in mean],
            "std": [float(v) for v in safe],
        }

    tgt = None
    if target is not None:
        try:
            tgt = frame[target].to_numpy(dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"target column is not numeric: {exc}") from exc

    grp = None
    levels: tuple = ()
    if group is not None:
        raw = frame[group].to_numpy()
        uniques = sorted(set(raw.tolist()))
        index = {v: i for i, v in enumerate(uniques)}
        grp = np.array([index[v] for v in raw], dtype=int)
        levels = tuple(str(v) for v in uniques)

    return Dataset(
        features=feats,
        target=tgt,
        groups=grp,
        feature_names=tuple(str(c) for c in features),
        target_name=target,
        group_name=group,
        group_levels=levels,
        n_dropped=n_dropped,
        zscored=zscore,
        scale_info=scale_info,
    )


def export_csv(dataset: Dataset, path) -> None:
    """Write the dataset back to CSV; floats round-trip bit-identically."""
    columns = list(dataset.feature_names)
    cells = [
        [format_float(v) for v in row] for row in dataset.features
    ]
    if dataset.target is not None:
        columns.append(dataset.target_name or "target")
        for row, value in zip(cells, dataset.target):
            row.append(format_float(value))
    if dataset.groups is not None:
        columns.append(dataset.group_name or "group")
        for row, code in zip(cells, dataset.groups):
            row.append(
                dataset.group_levels[code] if dataset.group_levels else str(int(code))
            )
    lines = [",".join(columns)]
    lines.extend(",".join(row) for row in cells)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def check_fractions(fractions) -> tuple:
    """Validate a train/val/test fraction triple."""
    fracs = tuple(float(f) for f in fractions)
    if len(fracs) != 3:
        raise DomainError(f"need exactly three split fractions, got {len(fracs)}")
    if any(f < 0.0 for f in fracs):
        raise DomainError(f"split fractions must be nonnegative, got {fracs}")
    if abs(sum(fracs) - 1.0) > _FRACTION_TOL:
        raise DomainError(f"split fractions must sum to 1, got {sum(fracs)!r}")
    return fracs


def make_splits(n: int, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> dict:
    """Seeded disjoint train/val/test index sets that partition ``range(n)``.

    Returns a dict with keys ``train``, ``val``, ``test``, ``other`` (the
    last always empty) so it can be saved in the shared splits-file format.
    """
    if n < 1:
        raise DomainError(f"need at least one sample, got {n}")
    fracs = check_fractions(fractions)
    order = make_rng(seed).permutation(n)
    cut1 = round(fracs[0] * n)
    cut2 = round((fracs[0] + fracs[1]) * n)
    return {
        "train": np.sort(order[:cut1]),
        "val": np.sort(order[cut1:cut2]),
        "test": np.sort(order[cut2:]),
        "other": np.array([], dtype=int),
    }
