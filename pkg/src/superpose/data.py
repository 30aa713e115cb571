"""SFRC beam dataset: CSV ingestion, diagnostics, partitions, splits, synthetic data."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IngestionError

FEATURES = ("b_width", "d_eff", "fc", "a_over_d", "rho", "df_agg", "Vf", "lf_over_df", "ff")
TARGET = "Vu"

UNITS = {"b_width": "mm", "d_eff": "mm", "fc": "MPa", "a_over_d": "-", "rho": "-",
         "df_agg": "mm", "Vf": "%", "lf_over_df": "-", "ff": "MPa", "Vu": "kN"}

# Observed (min, max) of the 213-beam compilation, used by the synthetic generator.
RANGES = {
    "b_width": (120.0, 3637.87),
    "d_eff": (80.0, 1548.03),
    "fc": (20.6, 111.5),
    "a_over_d": (0.47, 5.0),
    "rho": (1.0, 10.5),
    "df_agg": (0.5, 1.0),
    "Vf": (0.22, 2.0),
    "lf_over_df": (25.0, 133.33),
    "ff": (2.17, 7.11),
}

ALIASES = {
    "b_width": ("b_width", "b", "a", "width"),
    "d_eff": ("d_eff", "d"),
    "fc": ("fc", "f_c", "fc'", "f'c"),
    "a_over_d": ("a_over_d", "a/d", "ad"),
    "rho": ("rho", "ρ"),
    "df_agg": ("df_agg", "df", "d_f", "dagg"),
    "Vf": ("Vf", "V_f", "vf"),
    "lf_over_df": ("lf_over_df", "lf/df", "l_f/d_f"),
    "ff": ("ff", "f_f"),
    "Vu": ("Vu", "V_u", "vu"),
}

GEOMETRY = ("a_over_d", "b_width", "d_eff")

SCHEMES = {
    "full": {
        "fiber": ("Vf", "lf_over_df", "a_over_d", "b_width", "d_eff"),
        "concrete": ("fc", "df_agg", "a_over_d", "d_eff"),
        "steel": ("rho", "b_width", "d_eff", "a_over_d"),
    },
    "minimal": {
        "concrete": ("fc", "a_over_d"),
        "steel": ("rho", "a_over_d"),
        "fiber": ("Vf", "a_over_d"),
    },
}


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = FEATURES
    target_name: str = TARGET

    @property
    def n(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.target_name)

    def column(self, name: str) -> np.ndarray:
        if name == self.target_name:
            return self.y
        return self.X[:, self.feature_names.index(name)]

    def medians(self) -> np.ndarray:
        return np.median(self.X, axis=0)


def _canonical_header(header):
    lookup = {}
    for canon, names in ALIASES.items():
        for a in names:
            lookup[a.lower()] = canon
    mapping = {}
    for j, h in enumerate(header):
        canon = lookup.get(h.strip().lower())
        if canon is not None:
            if canon in mapping:
                raise IngestionError(f"column {canon!r} appears twice (header {h!r})")
            mapping[canon] = j
    return mapping


def load_csv(path) -> Dataset:
    """Read a beam CSV with canonical or alias headers.

    Raises :class:`IngestionError` naming the row/column of the first
    missing, non-numeric, non-finite or non-positive value.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        mapping = _canonical_header(header)
        missing = [c for c in FEATURES + (TARGET,) if c not in mapping]
        if missing:
            raise IngestionError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = FEATURES + (TARGET,)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for c in cols:
                j = mapping[c]
                cell = rec[j].strip() if j < len(rec) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise IngestionError(f"{path}: row {lineno}, column {c}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise IngestionError(f"{path}: row {lineno}, column {c}: non-finite value")
                if v <= 0:
                    raise IngestionError(
                        f"{path}: row {lineno}, column {c}: physically implausible entry {v} (must be > 0)")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    A = np.array(rows)
    return Dataset(A[:, :-1].copy(), A[:, -1].copy())


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(ds.feature_names) + [ds.target_name])
        for row, t in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


def quartiles(x):
    """Q1, median, Q3 by linear interpolation between order statistics."""
    return tuple(float(q) for q in np.quantile(np.asarray(x, dtype=np.float64), [0.25, 0.5, 0.75]))


def skewness(x) -> float:
    """Adjusted Fisher-Pearson skewness; 0 for a constant column."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if n < 3 or m2 <= 1e-28 * max(1.0, float(np.mean(x * x))):
        return 0.0
    g1 = np.mean(d ** 3) / m2 ** 1.5
    return float(g1 * math.sqrt(n * (n - 1)) / (n - 2))


def column_diagnostics(x) -> dict:
    x = np.asarray(x, dtype=np.float64)
    q1, med, q3 = quartiles(x)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    n_out = int(np.sum((x < lo) | (x > hi)))
    return {
        "min": float(x.min()), "max": float(x.max()), "range": float(x.max() - x.min()),
        "mean": float(x.mean()), "sd": float(x.std(ddof=1)) if len(x) > 1 else 0.0,
        "median": med, "skewness": skewness(x), "pct_tukey_outliers": 100.0 * n_out / len(x),
    }


def diagnostics(ds: Dataset) -> dict:
    """Per-column summary statistics, target included."""
    out = {name: column_diagnostics(ds.X[:, j]) for j, name in enumerate(ds.feature_names)}
    out[ds.target_name] = column_diagnostics(ds.y)
    return out


@dataclass(frozen=True)
class PartitionScheme:
    groups: dict

    def __post_init__(self):
        for name, cols in self.groups.items():
            if not cols:
                raise ConfigurationError(f"partition group {name!r} is empty")
            for c in cols:
                if c not in FEATURES:
                    raise ConfigurationError(f"partition group {name!r}: unknown column {c!r}")

    def indices(self, feature_names=FEATURES) -> dict:
        return {g: tuple(feature_names.index(c) for c in cols) for g, cols in self.groups.items()}

    def owner(self, column: str):
        """Group owning ``column`` exclusively, or ``None`` if shared/unused."""
        owners = [g for g, cols in self.groups.items() if column in cols]
        return owners[0] if len(owners) == 1 else None


def default_partitions(name: str = "full") -> PartitionScheme:
    try:
        return PartitionScheme({k: tuple(v) for k, v in SCHEMES[name].items()})
    except KeyError:
        raise ConfigurationError(f"unknown partition scheme {name!r}; choose from {sorted(SCHEMES)}") from None


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.65
    val: float = 0.10
    test: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-12:
            raise ConfigurationError("split fractions must sum to 1")


def split_sizes(n: int, spec: SplitSpec):
    n_val = math.floor(spec.val * n + 1e-9)
    n_test = math.floor(spec.test * n + 1e-9)
    return n - n_val - n_test, n_val, n_test


def split(ds: Dataset, spec: SplitSpec):
    """Seeded shuffle into (train, val, test); remainder rows go to train."""
    n_train, n_val, _ = split_sizes(ds.n, spec)
    perm = np.random.default_rng(spec.seed).permutation(ds.n)
    idx = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    return tuple(ds.subset(i) for i in idx)


def split_indices(n: int, spec: SplitSpec):
    n_train, n_val, _ = split_sizes(n, spec)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


# -- synthetic benchmark ------------------------------------------------------
#
# y = concrete + steel + fiber + N(0, noise_sd), with
#   concrete = fc / (10 + 5 * a_over_d)
#   steel    = 0.6 * rho / (1 + 0.3 * a_over_d)
#   fiber    = Vf * lf_over_df / (40 + 15 * a_over_d)
# Every term increases in its material variable and decreases in a_over_d.

SYNTH_NOISE_SD = 0.5

SYNTH_MONOTONICITY = {"Vf": +1, "fc": +1, "rho": +1, "a_over_d": -1}


def synth_terms(X, feature_names=FEATURES) -> dict:
    col = {name: X[:, j] for j, name in enumerate(feature_names)}
    ad = col["a_over_d"]
    return {
        "concrete": col["fc"] / (10.0 + 5.0 * ad),
        "steel": 0.6 * col["rho"] / (1.0 + 0.3 * ad),
        "fiber": col["Vf"] * col["lf_over_df"] / (40.0 + 15.0 * ad),
    }


def synth_truth(X, feature_names=FEATURES) -> np.ndarray:
    t = synth_terms(np.atleast_2d(X), feature_names)
    return t["concrete"] + t["steel"] + t["fiber"]


def synth_superposition(n: int = 213, noise_sd: float = SYNTH_NOISE_SD, seed: int = 0) -> Dataset:
    """Features uniform within the observed ranges; additive mechanism target."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.uniform(*RANGES[c], n) for c in FEATURES])
    y = synth_truth(X)
    if noise_sd > 0:
        noise = rng.normal(0.0, noise_sd, n)
        # redraw noise that would make a target non-positive
        bad = y + noise <= 0
        while bad.any():
            noise[bad] = rng.normal(0.0, noise_sd, int(bad.sum()))
            bad = y + noise <= 0
        y = y + noise
    return Dataset(X, np.asarray(y, dtype=np.float64))
