"""Multi-run statistics: summaries, Wilcoxon tests, bootstrap CI, parsimony,
mechanism contributions and one-point elasticities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import exprtree as et
from .data import FEATURES, PartitionScheme
from .ensemble import EnsembleModel, closed_form, closed_form_terms, predict_full
from .errors import InputError, UndefinedElasticityError
from .special import norm_sf

NORMAL_MIN_N = 15
SIGNED_RANK_EXACT_MAX_N = 50
METHODS = ("auto", "exact", "approx")
DEFAULT_EPSILON = 0.01
MIXED = "mixed"


def summarize(values) -> dict:
    """Median, type-7 IQR, mean and sample SD (``ddof=1``; 0 for one value)."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError("summarize needs at least one value")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    return {
        "median": float(med),
        "iqr": float(q3 - q1),
        "mean": float(x.mean()),
        "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
    }


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties given the mean of the positions they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_sizes(ranks) -> np.ndarray:
    _, counts = np.unique(ranks, return_counts=True)
    return counts[counts > 1].astype(np.float64)


@dataclass(frozen=True)
class RankSumResult:
    statistic: float
    p_two_sided: float
    exact: bool


def _subset_sum_counts(doubled, size):
    # counts[s] = number of ``size``-subsets of ``doubled`` summing to s
    total = int(sum(doubled))
    table = np.zeros((size + 1, total + 1), dtype=object)
    table[0, 0] = 1
    for r in doubled:
        r = int(r)
        for k in range(min(size, len(doubled)), 0, -1):
            table[k, r:] = table[k, r:] + table[k - 1, :total + 1 - r]
    return table[size]


def _check_method(method):
    if method not in METHODS:
        raise InputError(f"method must be one of {METHODS}, got {method!r}")


def wilcoxon_rank_sum(a, b, method: str = "auto") -> RankSumResult:
    """Two-sided Wilcoxon rank-sum test; statistic is the rank sum of ``a``.

    ``method="auto"`` enumerates exactly (ties kept at their average ranks)
    when both samples are shorter than 15 and otherwise uses the normal
    approximation with tie and continuity corrections.
    """
    _check_method(method)
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise InputError("both samples need at least one value")
    ranks = average_ranks(np.concatenate([a, b]))
    w = float(ranks[:n1].sum())
    n = n1 + n2
    expected = n1 * (n + 1) / 2.0
    if method == "exact" or (method == "auto" and max(n1, n2) < NORMAL_MIN_N):
        doubled = np.rint(2 * ranks).astype(int)
        counts = _subset_sum_counts(doubled, n1)
        sums = np.arange(len(counts)) / 2.0
        extreme = np.abs(sums - expected) >= abs(w - expected) - 1e-9
        p = float(sum(counts[extreme]) / sum(counts))
        return RankSumResult(w, min(1.0, p), True)
    ties = _tie_sizes(ranks)
    var = n1 * n2 / 12.0 * ((n + 1) - np.sum(ties ** 3 - ties) / (n * (n - 1)))
    if var <= 0:
        return RankSumResult(w, 1.0, False)
    z = max(abs(w - expected) - 0.5, 0.0) / math.sqrt(var)
    return RankSumResult(w, min(1.0, 2.0 * norm_sf(z)), False)


@dataclass(frozen=True)
class PairedTestResult:
    deltas: np.ndarray
    w_statistic: float
    p_value: float
    rank_biserial: float
    win_fraction: float
    n_used: int
    exact: bool
    alternative: str


def _signed_rank_counts(doubled):
    # distribution of the doubled positive-rank sum over all 2**n sign patterns
    total = int(sum(doubled))
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(deltas, alternative: str = "greater", method: str = "auto") -> PairedTestResult:
    """Wilcoxon signed-rank test on paired differences.

    ``deltas`` are ``RMSE_BGP - RMSE_DIGSP``; ``alternative="greater"`` tests
    for a positive median. Zero deltas are dropped; ``W`` is the sum of the
    positive-delta ranks. ``method="auto"`` enumerates the exact null
    distribution (tie-aware) for up to 50 non-zero deltas and falls back to
    the normal approximation with tie correction beyond that.
    ``win_fraction`` counts positive deltas over all supplied deltas.

    Examples
    --------
    >>> res = wilcoxon_signed_rank(np.arange(1.0, 31.0))
    >>> res.w_statistic, res.win_fraction
    (465.0, 1.0)
    """
    _check_method(method)
    if alternative not in ("greater", "two_sided"):
        raise InputError(f"alternative must be 'greater' or 'two_sided', got {alternative!r}")
    d = np.asarray(deltas, dtype=np.float64).ravel()
    if d.size == 0:
        raise InputError("no deltas")
    if not np.all(np.isfinite(d)):
        raise InputError("deltas must be finite")
    win = float(np.mean(d > 0))
    nz = d[d != 0]
    n = len(nz)
    if n == 0:
        return PairedTestResult(d, 0.0, 1.0, 0.0, win, 0, True, alternative)
    ranks = average_ranks(np.abs(nz))
    w = float(ranks[nz > 0].sum())
    top = n * (n + 1) / 2.0
    r = 2.0 * w / top - 1.0
    expected = top / 2.0
    if method == "exact" or (method == "auto" and n <= SIGNED_RANK_EXACT_MAX_N):
        counts = _signed_rank_counts(np.rint(2 * ranks).astype(int))
        sums = np.arange(len(counts)) / 2.0
        if alternative == "greater":
            mask = sums >= w - 1e-9
        else:
            mask = np.abs(sums - expected) >= abs(w - expected) - 1e-9
        p = float(sum(counts[mask]) / 2 ** n)
        return PairedTestResult(d, w, min(1.0, p), r, win, n, True, alternative)
    ties = _tie_sizes(ranks)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(ties ** 3 - ties) / 48.0
    if var <= 0:
        return PairedTestResult(d, w, 1.0, r, win, n, False, alternative)
    z = (w - expected) / math.sqrt(var)
    p = norm_sf(z) if alternative == "greater" else 2.0 * norm_sf(abs(z))
    return PairedTestResult(d, w, min(1.0, p), r, win, n, False, alternative)


def bootstrap_ci_mean(values, n_boot: int = 10_000, level: float = 0.95, seed=0):
    """Percentile bootstrap confidence interval for the mean."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise InputError("bootstrap needs at least two values")
    if not 0 < level < 1:
        raise InputError("level must lie in (0, 1)")
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    means = x[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return float(lo), float(hi)


# -- model interpretation ------------------------------------------------------

def _predictor(model):
    if isinstance(model, EnsembleModel):
        return lambda rows: predict_full(model, rows)
    if callable(model):
        return lambda rows: np.asarray(model(np.atleast_2d(rows)), dtype=np.float64).ravel()
    raise InputError("model must be an EnsembleModel or a callable on rows")


def elasticity(model, x_median, variable, epsilon: float = DEFAULT_EPSILON,
               feature_names=FEATURES) -> float:
    """One-point elasticity by forward difference at ``x_median``.

    ``S = (V(x with x_i*(1+eps)) - V(x)) / (eps * V(x))``. ``variable`` is a
    column name or index; ``model`` an :class:`EnsembleModel` or a callable
    mapping an ``(n, p)`` array to predictions.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    x = np.array(x_median, dtype=np.float64).ravel()
    j = variable if isinstance(variable, (int, np.integer)) else list(feature_names).index(variable)
    predict = _predictor(model)
    xp = x.copy()
    xp[j] = x[j] * (1.0 + epsilon)
    base, bumped = predict(np.vstack([x, xp]))
    if base == 0.0:
        raise UndefinedElasticityError(f"prediction at the probe point is zero; elasticity of {variable!r} undefined")
    return float((bumped - base) / (epsilon * base))


@dataclass(frozen=True)
class ElasticityResult:
    variable: str
    epsilon: float
    elasticities: np.ndarray
    median: float
    iqr: float
    mean: float
    sd: float


def summarize_elasticities(variable: str, values, epsilon: float = DEFAULT_EPSILON) -> ElasticityResult:
    v = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise InputError("elasticities must be finite")
    return ElasticityResult(variable, epsilon, v, **summarize(v))


@dataclass(frozen=True)
class ContributionBreakdown:
    contributions: dict
    shares: dict
    intercept: float
    prediction: float


def _shares(contrib: dict) -> dict:
    total = sum(abs(v) for v in contrib.values())
    if total == 0:
        return {k: 0.0 for k in contrib}
    return {k: 100.0 * abs(v) / total for k, v in contrib.items()}


def gene_mechanism(gene: et.ExprTree, scheme: PartitionScheme, feature_names=FEATURES):
    """Mechanism owning every variable of ``gene``, ``"mixed"`` if none or
    several qualify, ``None`` for a constant gene."""
    used = {feature_names[i] for i in gene.variables()}
    if not used:
        return None
    fits = [g for g, cols in scheme.groups.items() if used <= set(cols)]
    return fits[0] if len(fits) == 1 else MIXED


def mechanism_contributions(model: EnsembleModel, x_median, scheme: PartitionScheme,
                            feature_names=FEATURES) -> ContributionBreakdown:
    """Additive split of the prediction at ``x_median`` into mechanisms.

    With one population per mechanism, mechanism ``m`` receives its fusion
    weight times its member's prediction. A single-population (baseline)
    model is split gene by gene through :func:`gene_mechanism`, with a
    ``"mixed"`` bucket. Shares are percentages of absolute contributions.
    """
    x = np.asarray(x_median, dtype=np.float64).ravel()[None, :]
    groups = list(scheme.groups)
    pops = {m.population for m in model.members}
    prediction = float(predict_full(model, x)[0])
    if pops <= set(groups):
        contrib = {g: 0.0 for g in groups if g in pops}
        view = et.DataView(x, model.registry)
        member_out = model.member_predictions(view)[0]
        for wm, m, out in zip(model.fusion.beta, model.members, member_out):
            contrib[m.population] += float(wm * out)
        intercept = float(model.fusion.intercept)
    else:
        contrib = {g: 0.0 for g in groups}
        contrib[MIXED] = 0.0
        terms, intercept = closed_form_terms(model)
        for _, coef, gene in terms:
            owner = gene_mechanism(gene, scheme, feature_names)
            value = float(coef * et.evaluate(gene, x[0]))
            if owner is None:
                intercept += value
            else:
                contrib[owner] += value
    return ContributionBreakdown(contrib, _shares(contrib), float(intercept), prediction)


def summarize_contributions(breakdowns) -> dict:
    """Mean and SD of per-run contributions and shares, by mechanism."""
    keys = []
    for b in breakdowns:
        keys += [k for k in b.contributions if k not in keys]
    out = {}
    for k in keys:
        c = np.array([b.contributions.get(k, 0.0) for b in breakdowns])
        s = np.array([b.shares.get(k, 0.0) for b in breakdowns])
        out[k] = {
            "contribution_mean": float(c.mean()),
            "contribution_sd": float(c.std(ddof=1)) if len(c) > 1 else 0.0,
            "share_mean": float(s.mean()),
            "share_sd": float(s.std(ddof=1)) if len(s) > 1 else 0.0,
        }
    return out


@dataclass(frozen=True)
class Parsimony:
    n_terms: int
    tree_size_nodes: int
    operator_count: int


def parsimony(model: EnsembleModel) -> Parsimony:
    """Size of the fully expanded closed form.

    ``n_terms`` counts the non-zero gene terms plus the intercept when it is
    non-zero; abstractions are counted expanded.
    """
    terms, intercept = closed_form_terms(model)
    m = et.metrics(closed_form(model))
    return Parsimony(len(terms) + (intercept != 0.0), m["node_count"], m["operator_count"])
