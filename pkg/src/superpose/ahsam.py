"""Stagnation-triggered abstraction: ANOVA gate, compression, pruning, injection.

When every population has stalled, the fused training predictions of all
individuals are screened by one-way ANOVA. Retained individuals are
compressed into a single raw-feature expression, validated against the
mean fitness of their population (pruning destabilising subtrees if
needed) and injected as a new terminal into every population.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import exprtree as et
from .errors import StructuralError
from .evolution import Individual, Population, predict_individual, ranked
from .linfit import fit_elastic_net
from .special import f_sf

DEFAULT_ALPHA = 0.05
MAX_PRUNING_ROUNDS = 10
MAX_ACCEPTED = 3


@dataclass(frozen=True)
class AnovaResult:
    ss_between: float
    ss_within: float
    f_stat: float
    df1: int
    df2: int
    p_value: float

    @property
    def ss_total(self) -> float:
        return self.ss_between + self.ss_within


def one_way_anova(groups) -> AnovaResult:
    """Classic one-way ANOVA over two or more groups.

    A perfect separation (``ss_within == 0`` and ``ss_between > 0``) gives
    ``F = inf`` and ``p = 0``; identical constant groups give ``F = 0``,
    ``p = 1``.
    """
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    k = len(groups)
    sizes = np.array([len(g) for g in groups])
    if k < 2 or np.any(sizes == 0):
        raise ValueError("need at least two non-empty groups")
    n = int(sizes.sum())
    if n <= k:
        raise ValueError(f"need more observations ({n}) than groups ({k})")
    means = np.array([g.mean() for g in groups])
    grand = float(np.sum(sizes * means) / n)
    ss_between = float(np.sum(sizes * (means - grand) ** 2))
    ss_within = float(sum(np.sum((g - m) ** 2) for g, m in zip(groups, means)))
    df1, df2 = k - 1, n - k
    # rounding floor for sums of squares of (nearly) identical groups
    floor = 1e-24 * sum(float(np.sum(g * g)) for g in groups)
    if ss_between <= floor:
        return AnovaResult(ss_between, ss_within, 0.0, df1, df2, 1.0)
    if ss_within <= floor:
        return AnovaResult(ss_between, ss_within, float("inf"), df1, df2, 0.0)
    f = (ss_between / df1) / (ss_within / df2)
    return AnovaResult(ss_between, ss_within, f, df1, df2, f_sf(f, df1, df2))


def individual_p_values(P: np.ndarray) -> np.ndarray:
    """Per-row p-value: ANOVA of row ``i`` against all other rows pooled."""
    P = np.asarray(P, dtype=np.float64)
    k = P.shape[0]
    out = np.empty(k)
    for i in range(k):
        rest = np.delete(P, i, axis=0).ravel()
        out[i] = one_way_anova([P[i], rest]).p_value
    return out


@dataclass(frozen=True)
class Candidate:
    population: str
    individual: Individual
    p_value: float


@dataclass(frozen=True)
class FilterResult:
    candidates: tuple
    fallback: bool
    n_tested: int


def should_trigger(pops, T: int) -> bool:
    """All populations stalled for at least ``T`` generations.

    A single population (baseline mode) never triggers.
    """
    if len(pops) < 2:
        return False
    return all(p.stagnation_counter >= T for p in pops)


def _by_fitness(cands):
    return sorted(cands, key=lambda c: (c.individual.isolated_fitness, c.individual.node_count))


def anova_filter(pops, train_view: et.DataView, alpha: float = DEFAULT_ALPHA) -> FilterResult:
    """Retain individuals whose training predictions differ significantly.

    Falls back to the per-population best individuals when the test is
    degenerate (too few observations) or nothing reaches ``alpha``.
    """
    entries = [(p.id, ind) for p in pops for ind in p.individuals]
    k = len(entries)
    fallback_list = _by_fitness([Candidate(p.id, p.best, float("nan")) for p in pops])
    n_obs = k * train_view.n_rows
    if k < 2 or n_obs <= k:
        return FilterResult(tuple(fallback_list), True, k)
    P = np.vstack([predict_individual(ind, train_view) for _, ind in entries])
    pvals = individual_p_values(P)
    kept = [Candidate(pid, ind, float(pv)) for (pid, ind), pv in zip(entries, pvals) if pv <= alpha]
    if not kept:
        return FilterResult(tuple(fallback_list), True, k)
    return FilterResult(tuple(_by_fitness(kept)), False, k)


@dataclass(frozen=True)
class AbstractedFeature:
    id: int
    source_population: str
    expression: et.ExprTree
    creation_generation: int = 0


def compress(candidate: Individual, next_id: int, registry: et.AbstractionRegistry | None = None,
             source_population: str = "", generation: int = 0) -> AbstractedFeature:
    """Materialise ``sum(beta_j * gene_j) + beta_0`` as one expanded tree.

    Genes with a zero coefficient are dropped.
    """
    fit = candidate.fit
    if fit is None:
        raise StructuralError("candidate has no fitted fusion")
    tree = None
    for bj, gene in zip(fit.beta, candidate.genes):
        if bj == 0.0:
            continue
        t = et.mul(et.const(float(bj)), et.expand(gene, registry))
        tree = t if tree is None else et.add(tree, t)
    c = et.const(float(fit.intercept))
    tree = c if tree is None else et.add(tree, c)
    return AbstractedFeature(next_id, source_population, tree, generation)


def standalone_rmse(values: np.ndarray, y) -> float:
    """Training RMSE of the least-squares line ``y ~ a + b*z``."""
    return fit_elastic_net(values[:, None], y, 0.0, 0.0).train_rmse


def _prune_variants(tree: et.ExprTree):
    """Every tree obtained by replacing one operator node by one of its children."""
    nodes = tree.nodes
    for i, (op, _) in enumerate(nodes):
        if op not in et.BINARY:
            continue
        end = tree.subtree_end(i)
        mid = tree.subtree_end(i + 1)
        left = nodes[i + 1:mid]
        right = nodes[mid:end]
        # dropping the right branch keeps the left one, and vice versa
        yield et.ExprTree(nodes[:i] + left + nodes[end:])
        yield et.ExprTree(nodes[:i] + right + nodes[end:])


@dataclass(frozen=True)
class PruneOutcome:
    feature: AbstractedFeature | None
    baseline: float
    initial_rmse: float
    final_rmse: float
    rounds: int
    val_rmse: float


def prune_and_validate(z: AbstractedFeature, pop: Population, train_view: et.DataView, y_train,
                       val_view: et.DataView | None = None, y_val=None,
                       max_rounds: int = MAX_PRUNING_ROUNDS) -> PruneOutcome:
    """Accept ``z`` if its standalone RMSE does not exceed the population mean.

    Otherwise greedily remove the subtree whose removal lowers the standalone
    RMSE the most, for at most ``max_rounds`` rounds, accepting as soon as
    the baseline is matched. Returns ``feature=None`` on rejection.
    """
    baseline = pop.mean_fitness
    raw = et.DataView(train_view.X)
    tree = z.expression
    current = standalone_rmse(raw.outputs(tree), y_train)
    initial = current
    rounds = 0
    while current > baseline and rounds < max_rounds:
        best_tree, best_score = None, current
        for variant in _prune_variants(tree):
            score = standalone_rmse(raw.outputs(variant), y_train)
            if score < best_score:
                best_tree, best_score = variant, score
        rounds += 1
        if best_tree is None:
            break
        tree, current = best_tree, best_score
    val = float("nan")
    if val_view is not None and y_val is not None:
        fit = fit_elastic_net(raw.outputs(tree)[:, None], y_train, 0.0, 0.0)
        zv = et.DataView(val_view.X).outputs(tree)
        val = float(np.sqrt(np.mean((zv * fit.beta[0] + fit.intercept - y_val) ** 2)))
    accepted = current <= baseline
    feature = dataclasses.replace(z, expression=tree) if accepted else None
    return PruneOutcome(feature, baseline, initial, current, rounds, val)


def inject(z: AbstractedFeature, pops, registry: et.AbstractionRegistry) -> list:
    """Register ``z`` and add it to every population's terminal set."""
    registry.register(z.id, z.expression)
    return [dataclasses.replace(p, terminal_set=p.terminal_set.with_abstraction(z.id)) for p in pops]


def activate(pops, registry: et.AbstractionRegistry, train_view, y_train, val_view=None, y_val=None,
             alpha: float = DEFAULT_ALPHA, generation: int = 0,
             max_accept: int = MAX_ACCEPTED):
    """Run one full abstraction cycle; returns ``(populations, event_log)``.

    All stagnation counters are reset afterwards.
    """
    filt = anova_filter(pops, train_view, alpha)
    by_id = {p.id: p for p in pops}
    known = set(registry.expressions.values())
    log = []
    accepted = 0
    for cand in filt.candidates:
        if accepted >= max_accept:
            break
        z = compress(cand.individual, registry.next_id, registry, cand.population, generation)
        outcome = prune_and_validate(z, by_id[cand.population], train_view, y_train, val_view, y_val)
        entry = {
            "population": cand.population,
            "isolated_fitness": cand.individual.isolated_fitness,
            "p_value": cand.p_value,
            "baseline": outcome.baseline,
            "standalone_rmse": outcome.initial_rmse,
            "final_rmse": outcome.final_rmse,
            "pruning_rounds": outcome.rounds,
            "val_rmse": outcome.val_rmse,
            "accepted": False,
            "id": None,
        }
        feat = outcome.feature
        if feat is not None and feat.expression not in known:
            pops = inject(feat, pops, registry)
            by_id = {p.id: p for p in pops}
            known.add(feat.expression)
            accepted += 1
            entry.update(accepted=True, id=feat.id, expression_nodes=feat.expression.node_count)
        log.append(entry)
    pops = [dataclasses.replace(p, stagnation_counter=0) for p in pops]
    event = {"generation": generation, "n_tested": filt.n_tested, "fallback": filt.fallback,
             "n_candidates": len(filt.candidates), "accepted": accepted, "candidates": log}
    return pops, event
