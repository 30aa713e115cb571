"""Per-population evolutionary loop over multi-gene individuals.

An individual's genes are fused by the elastic net; its isolated fitness is
the k-fold CV-RMSE of that fusion on the training split.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import exprtree as et
from .errors import ConfigurationError
from .linfit import (DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, LinearFit, fit_elastic_net,
                     kfold_cv_rmse, make_folds)

IMPROVEMENT_RTOL = 1e-9


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 50
    max_generations: int = 300
    stall_generations: int = 30
    ahsam_trigger: int = 25
    genes_per_individual: int = 3
    max_tree_depth: int = 15
    p_c: float = 0.84
    p_m: float = 0.14
    p_r: float = 0.02
    constant_range: tuple = (-10.0, 10.0)
    k_folds: int = 5
    tournament_size: int = 4
    p_constant_mutation: float = 0.25
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    redraw_folds: bool = False
    seed: int = 0

    def __post_init__(self):
        probs = (self.p_c, self.p_m, self.p_r)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ConfigurationError(f"operator probabilities must be >= 0 and sum to 1, got {probs}")
        if self.population_size < 2:
            raise ConfigurationError("population_size must be >= 2")
        if self.genes_per_individual < 1:
            raise ConfigurationError("genes_per_individual must be >= 1")
        if self.max_tree_depth < 1:
            raise ConfigurationError("max_tree_depth must be >= 1")


@dataclass(frozen=True, eq=False)
class Individual:
    genes: tuple
    fit: LinearFit | None = None
    isolated_fitness: float | None = None

    @property
    def evaluated(self) -> bool:
        return self.isolated_fitness is not None

    @property
    def node_count(self) -> int:
        return sum(g.node_count for g in self.genes)


@dataclass(eq=False)
class Population:
    id: str
    terminal_set: et.TerminalSet
    individuals: list
    best_fitness_history: list = field(default_factory=list)
    stagnation_counter: int = 0
    folds: np.ndarray | None = None

    @property
    def best(self) -> Individual:
        return ranked(self.individuals)[0]

    @property
    def mean_fitness(self) -> float:
        return float(np.mean([ind.isolated_fitness for ind in self.individuals]))


def rank_key(ind: Individual, index: int):
    """Lower CV-RMSE first, then fewer nodes, then earlier position."""
    f = ind.isolated_fitness
    return (np.inf if f is None else f, ind.node_count, index)


def ranked(individuals) -> list:
    order = sorted(range(len(individuals)), key=lambda i: rank_key(individuals[i], i))
    return [individuals[i] for i in order]


def initial_population(pop_id: str, terminals: et.TerminalSet, cfg: EvolutionConfig, rng) -> Population:
    n_genes = cfg.genes_per_individual
    trees = et.ramped_half_and_half(terminals, cfg.population_size * n_genes, rng,
                                    max_depth=cfg.max_tree_depth)
    inds = [Individual(tuple(trees[i * n_genes:(i + 1) * n_genes]))
            for i in range(cfg.population_size)]
    return Population(pop_id, terminals, inds)


def design_matrix(ind: Individual, view: et.DataView) -> np.ndarray:
    return np.column_stack([view.outputs(g) for g in ind.genes])


def evaluate_individual(ind: Individual, view: et.DataView, y, cfg: EvolutionConfig,
                        folds) -> Individual:
    """Attach the CV-RMSE fitness and the full-training-split fusion fit."""
    X = design_matrix(ind, view)
    fitness = kfold_cv_rmse(X, y, folds=folds, lambda1=cfg.lambda1, lambda2=cfg.lambda2)
    fit = fit_elastic_net(X, y, cfg.lambda1, cfg.lambda2)
    return Individual(ind.genes, fit, fitness)


def predict_individual(ind: Individual, view: et.DataView) -> np.ndarray:
    return design_matrix(ind, view) @ ind.fit.beta + ind.fit.intercept


def evaluate_population(pop: Population, view: et.DataView, y, cfg: EvolutionConfig, rng) -> Population:
    """Evaluate every unevaluated individual under the population's folds.

    Folds are drawn once per population and reused for the whole run unless
    ``cfg.redraw_folds`` asks for a fresh draw every generation. Evaluated
    individuals (elites) keep their stored fitness.
    """
    folds = pop.folds
    if folds is None or cfg.redraw_folds:
        folds = make_folds(view.n_rows, cfg.k_folds, rng)
    inds = [ind if ind.evaluated else evaluate_individual(ind, view, y, cfg, folds)
            for ind in pop.individuals]
    return dataclasses.replace(pop, individuals=inds, folds=folds)


def select_parent(pop: Population, rng, tournament_size: int = 4) -> Individual:
    """Tournament selection with replacement."""
    n = len(pop.individuals)
    picks = rng.integers(0, n, tournament_size)
    best = min(picks.tolist(), key=lambda i: rank_key(pop.individuals[i], i))
    return pop.individuals[best]


def _mutate_gene(tree, terminals, cfg, rng):
    if tree.constant_positions() and rng.random() < cfg.p_constant_mutation:
        return et.constant_mutation(tree, cfg.constant_range, rng)
    return et.subtree_mutation(tree, terminals, cfg.max_tree_depth, rng)


def next_generation(pop: Population, cfg: EvolutionConfig, rng, n_elite: int = 1) -> Population:
    """Breed a new population of the same size.

    The top ``n_elite`` individuals are carried over unchanged (with their
    fitness); the remaining slots are filled by slot-aligned gene crossover,
    gene mutation, or reproduction. Offspring are returned unevaluated.
    """
    size = len(pop.individuals)
    elites = ranked(pop.individuals)[:max(1, n_elite)]
    children = list(elites)
    terminals = pop.terminal_set
    while len(children) < size:
        r = rng.random()
        if r < cfg.p_c:
            a = select_parent(pop, rng, cfg.tournament_size)
            b = select_parent(pop, rng, cfg.tournament_size)
            slot = int(rng.integers(len(a.genes)))
            ga, gb = et.subtree_crossover(a.genes[slot], b.genes[slot], cfg.max_tree_depth, rng)
            children.append(Individual(a.genes[:slot] + (ga,) + a.genes[slot + 1:]))
            if len(children) < size:
                children.append(Individual(b.genes[:slot] + (gb,) + b.genes[slot + 1:]))
        elif r < cfg.p_c + cfg.p_m:
            a = select_parent(pop, rng, cfg.tournament_size)
            slot = int(rng.integers(len(a.genes)))
            g = _mutate_gene(a.genes[slot], terminals, cfg, rng)
            children.append(Individual(a.genes[:slot] + (g,) + a.genes[slot + 1:]))
        else:
            a = select_parent(pop, rng, cfg.tournament_size)
            children.append(Individual(a.genes))
    return dataclasses.replace(pop, individuals=children)


def improved(previous: float, current: float, rtol: float = IMPROVEMENT_RTOL) -> bool:
    """True when ``current`` beats ``previous`` by more than ``rtol`` (relative)."""
    return previous - current > rtol * abs(previous)


def update_stagnation(pop: Population) -> Population:
    """Append the current best fitness and update the stagnation counter.

    The first recorded entry is the baseline and leaves the counter at 0.
    """
    best = pop.best.isolated_fitness
    history = pop.best_fitness_history + [best]
    if len(history) < 2:
        counter = 0
    elif improved(history[-2], history[-1]):
        counter = 0
    else:
        counter = pop.stagnation_counter + 1
    return dataclasses.replace(pop, best_fitness_history=history, stagnation_counter=counter)
