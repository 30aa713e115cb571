import dataclasses

import numpy as np
import pytest

from superpose import exprtree as et
from superpose import evolution as ev
from superpose.errors import ConfigurationError
from superpose.linfit import kfold_cv_rmse, make_folds


@pytest.fixture
def problem(rng):
    X = rng.uniform(1, 5, (60, 3))
    y = 2 * X[:, 0] + X[:, 1] * X[:, 2] + rng.normal(0, 0.1, 60)
    return et.DataView(X), y


def make_pop(cfg, seed=0, variables=(0, 1, 2)):
    rng = np.random.default_rng(seed)
    return ev.initial_population("p", et.TerminalSet(variables), cfg, rng), rng


def test_config_validates_probabilities():
    with pytest.raises(ConfigurationError):
        ev.EvolutionConfig(p_c=0.5, p_m=0.1, p_r=0.1)


def test_gene_reproducing_target_has_zero_fitness(problem):
    view, _ = problem
    y = view.X[:, 0] * 3.0
    cfg = ev.EvolutionConfig(lambda1=0.0, lambda2=0.0)
    ind = ev.Individual((et.var(0), et.var(1)))
    folds = make_folds(len(y), 5, np.random.default_rng(0))
    assert ev.evaluate_individual(ind, view, y, cfg, folds).isolated_fitness <= 1e-6


def test_default_penalty_shrinkage_on_exact_gene(problem):
    view, _ = problem
    y = view.X[:, 0] * 3.0
    cfg = ev.EvolutionConfig()
    ind = ev.Individual((et.var(0),))
    folds = make_folds(len(y), 5, np.random.default_rng(0))
    got = ev.evaluate_individual(ind, view, y, cfg, folds)
    # the penalty shrinks the standardised slope s*3 by lambda1/2 / (1 + lambda2)
    s = view.X[:, 0].std()
    b_std = (3 * s - cfg.lambda1 / 2) / (1 + cfg.lambda2)
    assert got.fit.beta[0] == pytest.approx(b_std / s, rel=1e-9)
    assert got.isolated_fitness < 1e-2


def test_all_constant_genes_match_intercept_oracle(problem):
    view, y = problem
    cfg = ev.EvolutionConfig()
    ind = ev.Individual((et.const(1.0), et.const(-2.0), et.div(et.const(3), et.const(0))))
    folds = make_folds(len(y), 5, np.random.default_rng(1))
    got = ev.evaluate_individual(ind, view, y, cfg, folds).isolated_fitness
    want = np.mean([np.sqrt(np.mean((y[folds == f] - y[folds != f].mean()) ** 2)) for f in range(5)])
    assert got == pytest.approx(want, rel=1e-12)


def test_identical_individuals_share_fitness(problem):
    view, y = problem
    cfg = ev.EvolutionConfig(population_size=4)
    genes = (et.var(0), et.mul(et.var(1), et.var(2)), et.const(1))
    pop = ev.Population("p", et.TerminalSet((0, 1, 2)), [ev.Individual(genes) for _ in range(4)])
    pop = ev.evaluate_population(pop, view, y, cfg, np.random.default_rng(0))
    assert len({ind.isolated_fitness for ind in pop.individuals}) == 1


def test_fixed_folds_reproduce_kfold(problem):
    view, y = problem
    cfg = ev.EvolutionConfig(population_size=6)
    pop, rng = make_pop(cfg)
    pop = ev.evaluate_population(pop, view, y, cfg, rng)
    ind = pop.individuals[3]
    X = ev.design_matrix(ind, view)
    assert ind.isolated_fitness == kfold_cv_rmse(X, y, folds=pop.folds)


def test_tournament_picks_best_when_sampled():
    inds = [ev.Individual((et.var(0),), None, f) for f in (3.0, 1.0, 2.0)]
    pop = ev.Population("p", et.TerminalSet((0,)), inds)

    class Fixed:
        def integers(self, lo, hi, size):
            return np.array([0, 1, 2, 2])
    assert ev.select_parent(pop, Fixed()) is inds[1]


def test_tie_breaks_on_node_count():
    big = ev.Individual((et.add(et.var(0), et.var(0)),), None, 1.0)
    small = ev.Individual((et.var(0),), None, 1.0)
    pop = ev.Population("p", et.TerminalSet((0,)), [big, small])
    rng = np.random.default_rng(0)
    picks = {id(ev.select_parent(pop, rng)) for _ in range(50)}
    assert id(small) in picks
    assert ev.ranked([big, small])[0] is small


def test_reproduction_only_copies_parents(problem):
    view, y = problem
    cfg = ev.EvolutionConfig(population_size=10, p_c=0.0, p_m=0.0, p_r=1.0)
    pop, rng = make_pop(cfg)
    pop = ev.evaluate_population(pop, view, y, cfg, rng)
    parents = {ind.genes for ind in pop.individuals}
    nxt = ev.next_generation(pop, cfg, rng)
    assert all(ind.genes in parents for ind in nxt.individuals)


def test_size_gene_count_depth_and_closure_over_generations(problem):
    view, y = problem
    cfg = ev.EvolutionConfig(population_size=20, max_tree_depth=8)
    pop, rng = make_pop(cfg, variables=(0, 2))
    pop = ev.update_stagnation(ev.evaluate_population(pop, view, y, cfg, rng))
    best = [pop.best.isolated_fitness]
    for _ in range(25):
        pop = ev.next_generation(pop, cfg, rng)
        pop = ev.update_stagnation(ev.evaluate_population(pop, view, y, cfg, rng))
        assert len(pop.individuals) == 20
        for ind in pop.individuals:
            assert len(ind.genes) == cfg.genes_per_individual
            for g in ind.genes:
                assert g.depth <= 8 and g.variables() <= {0, 2}
        best.append(pop.best.isolated_fitness)
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert pop.best_fitness_history == best


def test_stagnation_counter_rules():
    def run(history):
        pop = ev.Population("p", et.TerminalSet((0,)), [])
        for f in history:
            pop.individuals = [ev.Individual((et.var(0),), None, f)]
            pop = ev.update_stagnation(pop)
        return pop.stagnation_counter
    assert run([5, 4, 3, 2, 1]) == 0
    assert run([1.0] * 26) == 25
    assert run([1.0, 1.0 - 1e-12, 1.0 - 2e-12]) == 2
    assert run([1.0, 1.0, 1.0, 0.5]) == 0


def test_evolution_is_seed_deterministic(problem):
    view, y = problem
    cfg = ev.EvolutionConfig(population_size=12)

    def trajectory():
        pop, rng = make_pop(cfg, seed=9)
        pop = ev.evaluate_population(pop, view, y, cfg, rng)
        out = []
        for _ in range(5):
            pop = ev.evaluate_population(ev.next_generation(pop, cfg, rng), view, y, cfg, rng)
            out.append([ind.isolated_fitness for ind in pop.individuals])
        return out
    assert trajectory() == trajectory()


def test_redraw_folds_option(problem):
    view, y = problem
    cfg = dataclasses.replace(ev.EvolutionConfig(population_size=6), redraw_folds=True)
    pop, rng = make_pop(cfg)
    a = ev.evaluate_population(pop, view, y, cfg, rng)
    b = ev.evaluate_population(ev.next_generation(a, cfg, rng), view, y, cfg, rng)
    assert not np.array_equal(a.folds, b.folds)
