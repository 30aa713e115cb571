import dataclasses

import numpy as np
import pytest

from superpose import ahsam
from superpose import exprtree as et
from superpose.errors import StructuralError
from superpose.evolution import (EvolutionConfig, Individual, Population, evaluate_population,
                                 predict_individual)
from superpose.linfit import LinearFit

from oracles import anova as anova_oracle


def evaluated(name, gene_sets, view, y, variables=(0, 1, 2)):
    pop = Population(name, et.TerminalSet(variables), [Individual(tuple(g)) for g in gene_sets])
    return evaluate_population(pop, view, y, EvolutionConfig(population_size=2), np.random.default_rng(0))


def counters(*values):
    return [Population(f"p{i}", et.TerminalSet((0,)), [], stagnation_counter=v) for i, v in enumerate(values)]


# -- trigger -----------------------------------------------------------------------

def test_trigger_needs_every_population():
    assert ahsam.should_trigger(counters(25, 25, 25), 25)
    assert not ahsam.should_trigger(counters(25, 25, 24), 25)


def test_single_population_never_triggers():
    assert not ahsam.should_trigger(counters(1000), 25)


# -- ANOVA -------------------------------------------------------------------------

def test_identical_groups():
    res = ahsam.one_way_anova([[2.0, 2.0, 2.0]] * 3)
    assert (res.ss_between, res.f_stat, res.p_value) == (0.0, 0.0, 1.0)


def test_perfect_separation():
    res = ahsam.one_way_anova([[1, 1, 1], [5, 5, 5]])
    assert res.ss_between == pytest.approx(24.0)
    assert res.ss_within == 0.0
    assert res.f_stat == np.inf and res.p_value == 0.0


def test_anova_matches_oracle(rng):
    for _ in range(300):
        k = int(rng.integers(2, 6))
        groups = [rng.normal(rng.normal(0, 1), rng.uniform(0.5, 2), int(rng.integers(2, 12))) for _ in range(k)]
        res = ahsam.one_way_anova(groups)
        ssb, ssw, f, p = anova_oracle([list(g) for g in groups])
        assert res.f_stat == pytest.approx(f, rel=1e-8)
        assert res.p_value == pytest.approx(p, rel=1e-8, abs=1e-12)
        assert res.ss_total == pytest.approx(sum(((np.concatenate(groups) - np.concatenate(groups).mean()) ** 2)), rel=1e-6)


def test_anova_needs_more_observations_than_groups():
    with pytest.raises(ValueError):
        ahsam.one_way_anova([[1.0], [2.0]])


def test_individual_p_values_pool_the_rest(rng):
    P = rng.normal(size=(5, 12))
    P[2] += 3.0
    p = ahsam.individual_p_values(P)
    want = anova_oracle([list(P[2]), list(np.delete(P, 2, axis=0).ravel())])[3]
    assert p[2] == pytest.approx(want, rel=1e-8)
    assert p.argmin() == 2


def test_filter_identical_predictions_falls_back(rng):
    X = rng.uniform(1, 2, (20, 3))
    y = rng.normal(size=20)
    view = et.DataView(X)
    pops = [evaluated(n, [[et.var(0)], [et.var(0)]], view, y) for n in ("a", "b")]
    res = ahsam.anova_filter(pops, view)
    assert res.fallback
    assert [c.population for c in res.candidates] and all(np.isnan(c.p_value) for c in res.candidates)


def test_filter_keeps_significant_individuals(rng):
    X = rng.uniform(1, 2, (40, 3))
    y = 10 * X[:, 0] + rng.normal(0, 0.1, 40)
    view = et.DataView(X)
    pops = [evaluated("a", [[et.var(0)], [et.const(1)]], view, y),
            evaluated("b", [[et.var(1)], [et.var(2)]], view, y)]
    res = ahsam.anova_filter(pops, view, alpha=1.0)
    assert not res.fallback and res.n_tested == 4
    fits = [c.individual.isolated_fitness for c in res.candidates]
    assert fits == sorted(fits)


# -- compression ------------------------------------------------------------------------

def test_compress_linear_gene():
    ind = Individual((et.var(0),), LinearFit(np.array([2.0]), 1.0, 0, 0, 0), 0.0)
    z = ahsam.compress(ind, 1)
    assert z.expression == et.add(et.mul(et.const(2.0), et.var(0)), et.const(1.0))
    assert et.evaluate(z.expression, [3.0]) == 7.0


def test_compress_expands_abstractions():
    reg = et.AbstractionRegistry()
    reg.register(1, et.mul(et.var(0), et.var(1)))
    ind = Individual((et.feature(1), et.var(2)), LinearFit(np.array([0.5, 0.0]), -1.0, 0, 0, 0), 0.0)
    z = ahsam.compress(ind, 2, reg)
    assert not z.expression.abstractions()
    assert z.expression.variables() == {0, 1}
    assert et.evaluate(z.expression, [2.0, 3.0, 9.0]) == 0.5 * 6.0 - 1.0


def test_compressed_expression_reproduces_fused_predictions(rng):
    X = rng.uniform(0.5, 3, (100, 3))
    y = X[:, 0] * X[:, 1] - X[:, 2]
    view = et.DataView(X)
    reg = view.registry
    reg.register(1, et.div(et.var(0), et.var(2)))
    pop = evaluated("a", [[et.mul(et.var(0), et.var(1)), et.feature(1), et.sub(et.var(2), et.const(0.5))]], view, y)
    ind = pop.individuals[0]
    z = ahsam.compress(ind, reg.next_id, reg)
    np.testing.assert_allclose(et.evaluate_batch(z.expression, X), predict_individual(ind, view), rtol=0, atol=1e-9)


# -- pruning and validation ---------------------------------------------------------------

@pytest.fixture
def destabilised(rng):
    X = rng.uniform(1, 3, (120, 3))
    truth = et.mul(et.var(0), et.var(1))
    y = 3.0 * X[:, 0] * X[:, 1] + rng.normal(0, 0.1, 120)
    noise = et.mul(et.mul(et.var(2), et.var(2)), et.mul(et.var(2), et.var(2)))
    z = ahsam.AbstractedFeature(1, "a", et.add(truth, et.mul(noise, noise)))
    view = et.DataView(X)
    pop = evaluated("a", [[et.var(2)], [et.var(0)]], view, y)
    return X, y, view, pop, z, truth


def test_pruning_removes_destabilising_subtree(destabilised):
    X, y, view, pop, z, truth = destabilised
    out = ahsam.prune_and_validate(z, pop, view, y)
    assert out.initial_rmse > out.baseline
    assert out.feature is not None and out.feature.expression == truth
    assert out.final_rmse <= out.baseline == pop.mean_fitness


def test_exact_abstraction_accepted_unpruned(destabilised):
    X, y, view, pop, _, _ = destabilised
    exact = ahsam.AbstractedFeature(1, "a", et.mul(et.const(3.0), et.mul(et.var(0), et.var(1))))
    yy = et.evaluate_batch(exact.expression, X)
    out = ahsam.prune_and_validate(exact, pop, view, yy)
    assert out.rounds == 0 and out.final_rmse == pytest.approx(0, abs=1e-9)
    assert out.feature.expression == exact.expression


def test_hopeless_abstraction_rejected(destabilised):
    X, y, view, pop, _, _ = destabilised
    useless = ahsam.AbstractedFeature(1, "a", et.add(et.var(2), et.const(1.0)))
    pop = dataclasses.replace(pop, individuals=[dataclasses.replace(i, isolated_fitness=1e-6) for i in pop.individuals])
    out = ahsam.prune_and_validate(useless, pop, view, y)
    assert out.feature is None and out.rounds <= ahsam.MAX_PRUNING_ROUNDS


# -- injection and activation ----------------------------------------------------------------

def test_inject_registers_and_extends_terminals(destabilised):
    X, y, view, pop, _, truth = destabilised
    reg = view.registry
    z = ahsam.AbstractedFeature(reg.next_id, "a", truth)
    pops = ahsam.inject(z, [pop, dataclasses.replace(pop, id="b")], reg)
    assert reg.lookup(z.id) == truth
    assert all(z.id in p.terminal_set.abstractions for p in pops)
    with pytest.raises(StructuralError):
        ahsam.inject(z, pops, reg)


def test_injected_terminal_reaches_offspring(rng):
    terms = et.TerminalSet((0, 1, 2), (1,))
    hits = 0
    tree = et.var(0)
    for _ in range(200):
        if 1 in et.subtree_mutation(tree, terms, 6, rng).abstractions():
            hits += 1
    assert hits > 0


def test_activation_accepts_sound_abstractions(rng):
    X = rng.uniform(1, 3, (100, 3))
    y = X[:, 0] * X[:, 1] + X[:, 2] + rng.normal(0, 0.05, 100)
    tv = et.DataView(X[:80])
    vv = et.DataView(X[80:], tv.registry)
    pops = [evaluated(n, [[et.mul(et.var(0), et.var(1))], [et.var(v)], [et.const(2)]], tv, y[:80], (0, 1, 2))
            for n, v in (("a", 0), ("b", 2))]
    pops = [dataclasses.replace(p, stagnation_counter=30) for p in pops]
    means = {p.id: p.mean_fitness for p in pops}
    new, event = ahsam.activate(pops, tv.registry, tv, y[:80], vv, y[80:], alpha=0.05, generation=7)
    assert event["generation"] == 7 and 1 <= event["accepted"] <= ahsam.MAX_ACCEPTED
    assert all(p.stagnation_counter == 0 for p in new)
    for c in event["candidates"]:
        if c["accepted"]:
            assert c["final_rmse"] <= means[c["population"]]
            expr = tv.registry.lookup(c["id"])
            assert not expr.abstractions()
    ids = sorted(tv.registry.expressions)
    assert ids == list(range(1, len(ids) + 1))
    assert len(set(tv.registry.expressions.values())) == len(ids)
