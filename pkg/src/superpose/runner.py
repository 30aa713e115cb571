"""One complete evolutionary run in multi-population or baseline mode."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import ahsam
from . import exprtree as et
from .data import Dataset, PartitionScheme
from .ensemble import EnsembleModel, build_ensemble, predict_full
from .evolution import (EvolutionConfig, evaluate_population, improved, initial_population,
                        next_generation, update_stagnation)
from .linfit import rmse

DIGSP_GENES = 3
BGP_GENES = 9


@dataclass
class RunResult:
    model: EnsembleModel
    generations: int
    best_generation: int
    train_rmse: float
    val_rmse: float
    test_rmse: float = float("nan")
    ahsam_events: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    best_fitness_histories: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    stop_reason: str = ""


def evolve(train: Dataset, val: Dataset, groups: dict, cfg: EvolutionConfig, *,
           ahsam_enabled: bool = True, top_m: int = 1, alpha: float = ahsam.DEFAULT_ALPHA,
           callback=None) -> RunResult:
    """Evolve one population per entry of ``groups`` (name -> feature indices).

    Abstraction fires when every population has stalled for
    ``cfg.ahsam_trigger`` generations or when the ensemble validation RMSE
    has not improved for that long (counted from the last improvement or
    activation). The run terminates at ``cfg.max_generations`` or after
    ``cfg.stall_generations`` generations without ensemble improvement; with
    abstraction enabled that rule only applies after the first activation,
    and an activation that injects something restarts the stall count.
    """
    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(groups))
    rngs = [np.random.default_rng(s) for s in seeds]
    registry = et.AbstractionRegistry()
    tv = et.DataView(train.X, registry)
    vv = et.DataView(val.X, registry)
    ytr, yva = train.y, val.y

    pops = []
    for (name, idx), rng in zip(groups.items(), rngs):
        terms = et.TerminalSet(tuple(int(i) for i in idx), (), tuple(cfg.constant_range))
        pop = initial_population(name, terms, cfg, rng)
        pop = evaluate_population(pop, tv, ytr, cfg, rng)
        pops.append(update_stagnation(pop))

    multi = len(pops) > 1
    n_elite = max(1, top_m) if multi else 1

    def ensemble(pops):
        return build_ensemble(pops, top_m, tv, ytr, vv, yva, cfg.lambda1, cfg.lambda2)

    model = ensemble(pops)
    best, best_gen = model, 0
    stall = 0
    since_trigger = 0
    activations = 0
    events = []
    val_history = [model.val_rmse]
    gen = 0
    stop = "max_generations"
    while gen < cfg.max_generations:
        gen += 1
        new = []
        for pop, rng in zip(pops, rngs):
            pop = next_generation(pop, cfg, rng, n_elite)
            pop = evaluate_population(pop, tv, ytr, cfg, rng)
            new.append(update_stagnation(pop))
        pops = new
        model = ensemble(pops)
        val_history.append(model.val_rmse)
        if improved(best.val_rmse, model.val_rmse):
            best, best_gen = model, gen
            stall = since_trigger = 0
        else:
            stall += 1
            since_trigger += 1
        if ahsam_enabled and multi and (ahsam.should_trigger(pops, cfg.ahsam_trigger)
                                        or since_trigger >= cfg.ahsam_trigger):
            pops, event = ahsam.activate(pops, registry, tv, ytr, vv, yva, alpha=alpha, generation=gen)
            events.append(event)
            activations += 1
            since_trigger = 0
            if event["accepted"]:
                stall = 0
        if callback is not None:
            callback(gen, pops, model)
        if stall >= cfg.stall_generations and (not ahsam_enabled or not multi or activations > 0):
            stop = "stall"
            break

    return RunResult(
        model=best, generations=gen, best_generation=best_gen,
        train_rmse=best.train_rmse, val_rmse=best.val_rmse,
        ahsam_events=events, val_history=val_history,
        best_fitness_histories={p.id: list(p.best_fitness_history) for p in pops},
        wall_seconds=time.perf_counter() - t0, stop_reason=stop)


def run_mode(mode: str, train: Dataset, val: Dataset, test: Dataset, scheme: PartitionScheme,
             cfg: EvolutionConfig, *, top_m: int = 1, alpha: float = ahsam.DEFAULT_ALPHA,
             genes: int | None = None) -> RunResult:
    """Run ``digsp`` (one population per partition group, abstraction on) or
    ``bgp`` (single population over every feature, abstraction off)."""
    import dataclasses

    if mode == "digsp":
        groups = scheme.indices(train.feature_names)
        cfg = dataclasses.replace(cfg, genes_per_individual=genes or DIGSP_GENES)
        res = evolve(train, val, groups, cfg, ahsam_enabled=True, top_m=top_m, alpha=alpha)
    elif mode == "bgp":
        groups = {"all": tuple(range(len(train.feature_names)))}
        cfg = dataclasses.replace(cfg, genes_per_individual=genes or BGP_GENES)
        res = evolve(train, val, groups, cfg, ahsam_enabled=False, top_m=1, alpha=alpha)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    res.test_rmse = rmse(predict_full(res.model, test.X), test.y)
    return res
