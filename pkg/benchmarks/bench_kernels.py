"""Compare the compiled kernels with the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times expression evaluation, elastic-net coordinate descent and one full
population evaluation (CV fitness of 30 three-gene individuals) under each
backend, and checks that both give bit-identical results.
"""
import argparse
import time

import numpy as np

from superpose import _backend, _fallback
from superpose import exprtree as et
from superpose.data import default_partitions, split, SplitSpec, synth_superposition
from superpose.evolution import EvolutionConfig, evaluate_population, initial_population

try:
    from superpose import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def use(kernels):
    _backend.eval_program = kernels.eval_program
    _backend.enet_cd = kernels.enet_cd


def bench_eval(kernels, rng, repeat):
    terms = et.TerminalSet(tuple(range(9)))
    trees = [et.grow_init(terms, 8, rng) for _ in range(200)]
    X = rng.uniform(0.5, 10.0, (139, 9))
    progs = [et.encode(t, 9) for t in trees]

    def run():
        return [kernels.eval_program(c, a, X, s) for c, a, s in progs]
    return best_of(run, repeat)


def bench_enet(kernels, rng, repeat):
    problems = []
    for _ in range(200):
        Z = rng.normal(size=(139, 9))
        Z = (Z - Z.mean(0)) / Z.std(0)
        y = Z @ rng.normal(size=9) + rng.normal(size=139)
        problems.append((Z.T @ Z / 139, Z.T @ (y - y.mean()) / 139))

    def run():
        out = []
        for G, c in problems:
            b = np.zeros(9)
            kernels.enet_cd(G, c, 1e-3, 1e-3, 1e-8, 10000, b)
            out.append(b)
        return out
    return best_of(run, repeat)


def bench_population(kernels, repeat):
    use(kernels)
    ds = synth_superposition(seed=0)
    train, _, _ = split(ds, SplitSpec(seed=0))
    groups = default_partitions().indices()
    cfg = EvolutionConfig(population_size=30)

    def run():
        out = []
        for k, (name, idx) in enumerate(groups.items()):
            rng = np.random.default_rng(k)
            pop = initial_population(name, et.TerminalSet(idx), cfg, rng)
            view = et.DataView(train.X)
            out.append([i.isolated_fitness for i in evaluate_population(pop, view, train.y, cfg, rng).individuals])
        return out
    return best_of(run, repeat)


def identical(a, b):
    def flat(v):
        return np.concatenate([np.ravel(x) for x in v])
    return np.array_equal(flat(a), flat(b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
        return
    original = (_backend.eval_program, _backend.enet_cd)
    rows = []
    for label, bench in (("eval 200 trees x 139 rows", lambda k: bench_eval(k, np.random.default_rng(0), args.repeat)),
                         ("enet 200 fits, p=9", lambda k: bench_enet(k, np.random.default_rng(0), args.repeat)),
                         ("population fitness 3x30", lambda k: bench_population(k, args.repeat))):
        t_py, out_py = bench(_fallback)
        t_cy, out_cy = bench(_kernels)
        rows.append((label, t_py, t_cy, identical(out_py, out_cy)))
    _backend.eval_program, _backend.enet_cd = original
    print(f"{'benchmark':28s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}  identical")
    for label, t_py, t_cy, same in rows:
        print(f"{label:28s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f}  {same}")


if __name__ == "__main__":
    main()
