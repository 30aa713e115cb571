"""Multi-run experiments: configuration, seeding, run reports and analysis."""
from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from . import data
from . import exprtree as et
from .ahsam import DEFAULT_ALPHA
from .ensemble import EnsembleModel, Member, closed_form
from .errors import ConfigurationError, InputError, SuperposeError, UndefinedElasticityError
from .evolution import EvolutionConfig, Individual
from .linfit import LinearFit
from .runner import BGP_GENES, DIGSP_GENES, run_mode

MODES = ("digsp", "bgp")
ELASTICITY_VARIABLES = ("Vf", "fc", "rho", "a_over_d")
REPORT_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Every key of the plain-text config file, with its default."""

    mode: str = "both"
    dataset: str = "synth"
    scheme: str = "full"
    n_runs: int = 30
    top_m: int = 1
    alpha: float = DEFAULT_ALPHA
    output_dir: str = "results"
    master_seed: int = 0
    jobs: int = 1
    train_fraction: float = 0.65
    val_fraction: float = 0.10
    test_fraction: float = 0.25
    population_size: int = 50
    max_generations: int = 300
    stall_generations: int = 30
    ahsam_trigger: int = 25
    digsp_genes: int = DIGSP_GENES
    bgp_genes: int = BGP_GENES
    max_tree_depth: int = 15
    p_c: float = 0.84
    p_m: float = 0.14
    p_r: float = 0.02
    constant_min: float = -10.0
    constant_max: float = 10.0
    k_folds: int = 5
    tournament_size: int = 4
    p_constant_mutation: float = 0.25
    lambda1: float = 1e-3
    lambda2: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES + ("both",):
            raise ConfigurationError(f"mode must be digsp, bgp or both, got {self.mode!r}")
        if self.n_runs < 1:
            raise ConfigurationError("n_runs must be >= 1")
        if self.top_m < 1:
            raise ConfigurationError("top_m must be >= 1")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        data.default_partitions(self.scheme)
        self.split_spec(0)
        self.evolution_config(0)

    @property
    def modes(self) -> tuple:
        return MODES if self.mode == "both" else (self.mode,)

    def split_spec(self, seed: int) -> data.SplitSpec:
        return data.SplitSpec(self.train_fraction, self.val_fraction, self.test_fraction, seed)

    def evolution_config(self, seed: int) -> EvolutionConfig:
        return EvolutionConfig(
            population_size=self.population_size, max_generations=self.max_generations,
            stall_generations=self.stall_generations, ahsam_trigger=self.ahsam_trigger,
            max_tree_depth=self.max_tree_depth, p_c=self.p_c, p_m=self.p_m, p_r=self.p_r,
            constant_range=(self.constant_min, self.constant_max), k_folds=self.k_folds,
            tournament_size=self.tournament_size, p_constant_mutation=self.p_constant_mutation,
            lambda1=self.lambda1, lambda2=self.lambda2, seed=seed)

    def genes(self, mode: str) -> int:
        return self.digsp_genes if mode == "digsp" else self.bgp_genes

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, kind, text: str):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigurationError(f"config key {name!r}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def config_types() -> dict:
    types = {"int": int, "float": float, "str": str}
    return {f.name: types[f.type] for f in dataclasses.fields(ExperimentConfig)}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    types = config_types()
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, types[key], value)
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def format_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())


def derive_seeds(master_seed: int, run_index: int, mode: str):
    """``(split_seed, gp_seed)`` for one run.

    The split seed ignores the mode, so both modes see the same partition
    of the data in run ``run_index``.
    """
    split_seed = int(np.random.SeedSequence([master_seed, run_index, 0]).generate_state(1)[0])
    gp_seed = int(np.random.SeedSequence([master_seed, run_index, 1, MODES.index(mode)]).generate_state(1)[0])
    return split_seed, gp_seed


def load_dataset(spec: str) -> data.Dataset:
    """``synth`` / ``synth:n=213,noise_sd=0.5,seed=0`` or a CSV path."""
    if spec == "synth" or spec.startswith("synth:"):
        kwargs = {}
        if ":" in spec:
            for item in spec.split(":", 1)[1].split(","):
                if not item.strip():
                    continue
                k, _, v = item.partition("=")
                k = k.strip()
                if k not in ("n", "noise_sd", "seed"):
                    raise ConfigurationError(f"unknown synthetic dataset option {k!r}")
                kwargs[k] = float(v) if k == "noise_sd" else int(v)
        return data.synth_superposition(**kwargs)
    return data.load_csv(spec)


# -- model (de)serialization --------------------------------------------------

def _fit_to_dict(fit: LinearFit) -> dict:
    return {"beta": [float(b) for b in fit.beta], "intercept": float(fit.intercept),
            "lambda1": fit.lambda1, "lambda2": fit.lambda2, "train_rmse": float(fit.train_rmse),
            "n_iter": int(fit.n_iter), "converged": bool(fit.converged)}


def _fit_from_dict(d: dict) -> LinearFit:
    return LinearFit(np.array(d["beta"], dtype=np.float64), d["intercept"], d["lambda1"],
                     d["lambda2"], d["train_rmse"], d["n_iter"], d["converged"])


def model_to_dict(model: EnsembleModel, feature_names=data.FEATURES) -> dict:
    """JSON-ready model; gene texts use ``x<i>``/``z<k>`` names and round-trip
    exactly through :func:`model_from_dict`."""
    return {
        "n_features": model.n_features,
        "feature_names": list(feature_names),
        "registry": {str(k): et.serialize(t) for k, t in sorted(model.registry.expressions.items())},
        "members": [{
            "population": m.population,
            "genes": [et.serialize(g) for g in m.individual.genes],
            "isolated_fitness": m.individual.isolated_fitness,
            "fit": _fit_to_dict(m.individual.fit),
        } for m in model.members],
        "fusion": _fit_to_dict(model.fusion),
        "train_rmse": float(model.train_rmse),
        "val_rmse": float(model.val_rmse),
        "closed_form": et.serialize(closed_form(model), list(feature_names)),
    }


def model_from_dict(d: dict) -> EnsembleModel:
    registry = et.AbstractionRegistry()
    for k in sorted(d["registry"], key=int):
        registry.register(int(k), et.parse(d["registry"][k]))
    members = tuple(
        Member(m["population"], Individual(tuple(et.parse(g) for g in m["genes"]),
                                           _fit_from_dict(m["fit"]), m["isolated_fitness"]))
        for m in d["members"])
    return EnsembleModel(members, _fit_from_dict(d["fusion"]), d["train_rmse"], d["val_rmse"],
                         registry, d["n_features"])


# -- runs ---------------------------------------------------------------------

@dataclass
class RunReport:
    run_index: int
    mode: str
    seed: int
    split_seed: int
    status: str = "ok"
    error: str = ""
    train_rmse: float = float("nan")
    val_rmse: float = float("nan")
    test_rmse: float = float("nan")
    generations: int = 0
    best_generation: int = 0
    stop_reason: str = ""
    ahsam_events: list = field(default_factory=list)
    wall_seconds: float = 0.0
    parsimony: dict = field(default_factory=dict)
    x_median: list = field(default_factory=list)
    model: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["version"] = REPORT_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def ensemble(self) -> EnsembleModel:
        if self.model is None:
            raise InputError(f"run {self.run_index} ({self.mode}) has no model")
        return model_from_dict(self.model)

    def numeric_fields(self) -> dict:
        """Report content without timing, for determinism comparisons."""
        d = self.to_dict()
        d.pop("wall_seconds")
        return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_single(cfg: ExperimentConfig, ds: data.Dataset, run_index: int, mode: str) -> RunReport:
    """One run of one mode; errors are captured in the report, not raised."""
    split_seed, gp_seed = derive_seeds(cfg.master_seed, run_index, mode)
    report = RunReport(run_index, mode, gp_seed, split_seed,
                       x_median=[float(v) for v in ds.medians()])
    try:
        train, val, test = data.split(ds, cfg.split_spec(split_seed))
        res = run_mode(mode, train, val, test, data.default_partitions(cfg.scheme),
                       cfg.evolution_config(gp_seed), top_m=cfg.top_m, alpha=cfg.alpha,
                       genes=cfg.genes(mode))
    except (SuperposeError, ArithmeticError, ValueError) as exc:
        report.status = "failed"
        report.error = f"{type(exc).__name__}: {exc}"
        return report
    p = analysis.parsimony(res.model)
    report.train_rmse, report.val_rmse, report.test_rmse = res.train_rmse, res.val_rmse, res.test_rmse
    report.generations, report.best_generation = res.generations, res.best_generation
    report.stop_reason = res.stop_reason
    report.ahsam_events = _jsonable(res.ahsam_events)
    report.wall_seconds = res.wall_seconds
    report.parsimony = dataclasses.asdict(p)
    report.model = model_to_dict(res.model, ds.feature_names)
    return report


def report_path(out_dir, run_index: int, mode: str) -> Path:
    return Path(out_dir) / f"run_{run_index:03d}_{mode}.json"


def write_report(report: RunReport, out_dir) -> Path:
    """Atomic write: a crash never leaves a half-written report behind."""
    path = report_path(out_dir, report.run_index, report.mode)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(_jsonable(report.to_dict()), indent=1), encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_reports(out_dir) -> list:
    reports = [RunReport.from_dict(json.loads(p.read_text(encoding="utf-8")))
               for p in sorted(Path(out_dir).glob("run_*.json"))]
    if not reports:
        raise InputError(f"no run reports found in {out_dir}")
    return reports


SUMMARY_COLUMNS = ("run_index", "mode", "status", "seed", "split_seed", "train_rmse", "val_rmse",
                   "test_rmse", "generations", "best_generation", "stop_reason", "n_ahsam",
                   "n_terms", "tree_size_nodes", "operator_count", "wall_seconds")


def write_summary(reports, out_dir) -> Path:
    path = Path(out_dir) / "summary.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in sorted(reports, key=lambda r: (r.run_index, r.mode)):
            p = r.parsimony or {}
            w.writerow([r.run_index, r.mode, r.status, r.seed, r.split_seed, repr(r.train_rmse),
                        repr(r.val_rmse), repr(r.test_rmse), r.generations, r.best_generation,
                        r.stop_reason, len(r.ahsam_events), p.get("n_terms", ""),
                        p.get("tree_size_nodes", ""), p.get("operator_count", ""),
                        f"{r.wall_seconds:.3f}"])
    return path


def _task(args):
    cfg, ds, run_index, mode = args
    return run_single(cfg, ds, run_index, mode)


def run_experiment(cfg: ExperimentConfig, ds: data.Dataset | None = None, *, persist: bool = True,
                   progress=None) -> list:
    """All runs of all configured modes.

    Each report is written as soon as its run finishes (by this process
    only, whatever ``cfg.jobs`` is), followed by ``summary.csv``. Runs are
    returned ordered by ``(run_index, mode)``.
    """
    if ds is None:
        ds = load_dataset(cfg.dataset)
    out_dir = Path(cfg.output_dir)
    if persist:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(format_config(cfg), encoding="utf-8")
    tasks = [(cfg, ds, i, m) for i in range(cfg.n_runs) for m in cfg.modes]
    reports = []

    def done(rep):
        reports.append(rep)
        if persist:
            write_report(rep, out_dir)
            write_summary(reports, out_dir)
        if progress is not None:
            progress(rep)

    if cfg.jobs == 1:
        for t in tasks:
            done(_task(t))
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for rep in pool.map(_task, tasks):
                done(rep)
    return sorted(reports, key=lambda r: (r.run_index, r.mode))


# -- analysis -----------------------------------------------------------------

def analyze(reports, scheme: str = "full", feature_names=data.FEATURES,
            variables=ELASTICITY_VARIABLES, epsilon: float = analysis.DEFAULT_EPSILON,
            n_boot: int = 10_000, seed: int = 0) -> dict:
    """Post-hoc statistics over run reports (in memory or reloaded)."""
    part = data.default_partitions(scheme)
    ok = [r for r in reports if r.ok]
    out = {"n_reports": len(reports), "n_failed": len(reports) - len(ok), "notices": [],
           "modes": {}, "paired": None}
    by_mode = {m: sorted((r for r in ok if r.mode == m), key=lambda r: r.run_index) for m in MODES}
    for mode, reps in by_mode.items():
        if not reps:
            continue
        models = [r.ensemble() for r in reps]
        entry = {"n_runs": len(reps)}
        for split in ("train", "val", "test"):
            entry[split] = analysis.summarize([getattr(r, f"{split}_rmse") for r in reps])
        for key in ("n_terms", "tree_size_nodes", "operator_count"):
            entry[key] = analysis.summarize([r.parsimony[key] for r in reps])
        entry["generations"] = analysis.summarize([r.generations for r in reps])
        entry["wall_seconds"] = analysis.summarize([r.wall_seconds for r in reps])
        entry["ahsam_activations"] = analysis.summarize([len(r.ahsam_events) for r in reps])
        entry["contributions"] = analysis.summarize_contributions(
            [analysis.mechanism_contributions(mdl, r.x_median, part, feature_names)
             for mdl, r in zip(models, reps)])
        el = {}
        for v in variables:
            vals = []
            for mdl, r in zip(models, reps):
                try:
                    vals.append(analysis.elasticity(mdl, r.x_median, v, epsilon, feature_names))
                except UndefinedElasticityError:
                    out["notices"].append(f"{mode} run {r.run_index}: elasticity of {v} undefined")
            if vals:
                res = analysis.summarize_elasticities(v, vals, epsilon)
                el[v] = {"median": res.median, "iqr": res.iqr, "mean": res.mean, "sd": res.sd,
                         "values": [float(x) for x in res.elasticities]}
        entry["elasticity"] = el
        out["modes"][mode] = entry
    missing = [m for m in MODES if not by_mode[m]]
    if missing:
        out["notices"].append(f"no successful {', '.join(missing)} runs; paired tests skipped")
        return out
    bgp = {r.run_index: r for r in by_mode["bgp"]}
    dig = {r.run_index: r for r in by_mode["digsp"]}
    common = sorted(set(bgp) & set(dig))
    if len(common) < len(set(bgp) | set(dig)):
        out["notices"].append("some runs lack a partner in the other mode; they are excluded from paired tests")
    if not common:
        out["notices"].append("no matched runs; paired tests skipped")
        return out
    paired = {"run_indices": common}
    for split in ("train", "val", "test"):
        d = np.array([getattr(bgp[i], f"{split}_rmse") - getattr(dig[i], f"{split}_rmse") for i in common])
        t = analysis.wilcoxon_signed_rank(d, "greater")
        rs = analysis.wilcoxon_rank_sum([getattr(dig[i], f"{split}_rmse") for i in common],
                                        [getattr(bgp[i], f"{split}_rmse") for i in common])
        lo, hi = analysis.bootstrap_ci_mean(d, n_boot=n_boot, seed=seed) if len(d) > 1 else (float("nan"),) * 2
        paired[split] = {
            "deltas": [float(x) for x in d], "mean_delta": float(d.mean()),
            "w_statistic": t.w_statistic, "p_value": t.p_value, "exact": t.exact,
            "rank_biserial": t.rank_biserial, "win_fraction": t.win_fraction,
            "bootstrap_ci": [lo, hi],
            "rank_sum_statistic": rs.statistic, "rank_sum_p": rs.p_two_sided,
        }
    out["paired"] = paired
    return out


def write_analysis(result: dict, out_dir) -> Path:
    path = Path(out_dir) / "analysis.json"
    path.write_text(json.dumps(_jsonable(result), indent=1), encoding="utf-8")
    return path
