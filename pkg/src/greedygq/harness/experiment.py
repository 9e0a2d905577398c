"""Multi-seed experiments: configuration, presets, parallel execution and artifacts.

An experiment runs every configured algorithm for ``n_seeds`` seeds on one
problem and writes::

    out/manifest.json                  full config, version, seeds, conventions
    out/summary.json                   per-algorithm headline numbers
    out/traces/<label>/seed_<k>.csv    one trace per run
    out/bands/<label>__<metric>.csv    5/50/95 percentile bands
    out/plots/<metric>.svg             bands of all algorithms (if plots=true)

Re-running the same configuration rewrites byte-identical files.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .. import __version__
from ..algorithms import NestedConfig, make_schedule, run_minibatch, run_nested_loop, run_vanilla
from ..errors import ConfigError
from ..features import random_features
from ..mdp import TabularMdp, frozen_lake, generate_garnet, uniform_behavior
from ..oracle import ExactModel
from ..policy import SoftmaxSpec
from .files import write_atomic
from .metrics import VARIANCE_CONVENTION, MetricsTrace, aggregate_bands
from .plotting import plot

log = logging.getLogger(__name__)

ALGORITHMS = ("vanilla", "minibatch", "nested")
BAND_METRICS = ("min_grad_norm_sq", "mc_variance", "tracking_error")
EARLY_FRACTION = 0.05


# -- configuration ----------------------------------------------------------------


def _take(doc: dict, key: str, path: str, kind, default=None, check=None, why=""):
    where = f"{path}.{key}" if path else key
    if key not in doc:
        if default is ConfigError:
            raise ConfigError(where, "missing required key")
        return default
    val = doc[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is int and isinstance(val, float) and val.is_integer():
        val = int(val)
    if not isinstance(val, kind) or (kind in (int, float) and isinstance(val, bool)):
        raise ConfigError(where, f"expected {kind.__name__}, got {type(val).__name__} {val!r}")
    if check is not None and not check(val):
        raise ConfigError(where, f"invalid value {val!r}" + (f" ({why})" if why else ""))
    return val


def _reject_unknown(doc: dict, allowed, path: str):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _positive(x):
    return x > 0


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "garnet"
    n_states: int = 10
    n_actions: int = 5
    branching: int = 10
    n_features: int = 5
    seed: int = 1
    slippery: bool = False
    path: str = ""

    @classmethod
    def from_dict(cls, doc: dict, path: str = "problem") -> "ProblemConfig":
        if not isinstance(doc, dict):
            raise ConfigError(path, "expected a table")
        _reject_unknown(doc, {f.name for f in fields(cls)}, path)
        d = cls()
        return cls(
            kind=_take(doc, "kind", path, str, d.kind, lambda k: k in ("garnet", "frozenlake", "file"),
                       "one of garnet, frozenlake, file"),
            n_states=_take(doc, "n_states", path, int, d.n_states, _positive),
            n_actions=_take(doc, "n_actions", path, int, d.n_actions, _positive),
            branching=_take(doc, "branching", path, int, d.branching, _positive),
            n_features=_take(doc, "n_features", path, int, d.n_features, _positive),
            seed=_take(doc, "seed", path, int, d.seed, lambda s: s >= 0),
            slippery=_take(doc, "slippery", path, bool, d.slippery),
            path=_take(doc, "path", path, str, d.path),
        )


@dataclass(frozen=True)
class AlgorithmConfig:
    algorithm: str = "vanilla"
    label: str = ""
    alpha: float = 0.1
    beta: float = 0.5
    schedule: str = "constant"
    a: float = 0.5
    b: float = 0.5
    B: int = 1
    M: int = 30
    T_c: int = 10
    T: int = 0
    eval_every: int = 1

    @property
    def name(self) -> str:
        return self.label or self.algorithm

    @property
    def samples_per_iteration(self) -> int:
        if self.algorithm == "vanilla":
            return 1
        if self.algorithm == "minibatch":
            return self.B
        return self.B * self.T_c + self.M

    def batch_size(self) -> int:
        """Samples averaged into one theta update."""
        return {"vanilla": 1, "minibatch": self.B, "nested": self.M}[self.algorithm]

    @classmethod
    def from_dict(cls, doc: dict, path: str) -> "AlgorithmConfig":
        if not isinstance(doc, dict):
            raise ConfigError(path, "expected a table")
        _reject_unknown(doc, {f.name for f in fields(cls)}, path)
        algo = _take(doc, "algorithm", path, str, ConfigError, lambda a: a in ALGORITHMS,
                     "one of " + ", ".join(ALGORITHMS))
        d = cls(algorithm=algo, B={"vanilla": 1, "minibatch": 30, "nested": 5}[algo])
        cfg = cls(
            algorithm=algo,
            label=_take(doc, "label", path, str, d.label),
            alpha=_take(doc, "alpha", path, float, d.alpha, _positive),
            beta=_take(doc, "beta", path, float, d.beta, _positive),
            schedule=_take(doc, "schedule", path, str, d.schedule, lambda m: m in ("constant", "polynomial")),
            a=_take(doc, "a", path, float, d.a, lambda a: 0.5 <= a <= 1.0, "need 1/2 <= a <= 1"),
            b=_take(doc, "b", path, float, d.b, _positive),
            B=_take(doc, "B", path, int, d.B, _positive),
            M=_take(doc, "M", path, int, d.M, _positive),
            T_c=_take(doc, "T_c", path, int, d.T_c, lambda t: t >= 0),
            T=_take(doc, "T", path, int, d.T, lambda t: t >= 0),
            eval_every=_take(doc, "eval_every", path, int, d.eval_every, _positive),
        )
        if cfg.b > cfg.a:
            raise ConfigError(f"{path}.b", f"need 0 < b <= a, got b={cfg.b}, a={cfg.a}")
        if cfg.algorithm == "vanilla" and cfg.B != 1:
            raise ConfigError(f"{path}.B", "vanilla Greedy-GQ uses one sample per step")
        return cfg


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    algorithms: tuple[AlgorithmConfig, ...] = (AlgorithmConfig(),)
    gamma: float = 0.95
    sigma: float = 1.0
    radius: float = 100.0
    sampler: str = "iid"
    n_seeds: int = 1
    seed: int = 0
    budget: int = 1000
    mc_samples: int = 100
    final: bool = True
    grid_points: int = 101
    plots: bool = True

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.n_seeds)]

    def horizon(self, algo: AlgorithmConfig) -> int:
        return algo.T or max(1, self.budget // algo.samples_per_iteration)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithms"] = [asdict(a) for a in self.algorithms]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("", "configuration must be a table")
        doc = dict(doc)
        if "algorithm" in doc:  # single-run form
            keys = {f.name for f in fields(AlgorithmConfig)}
            algo = {k: doc.pop(k) for k in list(doc) if k in keys}
            if "algorithms" in doc:
                raise ConfigError("algorithm", "give either 'algorithm' or 'algorithms', not both")
            doc["algorithms"] = [algo]
            doc.setdefault("budget", 0)
        allowed = {f.name for f in fields(cls)}
        _reject_unknown(doc, allowed, "")
        d = cls()
        algos = doc.get("algorithms", [asdict(AlgorithmConfig())])
        if not isinstance(algos, list) or not algos:
            raise ConfigError("algorithms", "expected a non-empty list")
        parsed = tuple(AlgorithmConfig.from_dict(a, f"algorithms[{i}]") for i, a in enumerate(algos))
        names = [a.name for a in parsed]
        if len(set(names)) != len(names):
            raise ConfigError("algorithms", f"labels must be unique, got {names}")
        cfg = cls(
            name=_take(doc, "name", "", str, d.name),
            problem=ProblemConfig.from_dict(doc.get("problem", {})),
            algorithms=parsed,
            gamma=_take(doc, "gamma", "", float, d.gamma, lambda g: 0 <= g < 1, "need 0 <= gamma < 1"),
            sigma=_take(doc, "sigma", "", float, d.sigma, _positive),
            radius=_take(doc, "radius", "", float, d.radius, _positive),
            sampler=_take(doc, "sampler", "", str, d.sampler, lambda s: s in ("iid", "markov")),
            n_seeds=_take(doc, "n_seeds", "", int, d.n_seeds, _positive),
            seed=_take(doc, "seed", "", int, d.seed, lambda s: s >= 0),
            budget=_take(doc, "budget", "", int, d.budget, lambda b: b >= 0),
            mc_samples=_take(doc, "mc_samples", "", int, d.mc_samples, lambda n: n >= 0),
            final=_take(doc, "final", "", bool, d.final),
            grid_points=_take(doc, "grid_points", "", int, d.grid_points, lambda n: n >= 2),
            plots=_take(doc, "plots", "", bool, d.plots),
        )
        for i, algo in enumerate(cfg.algorithms):
            if not algo.T and not cfg.budget:
                raise ConfigError(f"algorithms[{i}].T", "set T or a positive top-level budget")
        return cfg


def load_config(path) -> ExperimentConfig:
    """Read a JSON or TOML experiment configuration."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        import tomli

        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("", f"{path}: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


# -- presets -----------------------------------------------------------------------

_PAPER_ALGOS = [
    {"algorithm": "vanilla", "alpha": 0.1, "beta": 0.5, "eval_every": 1},
    {"algorithm": "minibatch", "alpha": 0.1, "beta": 0.5, "B": 30, "eval_every": 1},
    {"algorithm": "nested", "alpha": 0.1, "beta": 0.5, "M": 30, "T_c": 10, "B": 5, "eval_every": 1},
]

_PAPER_COMMON = {"gamma": 0.95, "sigma": 1.0, "radius": 100.0, "sampler": "iid",
                 "n_seeds": 40, "seed": 0, "budget": 10000, "mc_samples": 100,
                 "algorithms": _PAPER_ALGOS}

PRESETS: dict[str, dict] = {
    "paper-garnet1": {"name": "paper-garnet1", **_PAPER_COMMON,
                      "problem": {"kind": "garnet", "n_states": 10, "n_actions": 5,
                                  "branching": 10, "n_features": 5, "seed": 1}},
    "paper-garnet2": {"name": "paper-garnet2", **_PAPER_COMMON,
                      "problem": {"kind": "garnet", "n_states": 8, "n_actions": 10,
                                  "branching": 5, "n_features": 4, "seed": 7}},
    "paper-lake1": {"name": "paper-lake1", **_PAPER_COMMON,
                    "problem": {"kind": "frozenlake", "n_features": 4, "seed": 1}},
    "paper-lake2": {"name": "paper-lake2", **_PAPER_COMMON,
                    "problem": {"kind": "frozenlake", "n_features": 5, "seed": 2}},
    "smoke": {"name": "smoke", "n_seeds": 1, "budget": 10, "mc_samples": 10, "grid_points": 5,
              "problem": {"kind": "garnet", "n_states": 10, "n_actions": 5,
                          "branching": 10, "n_features": 5, "seed": 1},
              "algorithms": [{"algorithm": "vanilla", "T": 10}]},
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.from_dict({**PRESETS[name], **overrides})


# -- execution ---------------------------------------------------------------------


def build_problem(cfg: ExperimentConfig):
    """``(mdp, behavior policy, features)`` for the configured problem."""
    p = cfg.problem
    if p.kind == "garnet":
        mdp, feats = generate_garnet(p.n_states, p.n_actions, p.branching, p.n_features, p.seed,
                                     discount=cfg.gamma)
    elif p.kind == "frozenlake":
        mdp = frozen_lake(p.slippery, discount=cfg.gamma)
        feats = random_features(p.n_features, mdp.n_states, mdp.n_actions, p.seed)
    else:
        if not p.path:
            raise ConfigError("problem.path", "required for kind='file'")
        mdp, feats = TabularMdp.from_json(Path(p.path).read_text())
        mdp = TabularMdp(mdp.transition, mdp.reward, cfg.gamma, mdp.start_state, mdp.layout_tag)
        if feats is None:
            feats = random_features(p.n_features, mdp.n_states, mdp.n_actions, p.seed)
    return mdp, uniform_behavior(mdp), feats


_CACHE: dict = {}


def _problem_and_model(cfg: ExperimentConfig):
    key = json.dumps({"problem": asdict(cfg.problem), "gamma": cfg.gamma, "sigma": cfg.sigma},
                     sort_keys=True)
    if key not in _CACHE:
        mdp, policy, feats = build_problem(cfg)
        model = ExactModel(mdp, policy, feats, SoftmaxSpec(cfg.sigma))
        _CACHE.clear()
        _CACHE[key] = (mdp, policy, feats, model)
    return _CACHE[key]


def run_single(cfg: ExperimentConfig, algo: AlgorithmConfig, seed: int) -> MetricsTrace:
    """One seeded run of one algorithm, traced by the exact oracle."""
    mdp, policy, feats, model = _problem_and_model(cfg)
    T = cfg.horizon(algo)
    common = dict(sampler_kind=cfg.sampler, radius=cfg.radius, seed=seed, eval_every=algo.eval_every,
                  spec=model.spec, model=model, n_mc=cfg.mc_samples, final=cfg.final)
    schedule = make_schedule(algo.schedule, {"alpha0": algo.alpha, "beta0": algo.beta,
                                             "a": algo.a, "b": algo.b}, T)
    if algo.algorithm == "vanilla":
        _, trace = run_vanilla(mdp, policy, feats, schedule, T=T, **common)
    elif algo.algorithm == "minibatch":
        _, trace = run_minibatch(mdp, policy, feats, T, algo.B, schedule.alpha, schedule.beta,
                                 schedule=schedule, **common)
    else:
        nested = NestedConfig(T, algo.T_c, algo.B, algo.M, schedule.alpha, schedule.beta)
        _, trace = run_nested_loop(mdp, policy, feats, nested, **common)
    trace.meta.update(algorithm=algo.name, samples_per_iteration=algo.samples_per_iteration)
    return trace


def _task(args) -> str:
    cfg_dict, algo_idx, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return run_single(cfg, cfg.algorithms[algo_idx], seed).to_csv()


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("GGQ_THREADS")
    n = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, n_tasks))


def run_traces(cfg: ExperimentConfig) -> dict[str, list[MetricsTrace]]:
    """All runs of the experiment, keyed by algorithm label, in seed order."""
    tasks = [(cfg.to_dict(), i, s) for i in range(len(cfg.algorithms)) for s in cfg.seeds]
    workers = worker_count(len(tasks))
    if workers == 1:
        texts = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            texts = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    out: dict[str, list[MetricsTrace]] = {}
    for (_, i, _), text in zip(tasks, texts):
        out.setdefault(cfg.algorithms[i].name, []).append(MetricsTrace.from_csv(text))
    return out


def _grid(traces: list[MetricsTrace], n: int) -> np.ndarray:
    end = min(tr.column("samples_consumed")[-1] for tr in traces)
    grid = np.unique(np.round(np.linspace(0, end, n)))
    return grid


def summarize(cfg: ExperimentConfig, traces: dict[str, list[MetricsTrace]]) -> dict:
    """Headline numbers per algorithm.

    ``mc_variance_median`` is the median over seeds of each run's median
    across evaluated iterations; the min-grad values are medians over seeds at
    5% of the sample budget and at its end.
    """
    out = {}
    for algo in cfg.algorithms:
        runs = traces[algo.name]
        end = min(tr.column("samples_consumed")[-1] for tr in runs)
        early_x = EARLY_FRACTION * end
        early = [np.interp(early_x, tr.column("samples_consumed"), tr.column("min_grad_norm_sq")) for tr in runs]
        late = [np.interp(end, tr.column("samples_consumed"), tr.column("min_grad_norm_sq")) for tr in runs]
        entry = {
            "T": cfg.horizon(algo),
            "samples_per_iteration": algo.samples_per_iteration,
            "final_samples": float(end),
            "min_grad_early_median": float(np.median(early)),
            "min_grad_final_median": float(np.median(late)),
        }
        if cfg.mc_samples:
            per_run = [np.nanmedian(tr.column("mc_variance")) for tr in runs]
            entry["mc_variance_median"] = float(np.median(per_run))
        out[algo.name] = entry
    return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig | dict | str | Path, out_dir) -> Path:
    """Run ``cfg`` and write its artifact directory; returns the directory."""
    if isinstance(cfg, (str, Path)):
        cfg = load_config(cfg)
    elif isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    out = Path(out_dir)
    traces = run_traces(cfg)
    files = []
    for algo in cfg.algorithms:
        for seed, tr in zip(cfg.seeds, traces[algo.name]):
            rel = f"traces/{algo.name}/seed_{seed:04d}.csv"
            write_atomic(out / rel, tr.to_csv())
            files.append(rel)
    band_files: dict[str, list[Path]] = {}
    if cfg.n_seeds >= 2:
        metrics = [m for m in BAND_METRICS if m != "mc_variance" or cfg.mc_samples]
        for algo in cfg.algorithms:
            runs = traces[algo.name]
            grid = _grid(runs, cfg.grid_points)
            for metric in metrics:
                rel = f"bands/{algo.name}__{metric}.csv"
                write_atomic(out / rel, aggregate_bands(runs, metric, grid).to_csv())
                files.append(rel)
                band_files.setdefault(metric, []).append(out / rel)
        if cfg.plots:
            for metric, paths in band_files.items():
                rel = f"plots/{metric}.svg"
                plot(paths, out / rel, {"title": f"{cfg.name}: {metric}", "ylabel": metric},
                     labels=[a.name for a in cfg.algorithms])
                files.append(rel)
    mdp, _, feats, model = _problem_and_model(cfg)
    write_atomic(out / "summary.json", _dump(summarize(cfg, traces)))
    manifest = {
        "config": cfg.to_dict(),
        "library_version": __version__,
        "seeds": cfg.seeds,
        "variance_convention": VARIANCE_CONVENTION,
        "problem": {"layout_tag": mdp.layout_tag, "n_states": mdp.n_states, "n_actions": mdp.n_actions,
                    "n_features": feats.n_features, "lambda_min": model.lambda_min},
        "files": sorted(files + ["summary.json"]),
    }
    write_atomic(out / "manifest.json", _dump(manifest))
    log.info("wrote %d files to %s", len(files) + 2, out)
    return out


def config_from_manifest(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text())["config"])


# -- rate sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class RateSweep:
    """Vanilla Greedy-GQ at several horizons with steps ``alpha0 / T**a``, ``beta0 / T**b``."""

    horizons: tuple[int, ...] = (1000, 3000, 10000, 30000)
    n_seeds: int = 40
    seed: int = 0
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    gamma: float = 0.95
    sigma: float = 1.0
    radius: float = 100.0
    sampler: str = "iid"
    alpha0: float = 1.0
    beta0: float = 1.0
    a: float = 0.5
    b: float = 0.5

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(name="rates", problem=self.problem, gamma=self.gamma, sigma=self.sigma,
                                radius=self.radius, sampler=self.sampler)


def _rate_task(args) -> float:
    sweep, T, seed = args
    mdp, policy, feats, model = _problem_and_model(sweep.experiment())
    schedule = make_schedule("polynomial", {"alpha0": sweep.alpha0, "beta0": sweep.beta0,
                                            "a": sweep.a, "b": sweep.b}, T)
    theta, _ = run_vanilla(mdp, policy, feats, schedule, sweep.sampler, T, sweep.radius, seed,
                           spec=model.spec, final=False)
    g = model.gradient(theta)
    return float(g @ g)


def run_rate_sweep(sweep: RateSweep):
    """``(points, fit)``: mean ``||grad J(theta_W)||^2`` over seeds per horizon and its log-log fit."""
    from .metrics import rate_fit

    seeds = [sweep.seed + i for i in range(sweep.n_seeds)]
    tasks = [(sweep, T, s) for T in sweep.horizons for s in seeds]
    workers = worker_count(len(tasks))
    if workers == 1:
        vals = [_rate_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(_rate_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    vals = np.array(vals).reshape(len(sweep.horizons), len(seeds))
    points = [(float(T), float(v)) for T, v in zip(sweep.horizons, vals.mean(axis=1))]
    return points, rate_fit(points)
