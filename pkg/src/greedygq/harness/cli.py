"""``ggq`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, SchemaError
from .files import write_atomic


def _cmd_mdp(args) -> int:
    from ..features import random_features
    from ..mdp import frozen_lake, generate_garnet

    if args.kind == "garnet":
        mdp, feats = generate_garnet(args.ns, args.na, args.b, args.nf, args.seed, discount=args.gamma)
    else:
        mdp = frozen_lake(args.slippery, discount=args.gamma)
        feats = random_features(args.nf, mdp.n_states, mdp.n_actions, args.seed)
    text = mdp.to_json(features=feats)
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_run(args) -> int:
    from .experiment import load_config, run_experiment

    cfg = load_config(args.config)
    out = Path(args.out or f"runs/{cfg.name}")
    run_experiment(cfg, out)
    print(out)
    return 0


def _cmd_bench(args) -> int:
    from .experiment import preset, run_experiment

    overrides = {}
    if args.seeds is not None:
        overrides["n_seeds"] = args.seeds
    if args.budget is not None:
        overrides["budget"] = args.budget
    cfg = preset(args.preset, **overrides)
    out = Path(args.out or f"runs/{cfg.name}")
    run_experiment(cfg, out)
    print(json.dumps(json.loads((out / "summary.json").read_text()), indent=2, sort_keys=True))
    return 0


def _cmd_plot(args) -> int:
    from .plotting import plot

    style = {"title": args.title} if args.title else None
    plot(args.inputs, args.out, style, labels=args.labels.split(",") if args.labels else None)
    return 0


def _cmd_oracle(args) -> int:
    import numpy as np

    from ..features import random_features
    from ..mdp import TabularMdp, uniform_behavior
    from ..oracle import validate_assumptions
    from ..policy import SoftmaxSpec, lipschitz_constants

    mdp, feats = TabularMdp.from_json(Path(args.mdp).read_text())
    if feats is None:
        feats = random_features(args.nf, mdp.n_states, mdp.n_actions, args.seed)
    report = validate_assumptions(mdp, uniform_behavior(mdp), feats, sigma=args.sigma)
    out = report.to_dict()
    if report.lambda_min > 0:
        c = lipschitz_constants(SoftmaxSpec(args.sigma), mdp, feats, args.radius, report.lambda_min)
        out.update(radius=args.radius, K=c.K, k3=c.k3, omega_star_lipschitz=c.w_star_lip)
    out = {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in out.items()}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0 if report.all_pass else 1


def _cmd_rates(args) -> int:
    from .experiment import ProblemConfig, RateSweep, run_rate_sweep

    if args.algo != "vanilla":
        raise ConfigError("algo", "rate sweeps are implemented for vanilla Greedy-GQ")
    horizons = tuple(int(float(t)) for t in args.T.split(","))
    sweep = RateSweep(horizons=horizons, n_seeds=args.seeds, seed=args.seed,
                      problem=ProblemConfig(n_states=args.ns, n_actions=args.na, branching=args.b,
                                            n_features=args.nf, seed=args.mdp_seed),
                      gamma=args.gamma, sigma=args.sigma, radius=args.radius)
    points, fit = run_rate_sweep(sweep)
    print(json.dumps({"points": points, "slope": fit.slope, "stderr": fit.stderr,
                      "intercept": fit.intercept}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ggq", description="Greedy-GQ algorithms, exact oracle and benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    mdp = sub.add_parser("mdp", help="generate an MDP JSON document")
    kinds = mdp.add_subparsers(dest="kind", required=True)
    g = kinds.add_parser("garnet")
    g.add_argument("--ns", type=int, required=True)
    g.add_argument("--na", type=int, required=True)
    g.add_argument("--b", type=int, required=True)
    g.add_argument("--nf", type=int, required=True)
    fl = kinds.add_parser("frozenlake")
    fl.add_argument("--nf", type=int, default=4)
    fl.add_argument("--slippery", action="store_true")
    for sp in (g, fl):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--gamma", type=float, default=0.95)
        sp.add_argument("--out")
        sp.set_defaults(func=_cmd_mdp)

    r = sub.add_parser("run", help="run an experiment from a JSON/TOML config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("bench", help="run a named preset")
    b.add_argument("--preset", required=True)
    b.add_argument("--out")
    b.add_argument("--seeds", type=int)
    b.add_argument("--budget", type=int)
    b.set_defaults(func=_cmd_bench)

    pl = sub.add_parser("plot", help="render band CSVs to SVG")
    pl.add_argument("--in", dest="inputs", nargs="+", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--labels")
    pl.add_argument("--title")
    pl.set_defaults(func=_cmd_plot)

    o = sub.add_parser("oracle", help="exact-oracle utilities")
    osub = o.add_subparsers(dest="action", required=True)
    oc = osub.add_parser("check", help="print the assumption report as JSON")
    oc.add_argument("mdp")
    oc.add_argument("--sigma", type=float, default=1.0)
    oc.add_argument("--radius", type=float, default=100.0)
    oc.add_argument("--nf", type=int, default=4, help="random features if the file has none")
    oc.add_argument("--seed", type=int, default=0)
    oc.set_defaults(func=_cmd_oracle)

    rt = sub.add_parser("rates", help="log-log convergence-rate sweep on a Garnet MDP")
    rt.add_argument("--algo", default="vanilla")
    rt.add_argument("--T", default="1e3,3e3,1e4,3e4")
    rt.add_argument("--seeds", type=int, default=40)
    rt.add_argument("--seed", type=int, default=0)
    rt.add_argument("--ns", type=int, default=10)
    rt.add_argument("--na", type=int, default=5)
    rt.add_argument("--b", type=int, default=10)
    rt.add_argument("--nf", type=int, default=5)
    rt.add_argument("--mdp-seed", type=int, default=1)
    rt.add_argument("--gamma", type=float, default=0.95)
    rt.add_argument("--sigma", type=float, default=1.0)
    rt.add_argument("--radius", type=float, default=100.0)
    rt.set_defaults(func=_cmd_rates)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ggq: config error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, ValueError, FileNotFoundError) as exc:
        print(f"ggq: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
