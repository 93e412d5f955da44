"""Command-line interface.

Subcommands: run, validate, replay, bench, bench-kernels. Exit codes:
0 success, 2 config validation error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np
import yaml

from .ddp import SolverError
from .runner import WORKERS_ENV
from .scenario import ConfigError, builtin, load_config, normalize


def _set_path(cfg: dict, dotted: str, raw: str):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = yaml.safe_load(raw)


def _load(args) -> dict:
    if args.builtin:
        cfg = builtin(args.builtin, seed=args.seed)
    else:
        cfg = load_config(args.config)
    for item in args.set or []:
        key, _, val = item.partition("=")
        if not val:
            raise ConfigError([f"override {item!r} must look like key=value"])
        _set_path(cfg, key, val)
    return normalize(cfg)


def cmd_run(args) -> int:
    from .runner import run_scenario

    cfg = _load(args)
    out = run_scenario(cfg, outdir=args.outdir, workers=args.workers)
    print(f"{cfg['name']}: method={cfg['solver']['method']} "
          f"agents={out.summary['agents']} "
          f"cost={out.summary['cost_total']:.6g} "
          f"min_distance={out.summary['min_pairwise_distance']:.4g}")
    if args.outdir:
        print(f"outputs written to {args.outdir}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"{cfg['name']}: valid ({len(cfg['agents'])} agents, "
          f"horizon {cfg['horizon']}, method {cfg['solver']['method']})")
    return 0


def cmd_replay(args) -> int:
    from .runner import load_run, replay_closed_loop

    cfg, team, trajectories, laws = load_run(args.rundir)
    results = []
    for seed in range(args.seeds):
        m = replay_closed_loop(team, trajectories, laws, args.noise_std,
                               seed=seed, feedback=not args.open_loop)
        results.append({"seed": seed, "terminal_error": m.terminal_error,
                        "min_distance": m.min_distance,
                        "collision_violations": m.collision_violations})
    mode = "open-loop" if args.open_loop else "closed-loop"
    mean_err = float(np.mean([r["terminal_error"] for r in results]))
    total_viol = int(sum(r["collision_violations"] for r in results))
    print(f"{mode} replay over {args.seeds} seeds: "
          f"mean terminal error {mean_err:.4g} m, "
          f"total collision-violation steps {total_viol}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"mode": mode, "noise_std": args.noise_std,
                       "results": results}, fh, indent=2, sort_keys=True)
    return 0


def cmd_bench(args) -> int:
    from .runner import scaling_benchmark

    res = scaling_benchmark(family=args.family,
                            agent_counts=tuple(args.agents),
                            solvers=tuple(args.solvers),
                            repetitions=args.repetitions,
                            iterations=args.iterations,
                            horizon=args.horizon)
    for row in res["rows"]:
        print(f"{row['solver']:>8s}  M={row['agents']:<4d} "
              f"{row['seconds']:.4f} s")
    for solver, slope in res["slopes"].items():
        print(f"{solver}: log-log slope {slope:.3f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(res, fh, indent=2, sort_keys=True)
    return 0


def cmd_bench_kernels(args) -> int:
    from ._kernels import BACKEND, _impl
    from ._kernels import pyfallback

    rng = np.random.default_rng(0)
    print(f"active backend: {BACKEND}")
    impls = [("compiled" if BACKEND == "compiled" else "python", _impl)]
    if BACKEND == "compiled":
        impls.append(("python", pyfallback))

    for p, q, K in ((4, 2, 150), (12, 4, 150), (32, 16, 100)):
        a = rng.normal(size=(K, p, p)) * 0.1 + np.eye(p)
        bmat = rng.normal(size=(K, p, q)) * 0.1
        lxx = np.tile(np.eye(p), (K, 1, 1))
        luu = np.tile(np.eye(q), (K, 1, 1))
        lxu = np.zeros((K, p, q))
        lrun = np.zeros(K)
        lx = rng.normal(size=(K, p))
        lu = rng.normal(size=(K, q))
        phix = rng.normal(size=p)
        phixx = np.eye(p)
        for name, impl in impls:
            t0 = time.perf_counter()
            reps = max(3, args.repetitions)
            for _ in range(reps):
                impl.ilqr_backward(a, bmat, lrun, lx, lu, lxx, lxu, luu,
                                   0.0, phix, phixx, 1e-6)
            dt = (time.perf_counter() - t0) / reps
            print(f"backward p={p:<3d} q={q:<3d} K={K}: {name:>8s} "
                  f"{dt * 1e3:8.3f} ms")

    for dim, m in ((4, 8), (8, 16), (20, 30)):
        w = rng.uniform(0.5, 2.0, dim)
        t = rng.normal(size=dim)
        A = rng.normal(size=(m, dim))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        b = rng.normal(size=m) * 0.1 + 0.2
        for name, impl in impls:
            t0 = time.perf_counter()
            reps = max(20, args.repetitions * 10)
            for _ in range(reps):
                impl.diag_qp(w, t, A, b)
            dt = (time.perf_counter() - t0) / reps
            print(f"qp dim={dim:<3d} rows={m:<3d}:     {name:>8s} "
                  f"{dt * 1e6:8.1f} us")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="admmddp",
                                 description="Decentralized multi-agent "
                                             "trajectory optimization")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="scenario YAML path")
        src.add_argument("--builtin", help="builtin scenario, e.g. swap24")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for builtin generators")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted config override, e.g. solver.iterations=50")

    p = sub.add_parser("run", help="run a scenario")
    add_config_args(p)
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker pool size (or ${WORKERS_ENV})")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("validate", help="validate a scenario config")
    add_config_args(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("replay", help="closed-loop disturbance replay")
    p.add_argument("--rundir", required=True, help="directory written by run")
    p.add_argument("--noise-std", type=float, default=0.01,
                   help="position noise std per step [m]")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--open-loop", action="store_true",
                   help="replay raw planned controls without feedback")
    p.add_argument("--out", help="write per-seed metrics JSON here")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("bench", help="scaling benchmark across agent counts")
    p.add_argument("--family", default="formation")
    p.add_argument("--agents", type=int, nargs="+", default=[2, 4, 8, 16])
    p.add_argument("--solvers", nargs="+", default=["central", "md"])
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--horizon", type=int, default=60)
    p.add_argument("--out", help="write rows/slopes JSON here")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("bench-kernels",
                       help="compare compiled and pure-python kernels")
    p.add_argument("--repetitions", type=int, default=5)
    p.set_defaults(fn=cmd_bench_kernels)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
