"""Scenario execution, file outputs, closed-loop replay and benchmarks.

Output layout (one directory per run):
    config.yaml            normalized scenario (round-trips losslessly)
    trajectories/agent_XXX_states.csv / _controls.csv
    gains/agent_XXX_feedforward.csv / _feedback.csv
    residuals.csv          per-iteration per-agent solver log
    messages.csv           audit log of every delivered message
    summary.json           costs, violations, message counts (deterministic)
    timings.json           wall-clock numbers (excluded from determinism)

All CSV floats are written with repr-exact precision, so files
round-trip bit-exactly through numpy.
"""
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import central, md, nd
from .alcon import AlSettings
from .ddp import SolverError
from .network import Phase, expected_phase_count
from .penalties import AdaptationSettings, PenaltySettings
from .problem import ControlLaw, DdpSettings, Trajectory
from .scenario import build_team, dump_config, normalize
from .team import TeamProblem

_FMT = "%.17g"

WORKERS_ENV = "ADMMDDP_WORKERS"


@dataclass
class RunOutput:
    config: dict
    team: TeamProblem
    trajectories: list
    laws: list
    residual_rows: list
    mailbox: object
    summary: dict
    timings: dict = field(default_factory=dict)


def _ddp_settings(cfg) -> DdpSettings:
    d = cfg["solver"]["ddp"]
    return DdpSettings(max_iterations=d["max_iterations"], tol_abs=d["tol_abs"],
                       tol_rel=d["tol_rel"], reg_init=d["reg_init"])


def _al_settings(cfg, nested: bool = False) -> AlSettings:
    a = cfg["solver"]["al"]
    loops = a["nd_outer_iterations"] if nested else a["outer_iterations"]
    return AlSettings(outer_iterations=loops, tol=a["tol"],
                      beta_init=a["beta_init"], beta_growth=a["beta_growth"],
                      beta_max=a["beta_max"],
                      reset_multipliers=a["reset_multipliers"])


def _penalty_settings(cfg) -> PenaltySettings:
    p = cfg["solver"]["penalties"]
    return PenaltySettings(mode=p["mode"], c1=p["c1"], c2=p["c2"], c3=p["c3"],
                           tau=p["tau"], rho=p["rho"], mu=p["mu"],
                           floor_ratio=p["floor_ratio"])


def _adaptation_settings(cfg) -> AdaptationSettings:
    a = cfg["solver"]["adaptation"]
    return AdaptationSettings(enabled=a["enabled"], every=a["every"],
                              chi_incr=a["chi_incr"], chi_decr=a["chi_decr"],
                              sigma_incr=tuple(a["sigma_incr"]),
                              sigma_decr=tuple(a["sigma_decr"]),
                              a_min=a["a_min"], a_max=a["a_max"])


def make_mapper(workers: int, pool=None):
    if workers <= 1:
        return lambda fn, items: [fn(it) for it in items]
    return lambda fn, items: list(pool.map(fn, items))


def solver_options(cfg):
    s = cfg["solver"]
    if s["method"] == "md":
        return md.MdOptions(
            iterations=s["iterations"], ddp=_ddp_settings(cfg),
            penalties=_penalty_settings(cfg), nesterov_eta=s["nesterov"]["eta"],
            nesterov_restart=s["nesterov"]["restart"],
            adaptation=_adaptation_settings(cfg), stop_mode=s["stop"]["mode"],
            eps_pri=tuple(s["stop"]["eps_pri"]),
            eps_dual=tuple(s["stop"]["eps_dual"]),
            tangents_2d=s["tangents_2d"])
    if s["method"] == "nd":
        return nd.NdOptions(
            iterations=s["iterations"], ddp=_ddp_settings(cfg),
            al=_al_settings(cfg, nested=True), penalties=_penalty_settings(cfg),
            adaptation=_adaptation_settings(cfg))
    return (_ddp_settings(cfg), _al_settings(cfg))


def run_scenario(cfg: dict, outdir=None, workers=None, mapper=None) -> RunOutput:
    """Dispatch the configured solver and (optionally) write outputs."""
    cfg = normalize(cfg)
    team = build_team(cfg)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, cfg["workers"]))
    method = cfg["solver"]["method"]
    opts = solver_options(cfg)

    t0 = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=workers) if (mapper is None
                                                       and workers > 1) else None
    try:
        use_mapper = mapper or make_mapper(workers, pool)
        if method == "md":
            res = md.run(team, opts, mapper=use_mapper)
            trajectories, laws = res.trajectories, res.laws
            residual_rows = res.residual_rows()
            mailbox = res.mailbox
            extra = {"iterations": res.iterations,
                     "stopped_early": res.stopped_early,
                     "flagged_projections": len(res.flagged)}
        elif method == "nd":
            res = nd.run(team, opts, mapper=use_mapper)
            trajectories, laws = res.trajectories, res.laws
            residual_rows = res.residual_rows()
            mailbox = res.mailbox
            extra = {"iterations": res.iterations, "stopped_early": False,
                     "flagged_projections": 0}
        else:
            cres = central.run(team, *opts)
            trajectories, laws = cres.trajectories, cres.laws
            residual_rows = []
            mailbox = None
            extra = {"iterations": cres.outer_iterations, "stopped_early": False,
                     "flagged_projections": 0}
    finally:
        if pool is not None:
            pool.shutdown()
    wall = time.perf_counter() - t0

    summary = summarize(cfg, team, trajectories, mailbox)
    summary.update(extra)
    out = RunOutput(cfg, team, trajectories, laws, residual_rows, mailbox,
                    summary, {"solver_wall_seconds": wall, "workers": workers})
    if outdir is not None:
        write_output(out, outdir)
    return out


def pairwise_min_distance(team: TeamProblem, trajectories) -> float:
    """Smallest inter-agent distance over graph-constrained pairs."""
    pairs = sorted({(min(i, j), max(i, j)) for i in range(team.size)
                    for j in team.graph.neighbors[i] if j != i})
    if not pairs:
        return float("inf")
    pd = team.pos_dim
    dmin = np.inf
    for i, j in pairs:
        d = np.linalg.norm(trajectories[i].states[:, :pd]
                           - trajectories[j].states[:, :pd], axis=1)
        dmin = min(dmin, float(np.min(d)))
    return dmin


def summarize(cfg, team: TeamProblem, trajectories, mailbox) -> dict:
    pd = team.pos_dim
    costs = [float(a.cost.total(t)) for a, t in zip(team.agents, trajectories)]
    goal_err = [float(np.linalg.norm(t.states[-1, :pd] - a.goal[:pd]))
                for a, t in zip(team.agents, trajectories)]

    local_viol = 0.0
    for a, t in zip(team.agents, trajectories):
        for blk in a.control_blocks + a.state_blocks:
            vals = blk.values_along(t.states, t.controls)
            local_viol = max(local_viol, float(np.max(vals)))
    pairs = sorted({(min(i, j), max(i, j)) for i in range(team.size)
                    for j in team.graph.neighbors[i] if j != i})
    col_viol = 0.0
    con_viol = 0.0
    for i, j in pairs:
        d = np.linalg.norm(trajectories[i].states[:, :pd]
                           - trajectories[j].states[:, :pd], axis=1)
        if team.collision is not None:
            col_viol = max(col_viol, float(np.max(team.collision - d)))
        if team.connectivity is not None:
            con_viol = max(con_viol, float(np.max(d - team.connectivity)))

    counts = {}
    audit_clean = True
    if mailbox is not None:
        for (iteration, phase), cnt in sorted(mailbox.counts_by_phase().items()):
            counts[f"{iteration}:{phase}"] = cnt
        audit_clean = all(team.graph.is_edge(r.sender, r.receiver)
                          for r in mailbox.log)
        expected = {ph.value: expected_phase_count(team.graph, ph)
                    for ph in Phase}
    else:
        expected = {}

    return {
        "name": cfg["name"],
        "method": cfg["solver"]["method"],
        "agents": team.size,
        "cost_total": float(sum(costs)),
        "cost_per_agent": costs,
        "terminal_goal_errors": goal_err,
        "max_local_violation": max(local_viol, 0.0),
        "max_collision_violation": max(col_viol, 0.0),
        "max_connectivity_violation": max(con_viol, 0.0),
        "min_pairwise_distance": pairwise_min_distance(team, trajectories),
        "message_counts": counts,
        "expected_messages_per_phase": expected,
        "communication_audit_clean": audit_clean,
    }


def write_output(out: RunOutput, outdir):
    os.makedirs(outdir, exist_ok=True)
    dump_config(out.config, os.path.join(outdir, "config.yaml"))
    tdir = os.path.join(outdir, "trajectories")
    gdir = os.path.join(outdir, "gains")
    os.makedirs(tdir, exist_ok=True)
    os.makedirs(gdir, exist_ok=True)
    for i, (traj, law) in enumerate(zip(out.trajectories, out.laws)):
        np.savetxt(os.path.join(tdir, f"agent_{i:03d}_states.csv"), traj.states,
                   fmt=_FMT, delimiter=",",
                   header="one row per timestep k = 0..K; columns: state vector")
        np.savetxt(os.path.join(tdir, f"agent_{i:03d}_controls.csv"),
                   traj.controls, fmt=_FMT, delimiter=",",
                   header="one row per timestep k = 0..K-1; columns: control vector")
        if law is not None:
            np.savetxt(os.path.join(gdir, f"agent_{i:03d}_feedforward.csv"),
                       law.feedforward, fmt=_FMT, delimiter=",",
                       header="one row per timestep; columns: feedforward control")
            K, q, p = law.feedback.shape
            np.savetxt(os.path.join(gdir, f"agent_{i:03d}_feedback.csv"),
                       law.feedback.reshape(K, q * p), fmt=_FMT, delimiter=",",
                       header=f"one row per timestep; row-major {q}x{p} "
                              "feedback gain")
    if out.residual_rows:
        with open(os.path.join(outdir, "residuals.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(out.residual_rows[0]))
            writer.writeheader()
            for row in out.residual_rows:
                writer.writerow({k: (_FMT % v if isinstance(v, float) else v)
                                 for k, v in row.items()})
    if out.mailbox is not None:
        with open(os.path.join(outdir, "messages.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "phase", "sender", "receiver",
                             "kind", "nbytes"])
            for r in out.mailbox.log:
                writer.writerow([r.iteration, r.phase, r.sender, r.receiver,
                                 r.kind, r.nbytes])
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(out.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(outdir, "timings.json"), "w") as fh:
        json.dump(out.timings, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_run(outdir):
    """Read back a written run (config, trajectories, laws)."""
    from .scenario import load_config

    cfg = load_config(os.path.join(outdir, "config.yaml"))
    team = build_team(cfg)
    trajectories, laws = [], []
    for i in range(team.size):
        xs = np.atleast_2d(np.loadtxt(
            os.path.join(outdir, "trajectories", f"agent_{i:03d}_states.csv"),
            delimiter=","))
        us = np.atleast_2d(np.loadtxt(
            os.path.join(outdir, "trajectories", f"agent_{i:03d}_controls.csv"),
            delimiter=","))
        if us.shape[0] == 1 and us.shape[1] != team.agents[i].q:
            us = us.T
        trajectories.append(Trajectory(xs, us, team.dt))
        ffpath = os.path.join(outdir, "gains", f"agent_{i:03d}_feedforward.csv")
        if os.path.exists(ffpath):
            ff = np.atleast_2d(np.loadtxt(ffpath, delimiter=","))
            fb = np.atleast_2d(np.loadtxt(
                os.path.join(outdir, "gains", f"agent_{i:03d}_feedback.csv"),
                delimiter=","))
            K = ff.shape[0]
            q, p = team.agents[i].q, team.agents[i].p
            laws.append(ControlLaw(ff, fb.reshape(K, q, p)))
        else:
            laws.append(None)
    return cfg, team, trajectories, laws


@dataclass
class ReplayMetrics:
    tracking_error: list       # per agent: per-step position error trace
    terminal_error: float      # mean over agents of terminal position error
    min_distance: float        # smallest constrained-pair distance
    collision_violations: int  # timesteps with a pair below the threshold


def replay_closed_loop(team: TeamProblem, trajectories, laws, noise_std,
                       seed: int, feedback: bool = True) -> ReplayMetrics:
    """Re-simulate the planned trajectories under additive state noise.

    noise_std: scalar (applied to position components only) or a
    per-component vector. feedback=False replays the raw planned
    controls (open loop).
    """
    pd = team.pos_dim
    M = team.size
    K = team.horizon
    rng = np.random.default_rng(seed)
    traces = []
    states = []
    for i in range(M):
        spec = team.agents[i]
        std = np.zeros(spec.p)
        if np.isscalar(noise_std):
            std[:pd] = noise_std
        else:
            std[:] = np.asarray(noise_std, dtype=float)
        noise = rng.normal(size=(K, spec.p)) * std
        plan, law = trajectories[i], laws[i]
        xs = np.empty_like(plan.states)
        xs[0] = plan.states[0]
        errs = np.empty(K + 1)
        errs[0] = 0.0
        for k in range(K):
            u = plan.controls[k].copy()
            if feedback:
                u += law.feedback[k] @ (xs[k] - plan.states[k])
            xs[k + 1] = spec.model.step(xs[k], u) + noise[k]
            errs[k + 1] = np.linalg.norm(xs[k + 1, :pd] - plan.states[k + 1, :pd])
        traces.append(errs)
        states.append(xs)

    pairs = sorted({(min(i, j), max(i, j)) for i in range(M)
                    for j in team.graph.neighbors[i] if j != i})
    dmin = np.inf
    nviol = 0
    for i, j in pairs:
        d = np.linalg.norm(states[i][:, :pd] - states[j][:, :pd], axis=1)
        dmin = min(dmin, float(np.min(d)))
        if team.collision is not None:
            nviol += int(np.sum(d < team.collision))
    terminal = float(np.mean([t[-1] for t in traces]))
    return ReplayMetrics([t.tolist() for t in traces], terminal,
                         float(dmin), nviol)


class TimingMapper:
    """Serial mapper recording per-item compute durations per batch."""

    def __init__(self):
        self.batches = []

    def __call__(self, fn, items):
        out = []
        times = {}
        for it in items:
            t0 = time.perf_counter()
            out.append(fn(it))
            times[it] = time.perf_counter() - t0
        self.batches.append(times)
        return out

    def max_agent_total(self) -> float:
        """Sum over barrier-separated batches of the slowest agent's time."""
        return float(sum(max(b.values()) for b in self.batches if b))


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)),
                            np.log(np.asarray(ys, dtype=float)), 1)[0])


def scaling_benchmark(family: str = "formation", agent_counts=(2, 4, 8, 16),
                      solvers=("central", "md"), seed: int = 0,
                      repetitions: int = 3, iterations: int = 20,
                      horizon: int = 60) -> dict:
    """Median wall times per solver and agent count under identical
    iteration budgets; decentralized solvers report the slowest agent's
    accumulated compute time per barrier step."""
    from .scenario import builtin

    rows = []
    for M in agent_counts:
        cfg = builtin(f"{family}{M}", seed=seed)
        cfg["horizon"] = horizon
        cfg = normalize(cfg)
        team = build_team(cfg)
        for solver in solvers:
            times = []
            for _ in range(repetitions):
                if solver == "central":
                    dd = DdpSettings(max_iterations=iterations, tol_abs=1e-14,
                                     tol_rel=1e-16)
                    t0 = time.perf_counter()
                    central.run(team, dd, AlSettings(outer_iterations=2,
                                                     tol=1e-12))
                    times.append(time.perf_counter() - t0)
                elif solver == "md":
                    opts = md.MdOptions(iterations=iterations,
                                        ddp=DdpSettings(max_iterations=4))
                    tm = TimingMapper()
                    md.run(team, opts, mapper=tm)
                    times.append(tm.max_agent_total())
                elif solver == "nd":
                    opts = nd.NdOptions(iterations=max(1, iterations // 4),
                                        ddp=DdpSettings(max_iterations=4))
                    tm = TimingMapper()
                    nd.run(team, opts, mapper=tm)
                    times.append(tm.max_agent_total())
                else:
                    raise ValueError(f"unknown solver {solver!r}")
            rows.append({"family": family, "agents": M, "solver": solver,
                         "seconds": float(np.median(times))})
    slopes = {}
    for solver in solvers:
        pts = [(r["agents"], r["seconds"]) for r in rows if r["solver"] == solver]
        slopes[solver] = loglog_slope([p[0] for p in pts], [p[1] for p in pts])
    return {"rows": rows, "slopes": slopes}
