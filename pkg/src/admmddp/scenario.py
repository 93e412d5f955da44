"""Declarative scenario configs and builtin task generators.

A scenario is one YAML document (or the equivalent dict) fully
describing agents, costs, constraints, graph and solver settings.
Validation collects every violation before raising. Builtin generators
produce desk-scale versions of the standard multi-vehicle and
multi-drone tasks, parameterized by the agent count in their name
(swap24, intersection16, bottleneck8, formation16, gate4, uniswap8).
"""
from __future__ import annotations

import copy
import math

import numpy as np
import yaml

from .constraints import BoxConstraint, ObstacleConstraint
from .models import make_model
from .network import build_graph
from .problem import QuadraticGoalCost
from .team import AgentSpec, TeamProblem

CAR_CONSTANTS = {
    "a_max": 10.0,
    "omega_max": math.radians(30.0),
    "v_max": 10.0,
    "d_obstacle": 0.3,
    "d_col": 0.3,
    "d_con": 2.0,
    "Q": [30.0, 30.0, 0.0, 6.0],
    "R": [0.5, 0.5],
    "Qf": [100.0, 100.0, 0.0, 100.0],
}
DRONE_CONSTANTS = {
    "f_max": 30.0,
    "d_col": 0.5,
    "d_con": 2.0,
    "Q": [150.0, 150.0, 150.0] + [50.0] * 9,
    "R": [1.0, 1.0, 1.0, 1.0],
}
UNICYCLE_CONSTANTS = {
    "wheel_radius": 0.016,
    "axle_length": 0.11,
    "wheel_speed_max": 12.5,
    "d_obstacle": 0.15,
    "d_col": 0.2,
    "d_con": 0.5,
    "Q": [100.0, 100.0, 0.0],
    "R": [100.0, 10.0],
    "Qf": [300.0, 300.0, 30.0],
}


class ConfigError(ValueError):
    """Raised with the full list of validation violations."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n  - " + "\n  - ".join(self.errors))


_DEFAULTS = {
    "name": "scenario",
    "seed": None,
    "dynamics": {"kind": "dubins", "dt": 0.02, "params": {}},
    "horizon": 150,
    "agents": [],
    "cost": {"Q": None, "R": None, "Qf": None},
    "graph": {"mode": "all", "radius": None, "k": None, "adjacency": None},
    "constraints": {
        "control_box": None,          # {lower, upper}
        "control_box_transform": None,  # optional square map C
        "state_boxes": [],            # [{indices, lower, upper, window?}]
        "obstacles": [],              # [{center, radius, clearance}]
        "collision": None,
        "connectivity": None,
    },
    "solver": {
        "method": "md",
        "iterations": 200,
        "ddp": {"max_iterations": 8, "tol_abs": 1e-6, "tol_rel": 1e-8,
                "reg_init": 1e-6},
        "al": {"outer_iterations": 10, "nd_outer_iterations": 2, "tol": 1e-3,
               "beta_init": 10.0, "beta_growth": 10.0, "beta_max": 1e8,
               "reset_multipliers": False},
        "penalties": {"mode": "matrix", "c1": 2.0, "c2": 8.0, "c3": 8.0,
                      "tau": 2.0, "rho": 8.0, "mu": 8.0,
                      "floor_ratio": 1e-2},
        "nesterov": {"eta": 0.0, "restart": False},
        "adaptation": {"enabled": False, "every": 10, "chi_incr": 2.0,
                       "chi_decr": 2.0,
                       "sigma_incr": [1 / 200, 1 / 200, 1 / 20],
                       "sigma_decr": [1 / 50, 1 / 50, 1 / 5],
                       "a_min": 1 / 64, "a_max": 64.0},
        "stop": {"mode": "iterations", "eps_pri": [5.0, 10.0, 10.0],
                 "eps_dual": [50.0, 1e3, 1e3]},
        "tangents_2d": 8,
    },
    "workers": 1,
}

_AGENT_KEYS = {"start", "goal", "state_boxes"}

_MODEL_DIMS = {"dubins": (4, 2, 2), "unicycle": (3, 2, 2), "quadrotor": (12, 4, 3)}


def _plainify(obj):
    """Deep-convert numpy scalars/arrays so configs serialize cleanly."""
    if isinstance(obj, dict):
        return {k: _plainify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plainify(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _merge(defaults, given, errors, path=""):
    """Defaults-merge with unknown-key rejection."""
    out = copy.deepcopy(defaults)
    if not isinstance(given, dict):
        errors.append(f"{path or 'config'}: expected a mapping")
        return out
    for key, val in given.items():
        if key not in defaults:
            errors.append(f"{path}{key}: unknown key")
            continue
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge(defaults[key], val or {}, errors, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def normalize(raw: dict) -> dict:
    """Apply defaults, reject unknown keys, validate; returns the full
    normalized config dict."""
    errors: list = []
    cfg = _plainify(_merge(_DEFAULTS, raw, errors))

    kind = cfg["dynamics"]["kind"]
    if kind not in _MODEL_DIMS:
        errors.append(f"dynamics.kind: unknown model {kind!r}")
        raise ConfigError(errors)
    p, q, _ = _MODEL_DIMS[kind]

    if cfg["seed"] is None:
        errors.append("seed: required for reproducible runs")
    if not isinstance(cfg["horizon"], int) or cfg["horizon"] < 1:
        errors.append("horizon: must be a positive integer")
    if cfg["dynamics"]["dt"] is None or cfg["dynamics"]["dt"] <= 0:
        errors.append("dynamics.dt: must be positive")

    if not cfg["agents"]:
        errors.append("agents: at least one agent required")
    agents = []
    for i, a in enumerate(cfg["agents"]):
        if not isinstance(a, dict) or not set(a) <= _AGENT_KEYS:
            errors.append(f"agents[{i}]: keys must be within {sorted(_AGENT_KEYS)}")
            continue
        entry = {"start": a.get("start"), "goal": a.get("goal"),
                 "state_boxes": a.get("state_boxes", [])}
        for fld in ("start", "goal"):
            vec = entry[fld]
            if vec is None or len(vec) != p:
                errors.append(f"agents[{i}].{fld}: expected length {p}")
        agents.append(entry)
    cfg["agents"] = agents

    for fld, dim in (("Q", p), ("R", q), ("Qf", p)):
        vec = cfg["cost"][fld]
        if vec is None or len(vec) != dim:
            errors.append(f"cost.{fld}: expected {dim} diagonal entries")
        elif any(v < 0 for v in vec):
            errors.append(f"cost.{fld}: entries must be nonnegative")

    g = cfg["graph"]
    if g["mode"] not in ("all", "radius", "nearest", "explicit"):
        errors.append("graph.mode: must be all|radius|nearest|explicit")
    if g["mode"] == "radius" and (g["radius"] is None or g["radius"] <= 0):
        errors.append("graph.radius: positive radius required")
    if g["mode"] == "nearest" and (g["k"] is None or g["k"] < 1):
        errors.append("graph.k: neighborhood size >= 1 required")
    if g["mode"] == "explicit" and g["adjacency"] is None:
        errors.append("graph.adjacency: required in explicit mode")

    con = cfg["constraints"]
    if con["control_box"] is not None:
        box = con["control_box"]
        if (not isinstance(box, dict) or len(box.get("lower", [])) != q
                or len(box.get("upper", [])) != q):
            errors.append(f"constraints.control_box: lower/upper of length {q}")
        elif any(lo > hi for lo, hi in zip(box["lower"], box["upper"])):
            errors.append("constraints.control_box: lower > upper")
    if con["control_box_transform"] is not None:
        c = np.asarray(con["control_box_transform"], dtype=float)
        if c.shape != (q, q) or abs(np.linalg.det(c)) < 1e-12:
            errors.append("constraints.control_box_transform: must be an "
                          f"invertible {q}x{q} matrix")
    for j, box in enumerate(con["state_boxes"]):
        keys = set(box) if isinstance(box, dict) else set()
        if not keys <= {"indices", "lower", "upper", "window"}:
            errors.append(f"constraints.state_boxes[{j}]: bad keys {sorted(keys)}")
            continue
        idx = box.get("indices", [])
        if (len(box.get("lower", [])) != len(idx)
                or len(box.get("upper", [])) != len(idx)
                or any(k < 0 or k >= p for k in idx)):
            errors.append(f"constraints.state_boxes[{j}]: indices/bounds mismatch")
        elif any(lo > hi for lo, hi in zip(box["lower"], box["upper"])):
            errors.append(f"constraints.state_boxes[{j}]: lower > upper")
    for j, obs in enumerate(con["obstacles"]):
        if (not isinstance(obs, dict)
                or len(obs.get("center", [])) != _MODEL_DIMS[kind][2]
                or obs.get("radius", 0) <= 0 or obs.get("clearance", 0) < 0):
            errors.append(f"constraints.obstacles[{j}]: need center "
                          f"({_MODEL_DIMS[kind][2]}d), radius > 0, clearance >= 0")
    if con["collision"] is not None and con["collision"] <= 0:
        errors.append("constraints.collision: must be positive")
    if con["connectivity"] is not None and con["collision"] is not None:
        if con["collision"] >= con["connectivity"]:
            errors.append("constraints: collision distance must be below "
                          "connectivity distance")

    s = cfg["solver"]
    if s["method"] not in ("md", "nd", "central"):
        errors.append("solver.method: must be md|nd|central")
    if s["iterations"] < 1:
        errors.append("solver.iterations: must be >= 1")
    if s["penalties"]["mode"] not in ("matrix", "scalar"):
        errors.append("solver.penalties.mode: must be matrix|scalar")
    if not 0.0 <= s["nesterov"]["eta"] < 1.0:
        errors.append("solver.nesterov.eta: must lie in [0, 1)")
    if s["stop"]["mode"] not in ("iterations", "thresholds"):
        errors.append("solver.stop.mode: must be iterations|thresholds")
    if cfg["workers"] < 1:
        errors.append("workers: must be >= 1")

    # per-agent boxes validated like the shared ones
    for i, a in enumerate(cfg["agents"]):
        for j, box in enumerate(a["state_boxes"]):
            keys = set(box) if isinstance(box, dict) else set()
            if not keys <= {"indices", "lower", "upper", "window"}:
                errors.append(f"agents[{i}].state_boxes[{j}]: bad keys")
                continue
            idx = box.get("indices", [])
            if (len(box.get("lower", [])) != len(idx)
                    or len(box.get("upper", [])) != len(idx)
                    or any(k < 0 or k >= p for k in idx)):
                errors.append(f"agents[{i}].state_boxes[{j}]: indices/bounds mismatch")

    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> dict:
    """Parse and validate a YAML scenario file."""
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"YAML parse error: {exc}"]) from exc
    if raw is None:
        raise ConfigError(["empty config file"])
    return normalize(raw)


def dump_config(cfg: dict, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def _box_from(box) -> BoxConstraint:
    window = tuple(box.get("window", (0, np.inf)))
    return BoxConstraint(box["lower"], box["upper"], target="state",
                         indices=box["indices"], window=window)


def build_team(cfg: dict) -> TeamProblem:
    """Instantiate the solver-facing problem from a normalized config."""
    kind = cfg["dynamics"]["kind"]
    dt = cfg["dynamics"]["dt"]
    p, q, pos_dim = _MODEL_DIMS[kind]
    con = cfg["constraints"]

    shared_state_blocks = [_box_from(b) for b in con["state_boxes"]]
    for obs in con["obstacles"]:
        shared_state_blocks.append(ObstacleConstraint(
            obs["center"], obs["radius"], obs.get("clearance", 0.0)))
    control_blocks = []
    if con["control_box"] is not None:
        control_blocks.append(BoxConstraint(
            con["control_box"]["lower"], con["control_box"]["upper"],
            target="control", transform=con["control_box_transform"]))

    agents = []
    for a in cfg["agents"]:
        model = make_model(kind, dt, cfg["dynamics"]["params"] or None)
        cost = QuadraticGoalCost(cfg["cost"]["Q"], cfg["cost"]["R"],
                                 cfg["cost"]["Qf"], a["goal"])
        blocks = list(shared_state_blocks)
        blocks.extend(_box_from(b) for b in a["state_boxes"])
        agents.append(AgentSpec(model, cost, np.asarray(a["start"], dtype=float),
                                np.asarray(a["goal"], dtype=float),
                                list(control_blocks), blocks))

    g = cfg["graph"]
    starts = np.array([a["start"][:pos_dim] for a in cfg["agents"]])
    if g["mode"] == "all":
        graph = build_graph(M=len(agents), all_neighbors=True)
    elif g["mode"] == "radius":
        graph = build_graph(positions=starts, radius=g["radius"],
                            k_nearest=g["k"])
    elif g["mode"] == "nearest":
        graph = build_graph(positions=starts, k_nearest=g["k"])
    else:
        graph = build_graph(adjacency=np.asarray(g["adjacency"], dtype=bool))

    return TeamProblem(agents, graph, cfg["horizon"], dt, pos_dim,
                       collision=con["collision"],
                       connectivity=con["connectivity"])


# ---------------------------------------------------------------------------
# builtin generators

def _car_base(name, seed, K=150):
    return {
        "name": name,
        "seed": seed,
        "dynamics": {"kind": "dubins", "dt": 0.02},
        "horizon": K,
        "cost": {"Q": CAR_CONSTANTS["Q"], "R": CAR_CONSTANTS["R"],
                 "Qf": CAR_CONSTANTS["Qf"]},
        "constraints": {
            "control_box": {
                "lower": [-CAR_CONSTANTS["a_max"], -CAR_CONSTANTS["omega_max"]],
                "upper": [CAR_CONSTANTS["a_max"], CAR_CONSTANTS["omega_max"]],
            },
            "state_boxes": [{"indices": [3],
                             "lower": [-CAR_CONSTANTS["v_max"]],
                             "upper": [CAR_CONSTANTS["v_max"]]}],
            "collision": CAR_CONSTANTS["d_col"],
        },
    }


def _tuned_solver(iterations: int) -> dict:
    """Solver block used by the crowded builtin tasks: decentralized
    adaptation with a raise-biased schedule, so penalties ratchet up
    whenever the primal residuals stall."""
    return {"iterations": iterations,
            "adaptation": {"enabled": True,
                           "sigma_decr": [1 / 2000, 1 / 2000, 1 / 200]}}


def _jitter(rng, scale=5e-3):
    return float(rng.uniform(-scale, scale))


def swap_cars(M: int, seed: int = 0) -> dict:
    """M cars on a circle swap with their diametric opposites. Goals
    carry a small counterclockwise offset so the (otherwise perfectly
    symmetric) crossing has a preferred rotary direction."""
    rng = np.random.default_rng(seed)
    radius = 2.5
    hint = 0.08
    cfg = _car_base(f"swap{M}", seed, K=150)
    agents = []
    for m in range(M):
        ang = 2 * np.pi * m / M + 0.03
        s = [radius * np.cos(ang) + _jitter(rng), radius * np.sin(ang) + _jitter(rng),
             ang + np.pi, 0.0]
        g = [radius * np.cos(ang + np.pi + hint),
             radius * np.sin(ang + np.pi + hint), ang + np.pi, 0.0]
        agents.append({"start": s, "goal": g})
    cfg["agents"] = agents
    cfg["graph"] = {"mode": "all"}
    return cfg


def intersection_cars(M: int, seed: int = 0) -> dict:
    """Four groups of M/4 cars crossing an intersection at speed, each
    group confined to its (right-hand) lane; all cars are mutual
    neighbors, so no connectivity rows are needed."""
    if M % 4:
        raise ValueError("intersection task needs a multiple of 4 agents")
    rng = np.random.default_rng(seed)
    per = M // 4
    cfg = _car_base(f"intersection{M}", seed, K=150)
    lane = 0.18
    lane_half = 0.45
    spacing = 0.8
    agents = []
    arms = [((1.0, 0.0), 0.0), ((-1.0, 0.0), np.pi),
            ((0.0, 1.0), np.pi / 2), ((0.0, -1.0), -np.pi / 2)]
    travel = 6.9  # equal travel per car keeps each file incompressible
    for arm_idx, (d, heading) in enumerate(arms):
        cross = (d[1], -d[0])  # unit vector to the right of travel
        cross_idx = 0 if abs(cross[0]) > 0 else 1
        cross_val = lane * cross[cross_idx]
        for idx in range(per):
            # arm-dependent stagger avoids perfectly simultaneous arrivals
            d0 = 2.0 + 0.5 * arm_idx + spacing * idx
            s = [-d[0] * d0 + cross[0] * lane + _jitter(rng),
                 -d[1] * d0 + cross[1] * lane + _jitter(rng), heading, 3.0]
            g = [-d[0] * d0 + cross[0] * lane + d[0] * travel,
                 -d[1] * d0 + cross[1] * lane + d[1] * travel, heading, 0.0]
            agents.append({
                "start": s, "goal": g,
                "state_boxes": [{"indices": [cross_idx],
                                 "lower": [cross_val - lane_half],
                                 "upper": [cross_val + lane_half]}],
            })
    cfg["agents"] = agents
    cfg["graph"] = {"mode": "all"}
    cfg["solver"] = _tuned_solver(400)
    return cfg


def circle_swap_cars(M: int, seed: int = 0) -> dict:
    """Circle swapping around a central obstacle, k-nearest neighborhoods.
    Goals carry a small counterclockwise hint to pick a rotary direction."""
    rng = np.random.default_rng(seed)
    hint = 0.30
    cfg = _car_base(f"circleswap{M}", seed, K=250)
    agents = []
    for m in range(M):
        ang = 2 * np.pi * m / M
        radius = 3.5 + 0.15 * ((-1) ** m)  # alternating radii seed two rings
        s = [radius * np.cos(ang) + _jitter(rng),
             radius * np.sin(ang) + _jitter(rng), ang + np.pi, 0.0]
        g = [radius * np.cos(ang + np.pi + hint),
             radius * np.sin(ang + np.pi + hint), ang + np.pi, 0.0]
        agents.append({"start": s, "goal": g})
    cfg["agents"] = agents
    cfg["graph"] = {"mode": "nearest", "k": 5}
    # a large central disc: the swap resolves into wide rotation rings
    cfg["constraints"]["obstacles"] = [{"center": [0.0, 0.0], "radius": 0.8,
                                        "clearance": CAR_CONSTANTS["d_obstacle"]}]
    cfg["constraints"]["connectivity"] = CAR_CONSTANTS["d_con"]
    cfg["solver"] = _tuned_solver(300)
    return cfg


def bottleneck_cars(M: int, seed: int = 0) -> dict:
    """A team funnels through a narrow gap between two keep-out discs."""
    rng = np.random.default_rng(seed)
    cfg = _car_base(f"bottleneck{M}", seed, K=200)
    agents = []
    for m in range(M):
        r, c = divmod(m, 4)
        y0 = (c - 1.5) * 0.55
        x0 = -2.2 - 0.7 * r - 0.25 * c  # stagger columns to serialize entry
        s = [x0 + _jitter(rng), y0 + _jitter(rng), 0.0, 0.0]
        g = [x0 + 5.2, y0, 0.0, 0.0]
        agents.append({"start": s, "goal": g})
    # keep-out discs leave a passable band around y = 0
    gap_half = 0.9
    wall_r = 0.5
    cfg["agents"] = agents
    cfg["graph"] = {"mode": "nearest", "k": 5}
    cfg["constraints"]["obstacles"] = [
        {"center": [0.0, gap_half + wall_r], "radius": wall_r,
         "clearance": CAR_CONSTANTS["d_obstacle"]},
        {"center": [0.0, -gap_half - wall_r], "radius": wall_r,
         "clearance": CAR_CONSTANTS["d_obstacle"]},
    ]
    cfg["constraints"]["connectivity"] = CAR_CONSTANTS["d_con"]
    cfg["solver"] = _tuned_solver(400)
    return cfg


def formation_cars(M: int, seed: int = 0, neighborhood: int = 5) -> dict:
    """Grid-to-grid translation through obstacles (the scaling family).
    The goal grid is the start grid shifted in x, so every car travels
    the same distance and files never compress."""
    rng = np.random.default_rng(seed)
    side = int(np.ceil(np.sqrt(M)))
    shift = 5.0
    cfg = _car_base(f"formation{M}", seed, K=150)
    agents = []
    for m in range(M):
        r, c = divmod(m, side)
        y0 = (r - (side - 1) / 2) * 0.55
        x0 = -shift / 2 - 0.55 * c
        s = [x0 + _jitter(rng), y0 + _jitter(rng), 0.0, 0.0]
        g = [x0 + shift, y0, 0.0, 0.0]
        agents.append({"start": s, "goal": g})
    cfg["agents"] = agents
    cfg["graph"] = {"mode": "nearest", "k": min(neighborhood, M)}
    # one keep-out disc on the route: the inner rows part around it
    cfg["constraints"]["obstacles"] = [
        {"center": [0.0, 0.0], "radius": 0.3,
         "clearance": CAR_CONSTANTS["d_obstacle"]},
    ]
    cfg["constraints"]["connectivity"] = CAR_CONSTANTS["d_con"]
    cfg["solver"] = _tuned_solver(300)
    return cfg


def gate_drones(M: int, seed: int = 0) -> dict:
    """Drones cross to mirrored targets passing a gate window in time."""
    rng = np.random.default_rng(seed)
    K = 150
    cfg = {
        "name": f"gate{M}",
        "seed": seed,
        "dynamics": {"kind": "quadrotor", "dt": 0.02},
        "horizon": K,
        "cost": {"Q": DRONE_CONSTANTS["Q"], "R": DRONE_CONSTANTS["R"],
                 "Qf": DRONE_CONSTANTS["Q"]},
        "constraints": {
            "control_box": {"lower": [0.0] * 4,
                            "upper": [DRONE_CONSTANTS["f_max"]] * 4},
            "state_boxes": [
                {"indices": [1, 2], "lower": [-1.0, -0.5], "upper": [1.0, 0.5],
                 "window": [30, 100]},
            ],
            "collision": DRONE_CONSTANTS["d_col"],
            "connectivity": None,
        },
        "graph": {"mode": "all"},
    }
    agents = []
    for m in range(M):
        y0 = (m - (M - 1) / 2) * 0.7
        z0 = 0.3 * ((-1) ** m)  # alternating altitudes held through the crossing
        s = [-1.6 - 0.15 * m, y0 + _jitter(rng), z0] + [0.0] * 9
        g = [1.6, -y0, z0] + [0.0] * 9
        agents.append({"start": s, "goal": g})
    cfg["agents"] = agents
    cfg["solver"] = _tuned_solver(400)
    return cfg


def swap_unicycles(M: int, seed: int = 0) -> dict:
    """Differential-drive robots swap across a circle under wheel-speed
    limits (transformed control box)."""
    rng = np.random.default_rng(seed)
    R = UNICYCLE_CONSTANTS["wheel_radius"]
    L = UNICYCLE_CONSTANTS["axle_length"]
    C = [[2.0 / (2 * R), L / (2 * R)], [2.0 / (2 * R), -L / (2 * R)]]
    radius = 0.55
    cfg = {
        "name": f"uniswap{M}",
        "seed": seed,
        "dynamics": {"kind": "unicycle", "dt": 0.033},
        "horizon": 280,
        "cost": {"Q": UNICYCLE_CONSTANTS["Q"], "R": UNICYCLE_CONSTANTS["R"],
                 "Qf": UNICYCLE_CONSTANTS["Qf"]},
        "constraints": {
            "control_box": {
                "lower": [-UNICYCLE_CONSTANTS["wheel_speed_max"]] * 2,
                "upper": [UNICYCLE_CONSTANTS["wheel_speed_max"]] * 2,
            },
            "control_box_transform": C,
            "collision": UNICYCLE_CONSTANTS["d_col"],
            "connectivity": UNICYCLE_CONSTANTS["d_con"],
        },
        "graph": {"mode": "nearest", "k": min(5, M)},
    }
    agents = []
    for m in range(M):
        ang = 2 * np.pi * m / M + 0.02
        s = [radius * np.cos(ang) + _jitter(rng),
             radius * np.sin(ang) + _jitter(rng), ang + np.pi]
        g = [-radius * np.cos(ang), -radius * np.sin(ang), ang + np.pi]
        agents.append({"start": s, "goal": g})
    cfg["agents"] = agents
    return cfg


_FAMILIES = {
    "swap": swap_cars,
    "intersection": intersection_cars,
    "circleswap": circle_swap_cars,
    "bottleneck": bottleneck_cars,
    "formation": formation_cars,
    "gate": gate_drones,
    "uniswap": swap_unicycles,
}


def builtin(name: str, seed: int = 0, **kw) -> dict:
    """Generate a builtin scenario: family name with trailing agent count,
    e.g. swap24, intersection16, gate12, formation16."""
    stem = name.rstrip("0123456789")
    digits = name[len(stem):]
    if stem not in _FAMILIES or not digits:
        raise ValueError(f"unknown builtin scenario {name!r}; families: "
                         f"{sorted(_FAMILIES)} followed by the agent count")
    cfg = _FAMILIES[stem](int(digits), seed=seed, **kw)
    cfg = normalize(cfg)
    assert_paper_constants(cfg)
    return cfg


def assert_paper_constants(cfg: dict):
    """Builtin scenarios carry the published constraint constants."""
    kind = cfg["dynamics"]["kind"]
    con = cfg["constraints"]
    if kind == "dubins":
        box = con["control_box"]
        assert box["upper"][0] == CAR_CONSTANTS["a_max"]
        assert abs(box["upper"][1] - CAR_CONSTANTS["omega_max"]) < 1e-12
        assert any(b["indices"] == [3]
                   and b["upper"][0] == CAR_CONSTANTS["v_max"]
                   for b in con["state_boxes"])
        assert con["collision"] == CAR_CONSTANTS["d_col"]
        if con["connectivity"] is not None:
            assert con["connectivity"] == CAR_CONSTANTS["d_con"]
        for obs in con["obstacles"]:
            assert obs["clearance"] == CAR_CONSTANTS["d_obstacle"]
    elif kind == "quadrotor":
        assert con["control_box"]["upper"] == [DRONE_CONSTANTS["f_max"]] * 4
        assert con["collision"] == DRONE_CONSTANTS["d_col"]
    elif kind == "unicycle":
        c = np.asarray(con["control_box_transform"])
        R, L = UNICYCLE_CONSTANTS["wheel_radius"], UNICYCLE_CONSTANTS["axle_length"]
        assert np.allclose(c, np.array([[2, L], [2, -L]]) / (2 * R))
        assert con["control_box"]["upper"] == [UNICYCLE_CONSTANTS["wheel_speed_max"]] * 2
        assert con["collision"] == UNICYCLE_CONSTANTS["d_col"]
