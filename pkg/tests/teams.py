"""Small team-problem builders shared across orchestrator tests."""
import numpy as np

from admmddp.constraints import BoxConstraint
from admmddp.models import DubinsCar
from admmddp.network import build_graph
from admmddp.problem import QuadraticGoalCost
from admmddp.team import AgentSpec, TeamProblem

CAR_Q = (30.0, 30.0, 0.0, 6.0)
CAR_R = (0.5, 0.5)
CAR_QF = (100.0, 100.0, 0.0, 100.0)
A_MAX = 10.0
OMEGA_MAX = np.deg2rad(30.0)
V_MAX = 10.0


def car_agent(start, goal, dt, boxed=True, field_box=None):
    model = DubinsCar(dt)
    cost = QuadraticGoalCost(CAR_Q, CAR_R, CAR_QF, np.asarray(goal, dtype=float))
    control_blocks = []
    state_blocks = []
    if boxed:
        control_blocks.append(BoxConstraint([-A_MAX, -OMEGA_MAX],
                                            [A_MAX, OMEGA_MAX], target="control"))
        state_blocks.append(BoxConstraint([-V_MAX], [V_MAX], target="state",
                                          indices=[3]))
    if field_box is not None:
        (xlo, xhi), (ylo, yhi) = field_box
        state_blocks.append(BoxConstraint([xlo, ylo], [xhi, yhi], target="state",
                                          indices=[0, 1]))
    return AgentSpec(model, cost, np.asarray(start, dtype=float),
                     np.asarray(goal, dtype=float), control_blocks, state_blocks)


def single_car(K=50, dt=0.05, boxed=False):
    agent = car_agent([0.0, 0.0, 0.0, 0.0], [1.5, 1.0, 0.0, 0.0], dt, boxed=boxed)
    graph = build_graph(M=1, all_neighbors=True)
    return TeamProblem([agent], graph, K, dt, pos_dim=2)


def two_car_swap(K=70, dt=0.05, collision=0.3, connectivity=None, boxed=True):
    starts = [[-1.0, 0.0, 0.0, 0.0], [1.0, 0.015, np.pi, 0.0]]
    goals = [[1.0, 0.0, 0.0, 0.0], [-1.0, 0.015, np.pi, 0.0]]
    agents = [car_agent(s, g, dt, boxed=boxed) for s, g in zip(starts, goals)]
    graph = build_graph(M=2, all_neighbors=True)
    return TeamProblem(agents, graph, K, dt, pos_dim=2,
                       collision=collision, connectivity=connectivity)


def four_car_swap(K=70, dt=0.05, collision=0.3):
    r = 1.2
    starts, goals = [], []
    for m in range(4):
        ang = np.pi / 2 * m + 0.03  # small asymmetry breaks head-on ties
        s = [r * np.cos(ang), r * np.sin(ang), ang + np.pi, 0.0]
        g = [-r * np.cos(ang), -r * np.sin(ang), ang + np.pi, 0.0]
        starts.append(s)
        goals.append(g)
    agents = [car_agent(s, g, dt) for s, g in zip(starts, goals)]
    graph = build_graph(M=4, all_neighbors=True)
    return TeamProblem(agents, graph, K, dt, pos_dim=2, collision=collision)
