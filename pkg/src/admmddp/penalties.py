"""Consensus penalty matrices, residual reports, decentralized adaptation
and the momentum sequence shared by the consensus orchestrators.

Penalty matrices are diagonal and stored as their diagonal vectors. The
default bases follow the cost weights (control penalty from R, state
penalty from Q, neighborhood penalty from the stacked Q blocks), scaled
by the c1/c2/c3 multipliers. Zero cost-weight entries are floored to a
small positive fraction of the largest entry so every penalty matrix
stays invertible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PenaltySettings:
    """mode 'matrix': bases from cost weights times c1/c2/c3.
    mode 'scalar': uniform diagonals tau/rho/mu (the printed updates with
    their dual correction terms are used for the global average then)."""

    mode: str = "matrix"
    c1: float = 2.0
    c2: float = 8.0
    c3: float = 8.0
    tau: float = 2.0
    rho: float = 8.0
    mu: float = 8.0
    floor_ratio: float = 1e-2

    def __post_init__(self):
        if self.mode not in ("matrix", "scalar"):
            raise ValueError("penalty mode must be 'matrix' or 'scalar'")
        if min(self.c1, self.c2, self.c3, self.tau, self.rho, self.mu) <= 0:
            raise ValueError("penalty multipliers must be positive")


def floored(diag: np.ndarray, ratio: float) -> np.ndarray:
    diag = np.asarray(diag, dtype=float).copy()
    top = float(diag.max()) if diag.size else 0.0
    floor = ratio * top if top > 0 else 1.0
    return np.maximum(diag, floor)


@dataclass
class AdaptationSettings:
    """Residual-balancing schedule from per-agent residual ratios."""

    enabled: bool = False
    every: int = 10
    chi_incr: float = 2.0
    chi_decr: float = 2.0
    sigma_incr: tuple = (1 / 200, 1 / 200, 1 / 20)
    sigma_decr: tuple = (1 / 50, 1 / 50, 1 / 5)
    a_min: float = 1 / 64
    a_max: float = 64.0

    def __post_init__(self):
        if self.chi_incr <= 1 or self.chi_decr <= 1:
            raise ValueError("adaptation factors must exceed 1")
        if self.every < 1:
            raise ValueError("adaptation interval must be >= 1")


def adapt_scale(a: float, pri: float, dual: float, block: int,
                settings: AdaptationSettings) -> float:
    """One update of a penalty scale factor from its residual pair.

    The raise branch is checked first (printed case order); with the
    shipped sigma values both inequalities can hold at once and the
    raise wins.
    """
    if pri > settings.sigma_incr[block] * dual:
        a = a * settings.chi_incr
    elif pri < settings.sigma_decr[block] * dual:
        a = a / settings.chi_decr
    return float(np.clip(a, settings.a_min, settings.a_max))


@dataclass
class PenaltyMatrices:
    """Scaled diagonal penalties a_b * base_b with their scale factors."""

    t_base: np.ndarray
    p_base: np.ndarray
    m_base: np.ndarray
    a: np.ndarray = None

    def __post_init__(self):
        if self.a is None:
            self.a = np.ones(3)
        for base in (self.t_base, self.p_base, self.m_base):
            if np.any(base <= 0):
                raise ValueError("penalty diagonals must be positive")

    @property
    def t(self) -> np.ndarray:
        return self.a[0] * self.t_base

    @property
    def p(self) -> np.ndarray:
        return self.a[1] * self.p_base

    @property
    def m(self) -> np.ndarray:
        return self.a[2] * self.m_base

    def adapted(self, pri, dual, settings: AdaptationSettings) -> "PenaltyMatrices":
        a = np.array([adapt_scale(self.a[b], pri[b], dual[b], b, settings)
                      for b in range(3)])
        return PenaltyMatrices(self.t_base, self.p_base, self.m_base, a)


def md_penalties(agent, neighbor_q_diags, settings: PenaltySettings) -> PenaltyMatrices:
    """Control-safe (T), state-safe (P) and neighborhood-consensus (M)
    penalty bases for one agent."""
    if settings.mode == "scalar":
        ptot = sum(d.size for d in neighbor_q_diags)
        return PenaltyMatrices(np.full(agent.q, settings.tau),
                               np.full(agent.p, settings.rho),
                               np.full(ptot, settings.mu))
    t0 = floored(settings.c1 * agent.r_diag, settings.floor_ratio)
    p0 = floored(settings.c2 * agent.q_diag, settings.floor_ratio)
    m0 = floored(settings.c3 * np.concatenate(neighbor_q_diags),
                 settings.floor_ratio)
    return PenaltyMatrices(t0, p0, m0)


def nd_penalties(neighbor_q_diags, neighbor_r_diags,
                 settings: PenaltySettings) -> PenaltyMatrices:
    """State-consensus (P, rho role) and control-consensus (M, mu role)
    penalties over an augmented neighborhood; the T slot is unused and
    kept at one."""
    if settings.mode == "scalar":
        ptot = sum(d.size for d in neighbor_q_diags)
        qtot = sum(d.size for d in neighbor_r_diags)
        return PenaltyMatrices(np.ones(1), np.full(ptot, settings.rho),
                               np.full(qtot, settings.mu))
    p0 = floored(settings.c2 * np.concatenate(neighbor_q_diags),
                 settings.floor_ratio)
    m0 = floored(settings.c1 * np.concatenate(neighbor_r_diags),
                 settings.floor_ratio)
    return PenaltyMatrices(np.ones(1), p0, m0)


@dataclass
class ResidualReport:
    """Per-agent primal/dual residual norms for the three consensus
    blocks (control-safe, state-safe, global-consensus)."""

    pri: np.ndarray   # (3,)
    dual: np.ndarray  # (3,)

    def __post_init__(self):
        if np.any(self.pri < 0) or np.any(self.dual < 0):
            raise ValueError("residual norms must be nonnegative")


def total_residual_norms(reports) -> tuple:
    """Norm of the concatenation over agents, per block."""
    pri = np.sqrt(sum(r.pri ** 2 for r in reports))
    dual = np.sqrt(sum(r.dual ** 2 for r in reports))
    return pri, dual


@dataclass
class NesterovState:
    """Momentum sequence: alpha_1 = 1, alpha_{n+1} = (1+sqrt(1+4a^2))/2,
    gamma_n = eta (alpha_n - 1) / alpha_{n+1}. eta = 0 collapses the
    extrapolation to the plain iterates."""

    eta: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("momentum parameter must lie in [0, 1)")

    def advance(self) -> float:
        alpha_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * self.alpha ** 2))
        gamma = self.eta * (self.alpha - 1.0) / alpha_next
        self.alpha = alpha_next
        return float(gamma)

    def reset(self):
        self.alpha = 1.0


def extrapolate(new: np.ndarray, prev: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 0.0:
        return new.copy()
    return new + gamma * (new - prev)
