"""Core problem types: trajectories, dynamics and cost interfaces.

All solver-facing objects are value-semantic and stateless so they can be
evaluated concurrently from many agent workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """A state sequence (K+1, p) paired with a control sequence (K, q)."""

    states: np.ndarray
    controls: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if self.states.shape[0] != self.controls.shape[0] + 1:
            raise ValueError(
                f"states length {self.states.shape[0]} must be controls "
                f"length {self.controls.shape[0]} + 1"
            )

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    def copy(self) -> "Trajectory":
        return Trajectory(self.states.copy(), self.controls.copy(), self.dt)


class Dynamics:
    """Discrete-time dynamics x_{k+1} = f(x_k, u_k) with analytic jacobians."""

    state_dim: int
    control_dim: int

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian_u(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobians_along(self, xs: np.ndarray, us: np.ndarray):
        """Stacked jacobians along a trajectory, (K,p,p) and (K,p,q).

        Subclasses override with vectorized evaluations where possible.
        """
        K = us.shape[0]
        fx = np.empty((K, self.state_dim, self.state_dim))
        fu = np.empty((K, self.state_dim, self.control_dim))
        for k in range(K):
            fx[k] = self.jacobian_x(xs[k], us[k])
            fu[k] = self.jacobian_u(xs[k], us[k])
        return fx, fu


class LinearDynamics(Dynamics):
    """x_{k+1} = A x_k + B u_k (+ c)."""

    def __init__(self, A, B, c=None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.c = np.zeros(self.A.shape[0]) if c is None else np.asarray(c, dtype=float)
        self.state_dim = self.A.shape[0]
        self.control_dim = self.B.shape[1]

    def step(self, x, u):
        return self.A @ x + self.B @ u + self.c

    def jacobian_x(self, x, u):
        return self.A

    def jacobian_u(self, x, u):
        return self.B

    def jacobians_along(self, xs, us):
        K = us.shape[0]
        return (np.broadcast_to(self.A, (K,) + self.A.shape).copy(),
                np.broadcast_to(self.B, (K,) + self.B.shape).copy())


class BlockDynamics(Dynamics):
    """Independent sub-models stacked into one block-diagonal system.

    Homogeneous member sets (same class, same parameters object or dt)
    are stepped as one vectorized batch, which keeps rollouts over wide
    stacks cheap.
    """

    def __init__(self, members):
        self.members = list(members)
        dims_p = [m.state_dim for m in self.members]
        dims_q = [m.control_dim for m in self.members]
        self.state_dim = sum(dims_p)
        self.control_dim = sum(dims_q)
        self.state_slices = []
        self.control_slices = []
        op, oq = 0, 0
        for dp, dq in zip(dims_p, dims_q):
            self.state_slices.append(slice(op, op + dp))
            self.control_slices.append(slice(oq, oq + dq))
            op += dp
            oq += dq
        first = self.members[0]
        self._uniform = (len(self.members) > 1
                         and hasattr(first, "step_many")
                         and all(type(m) is type(first)
                                 and getattr(m, "dt", None) == getattr(first, "dt", None)
                                 and getattr(m, "params", None) == getattr(first, "params", None)
                                 for m in self.members[1:]))

    def step(self, x, u):
        if self._uniform:
            B = len(self.members)
            p, q = self.members[0].state_dim, self.members[0].control_dim
            return self.members[0].step_many(x.reshape(B, p),
                                             u.reshape(B, q)).ravel()
        out = np.empty(self.state_dim)
        for m, sx, su in zip(self.members, self.state_slices, self.control_slices):
            out[sx] = m.step(x[sx], u[su])
        return out

    def jacobian_x(self, x, u):
        out = np.zeros((self.state_dim, self.state_dim))
        for m, sx, su in zip(self.members, self.state_slices, self.control_slices):
            out[sx, sx] = m.jacobian_x(x[sx], u[su])
        return out

    def jacobian_u(self, x, u):
        out = np.zeros((self.state_dim, self.control_dim))
        for m, sx, su in zip(self.members, self.state_slices, self.control_slices):
            out[sx, su] = m.jacobian_u(x[sx], u[su])
        return out

    def jacobians_along(self, xs, us):
        K = us.shape[0]
        fx = np.zeros((K, self.state_dim, self.state_dim))
        fu = np.zeros((K, self.state_dim, self.control_dim))
        for m, sx, su in zip(self.members, self.state_slices, self.control_slices):
            mfx, mfu = m.jacobians_along(xs[:, sx], us[:, su])
            fx[:, sx, sx] = mfx
            fu[:, sx, su] = mfu
        return fx, fu


def rollout(dyn: Dynamics, x0: np.ndarray, controls: np.ndarray, dt: float = 1.0) -> Trajectory:
    """Integrate the controls from x0 into a dynamically consistent trajectory."""
    K = controls.shape[0]
    xs = np.empty((K + 1, dyn.state_dim))
    xs[0] = x0
    for k in range(K):
        xs[k + 1] = dyn.step(xs[k], controls[k])
    return Trajectory(xs, np.asarray(controls, dtype=float).copy(), dt)


@dataclass
class CostExpansion:
    """Stacked cost values and derivatives along a trajectory."""

    l: np.ndarray      # (K,)
    lx: np.ndarray     # (K, p)
    lu: np.ndarray     # (K, q)
    lxx: np.ndarray    # (K, p, p)
    lxu: np.ndarray    # (K, p, q)
    luu: np.ndarray    # (K, q, q)
    phi: float
    phix: np.ndarray   # (p,)
    phixx: np.ndarray  # (p, p)

    def add_(self, other: "CostExpansion"):
        self.l += other.l
        self.lx += other.lx
        self.lu += other.lu
        self.lxx += other.lxx
        self.lxu += other.lxu
        self.luu += other.luu
        self.phi += other.phi
        self.phix += other.phix
        self.phixx += other.phixx
        return self


class Cost:
    """Running/terminal cost with first and second derivatives."""

    def running(self, x, u, k) -> float:
        raise NotImplementedError

    def terminal(self, x) -> float:
        raise NotImplementedError

    def lx(self, x, u, k):
        raise NotImplementedError

    def lu(self, x, u, k):
        raise NotImplementedError

    def lxx(self, x, u, k):
        raise NotImplementedError

    def luu(self, x, u, k):
        raise NotImplementedError

    def lxu(self, x, u, k):
        raise NotImplementedError

    def phi_x(self, x):
        raise NotImplementedError

    def phi_xx(self, x):
        raise NotImplementedError

    def expand(self, xs, us) -> CostExpansion:
        """Stacked derivatives along (xs, us); default loops the pointwise API."""
        K, p = us.shape[0], xs.shape[1]
        q = us.shape[1]
        e = CostExpansion(
            l=np.empty(K), lx=np.empty((K, p)), lu=np.empty((K, q)),
            lxx=np.empty((K, p, p)), lxu=np.empty((K, p, q)), luu=np.empty((K, q, q)),
            phi=float(self.terminal(xs[K])), phix=np.asarray(self.phi_x(xs[K]), dtype=float),
            phixx=np.asarray(self.phi_xx(xs[K]), dtype=float),
        )
        for k in range(K):
            e.l[k] = self.running(xs[k], us[k], k)
            e.lx[k] = self.lx(xs[k], us[k], k)
            e.lu[k] = self.lu(xs[k], us[k], k)
            e.lxx[k] = self.lxx(xs[k], us[k], k)
            e.lxu[k] = self.lxu(xs[k], us[k], k)
            e.luu[k] = self.luu(xs[k], us[k], k)
        return e

    def total(self, traj: Trajectory) -> float:
        xs, us = traj.states, traj.controls
        return float(sum(self.running(xs[k], us[k], k) for k in range(traj.horizon))
                     + self.terminal(xs[-1]))


class QuadraticGoalCost(Cost):
    """(x-g)^T Q (x-g) + u^T R u running, (x-g)^T Qf (x-g) terminal."""

    def __init__(self, Q, R, Qf, goal):
        self.Q = np.diag(np.asarray(Q, dtype=float)) if np.ndim(Q) == 1 else np.asarray(Q, dtype=float)
        self.R = np.diag(np.asarray(R, dtype=float)) if np.ndim(R) == 1 else np.asarray(R, dtype=float)
        self.Qf = np.diag(np.asarray(Qf, dtype=float)) if np.ndim(Qf) == 1 else np.asarray(Qf, dtype=float)
        self.goal = np.asarray(goal, dtype=float)

    def running(self, x, u, k):
        dx = x - self.goal
        return float(dx @ self.Q @ dx + u @ self.R @ u)

    def terminal(self, x):
        dx = x - self.goal
        return float(dx @ self.Qf @ dx)

    def lx(self, x, u, k):
        return 2.0 * self.Q @ (x - self.goal)

    def lu(self, x, u, k):
        return 2.0 * self.R @ u

    def lxx(self, x, u, k):
        return 2.0 * self.Q

    def luu(self, x, u, k):
        return 2.0 * self.R

    def lxu(self, x, u, k):
        return np.zeros((self.Q.shape[0], self.R.shape[0]))

    def phi_x(self, x):
        return 2.0 * self.Qf @ (x - self.goal)

    def phi_xx(self, x):
        return 2.0 * self.Qf

    def expand(self, xs, us):
        K = us.shape[0]
        dx = xs[:K] - self.goal
        l = np.einsum("ki,ij,kj->k", dx, self.Q, dx) + np.einsum("ki,ij,kj->k", us, self.R, us)
        lx = 2.0 * dx @ self.Q.T
        lu = 2.0 * us @ self.R.T
        lxx = np.broadcast_to(2.0 * self.Q, (K,) + self.Q.shape).copy()
        luu = np.broadcast_to(2.0 * self.R, (K,) + self.R.shape).copy()
        lxu = np.zeros((K, self.Q.shape[0], self.R.shape[0]))
        dxt = xs[K] - self.goal
        return CostExpansion(l, lx, lu, lxx, lxu, luu,
                             float(dxt @ self.Qf @ dxt), 2.0 * self.Qf @ dxt, 2.0 * self.Qf)

    def total(self, traj):
        e_dx = traj.states[:-1] - self.goal
        run = (np.einsum("ki,ij,kj->k", e_dx, self.Q, e_dx).sum()
               + np.einsum("ki,ij,kj->k", traj.controls, self.R, traj.controls).sum())
        dxt = traj.states[-1] - self.goal
        return float(run + dxt @ self.Qf @ dxt)


class TrackingProxCost(Cost):
    """0.5 * sum_k |x_k - xref_k|^2_W + 0.5 * sum_k |u_k - uref_k|^2_V.

    W and V are diagonal weight vectors; the state term includes k = K.
    Either side can be disabled by passing None.
    """

    def __init__(self, state_weights=None, state_refs=None,
                 control_weights=None, control_refs=None,
                 state_dim=None, control_dim=None):
        self.w = None if state_weights is None else np.asarray(state_weights, dtype=float)
        self.xref = None if state_refs is None else np.asarray(state_refs, dtype=float)
        self.v = None if control_weights is None else np.asarray(control_weights, dtype=float)
        self.uref = None if control_refs is None else np.asarray(control_refs, dtype=float)
        self.p = state_dim if self.w is None else self.w.shape[0]
        self.q = control_dim if self.v is None else self.v.shape[0]

    def running(self, x, u, k):
        c = 0.0
        if self.w is not None:
            d = x - self.xref[k]
            c += 0.5 * float(self.w @ (d * d))
        if self.v is not None:
            d = u - self.uref[k]
            c += 0.5 * float(self.v @ (d * d))
        return c

    def terminal(self, x):
        if self.w is None:
            return 0.0
        d = x - self.xref[-1]
        return 0.5 * float(self.w @ (d * d))

    def lx(self, x, u, k):
        return np.zeros(self.p) if self.w is None else self.w * (x - self.xref[k])

    def lu(self, x, u, k):
        return np.zeros(self.q) if self.v is None else self.v * (u - self.uref[k])

    def lxx(self, x, u, k):
        return np.zeros((self.p, self.p)) if self.w is None else np.diag(self.w)

    def luu(self, x, u, k):
        return np.zeros((self.q, self.q)) if self.v is None else np.diag(self.v)

    def lxu(self, x, u, k):
        return np.zeros((self.p, self.q))

    def phi_x(self, x):
        return np.zeros(self.p) if self.w is None else self.w * (x - self.xref[-1])

    def phi_xx(self, x):
        return np.zeros((self.p, self.p)) if self.w is None else np.diag(self.w)

    def expand(self, xs, us):
        K, p, q = us.shape[0], xs.shape[1], us.shape[1]
        e = CostExpansion(np.zeros(K), np.zeros((K, p)), np.zeros((K, q)),
                          np.zeros((K, p, p)), np.zeros((K, p, q)), np.zeros((K, q, q)),
                          0.0, np.zeros(p), np.zeros((p, p)))
        if self.w is not None:
            dx = xs[:K] - self.xref[:K]
            e.l += 0.5 * (dx * dx) @ self.w
            e.lx += self.w * dx
            e.lxx += np.diag(self.w)
            dt = xs[K] - self.xref[K]
            e.phi = 0.5 * float(self.w @ (dt * dt))
            e.phix = self.w * dt
            e.phixx = np.diag(self.w)
        if self.v is not None:
            du = us - self.uref
            e.l += 0.5 * (du * du) @ self.v
            e.lu += self.v * du
            e.luu += np.diag(self.v)
        return e

    def total(self, traj):
        c = 0.0
        if self.w is not None:
            dx = traj.states - self.xref
            c += 0.5 * float(np.sum((dx * dx) @ self.w))
        if self.v is not None:
            du = traj.controls - self.uref
            c += 0.5 * float(np.sum((du * du) @ self.v))
        return c


class BlockCost(Cost):
    """A member cost applied to a slice of a larger state/control, scaled."""

    def __init__(self, inner: Cost, state_slice, control_slice, p, q, weight=1.0):
        self.inner = inner
        self.sx = state_slice
        self.su = control_slice
        self.p = p
        self.q = q
        self.weight = weight

    def running(self, x, u, k):
        return self.weight * self.inner.running(x[self.sx], u[self.su], k)

    def terminal(self, x):
        return self.weight * self.inner.terminal(x[self.sx])

    def lx(self, x, u, k):
        out = np.zeros(self.p)
        out[self.sx] = self.weight * self.inner.lx(x[self.sx], u[self.su], k)
        return out

    def lu(self, x, u, k):
        out = np.zeros(self.q)
        out[self.su] = self.weight * self.inner.lu(x[self.sx], u[self.su], k)
        return out

    def lxx(self, x, u, k):
        out = np.zeros((self.p, self.p))
        out[self.sx, self.sx] = self.weight * self.inner.lxx(x[self.sx], u[self.su], k)
        return out

    def luu(self, x, u, k):
        out = np.zeros((self.q, self.q))
        out[self.su, self.su] = self.weight * self.inner.luu(x[self.sx], u[self.su], k)
        return out

    def lxu(self, x, u, k):
        out = np.zeros((self.p, self.q))
        out[self.sx, self.su] = self.weight * self.inner.lxu(x[self.sx], u[self.su], k)
        return out

    def phi_x(self, x):
        out = np.zeros(self.p)
        out[self.sx] = self.weight * self.inner.phi_x(x[self.sx])
        return out

    def phi_xx(self, x):
        out = np.zeros((self.p, self.p))
        out[self.sx, self.sx] = self.weight * self.inner.phi_xx(x[self.sx])
        return out

    def expand(self, xs, us):
        K = us.shape[0]
        ei = self.inner.expand(xs[:, self.sx], us[:, self.su])
        e = CostExpansion(np.zeros(K), np.zeros((K, self.p)), np.zeros((K, self.q)),
                          np.zeros((K, self.p, self.p)), np.zeros((K, self.p, self.q)),
                          np.zeros((K, self.q, self.q)), 0.0, np.zeros(self.p),
                          np.zeros((self.p, self.p)))
        w = self.weight
        e.l[:] = w * ei.l
        e.lx[:, self.sx] = w * ei.lx
        e.lu[:, self.su] = w * ei.lu
        e.lxx[:, self.sx, self.sx] = w * ei.lxx
        e.lxu[:, self.sx, self.su] = w * ei.lxu
        e.luu[:, self.su, self.su] = w * ei.luu
        e.phi = w * ei.phi
        e.phix[self.sx] = w * ei.phix
        e.phixx[self.sx, self.sx] = w * ei.phixx
        return e

    def total(self, traj):
        inner = Trajectory(traj.states[:, self.sx], traj.controls[:, self.su],
                           traj.dt)
        return self.weight * self.inner.total(inner)


class SumCost(Cost):
    """Sum of component costs over the same state/control space."""

    def __init__(self, parts):
        self.parts = list(parts)

    def running(self, x, u, k):
        return sum(c.running(x, u, k) for c in self.parts)

    def terminal(self, x):
        return sum(c.terminal(x) for c in self.parts)

    def lx(self, x, u, k):
        return sum(c.lx(x, u, k) for c in self.parts)

    def lu(self, x, u, k):
        return sum(c.lu(x, u, k) for c in self.parts)

    def lxx(self, x, u, k):
        return sum(c.lxx(x, u, k) for c in self.parts)

    def luu(self, x, u, k):
        return sum(c.luu(x, u, k) for c in self.parts)

    def lxu(self, x, u, k):
        return sum(c.lxu(x, u, k) for c in self.parts)

    def phi_x(self, x):
        return sum(c.phi_x(x) for c in self.parts)

    def phi_xx(self, x):
        return sum(c.phi_xx(x) for c in self.parts)

    def expand(self, xs, us):
        e = self.parts[0].expand(xs, us)
        for c in self.parts[1:]:
            e.add_(c.expand(xs, us))
        return e

    def total(self, traj):
        return float(sum(c.total(traj) for c in self.parts))


@dataclass
class ControlLaw:
    """Affine time-varying policy from a backward pass."""

    feedforward: np.ndarray  # (K, q)
    feedback: np.ndarray     # (K, q, p)
    d1: float = 0.0          # sum_k Qu^T k_k
    d2: float = 0.0          # sum_k k_k^T Quu k_k

    @property
    def horizon(self) -> int:
        return self.feedforward.shape[0]

    def expected_reduction(self, alpha: float = 1.0) -> float:
        return -alpha * self.d1 - 0.5 * alpha * alpha * self.d2

    @property
    def expected_cost_reduction(self) -> float:
        return self.expected_reduction(1.0)


@dataclass
class ValueExpansion:
    """Per-timestep quadratic value model: scalars, gradients, Hessians."""

    V: np.ndarray    # (K+1,)
    Vx: np.ndarray   # (K+1, p)
    Vxx: np.ndarray  # (K+1, p, p)


_DEFAULT_ALPHAS = tuple(0.5 ** i for i in range(11))


@dataclass
class DdpSettings:
    """Solver settings: iteration budget, damping schedule, line search."""

    max_iterations: int = 50
    reg_init: float = 1e-6
    reg_min: float = 1e-8
    reg_max: float = 1e8
    reg_up: float = 10.0
    reg_down: float = 2.0
    alphas: tuple = _DEFAULT_ALPHAS
    tol_abs: float = 1e-6
    tol_rel: float = 1e-8
    warmstart: bool = True

    def __post_init__(self):
        if self.reg_min <= 0:
            raise ValueError("reg_min must be positive")
        if any(a <= 0 or a > 1 for a in self.alphas):
            raise ValueError("line-search alphas must lie in (0, 1]")
