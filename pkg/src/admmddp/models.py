"""Vehicle dynamics models, Euler-discretized, with analytic jacobians.

Angles are left unwrapped (no modular arithmetic): the shipped cost
matrices place zero weight on heading for the ground vehicles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Dynamics


class DubinsCar(Dynamics):
    """State (x, y, theta, v); controls (a, omega)."""

    state_dim = 4
    control_dim = 2

    def __init__(self, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = dt

    def step(self, x, u):
        th, v = x[2], x[3]
        return x + self.dt * np.array([v * np.cos(th), v * np.sin(th), u[1], u[0]])

    def jacobian_x(self, x, u):
        th, v = x[2], x[3]
        j = np.eye(4)
        j[0, 2] = -self.dt * v * np.sin(th)
        j[0, 3] = self.dt * np.cos(th)
        j[1, 2] = self.dt * v * np.cos(th)
        j[1, 3] = self.dt * np.sin(th)
        return j

    def jacobian_u(self, x, u):
        j = np.zeros((4, 2))
        j[2, 1] = self.dt
        j[3, 0] = self.dt
        return j

    def jacobians_along(self, xs, us):
        K = us.shape[0]
        th, v = xs[:K, 2], xs[:K, 3]
        fx = np.tile(np.eye(4), (K, 1, 1))
        fx[:, 0, 2] = -self.dt * v * np.sin(th)
        fx[:, 0, 3] = self.dt * np.cos(th)
        fx[:, 1, 2] = self.dt * v * np.cos(th)
        fx[:, 1, 3] = self.dt * np.sin(th)
        fu = np.zeros((K, 4, 2))
        fu[:, 2, 1] = self.dt
        fu[:, 3, 0] = self.dt
        return fx, fu

    def step_many(self, xs, us):
        th, v = xs[:, 2], xs[:, 3]
        return xs + self.dt * np.stack(
            [v * np.cos(th), v * np.sin(th), us[:, 1], us[:, 0]], axis=1)


class Unicycle(Dynamics):
    """State (x, y, theta); controls (v, omega)."""

    state_dim = 3
    control_dim = 2

    def __init__(self, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = dt

    def step(self, x, u):
        th = x[2]
        return x + self.dt * np.array([u[0] * np.cos(th), u[0] * np.sin(th), u[1]])

    def jacobian_x(self, x, u):
        th = x[2]
        j = np.eye(3)
        j[0, 2] = -self.dt * u[0] * np.sin(th)
        j[1, 2] = self.dt * u[0] * np.cos(th)
        return j

    def jacobian_u(self, x, u):
        th = x[2]
        j = np.zeros((3, 2))
        j[0, 0] = self.dt * np.cos(th)
        j[1, 0] = self.dt * np.sin(th)
        j[2, 1] = self.dt
        return j

    def jacobians_along(self, xs, us):
        K = us.shape[0]
        th, v = xs[:K, 2], us[:, 0]
        fx = np.tile(np.eye(3), (K, 1, 1))
        fx[:, 0, 2] = -self.dt * v * np.sin(th)
        fx[:, 1, 2] = self.dt * v * np.cos(th)
        fu = np.zeros((K, 3, 2))
        fu[:, 0, 0] = self.dt * np.cos(th)
        fu[:, 1, 0] = self.dt * np.sin(th)
        fu[:, 2, 1] = self.dt
        return fx, fu

    def step_many(self, xs, us):
        th = xs[:, 2]
        return xs + self.dt * np.stack(
            [us[:, 0] * np.cos(th), us[:, 0] * np.sin(th), us[:, 1]], axis=1)


@dataclass
class QuadrotorParams:
    """Rigid-body parameters; defaults follow a common 0.468 kg testbed model
    and every value is overridable from the scenario config."""

    mass: float = 0.468
    inertia: tuple = (4.856e-3, 4.856e-3, 8.801e-3)
    arm_length: float = 0.225
    thrust_to_torque: float = 0.0383
    gravity: float = 9.81

    def __post_init__(self):
        vals = (self.mass, *self.inertia, self.arm_length,
                self.thrust_to_torque, self.gravity)
        if any(v <= 0 for v in vals):
            raise ValueError("quadrotor parameters must be positive")

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity / 4.0


class Quadrotor(Dynamics):
    """State (position 3, velocity 3, Euler angles 3, body rates 3);
    controls are the four rotor thrusts.

    Total thrust acts along body z; torques come from differential
    thrusts; Euler-angle kinematics use the standard ZYX rate map.
    """

    state_dim = 12
    control_dim = 4

    def __init__(self, dt: float, params: QuadrotorParams | None = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self.params = params or QuadrotorParams()
        pr = self.params
        l, c = pr.arm_length, pr.thrust_to_torque
        self._torque_map = np.array([
            [0.0, l, 0.0, -l],
            [-l, 0.0, l, 0.0],
            [c, -c, c, -c],
        ])
        self._jinv = 1.0 / np.asarray(pr.inertia, dtype=float)

    def _field(self, x, u):
        pr = self.params
        v = x[3:6]
        phi, th, psi = x[6], x[7], x[8]
        nu = x[9:12]
        cph, sph = np.cos(phi), np.sin(phi)
        cth, sth = np.cos(th), np.sin(th)
        cps, sps = np.cos(psi), np.sin(psi)
        thrust = float(np.sum(u))
        body_z = np.array([cps * sth * cph + sps * sph,
                           sps * sth * cph - cps * sph,
                           cth * cph])
        acc = np.array([0.0, 0.0, -pr.gravity]) + (thrust / pr.mass) * body_z
        tth = sth / cth
        eul_rate = np.array([
            nu[0] + sph * tth * nu[1] + cph * tth * nu[2],
            cph * nu[1] - sph * nu[2],
            (sph * nu[1] + cph * nu[2]) / cth,
        ])
        jx, jy, jz = self.params.inertia
        gyro = np.array([(jz - jy) * nu[1] * nu[2],
                         (jx - jz) * nu[0] * nu[2],
                         (jy - jx) * nu[0] * nu[1]])
        ang_acc = self._jinv * (self._torque_map @ u - gyro)
        return np.concatenate([v, acc, eul_rate, ang_acc])

    def step(self, x, u):
        return x + self.dt * self._field(x, u)

    def jacobian_x(self, x, u):
        pr = self.params
        phi, th = x[6], x[7]
        psi = x[8]
        nu = x[9:12]
        cph, sph = np.cos(phi), np.sin(phi)
        cth, sth = np.cos(th), np.sin(th)
        cps, sps = np.cos(psi), np.sin(psi)
        tth = sth / cth
        thrust = float(np.sum(u)) / pr.mass

        a = np.zeros((12, 12))
        a[0:3, 3:6] = np.eye(3)
        # d(acc)/d(euler)
        a[3:6, 6] = thrust * np.array([-cps * sth * sph + sps * cph,
                                       -sps * sth * sph - cps * cph,
                                       -cth * sph])
        a[3:6, 7] = thrust * np.array([cps * cth * cph, sps * cth * cph, -sth * cph])
        a[3:6, 8] = thrust * np.array([-sps * sth * cph + cps * sph,
                                       cps * sth * cph + sps * sph, 0.0])
        # d(euler rate)/d(phi, theta) and /d(body rates)
        a[6:9, 6] = np.array([cph * tth * nu[1] - sph * tth * nu[2],
                              -sph * nu[1] - cph * nu[2],
                              (cph * nu[1] - sph * nu[2]) / cth])
        a[6:9, 7] = np.array([(sph * nu[1] + cph * nu[2]) / cth ** 2, 0.0,
                              (sph * nu[1] + cph * nu[2]) * sth / cth ** 2])
        a[6:9, 9:12] = np.array([[1.0, sph * tth, cph * tth],
                                 [0.0, cph, -sph],
                                 [0.0, sph / cth, cph / cth]])
        # d(ang acc)/d(body rates)
        jx, jy, jz = pr.inertia
        a[9, 10] = -self._jinv[0] * (jz - jy) * nu[2]
        a[9, 11] = -self._jinv[0] * (jz - jy) * nu[1]
        a[10, 9] = -self._jinv[1] * (jx - jz) * nu[2]
        a[10, 11] = -self._jinv[1] * (jx - jz) * nu[0]
        a[11, 9] = -self._jinv[2] * (jy - jx) * nu[1]
        a[11, 10] = -self._jinv[2] * (jy - jx) * nu[0]
        return np.eye(12) + self.dt * a

    def jacobian_u(self, x, u):
        pr = self.params
        phi, th, psi = x[6], x[7], x[8]
        cph, sph = np.cos(phi), np.sin(phi)
        cth, sth = np.cos(th), np.sin(th)
        cps, sps = np.cos(psi), np.sin(psi)
        body_z = np.array([cps * sth * cph + sps * sph,
                           sps * sth * cph - cps * sph,
                           cth * cph])
        b = np.zeros((12, 4))
        b[3:6, :] = np.outer(body_z / pr.mass, np.ones(4))
        b[9:12, :] = self._jinv[:, None] * self._torque_map
        return self.dt * b

    def jacobians_along(self, xs, us):
        K = us.shape[0]
        fx = np.empty((K, 12, 12))
        fu = np.empty((K, 12, 4))
        for k in range(K):
            fx[k] = self.jacobian_x(xs[k], us[k])
            fu[k] = self.jacobian_u(xs[k], us[k])
        return fx, fu

    def step_many(self, xs, us):
        out = np.empty_like(xs)
        for i in range(xs.shape[0]):
            out[i] = self.step(xs[i], us[i])
        return out


_MODEL_KINDS = {"dubins": DubinsCar, "unicycle": Unicycle, "quadrotor": Quadrotor}


def make_model(kind: str, dt: float, params: dict | None = None) -> Dynamics:
    """Instantiate a dynamics model by config name."""
    if kind not in _MODEL_KINDS:
        raise ValueError(f"unknown dynamics kind {kind!r}; expected one of {sorted(_MODEL_KINDS)}")
    if kind == "quadrotor":
        return Quadrotor(dt, QuadrotorParams(**(params or {})))
    if params:
        raise ValueError(f"dynamics kind {kind!r} takes no parameters")
    return _MODEL_KINDS[kind](dt)
