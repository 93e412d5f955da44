"""Dynamics model checks: hand values, jacobians vs finite differences,
Euler consistency."""
import numpy as np
import pytest

from admmddp.models import (DubinsCar, Quadrotor, QuadrotorParams, Unicycle,
                            make_model)

from oracles import fd_jacobian, rel_err


def random_states(rng, model, n):
    xs = rng.normal(size=(n, model.state_dim))
    us = rng.normal(size=(n, model.control_dim))
    if isinstance(model, Quadrotor):
        xs[:, 6:9] *= 0.3  # keep Euler angles away from the pitch singularity
        us = np.abs(us) * 2.0
    return xs, us


class TestDubins:
    def test_straight_line(self):
        m = DubinsCar(dt=0.02)
        out = m.step(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(2))
        assert np.allclose(out, [0.02, 0.0, 0.0, 1.0], atol=1e-15)

    def test_axis_aligned_heading(self):
        m = DubinsCar(dt=0.02)
        out = m.step(np.array([0.0, 0.0, np.pi / 2, 2.0]), np.zeros(2))
        assert np.allclose(out, [0.0, 0.04, np.pi / 2, 2.0], atol=1e-12)

    def test_controls_enter_acceleration_and_turn_rate(self):
        m = DubinsCar(dt=0.1)
        out = m.step(np.zeros(4), np.array([2.0, 0.5]))
        assert out[3] == pytest.approx(0.2)
        assert out[2] == pytest.approx(0.05)


class TestUnicycle:
    def test_forward_drive(self):
        m = Unicycle(dt=0.033)
        out = m.step(np.zeros(3), np.array([1.0, 0.0]))
        assert np.allclose(out, [0.033, 0.0, 0.0], atol=1e-15)

    def test_pure_rotation(self):
        m = Unicycle(dt=0.033)
        out = m.step(np.zeros(3), np.array([0.0, 0.7]))
        assert np.allclose(out[:2], 0.0)
        assert out[2] == pytest.approx(0.7 * 0.033)


class TestQuadrotor:
    def test_hover_is_fixed_point(self):
        m = Quadrotor(dt=0.02)
        x = np.zeros(12)
        u = np.full(4, m.params.hover_thrust)
        assert np.allclose(m.step(x, u), x, atol=1e-14)

    def test_free_fall(self):
        m = Quadrotor(dt=0.02)
        out = m.step(np.zeros(12), np.zeros(4))
        assert out[5] == pytest.approx(-m.params.gravity * 0.02)
        assert np.allclose(np.delete(out, 5), 0.0)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            QuadrotorParams(mass=-1.0)


@pytest.mark.parametrize("factory", [
    lambda: DubinsCar(dt=0.02),
    lambda: Unicycle(dt=0.033),
    lambda: Quadrotor(dt=0.02),
])
class TestJacobians:
    def test_matches_finite_differences(self, factory):
        model = factory()
        rng = np.random.default_rng(42)
        xs, us = random_states(rng, model, 100)
        for x, u in zip(xs, us):
            jx = model.jacobian_x(x, u)
            ju = model.jacobian_u(x, u)
            assert rel_err(jx, fd_jacobian(lambda z: model.step(z, u), x)) < 1e-5
            assert rel_err(ju, fd_jacobian(lambda z: model.step(x, z), u)) < 1e-5

    def test_batched_jacobians_match_pointwise(self, factory):
        model = factory()
        rng = np.random.default_rng(3)
        xs, us = random_states(rng, model, 8)
        fx, fu = model.jacobians_along(np.vstack([xs, xs[-1:]]), us)
        for k in range(8):
            assert np.allclose(fx[k], model.jacobian_x(xs[k], us[k]), atol=1e-14)
            assert np.allclose(fu[k], model.jacobian_u(xs[k], us[k]), atol=1e-14)

    def test_euler_consistency(self, factory):
        # the discrete step is exactly x + dt * field, so the difference
        # quotient must reproduce the same vector field at every dt
        model = factory()
        rng = np.random.default_rng(9)
        xs, us = random_states(rng, model, 4)
        base = type(model)
        for x, u in zip(xs, us):
            fields = []
            for dt in (1e-2, 1e-3, 1e-4):
                m2 = base(dt) if base is not Quadrotor else Quadrotor(dt, model.params)
                fields.append((m2.step(x, u) - x) / dt)
            assert rel_err(fields[0], fields[1]) < 1e-10
            assert rel_err(fields[1], fields[2]) < 1e-10


class TestFactory:
    def test_make_model(self):
        assert isinstance(make_model("dubins", 0.02), DubinsCar)
        assert isinstance(make_model("unicycle", 0.033), Unicycle)
        q = make_model("quadrotor", 0.02, {"mass": 1.2})
        assert q.params.mass == 1.2

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            make_model("hovercraft", 0.02)

    def test_params_only_for_quadrotor(self):
        with pytest.raises(ValueError):
            make_model("dubins", 0.02, {"mass": 1.0})
