"""Projection QP solver vs the brute-force active-set enumeration oracle."""
import numpy as np
import pytest

from admmddp import _kernels
from admmddp._kernels import pyfallback
from admmddp.qp import box_rows, relaxed_least_violation, solve_diag_qp

from oracles import brute_force_diag_qp


def random_instance(rng, dim=None, n_half=None):
    dim = dim or int(rng.integers(1, 7))
    n_half = n_half if n_half is not None else int(rng.integers(0, 5))
    w = rng.uniform(0.2, 5.0, dim)
    t = rng.normal(size=dim) * 2
    rows = []
    offs = []
    for _ in range(n_half):
        a = rng.normal(size=dim)
        a /= np.linalg.norm(a)
        rows.append(a)
        offs.append(rng.normal() * 1.5 + 1.0)  # biased feasible, some conflicts
    # box rows on up to two components
    nb = int(rng.integers(0, 3))
    idx = rng.permutation(dim)[:nb]
    lo = rng.uniform(-2.0, -0.1, nb)
    hi = rng.uniform(0.1, 2.0, nb)
    ba, bb = box_rows(dim, idx, lo, hi)
    A = np.vstack([np.array(rows).reshape(-1, dim), ba])
    b = np.concatenate([np.array(offs), bb])
    return w, t, A, b


class TestAgainstOracle:
    def test_thousand_random_instances(self):
        rng = np.random.default_rng(2024)
        solved = 0
        infeasible = 0
        for _ in range(1000):
            w, t, A, b = random_instance(rng)
            opt = brute_force_diag_qp(w, t, A, b)
            v, clean = solve_diag_qp(w, t, A, b)
            if opt is None:
                infeasible += 1
                assert not clean
                continue
            assert clean
            assert np.max(np.abs(v - opt)) < 1e-6
            solved += 1
        assert solved > 900
        assert solved + infeasible == 1000

    def test_backends_match(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            w, t, A, b = random_instance(rng)
            vc, sc = _kernels.diag_qp(w, t, A, b)
            vp, sp = pyfallback.diag_qp(w, t, A, b)
            opt = brute_force_diag_qp(w, t, A, b)
            if opt is None:
                assert sc == 1 and sp == 1
                continue
            assert sc == 0 and sp == 0
            assert np.max(np.abs(vc - vp)) < 1e-9


class TestBasics:
    def test_unconstrained_returns_target(self):
        v, clean = solve_diag_qp(np.ones(3), np.array([1.0, -2.0, 0.5]),
                                 np.zeros((0, 3)), np.zeros(0))
        assert clean
        assert np.allclose(v, [1.0, -2.0, 0.5])

    def test_interior_target_untouched(self):
        A, b = box_rows(2, [0, 1], [-1, -1], [1, 1])
        v, clean = solve_diag_qp(np.ones(2), np.array([0.3, -0.4]), A, b)
        assert clean
        assert np.allclose(v, [0.3, -0.4], atol=1e-12)

    def test_single_halfspace_projection_formula(self):
        # uniform weights: Euclidean projection onto a half-space
        a = np.array([1.0, 1.0]) / np.sqrt(2)
        t = np.array([2.0, 2.0])
        v, clean = solve_diag_qp(np.ones(2), t, a[None, :], np.array([1.0]))
        expect = t - (a @ t - 1.0) * a
        assert clean
        assert np.allclose(v, expect, atol=1e-10)

    def test_clamp_example(self):
        A, b = box_rows(1, [0], [-10.0], [10.0])
        v, _ = solve_diag_qp(np.array([2.0]), np.array([15.0]), A, b)
        assert v[0] == pytest.approx(10.0)

    def test_weighted_projection_tilts_toward_heavy_component(self):
        a = np.array([1.0, 0.0])
        w = np.array([100.0, 1.0])
        t = np.array([1.0, 0.0])
        v, _ = solve_diag_qp(w, t, a[None, :], np.array([0.5]))
        assert v[0] == pytest.approx(0.5)

    def test_infeasible_rows_fall_back_to_least_violation(self):
        # x <= -1 and -x <= -1 cannot both hold
        A = np.array([[1.0], [-1.0]])
        b = np.array([-1.0, -1.0])
        v, clean = solve_diag_qp(np.ones(1), np.array([0.3]), A, b)
        assert not clean
        assert abs(v[0]) < 1.0  # least-violating point sits between the walls

    def test_relaxed_solve_feasible_case_reaches_target(self):
        A = np.array([[1.0, 0.0]])
        b = np.array([5.0])
        v = relaxed_least_violation(np.ones(2), np.array([0.0, 1.0]), A, b)
        assert np.allclose(v, [0.0, 1.0])

    def test_qp_rows_satisfied_to_tolerance(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            w, t, A, b = random_instance(rng)
            v, clean = solve_diag_qp(w, t, A, b)
            if clean and A.shape[0]:
                assert np.max(A @ v - b) <= 1e-8
