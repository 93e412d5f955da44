"""Inequality constraint library.

Every constraint contributes a fixed number of rows to a stacked vector
s(x, u, k) with the convention s <= 0 means satisfied. Rows outside their
activation window evaluate to a large negative constant instead of being
dropped, which keeps row indexing (and multiplier bookkeeping) stable
across timesteps. Nonconvex distance rows can be linearized into
half-spaces around reference positions for the projection solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INACTIVE = -1e9
_DIST_FLOOR = 1e-9


class DegenerateNormalError(ValueError):
    """Reference points coincide; no linearization direction exists."""


@dataclass
class HalfSpace:
    """A row sum_s sign_s * normal . v[slice_s] <= offset at timestep k."""

    normal: np.ndarray
    offset: float
    slices: tuple            # ((slice, sign), ...) into the stacked variable
    k: int = 0

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"half-space normal must be unit length, got {n}")

    def row(self, dim: int) -> np.ndarray:
        a = np.zeros(dim)
        for sl, sign in self.slices:
            a[sl] += sign * self.normal
        return a

    def residual(self, v: np.ndarray) -> float:
        return float(sum(sign * self.normal @ v[sl] for sl, sign in self.slices)
                     - self.offset)


class ConstraintBlock:
    """Shared row-block interface: values and jacobians at one timestep,
    plus stacked evaluation along a whole trajectory."""

    nrows: int
    window: tuple

    def active_at(self, k: int) -> bool:
        return self.window[0] <= k <= self.window[1]

    def value(self, x, u, k) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x, u, k):
        """Returns (d s / d x, d s / d u) with zero rows when inactive."""
        raise NotImplementedError

    def values_along(self, xs, us) -> np.ndarray:
        """(K+1, nrows) stack; control rows report inactive at k = K."""
        K = us.shape[0]
        out = np.full((K + 1, self.nrows), INACTIVE)
        for k in range(K + 1):
            out[k] = self.value(xs[k], us[k] if k < K else None, k)
        return out

    def jacobians_along(self, xs, us):
        K, p = us.shape[0], xs.shape[1]
        q = us.shape[1]
        jx = np.zeros((K + 1, self.nrows, p))
        ju = np.zeros((K + 1, self.nrows, q))
        for k in range(K + 1):
            a, b = self.jacobian(xs[k], us[k] if k < K else None, k)
            jx[k] = a
            if k < K:
                ju[k] = b
        return jx, ju


class BoxConstraint(ConstraintBlock):
    """Componentwise bounds on (an optional linear map of) selected
    state or control components. One row per finite bound."""

    def __init__(self, lower, upper, target="control", indices=None,
                 transform=None, window=(0, np.inf)):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape:
            raise ValueError("lower/upper shapes differ")
        if np.any(lower > upper):
            raise ValueError("box has lower > upper")
        if target not in ("state", "control"):
            raise ValueError("target must be 'state' or 'control'")
        self.lower = lower
        self.upper = upper
        self.target = target
        self.indices = None if indices is None else np.asarray(indices, dtype=int)
        self.transform = None
        if transform is not None:
            self.transform = np.asarray(transform, dtype=float)
            c = self.transform
            if c.shape[0] != c.shape[1] or abs(np.linalg.det(c)) < 1e-12:
                raise ValueError("transform must be square and invertible")
        self.window = (window[0], window[1])
        rows = []
        for i in range(lower.size):
            if np.isfinite(lower[i]):
                rows.append((i, -1.0, lower[i]))   # lower - y_i <= 0
            if np.isfinite(upper[i]):
                rows.append((i, +1.0, -upper[i]))  # y_i - upper <= 0
        self._rows = rows
        self.nrows = len(rows)

    def _select(self, vec):
        y = vec if self.indices is None else vec[self.indices]
        return y if self.transform is None else self.transform @ y

    def _sel_matrix(self, dim):
        m = np.eye(dim) if self.indices is None else np.eye(dim)[self.indices]
        return m if self.transform is None else self.transform @ m

    def value(self, x, u, k):
        if not self.active_at(k) or (self.target == "control" and u is None):
            return np.full(self.nrows, INACTIVE)
        y = self._select(x if self.target == "state" else u)
        return np.array([sgn * y[i] + off for i, sgn, off in self._rows])

    def jacobian(self, x, u, k):
        p, q = x.shape[0], 0 if u is None else u.shape[0]
        jx = np.zeros((self.nrows, p))
        ju = np.zeros((self.nrows, q))
        if not self.active_at(k) or (self.target == "control" and u is None):
            return jx, ju
        sel = self._sel_matrix(p if self.target == "state" else q)
        for r, (i, sgn, _) in enumerate(self._rows):
            if self.target == "state":
                jx[r] = sgn * sel[i]
            else:
                ju[r] = sgn * sel[i]
        return jx, ju

    def values_along(self, xs, us):
        K = us.shape[0]
        out = np.full((K + 1, self.nrows), INACTIVE)
        ks = np.arange(K + 1)
        act = (ks >= self.window[0]) & (ks <= self.window[1])
        if self.target == "control":
            act = act & (ks < K)
            src = us
        else:
            src = xs
        y = src if self.indices is None else src[:, self.indices]
        if self.transform is not None:
            y = y @ self.transform.T
        for r, (i, sgn, off) in enumerate(self._rows):
            lim = y.shape[0]
            out[:lim, r] = np.where(act[:lim], sgn * y[:, i] + off, INACTIVE)
        return out

    def jacobians_along(self, xs, us):
        K, p, q = us.shape[0], xs.shape[1], us.shape[1]
        jx = np.zeros((K + 1, self.nrows, p))
        ju = np.zeros((K + 1, self.nrows, q))
        ks = np.arange(K + 1)
        act = (ks >= self.window[0]) & (ks <= self.window[1])
        sel = self._sel_matrix(p if self.target == "state" else q)
        for r, (i, sgn, _) in enumerate(self._rows):
            if self.target == "state":
                jx[act, r] = sgn * sel[i]
            else:
                m = act[:K] & (ks[:K] < K)
                ju[:K][m, r] = sgn * sel[i]
        return jx, ju

    def linear_rows(self, src_dim: int, dim: int, offset: int = 0):
        """Materialize the rows as A v <= b over a `dim`-sized stacked
        variable whose single-agent block (of size src_dim) starts at
        `offset`."""
        sel = self._sel_matrix(src_dim)
        A = np.zeros((self.nrows, dim))
        b = np.zeros(self.nrows)
        for r, (i, sgn, off) in enumerate(self._rows):
            A[r, offset:offset + src_dim] = sgn * sel[i]
            b[r] = -off
        return A, b


class ObstacleConstraint(ConstraintBlock):
    """Keep-out disc/sphere: r_o + d_o - |pos - center| <= 0."""

    nrows = 1

    def __init__(self, center, radius, clearance=0.0, pos_slice=None,
                 window=(0, np.inf)):
        if radius <= 0:
            raise ValueError("obstacle radius must be positive")
        if clearance < 0:
            raise ValueError("obstacle clearance must be nonnegative")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.clearance = float(clearance)
        self.pos_slice = pos_slice or slice(0, self.center.size)
        self.window = (window[0], window[1])

    @property
    def keepout(self) -> float:
        return self.radius + self.clearance

    def value(self, x, u, k):
        if not self.active_at(k):
            return np.array([INACTIVE])
        d = np.linalg.norm(x[self.pos_slice] - self.center)
        return np.array([self.keepout - d])

    def jacobian(self, x, u, k):
        p, q = x.shape[0], 0 if u is None else u.shape[0]
        jx = np.zeros((1, p))
        if self.active_at(k):
            diff = x[self.pos_slice] - self.center
            d = max(np.linalg.norm(diff), _DIST_FLOOR)
            jx[0, self.pos_slice] = -diff / d
        return jx, np.zeros((1, q))

    def values_along(self, xs, us):
        K = us.shape[0]
        ks = np.arange(K + 1)
        act = (ks >= self.window[0]) & (ks <= self.window[1])
        d = np.linalg.norm(xs[:, self.pos_slice] - self.center, axis=1)
        return np.where(act, self.keepout - d, INACTIVE)[:, None]

    def jacobians_along(self, xs, us):
        K, p, q = us.shape[0], xs.shape[1], us.shape[1]
        jx = np.zeros((K + 1, 1, p))
        ks = np.arange(K + 1)
        act = (ks >= self.window[0]) & (ks <= self.window[1])
        diff = xs[:, self.pos_slice] - self.center
        d = np.maximum(np.linalg.norm(diff, axis=1), _DIST_FLOOR)
        jx[:, 0, self.pos_slice] = np.where(act[:, None], -diff / d[:, None], 0.0)
        return jx, np.zeros((K + 1, 1, q))


class PairDistanceConstraint(ConstraintBlock):
    """Inter-agent distance row between two position slices of a stacked
    state: collision keeps |p_i - p_j| >= threshold, connectivity keeps
    it <= threshold."""

    nrows = 1

    def __init__(self, kind, threshold, slice_i, slice_j, window=(0, np.inf)):
        if kind not in ("collision", "connectivity"):
            raise ValueError("kind must be 'collision' or 'connectivity'")
        if threshold <= 0:
            raise ValueError("distance threshold must be positive")
        self.kind = kind
        self.threshold = float(threshold)
        self.slice_i = slice_i
        self.slice_j = slice_j
        self.window = (window[0], window[1])

    def _dist(self, x):
        return x[self.slice_i] - x[self.slice_j]

    def value(self, x, u, k):
        if not self.active_at(k):
            return np.array([INACTIVE])
        d = np.linalg.norm(self._dist(x))
        if self.kind == "collision":
            return np.array([self.threshold - d])
        return np.array([d - self.threshold])

    def jacobian(self, x, u, k):
        p, q = x.shape[0], 0 if u is None else u.shape[0]
        jx = np.zeros((1, p))
        if self.active_at(k):
            diff = self._dist(x)
            d = max(np.linalg.norm(diff), _DIST_FLOOR)
            g = diff / d if self.kind == "connectivity" else -diff / d
            jx[0, self.slice_i] = g
            jx[0, self.slice_j] = -g
        return jx, np.zeros((1, q))

    def values_along(self, xs, us):
        K = us.shape[0]
        ks = np.arange(K + 1)
        act = (ks >= self.window[0]) & (ks <= self.window[1])
        d = np.linalg.norm(xs[:, self.slice_i] - xs[:, self.slice_j], axis=1)
        v = self.threshold - d if self.kind == "collision" else d - self.threshold
        return np.where(act, v, INACTIVE)[:, None]

    def jacobians_along(self, xs, us):
        K, p, q = us.shape[0], xs.shape[1], us.shape[1]
        jx = np.zeros((K + 1, 1, p))
        ks = np.arange(K + 1)
        act = (ks >= self.window[0]) & (ks <= self.window[1])
        diff = xs[:, self.slice_i] - xs[:, self.slice_j]
        d = np.maximum(np.linalg.norm(diff, axis=1), _DIST_FLOOR)
        g = diff / d[:, None]
        if self.kind == "collision":
            g = -g
        g = np.where(act[:, None], g, 0.0)
        jx[:, 0, self.slice_i] = g
        jx[:, 0, self.slice_j] = -g
        return jx, np.zeros((K + 1, 1, q))


def eval_stack(blocks, x, u, k) -> np.ndarray:
    """Stacked constraint values at one timestep; <= 0 means satisfied."""
    if not blocks:
        return np.zeros(0)
    return np.concatenate([blk.value(x, u, k) for blk in blocks])


def stack_rows(blocks) -> int:
    return sum(blk.nrows for blk in blocks)


def _unit(diff):
    n = np.linalg.norm(diff)
    if n < _DIST_FLOOR:
        raise DegenerateNormalError("reference points coincide")
    return diff / n


def tangent_directions(normal: np.ndarray, count_2d: int = 8) -> np.ndarray:
    """Unit directions fanned around `normal`, always including it.

    2D: count_2d equally spaced rotations. 3D: the 26 sign-grid directions
    rotated so one of them aligns with the normal exactly.
    """
    normal = np.asarray(normal, dtype=float)
    if normal.size == 2:
        base = np.arctan2(normal[1], normal[0])
        ang = base + 2 * np.pi * np.arange(count_2d) / count_2d
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    grid = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1)
                     for k in (-1, 0, 1) if (i, j, k) != (0, 0, 0)], dtype=float)
    grid /= np.linalg.norm(grid, axis=1, keepdims=True)
    e1 = np.array([1.0, 0.0, 0.0])
    v = np.cross(e1, normal)
    c = float(e1 @ normal)
    if np.linalg.norm(v) < 1e-12:
        rot = np.eye(3) if c > 0 else np.diag([-1.0, -1.0, 1.0])
    else:
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        rot = np.eye(3) + vx + vx @ vx / (1.0 + c)
    dirs = grid @ rot.T
    dirs[0] = normal  # grid[0] is (-1,-1,-1); replace to include the normal exactly
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def linearize_interagent(kind: str, threshold: float, ref_i: np.ndarray,
                         ref_j: np.ndarray, k: int, slice_i, slice_j,
                         tangents_2d: int = 8) -> list:
    """Half-space relaxation/restriction of an inter-agent distance row
    around reference positions.

    Collision gives the single supporting half-space n.(p_i - p_j) >= t
    (a subset of the true feasible set). Connectivity is convex; it is
    outer-approximated by tangent half-spaces fanned around the reference
    direction, which makes the tangent at the reference exact.
    """
    n = _unit(np.asarray(ref_i, dtype=float) - np.asarray(ref_j, dtype=float))
    if kind == "collision":
        # n.(p_i - p_j) >= t  ->  -n.p_i + n.p_j <= -t
        return [HalfSpace(n, -threshold, ((slice_i, -1.0), (slice_j, 1.0)), k)]
    if kind == "connectivity":
        out = []
        for v in tangent_directions(n, tangents_2d):
            out.append(HalfSpace(v, threshold, ((slice_i, 1.0), (slice_j, -1.0)), k))
        return out
    raise ValueError(f"unknown inter-agent constraint kind {kind!r}")


def linearize_obstacle(obs: ObstacleConstraint, ref: np.ndarray, k: int,
                       pos_slice=None) -> list:
    """Supporting half-space of the keep-out constraint at a reference
    position: n.(p - center) >= r + d with n the reference direction."""
    n = _unit(np.asarray(ref, dtype=float) - obs.center)
    off = -(obs.keepout + float(n @ obs.center))
    return [HalfSpace(n, off, (((pos_slice or obs.pos_slice), -1.0),), k)]
