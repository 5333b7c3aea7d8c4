"""The propagators eta (on pairs of knot parameters) and theta (on pairs of points in R^m).

Both are pullbacks of normalized round sphere forms along Gauss maps
(a, b) -> (b - a)/|b - a|. Two evaluations are provided:

* ``eta_at`` / ``theta_at`` return :class:`AltForm` objects built by the
  generic minor-expansion pullback of the sphere form;
* ``eta_rows`` / ``theta_rows`` return the same form as a wedge of
  covectors. An (n-1)-form on R^n is decomposable: the sphere form at u is
  h_2 ^ ... ^ h_n / Vol(S^{n-1}) for an oriented orthonormal basis h of
  the complement of u. Stacking the rows of every edge and taking one
  determinant gives the top-degree coefficient of the whole product.

The tangent frame of C_{s,t} is ordered x_1, ..., x_s, y_{s+1}, ..., y_{s+t}
(coordinates of each point contiguous). Tadpoles (i == j) are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .configspace import Configuration
from .exterior import AltForm, pullback, sphere_form, sphere_volume
from .geometry import LongKnot


class CoincidentPointsError(ValueError):
    pass


@dataclass(frozen=True)
class TangentFrame:
    s: int
    t: int
    m: int

    @property
    def dim(self) -> int:
        return self.s * (self.m - 2) + self.t * self.m

    def block(self, label: int) -> slice:
        k = self.m - 2
        if 1 <= label <= self.s:
            return slice((label - 1) * k, label * k)
        if self.s < label <= self.s + self.t:
            start = self.s * k + (label - self.s - 1) * self.m
            return slice(start, start + self.m)
        raise IndexError(f"point label {label} outside 1..{self.s + self.t}")


def complement_frame(u: np.ndarray) -> np.ndarray:
    """Orthonormal rows h_2..h_n spanning u-perp with det(u, h_2, ..., h_n) = +1.

    Built from the Householder reflection taking e_1 to -sign(u_1) u.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    s = np.where(u[..., 0] >= 0, 1.0, -1.0)
    v = s[..., None] * u
    v[..., 0] += 1.0
    coef = 1.0 / (1.0 + np.abs(u[..., 0]))
    # columns 1..n-1 of H = I - v v^T / (1 + |u_1|)
    h = np.broadcast_to(np.eye(n)[1:], u.shape[:-1] + (n - 1, n)).copy()
    h -= (coef[..., None] * v[..., 1:])[..., :, None] * v[..., None, :]
    h[..., 0, :] *= s[..., None]
    return h


def _gauss(diff):
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise CoincidentPointsError("coincident points in a Gauss map")
    return diff / r[..., None], r


def _check_pair(i, j):
    if i == j:
        raise ValueError("tadpole edge: a propagator needs two distinct points")


def point_and_jacobian(cfg: Configuration, knot: LongKnot, label: int):
    """Point in R^m for ``label`` and its derivative w.r.t. that point's coordinates."""
    if label <= cfg.s:
        fx, dfx = cfg.images(knot)
        return fx[:, label - 1], dfx[:, label - 1]
    y = cfg.ys[:, label - cfg.s - 1]
    return y, np.broadcast_to(np.eye(cfg.m), (cfg.size, cfg.m, cfg.m))


def _onknot_labels(cfg, i, j):
    _check_pair(i, j)
    if not (1 <= i <= cfg.s and 1 <= j <= cfg.s):
        raise IndexError("eta needs two on-knot labels")


def eta_at(cfg: Configuration, i: int, j: int) -> AltForm:
    """eta_ij as an (m-3)-form on the configuration tangent space (batched coefficients)."""
    _onknot_labels(cfg, i, j)
    k = cfg.m - 2
    u, r = _gauss(cfg.xs[:, j - 1] - cfg.xs[:, i - 1])
    proj = (np.eye(k) - u[..., :, None] * u[..., None, :]) / r[:, None, None]
    jac = np.zeros((cfg.size, k, cfg.dim))
    jac[:, :, cfg.block(j)] = proj
    jac[:, :, cfg.block(i)] = -proj
    return pullback(jac, sphere_form(u))


def theta_at(cfg: Configuration, knot: LongKnot, i: int, j: int) -> AltForm:
    """theta_ij as an (m-1)-form: the Gauss map of the pair picked out by varpi_ij."""
    _check_pair(i, j)
    m = cfg.m
    a, ja = point_and_jacobian(cfg, knot, i)
    b, jb = point_and_jacobian(cfg, knot, j)
    u, r = _gauss(b - a)
    proj = (np.eye(m) - u[..., :, None] * u[..., None, :]) / r[:, None, None]
    jac = np.zeros((cfg.size, m, cfg.dim))
    jac[:, :, cfg.block(j)] = proj @ jb
    jac[:, :, cfg.block(i)] = -proj @ ja
    return pullback(jac, sphere_form(u))


def eta_rows(cfg: Configuration, i: int, j: int) -> np.ndarray:
    """Covector rows (N, m-3, d) whose wedge, times 1/Vol(S^{m-3}), is eta_ij."""
    _onknot_labels(cfg, i, j)
    u, r = _gauss(cfg.xs[:, j - 1] - cfg.xs[:, i - 1])
    h = complement_frame(u) / r[:, None, None]
    rows = np.zeros((cfg.size, cfg.m - 3, cfg.dim))
    rows[:, :, cfg.block(j)] = h
    rows[:, :, cfg.block(i)] = -h
    return rows


def theta_rows(cfg: Configuration, knot: LongKnot, i: int, j: int) -> np.ndarray:
    """Covector rows (N, m-1, d) whose wedge, times 1/Vol(S^{m-1}), is theta_ij."""
    _check_pair(i, j)
    a, ja = point_and_jacobian(cfg, knot, i)
    b, jb = point_and_jacobian(cfg, knot, j)
    u, r = _gauss(b - a)
    h = complement_frame(u) / r[:, None, None]
    rows = np.zeros((cfg.size, cfg.m - 1, cfg.dim))
    rows[:, :, cfg.block(j)] = h @ jb
    rows[:, :, cfg.block(i)] -= h @ ja
    return rows


def eta_norm(m: int) -> float:
    return 1.0 / sphere_volume(m - 2)


def theta_norm(m: int) -> float:
    return 1.0 / sphere_volume(m)


def sphere_cycle(n: int, n_quad: int = 24):
    """Quadrature on S^{n-1} in hyperspherical angles.

    Returns (points (Q, n), tangents (Q, n-1, n), weights (Q,)), with the
    tangents ordered so that det(point, tangents) > 0 (boundary orientation
    of the unit ball). Polar angles use Gauss-Legendre, the azimuth the
    trapezoid rule; tangents come from complex-step differentiation.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    nodes, w = np.polynomial.legendre.leggauss(n_quad)
    polar = (0.5 * np.pi * (nodes + 1.0), 0.5 * np.pi * w)
    az = (2.0 * np.pi * np.arange(2 * n_quad) / (2 * n_quad), np.full(2 * n_quad, np.pi / n_quad))
    grids = [polar] * (n - 2) + [az]
    angles = np.stack(np.meshgrid(*(g[0] for g in grids), indexing="ij"), axis=-1).reshape(-1, n - 1)
    weights = np.prod(np.stack(np.meshgrid(*(g[1] for g in grids), indexing="ij"), axis=-1), axis=-1).ravel()

    def embed(a):
        out = []
        sin_prod = 1.0
        for k in range(n - 1):
            out.append(sin_prod * np.cos(a[:, k]))
            sin_prod = sin_prod * np.sin(a[:, k])
        out.append(sin_prod)
        return np.stack(out, axis=-1)

    points = embed(angles)
    h = 1e-30
    tangents = np.stack([embed(angles + 1j * h * np.eye(n - 1)[k]).imag / h for k in range(n - 1)], axis=1)
    orient = np.sign(np.linalg.det(np.concatenate([points[:, None], tangents], axis=1)))
    orient[orient == 0] = 1.0
    if np.median(orient) < 0:
        tangents[:, 0] = -tangents[:, 0]
    return points, tangents, weights


def eta_degree(m: int, center=None, radius: float = 0.1, n_quad: int = 24) -> float:
    """Integral of eta_12 over {x_1 fixed, x_2 on a small (m-3)-sphere around x_1}; equals 1."""
    k = m - 2
    c = np.zeros(k) if center is None else np.asarray(center, dtype=float)
    pts, tans, w = sphere_cycle(k, n_quad)
    xs = np.stack([np.broadcast_to(c, pts.shape), c + radius * pts], axis=1)
    cfg = Configuration(xs, np.zeros((len(w), 0, m)), m)
    vecs = np.zeros((len(w), k - 1, cfg.dim))
    vecs[:, :, cfg.block(2)] = radius * tans
    return float(np.sum(w * eta_at(cfg, 1, 2).evaluate(vecs)))


def theta_degree(m: int, knot: LongKnot, center=None, radius: float = 0.1, n_quad: int = 12) -> float:
    """Integral of theta over {y_1 fixed, y_2 on a small (m-1)-sphere around y_1}; equals 1."""
    c = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    pts, tans, w = sphere_cycle(m, n_quad)
    ys = np.stack([np.broadcast_to(c, pts.shape), c + radius * pts], axis=1)
    cfg = Configuration(np.zeros((len(w), 0, m - 2)), ys, m)
    vecs = np.zeros((len(w), m - 1, cfg.dim))
    vecs[:, :, cfg.block(2)] = radius * tans
    return float(np.sum(w * theta_at(cfg, knot, 1, 2).evaluate(vecs)))
