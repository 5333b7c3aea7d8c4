"""Long codimension-2 knots R^{m-2} -> R^m, closed loops, and isotopy paths.

Every knot agrees with the coordinate inclusion sigma(x) = (x, 0, 0) outside
a ball of radius ``support_radius``. All evaluations are vectorized over
leading axes: ``x`` has shape (..., m-2).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree


class KnotValidationError(ValueError):
    pass


def sigma(x, m: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (m,))
    out[..., : m - 2] = x
    return out


def sigma_jacobian(m: int, batch_shape: Tuple[int, ...] = ()) -> np.ndarray:
    jac = np.zeros(batch_shape + (m, m - 2))
    jac[..., : m - 2, : m - 2] = np.eye(m - 2)
    return jac


def cutoff(q):
    """Smooth bump chi as a function of q = u^2: exp(1 - 1/(1-q)) on [0,1), else 0.

    Returns (chi, dchi/dq).
    """
    q = np.asarray(q, dtype=float)
    inside = q < 1.0
    qi = np.where(inside, q, 0.0)
    w = 1.0 / (1.0 - qi)
    val = np.where(inside, np.exp(1.0 - w), 0.0)
    dval = np.where(inside, -val * w * w, 0.0)
    return val, dval


@dataclass(frozen=True)
class LongKnot:
    """Base class; the flat knot is sigma itself."""

    m: int

    family = "flat"

    def __post_init__(self):
        if self.m < 4:
            raise ValueError(f"ambient dimension must be >= 4, got {self.m}")

    @property
    def support_radius(self) -> float:
        return 0.0

    @property
    def center(self) -> np.ndarray:
        return np.zeros(self.m - 2)

    def params(self) -> Dict:
        return {}

    def describe(self) -> Dict:
        return {"family": self.family, "m": self.m, **self.params()}

    # displacement from sigma and its derivative; flat knot has none
    def _displacement(self, x):
        return np.zeros(x.shape[:-1] + (self.m,)), np.zeros(x.shape[:-1] + (self.m, self.m - 2))

    def __call__(self, x):
        return eval_knot(self, x)

    def with_amplitude(self, amplitude: float) -> "LongKnot":
        return self


def eval_knot(k: LongKnot, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    disp, _ = k._displacement(x)
    return sigma(x, k.m) + disp


def knot_jacobian(k: LongKnot, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _, djac = k._displacement(x)
    return sigma_jacobian(k.m, x.shape[:-1]) + djac


def knot_jacobian_fd(k: LongKnot, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian; used as an independent check."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(k.m - 2):
        e = np.zeros(k.m - 2)
        e[i] = h
        cols.append((eval_knot(k, x + e) - eval_knot(k, x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def knot_second_derivative(k: LongKnot, x, v, h: float = 1e-5) -> np.ndarray:
    """d/dx_l of (df(x) v) for every l; shape (..., m, m-2).

    Computed by central differences of the analytic Jacobian.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    cols = []
    for i in range(k.m - 2):
        e = np.zeros(k.m - 2)
        e[i] = h
        dj = (knot_jacobian(k, x + e) - knot_jacobian(k, x - e)) / (2 * h)
        cols.append(np.einsum("...ij,...j->...i", dj, v))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class FlatKnot(LongKnot):
    family = "flat"


def _rot_last2(vec, angle):
    """Rotate the last two coordinates of vec by angle; also return d/dangle."""
    c, s = np.cos(angle), np.sin(angle)
    a, b = vec[..., -2], vec[..., -1]
    rot = np.array(vec, dtype=float, copy=True) * np.ones(np.shape(angle) + (1,))
    rot[..., -2] = a * c - b * s
    rot[..., -1] = a * s + b * c
    drot = np.zeros_like(rot)
    drot[..., -2] = -a * s - b * c
    drot[..., -1] = a * c - b * s
    return rot, drot


def default_shear(m: int, scale: float = 0.3) -> Tuple[Tuple[float, ...], ...]:
    """A fixed, generic-looking m x (m-2) matrix.

    Bumps and spun knots without shear are symmetric enough that for m >= 5
    the order-2 and order-3 integrands vanish identically; a small shear
    breaks those symmetries.
    """
    return tuple(
        tuple(round(scale * math.sin(1.0 + 1.7 * i + 2.9 * j + 0.3 * i * j), 6) for j in range(m - 2))
        for i in range(m)
    )


def _shear_array(shear, m):
    if not shear:
        return np.zeros((m, m - 2))
    arr = np.asarray(shear, dtype=float)
    if arr.shape != (m, m - 2):
        raise ValueError(f"shear must be {m} x {m - 2}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class BumpKnot(LongKnot):
    """sigma plus a compactly supported bump.

    With z = (x - c)/r:
        f(x) = sigma(x) + amplitude * chi(|z|^2) * R(twist * z_0) (v + S z)
    where R rotates the last two ambient coordinates and S is the shear.
    With twist = 0 and S = 0 the image lies in a hyperplane and every
    theta-product vanishes.
    """

    center_: Tuple[float, ...] = ()
    radius: float = 1.0
    displacement: Tuple[float, ...] = ()
    twist: float = 0.0
    amplitude: float = 1.0
    shear: Tuple[Tuple[float, ...], ...] = ()

    family = "bump"

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if len(self.center_) != self.m - 2:
            raise ValueError(f"bump center must have {self.m - 2} coordinates")
        if len(self.displacement) != self.m:
            raise ValueError(f"bump displacement must have {self.m} coordinates")
        _shear_array(self.shear, self.m)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.center_, dtype=float)

    @property
    def support_radius(self) -> float:
        return float(np.linalg.norm(self.center)) + self.radius

    def params(self):
        return {
            "center": list(self.center_),
            "radius": self.radius,
            "displacement": list(self.displacement),
            "twist": self.twist,
            "amplitude": self.amplitude,
            "shear": [list(row) for row in self.shear],
        }

    def with_amplitude(self, amplitude: float) -> "BumpKnot":
        return dataclasses.replace(self, amplitude=amplitude)

    def _displacement(self, x):
        z = (x - self.center) / self.radius
        chi, dchi = cutoff(np.sum(z * z, axis=-1))
        shear = _shear_array(self.shear, self.m)
        w = np.asarray(self.displacement, dtype=float) + z @ shear.T
        rw, drw = _rot_last2(w, self.twist * z[..., 0])
        disp = self.amplitude * chi[..., None] * rw
        grad_chi = dchi[..., None] * 2.0 * z / self.radius
        jac = np.einsum("...i,...j->...ij", rw, grad_chi)
        jac[..., :, 0] += (chi * self.twist / self.radius)[..., None] * drw
        ang = self.twist * z[..., 0]
        c, sn = np.cos(ang)[..., None], np.sin(ang)[..., None]
        rs = np.broadcast_to(shear, z.shape[:-1] + shear.shape).copy()
        rs[..., -2, :] = c * shear[-2] - sn * shear[-1]
        rs[..., -1, :] = sn * shear[-2] + c * shear[-1]
        jac += chi[..., None, None] * rs / self.radius
        return disp, self.amplitude * jac


def _poly(coeffs, q):
    val = np.zeros_like(q)
    dval = np.zeros_like(q)
    for c in reversed(coeffs):
        dval = dval * q + val
        val = val * q + c
    return val, dval


@dataclass(frozen=True)
class SpunKnot(LongKnot):
    """A long curve in a 3-dimensional half-space, spun by SO(m-2).

    With q = |x|^2 and cutoff chi(q/R^2):
        f(x) = ((1 + a chi P_A(q)) x, a chi P_B(q), a chi P_C(q))
    The generator curve rho -> (rho (1 + a chi P_A), a chi P_B, a chi P_C)
    lives in the half-space {first coordinate >= 0}. An optional shear adds
    a chi S x / R, breaking the SO(m-2) symmetry. Amplitude 0 is the flat
    knot.
    """

    coeffs_a: Tuple[float, ...] = (0.0,)
    coeffs_b: Tuple[float, ...] = (0.8, -0.6)
    coeffs_c: Tuple[float, ...] = (0.0, 1.2)
    radius: float = 1.5
    amplitude: float = 1.0
    shear: Tuple[Tuple[float, ...], ...] = ()

    family = "spun"

    def __post_init__(self):
        super().__post_init__()
        if self.radius <= 0:
            raise ValueError("spun support radius must be positive")
        _shear_array(self.shear, self.m)

    @property
    def support_radius(self) -> float:
        return self.radius

    def params(self):
        return {
            "coeffs_a": list(self.coeffs_a),
            "coeffs_b": list(self.coeffs_b),
            "coeffs_c": list(self.coeffs_c),
            "radius": self.radius,
            "amplitude": self.amplitude,
            "shear": [list(row) for row in self.shear],
        }

    def with_amplitude(self, amplitude: float) -> "SpunKnot":
        return dataclasses.replace(self, amplitude=amplitude)

    def _displacement(self, x):
        m = self.m
        q = np.sum(x * x, axis=-1)
        s = 1.0 / self.radius ** 2
        chi, dchi = cutoff(q * s)
        dchi = dchi * s
        a = self.amplitude
        disp = np.zeros(x.shape[:-1] + (m,))
        jac = np.zeros(x.shape[:-1] + (m, m - 2))
        pa, dpa = _poly(list(self.coeffs_a), q)
        pb, dpb = _poly(list(self.coeffs_b), q)
        pc, dpc = _poly(list(self.coeffs_c), q)
        ga, dga = a * chi * pa, a * (dchi * pa + chi * dpa)
        gb, dgb = a * chi * pb, a * (dchi * pb + chi * dpb)
        gc, dgc = a * chi * pc, a * (dchi * pc + chi * dpc)
        disp[..., : m - 2] = ga[..., None] * x
        disp[..., m - 2] = gb
        disp[..., m - 1] = gc
        eye = np.eye(m - 2)
        jac[..., : m - 2, :] = ga[..., None, None] * eye + 2.0 * dga[..., None, None] * np.einsum(
            "...i,...j->...ij", x, x
        )
        jac[..., m - 2, :] = 2.0 * dgb[..., None] * x
        jac[..., m - 1, :] = 2.0 * dgc[..., None] * x
        if self.shear:
            shear = _shear_array(self.shear, m) / self.radius
            sx = x @ shear.T
            disp += a * chi[..., None] * sx
            jac += a * (chi[..., None, None] * shear + np.einsum("...i,...j->...ij", sx, 2.0 * dchi[..., None] * x))
        return disp, jac


FAMILIES = {"flat": FlatKnot, "bump": BumpKnot, "spun": SpunKnot}


def make_knot(family: str, m: int, **params) -> LongKnot:
    """Build a knot from a family name and keyword parameters.

    ``bump`` defaults: center at the origin, radius 1, displacement
    0.6 e_{m-1}, twist 2. Both non-flat families default to
    ``default_shear(m)``; pass ``shear=[]`` for none.
    """
    if family not in FAMILIES:
        raise KeyError(f"unknown knot family {family!r}; expected one of {sorted(FAMILIES)}")
    if family == "flat":
        return FlatKnot(m)
    if family == "bump":
        center = tuple(float(c) for c in params.pop("center", [0.0] * (m - 2)))
        disp = params.pop("displacement", None)
        if disp is None:
            disp = [0.0] * m
            disp[m - 2] = 0.6
        return BumpKnot(
            m,
            center_=center,
            displacement=tuple(float(d) for d in disp),
            radius=float(params.pop("radius", 1.0)),
            twist=float(params.pop("twist", 2.0)),
            amplitude=float(params.pop("amplitude", 1.0)),
            shear=_shear_param(params.pop("shear", "default"), m),
            **_no_extra(params),
        )
    kw = {k: tuple(float(c) for c in params.pop(k)) for k in ("coeffs_a", "coeffs_b", "coeffs_c") if k in params}
    for k in ("radius", "amplitude"):
        if k in params:
            kw[k] = float(params.pop(k))
    kw["shear"] = _shear_param(params.pop("shear", "default"), m)
    _no_extra(params)
    return SpunKnot(m, **kw)


def _shear_param(shear, m):
    if isinstance(shear, str):
        if shear != "default":
            raise KeyError(f"unknown shear preset {shear!r}")
        return default_shear(m)
    if shear is None or len(shear) == 0:
        return ()
    return tuple(tuple(float(v) for v in row) for row in shear)


def _no_extra(params):
    if params:
        raise KeyError(f"unknown knot parameters: {sorted(params)}")
    return {}


def knot_from_description(desc: Dict) -> LongKnot:
    desc = dict(desc)
    return make_knot(desc.pop("family"), int(desc.pop("m")), **desc)


def validate_knot(k: LongKnot, points_per_axis: int = 15, rank_tol: float = 1e-8) -> None:
    """Grid check of full rank and injectivity inside the support.

    Raises KnotValidationError with a diagnostic; does not prove embedding.
    """
    if k.support_radius == 0.0:
        return
    R = k.support_radius
    axes = [np.linspace(-R, R, points_per_axis)] * (k.m - 2)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k.m - 2)
    sv = np.linalg.svd(knot_jacobian(k, grid), compute_uv=False)
    if np.min(sv[:, -1]) < rank_tol:
        bad = grid[np.argmin(sv[:, -1])]
        raise KnotValidationError(f"Jacobian rank-deficient near x={bad}")
    spacing = 2 * R / (points_per_axis - 1)
    images = eval_knot(k, grid)
    close = cKDTree(images).query_pairs(spacing / 100.0)
    for i, j in close:
        if np.linalg.norm(grid[i] - grid[j]) > 1.5 * spacing:
            raise KnotValidationError(
                f"grid points {grid[i]} and {grid[j]} map within {spacing / 100:.3g} of each other"
            )


@dataclass(frozen=True)
class LoopCurve:
    """A closed regular curve S^1 -> R^m, parametrized on [0, 1].

    ``orientation = -1`` traverses the same image backwards. Integrals over
    the loop use the change of variables s -> -s, so a reversed loop is
    evaluated at the same points with negated velocity.
    """

    m: int
    kind: str = "meridian"
    center: Tuple[float, ...] = ()
    radius: float = 1.0
    plane: Tuple[Tuple[float, ...], Tuple[float, ...]] = ()
    vertices: Tuple[Tuple[float, ...], ...] = ()
    orientation: int = 1
    n_modes: int = 0

    def __post_init__(self):
        if self.kind not in ("meridian", "offset-circle", "custom-polyline-smoothed"):
            raise KeyError(f"unknown loop kind {self.kind!r}")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.kind != "custom-polyline-smoothed" and self.radius <= 0:
            raise ValueError("loop radius must be positive")

    @classmethod
    def meridian(cls, m: int, radius: float = 1.0, at=None, orientation: int = 1) -> "LoopCurve":
        """Circle in the plane of the last two axes, centered at sigma(at)."""
        at = np.zeros(m - 2) if at is None else np.asarray(at, dtype=float)
        e1 = np.zeros(m)
        e2 = np.zeros(m)
        e1[m - 2] = 1.0
        e2[m - 1] = 1.0
        return cls(m, "meridian", tuple(sigma(at, m)), float(radius), (tuple(e1), tuple(e2)), orientation=orientation)

    @classmethod
    def circle(cls, center, radius: float, u, v, orientation: int = 1) -> "LoopCurve":
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        u = u / np.linalg.norm(u)
        v = v - (v @ u) * u
        v = v / np.linalg.norm(v)
        return cls(len(u), "offset-circle", tuple(map(float, center)), float(radius), (tuple(u), tuple(v)), orientation=orientation)

    @classmethod
    def smoothed_polyline(cls, vertices, n_modes: Optional[int] = None, orientation: int = 1) -> "LoopCurve":
        verts = np.asarray(vertices, dtype=float)
        n_modes = n_modes if n_modes is not None else max(1, len(verts) // 3)
        return cls(verts.shape[1], "custom-polyline-smoothed", vertices=tuple(map(tuple, verts)), n_modes=n_modes, orientation=orientation)

    def reversed(self) -> "LoopCurve":
        return dataclasses.replace(self, orientation=-self.orientation)

    def describe(self) -> Dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if v not in ((), 0) or k in ("orientation",)}


def eval_loop(loop: LoopCurve, s):
    """Point gamma(s) and velocity gamma'(s) in the loop's own orientation."""
    s = np.asarray(s, dtype=float)
    point, vel = _loop_base(loop, loop.orientation * s)
    return point, loop.orientation * vel


def _loop_base(loop: LoopCurve, s):
    if loop.kind == "custom-polyline-smoothed":
        return _fourier_loop(loop, s)
    ang = 2.0 * np.pi * s
    u, v = (np.asarray(p, dtype=float) for p in loop.plane)
    c, sn = np.cos(ang)[..., None], np.sin(ang)[..., None]
    point = np.asarray(loop.center) + loop.radius * (c * u + sn * v)
    vel = 2.0 * np.pi * loop.radius * (-sn * u + c * v)
    return point, vel


def _fourier_loop(loop: LoopCurve, s):
    verts = np.asarray(loop.vertices, dtype=float)
    n = len(verts)
    spec = np.fft.rfft(verts, axis=0) / n
    point = np.broadcast_to(spec[0].real, s.shape + (verts.shape[1],)).copy()
    vel = np.zeros_like(point)
    for k in range(1, min(loop.n_modes, (n - 1) // 2) + 1):
        ph = 2.0 * np.pi * k * s[..., None]
        a, b = 2 * spec[k].real, -2 * spec[k].imag
        point = point + a * np.cos(ph) + b * np.sin(ph)
        vel = vel + 2.0 * np.pi * k * (-a * np.sin(ph) + b * np.cos(ph))
    return point, vel


@dataclass(frozen=True)
class IsotopyPath:
    """f_t = sigma + t * (base - sigma), i.e. the base knot's amplitude scaled by t."""

    base: LongKnot
    parameter: str = "amplitude"

    def __post_init__(self):
        if self.parameter != "amplitude":
            raise KeyError("only the amplitude parameter can be scaled along a path")
        if isinstance(self.base, FlatKnot):
            raise ValueError("the flat knot has no amplitude to scale")

    def at(self, t: float) -> LongKnot:
        return self.base.with_amplitude(self.base.amplitude * t)

    def velocity(self, x):
        """d f_t / dt, independent of t."""
        return eval_knot(self.base, x) - sigma(x, self.base.m)

    def velocity_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return knot_jacobian(self.base, x) - sigma_jacobian(self.base.m, x.shape[:-1])

    def reversed(self) -> "ReversedPath":
        return ReversedPath(self)


@dataclass(frozen=True)
class ReversedPath:
    """The same path traversed from t = 1 to t = 0."""

    path: IsotopyPath

    @property
    def base(self):
        return self.path.base

    def at(self, t: float) -> LongKnot:
        return self.path.at(1.0 - t)

    def velocity(self, x):
        return -self.path.velocity(x)

    def velocity_jacobian(self, x):
        return -self.path.velocity_jacobian(x)
