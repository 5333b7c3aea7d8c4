"""Invariants assembled from compiled diagrams and the Monte Carlo driver.

Every Θ term is integrated on its own stream of the same seed with the same
number of samples; the total is the plain sum of the weighted terms with
standard errors added in quadrature.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .configspace import Configuration, ProposalSpec, RadialLaw
from .diagrams import DiagramDegreeError, compile_integrand, enumerate_connected
from .exterior import sphere_volume
from .geometry import (
    FlatKnot,
    LongKnot,
    LoopCurve,
    eval_knot,
    eval_loop,
    knot_jacobian,
    knot_second_derivative,
)
from .mc import ConfigurationDomain, Estimate, combine, integrate
from .propagators import eta_norm, eta_rows, theta_norm, theta_rows

PROXIMITY_TOL = 1e-6


class ProximityError(ValueError):
    pass


@dataclass(frozen=True)
class TermResult:
    label: str
    s: int
    t: int
    coefficient: float
    estimate: Estimate

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "space": [self.s, self.t],
            "coefficient": self.coefficient,
            **{k: v for k, v in self.estimate.to_dict().items() if k != "strategy"},
        }


@dataclass(frozen=True)
class InvariantResult:
    name: str
    terms: Tuple[TermResult, ...]
    total: Estimate
    m: int
    knot: Dict
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "m": self.m,
            "knot": self.knot,
            "value": self.total.value,
            "stderr": self.total.stderr,
            "n_samples": self.total.n_samples,
            "seed": self.total.seed,
            "n_nonfinite": self.total.n_nonfinite,
            "terms": [t.to_dict() for t in self.terms],
            "metadata": self.metadata,
        }


# --- polynomial integrands ------------------------------------------------------

Monomial = Tuple[float, Tuple[Tuple[int, int], ...], Tuple[Tuple[int, int], ...]]


class PolynomialIntegrand:
    """Sum of coef * theta-product * eta-product over monomials on one C_{s,t}.

    Each propagator's covector rows are computed once per batch and shared
    between monomials. Monomials repeating an unordered eta or theta pair
    vanish identically and are dropped.
    """

    def __init__(self, s: int, t: int, m: int, knot: LongKnot, monomials: Sequence[Monomial]):
        self.s, self.t, self.m, self.knot = s, t, m, knot
        kept = []
        for coef, th, et in monomials:
            if len({frozenset(e) for e in th}) < len(th) or len({frozenset(e) for e in et}) < len(et):
                continue
            if len(th) * (m - 1) + len(et) * (m - 3) != s * (m - 2) + t * m:
                raise DiagramDegreeError(f"monomial {th} {et} has the wrong degree on C_{{{s},{t}}}")
            kept.append((float(coef), tuple(th), tuple(et)))
        self.monomials = _merge_monomials(kept)
        n_theta = {len(th) for _, th, _ in self.monomials}
        n_eta = {len(et) for _, _, et in self.monomials}
        if len(n_theta) > 1 or len(n_eta) > 1:
            raise DiagramDegreeError("monomials mix edge counts")
        self.norm = theta_norm(m) ** n_theta.pop() * eta_norm(m) ** n_eta.pop() if self.monomials else 0.0

    def __call__(self, cfg: Configuration) -> np.ndarray:
        cache: Dict = {}

        def rows(kind, e):
            key = (kind, e)
            if key not in cache:
                cache[key] = theta_rows(cfg, self.knot, *e) if kind == "theta" else eta_rows(cfg, *e)
            return cache[key]

        total = np.zeros(cfg.size)
        for coef, th, et in self.monomials:
            block = [rows("theta", e) for e in th] + [rows("eta", e) for e in et]
            total += coef * np.linalg.det(np.concatenate(block, axis=1))
        return total * self.norm


def _merge_monomials(monomials):
    merged: Dict = {}
    for coef, th, et in monomials:
        key = (th, et)
        merged[key] = merged.get(key, 0.0) + coef
    return [(c, th, et) for (th, et), c in merged.items() if c != 0.0]


def expand(theta: Sequence[Tuple[int, int]], eta_factors: Sequence[Sequence[Tuple[float, Tuple[int, int]]]], coef: float):
    """Multilinear expansion of coef * theta * prod(sum of signed eta edges)."""
    out = []
    for choice in itertools.product(*eta_factors):
        c = coef
        edges = []
        for sgn, e in choice:
            c *= sgn
            edges.append(e)
        out.append((c, tuple(theta), tuple(edges)))
    return out


def cyclic_sum(*labels) -> List[Tuple[float, Tuple[int, int]]]:
    """eta_{a1 a2} + eta_{a2 a3} + ... + eta_{ak a1}."""
    return [(1.0, (a, b)) for a, b in zip(labels, labels[1:] + labels[:1])]


def alternating_sum(i, j, k, l) -> List[Tuple[float, Tuple[int, int]]]:
    """eta_ij - eta_jk + eta_kl - eta_li."""
    return [(1.0, (i, j)), (-1.0, (j, k)), (1.0, (k, l)), (-1.0, (l, i))]


def theta2_compact_terms(m: int, knot: LongKnot):
    return [
        ("compact1", 4, 0, PolynomialIntegrand(4, 0, m, knot, expand(((1, 3), (2, 4)), [cyclic_sum(1, 2, 3, 4)] * 2, 1 / 8))),
        ("compact2", 3, 1, PolynomialIntegrand(3, 1, m, knot, expand(((1, 4), (2, 4), (3, 4)), [cyclic_sum(1, 2, 3)], -1 / 3))),
    ]


def theta3_even_terms(m: int, knot: LongKnot):
    a = alternating_sum
    return [
        ("even1", 6, 0, PolynomialIntegrand(
            6, 0, m, knot, expand(((1, 4), (2, 5), (3, 6)), [a(1, 2, 4, 5), a(1, 3, 4, 6), a(2, 3, 5, 6)], -1 / 24))),
        ("even2", 5, 1, PolynomialIntegrand(
            5, 1, m, knot, expand(((1, 6), (3, 6), (5, 6), (2, 4)), [a(1, 2, 3, 4), a(2, 3, 4, 5)], -1 / 6))),
        ("even3", 4, 2, PolynomialIntegrand(
            4, 2, m, knot, expand(((1, 6), (3, 6), (5, 6), (2, 5), (4, 5)), [a(1, 2, 3, 4)], -1 / 4))),
        ("even4", 3, 3, PolynomialIntegrand(
            3, 3, m, knot, [(1 / 3, ((1, 4), (2, 5), (3, 6), (4, 5), (4, 6), (5, 6)), ())])),
    ]


def printed_terms(order: int, m: int, knot: LongKnot):
    out = []
    for d in enumerate_connected(order):
        out.append((d.name, d.s, d.t, compile_integrand(d, m, knot)))
    return out


def term_integrands(name: str, m: int, knot: LongKnot):
    """(label, s, t, integrand) for each term of a named Θ invariant."""
    if name == "theta1":
        return printed_terms(1, m, knot)
    if name == "theta2":
        return printed_terms(2, m, knot)
    if name == "theta2_compact":
        return theta2_compact_terms(m, knot)
    if name == "theta3":
        return printed_terms(3, m, knot)
    if name == "theta3_even":
        return theta3_even_terms(m, knot)
    raise KeyError(f"unknown invariant {name!r}")


def _coefficient(integrand) -> float:
    return float(getattr(integrand, "weight", 1.0))


def _assemble(name, knot, n, seed, spec, antithetic, workers, chunk, metadata=None) -> InvariantResult:
    m = knot.m
    terms = []
    for stream, (label, s, t, g) in enumerate(term_integrands(name, m, knot)):
        est = integrate(g, ConfigurationDomain(s, t, m, knot, spec), spec, n, seed,
                        antithetic=antithetic, workers=workers, chunk=chunk, stream=stream)
        terms.append(TermResult(label, s, t, _coefficient(g), est))
    total = combine([tr.estimate for tr in terms])
    meta = {"budget": "uniform per term", "n_per_term": n, "proposal": spec.describe(), "antithetic": antithetic}
    meta.update(metadata or {})
    return InvariantResult(name, tuple(terms), total, m, knot.describe(), meta)


_MC_DEFAULTS = dict(spec=ProposalSpec(), antithetic=False, workers=1, chunk=8192)


def theta1(knot: LongKnot, n: int, seed: int, **kw) -> InvariantResult:
    opts = {**_MC_DEFAULTS, **kw}
    return _assemble("theta1", knot, n, seed, metadata={"parity_vanishing": knot.m % 2 == 1}, **opts)


def theta2(knot: LongKnot, n: int, seed: int, form: str = "printed", **kw) -> InvariantResult:
    if form not in ("printed", "compact"):
        raise ValueError("form must be 'printed' or 'compact'")
    opts = {**_MC_DEFAULTS, **kw}
    name = "theta2" if form == "printed" else "theta2_compact"
    return _assemble(name, knot, n, seed, metadata={"parity_vanishing": knot.m % 2 == 0}, **opts)


def theta3(knot: LongKnot, n: int, seed: int, form: str = "printed", **kw) -> InvariantResult:
    if form not in ("printed", "even_compact"):
        raise ValueError("form must be 'printed' or 'even_compact'")
    opts = {**_MC_DEFAULTS, **kw}
    name = "theta3" if form == "printed" else "theta3_even"
    return _assemble(name, knot, n, seed, metadata={"parity_vanishing": knot.m % 2 == 1}, **opts)


# --- linking number ----------------------------------------------------------------

def _loop_anchor(loop: LoopCurve) -> np.ndarray:
    if loop.kind == "custom-polyline-smoothed":
        c = np.mean(np.asarray(loop.vertices, dtype=float), axis=0)
    else:
        c = np.asarray(loop.center, dtype=float)
    return c[: loop.m - 2]


class LoopDomain:
    """R^{m-2} x [0, 1): x from a heavy-tailed radial law around the loop, s uniform."""

    def __init__(self, knot: LongKnot, loop: LoopCurve, spec: ProposalSpec = ProposalSpec()):
        m = knot.m
        scale, tail = spec.resolve(m, knot)
        self.m, self.spec = m, spec
        self.center = _loop_anchor(loop)
        self.law = RadialLaw(m - 2, tail - (m - 2), scale)

    def draw(self, rng: np.random.Generator, n: int, antithetic: bool):
        stratify = self.spec.mode == "stratified"
        u = (rng.permutation(n) + rng.random(n)) / n if stratify else None
        z = self.law.offsets(rng, n, u)
        s = rng.random(n)
        if antithetic:
            z = np.stack([z, -z], axis=1).reshape(2 * n, -1)
            s = np.stack([s, 1.0 - s], axis=1).reshape(2 * n)
        return (self.center + z, s), 1.0 / self.law.density(z)

    def describe(self) -> Dict:
        return {"space": "R^{m-2} x S^1", "m": self.m, "proposal": self.spec.describe()}


class LinkingIntegrand:
    """Pullback of the normalized S^{m-1} form by (x, s) -> (gamma(s) - f(x)) / |gamma(s) - f(x)|."""

    def __init__(self, knot: LongKnot, loop: LoopCurve):
        if knot.m != loop.m:
            raise ValueError("knot and loop live in different dimensions")
        self.knot, self.loop = knot, loop
        self.norm = 1.0 / sphere_volume(knot.m)

    def __call__(self, pts) -> np.ndarray:
        x, s = pts
        fx = eval_knot(self.knot, x)
        dfx = knot_jacobian(self.knot, x)
        g, dg = eval_loop(self.loop, s)
        diff = g - fx
        r = np.linalg.norm(diff, axis=-1)
        u = diff / r[:, None]
        cols = np.concatenate([-dfx, dg[:, :, None]], axis=2) / r[:, None, None]
        mat = np.concatenate([u[:, :, None], cols], axis=2)
        return np.linalg.det(mat) * self.norm


def knot_loop_distance(knot: LongKnot, loop: LoopCurve, n_loop: int = 256, points_per_axis: int = 9) -> float:
    """Minimum distance between the knot image and the loop (grid search, then local refinement)."""
    m = knot.m
    s = np.arange(n_loop) / n_loop
    g, _ = eval_loop(loop, s)
    proj = g[:, : m - 2]
    R = max(knot.support_radius, 1e-9)
    lo = np.minimum(knot.center - R, proj.min(axis=0))
    hi = np.maximum(knot.center + R, proj.max(axis=0))
    axes = [np.linspace(a, b, points_per_axis) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m - 2)
    _, idx = cKDTree(eval_knot(knot, grid)).query(g)
    best = math.inf
    for point, starts in zip(g, zip(proj, grid[idx])):
        for x0 in starts:
            res = minimize(
                lambda x: float(np.sum((eval_knot(knot, x) - point) ** 2)),
                x0,
                jac=lambda x: 2.0 * knot_jacobian(knot, x).T @ (eval_knot(knot, x) - point),
                method="BFGS",
            )
            best = min(best, math.sqrt(max(res.fun, 0.0)))
    return best


def linking_number(knot: LongKnot, loop: LoopCurve, n: int, seed: int, check: bool = True, **kw) -> Estimate:
    """Monte Carlo estimate of lk(f, gamma); rejects pairs closer than PROXIMITY_TOL."""
    opts = {**_MC_DEFAULTS, **kw}
    if check:
        dist = knot_loop_distance(knot, loop)
        if dist < PROXIMITY_TOL:
            raise ProximityError(f"loop passes within {dist:.3g} of the knot")
    spec = opts.pop("spec")
    return integrate(LinkingIntegrand(knot, loop), LoopDomain(knot, loop, spec), spec, n, seed, **opts)


# --- dΘ₁ probe ----------------------------------------------------------------------

class _DifferenceIntegrand:
    """(g_plus - g_minus) / width on common samples."""

    def __init__(self, g_plus, g_minus, width):
        self.g_plus, self.g_minus, self.width = g_plus, g_minus, width

    def __call__(self, cfg):
        return (self.g_plus(cfg) - self.g_minus(cfg)) / self.width


class _BoundaryDomain:
    """x uniform in the ball containing the path's support, v uniform on S^{m-3}."""

    def __init__(self, center, radius: float, m: int):
        self.center, self.radius, self.m = np.asarray(center, dtype=float), radius, m
        k = m - 2
        self.volume = sphere_volume(k) * radius**k / k

    def draw(self, rng, n, antithetic):
        k = self.m - 2
        d = rng.standard_normal((n, k))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        z = d * (self.radius * rng.random(n) ** (1.0 / k))[:, None]
        v = rng.standard_normal((n, k))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        if antithetic:
            z = np.stack([z, -z], axis=1).reshape(2 * n, k)
            v = np.stack([v, -v], axis=1).reshape(2 * n, k)
        return (self.center + z, v), np.full(len(z), self.volume)

    def describe(self):
        return {"space": "B^{m-2} x S^{m-3}", "m": self.m, "radius": self.radius}


class _BoundaryIntegrand:
    """Collapse-face contribution to dΘ₁/dt, averaged over the S^{m-3} fibre.

    With W = df(x) v and U = W/|W|, the density is
    (-1)^(m+1) det(U, dW/dt, dW/dx_1, ..., dW/dx_{m-2}) / (|W|^(m-1) Vol(S^{m-1})).
    """

    def __init__(self, path, t: float, fd_step: float = 1e-5):
        self.path, self.t, self.h = path, t, fd_step
        self.knot = path.at(t)
        self.m = self.knot.m

    def __call__(self, pts):
        x, v = pts
        m = self.m
        w = np.einsum("nij,nj->ni", knot_jacobian(self.knot, x), v)
        r = np.linalg.norm(w, axis=-1)
        u = w / r[:, None]
        wt = np.einsum("nij,nj->ni", self.path.velocity_jacobian(x), v)
        wx = knot_second_derivative(self.knot, x, v, self.h)
        mat = np.concatenate([u[:, :, None], wt[:, :, None], wx], axis=2)
        sign = -1.0 if m % 2 == 0 else 1.0
        return sign * np.linalg.det(mat) / r ** (m - 1) / sphere_volume(m)


def dtheta1_probe(path, t: float, n: int, seed: int, h: float = 1e-3, **kw) -> Tuple[Estimate, Estimate]:
    """(finite-difference dΘ₁/dt, boundary-formula dΘ₁/dt) at parameter t.

    The finite difference uses common random numbers: the C_{2,0} proposal
    does not depend on the amplitude, so both knots see the same samples.
    """
    opts = {**_MC_DEFAULTS, **kw}
    spec = opts.pop("spec")
    k_plus, k_minus = path.at(t + h), path.at(t - h)
    m = k_plus.m
    (d,) = enumerate_connected(1)
    diff = _DifferenceIntegrand(compile_integrand(d, m, k_plus), compile_integrand(d, m, k_minus), 2.0 * h)
    lhs = integrate(diff, ConfigurationDomain(2, 0, m, k_plus, spec), spec, n, seed, stream=0, **opts)
    base = path.base
    domain = _BoundaryDomain(base.center, base.support_radius, m)
    rhs = integrate(_BoundaryIntegrand(path, t), domain, spec, n, seed, stream=1, **opts)
    return lhs, rhs


# --- mixed expectation --------------------------------------------------------------

def mixed_expectation(lk_value: float, xi_matrix, hbar: float) -> float:
    """tr exp(-hbar * lk * rho(Xi)): the factor multiplying <U_0(f)> in the mixed expectation."""
    xi = np.atleast_2d(np.asarray(xi_matrix, dtype=float))
    if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
        raise ValueError("xi_matrix must be square")
    return float(np.trace(expm(-hbar * lk_value * xi)))


INVARIANT_NAMES = ("lk", "theta1", "theta2", "theta2_compact", "theta3", "theta3_even", "dtheta1_probe", "mixed_expectation")
