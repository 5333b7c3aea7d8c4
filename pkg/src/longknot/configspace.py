"""Configurations of s on-knot parameters and t ambient points, and a sampler.

Points carry 1-based labels: 1..s are on-knot parameters x_i in R^{m-2},
s+1..s+t are ambient points y_i in R^m. Configurations are batched: ``xs``
has shape (N, s, m-2) and ``ys`` shape (N, t, m).

The sampler builds each point relative to an anchor drawn uniformly from
{knot center} + all earlier points, with a radial law whose Cartesian
density behaves like 1/r^{k-1} at the anchor. This matches the
1/r^{m-3} and 1/r^{m-1} blow-up of the propagator densities at the
diagonals, which would otherwise give the estimator infinite variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .exterior import sphere_volume
from .geometry import LongKnot, eval_knot, knot_jacobian, sigma

MIN_SEPARATION = 1e-9
MAX_RETRIES = 100


class DegenerateProposalError(RuntimeError):
    pass


@dataclass
class Configuration:
    xs: np.ndarray
    ys: np.ndarray
    m: int
    _cache: Dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.ndim == 2:
            self.xs = self.xs[None]
        if self.ys.ndim == 2:
            self.ys = self.ys[None]
        if self.xs.shape[0] != self.ys.shape[0]:
            raise ValueError("xs and ys batch sizes differ")
        if self.xs.shape[-1] != self.m - 2 or self.ys.shape[-1] != self.m:
            raise ValueError("point dimensions do not match m")

    @classmethod
    def single(cls, xs, ys=None, m: Optional[int] = None) -> "Configuration":
        xs = np.asarray(xs, dtype=float).reshape(-1, np.shape(xs)[-1]) if np.size(xs) else None
        if m is None:
            m = xs.shape[-1] + 2 if xs is not None else np.shape(ys)[-1]
        xs = np.zeros((0, m - 2)) if xs is None else xs
        ys = np.zeros((0, m)) if ys is None or np.size(ys) == 0 else np.asarray(ys, dtype=float)
        return cls(xs[None], ys[None], m)

    @property
    def s(self) -> int:
        return self.xs.shape[1]

    @property
    def t(self) -> int:
        return self.ys.shape[1]

    @property
    def size(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.s * (self.m - 2) + self.t * self.m

    def block(self, label: int) -> slice:
        """Columns of the tangent frame belonging to point ``label``."""
        k = self.m - 2
        if 1 <= label <= self.s:
            return slice((label - 1) * k, label * k)
        if self.s < label <= self.s + self.t:
            start = self.s * k + (label - self.s - 1) * self.m
            return slice(start, start + self.m)
        raise IndexError(f"point label {label} outside 1..{self.s + self.t}")

    def images(self, knot: LongKnot):
        """f(x_i) and df(x_i) for all on-knot points, cached per knot."""
        key = id(knot)
        if key not in self._cache:
            self._cache[key] = (knot, eval_knot(knot, self.xs), knot_jacobian(knot, self.xs))
        _, fx, dfx = self._cache[key]
        return fx, dfx

    def permuted(self, perm) -> "Configuration":
        """Relabel points: new point ``a`` is old point ``perm[a]`` (1-based dict or sequence).

        On-knot labels must map to on-knot labels and ambient to ambient.
        """
        if not isinstance(perm, dict):
            perm = {a + 1: p for a, p in enumerate(perm)}
        full = {a: perm.get(a, a) for a in range(1, self.s + self.t + 1)}
        xi = [full[a] - 1 for a in range(1, self.s + 1)]
        yi = [full[a] - self.s - 1 for a in range(self.s + 1, self.s + self.t + 1)]
        if any(not 0 <= i < self.s for i in xi) or any(not 0 <= i < self.t for i in yi):
            raise ValueError("permutation mixes on-knot and ambient labels")
        return Configuration(self.xs[:, xi], self.ys[:, yi], self.m)

    def __getitem__(self, idx) -> "Configuration":
        return Configuration(self.xs[idx], self.ys[idx], self.m)


# ConfigurationPoint is a batch of one.
ConfigurationPoint = Configuration


def project_pair(cfg: Configuration, i: int, j: int, knot: Optional[LongKnot] = None):
    """The pair map for labels (i, j).

    With ``knot=None`` both labels must be on-knot and the domain pair
    (x_i, x_j) is returned. With a knot, on-knot labels are pushed through
    it: (f(x_i), f(x_j)), (f(x_i), y_j), (y_i, f(x_j)) or (y_i, y_j).
    """
    if i == j:
        raise ValueError("tadpole pair: labels must differ")
    if knot is None:
        if not (i <= cfg.s and j <= cfg.s):
            raise ValueError("the on-knot projection needs two on-knot labels")
        return cfg.xs[:, i - 1], cfg.xs[:, j - 1]
    return _ambient_point(cfg, knot, i), _ambient_point(cfg, knot, j)


def _ambient_point(cfg, knot, label):
    if label <= cfg.s:
        return cfg.images(knot)[0][:, label - 1]
    return cfg.ys[:, label - cfg.s - 1]


@dataclass(frozen=True)
class ProposalSpec:
    """Anchored heavy-tailed proposal.

    ``tail_exponent`` is the power-law decay of the Cartesian density of an
    ambient point (must exceed m); the radial law is Lomax with shape
    tail_exponent - k in dimension k. ``scale`` is the Lomax scale; None
    means the knot's support radius (or 1 for the flat knot).
    ``core_weight`` and ``core_exponent`` control the near-collision core
    of the radial law (see :class:`RadialLaw`).
    """

    scale: Optional[float] = None
    tail_exponent: Optional[float] = None
    mode: str = "iid-heavy-tail"
    core_weight: float = 0.1
    core_exponent: float = 0.8

    def __post_init__(self):
        if self.mode not in ("iid-heavy-tail", "stratified"):
            raise KeyError(f"unknown proposal mode {self.mode!r}")
        if self.scale is not None and self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0.0 <= self.core_weight < 1.0 or not 0.0 <= self.core_exponent < 1.0:
            raise ValueError("core_weight and core_exponent must lie in [0, 1)")

    def resolve(self, m: int, knot: Optional[LongKnot]) -> Tuple[float, float]:
        scale = self.scale
        if scale is None:
            scale = max(knot.support_radius, 1.0) if knot is not None else 1.0
        tail = self.tail_exponent if self.tail_exponent is not None else m + 1.0
        if tail <= m:
            raise ValueError(f"tail_exponent must exceed m={m}, got {tail}")
        return float(scale), float(tail)

    def describe(self) -> Dict:
        return {
            "scale": self.scale,
            "tail_exponent": self.tail_exponent,
            "mode": self.mode,
            "core_weight": self.core_weight,
            "core_exponent": self.core_exponent,
        }


class RadialLaw:
    """Point z = r * omega in R^k with omega uniform on S^{k-1}.

    The radius is a two-component mixture: with probability 1 - core_weight
    a Lomax(shape, scale) tail, otherwise a core with density proportional
    to r^(-core_exponent) on [0, scale]. The core puts extra mass on
    near-collisions, where several points approaching one another make the
    integrand grow faster than any single-pair law can follow.
    """

    def __init__(self, k: int, shape: float, scale: float, core_weight: float = 0.0, core_exponent: float = 0.8):
        if shape <= 0:
            raise ValueError("Lomax shape must be positive")
        if not 0.0 <= core_weight < 1.0:
            raise ValueError("core_weight must lie in [0, 1)")
        if not 0.0 <= core_exponent < 1.0:
            raise ValueError("core_exponent must lie in [0, 1)")
        self.k, self.shape, self.scale = k, shape, scale
        self.core_weight, self.core_exponent = core_weight, core_exponent
        self._log_sphere = math.log(sphere_volume(k))

    def radius_from_uniform(self, u):
        return self.scale * ((1.0 - u) ** (-1.0 / self.shape) - 1.0)

    def core_radius_from_uniform(self, u):
        return self.scale * u ** (1.0 / (1.0 - self.core_exponent))

    def offsets(self, rng: np.random.Generator, n: int, u_radius=None) -> np.ndarray:
        u = rng.random(n) if u_radius is None else u_radius
        direction = rng.standard_normal((n, self.k))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        r = self.radius_from_uniform(u)
        if self.core_weight > 0:
            core = rng.random(n) < self.core_weight
            r = np.where(core, self.core_radius_from_uniform(u), r)
        return r[:, None] * direction

    def log_radial_density(self, r) -> np.ndarray:
        tail = math.log(self.shape / self.scale) - (self.shape + 1.0) * np.log1p(r / self.scale)
        if self.core_weight == 0:
            return tail
        a = self.core_exponent
        with np.errstate(divide="ignore"):
            core = np.where(
                r < self.scale,
                math.log(1.0 - a) - (1.0 - a) * math.log(self.scale) - a * np.log(r),
                -np.inf,
            )
        return np.logaddexp(math.log1p(-self.core_weight) + tail, math.log(self.core_weight) + core)

    def log_density(self, z) -> np.ndarray:
        """Log Cartesian density of the offset z (shape (..., k))."""
        r = np.linalg.norm(z, axis=-1)
        with np.errstate(divide="ignore"):
            return self.log_radial_density(r) - self._log_sphere - (self.k - 1) * np.log(r)

    def density(self, z) -> np.ndarray:
        return np.exp(self.log_density(z))


class ConfigurationSampler:
    """Anchored sequential proposal for C_{s,t}(f); see module docstring."""

    def __init__(self, s: int, t: int, m: int, knot: Optional[LongKnot], spec: ProposalSpec = ProposalSpec()):
        self.s, self.t, self.m, self.knot, self.spec = s, t, m, knot, spec
        scale, tail = spec.resolve(m, knot)
        core = (spec.core_weight, spec.core_exponent)
        self.onknot_law = RadialLaw(m - 2, tail - (m - 2), scale, *core)
        self.ambient_law = RadialLaw(m, tail - m, scale, *core)
        self.center = knot.center if knot is not None else np.zeros(m - 2)

    def _anchors_x(self, xs, i):
        n = xs.shape[0]
        c = np.broadcast_to(self.center, (n, 1, self.m - 2))
        return np.concatenate([c, xs[:, :i]], axis=1)

    def _anchors_y(self, fx, ys, j):
        n = ys.shape[0]
        c = np.broadcast_to(sigma(self.center, self.m), (n, 1, self.m))
        return np.concatenate([c, fx, ys[:, :j]], axis=1)

    def _images(self, xs):
        if self.knot is None:
            return sigma(xs, self.m)
        return eval_knot(self.knot, xs)

    def draw(self, rng: np.random.Generator, n: int, antithetic: bool = False):
        """Draw n configurations; with ``antithetic`` return 2n (pairs adjacent)."""
        choices, offsets = [], []
        stratify = self.spec.mode == "stratified"
        for i in range(self.s):
            a = rng.integers(0, i + 1, size=n)
            u = (rng.permutation(n) + rng.random(n)) / n if stratify and i == 0 else None
            z = self.onknot_law.offsets(rng, n, u)
            choices.append(a)
            offsets.append(z)
        for j in range(self.t):
            a = rng.integers(0, 1 + self.s + j, size=n)
            z = self.ambient_law.offsets(rng, n, None)
            choices.append(a)
            offsets.append(z)
        signs = (1.0, -1.0) if antithetic else (1.0,)
        cfgs = [self._assemble(choices, offsets, sgn) for sgn in signs]
        if antithetic:
            xs = np.stack([c[0] for c in cfgs], axis=1).reshape(2 * n, self.s, self.m - 2)
            ys = np.stack([c[1] for c in cfgs], axis=1).reshape(2 * n, self.t, self.m)
        else:
            xs, ys = cfgs[0]
        return Configuration(xs, ys, self.m)

    def _assemble(self, choices, offsets, sgn):
        n = offsets[0].shape[0] if offsets else 0
        xs = np.zeros((n, self.s, self.m - 2))
        ys = np.zeros((n, self.t, self.m))
        rows = np.arange(n)
        for i in range(self.s):
            anchors = self._anchors_x(xs, i)
            xs[:, i] = anchors[rows, choices[i]] + sgn * offsets[i]
        fx = self._images(xs)
        for j in range(self.t):
            anchors = self._anchors_y(fx, ys, j)
            ys[:, j] = anchors[rows, choices[self.s + j]] + sgn * offsets[self.s + j]
        return xs, ys

    def density(self, cfg: Configuration) -> np.ndarray:
        """Proposal density of each configuration (mixture over anchors)."""
        xs, ys = cfg.xs, cfg.ys
        dens = np.ones(cfg.size)
        for i in range(self.s):
            anchors = self._anchors_x(xs, i)
            mix = self.onknot_law.density(xs[:, i : i + 1] - anchors).mean(axis=1)
            dens *= mix
        if self.t:
            fx = self._images(xs)
            for j in range(self.t):
                anchors = self._anchors_y(fx, ys, j)
                mix = self.ambient_law.density(ys[:, j : j + 1] - anchors).mean(axis=1)
                dens *= mix
        return dens

    def min_separation(self, cfg: Configuration) -> np.ndarray:
        pts = [cfg.xs[:, i] for i in range(self.s)]
        sep = np.full(cfg.size, np.inf)
        for a in range(self.s):
            for b in range(a + 1, self.s):
                sep = np.minimum(sep, np.linalg.norm(pts[a] - pts[b], axis=-1))
        if self.t:
            fx = self._images(cfg.xs)
            amb = [fx[:, i] for i in range(self.s)] + [cfg.ys[:, j] for j in range(self.t)]
            for a in range(len(amb)):
                for b in range(max(a + 1, self.s), len(amb)):
                    sep = np.minimum(sep, np.linalg.norm(amb[a] - amb[b], axis=-1))
        return sep


def probe_configurations(s: int, t: int, m: int, knot: Optional[LongKnot], rng: np.random.Generator,
                         size: int, half_width: float = 4.0, min_separation: float = 0.05,
                         spec: Optional[ProposalSpec] = None) -> Configuration:
    """Proposal draws truncated to a box around the origin and kept away from the diagonals.

    Meant for pointwise identities (symmetries, route comparisons), where
    the far-field tail of the importance proposal only adds input roundoff.
    """
    sampler = ConfigurationSampler(s, t, m, knot, spec or ProposalSpec())
    xs, ys = [], []
    kept = 0
    for _ in range(MAX_RETRIES):
        c = sampler.draw(rng, 2 * size, False)
        inside = np.ones(c.size, dtype=bool)
        if s:
            inside &= np.all(np.abs(c.xs) <= half_width, axis=(1, 2))
        if t:
            inside &= np.all(np.abs(c.ys) <= half_width, axis=(1, 2))
        keep = inside & (sampler.min_separation(c) >= min_separation)
        xs.append(c.xs[keep])
        ys.append(c.ys[keep])
        kept += int(keep.sum())
        if kept >= size:
            return Configuration(np.concatenate(xs)[:size], np.concatenate(ys)[:size], m)
    raise DegenerateProposalError("too few proposal draws fall inside the probe box")


def sample(s: int, t: int, m: int, knot: Optional[LongKnot], spec: ProposalSpec, rng: np.random.Generator,
           size: int = 1, antithetic: bool = False):
    """Draw configurations and importance weights 1/density.

    Rows closer than MIN_SEPARATION to a diagonal are redrawn (with their
    antithetic partner); exhausting MAX_RETRIES raises DegenerateProposalError.
    """
    sampler = ConfigurationSampler(s, t, m, knot, spec)
    cfg = sampler.draw(rng, size, antithetic)
    group = 2 if antithetic else 1
    for _ in range(MAX_RETRIES):
        bad = sampler.min_separation(cfg) < MIN_SEPARATION
        if not bad.any():
            break
        bad = bad.reshape(-1, group).any(axis=1)
        fresh = sampler.draw(rng, int(bad.sum()), antithetic)
        idx = np.repeat(np.flatnonzero(bad) * group, group) + np.tile(np.arange(group), int(bad.sum()))
        cfg.xs[idx] = fresh.xs
        cfg.ys[idx] = fresh.ys
    else:
        raise DegenerateProposalError("could not separate sampled points; proposal is degenerate")
    weights = 1.0 / sampler.density(cfg)
    return cfg, weights
