"""Connected vacuum diagrams of the Wilson-surface expansion and their integrands.

On-knot vertices come from snakes and polygons:

* ``short``   -- the short snake sigma_0: one Xi-leg and one B-leg;
* ``tail``    -- first vertex of sigma_n (n >= 1): Xi-leg, one a-leg, outgoing eta;
* ``inner``   -- interior snake vertex: incoming and outgoing eta, one a-leg;
* ``head``    -- last vertex of sigma_n: incoming eta and the B-head;
* ``polygon`` -- vertex of tau_n: incoming and outgoing eta, one a-leg.

Ambient ``bf`` vertices carry one B and two a legs. A diagram is a Wick
contraction of all a-legs with all B-legs (theta edges, oriented B -> a).

Contractions are discarded when they are tadpoles (a bf vertex paired with
itself), when the Lie factor contains [Xi, Xi] (a tail a-leg fed by a short
snake, or both a-legs of a bf vertex fed by short snakes), when two edges of
the same propagator type join the same pair of points (the product then
contains w ^ w pulled back from one sphere and vanishes), or when the graph
is disconnected.
"""
from __future__ import annotations

import functools
import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .configspace import Configuration
from .exterior import wedge_all
from .geometry import LongKnot
from .propagators import eta_at, eta_norm, eta_rows, point_and_jacobian, theta_at, theta_norm, theta_rows

ONKNOT_KINDS = ("short", "tail", "inner", "head", "polygon")
KIND_ORDER = {k: i for i, k in enumerate(ONKNOT_KINDS + ("bf",))}
MAX_ORDER = 4

Edge = Tuple[int, int]


class DiagramDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class GradingReport:
    snakes: Dict[int, int]
    polygons: Dict[int, int]
    bf_vertices: int
    hbar_order: Fraction
    xi_degree: int
    a_degree: int
    b_degree: int

    @property
    def wick_balance(self) -> int:
        """sum (n-1) s_n + sum n t_n + v; zero for every complete contraction."""
        return (
            sum((n - 1) * c for n, c in self.snakes.items())
            + sum(n * c for n, c in self.polygons.items())
            + self.bf_vertices
        )


def grading_of(snakes: Dict[int, int], polygons: Dict[int, int], v: int) -> GradingReport:
    hbar = Fraction(sum((n + 1) * c for n, c in snakes.items()) + sum(n * c for n, c in polygons.items()) + v, 2)
    return GradingReport(
        dict(snakes),
        dict(polygons),
        v,
        hbar,
        sum(snakes.values()),
        sum(n * c for n, c in snakes.items()) + sum(n * c for n, c in polygons.items()) + 2 * v,
        sum(snakes.values()) + v,
    )


@dataclass(frozen=True)
class Diagram:
    """A labelled diagram. Labels 1..s are on-knot, s+1..s+t ambient.

    ``theta_edges`` and ``eta_edges`` are ordered pairs in the order the
    forms are wedged. ``sign`` is the overall orientation sign and
    ``symmetry`` the automorphism-group order; the integrand weight is
    sign / symmetry.
    """

    kinds: Tuple[str, ...]
    theta_edges: Tuple[Edge, ...]
    eta_edges: Tuple[Edge, ...]
    snakes: Tuple[Tuple[int, int], ...] = ()
    polygons: Tuple[Tuple[int, int], ...] = ()
    symmetry: int = 1
    sign: int = 1
    name: str = ""
    theta_sources: Tuple[int, ...] = ()

    def __post_init__(self):
        n = len(self.kinds)
        s = self.s
        if any(k == "bf" for k in self.kinds[:s]) or any(k != "bf" for k in self.kinds[s:]):
            raise ValueError("on-knot vertices must precede ambient ones")
        for i, j in self.theta_edges + self.eta_edges:
            if i == j:
                raise ValueError("tadpole edge")
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"edge ({i},{j}) out of range")
        for i, j in self.eta_edges:
            if i > s or j > s:
                raise ValueError("eta edges join on-knot vertices only")
        if self.theta_sources and (
            len(self.theta_sources) != len(self.theta_edges)
            or any(b not in e for b, e in zip(self.theta_sources, self.theta_edges))
        ):
            raise ValueError("theta_sources must name one end of each theta edge")
        deg = Counter()
        for e in self.theta_edges:
            deg.update(e)
        if any(deg[v] != 3 for v in range(s + 1, n + 1)):
            raise ValueError("ambient vertices must be trivalent in theta edges")

    @property
    def s(self) -> int:
        return sum(k != "bf" for k in self.kinds)

    @property
    def t(self) -> int:
        return len(self.kinds) - self.s

    @property
    def order(self) -> int:
        return self.grading().xi_degree

    @property
    def weight(self) -> Fraction:
        return Fraction(self.sign, self.symmetry)

    def grading(self) -> GradingReport:
        return grading_of(dict(self.snakes), dict(self.polygons), self.t)

    def form_degree(self, m: int) -> int:
        return len(self.theta_edges) * (m - 1) + len(self.eta_edges) * (m - 3)

    def config_dim(self, m: int) -> int:
        return self.s * (m - 2) + self.t * m

    def as_row(self) -> Dict:
        g = self.grading()
        return {
            "order": self.order,
            "name": self.name,
            "s": self.s,
            "t": self.t,
            "theta_edges": " ".join(f"{i}{j}" if max(i, j) < 10 else f"{i},{j}" for i, j in self.theta_edges),
            "eta_edges": " ".join(f"{i}{j}" if max(i, j) < 10 else f"{i},{j}" for i, j in self.eta_edges),
            "symmetry": self.symmetry,
            "sign": self.sign,
            "weight": str(self.weight),
            "hbar_order": str(g.hbar_order),
            "xi_degree": g.xi_degree,
            "a_degree": g.a_degree,
            "b_degree": g.b_degree,
        }


def grading(d: Diagram) -> GradingReport:
    return d.grading()


# --- enumeration -----------------------------------------------------------

@dataclass
class _Skeleton:
    kinds: List[str] = field(default_factory=list)
    eta: List[Edge] = field(default_factory=list)  # 0-based, oriented along the snake/polygon
    a_legs: List[int] = field(default_factory=list)  # vertex of each a-leg
    b_legs: List[int] = field(default_factory=list)


def _species(order: int):
    """(snake lengths, polygon sizes, v) with sum(snakes) count == order and zero Wick balance."""
    for snakes in itertools.combinations_with_replacement(range(order + 2), order):
        base = sum(n - 1 for n in snakes)
        budget = -base
        if budget < 0:
            continue
        for v in range(budget + 1):
            rest = budget - v
            for polys in _partitions_min2(rest):
                yield snakes, polys, v


def _partitions_min2(total, smallest=2):
    if total == 0:
        yield ()
        return
    for first in range(smallest, total + 1):
        for rest in _partitions_min2(total - first, first):
            yield (first,) + rest


def _skeleton(snakes, polys, v) -> _Skeleton:
    sk = _Skeleton()

    def add(kind):
        sk.kinds.append(kind)
        return len(sk.kinds) - 1

    for n in snakes:
        if n == 0:
            sk.b_legs.append(add("short"))
            continue
        chain = [add("tail")] + [add("inner") for _ in range(n - 1)] + [add("head")]
        sk.a_legs.extend(chain[:-1])
        sk.b_legs.append(chain[-1])
        sk.eta.extend(zip(chain, chain[1:]))
    for n in polys:
        ring = [add("polygon") for _ in range(n)]
        sk.a_legs.extend(ring)
        sk.eta.extend(zip(ring, ring[1:] + ring[:1]))
    for _ in range(v):
        w = add("bf")
        sk.b_legs.append(w)
        sk.a_legs.extend([w, w])
    return sk


def _valid(sk: _Skeleton, theta: List[Edge]) -> bool:
    fed = {}
    for b, a in theta:
        if b == a:
            return False
        fed.setdefault(a, []).append(b)
    for a, sources in fed.items():
        kind = sk.kinds[a]
        if kind == "tail" and sk.kinds[sources[0]] == "short":
            return False
        if kind == "bf" and all(sk.kinds[b] == "short" for b in sources):
            return False
    for edges in (theta, sk.eta):
        pairs = [frozenset(e) for e in edges]
        if len(set(pairs)) != len(pairs):
            return False
    # connectivity
    n = len(sk.kinds)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in theta + sk.eta:
        parent[find(i)] = find(j)
    return len({find(x) for x in range(n)}) == 1


def _kind_groups(kinds):
    groups = {}
    for idx, k in enumerate(kinds):
        groups.setdefault(k, []).append(idx)
    return [groups[k] for k in sorted(groups, key=KIND_ORDER.get)]


def _relabelings(kinds):
    """All kind-preserving bijections old -> new with vertices sorted by kind."""
    groups = _kind_groups(kinds)
    slots = []
    start = 0
    for g in groups:
        slots.append(list(range(start, start + len(g))))
        start += len(g)
    for choice in itertools.product(*(itertools.permutations(s) for s in slots)):
        mapping = {}
        for g, perm in zip(groups, choice):
            for old, new in zip(g, perm):
                mapping[old] = new
        yield mapping


def _key(mapping, theta, eta):
    return (
        tuple(sorted((mapping[b], mapping[a]) for b, a in theta)),
        tuple(sorted((mapping[i], mapping[j]) for i, j in eta)),
    )


def _canonical(kinds, theta, eta):
    best, count = None, 0
    identity_key = None
    keys = []
    for mapping in _relabelings(kinds):
        k = _key(mapping, theta, eta)
        keys.append(k)
        if best is None or k < best[0]:
            best = (k, mapping)
    # automorphisms: relabelings giving the same key as one fixed labelling
    ref = keys[0]
    count = sum(1 for k in keys if k == ref)
    sorted_kinds = tuple(sorted(kinds, key=KIND_ORDER.get))
    return (sorted_kinds, best[0]), count


@functools.lru_cache(maxsize=None)
def _raw_diagrams(order: int):
    out = {}
    for snakes, polys, v in _species(order):
        sk = _skeleton(snakes, polys, v)
        if len(sk.a_legs) != len(sk.b_legs):
            continue
        for perm in set(itertools.permutations(sk.b_legs)):
            theta = list(zip(perm, sk.a_legs))
            if not _valid(sk, theta):
                continue
            canon, aut = _canonical(sk.kinds, theta, sk.eta)
            if canon not in out:
                out[canon] = (Counter(n for n in snakes), Counter(polys), aut)
    return out


# --- printed representatives -------------------------------------------------

# (s, t, theta edges, eta edges, coefficient) exactly as printed, terms in order.
PRINTED_TERMS: Dict[int, List[Tuple[int, int, Tuple[Edge, ...], Tuple[Edge, ...], Fraction]]] = {
    1: [(2, 0, ((1, 2),), ((1, 2),), Fraction(1))],
    2: [
        (4, 0, ((1, 3), (2, 4)), ((1, 2), (2, 3)), Fraction(1)),
        (4, 0, ((1, 3), (2, 4)), ((1, 2), (3, 4)), Fraction(1, 2)),
        (3, 1, ((1, 4), (2, 4), (3, 4)), ((1, 2),), Fraction(-1)),
    ],
    3: [
        (6, 0, ((1, 4), (2, 6), (3, 5)), ((1, 2), (3, 4), (5, 6)), Fraction(1, 3)),
        (6, 0, ((1, 4), (2, 6), (3, 5)), ((1, 2), (2, 3), (4, 5)), Fraction(1)),
        (6, 0, ((1, 4), (2, 6), (3, 5)), ((1, 2), (2, 3), (3, 4)), Fraction(-1)),
        (6, 0, ((1, 4), (2, 5), (3, 6)), ((1, 2), (2, 3), (3, 1)), Fraction(1, 3)),
        (5, 1, ((1, 6), (3, 6), (5, 6), (2, 4)), ((1, 2), (3, 4)), Fraction(1)),
        (5, 1, ((1, 6), (3, 6), (5, 6), (2, 4)), ((1, 2), (2, 3)), Fraction(-1)),
        (4, 2, ((1, 6), (3, 6), (5, 6), (2, 5), (4, 5)), ((1, 2),), Fraction(-1)),
        (3, 3, ((1, 4), (2, 5), (3, 6), (4, 5), (4, 6), (5, 6)), (), Fraction(1, 3)),
    ],
}


def _undirected_match(kinds, theta, eta, s, t, p_theta, p_eta):
    """A bijection enumerated-vertex -> printed label, or None."""
    on = [i for i, k in enumerate(kinds) if k != "bf"]
    amb = [i for i, k in enumerate(kinds) if k == "bf"]
    if len(on) != s or len(amb) != t:
        return None
    target_theta = {frozenset(e) for e in p_theta}
    target_eta = {frozenset(e) for e in p_eta}
    if len(theta) != len(target_theta) or len(eta) != len(target_eta):
        return None
    for pon in itertools.permutations(range(1, s + 1)):
        mapping = dict(zip(on, pon))
        for pamb in itertools.permutations(range(s + 1, s + t + 1)):
            mapping.update(zip(amb, pamb))
            if {frozenset((mapping[i], mapping[j])) for i, j in eta} != target_eta:
                break
            if {frozenset((mapping[i], mapping[j])) for i, j in theta} == target_theta:
                return dict(mapping)
    return None


def enumerate_connected(order: int, m_parity: Optional[str] = None) -> List[Diagram]:
    """All connected diagrams at the given order, with symmetry factors.

    For orders 1-3 each class is matched to its printed representative,
    whose labelling, edge order and sign are adopted. ``m_parity`` is
    accepted for interface symmetry; diagrams are not dropped by parity.
    """
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}, got {order}")
    if m_parity not in (None, "even", "odd"):
        raise ValueError("m_parity must be 'even', 'odd' or None")
    raw = _raw_diagrams(order)
    printed = PRINTED_TERMS.get(order)
    diagrams = []
    used = set()
    for (kinds, (theta, eta)), (snakes, polys, aut) in sorted(raw.items()):
        base = dict(
            snakes=tuple(sorted(snakes.items())),
            polygons=tuple(sorted(polys.items())),
            symmetry=aut,
        )
        if printed is None:
            diagrams.append(_from_canonical(kinds, theta, eta, **base))
            continue
        for idx, (s, t, p_theta, p_eta, coef) in enumerate(printed):
            if idx in used:
                continue
            mapping = _undirected_match(kinds, theta, eta, s, t, p_theta, p_eta)
            if mapping is None:
                continue
            used.add(idx)
            labelled_kinds = [None] * len(kinds)
            for old, new in mapping.items():
                labelled_kinds[new - 1] = kinds[old]
            src = {frozenset((mapping[b], mapping[a])): mapping[b] for b, a in theta}
            diagrams.append(
                Diagram(
                    tuple(labelled_kinds),
                    p_theta,
                    p_eta,
                    sign=1 if coef > 0 else -1,
                    name=f"term{idx + 1}",
                    theta_sources=tuple(src[frozenset(e)] for e in p_theta),
                    **base,
                )
            )
            break
        else:
            raise RuntimeError(f"order-{order} diagram with no printed counterpart: {kinds} {theta} {eta}")
    if printed is not None:
        diagrams.sort(key=lambda d: int(d.name[4:]))
    else:
        diagrams = [replace(d, name=f"d{order}_{i + 1}") for i, d in enumerate(diagrams)]
    return diagrams


def _from_canonical(kinds, theta, eta, **kw) -> Diagram:
    # canonical vertices are sorted by kind, so on-knot labels already precede bf
    return Diagram(
        tuple(kinds),
        tuple((a + 1, b + 1) for b, a in theta),
        tuple((i + 1, j + 1) for i, j in eta),
        theta_sources=tuple(b + 1 for b, _ in theta),
        **kw,
    )


def symmetry_factor(d: Diagram) -> int:
    """Order of the automorphism group (kind-, type- and orientation-preserving)."""
    theta, eta = _oriented_edges(d)
    return _canonical(list(d.kinds), theta, eta)[1]


def _oriented_edges(d: Diagram):
    """Edges re-oriented intrinsically (0-based): theta B -> a, eta along the snake/polygon."""
    kinds = d.kinds
    theta = []
    for k, (i, j) in enumerate(d.theta_edges):
        if d.theta_sources:
            b = d.theta_sources[k]
        elif kinds[i - 1] in ("short", "head") or (kinds[i - 1] == "bf" and kinds[j - 1] != "bf"):
            b = i
        elif kinds[j - 1] in ("short", "head") or kinds[j - 1] == "bf":
            b = j
        else:
            raise ValueError("cannot infer the B end of a theta edge; set theta_sources")
        if kinds[i - 1] == "bf" and kinds[j - 1] == "bf" and not d.theta_sources:
            raise ValueError("theta edge between bf vertices needs theta_sources")
        a = j if b == i else i
        theta.append((b - 1, a - 1))
    eta = []
    for i, j in d.eta_edges:
        i0, j0 = i - 1, j - 1
        if kinds[i0] == "head" or kinds[j0] == "tail":
            eta.append((j0, i0))
        else:
            eta.append((i0, j0))
    return theta, eta


# --- integrands ---------------------------------------------------------------

def row_scaled_det(a: np.ndarray) -> np.ndarray:
    """Batched determinant with each row normalized first.

    LU is only normwise backward stable; equilibrating rows keeps rows that
    are tiny through cancellation from being swamped by eps * |A|.
    """
    norms = np.linalg.norm(a, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    det = np.linalg.det(a / safe[..., None]) * np.prod(safe, axis=-1)
    return np.where(np.all(norms > 0, axis=-1), det, 0.0)


class CompiledIntegrand:
    """Top-degree coefficient of the diagram's form product times sign/symmetry.

    Callable on a :class:`Configuration` batch; returns one value per row.
    ``backend='frame'`` stacks covector rows and takes a determinant;
    ``backend='exterior'`` wedges sparse AltForms (slow, for checking).
    """

    def __init__(self, diagram: Diagram, m: int, knot: LongKnot, backend: str = "frame", weight=None):
        if diagram.form_degree(m) != diagram.config_dim(m):
            raise DiagramDegreeError(
                f"form degree {diagram.form_degree(m)} != configuration dimension {diagram.config_dim(m)}"
            )
        if backend not in ("frame", "exterior"):
            raise ValueError(f"unknown backend {backend!r}")
        self.diagram, self.m, self.knot, self.backend = diagram, m, knot, backend
        self.weight = float(diagram.weight if weight is None else weight)
        self.norm = theta_norm(m) ** len(diagram.theta_edges) * eta_norm(m) ** len(diagram.eta_edges)

    @property
    def s(self):
        return self.diagram.s

    @property
    def t(self):
        return self.diagram.t

    def density(self, cfg: Configuration) -> np.ndarray:
        """Unweighted top coefficient of the wedge product."""
        d = self.diagram
        if self.backend == "exterior":
            forms = [theta_at(cfg, self.knot, i, j) for i, j in d.theta_edges]
            forms += [eta_at(cfg, i, j) for i, j in d.eta_edges]
            top = wedge_all(forms).top_coefficient()
            return np.broadcast_to(np.asarray(top, dtype=float), (cfg.size,)).copy()
        return row_scaled_det(self.rows(cfg)) * self.norm

    def scale(self, cfg: Configuration) -> np.ndarray:
        """Roundoff scale of the determinant: |weight| * norm * prod(|row| + dim*eps*U).

        U is a row's uncancelled size, (|J_a| + |J_b|)/r for theta rows and
        2/r for eta rows, so a row that is small only through cancellation
        is credited with its absolute rounding error. For rows without
        cancellation this is the Hadamard bound.
        """
        d = self.diagram
        rows = self.rows(cfg)
        sizes = []
        for i, j in d.theta_edges:
            a, ja = point_and_jacobian(cfg, self.knot, i)
            b, jb = point_and_jacobian(cfg, self.knot, j)
            u = (np.linalg.norm(ja, 2, axis=(-2, -1)) + np.linalg.norm(jb, 2, axis=(-2, -1)))
            sizes += [u / np.linalg.norm(b - a, axis=-1)] * (self.m - 1)
        for i, j in d.eta_edges:
            r = np.linalg.norm(cfg.xs[:, j - 1] - cfg.xs[:, i - 1], axis=-1)
            sizes += [2.0 / r] * (self.m - 3)
        floor = rows.shape[1] * np.finfo(float).eps * np.stack(sizes, axis=1)
        return abs(self.weight) * self.norm * np.prod(np.linalg.norm(rows, axis=2) + floor, axis=1)

    def rows(self, cfg: Configuration) -> np.ndarray:
        """All covector rows, edges in wedge order: (N, dim, dim)."""
        d = self.diagram
        rows = [theta_rows(cfg, self.knot, i, j) for i, j in d.theta_edges]
        rows += [eta_rows(cfg, i, j) for i, j in d.eta_edges]
        return np.concatenate(rows, axis=1)

    def __call__(self, cfg: Configuration) -> np.ndarray:
        return self.weight * self.density(cfg)


def compile_integrand(d: Diagram, m: int, knot: LongKnot, backend: str = "frame") -> CompiledIntegrand:
    return CompiledIntegrand(d, m, knot, backend)


# --- involutions ----------------------------------------------------------------

def graph_involutions(d: Diagram) -> List[Dict[int, int]]:
    """Non-trivial label involutions preserving on-knot/ambient type and the undirected typed edges."""
    s, n = d.s, len(d.kinds)
    theta = {frozenset(e) for e in d.theta_edges}
    eta = {frozenset(e) for e in d.eta_edges}
    out = []
    for pon in itertools.permutations(range(1, s + 1)):
        for pamb in itertools.permutations(range(s + 1, n + 1)):
            perm = dict(zip(range(1, n + 1), pon + pamb))
            if all(perm[perm[a]] == a for a in perm) and any(perm[a] != a for a in perm):
                if {frozenset(perm[v] for v in e) for e in theta} == theta and {
                    frozenset(perm[v] for v in e) for e in eta
                } == eta:
                    out.append(perm)
    return out


def involution_sign(d: Diagram, perm: Dict[int, int], m: int) -> int:
    """Predicted eps with g(P c) = eps g(c) for the density g under relabelling perm.

    P c is the configuration whose point a is the old point perm[a].
    Contributions: (-1)^m per edge whose orientation flips, the sign of the
    reordering of odd-degree factors, and the orientation change of the
    frame, sign(perm)^m.
    """
    edges = [("theta", e) for e in d.theta_edges] + [("eta", e) for e in d.eta_edges]
    index = {e: k for k, e in enumerate(edges)}
    flips = 0
    image_order = []
    for kind, (i, j) in edges:
        a, b = perm[i], perm[j]
        if (kind, (a, b)) in index:
            image_order.append(index[(kind, (a, b))])
        elif (kind, (b, a)) in index:
            image_order.append(index[(kind, (b, a))])
            flips += 1
        else:
            raise ValueError("permutation is not a symmetry of the undirected diagram")
    eps = (-1) ** (m * flips)
    if m % 2 == 0:
        eps *= _perm_parity(image_order)
    labels = sorted(perm)
    eps *= _perm_parity([perm[a] - 1 for a in labels]) ** m
    return eps


def _perm_parity(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


VANISHING_RATIO = 1e-14


def hadamard_ratio(d: Diagram, m: int, knot: LongKnot, cfg: Configuration) -> np.ndarray:
    """|det| over the product of row norms: ~1e-16 or below where the product is identically zero."""
    g = compile_integrand(d, m, knot)
    rows = g.rows(cfg)
    norms = np.prod(np.linalg.norm(rows, axis=2), axis=1)
    live = norms > 0
    out = np.zeros(cfg.size)
    out[live] = np.abs(np.linalg.det(rows[live])) / norms[live]
    return out


@dataclass(frozen=True)
class ParityReport:
    diagram: str
    m: int
    vanishes: bool
    odd: Tuple[Dict[int, int], ...]
    even: Tuple[Dict[int, int], ...]
    max_residual: float


def complete_permutation(d: Diagram, perm: Dict[int, int]) -> Dict[int, int]:
    """Extend a partial label map by fixed points."""
    full = {a: perm.get(a, a) for a in range(1, len(d.kinds) + 1)}
    if sorted(full.values()) != list(full):
        raise ValueError(f"{perm} is not a permutation of the labels")
    return full


def involution_residual(d: Diagram, perm: Dict[int, int], m: int, knot: LongKnot, cfg: Configuration) -> float:
    """max |g(P c) - eps g(c)| over the configurations, relative to each one's Hadamard scale."""
    perm = complete_permutation(d, perm)
    g = compile_integrand(d, m, knot)
    eps = involution_sign(d, perm, m)
    diff = np.abs(g(cfg.permuted(perm)) - eps * g(cfg))
    scale = np.maximum(g.scale(cfg), np.finfo(float).tiny)
    return float(np.max(diff / scale))


def parity_report(d: Diagram, m: int, knot: LongKnot, cfg: Configuration) -> ParityReport:
    """Classify the undirected-graph involutions of ``d`` by their effect on the density.

    A diagram whose form product is degenerate at every sample is reported
    as vanishing; otherwise every involution's predicted sign is checked
    pointwise (residuals relative to the Hadamard scale).
    """
    vanishes = bool(np.max(hadamard_ratio(d, m, knot, cfg)) < VANISHING_RATIO)
    odd, even, worst = [], [], 0.0
    for perm in graph_involutions(d):
        eps = involution_sign(d, perm, m)
        (odd if eps < 0 else even).append(perm)
        if not vanishes:
            worst = max(worst, involution_residual(d, perm, m, knot, cfg))
    return ParityReport(d.name, m, vanishes, tuple(odd), tuple(even), worst)
