"""Monte Carlo driver: chunked importance sampling with a deterministic reduction.

The n samples are split into fixed chunks. Chunk c draws from its own
stream ``SeedSequence(seed, spawn_key=(stream, c))``, so its values do not
depend on which worker evaluates it. Each chunk is summarized by
(count, mean, M2) using exactly rounded sums, and the summaries are merged
by a fixed-shape pairwise tree (Chan et al. update). The result is
therefore bit-identical for any worker count.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .configspace import ProposalSpec, sample
from .geometry import LongKnot

DEFAULT_CHUNK = 8192
NONFINITE_LIMIT = 1e-4  # abort above 0.01% non-finite values


class NumericalAbort(RuntimeError):
    def __init__(self, n_nonfinite: int, n: int):
        super().__init__(f"{n_nonfinite} of {n} integrand values were non-finite")
        self.n_nonfinite, self.n = n_nonfinite, n


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n_samples: int
    seed: int
    strategy: Dict = field(default_factory=dict)
    n_nonfinite: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("an estimate needs at least two samples")
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")

    def zscore(self, truth: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == truth else math.inf
        return (self.value - truth) / self.stderr

    def to_dict(self) -> Dict:
        return asdict(self)


def combine(estimates: Sequence[Estimate], coefficients: Optional[Sequence[float]] = None) -> Estimate:
    """Linear combination of independent estimates (errors added in quadrature)."""
    if coefficients is None:
        coefficients = [1.0] * len(estimates)
    value = math.fsum(c * e.value for c, e in zip(coefficients, estimates))
    var = math.fsum((c * e.stderr) ** 2 for c, e in zip(coefficients, estimates))
    return Estimate(
        value,
        math.sqrt(var),
        sum(e.n_samples for e in estimates),
        estimates[0].seed,
        {"combined": [e.strategy for e in estimates]},
        sum(e.n_nonfinite for e in estimates),
    )


class ConfigurationDomain:
    """C_{s,t}(f) with the anchored proposal; yields (configurations, weights)."""

    def __init__(self, s: int, t: int, m: int, knot: Optional[LongKnot], spec: ProposalSpec = ProposalSpec()):
        self.s, self.t, self.m, self.knot, self.spec = s, t, m, knot, spec

    def draw(self, rng: np.random.Generator, n: int, antithetic: bool):
        return sample(self.s, self.t, self.m, self.knot, self.spec, rng, size=n, antithetic=antithetic)

    def describe(self) -> Dict:
        return {"space": f"C_{{{self.s},{self.t}}}", "m": self.m, "proposal": self.spec.describe()}


# chunk statistics: (count, mean, M2, nonfinite)
Stats = Tuple[int, float, float, int]


def _chunk_stats(values: np.ndarray, pair: bool) -> Stats:
    bad = ~np.isfinite(values)
    nonfinite = int(bad.sum())
    if nonfinite:
        values = np.where(bad, 0.0, values)
    if pair:
        values = 0.5 * (values[0::2] + values[1::2])
    n = values.size
    mean = math.fsum(values) / n
    m2 = math.fsum((values - mean) ** 2)
    return n, mean, m2, nonfinite


def _merge(a: Stats, b: Stats) -> Stats:
    na, ma, sa, fa = a
    nb, mb, sb, fb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n, fa + fb


def _tree_reduce(stats: List[Stats]) -> Stats:
    while len(stats) > 1:
        merged = [_merge(stats[i], stats[i + 1]) for i in range(0, len(stats) - 1, 2)]
        if len(stats) % 2:
            merged.append(stats[-1])
        stats = merged
    return stats[0]


def _run_chunk(job) -> Stats:
    integrand, domain, seed, stream, index, size, antithetic = job
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))
    pts, weights = domain.draw(rng, size // 2 if antithetic else size, antithetic)
    with np.errstate(all="ignore"):
        values = np.asarray(integrand(pts), dtype=float) * weights
    return _chunk_stats(values, antithetic)


def chunk_sizes(n: int, chunk: int) -> List[int]:
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def integrate(
    integrand: Callable,
    domain,
    spec: ProposalSpec = ProposalSpec(),
    n: int = 100_000,
    seed: int = 0,
    antithetic: bool = False,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
    stream: int = 0,
) -> Estimate:
    """Importance-sampling estimate of the integral of ``integrand`` over ``domain``.

    ``domain`` is a (s, t, m, knot) tuple, or any object with
    ``draw(rng, n, antithetic) -> (points, weights)``. With ``antithetic``
    each proposal draw is paired with its reflection through the anchor
    and statistics are taken over pair means; ``n`` counts integrand
    evaluations and must then be even (chunk sizes too).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if isinstance(domain, tuple):
        domain = ConfigurationDomain(*domain, spec=spec)
    if antithetic and (n % 2 or chunk % 2):
        raise ValueError("antithetic sampling needs an even n and chunk size")
    sizes = chunk_sizes(n, chunk)
    jobs = [(integrand, domain, seed, stream, c, size, antithetic) for c, size in enumerate(sizes)]
    start = time.perf_counter()
    if workers == 1 or len(jobs) == 1:
        stats = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(_run_chunk, jobs))
    count, mean, m2, nonfinite = _tree_reduce(stats)
    if nonfinite > NONFINITE_LIMIT * n:
        raise NumericalAbort(nonfinite, n)
    strategy = {
        "antithetic": antithetic,
        "chunk": chunk,
        "chunks": len(sizes),
        "workers": workers,
        "stream": stream,
        "elapsed_s": round(time.perf_counter() - start, 3),
    }
    if hasattr(domain, "describe"):
        strategy.update(domain.describe())
    stderr = math.sqrt(m2 / (count - 1) / count) if count > 1 else math.inf
    return Estimate(mean, stderr, n, seed, strategy, nonfinite)
