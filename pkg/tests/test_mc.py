import math

import numpy as np
import pytest

from longknot.configspace import Configuration, ProposalSpec
from longknot.exterior import sphere_volume
from longknot.mc import Estimate, NumericalAbort, chunk_sizes, combine, integrate
from longknot.propagators import eta_at, sphere_cycle

PLANE = (1, 0, 4, None)  # one on-knot point: the integration domain is R^2


def gauss(cfg):
    z = cfg.xs[:, 0]
    return np.exp(-np.sum(z * z, axis=-1)) / np.pi


def tilted(cfg):
    z = cfg.xs[:, 0]
    return (1.0 + 3.0 * z[:, 0]) * np.exp(-np.sum(z * z, axis=-1)) / np.pi


class Scaled:
    def __init__(self, c):
        self.c = c

    def __call__(self, cfg):
        return self.c * gauss(cfg)


def with_nans(cfg):
    v = gauss(cfg)
    v[::500] = np.nan
    return v


def test_gaussian_integral():
    est = integrate(gauss, PLANE, n=1_000_000, seed=1)
    assert abs(est.zscore(1.0)) < 3
    assert est.n_samples == 1_000_000 and est.seed == 1


def test_linear_functional_exact():
    a = integrate(gauss, PLANE, n=20_000, seed=4)
    b = integrate(Scaled(2.0), PLANE, n=20_000, seed=4)
    assert b.value == 2.0 * a.value
    assert b.stderr == 2.0 * a.stderr


def test_worker_count_irrelevant():
    runs = [integrate(tilted, PLANE, n=50_000, seed=9, chunk=4096, workers=w) for w in (1, 2, 3)]
    assert len({r.value for r in runs}) == 1
    assert len({r.stderr for r in runs}) == 1


def test_seed_changes_value():
    a = integrate(gauss, PLANE, n=10_000, seed=1)
    b = integrate(gauss, PLANE, n=10_000, seed=2)
    assert a.value != b.value


def test_coverage_over_seeds():
    hits = sum(abs(integrate(gauss, PLANE, n=4000, seed=s).zscore(1.0)) < 2 for s in range(50))
    assert hits >= 44


def test_antithetic_variance_reduction():
    spec = ProposalSpec(core_weight=0.0)
    plain = integrate(tilted, PLANE, spec=spec, n=100_000, seed=3)
    anti = integrate(tilted, PLANE, spec=spec, n=100_000, seed=3, antithetic=True)
    assert abs(anti.zscore(1.0)) < 3
    assert plain.stderr**2 / anti.stderr**2 >= 1.5


def test_antithetic_needs_even_counts():
    with pytest.raises(ValueError):
        integrate(gauss, PLANE, n=1001, seed=0, antithetic=True)


def test_nonfinite_abort():
    with pytest.raises(NumericalAbort) as info:
        integrate(with_nans, PLANE, n=10_000, seed=0)
    assert info.value.n_nonfinite == sum(-(-size // 500) for size in chunk_sizes(10_000, 8192))


def test_argument_checks():
    with pytest.raises(ValueError):
        integrate(gauss, PLANE, n=1, seed=0)
    with pytest.raises(ValueError):
        integrate(gauss, PLANE, n=100, seed=0, workers=0)


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert sum(chunk_sizes(100_001, 8192)) == 100_001


def test_estimate_contract():
    with pytest.raises(ValueError):
        Estimate(1.0, 0.1, 1, 0)
    with pytest.raises(ValueError):
        Estimate(1.0, -0.1, 10, 0)
    e = combine([Estimate(1.0, 0.3, 10, 0), Estimate(2.0, 0.4, 10, 0)], [1.0, -2.0])
    assert e.value == -3.0
    assert e.stderr == pytest.approx(math.sqrt(0.09 + 0.64))


class OffCentreSphere:
    """x_1 fixed inside a small (m-3)-sphere on which x_2 is uniform."""

    def __init__(self, m, radius=0.2):
        self.m, self.k, self.radius = m, m - 2, radius
        self.inner = np.full(self.k, 0.05)

    def draw(self, rng, n, antithetic):
        u = rng.standard_normal((n, self.k))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        return u, np.full(n, sphere_volume(self.k))


class EtaOnSphere:
    def __init__(self, domain):
        self.d = domain

    def __call__(self, u):
        d = self.d
        # an oriented tangent frame at u: project a fixed frame and orthonormalize
        basis = np.broadcast_to(np.eye(d.k)[1:], (len(u), d.k - 1, d.k))
        full = np.concatenate([u[:, None], basis], axis=1)
        q, _ = np.linalg.qr(np.swapaxes(full, 1, 2))
        q = np.swapaxes(q, 1, 2)
        q[:, 0] = u
        q[:, -1] *= np.sign(np.linalg.det(q))[:, None]
        tangents = d.radius * q[:, 1:]
        xs = np.stack([np.broadcast_to(d.inner, u.shape), d.radius * u], axis=1)
        cfg = Configuration(xs, np.zeros((len(u), 0, d.m)), d.m)
        vecs = np.zeros((len(u), d.k - 1, cfg.dim))
        vecs[:, :, cfg.block(2)] = tangents
        return eta_at(cfg, 1, 2).evaluate(vecs)


@pytest.mark.parametrize("m", [4, 5])
def test_eta_degree_as_mc(m):
    dom = OffCentreSphere(m)
    est = integrate(EtaOnSphere(dom), dom, n=50_000, seed=m)
    assert abs(est.zscore(1.0)) < 3 or abs(est.value - 1.0) < 1e-12


def test_sphere_cycle_orientation_matches():
    pts, tans, w = sphere_cycle(3, 10)
    det = np.linalg.det(np.concatenate([pts[:, None], tans], axis=1))
    assert np.all(det > 0)
    assert np.sum(w * det) == pytest.approx(sphere_volume(3), rel=1e-10)
