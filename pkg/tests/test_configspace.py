import math

import numpy as np
import pytest
from scipy import integrate as quad

from longknot.configspace import (
    Configuration,
    ConfigurationSampler,
    DegenerateProposalError,
    ProposalSpec,
    RadialLaw,
    probe_configurations,
    project_pair,
    sample,
)
from longknot.exterior import sphere_volume
from longknot.geometry import eval_knot, make_knot, sigma


def mc_mean(values):
    return values.mean(), values.std(ddof=1) / math.sqrt(values.size)


def test_unit_disc_area():
    cfg, w = sample(1, 0, 4, None, ProposalSpec(), np.random.default_rng(0), size=100_000)
    inside = (np.linalg.norm(cfg.xs[:, 0], axis=-1) < 1.0).astype(float)
    est, err = mc_mean(inside * w)
    assert abs(est - math.pi) < 3 * err


def test_gaussian_normalization():
    knot = make_knot("bump", 4)
    cfg, w = sample(2, 1, 4, knot, ProposalSpec(), np.random.default_rng(1), size=200_000)
    g = np.exp(-0.5 * np.sum(cfg.xs**2, axis=(1, 2)) - 0.5 * np.sum(cfg.ys**2, axis=(1, 2))) / (2 * np.pi) ** 4
    est, err = mc_mean(g * w)
    assert abs(est - 1.0) < 3 * err


@pytest.mark.parametrize("m", [4, 5])
def test_exponential_target(m):
    k = m - 2
    cfg, w = sample(1, 0, m, None, ProposalSpec(), np.random.default_rng(m), size=1_000_000)
    est, err = mc_mean(np.exp(-np.linalg.norm(cfg.xs[:, 0], axis=-1)) * w)
    exact = sphere_volume(k) * math.gamma(k)
    assert abs(est - exact) < 3 * err


@pytest.mark.parametrize("k,shape,core", [(2, 3.0, 0.0), (3, 3.0, 0.1), (4, 2.0, 0.5), (6, 1.0, 0.3)])
def test_radial_law_normalized(k, shape, core):
    law = RadialLaw(k, shape, 1.7, core_weight=core)
    f = lambda r: math.exp(law.log_radial_density(np.array(r)))
    total = quad.quad(f, 0, 1.7, limit=200)[0] + quad.quad(f, 1.7, np.inf, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-10)


def test_radial_law_closed_form_pieces():
    law = RadialLaw(3, 2.0, 1.0, core_weight=0.25, core_exponent=0.5)
    # Lomax mass beyond the core is (1 + 1)^-2 = 1/4 of the tail component
    tail_mass = quad.quad(lambda r: math.exp(law.log_radial_density(np.array(r))), 1.0, np.inf)[0]
    assert tail_mass == pytest.approx(0.75 * 0.25, rel=1e-10)


def test_radial_sampler_matches_density():
    law = RadialLaw(3, 2.0, 1.0, core_weight=0.3)
    z = law.offsets(np.random.default_rng(3), 200_000)
    r = np.linalg.norm(z, axis=-1)
    for a, b in [(0.0, 0.1), (0.5, 1.0), (2.0, 5.0)]:
        p = quad.quad(lambda x: math.exp(law.log_radial_density(np.array(x))), a, b)[0]
        frac = np.mean((r >= a) & (r < b))
        assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / r.size)


def test_weights_positive_and_points_separated():
    knot = make_knot("spun", 4)
    cfg, w = sample(3, 2, 4, knot, ProposalSpec(), np.random.default_rng(4), size=5000)
    assert np.all(w > 0) and np.all(np.isfinite(w))
    sampler = ConfigurationSampler(3, 2, 4, knot)
    assert sampler.min_separation(cfg).min() >= 1e-9


def test_deterministic_replay():
    knot = make_knot("bump", 5)
    spec = ProposalSpec(mode="stratified")
    a, wa = sample(2, 1, 5, knot, spec, np.random.default_rng(42), size=1000)
    b, wb = sample(2, 1, 5, knot, spec, np.random.default_rng(42), size=1000)
    np.testing.assert_array_equal(a.xs, b.xs)
    np.testing.assert_array_equal(a.ys, b.ys)
    np.testing.assert_array_equal(wa, wb)


def test_antithetic_pairs_reflect_offsets():
    sampler = ConfigurationSampler(1, 0, 4, None, ProposalSpec(core_weight=0.0))
    cfg = sampler.draw(np.random.default_rng(5), 10, antithetic=True)
    np.testing.assert_allclose(cfg.xs[0::2], -cfg.xs[1::2])


def test_degenerate_proposal_is_an_error(monkeypatch):
    import longknot.configspace as cs

    class Collapsed(ConfigurationSampler):
        def draw(self, rng, n, antithetic=False):
            return Configuration(np.zeros((n, 2, 2)), np.zeros((n, 0, 4)), 4)

    monkeypatch.setattr(cs, "ConfigurationSampler", Collapsed)
    with pytest.raises(DegenerateProposalError):
        cs.sample(2, 0, 4, None, ProposalSpec(), np.random.default_rng(0), size=3)


def test_spec_validation():
    with pytest.raises(ValueError):
        ProposalSpec(scale=-1.0)
    with pytest.raises(KeyError):
        ProposalSpec(mode="vegas")
    with pytest.raises(ValueError):
        ProposalSpec(core_weight=1.0)
    with pytest.raises(ValueError):
        ProposalSpec(tail_exponent=4.0).resolve(4, None)


def test_project_pair_cases():
    knot = make_knot("bump", 4)
    xs = np.array([[0.1, 0.2], [-0.3, 0.4]])
    ys = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, 0.5, -1.0, 1.5]])
    cfg = Configuration.single(xs, ys, m=4)
    flat = make_knot("flat", 4)
    a, b = project_pair(cfg, 1, 2, flat)
    np.testing.assert_array_equal(a[0], sigma(xs[0], 4))
    np.testing.assert_array_equal(b[0], sigma(xs[1], 4))
    a, b = project_pair(cfg, 2, 3, knot)
    np.testing.assert_allclose(a[0], eval_knot(knot, xs[1]))
    np.testing.assert_array_equal(b[0], ys[0])
    a, b = project_pair(cfg, 4, 1, knot)
    np.testing.assert_array_equal(a[0], ys[1])
    np.testing.assert_allclose(b[0], eval_knot(knot, xs[0]))
    a, b = project_pair(cfg, 1, 2)
    np.testing.assert_array_equal(a[0], xs[0])
    with pytest.raises(ValueError):
        project_pair(cfg, 1, 3)
    with pytest.raises(ValueError):
        project_pair(cfg, 2, 2, knot)


def test_permuted_relabels_points():
    rng = np.random.default_rng(6)
    cfg = Configuration(rng.normal(size=(4, 3, 2)), rng.normal(size=(4, 2, 4)), 4)
    p = cfg.permuted({1: 3, 3: 1, 4: 5, 5: 4})
    np.testing.assert_array_equal(p.xs[:, 0], cfg.xs[:, 2])
    np.testing.assert_array_equal(p.xs[:, 1], cfg.xs[:, 1])
    np.testing.assert_array_equal(p.ys[:, 0], cfg.ys[:, 1])
    with pytest.raises(ValueError):
        cfg.permuted({1: 4, 4: 1})


def test_probe_configurations_in_box():
    knot = make_knot("bump", 5)
    cfg = probe_configurations(3, 2, 5, knot, np.random.default_rng(7), 500)
    assert cfg.size == 500
    assert np.abs(cfg.xs).max() <= 4.0 and np.abs(cfg.ys).max() <= 4.0
    assert ConfigurationSampler(3, 2, 5, knot).min_separation(cfg).min() >= 0.05
