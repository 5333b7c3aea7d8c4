import math

import numpy as np
import pytest
from scipy.linalg import expm

from longknot.geometry import IsotopyPath, LoopCurve, make_knot
from longknot.invariants import (
    PolynomialIntegrand,
    ProximityError,
    alternating_sum,
    cyclic_sum,
    dtheta1_probe,
    expand,
    knot_loop_distance,
    linking_number,
    mixed_expectation,
    term_integrands,
    theta1,
    theta2,
    theta3,
)
from longknot.configspace import probe_configurations
from longknot.diagrams import DiagramDegreeError


def within(est, target, k=3.0):
    return abs(est.value - target) <= k * est.stderr


# --- linking number ---------------------------------------------------------------

MERIDIANS = [
    LoopCurve.meridian(4, 1.0),
    LoopCurve.meridian(4, 0.5),
    LoopCurve.meridian(4, 2.0, at=[0.7, -0.3]),
    LoopCurve.circle([1.0, 1.0, 0.0, 0.0], 1.5, [0, 0, 1, 0], [0, 0, 0, 1]),
    LoopCurve.smoothed_polyline([[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, -1, 0], [0, 0, 0, -1]] * 1, n_modes=1),
]


@pytest.mark.parametrize("loop", MERIDIANS, ids=["unit", "small", "shifted", "circle", "polyline"])
def test_lk_quantized_on_meridian_variants(loop):
    est = linking_number(make_knot("flat", 4), loop, n=100_000, seed=11)
    assert within(est, round(est.value))
    assert round(est.value) == 1


def test_lk_sign_convention_on_bump_knot():
    est = linking_number(make_knot("bump", 4), LoopCurve.meridian(4, 3.0, at=[2.5, 0.0]), n=100_000, seed=2)
    assert within(est, 1.0)


def test_lk_reversal_negates_exactly():
    flat = make_knot("flat", 4)
    loop = LoopCurve.meridian(4, 1.0)
    a = linking_number(flat, loop, n=20_000, seed=5)
    b = linking_number(flat, loop.reversed(), n=20_000, seed=5)
    assert b.value == -a.value and b.stderr == a.stderr


def test_lk_far_loop_is_zero():
    c = np.zeros(4)
    c[2] = 10.0
    loop = LoopCurve.circle(c, 1.0, [0, 0, 1, 0], [0, 0, 0, 1])
    assert within(linking_number(make_knot("flat", 4), loop, n=100_000, seed=3), 0.0)


def test_proximity_rejected():
    # a circle inside the flat knot's image
    loop = LoopCurve.circle([0, 0, 0, 0], 1.0, [1, 0, 0, 0], [0, 1, 0, 0])
    assert knot_loop_distance(make_knot("flat", 4), loop) < 1e-6
    with pytest.raises(ProximityError):
        linking_number(make_knot("flat", 4), loop, n=1000, seed=0)


def test_distance_of_meridian():
    assert knot_loop_distance(make_knot("flat", 4), LoopCurve.meridian(4, 0.75)) == pytest.approx(0.75, abs=1e-6)


# --- theta invariants ---------------------------------------------------------------

def test_theta1_flat_is_exactly_zero():
    res = theta1(make_knot("flat", 4), n=5000, seed=0)
    assert res.total.value == 0.0 and res.total.stderr == 0.0


def test_theta1_result_structure():
    res = theta1(make_knot("bump", 4), n=4000, seed=1)
    assert res.name == "theta1" and res.m == 4 and len(res.terms) == 1
    assert res.total.value == pytest.approx(sum(t.estimate.value for t in res.terms))
    d = res.to_dict()
    assert d["knot"]["family"] == "bump" and d["terms"][0]["space"] == [2, 0]
    assert theta1(make_knot("bump", 5), n=2000, seed=1).metadata["parity_vanishing"]


def test_theta1_seeds_agree():
    knot = make_knot("bump", 4)
    a, b = theta1(knot, n=50_000, seed=1).total, theta1(knot, n=50_000, seed=2).total
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


def test_theta2_flat_terms_vanish():
    res = theta2(make_knot("flat", 5), n=2000, seed=0)
    assert [t.label for t in res.terms] == ["term1", "term2", "term3"]
    # terms with ambient points vanish only up to roundoff
    assert all(abs(t.estimate.value) <= 1e-12 and t.estimate.stderr <= 1e-12 for t in res.terms)


def test_theta2_total_combines_in_quadrature():
    res = theta2(make_knot("bump", 5), n=3000, seed=4, form="compact")
    assert [t.label for t in res.terms] == ["compact1", "compact2"]
    assert res.total.value == pytest.approx(sum(t.estimate.value for t in res.terms))
    assert res.total.stderr == pytest.approx(math.sqrt(sum(t.estimate.stderr**2 for t in res.terms)))


def test_theta3_flat_terms_vanish():
    res = theta3(make_knot("flat", 4), n=1000, seed=0)
    assert len(res.terms) == 8
    assert all(abs(t.estimate.value) <= 1e-12 for t in res.terms)


def test_form_validation():
    with pytest.raises(ValueError):
        theta2(make_knot("flat", 5), n=1000, seed=0, form="even_compact")
    with pytest.raises(ValueError):
        theta3(make_knot("flat", 4), n=1000, seed=0, form="compact")
    with pytest.raises(KeyError):
        term_integrands("theta4", 4, make_knot("flat", 4))


# --- compact-form algebra -------------------------------------------------------------

def test_cyclic_and_alternating_sums():
    assert cyclic_sum(1, 2, 3) == [(1.0, (1, 2)), (1.0, (2, 3)), (1.0, (3, 1))]
    assert alternating_sum(1, 2, 4, 5) == [(1.0, (1, 2)), (-1.0, (2, 4)), (1.0, (4, 5)), (-1.0, (5, 1))]


def test_expand_multilinear():
    mono = expand(((1, 2),), [[(1.0, (1, 2)), (-1.0, (2, 3))], [(2.0, (3, 1))]], 0.5)
    assert mono == [(1.0, ((1, 2),), ((1, 2), (3, 1))), (-1.0, ((1, 2),), ((2, 3), (3, 1)))]


def test_squared_eta_monomials_dropped():
    knot = make_knot("bump", 5)
    g = PolynomialIntegrand(4, 0, 5, knot, expand(((1, 3), (2, 4)), [cyclic_sum(1, 2, 3, 4)] * 2, 1 / 8))
    assert all(len({frozenset(e) for e in et}) == 2 for _, _, et in g.monomials)
    with pytest.raises(DiagramDegreeError):
        PolynomialIntegrand(4, 0, 5, knot, [(1.0, ((1, 3),), ((1, 2),))])


def test_compact_theta2_flat_annihilation():
    flat = make_knot("flat", 5)
    for _, s, t, g in term_integrands("theta2_compact", 5, flat):
        cfg = probe_configurations(s, t, 5, flat, np.random.default_rng(0), 50)
        assert np.max(np.abs(g(cfg))) <= 1e-12


# --- dΘ₁ probe ------------------------------------------------------------------------

def test_dtheta1_flat_endpoint():
    # rhs needs second derivatives of f_t, which vanish on the flat knot; the
    # central difference carries an O(h^2) truncation term that Richardson removes
    path = IsotopyPath(make_knot("bump", 4))
    lhs, rhs = dtheta1_probe(path, 0.0, n=20_000, seed=3, h=2e-3)
    half, _ = dtheta1_probe(path, 0.0, n=20_000, seed=3, h=1e-3)
    assert rhs.value == 0.0 and rhs.stderr == 0.0
    assert lhs.value / half.value == pytest.approx(4.0, rel=1e-2)
    rich = (4.0 * half.value - lhs.value) / 3.0
    assert abs(rich) <= 3.0 * half.stderr


def test_dtheta1_reversal_negates():
    path = IsotopyPath(make_knot("bump", 4))
    lhs, rhs = dtheta1_probe(path, 0.5, n=4000, seed=8)
    rl, rr = dtheta1_probe(path.reversed(), 0.5, n=4000, seed=8)
    assert rl.value == -lhs.value and rr.value == -rhs.value


# --- mixed expectation --------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 5])
def test_mixed_expectation_trivial_cases(k):
    assert mixed_expectation(0.7, np.zeros((k, k)), 1.3) == k
    assert mixed_expectation(0.0, np.random.default_rng(k).normal(size=(k, k)), 2.0) == k


def test_mixed_expectation_diagonal():
    lam = np.array([0.5, -1.0, 2.0, 3.5])
    got = mixed_expectation(2.0, np.diag(lam), 0.25)
    assert got == pytest.approx(np.sum(np.exp(-0.25 * 2.0 * lam)), abs=1e-10)


def test_mixed_expectation_conjugation_invariant():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(3, 3))
    p = rng.normal(size=(3, 3))
    b = p @ a @ np.linalg.inv(p)
    assert mixed_expectation(1.0, a, 0.3) == pytest.approx(mixed_expectation(1.0, b, 0.3), rel=1e-10)
    assert mixed_expectation(1.0, a, 0.3) == pytest.approx(np.trace(expm(-0.3 * a)).real, rel=1e-12)


def test_mixed_expectation_rejects_non_square():
    with pytest.raises(ValueError):
        mixed_expectation(1.0, np.zeros((2, 3)), 1.0)
