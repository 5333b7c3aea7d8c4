import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longknot.exterior import (
    AltForm,
    pullback,
    sphere_form,
    sphere_volume,
    sphere_volume_form,
    wedge,
    wedge_all,
)


def random_form(rng, dim, degree, density=1.0):
    coeffs = {}
    for key in itertools.combinations(range(dim), degree):
        if rng.random() < density:
            coeffs[key] = rng.normal()
    return AltForm(dim, degree, coeffs)


def brute_det(vectors):
    """Leibniz permutation sum."""
    n = len(vectors)
    total = 0.0
    for perm in itertools.permutations(range(n)):
        sign = 1
        for i, j in itertools.combinations(range(n), 2):
            if perm[i] > perm[j]:
                sign = -sign
        total += sign * math.prod(vectors[i][perm[i]] for i in range(n))
    return total


def test_basis_wedge():
    f = wedge(AltForm.basis(3, 0), AltForm.basis(3, 1))
    assert f.coeffs == {(0, 1): 1.0}
    g = wedge(AltForm.basis(3, 1), AltForm.basis(3, 0))
    assert g.coeffs == {(0, 1): -1.0}


def test_basis_repeated_index_is_zero():
    assert AltForm.basis(4, 2, 2).coeffs == {}


def test_key_validation():
    with pytest.raises(ValueError):
        AltForm(3, 2, {(1, 0): 1.0})
    with pytest.raises(ValueError):
        AltForm(3, 1, {(3,): 1.0})
    with pytest.raises(ValueError):
        AltForm(3, 2, {(0,): 1.0})


def test_degree_overflow_gives_zero():
    a = random_form(np.random.default_rng(0), 3, 2)
    assert wedge(a, a).coeffs == {}
    assert wedge(a, a).degree == 4


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        wedge(AltForm.basis(3, 0), AltForm.basis(4, 0))


@pytest.mark.parametrize("seed", range(5))
def test_top_wedge_of_one_forms_is_determinant(seed):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(4, 4))
    top = wedge_all(AltForm.one_form(v) for v in vecs).top_coefficient()
    assert top == pytest.approx(brute_det(vecs.tolist()), rel=1e-12)


def test_one_form_batched():
    rng = np.random.default_rng(1)
    vecs = rng.normal(size=(7, 3, 3))
    top = wedge_all(AltForm.one_form(vecs[:, k]) for k in range(3)).top_coefficient()
    np.testing.assert_allclose(top, np.linalg.det(vecs), rtol=1e-12)


dims = st.integers(min_value=2, max_value=6)


@settings(max_examples=40, deadline=None)
@given(dims, st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**31))
def test_graded_commutativity(dim, p, q, seed):
    rng = np.random.default_rng(seed)
    a = random_form(rng, dim, min(p, dim))
    b = random_form(rng, dim, min(q, dim))
    sign = (-1) ** (a.degree * b.degree)
    assert wedge(a, b).allclose(wedge(b, a).scale(sign))


@settings(max_examples=30, deadline=None)
@given(dims, st.integers(0, 2**31))
def test_associative_and_bilinear(dim, seed):
    rng = np.random.default_rng(seed)
    a, a2 = random_form(rng, dim, 1), random_form(rng, dim, 1)
    b = random_form(rng, dim, min(2, dim))
    c = random_form(rng, dim, 1)
    assert wedge(wedge(a, b), c).allclose(wedge(a, wedge(b, c)))
    lhs = wedge((a.scale(2.0) + a2), b)
    rhs = wedge(a, b).scale(2.0) + wedge(a2, b)
    assert lhs.allclose(rhs)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_odd_form_squares_to_zero(dim, seed):
    a = random_form(np.random.default_rng(seed), dim, 1)
    assert wedge(a, a).max_abs() == 0.0


def test_sphere_volume_values():
    assert sphere_volume(2) == pytest.approx(2 * math.pi)
    assert sphere_volume(3) == pytest.approx(4 * math.pi)
    assert sphere_volume(4) == pytest.approx(2 * math.pi**2)
    with pytest.raises(ValueError):
        sphere_volume(0)


def test_circle_form():
    assert sphere_volume_form([1.0, 0.0], [[0.0, 1.0]]) == pytest.approx(1 / (2 * math.pi))


def test_sphere_volume_form_rejects_bad_input():
    with pytest.raises(ValueError):
        sphere_volume_form([1.0, 1.0], [[0.0, 1.0]])
    with pytest.raises(ValueError):
        sphere_volume_form([1.0, 0.0, 0.0], [[0.0, 1.0, 0.0]])


@pytest.mark.parametrize("n", [3, 4, 5])
def test_antipodal_parity(n):
    rng = np.random.default_rng(n)
    u = rng.normal(size=n)
    u /= np.linalg.norm(u)
    t = rng.normal(size=(n - 1, n))
    assert sphere_volume_form(-u, -t) == pytest.approx((-1) ** n * sphere_volume_form(u, t), rel=1e-12)


def test_tangent_component_along_u_drops_out():
    rng = np.random.default_rng(3)
    u = rng.normal(size=4)
    u /= np.linalg.norm(u)
    t = rng.normal(size=(3, 4))
    shifted = t + np.outer(rng.normal(size=3), u)
    assert sphere_volume_form(u, shifted) == pytest.approx(sphere_volume_form(u, t), rel=1e-12)


def _sphere_integral_s2(n_theta=64, n_phi=128):
    nodes, w = np.polynomial.legendre.leggauss(n_theta)
    th = 0.5 * np.pi * (nodes + 1)
    wt = 0.5 * np.pi * w
    ph = 2 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(th, ph, indexing="ij")
    u = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1)
    d_th = np.stack([np.cos(T) * np.cos(P), np.cos(T) * np.sin(P), -np.sin(T)], axis=-1)
    d_ph = np.stack([-np.sin(T) * np.sin(P), np.sin(T) * np.cos(P), np.zeros_like(T)], axis=-1)
    vals = sphere_volume_form(u, np.stack([d_th, d_ph], axis=-2))
    return float(np.sum(vals * wt[:, None]) * 2 * np.pi / n_phi)


def test_sphere_form_integrates_to_one_n3():
    assert _sphere_integral_s2() == pytest.approx(1.0, abs=1e-6)


def test_sphere_form_integrates_to_one_circle():
    s = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    u = np.stack([np.cos(s), np.sin(s)], axis=-1)
    t = np.stack([-np.sin(s), np.cos(s)], axis=-1)[:, None, :]
    assert np.sum(sphere_volume_form(u, t)) * 2 * np.pi / 200 == pytest.approx(1.0, abs=1e-12)


def test_sphere_form_matches_volume_form():
    rng = np.random.default_rng(5)
    u = rng.normal(size=5)
    u /= np.linalg.norm(u)
    t = rng.normal(size=(4, 5))
    assert sphere_form(u).evaluate(t) == pytest.approx(sphere_volume_form(u, t), rel=1e-12)


def test_pullback_identity_and_zero():
    rng = np.random.default_rng(6)
    w = random_form(rng, 4, 2)
    assert pullback(np.eye(4), w).allclose(w)
    assert pullback(np.zeros((4, 5)), w).max_abs() == 0.0


def test_pullback_shape_mismatch():
    with pytest.raises(ValueError):
        pullback(np.eye(3), random_form(np.random.default_rng(0), 4, 2))


def test_pullback_against_minor_expansion():
    rng = np.random.default_rng(7)
    jac = rng.normal(size=(4, 5))
    w = random_form(rng, 4, 2)
    got = pullback(jac, w)
    for cols in itertools.combinations(range(5), 2):
        expected = sum(c * np.linalg.det(jac[np.ix_(rows, cols)]) for rows, c in w.coeffs.items())
        assert got[cols] == pytest.approx(expected, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_pullback_functorial(seed):
    rng = np.random.default_rng(seed)
    j1 = rng.normal(size=(4, 3))
    j2 = rng.normal(size=(5, 4))
    w = random_form(rng, 5, 2)
    assert pullback(j2 @ j1, w).allclose(pullback(j1, pullback(j2, w)))


@pytest.mark.parametrize("seed", range(3))
def test_pullback_commutes_with_wedge(seed):
    rng = np.random.default_rng(seed)
    jac = rng.normal(size=(5, 6))
    a, b = random_form(rng, 5, 1), random_form(rng, 5, 2)
    assert pullback(jac, wedge(a, b)).allclose(wedge(pullback(jac, a), pullback(jac, b)))


def test_evaluate_degree_zero_and_top():
    assert AltForm.constant(3, 2.5).evaluate(None) == 2.5
    rng = np.random.default_rng(8)
    vecs = rng.normal(size=(3, 3))
    vol = AltForm.basis(3, 0, 1, 2)
    assert vol.evaluate(vecs) == pytest.approx(np.linalg.det(vecs))
