"""Quadrature and nodal-basis checks against closed-form simplex integrals.

The oracle for every integral is the factorial formula
int over the unit tetrahedron of x^a y^b z^c = a! b! c! / (a+b+c+3)!
(and its 2D analogue on the unit triangle).
"""

import math

import numpy as np
import pytest

from maxwelldg.reference_element import (
    MAX_QUADRATURE_DEGREE,
    build_reference_element,
    embed_face_points,
    eval_modal,
    face_quadrature,
    num_nodes,
    volume_quadrature,
)


def tet_monomial_integral(a, b, c):
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def tri_monomial_integral(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("d", range(0, 15))
def test_volume_quadrature_monomial_exactness(d):
    rule = volume_quadrature(d)
    assert abs(rule.weights.sum() - 1.0 / 6.0) < 1e-14
    x, y, z = rule.points.T
    for a in range(d + 1):
        for b in range(d + 1 - a):
            for c in range(d + 1 - a - b):
                val = float(np.dot(rule.weights, x**a * y**b * z**c))
                exact = tet_monomial_integral(a, b, c)
                assert abs(val - exact) <= 1e-13 * exact + 1e-16


@pytest.mark.parametrize("d", range(0, 15))
def test_face_quadrature_monomial_exactness(d):
    rule = face_quadrature(d)
    assert abs(rule.weights.sum() - 0.5) < 1e-14
    x, y = rule.points.T
    for a in range(d + 1):
        for b in range(d + 1 - a):
            val = float(np.dot(rule.weights, x**a * y**b))
            exact = tri_monomial_integral(a, b)
            assert abs(val - exact) <= 1e-13 * exact + 1e-16


def test_degree_zero_rules_are_centroid_rules():
    vol = volume_quadrature(0)
    assert vol.points.shape == (1, 3)
    np.testing.assert_allclose(vol.points[0], [0.25, 0.25, 0.25], atol=1e-15)
    np.testing.assert_allclose(vol.weights, [1.0 / 6.0], atol=1e-16)
    fac = face_quadrature(0)
    assert fac.points.shape == (1, 2)
    np.testing.assert_allclose(fac.points[0], [1.0 / 3.0, 1.0 / 3.0], atol=1e-15)
    np.testing.assert_allclose(fac.weights, [0.5], atol=1e-16)


def test_quadrature_spot_values():
    # int xyz = 1/720, int x^2 = 1/60 on the tetrahedron
    r = volume_quadrature(3)
    x, y, z = r.points.T
    assert abs(np.dot(r.weights, x * y * z) - 1.0 / 720.0) < 1e-16
    assert abs(np.dot(r.weights, x**2) - 1.0 / 60.0) < 1e-15
    # int xy = 1/24, int x^3 = 1/20 on the triangle
    r2 = face_quadrature(3)
    u, v = r2.points.T
    assert abs(np.dot(r2.weights, u * v) - 1.0 / 24.0) < 1e-16
    assert abs(np.dot(r2.weights, u**3) - 1.0 / 20.0) < 1e-16


def test_quadrature_degree_out_of_range():
    with pytest.raises(ValueError):
        volume_quadrature(MAX_QUADRATURE_DEGREE + 1)
    with pytest.raises(ValueError):
        face_quadrature(-1)


def test_node_counts():
    assert num_nodes(2) == 10
    assert num_nodes(3) == 20
    assert build_reference_element(2).num_nodes == 10
    assert build_reference_element(3).num_nodes == 20


def test_unsupported_degree_rejected():
    with pytest.raises(ValueError):
        build_reference_element(0)
    with pytest.raises(ValueError):
        build_reference_element(7)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_nodal_basis_is_interpolatory(k):
    el = build_reference_element(k)
    ident = el.nodal_values_at(el.nodes)
    assert np.abs(ident - np.eye(el.num_nodes)).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_mass_matrix_spd(k):
    el = build_reference_element(k)
    assert np.abs(el.mass - el.mass.T).max() < 1e-15
    assert np.linalg.eigvalsh(el.mass).min() > 0


def test_mass_matrix_k1_against_analytic_integrals():
    # degree-1 nodal basis on the unit tet is barycentric: 1-x-y-z, x, y, z;
    # products integrate via the factorial formula
    el = build_reference_element(1)
    lam = [
        lambda p: 1 - p[:, 0] - p[:, 1] - p[:, 2],
        lambda p: p[:, 0],
        lambda p: p[:, 1],
        lambda p: p[:, 2],
    ]
    # identify which node is which vertex, then compare entries
    order = [int(np.argmax([f(el.nodes[i:i + 1])[0] for f in lam]))
             for i in range(4)]
    diag = tet_monomial_integral(2, 0, 0)        # 1/60
    off = tet_monomial_integral(1, 1, 0)         # 1/120
    for i in range(4):
        for j in range(4):
            expected = diag if order[i] == order[j] else off
            assert abs(el.mass[i, j] - expected) < 1e-14


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_derivative_operators_exact_on_monomials(k):
    el = build_reference_element(k)
    x, y, z = el.nodes.T
    for a in range(k + 1):
        for b in range(k + 1 - a):
            for c in range(k + 1 - a - b):
                f = x**a * y**b * z**c
                expect = [
                    a * x ** max(a - 1, 0) * y**b * z**c if a else np.zeros_like(f),
                    b * x**a * y ** max(b - 1, 0) * z**c if b else np.zeros_like(f),
                    c * x**a * y**b * z ** max(c - 1, 0) if c else np.zeros_like(f),
                ]
                for axis in range(3):
                    got = el.d_ops[axis] @ f
                    assert np.abs(got - expect[axis]).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_quadrature_integral_matches_mass_form(k, rng):
    # for nodal values p, 1^T M p equals the quadrature integral of the
    # interpolant
    el = build_reference_element(k)
    p = rng.standard_normal(el.num_nodes)
    via_mass = np.ones(el.num_nodes) @ el.mass @ p
    via_quad = np.dot(el.volume_rule.weights, el.basis_at_quad @ p)
    assert abs(via_mass - via_quad) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_face_interpolation_matches_trace(k, rng):
    el = build_reference_element(k)
    coeffs = rng.standard_normal(el.num_nodes)
    for f in range(4):
        pts3 = embed_face_points(f, el.face_rule.points, 0)
        exact = el.nodal_values_at(pts3) @ coeffs
        got = el.face_interp[f] @ coeffs
        assert np.abs(got - exact).max() < 1e-12


def test_face_embeddings_cover_face_planes():
    # face f lies opposite vertex f: face 0 on x+y+z=1, face i>0 on the
    # coordinate plane normal to axis i-1
    rule = face_quadrature(4)
    assert np.abs(embed_face_points(0, rule.points, 0).sum(axis=1) - 1.0).max() < 1e-14
    assert np.abs(embed_face_points(1, rule.points, 0)[:, 0]).max() < 1e-15
    assert np.abs(embed_face_points(2, rule.points, 0)[:, 1]).max() < 1e-15
    assert np.abs(embed_face_points(3, rule.points, 0)[:, 2]).max() < 1e-15
    # any vertex permutation parametrizes the same face, so face integrals of
    # a polynomial agree across permutations
    def face_integral(perm):
        pts = embed_face_points(0, rule.points, perm)
        vals = pts[:, 0] ** 2 * pts[:, 1] + 0.3 * pts[:, 2]
        return float(np.dot(rule.weights, vals))

    base = face_integral(0)
    for p in range(1, 6):
        assert abs(face_integral(p) - base) < 1e-14


def test_modal_basis_orthonormal():
    for k in (2, 4):
        rule = volume_quadrature(2 * k)
        phi = eval_modal(k, rule.points)
        gram = phi.T @ (rule.weights[:, None] * phi)
        assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-13
