"""Saddle-point postprocessing checks.

Key oracles: any gradient field lies in the kernel of the curl-curl block
(curl grad = 0); a globally polynomial state with matching tangential fluxes
must be reproduced exactly; and element output may depend only on the
face-neighbor patch.
"""

import numpy as np
import pytest

from maxwelldg.constants import EPS0, MU0
from maxwelldg.dg_operator import DGOperator, FieldState
from maxwelldg.mesh import build_structured_cube_mesh, neighbor_patch
from maxwelldg.postprocess import (
    LocalSaddleSystem,
    Postprocessor,
    build_local_system,
    postprocess_element,
    postprocess_state,
)
from maxwelldg.reference_element import (
    build_reference_element,
    eval_modal,
    grad_modal,
    num_nodes,
    volume_quadrature,
)
from maxwelldg.scenarios import cavity_solution

from helpers import consistent_flux_trace, global_polynomial, perturbed_mesh

VAC = (EPS0, MU0)


def test_system_dimensions_k1():
    mesh = build_structured_cube_mesh(1, 1.0, "PEC", VAC)
    op = DGOperator(mesh, 1)
    sys = build_local_system(op, 0)
    # curl-curl block on P_2^3 is 30x30; the pressure space P_3 has 20 modes
    # plus one zero-mean multiplier
    assert sys.n_vector == 30
    assert sys.n_pressure == 20
    assert sys.matrix.shape == (51, 51)
    assert np.abs(sys.matrix - sys.matrix.T).max() < 1e-12 * np.abs(sys.matrix).max()


def test_factorization_solves_random_rhs(rng):
    mesh = build_structured_cube_mesh(1, 1.0, "PEC", VAC)
    op = DGOperator(mesh, 2)
    sys = build_local_system(op, 3)
    r = rng.standard_normal((sys.matrix.shape[0], 2))
    x = sys.solve(r)
    res = np.linalg.norm(sys.matrix @ x - r) / np.linalg.norm(r)
    assert res < 1e-10


@pytest.mark.parametrize("k", [1, 2])
def test_gradient_fields_span_curl_kernel(k, rng):
    mesh = build_structured_cube_mesh(1, 1.0, "PEC", VAC)
    op = DGOperator(mesh, k)
    pp = Postprocessor(op)
    sys = build_local_system(op, 2)
    A = sys.matrix[:3 * pp.n1, :3 * pp.n1]

    rule = volume_quadrature(2 * k + 4)
    g2 = grad_modal(k + 2, rule.points)
    phi1 = eval_modal(k + 1, rule.points)
    q = mesh.inv_jacobians[2]
    for _ in range(5):
        cv = rng.standard_normal(num_nodes(k + 2))
        grad_phys = np.einsum("ad,aqm,m->dq", q, g2, cv)
        coeffs = np.einsum("qi,q,dq->di", phi1, rule.weights, grad_phys).reshape(-1)
        assert np.linalg.norm(A @ coeffs) < 1e-11 * np.linalg.norm(A) * np.linalg.norm(coeffs)


def test_zero_state_maps_to_zero(pec_op_k2):
    st = FieldState(0.0, np.zeros(
        (pec_op_k2.mesh.num_elements, 6, pec_op_k2.ref.num_nodes)))
    out = postprocess_state(st, pec_op_k2)
    assert np.abs(out.e_star).max() == 0.0
    assert np.abs(out.h_star).max() == 0.0


def test_output_shapes(pec_op_k2):
    mesh = pec_op_k2.mesh
    st = FieldState(0.0, np.zeros((mesh.num_elements, 6, pec_op_k2.ref.num_nodes)))
    out = postprocess_state(st, pec_op_k2)
    assert out.e_star.shape == (mesh.num_elements, 3, num_nodes(3))
    assert out.degree == 3
    sub = postprocess_state(st, pec_op_k2, selection=[4, 7])
    assert sub.e_star.shape == (2, 3, num_nodes(3))
    np.testing.assert_array_equal(sub.element_indices, [4, 7])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_polynomial_reproduction_on_perturbed_mesh(k, tmp_path, rng):
    mesh = perturbed_mesh(tmp_path)
    op = DGOperator(mesh, k)
    e_field = global_polynomial(k, rng)
    h_field = global_polynomial(k, rng)
    state = op.project_initial_conditions(e_field, h_field)
    flux = consistent_flux_trace(op, state, e_field, h_field)

    out = postprocess_state(state, op)
    ref1 = build_reference_element(k + 1)
    v0 = mesh.vertices[mesh.elements[:, 0]]
    nodes = v0[:, None, :] + np.einsum("kab,nb->kna", mesh.jacobians, ref1.nodes)
    exact_e = e_field(nodes).transpose(0, 2, 1)
    exact_h = h_field(nodes).transpose(0, 2, 1)
    scale = max(np.abs(exact_e).max(), np.abs(exact_h).max())

    # production path includes boundary fluxes that do not match a generic
    # polynomial, so reproduce through the element path with exact fluxes
    for e in range(mesh.num_elements):
        es, hs = postprocess_element(op, e, state, flux)
        assert np.abs(es - exact_e[e]).max() < 1e-10 * scale
        assert np.abs(hs - exact_h[e]).max() < 1e-10 * scale
    del out


@pytest.mark.parametrize("k", [1, 2])
def test_gradient_moment_constraint(k, tmp_path, rng):
    mesh = perturbed_mesh(tmp_path, seed=9)
    op = DGOperator(mesh, k)
    sol = cavity_solution()
    state = op.project_initial_conditions(
        lambda x: sol.e(0.0, x), lambda x: sol.h(0.6e-9, x))
    out = postprocess_state(state, op)

    rule = volume_quadrature(2 * k + 4)
    g2 = grad_modal(k + 2, rule.points)
    phi_k = op.ref.nodal_values_at(rule.points)
    phi_k1 = build_reference_element(k + 1).nodal_values_at(rule.points)
    worst = 0.0
    for e in range(mesh.num_elements):
        q = mesh.inv_jacobians[e]
        grads = np.einsum("ad,aqm->dqm", q, g2)
        star = np.einsum("qi,ci->cq", phi_k1, out.e_star[e])
        raw = np.einsum("qi,ci->cq", phi_k, state.E[e])
        m_star = np.einsum("cq,q,cqm->m", star, rule.weights, grads)
        m_raw = np.einsum("cq,q,cqm->m", raw, rule.weights, grads)
        denom = max(np.abs(m_raw).max(), 1e-30)
        worst = max(worst, np.abs(m_star - m_raw).max() / denom)
    assert worst < 1e-10


def test_locality_bitwise(pec_op_k2, rng):
    mesh = pec_op_k2.mesh
    shape = (mesh.num_elements, 6, pec_op_k2.ref.num_nodes)
    base = rng.standard_normal(shape)
    target = 11
    patch = neighbor_patch(mesh, target)
    outside = [e for e in range(mesh.num_elements) if e not in patch]
    assert outside, "test mesh too small for a locality check"

    st1 = FieldState(0.0, base.copy())
    out1 = postprocess_state(st1, pec_op_k2, selection=[target])

    perturbed = base.copy()
    perturbed[outside] += rng.standard_normal((len(outside), 6, shape[2]))
    st2 = FieldState(0.0, perturbed)
    out2 = postprocess_state(st2, pec_op_k2, selection=[target])

    assert out1.e_star.tobytes() == out2.e_star.tobytes()
    assert out1.h_star.tobytes() == out2.h_star.tobytes()


def test_one_factorization_serves_both_fields(monkeypatch, rng):
    mesh = build_structured_cube_mesh(1, 1.0, "PEC", VAC)
    op = DGOperator(mesh, 1)
    calls = {"n": 0}
    original = LocalSaddleSystem.__init__

    def counting(self, *args, **kwargs):
        calls["n"] += 1
        original(self, *args, **kwargs)

    monkeypatch.setattr(LocalSaddleSystem, "__init__", counting)
    st = FieldState(0.0, rng.standard_normal((mesh.num_elements, 6, 4)))
    postprocess_element(op, 2, st)
    assert calls["n"] == 1
    # a second postprocessing of the same element reuses the factorization
    postprocess_element(op, 2, st)
    assert calls["n"] == 1


def test_flux_subset_must_cover_element(pec_op_k2, rng):
    mesh = pec_op_k2.mesh
    st = FieldState(0.0, rng.standard_normal(
        (mesh.num_elements, 6, pec_op_k2.ref.num_nodes)))
    flux = pec_op_k2.compute_numerical_fluxes(st, faces=np.array([0, 1]))
    with pytest.raises(ValueError):
        postprocess_element(pec_op_k2, 0, st, flux)
