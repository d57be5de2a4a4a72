"""Element-local postprocessing lifting the fields one polynomial degree.

For every element, the postprocessed field u* in P_{k+1}^3 solves the
saddle-point system

    (curl u*, curl w) + (grad p, w) = (curl u_h, curl w)
                                      + <u_h^t - u_hat^t, n x curl w>_dK
    (u*, grad v)                    = (u_h, grad v)

with a pressure p in P_{k+2} pinned to zero mean through a scalar
multiplier.  The same factorized matrix serves both the electric and the
magnetic solve of an element, and the result on an element depends only on
the element itself and its face neighbors (through the numerical fluxes).

Assembly uses modal bases and quadrature exact for every integrand; the
returned coefficients are nodal in P_{k+1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack as _lapack

from maxwelldg.dg_operator import DGOperator, FieldState, FluxTrace, _cross, _tangential
from maxwelldg.reference_element import (
    build_reference_element,
    embed_face_points,
    eval_modal,
    face_quadrature,
    grad_modal,
    num_nodes,
    volume_quadrature,
)


@dataclass
class PostprocessedState:
    """Nodal coefficients of the lifted fields in P_{k+1} per element.

    `element_indices` is None when every element was processed; otherwise it
    lists the mesh elements the rows correspond to.
    """

    t: float
    degree: int
    e_star: np.ndarray   # (ne, 3, Np(k+1))
    h_star: np.ndarray
    element_indices: np.ndarray | None = None


class LocalSaddleSystem:
    """Assembled and factorized saddle-point matrix of one element.

    The factorization (symmetric indefinite, Bunch-Kaufman pivoting) is
    computed once and reused for every right-hand side, in particular for
    both the E and the H solve.
    """

    def __init__(self, element: int, matrix: np.ndarray, n_vector: int, n_pressure: int):
        self.element = element
        self.matrix = matrix
        self.n_vector = n_vector
        self.n_pressure = n_pressure
        ldu, ipiv, info = _lapack.dsytrf(matrix, lower=1)
        if info != 0:
            raise RuntimeError(
                f"saddle-point factorization failed on element {element} (info={info})")
        self._ldu = ldu
        self._ipiv = ipiv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        one_dim = rhs.ndim == 1
        x, info = _lapack.dsytrs(self._ldu, self._ipiv, rhs.reshape(rhs.shape[0], -1), lower=1)
        if info != 0:
            raise RuntimeError(f"saddle-point solve failed (info={info})")
        return x[:, 0] if one_dim else x


class Postprocessor:
    """Precomputed tables and cached factorizations for one DG operator."""

    def __init__(self, op: DGOperator):
        self.op = op
        self.mesh = op.mesh
        k = op.degree
        self.k1, self.k2 = k + 1, k + 2
        self.n1, self.n2 = num_nodes(self.k1), num_nodes(self.k2)
        self.n_sys = 3 * self.n1 + self.n2 + 1
        self.rule_degree = 2 * k + 4

        rule = volume_quadrature(self.rule_degree)
        w = rule.weights
        self._g1 = grad_modal(self.k1, rule.points)          # (3, nq, n1)
        self._g2 = grad_modal(self.k2, rule.points)
        phi1 = eval_modal(self.k1, rule.points)
        phi2 = eval_modal(self.k2, rule.points)
        self._phik = op.ref.nodal_values_at(rule.points)
        self._gk = op.ref.nodal_grads_at(rule.points)
        self._wvol = w

        # curl-curl and gradient-coupling blocks on the reference element
        self._curl_block = np.einsum("aqi,q,bqj->abij", self._g1, w, self._g1)
        self._grad_block = np.einsum("qi,q,aqm->aim", phi1, w, self._g2)
        self._mean_ref = w @ phi2

        frule = face_quadrature(self.rule_degree)
        self._wface = frule.weights
        self._g1f = {}
        for f in range(4):
            for p in range(6):
                pts = embed_face_points(f, frule.points, p)
                self._g1f[(f, p)] = grad_modal(self.k1, pts)

        # modal -> nodal conversion for the lifted space
        self._v1 = build_reference_element(self.k1).vandermonde

        mesh = self.mesh
        self.elem_faces = np.empty((mesh.num_elements, 4), dtype=int)
        for fi, face in enumerate(mesh.faces):
            self.elem_faces[face.elem_minus, face.local_minus] = fi
            if face.elem_plus is not None:
                self.elem_faces[face.elem_plus, face.local_plus] = fi

        self._systems = {}

    # -- assembly -----------------------------------------------------------

    def assemble_matrices(self, elems: np.ndarray) -> np.ndarray:
        """Saddle-point matrices of the selected elements, (ne, n, n)."""
        W = self.op._curl_weights[elems]                 # (e, a, d, c)
        det = self.mesh.det_jacobians[elems]
        q = self.mesh.inv_jacobians[elems]
        ne, n1, n2 = elems.size, self.n1, self.n2

        curl_met = np.einsum("eadc,ebdf->eacbf", W, W)
        A = np.einsum("eacbf,abij->ecifj", curl_met, self._curl_block)
        A = A.reshape(ne, 3 * n1, 3 * n1) * det[:, None, None]
        C = np.einsum("eac,aim->ecim", q, self._grad_block)
        C = C.reshape(ne, 3 * n1, n2) * det[:, None, None]
        mean = det[:, None] * self._mean_ref[None, :]

        n = self.n_sys
        sys = np.zeros((ne, n, n))
        nv = 3 * n1
        sys[:, :nv, :nv] = A
        sys[:, :nv, nv:nv + n2] = C
        sys[:, nv:nv + n2, :nv] = C.transpose(0, 2, 1)
        sys[:, nv:nv + n2, nv + n2] = mean
        sys[:, nv + n2, nv:nv + n2] = mean
        return sys

    def _volume_rhs(self, elems: np.ndarray, coeffs: np.ndarray):
        """(curl u_h, curl w) and (u_h, grad v) moments; coeffs (ne, 3, Npk)."""
        W = self.op._curl_weights[elems]
        det = self.mesh.det_jacobians[elems]
        q = self.mesh.inv_jacobians[elems]

        grad_u = np.einsum("aqj,edj->eadq", self._gk, coeffs)
        curl_u = np.einsum("eagc,eacq->egq", W, grad_u)
        t_block = np.einsum("egq,q,aqi->eagi", curl_u, self._wvol, self._g1)
        r1 = np.einsum("eagc,eagi->eci", W, t_block) * det[:, None, None]

        vals = np.einsum("qj,edj->edq", self._phik, coeffs)
        u_block = np.einsum("edq,q,aqm->eadm", vals, self._wvol, self._g2)
        r2 = np.einsum("ead,eadm->em", q, u_block) * det[:, None]
        return r1.reshape(elems.size, 3 * self.n1), r2

    def _boundary_rhs(self, elems: np.ndarray, flux: FluxTrace):
        """<u^t - u_hat^t, n x curl w>_dK moments for E and H, (ne, 3*n1)."""
        mesh, op = self.mesh, self.op
        pos_flux = np.full(len(mesh.faces), -1)
        pos_flux[flux.face_indices] = np.arange(flux.face_indices.size)
        pos_out = np.full(mesh.num_elements, -1)
        pos_out[elems] = np.arange(elems.size)

        needed = self.elem_faces[elems].ravel()
        if np.any(pos_flux[needed] < 0):
            raise ValueError("flux trace does not cover all faces of the selection")

        e_hat = flux.e_hat.transpose(0, 2, 1)      # (rows, 3, nq)
        h_hat = flux.h_hat.transpose(0, 2, 1)
        out_e = np.zeros((elems.size, 3, self.n1))
        out_h = np.zeros((elems.size, 3, self.n1))

        def accumulate(face_ids, elem_ids, lf, perm, sign):
            rows = pos_flux[face_ids]
            targets = pos_out[elem_ids]
            n = op.f_normal[face_ids][:, :, None] * sign
            trace = flux.trace_minus[rows] if sign > 0 else flux.trace_plus[rows]
            area = op.f_area[face_ids]
            g1f = self._g1f[(lf, perm)]
            W = op._curl_weights[elem_ids]
            for comp, out in ((slice(0, 3), out_e), (slice(3, 6), out_h)):
                delta = _tangential(trace[:, comp], n) - (e_hat[rows] if comp.start == 0 else h_hat[rows])
                y = _cross(delta, n)
                z = np.einsum("fdq,q,aqi->fadi", y, self._wface, g1f)
                contrib = np.einsum("eadc,eadi->eci", W, z) * (2.0 * area)[:, None, None]
                np.add.at(out, targets, contrib)

        in_sel = np.zeros(mesh.num_elements, dtype=bool)
        in_sel[elems] = True
        for lf in range(4):
            g = op.minus_groups[lf]
            g = g[in_sel[op.f_em[g]]]
            if g.size:
                accumulate(g, op.f_em[g], lf, 0, +1.0)
        for (lf, p), g in op.plus_groups.items():
            g = g[in_sel[op.f_ep[g]]]
            if g.size:
                accumulate(g, op.f_ep[g], lf, p, -1.0)
        return out_e.reshape(elems.size, -1), out_h.reshape(elems.size, -1)

    def right_hand_sides(self, elems: np.ndarray, state: FieldState, flux: FluxTrace):
        """Stacked saddle RHS for both fields, (ne, n_sys, 2)."""
        r1e, r2e = self._volume_rhs(elems, state.E[elems])
        r1h, r2h = self._volume_rhs(elems, state.H[elems])
        be, bh = self._boundary_rhs(elems, flux)
        n, nv, n2 = self.n_sys, 3 * self.n1, self.n2
        rhs = np.zeros((elems.size, n, 2))
        rhs[:, :nv, 0] = r1e + be
        rhs[:, :nv, 1] = r1h + bh
        rhs[:, nv:nv + n2, 0] = r2e
        rhs[:, nv:nv + n2, 1] = r2h
        return rhs

    def _to_nodal(self, solution: np.ndarray, ne: int) -> tuple:
        """Modal saddle solutions (ne, n_sys, 2) -> nodal (ne, 3, Np1) pair."""
        ue = solution[:, :3 * self.n1, 0].reshape(ne, 3, self.n1)
        uh = solution[:, :3 * self.n1, 1].reshape(ne, 3, self.n1)
        return ue @ self._v1.T, uh @ self._v1.T

    # -- public paths ---------------------------------------------------------

    def local_system(self, element: int) -> LocalSaddleSystem:
        if element not in self._systems:
            mat = self.assemble_matrices(np.array([element]))[0]
            self._systems[element] = LocalSaddleSystem(
                element, mat, 3 * self.n1, self.n2)
        return self._systems[element]

    def element(self, element: int, state: FieldState,
                flux: FluxTrace | None = None) -> tuple:
        """Lifted (E*, H*) nodal coefficients of one element, (3, Np1) each."""
        elems = np.array([element])
        if flux is None:
            flux = self.op.compute_numerical_fluxes(
                state, rule_degree=self.rule_degree,
                faces=np.unique(self.elem_faces[element]))
        rhs = self.right_hand_sides(elems, state, flux)
        sol = self.local_system(element).solve(rhs[0])
        e_star, h_star = self._to_nodal(sol[None, :, :], 1)
        return e_star[0], h_star[0]

    def process(self, state: FieldState, selection=None) -> PostprocessedState:
        mesh = self.mesh
        if selection is None:
            elems = np.arange(mesh.num_elements)
        else:
            elems = np.unique(np.asarray(selection, dtype=int))
            if elems.size and (elems[0] < 0 or elems[-1] >= mesh.num_elements):
                raise IndexError("selection out of range")

        if selection is None:
            flux = self.op.compute_numerical_fluxes(state, rule_degree=self.rule_degree)
        else:
            faces = np.unique(self.elem_faces[elems].ravel())
            flux = self.op.compute_numerical_fluxes(
                state, rule_degree=self.rule_degree, faces=faces)

        e_star = np.empty((elems.size, 3, self.n1))
        h_star = np.empty((elems.size, 3, self.n1))
        if selection is None:
            chunk = max(1, int(6.0e6 / self.n_sys**2))
            for lo in range(0, elems.size, chunk):
                part = elems[lo:lo + chunk]
                sys = self.assemble_matrices(part)
                rhs = self.right_hand_sides(part, state, flux)
                sol = np.linalg.solve(sys, rhs)
                e_star[lo:lo + part.size], h_star[lo:lo + part.size] = \
                    self._to_nodal(sol, part.size)
        else:
            for row, e in enumerate(elems):
                rhs = self.right_hand_sides(np.array([e]), state, flux)
                sol = self.local_system(int(e)).solve(rhs[0])
                e_star[row], h_star[row] = (x[0] for x in self._to_nodal(sol[None], 1))

        return PostprocessedState(
            t=state.t, degree=self.k1, e_star=e_star, h_star=h_star,
            element_indices=None if selection is None else elems)


def _postprocessor_of(op: DGOperator) -> Postprocessor:
    pp = getattr(op, "_postprocessor", None)
    if pp is None:
        pp = Postprocessor(op)
        op._postprocessor = pp
    return pp


def build_local_system(op: DGOperator, element: int) -> LocalSaddleSystem:
    """Assemble and factor the saddle-point system of one element."""
    return _postprocessor_of(op).local_system(element)


def postprocess_element(op: DGOperator, element: int, state: FieldState,
                        fluxes: FluxTrace | None = None) -> tuple:
    """Lift one element; `fluxes` must cover the element's four faces (they
    are computed from the state when omitted)."""
    return _postprocessor_of(op).element(element, state, fluxes)


def postprocess_state(state: FieldState, op: DGOperator,
                      selection=None) -> PostprocessedState:
    """Lift all (or the selected) elements of a state."""
    return _postprocessor_of(op).process(state, selection)
