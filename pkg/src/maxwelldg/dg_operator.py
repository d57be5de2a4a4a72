"""Semi-discrete DG operator for the time-domain Maxwell system.

Fields are piecewise polynomial; coupling between elements happens only
through impedance-weighted upwind numerical fluxes on faces.  The operator
evaluates the map (t, U) -> dU/dt of the reduced ODE system matrix-free,
element by element, with block-diagonal mass inversion.

All volume and face integrands involving discrete fields are polynomial and
integrated exactly; boundary data enters pointwise at face quadrature nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from maxwelldg import mesh as meshmod
from maxwelldg.reference_element import build_reference_element, face_quadrature

_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


def _cross(a, b):
    """Cross product along axis 1 of (n, 3, q) arrays (b may broadcast)."""
    return np.stack([
        a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
        a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
        a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
    ], axis=1)


def _tangential(v, n):
    """v minus its component along the unit normal n, axis 1 layout."""
    vn = v[:, 0] * n[:, 0] + v[:, 1] * n[:, 1] + v[:, 2] * n[:, 2]
    return v - vn[:, None, :] * n


@dataclass
class FieldState:
    """Nodal coefficients of the six field components at one time instant.

    `data` has shape (num_elements, 6, nodes_per_element); the leading three
    component slots hold E (V/m) and the trailing three hold H (A/m).
    """

    t: float
    data: np.ndarray

    @property
    def E(self) -> np.ndarray:
        return self.data[:, :3, :]

    @property
    def H(self) -> np.ndarray:
        return self.data[:, 3:, :]

    def like(self, data: np.ndarray, t: float | None = None) -> "FieldState":
        return FieldState(t=self.t if t is None else t, data=data)

    def copy(self) -> "FieldState":
        return FieldState(t=self.t, data=self.data.copy())


@dataclass
class SourceSpec:
    """Volume current density and tangential boundary data.

    `current(t, x)` returns J in A/m^2 at points x of shape (..., 3);
    `boundary(t, x, n)` returns the tangential load G in V/m on the absorbing
    boundary, with n the outward unit normal at each point (G . n = 0).
    Either may be None, meaning identically zero.
    """

    current: object = None
    boundary: object = None


ZERO_SOURCE = SourceSpec()


@dataclass
class FluxTrace:
    """Single-valued tangential numerical fluxes at face quadrature points.

    Rows follow `face_indices` into the mesh face list; values sit at the
    physical points `points`, which are the image of the minus-side face
    parametrization of the stored triangle rule.
    """

    e_hat: np.ndarray          # (nfaces, nq, 3)
    h_hat: np.ndarray          # (nfaces, nq, 3)
    points: np.ndarray         # (nfaces, nq, 3)
    weights: np.ndarray        # (nq,) reference-triangle weights
    rule_degree: int
    face_indices: np.ndarray   # (nfaces,)
    trace_minus: np.ndarray = field(default=None, repr=False)  # (nfaces, 6, nq)
    trace_plus: np.ndarray = field(default=None, repr=False)


class DGOperator:
    """Matrix-free evaluator of the semi-discrete Maxwell right-hand side.

    Binds a mesh, a polynomial degree, and source data.  All heavy tables are
    precomputed; `apply_rhs` is pure with respect to them, so evaluations may
    run concurrently on different states.
    """

    def __init__(self, mesh: meshmod.Mesh, degree: int, source: SourceSpec | None = None):
        if degree not in (1, 2, 3, 4):
            raise ValueError("solver supports polynomial degrees 1..4")
        self.mesh = mesh
        self.degree = degree
        self.source = source if source is not None else ZERO_SOURCE
        self.ref = build_reference_element(degree)

        self.det = mesh.det_jacobians
        self.jac = mesh.jacobians
        self.qmat = mesh.inv_jacobians            # Q[a, m] = d xi_a / d x_m
        # W[k, a, d, c] = sum_m levi[d, m, c] Q[k, a, m]
        self._curl_weights = np.einsum("dmc,kam->kadc", _LEVI, self.qmat)
        self._curl_weights_t = np.ascontiguousarray(
            self._curl_weights.transpose(0, 1, 3, 2))

        self._build_face_arrays()
        self._table_cache = {}
        self._phys_face_cache = {}
        self._phys_nodes = None
        self._phys_quad = None

    # -- connectivity tables ------------------------------------------------

    def _build_face_arrays(self):
        faces = self.mesh.faces
        self.f_kind = np.array([f.kind for f in faces])
        self.f_area = np.array([f.area for f in faces])
        self.f_normal = np.array([f.normal for f in faces])
        self.f_em = np.array([f.elem_minus for f in faces])
        self.f_lm = np.array([f.local_minus for f in faces])
        self.f_ep = np.array([-1 if f.elem_plus is None else f.elem_plus for f in faces])
        self.f_lp = np.array([-1 if f.local_plus is None else f.local_plus for f in faces])
        self.f_perm = np.array([f.perm for f in faces])

        self.minus_groups = [np.nonzero(self.f_lm == lf)[0] for lf in range(4)]
        self.plus_groups = {}
        interior = self.f_kind == meshmod.INTERIOR
        for lf in range(4):
            for p in range(6):
                g = np.nonzero(interior & (self.f_lp == lf) & (self.f_perm == p))[0]
                if g.size:
                    self.plus_groups[(lf, p)] = g

        self.interior_idx = np.nonzero(interior)[0]
        self.pec_idx = np.nonzero(self.f_kind == meshmod.PEC)[0]
        self.abc_idx = np.nonzero(self.f_kind == meshmod.ABC)[0]

        z = np.sqrt(self.mesh.mu / self.mesh.eps)
        self.z_minus = z[self.f_em]
        self.y_minus = 1.0 / self.z_minus
        ep = np.where(self.f_ep >= 0, self.f_ep, self.f_em)
        self.z_plus = z[ep]
        self.y_plus = 1.0 / self.z_plus

        self.fscale_minus = 2.0 * self.f_area / self.det[self.f_em]
        self.fscale_plus = 2.0 * self.f_area / self.det[ep]

    def _face_tables(self, rule_degree: int):
        key = rule_degree
        if key not in self._table_cache:
            rule = face_quadrature(rule_degree)
            self._table_cache[key] = (rule, self.ref.face_tables(rule))
        return self._table_cache[key]

    def _face_points(self, rule_degree: int, face_idx: np.ndarray) -> np.ndarray:
        """Physical quadrature points of the selected faces, (n, nq, 3)."""
        key = rule_degree
        if key not in self._phys_face_cache:
            from maxwelldg.reference_element import embed_face_points

            rule = face_quadrature(rule_degree)
            ref_pts = [embed_face_points(lf, rule.points, 0) for lf in range(4)]
            allpts = np.empty((len(self.mesh.faces), rule.points.shape[0], 3))
            for lf in range(4):
                g = self.minus_groups[lf]
                if g.size == 0:
                    continue
                e = self.f_em[g]
                v0 = self.mesh.vertices[self.mesh.elements[e, 0]]
                allpts[g] = v0[:, None, :] + np.einsum(
                    "kab,qb->kqa", self.jac[e], ref_pts[lf])
            allpts.setflags(write=False)
            self._phys_face_cache[key] = allpts
        return self._phys_face_cache[key][face_idx]

    def physical_nodes(self) -> np.ndarray:
        """Images of the reference nodes in every element, (K, Np, 3)."""
        if self._phys_nodes is None:
            v0 = self.mesh.vertices[self.mesh.elements[:, 0]]
            self._phys_nodes = v0[:, None, :] + np.einsum(
                "kab,nb->kna", self.jac, self.ref.nodes)
            self._phys_nodes.setflags(write=False)
        return self._phys_nodes

    def physical_quad_points(self) -> np.ndarray:
        if self._phys_quad is None:
            v0 = self.mesh.vertices[self.mesh.elements[:, 0]]
            self._phys_quad = v0[:, None, :] + np.einsum(
                "kab,qb->kqa", self.jac, self.ref.volume_rule.points)
            self._phys_quad.setflags(write=False)
        return self._phys_quad

    # -- traces and fluxes ----------------------------------------------------

    def _face_traces(self, U: np.ndarray, rule_degree: int, face_idx=None):
        """Both-side traces at face quadrature points.

        Returns (trace_minus, trace_plus) of shape (nsel, 6, nq); plus-side
        rows of boundary faces are zero.
        """
        _rule, tabs = self._face_tables(rule_degree)
        nq = tabs[(0, 0)].shape[0]
        if face_idx is None:
            sel_pos = None
            nsel = len(self.mesh.faces)
        else:
            sel_pos = np.full(len(self.mesh.faces), -1)
            sel_pos[face_idx] = np.arange(face_idx.size)
            nsel = face_idx.size
        tm = np.zeros((nsel, 6, nq))
        tp = np.zeros((nsel, 6, nq))
        for lf in range(4):
            g = self.minus_groups[lf]
            g = g if sel_pos is None else g[sel_pos[g] >= 0]
            if g.size == 0:
                continue
            rows = g if sel_pos is None else sel_pos[g]
            tm[rows] = U[self.f_em[g]] @ tabs[(lf, 0)].T
        for (lf, p), g in self.plus_groups.items():
            g = g if sel_pos is None else g[sel_pos[g] >= 0]
            if g.size == 0:
                continue
            rows = g if sel_pos is None else sel_pos[g]
            tp[rows] = U[self.f_ep[g]] @ tabs[(lf, p)].T
        return tm, tp

    def _flux_arrays(self, U: np.ndarray, t: float, rule_degree: int, face_idx=None):
        """Upwind fluxes (e_hat, h_hat) of shape (nsel, 3, nq), plus traces."""
        if face_idx is None:
            face_idx = np.arange(len(self.mesh.faces))
        tm, tp = self._face_traces(U, rule_degree, face_idx)
        n = self.f_normal[face_idx][:, :, None]          # (nsel, 3, 1)
        kind = self.f_kind[face_idx]
        ym, yp = self.y_minus[face_idx], self.y_plus[face_idx]
        zm, zp = self.z_minus[face_idx], self.z_plus[face_idx]

        Em, Hm = tm[:, :3], tm[:, 3:]
        Ep, Hp = tp[:, :3], tp[:, 3:]

        e_hat = np.zeros_like(Em)
        h_hat = np.zeros_like(Hm)

        ii = np.nonzero(kind == meshmod.INTERIOR)[0]
        if ii.size:
            ni = n[ii]
            ym_, yp_ = ym[ii, None, None], yp[ii, None, None]
            zm_, zp_ = zm[ii, None, None], zp[ii, None, None]
            mean_ye = 0.5 * (ym_ * Em[ii] + yp_ * Ep[ii])
            mean_zh = 0.5 * (zm_ * Hm[ii] + zp_ * Hp[ii])
            e_hat[ii] = (_tangential(mean_ye, ni)
                         + 0.5 * _cross(Hm[ii] - Hp[ii], ni)) / (0.5 * (ym_ + yp_))
            h_hat[ii] = (_tangential(mean_zh, ni)
                         - 0.5 * _cross(Em[ii] - Ep[ii], ni)) / (0.5 * (zm_ + zp_))

        pp = np.nonzero(kind == meshmod.PEC)[0]
        if pp.size:
            np_n = n[pp]
            y_ = ym[pp, None, None]
            h_hat[pp] = -y_ * _cross(Em[pp], np_n) + _tangential(Hm[pp], np_n)

        aa = np.nonzero(kind == meshmod.ABC)[0]
        if aa.size:
            na = n[aa]
            y_ = ym[aa, None, None]
            z_ = zm[aa, None, None]
            if self.source.boundary is not None:
                pts = self._face_points(rule_degree, face_idx[aa])
                nrm = np.broadcast_to(self.f_normal[face_idx[aa]][:, None, :], pts.shape)
                g = np.asarray(self.source.boundary(t, pts, nrm))  # (na, nq, 3)
                g = np.ascontiguousarray(g.transpose(0, 2, 1))
            else:
                g = np.zeros_like(Em[aa])
            e_hat[aa] = 0.5 * (_tangential(Em[aa], na) + z_ * _cross(Hm[aa], na)
                               + _cross(g, na))
            h_hat[aa] = 0.5 * y_ * (z_ * _tangential(Hm[aa], na) - _cross(Em[aa], na) - g)

        return e_hat, h_hat, tm, tp

    def compute_numerical_fluxes(self, state: FieldState, t: float | None = None,
                                 rule_degree: int | None = None,
                                 faces: np.ndarray | None = None) -> FluxTrace:
        """Evaluate the upwind fluxes on the requested faces.

        The default rule is exact to degree 2k+4, which covers every
        postprocessing integrand; the time loop itself uses a leaner rule
        internally.
        """
        t = state.t if t is None else t
        rule_degree = 2 * self.degree + 4 if rule_degree is None else rule_degree
        if faces is None:
            face_idx = np.arange(len(self.mesh.faces))
        else:
            face_idx = np.unique(np.asarray(faces, dtype=int))
        e_hat, h_hat, tm, tp = self._flux_arrays(state.data, t, rule_degree, face_idx)
        rule = face_quadrature(rule_degree)
        return FluxTrace(
            e_hat=np.ascontiguousarray(e_hat.transpose(0, 2, 1)),
            h_hat=np.ascontiguousarray(h_hat.transpose(0, 2, 1)),
            points=self._face_points(rule_degree, face_idx),
            weights=rule.weights,
            rule_degree=rule_degree,
            face_indices=face_idx,
            trace_minus=tm,
            trace_plus=tp,
        )

    # -- right-hand side ------------------------------------------------------

    def apply_rhs(self, state: FieldState, t: float | None = None) -> FieldState:
        """Time derivative of the state under the semi-discrete system."""
        t = state.t if t is None else t
        U = state.data
        K, Np = self.mesh.num_elements, self.ref.num_nodes
        rule_degree = 2 * self.degree

        # volume contributions: weak curl against the test functions
        stiff = self.ref.stiffness
        P = np.empty((3, K, 6, Np))
        flat = U.reshape(K * 6, Np)
        for a in range(3):
            P[a] = (flat @ stiff[a].T).reshape(K, 6, Np)
        wt = self._curl_weights_t
        rhs = np.empty((K, 6, Np))
        rhs[:, :3] = wt[:, 0] @ P[0][:, 3:] + wt[:, 1] @ P[1][:, 3:] + wt[:, 2] @ P[2][:, 3:]
        rhs[:, 3:] = -(wt[:, 0] @ P[0][:, :3] + wt[:, 1] @ P[1][:, :3] + wt[:, 2] @ P[2][:, :3])

        # face contributions
        e_hat, h_hat, _, _ = self._flux_arrays(U, t, rule_degree)
        rule, tabs = self._face_tables(rule_degree)
        w = rule.weights
        nf = self.f_normal[:, :, None]
        nxh = _cross(nf, h_hat) * w[None, None, :]
        nxe = _cross(nf, e_hat) * w[None, None, :]
        for lf in range(4):
            g = self.minus_groups[lf]
            if g.size == 0:
                continue
            tab = tabs[(lf, 0)]
            s = self.fscale_minus[g, None, None]
            rhs[self.f_em[g], :3] += s * (nxh[g] @ tab)
            rhs[self.f_em[g], 3:] -= s * (nxe[g] @ tab)
        for (lf, p), g in self.plus_groups.items():
            tab = tabs[(lf, p)]
            s = self.fscale_plus[g, None, None]
            rhs[self.f_ep[g], :3] -= s * (nxh[g] @ tab)
            rhs[self.f_ep[g], 3:] += s * (nxe[g] @ tab)

        # volume current
        if self.source.current is not None:
            pts = self.physical_quad_points()
            j = np.asarray(self.source.current(t, pts))       # (K, nq, 3)
            wv = self.ref.volume_rule.weights
            rhs[:, :3] += np.einsum("kqc,q,qi->kci", j, wv, self.ref.basis_at_quad)

        # block-diagonal mass inversion and material scaling
        out = rhs.reshape(K * 6, Np) @ self.ref.inv_mass.T
        out = out.reshape(K, 6, Np)
        out[:, :3] /= self.mesh.eps[:, None, None]
        out[:, 3:] /= self.mesh.mu[:, None, None]
        return FieldState(t=t, data=out)

    def project_initial_conditions(self, e0, h0) -> FieldState:
        """Nodal interpolation of initial fields; state time is 0."""
        pts = self.physical_nodes()
        data = np.empty((self.mesh.num_elements, 6, self.ref.num_nodes))
        data[:, :3] = np.asarray(e0(pts)).transpose(0, 2, 1)
        data[:, 3:] = np.asarray(h0(pts)).transpose(0, 2, 1)
        if not np.all(np.isfinite(data)):
            raise ValueError("initial condition produced non-finite values")
        return FieldState(t=0.0, data=data)

    def rhs(self, t: float, state: FieldState) -> FieldState:
        """rhs(t, U) in the calling convention of the time integrator."""
        return self.apply_rhs(state, t)
