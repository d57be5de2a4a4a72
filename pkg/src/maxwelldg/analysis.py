"""Error norms, convergence orders, energy, and probe-series comparisons.

Volume norms are assembled element by element with quadrature well beyond
the discrete polynomial degree; per-element contributions are sorted before
summation, which makes the reported values independent of element ordering
while staying bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from maxwelldg.dg_operator import _LEVI, FieldState
from maxwelldg.reference_element import build_reference_element, volume_quadrature

_EXTRA_QUAD = 4  # error rules are exact to degree 2k + _EXTRA_QUAD


@dataclass
class ErrorReport:
    """Per-step error series and final-time norms of one run."""

    h: float
    degree: int
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    e_curl_raw: list = field(default_factory=list)
    e_curl_post: list = field(default_factory=list)
    h_curl_raw: list = field(default_factory=list)
    h_curl_post: list = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def validate(self):
        for series in (self.e_curl_raw, self.e_curl_post,
                       self.h_curl_raw, self.h_curl_post):
            arr = np.asarray(series, dtype=float)
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
                raise ValueError("error series must be finite and nonnegative")


@dataclass
class EocTable:
    """Rows of (h, error, eoc); the first row has no eoc."""

    hs: np.ndarray
    errors: np.ndarray
    eocs: np.ndarray  # length len(hs) - 1


def eoc(errors, hs) -> EocTable:
    """Estimated orders of convergence log(e_{i-1}/e_i)/log(h_{i-1}/h_i)."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need matching error/h lists of length >= 2")
    if np.any(errors <= 0):
        raise ValueError("error entries must be positive")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("h values must be strictly decreasing")
    rates = np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
    return EocTable(hs=hs, errors=errors, eocs=rates)


# ---------------------------------------------------------------------------
# Field evaluation helpers
# ---------------------------------------------------------------------------


def _degree_of(np_nodes: int) -> int:
    for k in range(1, 9):
        if (k + 1) * (k + 2) * (k + 3) // 6 == np_nodes:
            return k
    raise ValueError(f"no polynomial degree with {np_nodes} nodes")


def _coeff_pair(state):
    """(E-like coeffs, H-like coeffs, degree, t) from a Field/Postprocessed state."""
    if isinstance(state, FieldState):
        k = _degree_of(state.data.shape[2])
        return state.E, state.H, k, state.t
    # postprocessed state
    k = _degree_of(state.e_star.shape[2])
    return state.e_star, state.h_star, k, state.t


def _sorted_sum(contrib: np.ndarray) -> float:
    return float(np.sum(np.sort(contrib)))


def _curl_tables(degree: int, quad_degree: int):
    ref = build_reference_element(degree)
    rule = volume_quadrature(quad_degree)
    return rule, ref.nodal_values_at(rule.points), ref.nodal_grads_at(rule.points)


def hcurl_error(state, exact, mesh, which: str = "E",
                quad_degree: int | None = None, t: float | None = None) -> float:
    """L2 norm over the domain of curl(exact) - curl(discrete) at time t."""
    ce, ch, k, t_state = _coeff_pair(state)
    coeffs = ce if which == "E" else ch
    exact_curl = exact.curl_e if which == "E" else exact.curl_h
    t = t_state if t is None else t
    if quad_degree is None:
        quad_degree = 2 * k + _EXTRA_QUAD
    rule, _vals, grads = _curl_tables(k, quad_degree)

    sel = getattr(state, "element_indices", None)
    det = mesh.det_jacobians if sel is None else mesh.det_jacobians[sel]
    q = mesh.inv_jacobians if sel is None else mesh.inv_jacobians[sel]
    elems = np.arange(mesh.num_elements) if sel is None else np.asarray(sel)

    v0 = mesh.vertices[mesh.elements[elems, 0]]
    pts = v0[:, None, :] + np.einsum("kab,qb->kqa", mesh.jacobians[elems], rule.points)
    grad_phys = np.einsum("aqi,kci->kacq", grads, coeffs)          # d_a of comp c
    curl_h_vals = np.einsum("dmc,kam,kacq->kqd", _LEVI, q, grad_phys)
    diff = exact_curl(t, pts) - curl_h_vals
    contrib = det * np.einsum("kqd,q->k", diff**2, rule.weights)
    return math.sqrt(max(_sorted_sum(contrib), 0.0))


def l2_error(state, exact, mesh, which: str = "E",
             quad_degree: int | None = None, t: float | None = None) -> float:
    """L2 norm over the domain of exact - discrete field values at time t."""
    ce, ch, k, t_state = _coeff_pair(state)
    coeffs = ce if which == "E" else ch
    exact_val = exact.e if which == "E" else exact.h
    t = t_state if t is None else t
    if quad_degree is None:
        quad_degree = 2 * k + _EXTRA_QUAD
    rule, vals, _grads = _curl_tables(k, quad_degree)

    sel = getattr(state, "element_indices", None)
    det = mesh.det_jacobians if sel is None else mesh.det_jacobians[sel]
    elems = np.arange(mesh.num_elements) if sel is None else np.asarray(sel)
    v0 = mesh.vertices[mesh.elements[elems, 0]]
    pts = v0[:, None, :] + np.einsum("kab,qb->kqa", mesh.jacobians[elems], rule.points)
    vals_h = np.einsum("qi,kci->kqc", vals, coeffs)
    diff = exact_val(t, pts) - vals_h
    contrib = det * np.einsum("kqd,q->k", diff**2, rule.weights)
    return math.sqrt(max(_sorted_sum(contrib), 0.0))


def discrete_energy(state: FieldState, mesh) -> float:
    """0.5 * integral of eps |E_h|^2 + mu |H_h|^2 over the domain, joules."""
    k = _degree_of(state.data.shape[2])
    mass = build_reference_element(k).mass
    ee = np.einsum("kci,ij,kcj->k", state.E, mass, state.E)
    hh = np.einsum("kci,ij,kcj->k", state.H, mass, state.H)
    contrib = 0.5 * mesh.det_jacobians * (mesh.eps * ee + mesh.mu * hh)
    return _sorted_sum(contrib)


# ---------------------------------------------------------------------------
# Point probes
# ---------------------------------------------------------------------------


def locate_points(mesh, points: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Containing element per point; ties on shared faces resolve to the
    lowest element index."""
    points = np.atleast_2d(points)
    v0 = mesh.vertices[mesh.elements[:, 0]]
    out = np.empty(points.shape[0], dtype=int)
    for i, x in enumerate(points):
        xi = np.einsum("kab,kb->ka", mesh.inv_jacobians, x - v0)
        bary_min = np.minimum(xi.min(axis=1), 1.0 - xi.sum(axis=1))
        inside = np.nonzero(bary_min >= -tol)[0]
        if inside.size == 0:
            raise ValueError(f"point {x} lies outside the mesh")
        out[i] = int(inside[0])
    return out


def point_curls(state, mesh, points: np.ndarray,
                elems: np.ndarray | None = None, which: str = "E") -> np.ndarray:
    """curl of the discrete field at the given points, one 3-vector each."""
    ce, ch, k, _t = _coeff_pair(state)
    coeffs = ce if which == "E" else ch
    points = np.atleast_2d(points)
    if elems is None:
        elems = locate_points(mesh, points)
    ref = build_reference_element(k)

    sel = getattr(state, "element_indices", None)
    if sel is not None:
        pos = {int(e): i for i, e in enumerate(sel)}
        rows = np.array([pos[int(e)] for e in elems])
        coeffs = coeffs[rows]
    else:
        coeffs = coeffs[elems]

    v0 = mesh.vertices[mesh.elements[elems, 0]]
    xi = np.einsum("kab,kb->ka", mesh.inv_jacobians[elems], points - v0)
    grads = ref.nodal_grads_at(xi)                       # (3, P, Np)
    grad_phys = np.einsum("api,pci->pac", grads, coeffs)  # d_a of comp c at point p
    return np.einsum("dmc,pam,pac->pd", _LEVI,
                     mesh.inv_jacobians[elems], grad_phys)


def probe_relative_errors(reference: np.ndarray, primary: np.ndarray,
                          postprocessed: np.ndarray | None = None):
    """Relative time-accumulated curl errors at probe points.

    Inputs are series of curl vectors with shape (nsteps, npoints, 3) on a
    shared time grid.  Returns err per point, and (err, err_star) when a
    postprocessed series is given.  The error at a point is the square root
    of sum_n |ref - approx|^2 / sum_n |ref|^2.
    """
    reference = np.asarray(reference, dtype=float)
    primary = np.asarray(primary, dtype=float)
    if reference.shape != primary.shape:
        raise ValueError("series shapes differ")
    denom = np.einsum("npd->p", reference**2)
    if np.any(denom <= 0):
        raise ValueError("probe lies in a null-field region of the reference")
    err = np.sqrt(np.einsum("npd->p", (reference - primary) ** 2) / denom)
    if postprocessed is None:
        return err
    postprocessed = np.asarray(postprocessed, dtype=float)
    err_star = np.sqrt(np.einsum("npd->p", (reference - postprocessed) ** 2) / denom)
    return err, err_star
