"""Nodal polynomial machinery on the reference tetrahedron.

The reference tetrahedron is the unit simplex with vertices
(0,0,0), (1,0,0), (0,1,0), (0,0,1); the reference triangle is the unit
triangle with vertices (0,0), (1,0), (0,1).

Quadrature rules are conical (Duffy) products of Gauss-Jacobi rules, so a
rule requested at exactness degree d integrates every polynomial of total
degree <= d exactly, up to roundoff.  The scalar basis is the orthonormal
Koornwinder-Dubiner family evaluated through collapsed coordinates; nodal
operators are obtained from it through the interpolation Vandermonde matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.special import eval_jacobi, roots_jacobi

#: Vertices of the reference tetrahedron.
TET_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)

#: Local vertex indices of the four faces (face f is opposite vertex f).
FACE_VERTEX_IDS = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

#: The six vertex permutations used to match face parametrizations.
TRIANGLE_PERMUTATIONS = tuple(permutations(range(3)))

MAX_QUADRATURE_DEGREE = 40
MAX_BASIS_DEGREE = 6


def num_nodes(degree: int) -> int:
    """Dimension of the polynomial space of total degree <= degree in 3D."""
    return (degree + 1) * (degree + 2) * (degree + 3) // 6


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the reference triangle or tetrahedron.

    Weights sum to the reference measure (1/2 for the triangle, 1/6 for the
    tetrahedron) and the rule is exact for polynomials of total degree
    <= degree.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _gauss_jacobi_01(n: int, alpha: int):
    """n-point rule for integral over (0,1) of f(x) (1-x)**alpha dx."""
    if alpha == 0:
        t, w = np.polynomial.legendre.leggauss(n)
    else:
        t, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (t + 1.0), w / 2.0 ** (alpha + 1)


def _check_degree(d: int) -> int:
    if not 0 <= d <= MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"quadrature exactness degree {d} outside supported range "
            f"[0, {MAX_QUADRATURE_DEGREE}]"
        )
    return d // 2 + 1


@lru_cache(maxsize=None)
def volume_quadrature(d: int) -> QuadratureRule:
    """Conical-product rule on the reference tetrahedron, exact to degree d."""
    n = _check_degree(d)
    u, wu = _gauss_jacobi_01(n, 2)
    v, wv = _gauss_jacobi_01(n, 1)
    w, ww = _gauss_jacobi_01(n, 0)
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    x = U
    y = V * (1.0 - U)
    z = W * (1.0 - U) * (1.0 - V)
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    wts = (wu[:, None, None] * wv[None, :, None] * ww[None, None, :]).ravel()
    return QuadratureRule(pts, wts, d)


@lru_cache(maxsize=None)
def face_quadrature(d: int) -> QuadratureRule:
    """Conical-product rule on the reference triangle, exact to degree d."""
    n = _check_degree(d)
    u, wu = _gauss_jacobi_01(n, 1)
    v, wv = _gauss_jacobi_01(n, 0)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = U
    y = V * (1.0 - U)
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    wts = (wu[:, None] * wv[None, :]).ravel()
    return QuadratureRule(pts, wts, d)


# ---------------------------------------------------------------------------
# Orthonormal basis through collapsed coordinates
# ---------------------------------------------------------------------------


def _jacobi_norm_const(n: int, alpha: int, beta: int) -> float:
    # L2 norm of the classical Jacobi polynomial under its weight on (-1,1)
    num = (
        2.0 ** (alpha + beta + 1)
        * math.gamma(n + alpha + 1)
        * math.gamma(n + beta + 1)
    )
    den = (2 * n + alpha + beta + 1) * math.gamma(n + alpha + beta + 1) * math.factorial(n)
    return math.sqrt(num / den)


def _jacobi(x, n: int, alpha: int, beta: int):
    return eval_jacobi(n, alpha, beta, x) / _jacobi_norm_const(n, alpha, beta)


def _djacobi(x, n: int, alpha: int, beta: int):
    if n == 0:
        return np.zeros_like(x)
    return math.sqrt(n * (n + alpha + beta + 1)) * _jacobi(x, n - 1, alpha + 1, beta + 1)


def mode_indices(degree: int):
    """Fixed ordering of the modal indices (i, j, k), i + j + k <= degree."""
    out = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                out.append((i, j, k))
    return out


def _collapsed(points: np.ndarray):
    """Map unit-tetrahedron points to collapsed (a, b, c) coordinates.

    Divisions that hit the degenerate edge/apex of the collapsed map are
    guarded; the affected basis terms carry vanishing (1-b)/(1-c) powers, so
    the guard value never influences a result.
    """
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    r, s, t = 2.0 * x - 1.0, 2.0 * y - 1.0, 2.0 * z - 1.0
    a = np.full_like(r, -1.0)
    den = -(s + t)
    m = den != 0.0
    a[m] = 2.0 * (1.0 + r[m]) / den[m] - 1.0
    b = np.full_like(r, -1.0)
    den = 1.0 - t
    m = den != 0.0
    b[m] = 2.0 * (1.0 + s[m]) / den[m] - 1.0
    return a, b, s, t


def eval_modal(degree: int, points: np.ndarray) -> np.ndarray:
    """Orthonormal basis values; shape (npoints, num_nodes(degree))."""
    a, b, _s, c = _collapsed(points)
    cols = []
    for i, j, k in mode_indices(degree):
        fa = _jacobi(a, i, 0, 0)
        gb = _jacobi(b, j, 2 * i + 1, 0)
        hc = _jacobi(c, k, 2 * (i + j) + 2, 0)
        val = 8.0 * fa * gb * hc
        if i > 0:
            val = val * (1.0 - b) ** i
        if i + j > 0:
            val = val * (1.0 - c) ** (i + j)
        cols.append(val)
    return np.stack(cols, axis=1)


def grad_modal(degree: int, points: np.ndarray) -> np.ndarray:
    """Orthonormal basis gradients; shape (3, npoints, num_nodes(degree))."""
    a, b, _s, c = _collapsed(points)
    dr_cols, ds_cols, dt_cols = [], [], []
    for i, j, k in mode_indices(degree):
        fa = _jacobi(a, i, 0, 0)
        dfa = _djacobi(a, i, 0, 0)
        gb = _jacobi(b, j, 2 * i + 1, 0)
        dgb = _djacobi(b, j, 2 * i + 1, 0)
        hc = _jacobi(c, k, 2 * (i + j) + 2, 0)
        dhc = _djacobi(c, k, 2 * (i + j) + 2, 0)
        hb = 0.5 * (1.0 - b)
        hcc = 0.5 * (1.0 - c)

        dr = dfa * gb * hc
        if i > 0:
            dr = dr * hb ** (i - 1)
        if i + j > 0:
            dr = dr * hcc ** (i + j - 1)

        ds = 0.5 * (1.0 + a) * dr
        tmp = dgb * hb**i
        if i > 0:
            tmp = tmp - 0.5 * i * gb * hb ** (i - 1)
        if i + j > 0:
            tmp = tmp * hcc ** (i + j - 1)
        tmp = fa * tmp * hc
        ds = ds + tmp

        dt = 0.5 * (1.0 + a) * dr + 0.5 * (1.0 + b) * tmp
        tmp2 = dhc * hcc ** (i + j)
        if i + j > 0:
            tmp2 = tmp2 - 0.5 * (i + j) * hc * hcc ** (i + j - 1)
        tmp2 = fa * gb * tmp2 * hb**i
        dt = dt + tmp2

        # 2**(2i+j+1.5) collapses the bi-unit normalization; one further
        # factor 2**2.5 accounts for the unit-simplex scaling and chain rule.
        scale = 2.0 ** (2 * i + j + 4)
        dr_cols.append(scale * dr)
        ds_cols.append(scale * ds)
        dt_cols.append(scale * dt)
    return np.stack(
        [np.stack(dr_cols, axis=1), np.stack(ds_cols, axis=1), np.stack(dt_cols, axis=1)],
        axis=0,
    )


# ---------------------------------------------------------------------------
# Interpolation nodes
# ---------------------------------------------------------------------------


def _lobatto_points_01(n: int) -> np.ndarray:
    """n+1 Gauss-Lobatto points on [0, 1]."""
    if n == 1:
        return np.array([0.0, 1.0])
    interior = np.polynomial.legendre.Legendre.basis(n).deriv().roots()
    pts = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    pts = 0.5 * (pts + 1.0)
    # enforce the exact symmetry the construction below relies on
    pts = 0.5 * (pts + (1.0 - pts[::-1]))
    pts[0], pts[-1] = 0.0, 1.0
    return pts


def interpolation_nodes(degree: int) -> np.ndarray:
    """Well-conditioned nodal set on the reference tetrahedron.

    Equispaced barycentric indices are pushed through the 1D Gauss-Lobatto
    distribution and renormalized.  Edge and face nodes stay on edges and
    faces; for degree <= 2 the set coincides with the equispaced one.
    """
    v = _lobatto_points_01(degree)
    nodes = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                m = degree - i - j - k
                w = np.array([v[m], v[i], v[j], v[k]])
                lam = w / w.sum()
                nodes.append(lam @ TET_VERTICES)
    return np.array(nodes)


# ---------------------------------------------------------------------------
# Face embeddings
# ---------------------------------------------------------------------------


def embed_face_points(face: int, pts2d: np.ndarray, perm: int = 0) -> np.ndarray:
    """Map reference-triangle points onto face `face` of the tetrahedron.

    `perm` selects one of the six vertex orderings of the face; it is used to
    evaluate the two sides of a shared mesh face at identical physical points.
    """
    lam = np.stack([1.0 - pts2d[:, 0] - pts2d[:, 1], pts2d[:, 0], pts2d[:, 1]], axis=1)
    order = TRIANGLE_PERMUTATIONS[perm]
    verts = TET_VERTICES[list(FACE_VERTEX_IDS[face])][list(order)]
    return lam @ verts


# ---------------------------------------------------------------------------
# Reference element
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceElement:
    """Degree-k nodal element on the reference tetrahedron.

    Carries the nodal set, mass and derivative operators, the quadrature
    tables used to assemble element integrals, and interpolation operators to
    the face quadrature points of each of the four faces.
    """

    degree: int
    nodes: np.ndarray                 # (Np, 3)
    vandermonde: np.ndarray           # (Np, Np) modal values at nodes
    inv_vandermonde: np.ndarray
    mass: np.ndarray                  # (Np, Np), reference-tet metric
    inv_mass: np.ndarray
    d_ops: np.ndarray                 # (3, Np, Np) nodal derivative operators
    volume_rule: QuadratureRule       # exactness 2k
    basis_at_quad: np.ndarray         # (Nq, Np) nodal basis at volume points
    grad_at_quad: np.ndarray          # (3, Nq, Np)
    stiffness: np.ndarray             # (3, Np, Np): int (d_a phi_i) phi_j
    face_rule: QuadratureRule         # exactness 2k, on the triangle
    face_interp: np.ndarray           # (4, Nfq, Np) nodal basis at face points
    face_interp_perm: dict = field(repr=False)  # (face, perm) -> (Nfq, Np)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    def nodal_values_at(self, points: np.ndarray) -> np.ndarray:
        """Nodal-basis values at arbitrary reference points, (npts, Np)."""
        return eval_modal(self.degree, points) @ self.inv_vandermonde

    def nodal_grads_at(self, points: np.ndarray) -> np.ndarray:
        """Nodal-basis reference gradients at arbitrary points, (3, npts, Np)."""
        return grad_modal(self.degree, points) @ self.inv_vandermonde

    def face_tables(self, rule: QuadratureRule, with_grads: bool = False):
        """Value (and optionally gradient) tables on all 24 face embeddings.

        Returns dict {(face, perm): (Nfq, Np)} and, when requested, a second
        dict with (3, Nfq, Np) gradient tables.
        """
        values, grads = {}, {}
        for f in range(4):
            for p in range(6):
                pts = embed_face_points(f, rule.points, p)
                values[(f, p)] = self.nodal_values_at(pts)
                if with_grads:
                    grads[(f, p)] = self.nodal_grads_at(pts)
        return (values, grads) if with_grads else values


@lru_cache(maxsize=None)
def build_reference_element(degree: int) -> ReferenceElement:
    """Build the degree-k reference element (k = 1..6; the solver uses 1..4,
    higher degrees back the postprocessing spaces)."""
    if not 1 <= degree <= MAX_BASIS_DEGREE:
        raise ValueError(f"unsupported degree {degree}; expected 1..{MAX_BASIS_DEGREE}")

    nodes = interpolation_nodes(degree)
    V = eval_modal(degree, nodes)
    Vinv = np.linalg.inv(V)

    vol_rule = volume_quadrature(2 * degree)
    phi = eval_modal(degree, vol_rule.points) @ Vinv
    dphi = grad_modal(degree, vol_rule.points) @ Vinv
    w = vol_rule.weights
    mass = phi.T @ (w[:, None] * phi)
    inv_mass = np.linalg.inv(mass)
    stiffness = np.einsum("aqi,q,qj->aij", dphi, w, phi)

    # modal-exact derivative operator, avoids gradient evaluation at nodes
    phi_m = eval_modal(degree, vol_rule.points)
    dphi_m = grad_modal(degree, vol_rule.points)
    exact_d = np.einsum("qm,q,aqj->amj", phi_m, w, dphi_m)
    d_ops = np.einsum("nm,amj,jp->anp", V, exact_d, Vinv)

    f_rule = face_quadrature(2 * degree)
    face_perm = {}
    for f in range(4):
        for p in range(6):
            pts = embed_face_points(f, f_rule.points, p)
            face_perm[(f, p)] = eval_modal(degree, pts) @ Vinv
    face_interp = np.stack([face_perm[(f, 0)] for f in range(4)], axis=0)

    return ReferenceElement(
        degree=degree,
        nodes=nodes,
        vandermonde=V,
        inv_vandermonde=Vinv,
        mass=mass,
        inv_mass=inv_mass,
        d_ops=d_ops,
        volume_rule=vol_rule,
        basis_at_quad=phi,
        grad_at_quad=dphi,
        stiffness=stiffness,
        face_rule=f_rule,
        face_interp=face_interp,
        face_interp_perm=face_perm,
    )
