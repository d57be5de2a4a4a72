"""Conforming tetrahedral meshes with face connectivity and geometry.

A mesh stores vertices, 4-vertex elements with per-element materials, and a
face list in which every interior face is shared by exactly two elements and
every boundary face carries a PEC or ABC tag.  Meshes are immutable after
construction and safe to share between workers.

The text file format (see `load_mesh`/`save_mesh`) is line oriented::

    meshfmt 1
    vertices N
    x y z                 (N lines)
    elements M
    v0 v1 v2 v3 mat_id    (M lines)
    materials P
    id eps_rel mu_rel     (P lines, relative to vacuum values)
    boundary Q
    v0 v1 v2 tag          (Q lines, tag in {PEC, ABC})

Every boundary triangle must be tagged; untagged boundary faces are an error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import permutations as _permutations
from pathlib import Path

import numpy as np

from maxwelldg.constants import EPS0, MU0
from maxwelldg.reference_element import FACE_VERTEX_IDS, TRIANGLE_PERMUTATIONS

INTERIOR, PEC, ABC = 0, 1, 2
KIND_NAMES = {INTERIOR: "interior", PEC: "PEC", ABC: "ABC"}
KIND_IDS = {"interior": INTERIOR, "PEC": PEC, "ABC": ABC}


class MeshError(Exception):
    """Base class for mesh construction failures."""


class MeshFormatError(MeshError):
    """Raised when a mesh file cannot be parsed."""


class MeshConformityError(MeshError):
    """Raised when a triangle is shared by more or fewer elements than allowed."""


@dataclass(frozen=True)
class Face:
    """One mesh face.

    Interior faces reference a minus and a plus element; the unit normal
    points from the minus side into the plus side.  Boundary faces reference
    only the minus element and their normal points out of the domain.
    `perm` identifies the vertex correspondence between the two local face
    parametrizations (index into the six triangle vertex permutations).
    """

    vertices: tuple
    kind: int
    elem_minus: int
    local_minus: int
    elem_plus: int | None
    local_plus: int | None
    perm: int
    normal: np.ndarray
    area: float


@dataclass(frozen=True)
class Mesh:
    """Conforming tetrahedral mesh with full connectivity and geometry."""

    vertices: np.ndarray        # (Nv, 3)
    elements: np.ndarray        # (K, 4) vertex indices, positively oriented
    eps: np.ndarray             # (K,) permittivity, F/m
    mu: np.ndarray              # (K,) permeability, H/m
    faces: list
    jacobians: np.ndarray       # (K, 3, 3) columns are edge vectors
    inv_jacobians: np.ndarray   # (K, 3, 3)
    det_jacobians: np.ndarray   # (K,)
    volumes: np.ndarray         # (K,)
    areas: np.ndarray           # (K,) total surface area
    local_face_normals: np.ndarray  # (K, 4, 3) outward unit normals
    local_face_areas: np.ndarray    # (K, 4)

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def element_vertices(self, k: int) -> np.ndarray:
        return self.vertices[self.elements[k]]

    def element_centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def min_volume_area_ratio(self) -> float:
        """min over elements of V_K / A_K; the geometric factor of the CFL rule."""
        return float(np.min(self.volumes / self.areas))

    def face_neighbors(self, k: int) -> list:
        """Elements sharing a face with element k (excluding k itself)."""
        out = []
        for f in self.faces:
            if f.kind != INTERIOR:
                continue
            if f.elem_minus == k:
                out.append(f.elem_plus)
            elif f.elem_plus == k:
                out.append(f.elem_minus)
        return out


def neighbor_patch(mesh: Mesh, k: int) -> set:
    """Element k together with all elements sharing a face with it."""
    if not 0 <= k < mesh.num_elements:
        raise IndexError(f"element {k} out of range")
    return {k, *mesh.face_neighbors(k)}


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def _element_geometry(vertices: np.ndarray, elements: np.ndarray):
    v = vertices[elements]                     # (K, 4, 3)
    jac = np.stack([v[:, i] - v[:, 0] for i in (1, 2, 3)], axis=2)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        raise MeshError("element with non-positive Jacobian determinant")
    inv = np.linalg.inv(jac)
    volumes = det / 6.0

    normals = np.empty((elements.shape[0], 4, 3))
    fareas = np.empty((elements.shape[0], 4))
    centroids = v.mean(axis=1)
    for lf, (a, b, c) in enumerate(FACE_VERTEX_IDS):
        cross = np.cross(v[:, b] - v[:, a], v[:, c] - v[:, a])
        nrm = np.linalg.norm(cross, axis=1)
        fareas[:, lf] = 0.5 * nrm
        n = cross / nrm[:, None]
        fcent = (v[:, a] + v[:, b] + v[:, c]) / 3.0
        flip = np.einsum("ki,ki->k", n, fcent - centroids) < 0
        n[flip] *= -1.0
        normals[:, lf] = n
    return jac, inv, det, volumes, normals, fareas


def _match_permutation(minus_ids, plus_ids) -> int:
    sigma = tuple(plus_ids.index(g) for g in minus_ids)
    return TRIANGLE_PERMUTATIONS.index(sigma)


def _build_faces(elements: np.ndarray, normals: np.ndarray, fareas: np.ndarray,
                 boundary_tags: dict) -> list:
    incidence = {}
    for e in range(elements.shape[0]):
        for lf, ids in enumerate(FACE_VERTEX_IDS):
            tri = tuple(sorted(int(elements[e, i]) for i in ids))
            incidence.setdefault(tri, []).append((e, lf))

    faces = []
    for tri, inc in sorted(incidence.items()):
        if len(inc) > 2:
            raise MeshConformityError(
                f"triangle {tri} shared by {len(inc)} element faces"
            )
        if len(inc) == 2:
            if tri in boundary_tags:
                raise MeshConformityError(
                    f"interior triangle {tri} carries a boundary tag"
                )
            (e0, l0), (e1, l1) = inc
            if e1 < e0:
                (e0, l0), (e1, l1) = (e1, l1), (e0, l0)
            m_ids = [int(elements[e0, i]) for i in FACE_VERTEX_IDS[l0]]
            p_ids = [int(elements[e1, i]) for i in FACE_VERTEX_IDS[l1]]
            faces.append(Face(
                vertices=tri, kind=INTERIOR,
                elem_minus=e0, local_minus=l0, elem_plus=e1, local_plus=l1,
                perm=_match_permutation(m_ids, p_ids),
                normal=normals[e0, l0].copy(), area=float(fareas[e0, l0]),
            ))
        else:
            (e0, l0), = inc
            if tri not in boundary_tags:
                raise MeshConformityError(f"untagged boundary triangle {tri}")
            faces.append(Face(
                vertices=tri, kind=boundary_tags[tri],
                elem_minus=e0, local_minus=l0, elem_plus=None, local_plus=None,
                perm=0, normal=normals[e0, l0].copy(), area=float(fareas[e0, l0]),
            ))
    return faces


def _make_mesh(vertices, elements, eps, mu, boundary_tags) -> Mesh:
    if np.any(eps <= 0) or np.any(mu <= 0):
        raise MeshError("material parameters must be strictly positive")
    if np.unique(np.sort(elements, axis=1), axis=0).shape[0] != elements.shape[0]:
        raise MeshConformityError("mesh contains duplicated elements")
    jac, inv, det, volumes, normals, fareas = _element_geometry(vertices, elements)
    faces = _build_faces(elements, normals, fareas, boundary_tags)
    for arr in (vertices, elements, eps, mu, jac, inv, det, volumes, normals, fareas):
        arr.setflags(write=False)
    return Mesh(
        vertices=vertices, elements=elements, eps=eps, mu=mu, faces=faces,
        jacobians=jac, inv_jacobians=inv, det_jacobians=det,
        volumes=volumes, areas=fareas.sum(axis=1),
        local_face_normals=normals, local_face_areas=fareas,
    )


def build_structured_cube_mesh(n: int, L: float, boundary_kind, material,
                               origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Structured mesh of (0,L)^3 shifted by `origin`: n^3 cubes, each split
    into six tetrahedra sharing the cube's main diagonal.

    `boundary_kind` is "PEC", "ABC", or a callable (centroid, normal) -> tag.
    `material` is an (eps, mu) pair or a callable centroid -> (eps, mu).
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if L <= 0:
        raise ValueError("L must be positive")

    h = L / n
    grid = np.arange(n + 1) * h
    X, Y, Z = np.meshgrid(grid + origin[0], grid + origin[1], grid + origin[2],
                          indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    perms = list(_permutations(range(3)))
    signs = [1 if _perm_sign(p) > 0 else -1 for p in perms]
    elements = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                corner = np.array([i, j, k])
                for p, sgn in zip(perms, signs):
                    steps = np.eye(3, dtype=int)[list(p)]
                    verts = [corner, corner + steps[0],
                             corner + steps[0] + steps[1], corner + 1]
                    ids = [vid(*v) for v in verts]
                    if sgn < 0:
                        ids[2], ids[3] = ids[3], ids[2]
                    elements.append(ids)
    elements = np.array(elements, dtype=np.int64)

    centroids = vertices[elements].mean(axis=1)
    if callable(material):
        mats = np.array([material(c) for c in centroids])
        eps, mu = mats[:, 0].copy(), mats[:, 1].copy()
    else:
        eps = np.full(elements.shape[0], float(material[0]))
        mu = np.full(elements.shape[0], float(material[1]))

    boundary_tags = _tag_structured_boundary(vertices, elements, boundary_kind)
    return _make_mesh(vertices, elements, eps, mu, boundary_tags)


def _perm_sign(p) -> int:
    sign = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                sign = -sign
    return sign


def _tag_structured_boundary(vertices, elements, boundary_kind) -> dict:
    incidence = {}
    for e in range(elements.shape[0]):
        for lf, ids in enumerate(FACE_VERTEX_IDS):
            tri = tuple(sorted(int(elements[e, i]) for i in ids))
            incidence[tri] = incidence.get(tri, 0) + 1
    _, _, _, _, normals, _ = _element_geometry(vertices, elements)
    tags = {}
    for e in range(elements.shape[0]):
        for lf, ids in enumerate(FACE_VERTEX_IDS):
            tri = tuple(sorted(int(elements[e, i]) for i in ids))
            if incidence[tri] != 1:
                continue
            if callable(boundary_kind):
                centroid = vertices[list(tri)].mean(axis=0)
                tag = boundary_kind(centroid, normals[e, lf])
            else:
                tag = boundary_kind
            tags[tri] = KIND_IDS[tag] if isinstance(tag, str) else int(tag)
    return tags


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def load_mesh(path) -> Mesh:
    """Read a mesh file, dedup vertices, repair inverted elements, and build
    connectivity with all invariants verified."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshFormatError("unexpected end of mesh file")
        ln = lines[pos]
        pos += 1
        return ln

    def section(name):
        ln = take().split()
        if len(ln) != 2 or ln[0] != name:
            raise MeshFormatError(f"expected '{name} <count>' line, got {ln!r}")
        try:
            return int(ln[1])
        except ValueError as exc:
            raise MeshFormatError(f"bad count in section {name}") from exc

    if take().split() != ["meshfmt", "1"]:
        raise MeshFormatError("missing 'meshfmt 1' header")

    nv = section("vertices")
    try:
        vertices = np.array([[float(t) for t in take().split()] for _ in range(nv)])
    except ValueError as exc:
        raise MeshFormatError("bad vertex line") from exc
    if vertices.shape != (nv, 3):
        raise MeshFormatError("vertex lines must have three coordinates")

    ne = section("elements")
    elem_rows = []
    for _ in range(ne):
        t = take().split()
        if len(t) != 5:
            raise MeshFormatError("element lines must be 'v0 v1 v2 v3 mat_id'")
        try:
            elem_rows.append([int(x) for x in t])
        except ValueError as exc:
            raise MeshFormatError("bad element line") from exc
    elem_rows = np.array(elem_rows, dtype=np.int64)
    elements, mat_ids = elem_rows[:, :4].copy(), elem_rows[:, 4]
    if np.any(elements < 0) or np.any(elements >= nv):
        raise MeshFormatError("element vertex index out of range")

    nm = section("materials")
    materials = {}
    for _ in range(nm):
        t = take().split()
        if len(t) != 3:
            raise MeshFormatError("material lines must be 'id eps_rel mu_rel'")
        materials[int(t[0])] = (float(t[1]) * EPS0, float(t[2]) * MU0)

    nb = section("boundary")
    boundary_rows = []
    for _ in range(nb):
        t = take().split()
        if len(t) != 4 or t[3] not in ("PEC", "ABC"):
            raise MeshFormatError("boundary lines must be 'v0 v1 v2 {PEC|ABC}'")
        boundary_rows.append(([int(x) for x in t[:3]], KIND_IDS[t[3]]))

    # vertex dedup within a fraction of the bounding-box diagonal
    diag = float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))
    remap = _dedup_vertices(vertices, 1e-10 * max(diag, 1.0))
    vertices = vertices[sorted(set(remap))]
    dense = {old: new for new, old in enumerate(sorted(set(remap)))}
    lookup = np.array([dense[remap[i]] for i in range(len(remap))])
    elements = lookup[elements]

    try:
        eps = np.array([materials[m][0] for m in mat_ids])
        mu = np.array([materials[m][1] for m in mat_ids])
    except KeyError as exc:
        raise MeshFormatError(f"element references unknown material id {exc}") from exc

    # repair inverted elements by swapping the last two vertices
    v = vertices[elements]
    det = np.linalg.det(np.stack([v[:, i] - v[:, 0] for i in (1, 2, 3)], axis=2))
    inverted = det < 0
    if np.any(inverted):
        warnings.warn(
            f"repaired {int(inverted.sum())} inverted element(s) by vertex swap",
            stacklevel=2,
        )
        elements[inverted, 2], elements[inverted, 3] = (
            elements[inverted, 3].copy(), elements[inverted, 2].copy())

    boundary_tags = {}
    for ids, kind in boundary_rows:
        tri = tuple(sorted(int(lookup[i]) for i in ids))
        boundary_tags[tri] = kind
    return _make_mesh(vertices, elements, eps, mu, boundary_tags)


def _dedup_vertices(vertices: np.ndarray, tol: float) -> list:
    from scipy.spatial import cKDTree

    tree = cKDTree(vertices)
    pairs = tree.query_pairs(tol)
    parent = list(range(vertices.shape[0]))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return [find(i) for i in range(vertices.shape[0])]


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the text format understood by `load_mesh`."""
    mat_pairs = {}
    mat_of_elem = []
    for e in range(mesh.num_elements):
        key = (float(mesh.eps[e]), float(mesh.mu[e]))
        mat_of_elem.append(mat_pairs.setdefault(key, len(mat_pairs)))

    out = ["meshfmt 1", f"vertices {mesh.num_vertices}"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out.append(f"elements {mesh.num_elements}")
    out += [
        f"{mesh.elements[e, 0]} {mesh.elements[e, 1]} {mesh.elements[e, 2]} "
        f"{mesh.elements[e, 3]} {mat_of_elem[e]}"
        for e in range(mesh.num_elements)
    ]
    out.append(f"materials {len(mat_pairs)}")
    out += [
        f"{idx} {repr(eps / EPS0)} {repr(mu / MU0)}"
        for (eps, mu), idx in mat_pairs.items()
    ]
    bfaces = [f for f in mesh.faces if f.kind != INTERIOR]
    out.append(f"boundary {len(bfaces)}")
    out += [
        f"{f.vertices[0]} {f.vertices[1]} {f.vertices[2]} {KIND_NAMES[f.kind]}"
        for f in bfaces
    ]
    Path(path).write_text("\n".join(out) + "\n")
