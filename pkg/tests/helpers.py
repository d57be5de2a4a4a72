"""Shared fixtures-in-spirit: perturbed meshes and synthetic polynomial data."""

import numpy as np

from maxwelldg.constants import EPS0, MU0
from maxwelldg.mesh import build_structured_cube_mesh, load_mesh, save_mesh


def perturbed_mesh(tmp_path, n=2, amplitude=0.1, seed=5):
    """Structured mesh with interior vertices shaken, still conforming."""
    mesh = build_structured_cube_mesh(n, 1.0, "PEC", (EPS0, MU0))
    rng = np.random.default_rng(seed)
    verts = mesh.vertices.copy()
    h = 1.0 / n
    interior = np.all((verts > 1e-12) & (verts < 1 - 1e-12), axis=1)
    verts[interior] += rng.uniform(-amplitude * h, amplitude * h,
                                   size=(int(interior.sum()), 3))
    path = tmp_path / f"perturbed_n{n}_s{seed}.mesh"
    save_mesh(mesh, path)
    text = path.read_text().splitlines()
    nv = mesh.num_vertices
    text[2:2 + nv] = [f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
                      for v in verts]
    path.write_text("\n".join(text) + "\n")
    return load_mesh(path)


def global_polynomial(degree, rng):
    """Random full-degree polynomial field R^3 -> R^3."""
    exps = [(a, b, c) for a in range(degree + 1)
            for b in range(degree + 1 - a)
            for c in range(degree + 1 - a - b)]
    coef = rng.standard_normal((3, len(exps)))

    def field(x):
        mono = np.stack([x[..., 0]**a * x[..., 1]**b * x[..., 2]**c
                         for a, b, c in exps], axis=-1)
        return mono @ coef.T

    return field


def consistent_flux_trace(op, state, e_field, h_field):
    """Flux trace whose values are the exact tangential traces of the fields."""
    ft = op.compute_numerical_fluxes(state)
    nrm = np.array([op.mesh.faces[i].normal for i in ft.face_indices])
    for arr, f in ((ft.e_hat, e_field), (ft.h_hat, h_field)):
        vals = f(ft.points)
        arr[:] = vals - np.einsum("fqc,fc->fq", vals, nrm)[:, :, None] * nrm[:, None, :]
    return ft
