"""Built-in experiment definitions: analytic fields, sources, probes.

Three configurations are provided: a standing wave in a closed conducting
cavity, a plane wave traversing an absorbing box, and the scattering of a
plane wave by a dielectric sphere (which needs a mesh file and a reference
run instead of an exact solution).

Vacuum constants are eps0 = 1e-9/(36 pi) F/m and mu0 = 4 pi e-7 H/m, so the
wave speed is exactly 3e8 m/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from maxwelldg.constants import C0, EPS0, MU0, Z0
from maxwelldg.dg_operator import SourceSpec
from maxwelldg.mesh import Mesh, build_structured_cube_mesh


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form fields with their analytic curls, all vectorized over
    points of shape (..., 3)."""

    e: object
    h: object
    curl_e: object
    curl_h: object


@dataclass(frozen=True)
class Scenario:
    """One experiment: domain, boundary split, materials, duration, data."""

    name: str
    length: float
    boundary_kind: str                 # tag for every boundary face
    material: object                   # (eps, mu) or callable centroid -> (eps, mu)
    final_time: float
    source: SourceSpec
    exact: ExactSolution | None = None
    incident: ExactSolution | None = None
    origin: tuple = (0.0, 0.0, 0.0)
    needs_mesh_file: bool = False
    default_degree: int = 2
    probes: np.ndarray | None = None

    def build_mesh(self, n: int) -> Mesh:
        return build_structured_cube_mesh(
            n, self.length, self.boundary_kind, self.material, origin=self.origin)


# ---------------------------------------------------------------------------
# Standing wave in a closed cavity
# ---------------------------------------------------------------------------


def cavity_solution(L: float = 1.0) -> ExactSolution:
    """Standing-wave eigenmode of the unit PEC cube, angular frequency
    sqrt(3) pi c0 / L."""
    w = math.sqrt(3.0) * math.pi * C0 / L
    p = math.pi / L

    def trig(x):
        sx, cx = np.sin(p * x[..., 0]), np.cos(p * x[..., 0])
        sy, cy = np.sin(p * x[..., 1]), np.cos(p * x[..., 1])
        sz, cz = np.sin(p * x[..., 2]), np.cos(p * x[..., 2])
        return sx, cx, sy, cy, sz, cz

    def e(t, x):
        sx, cx, sy, cy, sz, cz = trig(x)
        amp = np.cos(w * t)
        return np.stack([-amp * cx * sy * sz,
                         np.zeros_like(sx),
                         amp * sx * sy * cz], axis=-1)

    def h(t, x):
        sx, cx, sy, cy, sz, cz = trig(x)
        amp = (p / (MU0 * w)) * np.sin(w * t)
        return np.stack([-amp * sx * cy * cz,
                         2.0 * amp * cx * sy * cz,
                         -amp * cx * cy * sz], axis=-1)

    def curl_e(t, x):
        sx, cx, sy, cy, sz, cz = trig(x)
        amp = p * np.cos(w * t)
        return np.stack([amp * sx * cy * cz,
                         -2.0 * amp * cx * sy * cz,
                         amp * cx * cy * sz], axis=-1)

    def curl_h(t, x):
        # Ampere's law with J = 0: curl H = eps0 dE/dt
        sx, cx, sy, cy, sz, cz = trig(x)
        amp = EPS0 * w * np.sin(w * t)
        return np.stack([amp * cx * sy * sz,
                         np.zeros_like(sx),
                         -amp * sx * sy * cz], axis=-1)

    return ExactSolution(e=e, h=h, curl_e=curl_e, curl_h=curl_h)


def cavity_exact(t, x, L: float = 1.0):
    """Exact cavity fields at time t and points x of shape (..., 3)."""
    sol = cavity_solution(L)
    return sol.e(t, np.asarray(x)), sol.h(t, np.asarray(x))


# ---------------------------------------------------------------------------
# Plane wave in free space
# ---------------------------------------------------------------------------

POLARIZATION = np.array([1.0, 0.0, 0.0])
PROPAGATION = np.array([0.0, 0.0, 1.0])


def planewave_solution(L: float = 1.0) -> ExactSolution:
    """x-polarized cosine plane wave travelling along +z, three wavelengths
    per domain length."""
    w = 6.0 * math.pi * C0 / L
    dxp = np.cross(PROPAGATION, POLARIZATION)

    def phase(t, x):
        return w * (t - x[..., 2] / C0)

    def e(t, x):
        return np.cos(phase(t, x))[..., None] * POLARIZATION

    def h(t, x):
        return (np.cos(phase(t, x)) / Z0)[..., None] * dxp

    def curl_e(t, x):
        return (w / C0) * np.sin(phase(t, x))[..., None] * dxp

    def curl_h(t, x):
        return (-EPS0 * w) * np.sin(phase(t, x))[..., None] * POLARIZATION

    return ExactSolution(e=e, h=h, curl_e=curl_e, curl_h=curl_h)


def planewave_incident(t, x):
    """Incident plane-wave fields (E, H) at (t, x)."""
    sol = planewave_solution()
    return sol.e(t, np.asarray(x)), sol.h(t, np.asarray(x))


# ---------------------------------------------------------------------------
# Absorbing-boundary load for incident-field injection
# ---------------------------------------------------------------------------


def make_silver_muller_source(incident: ExactSolution,
                              impedance: float = Z0) -> SourceSpec:
    """Boundary data G = n x Einc + Z ((Hinc x n) x n) injecting `incident`
    through the absorbing boundary.

    With this orientation both absorbing-boundary fluxes reduce exactly to
    the incident tangential traces when the interior state equals the
    incident field, so the injected wave enters without spurious reflection.
    """

    def boundary(t, x, n):
        einc = incident.e(t, x)
        hinc = incident.h(t, x)
        hxn = np.cross(hinc, n)
        return np.cross(n, einc) + impedance * np.cross(hxn, n)

    return SourceSpec(current=None, boundary=boundary)


def silver_muller_G(t, x, n, scenario: Scenario):
    """Boundary load of a scenario's incident field at points x with outward
    normals n."""
    if scenario.incident is None:
        return np.zeros_like(np.asarray(x, dtype=float))
    return make_silver_muller_source(scenario.incident).boundary(t, x, n)


# ---------------------------------------------------------------------------
# Scattering stand-in geometry
# ---------------------------------------------------------------------------

SPHERE_CENTER = np.array([0.0, 0.0, 0.5])
SPHERE_RADIUS = 0.15
SPHERE_EPS_FACTOR = 2.0

#: Probe points of the sphere-scattering experiment.
SCATTERING_PROBES = np.array([
    [0.0, 0.0, 0.45],
    [0.2, -0.3, 0.8],
    [0.2, -0.3, 0.2],
    [0.2, 0.3, 0.2],
    [0.2, 0.3, 0.8],
    [-0.2, -0.3, 0.8],
    [-0.2, -0.3, 0.2],
    [-0.2, 0.3, 0.2],
    [-0.2, 0.3, 0.8],
])


def _sphere_material(centroid):
    if np.linalg.norm(centroid - SPHERE_CENTER) <= SPHERE_RADIUS:
        return (SPHERE_EPS_FACTOR * EPS0, MU0)
    return (EPS0, MU0)


def scattering_standin_mesh(n: int = 10) -> Mesh:
    """Structured stand-in for the sphere-scattering geometry: unit cube
    centered on the sphere axis, dielectric assigned by element centroid."""
    return build_structured_cube_mesh(
        n, 1.0, "ABC", _sphere_material, origin=(-0.5, -0.5, 0.0))


# ---------------------------------------------------------------------------
# Scenario registry
# ---------------------------------------------------------------------------


def builtin_scenarios() -> dict:
    cavity_sol = cavity_solution()
    plane_sol = planewave_solution()
    return {
        "cavity": Scenario(
            name="cavity",
            length=1.0,
            boundary_kind="PEC",
            material=(EPS0, MU0),
            final_time=10e-9,
            source=SourceSpec(),
            exact=cavity_sol,
        ),
        "planewave": Scenario(
            name="planewave",
            length=1.0,
            boundary_kind="ABC",
            material=(EPS0, MU0),
            final_time=10e-9,
            source=make_silver_muller_source(plane_sol),
            exact=plane_sol,
            incident=plane_sol,
        ),
        "scattering": Scenario(
            name="scattering",
            length=1.0,
            boundary_kind="ABC",
            material=_sphere_material,
            final_time=3e-9,
            source=make_silver_muller_source(plane_sol),
            incident=plane_sol,
            origin=(-0.5, -0.5, 0.0),
            needs_mesh_file=True,
            probes=SCATTERING_PROBES,
        ),
    }
