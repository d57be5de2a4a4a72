"""Time-domain Maxwell solver on tetrahedral meshes.

Upwind discontinuous Galerkin space discretization, five-stage low-storage
Runge-Kutta time marching, and an element-local saddle-point postprocessing
that gains one order of accuracy in the curl seminorm.
"""

from maxwelldg.mesh import Mesh, Face, build_structured_cube_mesh, load_mesh, save_mesh, neighbor_patch
from maxwelldg.reference_element import (
    ReferenceElement,
    QuadratureRule,
    build_reference_element,
    volume_quadrature,
    face_quadrature,
)
from maxwelldg.dg_operator import DGOperator, FieldState, FluxTrace, SourceSpec
from maxwelldg.time_integration import LSRK_A, LSRK_B, LSRK_C, CFL_ALPHA, cfl_time_step, lsrk_step, run_simulation
from maxwelldg.postprocess import LocalSaddleSystem, PostprocessedState, build_local_system, postprocess_element, postprocess_state
from maxwelldg import scenarios, analysis

__all__ = [
    "Mesh",
    "Face",
    "build_structured_cube_mesh",
    "load_mesh",
    "save_mesh",
    "neighbor_patch",
    "ReferenceElement",
    "QuadratureRule",
    "build_reference_element",
    "volume_quadrature",
    "face_quadrature",
    "DGOperator",
    "FieldState",
    "FluxTrace",
    "SourceSpec",
    "LSRK_A",
    "LSRK_B",
    "LSRK_C",
    "CFL_ALPHA",
    "cfl_time_step",
    "lsrk_step",
    "run_simulation",
    "LocalSaddleSystem",
    "PostprocessedState",
    "build_local_system",
    "postprocess_element",
    "postprocess_state",
    "scenarios",
    "analysis",
]

__version__ = "0.1.0"
