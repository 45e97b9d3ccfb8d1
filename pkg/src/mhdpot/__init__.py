"""Finite elements for 2D incompressible MHD in a magnetic potential formulation."""
from .mesh import Mesh, build_lshape_mesh, build_square_with_hole_mesh
from .potential import PhysicalParams
from .stepper import Discretization, MhdState, StepSources, initial_state, reconstruct_H, run, step

__version__ = "0.1.0"
