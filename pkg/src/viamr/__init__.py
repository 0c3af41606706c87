"""Adaptive refinement of triangle meshes around the free boundary of the
obstacle problem, with a reduced-space Newton solver and free-boundary
quality metrics."""

from .amr import UdoParams, VcesParams, hybrid_decide, udo_tag, vces_mark
from .driver import RunConfig, run_partition_study, run_refinement_loop
from .errors import AssemblyError, ConfigError, InvalidArgument, SolverFailure
from .fem import FieldDG0, FieldP1
from .mesh import Mesh, build_adjacency, build_structured_square, refine_marked
from .problems import ball_obstacle, get_problem, poisson_reference, spiral_obstacle
from .visolve import SolverParams, VIProblemDiscrete, solve_vi

__version__ = "0.1.0"
