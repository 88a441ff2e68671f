"""Periodic orbits of Hamiltonian systems on cotangent bundles of tori.

The time-one map is factored into symplectic twist maps; periodic orbits are
critical points of the resulting discrete action.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import CotangentPoint, MetricField, cometric, distance_with_partials, exp_time_map
from .dynamics import HamiltonianSpec, PotentialTerm, blend, flow, linearized_flow, time_one_map
from .twist import Decomposition, TwistStage, decompose, generating_value_and_partials, psi_inverse, twist_margin
from .action import (
    ActionHessian,
    BlockStatus,
    OrbitSequence,
    action_gradient,
    action_hessian,
    action_value,
    block_status,
    find_critical,
)
from .stability import FloquetReport, cross_validate, floquet_via_M, floquet_via_monodromy, monodromy
from .linking import LinkingReport, fiber_intersections, fixed_points_via_diagonal, linking_condition
