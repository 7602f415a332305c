"""Discrete-time nonlinear optimal control.

Trajectory autodiff oracles, linear-quadratic dynamic programming, ILQR/ILQG
and DDP steps, and regularized (optionally accelerated) Gauss-Newton loops.
"""

from ._kernels import BACKEND
from .autodiff import (
    ForwardTape,
    OracleCounter,
    adjoint_product,
    check_gradient,
    fd_gradient,
    gradient,
    objective_gradient,
    record,
    tangent_product,
)
from .core import (
    ControlProblem,
    batch_objective,
    monte_carlo_objective,
    noisy_rollout,
    objective,
    rollout,
)
from .costs import CostFunction, QuadraticCost, SmoothCost, ZeroCost
from .dynamics import Dynamics, FiniteDifferenceDynamics, LinearDynamics
from .envs import (
    ENVIRONMENTS,
    make_env,
    pendulum_problem,
    random_lq_problem,
    recommended_gamma0,
    two_link_arm_problem,
)
from .errors import (
    CapabilityError,
    DeterministicProblemError,
    DimensionError,
    DivergedTrajectoryError,
    IllConditionedSubproblemError,
    IndefiniteModelError,
    LineSearchError,
    NoDecreaseError,
    TrajOptError,
    UnsupportedStructureError,
)
from .lqr import CostToGo, FeedbackPolicy, LqSubproblem, lq_backward, lq_rollout, lq_solve, lqg_backward
from .solvers import (
    SOLVERS,
    AccelState,
    ConvergenceRecord,
    SolverConfig,
    accelerated_reg_gn,
    ddp_solver,
    gradient_descent,
    ilqg_solver,
    ilqr_solver,
    regularized_ilqg_solver,
    regularized_ilqr,
    sufficient_decrease_linesearch,
    tassa_ilqg_solver,
)
from .steps import ddp_step, gn_step_dual, ilqg_step, ilqr_step, tassa_ilqg_step

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
