"""Iteratively regularized Gauss-Newton methods for sequentially observed inverse problems."""

from .covariance import CovarianceOperator, assemble_covariance, bessel_k, matern_kernel, sample_prior
from .darcy import DarcyProblem
from .errors import FactorizationError, KrylovError, PDESolveError, SolverError
from .gauss_newton import (
    GnConfig,
    Trajectory,
    gn_step_covariance,
    gn_step_identity,
    relative_error,
    run_cirgnm,
    run_dirgnm,
    run_hirgnm,
)
from .grid import Grid
from .observations import AveragedData, NoiseConfig, ObservationStream, average_update, misfit, sample_observation
from .potential import PotentialProblem
from .schedules import Discrepancy, Geometric, HolderRate, MaxIter, Power, should_stop

__version__ = "0.1.0"
