"""Quantitative projection pursuit: condition constants, Gaussian-approximation
bounds for random one-dimensional projections, certified bounded-Lipschitz
distances and Monte Carlo verification suites."""

from .dataset import Dataset, ConditionSummary, load_csv, generate, compute_conditions
from .randsphere import RngStream, Direction, RotationPair, sample_sphere, sample_haar, rotation_eps, q_matrix
from .measures import (
    EmpiricalMeasure,
    PiecewiseLinearFn,
    GaussianSpec,
    project,
    integrate,
    gaussian_expectation,
    builtin_test_functions,
)
from .blmetric import GridSpec, DBLEstimate, gz_approx, truncate_bl, dbl_grid_lp, w1_distance
from .bounds import (
    BoundReport,
    thm_testfcn_bound,
    thm_main_bound,
    annealed_tv_bound,
    remark_scales,
    waiting_time_lower,
)

__version__ = "0.1.0"
SUITE_VERSION = "pg-suite-1"
