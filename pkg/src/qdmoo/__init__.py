"""Quality-diversity optimization as many-objective set optimization."""

from .estimator import SetQD
from .metrics import (CvtArchive, MetricsReport, build_cvt, compute_metrics, qvs,
                      soft_qd_estimate, vendi_score)
from .objectives import BehaviorGrid, KernelParams, eval_matrix, generate_grid
from .optimize import OptimConfig, RunTrace, run
from .problem import LinearProjection, SphereProblem, make_problem, toy_sphere_problem
from .scalarize import SmoothParams
from .validation import ConfigurationError, EvaluationError

__version__ = "0.1.0"
