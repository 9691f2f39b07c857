"""Estimator-style front end over :func:`qdmoo.optimize.run`."""

import numpy as np
from sklearn.base import BaseEstimator

from . import metrics
from .objectives import generate_grid
from .optimize import OptimConfig, run


class SetQD(BaseEstimator):
    """Optimize a solution set for a differentiable QD problem.

    Constructor parameters mirror :class:`~qdmoo.optimize.OptimConfig`. ``fit``
    takes a :class:`~qdmoo.problem.Problem` instead of a data matrix.

    Attributes
    ----------
    solutions_ : ndarray of shape (K, n)
    trace_ : RunTrace
    grid_ : BehaviorGrid
    config_ : OptimConfig
    """

    def __init__(self, scalarization="stch-set", K=1024, iterations=1000, batch_size=64,
                 lr=0.05, beta1=0.9, beta2=0.999, eps_adam=1e-8, mu=0.01, mu_inner=None,
                 gamma_sq=None, epsilon_ref=0.1, ref_refresh_interval=1,
                 eq13_form="appendix-d", lambda_mode="uniform", seed=0, grid_M=10_000,
                 grid_method="sobol", grid_seed=0, checkpoint_interval=100,
                 solution_batch_size=None):
        self.scalarization = scalarization
        self.K = K
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_adam = eps_adam
        self.mu = mu
        self.mu_inner = mu_inner
        self.gamma_sq = gamma_sq
        self.epsilon_ref = epsilon_ref
        self.ref_refresh_interval = ref_refresh_interval
        self.eq13_form = eq13_form
        self.lambda_mode = lambda_mode
        self.seed = seed
        self.grid_M = grid_M
        self.grid_method = grid_method
        self.grid_seed = grid_seed
        self.checkpoint_interval = checkpoint_interval
        self.solution_batch_size = solution_batch_size

    def fit(self, problem, X0=None, metrics_fn=None, trace_file=None):
        cfg = OptimConfig(**self.get_params()).validate()
        grid = generate_grid(problem.spec.behavior_bounds, cfg.grid_M, cfg.grid_method,
                             cfg.grid_seed)
        X, trace = run(cfg, problem, grid=grid, metrics_fn=metrics_fn,
                       trace_file=trace_file, X0=X0)
        self.problem_ = problem
        self.config_ = cfg
        self.grid_ = grid
        self.solutions_ = X
        self.trace_ = trace
        return self

    def evaluate(self, cells=512, sigma=None, archive_seed=0):
        """MetricsReport of the fitted set against a CVT archive of ``cells`` cells."""
        problem = self.problem_
        ev = problem.evaluate(self.solutions_)
        archive = metrics.build_cvt(problem.spec.behavior_bounds, cells, seed=archive_seed)
        if sigma is None:
            sigma = np.sqrt(self.config_.resolved_gamma_sq(problem.d) / 2.0)
        report, _ = metrics.compute_metrics(ev.f, ev.b, archive, sigma, self.grid_, d=problem.d)
        return report

    def score(self, cells=512):
        """QD Score of the fitted set."""
        return self.evaluate(cells=cells).qd_score
