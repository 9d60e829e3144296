"""Limit-theorem drivers, Gaussian targets and test statistics."""

from .drivers import (
    CltSchedule,
    ExperimentReport,
    Normalization,
    PRule,
    default_lambda_grid,
    lln_constants,
    run_inner_clt,
    run_lln,
    run_outer_clt_A,
    run_outer_clt_BC,
)
from .stats import TestStatistics, default_cf_grid, ks_critical, stat_tests, whitening
from .targets import BCGaussianTarget, GaussianTarget, gaussian_cf_target

__all__ = [
    "BCGaussianTarget",
    "CltSchedule",
    "ExperimentReport",
    "GaussianTarget",
    "Normalization",
    "PRule",
    "TestStatistics",
    "default_cf_grid",
    "default_lambda_grid",
    "gaussian_cf_target",
    "ks_critical",
    "lln_constants",
    "run_inner_clt",
    "run_lln",
    "run_outer_clt_A",
    "run_outer_clt_BC",
    "stat_tests",
    "whitening",
]
