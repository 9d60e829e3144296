"""Distances between a point cloud and a Gaussian target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import SingularTargetWithoutDegenerateHandling
from .targets import GaussianTarget

WHITEN_CUTOFF = 1e-10
# eigenvalues below this are degenerate even when the whole covariance is tiny
ABS_FLOOR = 1e-12


def default_cf_grid(q: int):
    """Fixed real frequency grid: scaled unit vectors and the scaled all-ones direction."""
    radii = (0.25, 0.5, 1.0)
    dirs = list(np.eye(q))
    if q > 1:
        dirs.append(np.ones(q) / np.sqrt(q))
    return np.array([r * d for d in dirs for r in radii])


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Critical value of the one-sample KS statistic at level ``alpha``."""
    return float(stats.kstwo.isf(alpha, n))


@dataclass
class TestStatistics:
    ks: list
    ks_pvalues: list
    degenerate_dims: int
    degenerate_rms: float
    degenerate_max_abs: float
    frobenius_gap: float
    cf_max_distance: float
    cf_max_z: float
    covariance_trace: float
    mean_offset: list

    @property
    def ks_max(self):
        return max(self.ks) if self.ks else None

    def to_dict(self):
        return {
            "ks": list(self.ks),
            "ks_max": self.ks_max,
            "ks_pvalues": list(self.ks_pvalues),
            "degenerate_dims": self.degenerate_dims,
            "degenerate_rms": self.degenerate_rms,
            "degenerate_max_abs": self.degenerate_max_abs,
            "frobenius_gap": self.frobenius_gap,
            "cf_max_distance": self.cf_max_distance,
            "cf_max_z": self.cf_max_z,
            "covariance_trace": self.covariance_trace,
            "mean_offset": list(self.mean_offset),
        }


def whitening(cov, cutoff: float = WHITEN_CUTOFF):
    """Eigen-directions kept for whitening and the degenerate ones.

    Returns ``(W, D)``: rows of ``W`` map centred data to unit variance, rows
    of ``D`` span the directions whose eigenvalue is below ``cutoff * max``
    (or below ``ABS_FLOOR``).
    """
    ev, vec = np.linalg.eigh(np.atleast_2d(cov))
    top = ev.max() if ev.size else 0.0
    keep = ev > max(cutoff * top, ABS_FLOOR)
    w = (vec[:, keep] / np.sqrt(ev[keep])).T
    d = vec[:, ~keep].T
    return w, d


def stat_tests(cloud, target: GaussianTarget, cf_grid=None, degenerate_handling: bool = True) -> TestStatistics:
    """KS distances after whitening, covariance gap and CF-grid distance."""
    x = np.atleast_2d(np.asarray(getattr(cloud, "points", cloud), dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty cloud")
    if x.shape[1] != target.dim:
        raise ValueError("cloud and target dimensions differ")
    n = x.shape[0]
    centred = x - target.mean
    w, d = whitening(target.covariance)
    if d.shape[0] and not degenerate_handling:
        raise SingularTargetWithoutDegenerateHandling(
            f"target covariance has {d.shape[0]} degenerate direction(s)"
        )
    ks, pv = [], []
    for row in w:
        res = stats.kstest(centred @ row, "norm")
        ks.append(float(res.statistic))
        pv.append(float(res.pvalue))
    if d.shape[0]:
        proj = centred @ d.T
        deg_rms = float(np.sqrt(np.mean(proj**2)))
        deg_max = float(np.max(np.abs(proj)))
    else:
        deg_rms = deg_max = 0.0
    emp_cov = np.atleast_2d(np.cov(x, rowvar=False, bias=False)) if n > 1 else np.zeros_like(target.covariance)
    frob = float(np.linalg.norm(emp_cov - target.covariance))
    grid = default_cf_grid(target.dim) if cf_grid is None else np.atleast_2d(cf_grid)
    ecf_terms = np.exp(1j * x @ grid.T)
    ecf = ecf_terms.mean(axis=0)
    tcf = target.cf(grid)
    se = np.sqrt(np.maximum(1.0 - np.abs(tcf) ** 2, 1e-12) / n)
    dist = np.abs(ecf - tcf)
    return TestStatistics(
        ks=ks,
        ks_pvalues=pv,
        degenerate_dims=int(d.shape[0]),
        degenerate_rms=deg_rms,
        degenerate_max_abs=deg_max,
        frobenius_gap=frob,
        cf_max_distance=float(dist.max()),
        cf_max_z=float((dist / se).max()),
        covariance_trace=float(np.trace(emp_cov)),
        mean_offset=(x.mean(axis=0) - target.mean).tolist(),
    )
