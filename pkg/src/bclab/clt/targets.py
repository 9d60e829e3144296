"""Limit laws: classical Gaussian targets and the BC(p)-Gaussian transform."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chamber import ModelParams


def gaussian_cf_target(lam, t: float, p: float, params: ModelParams):
    """``exp(-t (lam_1^2 + ... + lam_q^2 + |rho(p)|^2) / 2)`` for real ``lam`` (last axis q)."""
    if t < 0:
        raise ValueError("time parameter must be nonnegative")
    lam = np.asarray(lam, dtype=np.float64)
    rho = params.with_p(p).rho
    return np.exp(-t * (np.sum(lam**2, axis=-1) + np.sum(rho**2)) / 2.0)


@dataclass(frozen=True)
class GaussianTarget:
    """Multivariate normal target ``N(mean, covariance)``."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError("covariance shape does not match the mean")
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def cf(self, lam):
        lam = np.atleast_2d(np.asarray(lam, dtype=np.float64))
        quad = np.einsum("gi,ij,gj->g", lam, self.covariance, lam)
        return np.exp(1j * lam @ self.mean - quad / 2.0)


@dataclass(frozen=True)
class BCGaussianTarget:
    """``gamma_s`` with ``s = E|x|^2 / c`` for a Laplacian constant ``c``.

    With ``c = pqd`` this is ``gamma_{t/p}`` with ``t = E|x|^2 / (qd)``.
    """

    second_moment: float
    constant: float
    params: ModelParams

    @property
    def time(self) -> float:
        return self.second_moment / self.constant

    def cf(self, lam):
        return gaussian_cf_target(lam, self.time, self.params.p, self.params)
