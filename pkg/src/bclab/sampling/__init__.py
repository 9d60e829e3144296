"""Random matrices, step laws and the hypergroup random-walk engine."""

from .ball import sample_mp, sample_mp_batch
from .haar import haar_batch, haar_unitary
from .measures import CoordinateLaw, DiracMixture, MeasureSpec, ProductPushforward, sample_nu, sample_nu_batch
from .rng import RngStream, as_generator, derive_seed
from .walk import (
    EmpiricalMeasure,
    convolve_arrays,
    convolve_point_pair,
    convolve_samples,
    log_singular_values,
    simulate_ensemble,
    simulate_walk,
)

__all__ = [
    "CoordinateLaw",
    "DiracMixture",
    "EmpiricalMeasure",
    "MeasureSpec",
    "ProductPushforward",
    "RngStream",
    "as_generator",
    "convolve_arrays",
    "convolve_point_pair",
    "convolve_samples",
    "derive_seed",
    "haar_batch",
    "haar_unitary",
    "log_singular_values",
    "sample_mp",
    "sample_mp_batch",
    "sample_nu",
    "sample_nu_batch",
    "simulate_ensemble",
    "simulate_walk",
]
