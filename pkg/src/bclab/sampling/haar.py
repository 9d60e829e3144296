"""Haar measure on U(q, F) for F = R, C, H."""

from __future__ import annotations

import numpy as np

from ..algebra import FMatrix, ScalarField, gaussian
from ..errors import DecompositionFailure
from .rng import as_generator


def haar_from_gaussian(g, field: ScalarField):
    """Q factor (positive-diagonal convention) of a batch of F-Gaussian matrices.

    For H the Gaussian is the embedding of a quaternion matrix; Gram-Schmidt of
    the interleaved columns keeps the symplectic block structure, so the
    unique positive-diagonal QR of the complex image is again an embedding.
    """
    g = np.asarray(g)
    if g.shape[-1] == field.block:  # q == 1
        if field.block == 1:
            return g / np.abs(g)
        norm = np.sqrt(np.abs(g[..., :1, :1]) ** 2 + np.abs(g[..., :1, 1:2]) ** 2)
        return g / norm
    try:
        q, r = np.linalg.qr(g)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(str(exc)) from exc
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(diag)
    if np.any(mag == 0):
        raise DecompositionFailure("singular Gaussian draw")
    return q * (diag / mag)[..., None, :]


def haar_batch(q: int, field, n: int, rng):
    """``n`` Haar unitaries as an embedded array of shape (n, bq, bq)."""
    field = ScalarField.parse(field)
    return haar_from_gaussian(gaussian(field, (n, q, q), as_generator(rng)), field)


def haar_unitary(q: int, field, rng) -> FMatrix:
    field = ScalarField.parse(field)
    return FMatrix(field, haar_batch(q, field, 1, rng)[0])
