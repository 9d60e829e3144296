"""Sampling the matrix-ball measure m_p.

m_p has density proportional to ``det(I - w^*w)^gamma`` on the ball
``{w : w^*w <= I}`` of q x q matrices over F, ``gamma = d(p/2 + 1/2 - q) - 1``.

Two samplers are provided:

``direct`` (default)
    ``w = Y (Y^*Y + B)^{-1/2}`` with ``Y`` a q x q F-Gaussian and ``B`` an
    independent F-Wishart matrix with ``p - q`` degrees of freedom, generated by
    the Bartlett decomposition (real degrees of freedom are fine).  For integer
    p this is the top block of a Haar-distributed p x q isometry.  The change of
    variables ``(Y, B) -> (w, S = Y^*Y + B)`` factorises the joint density and
    leaves exactly the m_p density for ``w``; cost does not depend on p.

``rejection``
    Uniform proposals on the ball accepted with probability
    ``det(I - w^*w)^gamma``.  For q <= 2 the uniform proposal is exact (entrywise
    proposals in the unit ball of R^d, then the operator-norm test); for q >= 3
    it comes from a hit-and-run chain and is only approximately uniform.  The
    acceptance rate decays like p^(-q^2 d / 2), so this is a cross-check for
    small p, not a production sampler.
"""

from __future__ import annotations

import numpy as np

from ..algebra import FMatrix, ScalarField, adjoint, expand_diag, gaussian
from ..errors import SamplerError, UnsupportedExponent
from .rng import as_generator

MAX_PROPOSALS = 10**6
HIT_AND_RUN_BURN_IN = 500
HIT_AND_RUN_THIN = 20


def _check_exponent(params):
    gamma = params.mp_exponent
    if gamma < 0:
        raise UnsupportedExponent(
            f"m_p exponent {gamma:g} < 0 for p = {params.p:g}, q = {params.q}, d = {params.d}; "
            "the density is unbounded and is not sampled"
        )
    return gamma


# ----------------------------------------------------------------------------
# direct sampler


def mp_raw_draws(params, n: int, gen):
    """Raw random inputs for ``n`` direct draws, in a fixed consumption order."""
    q, field = params.q, params.field
    y = gaussian(field, (n, q, q), gen)
    dof = params.d * (params.p - q - np.arange(q))
    chi = gen.chisquare(np.broadcast_to(dof, (n, q)))
    off = gaussian(field, (n, q, q), gen) if q > 1 else None
    return y, chi, off


def mp_from_raw(params, y, chi, off):
    """Turn raw draws (leading batch axes allowed) into m_p samples."""
    q, field = params.q, params.field
    if q == 1:
        if field.block == 1:
            sq = np.abs(y) ** 2
        else:
            sq = (np.abs(y[..., :1, :1]) ** 2 + np.abs(y[..., :1, 1:2]) ** 2)
        return y / np.sqrt(sq + chi[..., None])
    b = field.block
    upper = np.triu(np.ones((q, q)), k=1)
    if b == 2:
        upper = np.kron(upper, np.ones((2, 2)))
    tri = off * upper
    idx = np.arange(q * b)
    tri[..., idx, idx] = expand_diag(field, np.sqrt(chi))
    s = adjoint(y) @ y + adjoint(tri) @ tri
    s = 0.5 * (s + adjoint(s))
    ev, vec = np.linalg.eigh(s)
    inv_sqrt = (vec * (1.0 / np.sqrt(ev))[..., None, :]) @ adjoint(vec)
    return y @ inv_sqrt


# ----------------------------------------------------------------------------
# rejection sampler


def _uniform_entries(field: ScalarField, shape, gen):
    """Entries uniform in the unit ball of R^d, embedded."""
    d = field.d
    g = gen.standard_normal(tuple(shape) + (d,))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    g *= gen.random(tuple(shape) + (1,)) ** (1.0 / d)
    if field is ScalarField.REAL:
        return g[..., 0]
    if field is ScalarField.COMPLEX:
        return g[..., 0] + 1j * g[..., 1]
    from ..algebra import quaternion_embed

    return quaternion_embed(g[..., 0] + 1j * g[..., 1], g[..., 2] + 1j * g[..., 3])


def _sigma_max(w):
    return np.linalg.svd(w, compute_uv=False)[..., 0]


def _log_det_defect(w, field: ScalarField):
    """ln det(I - w^*w) (Dieudonne for H), -inf outside the open ball."""
    eye = np.eye(w.shape[-1])
    m = eye - adjoint(w) @ w
    sign, logdet = np.linalg.slogdet(0.5 * (m + adjoint(m)))
    sign = np.real(sign)
    out = np.where(sign > 0, logdet.real, -np.inf)
    return out / field.block


def _box_proposals(params, m: int, gen):
    w = _uniform_entries(params.field, (m, params.q, params.q), gen)
    inside = _sigma_max(w) <= 1.0
    return w, inside


class _HitAndRun:
    """Parallel hit-and-run chains that are uniform on the matrix ball."""

    def __init__(self, params, chains: int, gen):
        self.params = params
        self.gen = gen
        bq = params.q * params.field.block
        self.state = np.zeros((chains, bq, bq), dtype=params.field.dtype)
        for _ in range(HIT_AND_RUN_BURN_IN):
            self.step()

    def _chord_end(self, direction, sign):
        lo = np.zeros(self.state.shape[0])
        hi = np.full(self.state.shape[0], 2.0 * np.sqrt(self.params.q))
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            inside = _sigma_max(self.state + (sign * mid)[:, None, None] * direction) <= 1.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return lo

    def step(self):
        p = self.params
        direction = gaussian(p.field, (self.state.shape[0], p.q, p.q), self.gen)
        direction /= np.sqrt(np.sum(np.abs(direction) ** 2, axis=(-2, -1), keepdims=True))
        t_plus = self._chord_end(direction, 1.0)
        t_minus = self._chord_end(direction, -1.0)
        t = -t_minus + (t_plus + t_minus) * self.gen.random(self.state.shape[0])
        self.state = self.state + t[:, None, None] * direction

    def draw(self):
        for _ in range(HIT_AND_RUN_THIN):
            self.step()
        return self.state.copy(), np.ones(self.state.shape[0], dtype=bool)


def _sample_rejection(params, n: int, gen, max_proposals=MAX_PROPOSALS):
    gamma = params.mp_exponent
    round_size = 4096 if params.q <= 2 else 256
    chain = _HitAndRun(params, round_size, gen) if params.q >= 3 else None
    accepted = []
    since_last = 0
    while len(accepted) < n:
        if chain is None:
            w, inside = _box_proposals(params, round_size, gen)
        else:
            w, inside = chain.draw()
        u = gen.random(round_size)
        logdens = np.full(round_size, -np.inf)
        if np.any(inside):
            logdens[inside] = gamma * _log_det_defect(w[inside], params.field) if gamma else 0.0
        hits = np.flatnonzero(inside & (np.log(u) < logdens))
        if hits.size and since_last + hits[0] <= max_proposals:
            take = hits[: n - len(accepted)]
            accepted.extend(w[take])
            since_last = round_size - 1 - take[-1]
        else:
            since_last += round_size
        if since_last > max_proposals:
            raise SamplerError(
                f"m_p rejection sampler exceeded {max_proposals} proposals for one sample "
                f"(q={params.q}, d={params.d}, p={params.p:g}, exponent={gamma:g}, "
                f"{len(accepted)}/{n} samples done)"
            )
    return np.stack(accepted[:n])


# ----------------------------------------------------------------------------
# public API


def sample_mp_batch(params, n: int, rng, method: str = "direct"):
    """``n`` samples of m_p as an embedded array (n, bq, bq)."""
    _check_exponent(params)
    gen = as_generator(rng)
    if method == "direct":
        return mp_from_raw(params, *mp_raw_draws(params, n, gen))
    if method == "rejection":
        return _sample_rejection(params, n, gen)
    raise ValueError(f"unknown m_p sampling method {method!r}")


def sample_mp(params, rng, method: str = "direct") -> FMatrix:
    return FMatrix(params.field, sample_mp_batch(params, 1, rng, method)[0])
