"""Monte Carlo spherical functions, moment functions and Fourier transforms.

Every integrand is a function of the log-minor increments
``f_r = ln D_r - ln D_{r-1}`` of the matrix inside the power function:

* type A at x:      ``u^* e^{2x} u``                 (Haar u)
* type BC at x:     ``g(x, u, w)``                   (Haar u, w ~ m_p)

so ``Delta_mu = exp(sum_r mu_r f_r)``, the spherical functions use
``mu = (i lam - rho) / 2`` and the moment functions use products of ``f_r / 2``.

Randomness is drawn in fixed chunks of ``DRAW_CHUNK`` samples from one
generator; the same stream therefore reproduces the same draws whatever points
or spectral parameters are being evaluated (shared randomness for finite
differences comes for free by reusing an ``RngStream``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .algebra import ScalarField, adjoint, expand_diag, log_minor_increments
from .chamber import ModelParams, coords_of, log_cosh_map, rho_a, snap_to_chamber
from .errors import NonIntegrableSpec, OutOfDualRegion, StencilLeavesChamber
from .sampling.ball import sample_mp_batch
from .sampling.haar import haar_batch
from .sampling.measures import MeasureSpec, sample_nu_batch
from .sampling.rng import as_generator

DRAW_CHUNK = 4096
# bound on (points x draws) matrices materialised at once
EVAL_BUDGET = 1 << 17


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate with its standard error."""

    value: object
    std_error: object
    n_mc: int

    def __post_init__(self):
        if self.n_mc < 1:
            raise ValueError("n_mc must be positive")
        if np.any(np.asarray(self.std_error) < 0):
            raise ValueError("standard errors must be nonnegative")

    def within(self, target, k: float = 3.0, atol: float = 0.0):
        """Elementwise ``|value - target| <= k * std_error + atol``."""
        return np.abs(np.asarray(self.value) - target) <= k * np.asarray(self.std_error) + atol

    def __getitem__(self, idx):
        return MomentEstimate(np.asarray(self.value)[idx], np.asarray(self.std_error)[idx], self.n_mc)

    def to_dict(self):
        val = np.asarray(self.value)
        if np.iscomplexobj(val):
            value = {"re": val.real.tolist(), "im": val.imag.tolist()}
        else:
            value = val.tolist()
        return {"value": value, "std_error": np.asarray(self.std_error).tolist(), "n_mc": int(self.n_mc)}


class _Running:
    """Chunk-merged mean and sum of squared deviations along axis 0."""

    def __init__(self, cov: bool = False):
        self.n = 0
        self.mean = None
        self.m2 = None
        self.cov = cov

    def add(self, vals):
        vals = np.asarray(vals)
        c = vals.shape[0]
        mc = vals.mean(axis=0)
        dev = vals - mc
        if self.cov:
            m2c = np.einsum("ni,nj->ij", dev, dev)
        else:
            m2c = np.sum(np.abs(dev) ** 2, axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = c, mc, m2c
            return
        delta = mc - self.mean
        tot = self.n + c
        corr = np.outer(delta, delta) if self.cov else np.abs(delta) ** 2
        self.mean = self.mean + delta * (c / tot)
        self.m2 = self.m2 + m2c + corr * (self.n * c / tot)
        self.n = tot

    def variance(self):
        if self.n < 2:
            return np.zeros_like(np.real(self.m2))
        return np.real(self.m2) / (self.n - 1)

    def std_error(self):
        return np.sqrt(np.maximum(self.variance(), 0.0) / self.n)


# ----------------------------------------------------------------------------
# draws and increments


def _draw_chunks(kind: str, params: ModelParams, n_mc: int, gen):
    done = 0
    while done < n_mc:
        c = min(DRAW_CHUNK, n_mc - done)
        u = haar_batch(params.q, params.field, c, gen)
        w = sample_mp_batch(params, c, gen) if kind == "bc" else None
        yield u, w
        done += c


def _zero_at_origin(x, f):
    # g = I at x = 0, so the increments vanish; QR round-off would leave ~1e-17
    origin = np.all(np.asarray(x) == 0.0, axis=-1)
    return np.where(origin[..., None], 0.0, f)


def increments_a(field: ScalarField, x, u):
    """Increments of ``u^* e^{2x} u``; ``x`` (..., q) broadcasts against ``u`` (..., bq, bq)."""
    return _zero_at_origin(x, log_minor_increments(field, x, u))


def increments_bc(field: ScalarField, x, u, w):
    """Increments of ``g(x, u, w)`` via ``g = A^*A``, ``A = (I + w^* tanh x) cosh x u``."""
    x = np.asarray(x, dtype=np.float64)
    t = expand_diag(field, np.tanh(x))
    k = adjoint(w) * t[..., None, :]
    idx = np.arange(k.shape[-1])
    k[..., idx, idx] += 1.0
    return _zero_at_origin(x, log_minor_increments(field, log_cosh_map(x), u, k))


def _increments(kind, field, x, u, w):
    if kind == "a":
        return increments_a(field, x, u)
    return increments_bc(field, x, u, w)


def _points(x, q: int, kind: str = "B"):
    pts = np.atleast_2d(coords_of(x))
    if pts.shape[-1] != q:
        raise ValueError(f"points must have {q} coordinates, got {pts.shape[-1]}")
    return snap_to_chamber(pts, kind)


def _evaluate(kind, params, xs, n_mc, rng, fn, weights=None, combined_cov=False):
    """Per-point running statistics of ``fn(f)`` over the draws.

    ``fn`` maps increments (m, c, q) to values (m, c, ...).  With ``weights``
    the per-draw weighted sum over points is tracked as well.
    """
    gen = as_generator(rng)
    m = xs.shape[0]
    batch = max(1, EVAL_BUDGET // DRAW_CHUNK)
    per_point = _Running()
    combined = _Running(cov=combined_cov) if weights is not None else None
    for u, w in _draw_chunks(kind, params, n_mc, gen):
        parts = []
        comb = 0.0
        for lo in range(0, m, batch):
            sl = slice(lo, min(lo + batch, m))
            f = _increments(kind, params.field, xs[sl, None, :], u[None], None if w is None else w[None])
            vals = fn(f)
            parts.append(vals)
            if weights is not None:
                comb = comb + np.tensordot(weights[sl], vals, axes=(0, 0))
        vals = np.concatenate(parts, axis=0)
        per_point.add(np.moveaxis(vals, 1, 0))
        if combined is not None:
            combined.add(comb)
    return per_point, combined


def _as_lam(lam, q):
    lam = np.asarray(lam, dtype=np.complex128)
    if lam.shape[-1] != q:
        raise ValueError(f"spectral parameter must have {q} entries")
    if not np.all(np.isfinite(lam)):
        raise ValueError("spectral parameter must be finite")
    return lam


def _phi(kind, lam, x, params, n_mc, rng, rho, chamber_kind):
    lam = _as_lam(lam, params.q)
    lam2 = np.atleast_2d(lam)
    xs = _points(x, params.q, chamber_kind)
    mu = (1j * lam2 - rho) / 2.0

    def fn(f):
        return np.exp(np.einsum("mcq,gq->mcg", f, mu))

    stats, _ = _evaluate(kind, params, xs, n_mc, rng, fn)
    value, se = stats.mean, stats.std_error()
    exact = np.all(mu == 0, axis=-1)
    value = np.where(exact[None, :], 1.0 + 0j, value)
    se = np.where(exact[None, :], 0.0, se)
    shape = np.shape(coords_of(x))[:-1] + lam.shape[:-1]
    return MomentEstimate(value.reshape(shape), se.reshape(shape), n_mc)


def phi_a(lam, x, n_mc: int, rng, field=ScalarField.REAL) -> MomentEstimate:
    """Type A spherical function ``int Delta_{(i lam - rho^A)/2}(u^* e^{2x} u) du``."""
    field = ScalarField.parse(field)
    q = np.shape(coords_of(x))[-1]
    params = _a_params(q, field)
    return _phi("a", lam, x, params, n_mc, rng, rho_a(q, field.d), "A")


def phi_bc(lam, x, params: ModelParams, n_mc: int, rng) -> MomentEstimate:
    """Type BC spherical function ``int int Delta_{(i lam - rho)/2}(g(x,u,w)) du dm_p(w)``."""
    return _phi("bc", lam, x, params, n_mc, rng, params.rho, "B")


def _a_params(q, field):
    # p is irrelevant for type A draws; any admissible value serves as a carrier
    return ModelParams(q, field, 2 * q)


def _multi_index(l, q):
    l = np.asarray(l, dtype=int).reshape(-1)
    if l.shape[0] != q or np.any(l < 0):
        raise ValueError(f"multi-index must be {q} nonnegative integers")
    if l.sum() > 4:
        raise ValueError("moment functions are supported up to order 4")
    return l


def _moment(kind, l, x, params, n_mc, rng, chamber_kind):
    l = _multi_index(l, params.q)
    xs = _points(x, params.q, chamber_kind)

    def fn(f):
        return np.prod((f / 2.0) ** l, axis=-1)

    stats, _ = _evaluate(kind, params, xs, n_mc, rng, fn)
    shape = np.shape(coords_of(x))[:-1]
    return MomentEstimate(stats.mean.reshape(shape), stats.std_error().reshape(shape), n_mc)


def moment_a(l, x, n_mc: int, rng, field=ScalarField.REAL) -> MomentEstimate:
    """Type A moment function ``m^A_l(x)``."""
    field = ScalarField.parse(field)
    q = np.shape(coords_of(x))[-1]
    return _moment("a", l, x, _a_params(q, field), n_mc, rng, "A")


def moment_bc(l, x, params: ModelParams, n_mc: int, rng) -> MomentEstimate:
    """Type BC moment function ``m^p_l(x)``."""
    return _moment("bc", l, x, params, n_mc, rng, "B")


def moment_modified(l, x, n_mc: int, rng, field=ScalarField.REAL) -> MomentEstimate:
    """``m~_l(x) = m^A_l(ln cosh x)``."""
    xs = snap_to_chamber(coords_of(x), "B")
    return moment_a(l, log_cosh_map(xs), n_mc, rng, field)


# ----------------------------------------------------------------------------
# moments of measures


@dataclass(frozen=True)
class MeasureMoments:
    """First moment vector, second moment matrix and ``Sigma = m_2 - m_1^t m_1``."""

    m1: MomentEstimate
    m2: MomentEstimate
    sigma: MomentEstimate

    def to_dict(self):
        return {"m1": self.m1.to_dict(), "m2": self.m2.to_dict(), "sigma": self.sigma.to_dict()}


def _moment_features(f):
    g = f / 2.0
    q = g.shape[-1]
    outer = g[..., :, None] * g[..., None, :]
    return np.concatenate([g, outer.reshape(g.shape[:-1] + (q * q,))], axis=-1)


def _sigma_from_features(mean, cov, n, q):
    m1 = mean[:q]
    m2 = mean[q:].reshape(q, q)
    m2 = 0.5 * (m2 + m2.T)
    sigma = m2 - np.outer(m1, m1)
    # delta method for Sigma_ij = M2_ij - m1_i m1_j
    jac = np.zeros((q, q, q + q * q))
    for i in range(q):
        for j in range(q):
            jac[i, j, q + i * q + j] = 1.0
            jac[i, j, i] -= m1[j]
            jac[i, j, j] -= m1[i]
    var = np.einsum("ija,ab,ijb->ij", jac, cov, jac) / n
    se_all = np.sqrt(np.maximum(np.diag(cov), 0.0) / n)
    return m1, m2, sigma, se_all[:q], se_all[q:].reshape(q, q), np.sqrt(np.maximum(var, 0.0))


def measure_moments(spec: MeasureSpec, kind: str, params: ModelParams, n_mc: int, rng) -> MeasureMoments:
    """Integrate the first and second moment functions against ``D_c(nu)``.

    ``kind`` is ``"modified"`` (``m~``, the p -> infinity limit) or ``"bc"``
    (``m^p`` at ``params.p``).  Dirac mixtures reuse one set of draws for all
    atoms; pushforward laws pair one point of nu with one draw.
    """
    kind = kind.lower()
    if kind not in ("modified", "bc"):
        raise ValueError("kind must be 'modified' or 'bc'")
    if spec.q != params.q:
        raise ValueError(f"measure has rank {spec.q} but the model has q = {params.q}")
    try:
        spec.require_moments(2)
    except Exception as exc:
        raise NonIntegrableSpec(str(exc)) from exc
    ikind = "a" if kind == "modified" else "bc"
    q = params.q
    gen = as_generator(rng)
    strata = spec.strata()
    feats = _Running(cov=True)
    if strata is not None:
        atoms, weights = strata
        xs = log_cosh_map(atoms) if kind == "modified" else atoms
        _, feats = _evaluate(ikind, params, xs, n_mc, gen, _moment_features, weights, combined_cov=True)
    else:
        done = 0
        while done < n_mc:
            c = min(DRAW_CHUNK, n_mc - done)
            x = sample_nu_batch(spec, c, gen)
            if kind == "modified":
                x = log_cosh_map(x)
            u = haar_batch(q, params.field, c, gen)
            w = sample_mp_batch(params, c, gen) if ikind == "bc" else None
            feats.add(_moment_features(_increments(ikind, params.field, x, u, w)))
            done += c
    m1, m2, sigma, se1, se2, ses = _sigma_from_features(feats.mean, feats.variance(), feats.n, q)
    return MeasureMoments(
        MomentEstimate(m1, se1, n_mc),
        MomentEstimate(m2, se2, n_mc),
        MomentEstimate(sigma, ses, n_mc),
    )


# ----------------------------------------------------------------------------
# Fourier transforms


def in_dual_region(im_lam, rho, tol: float = 1e-12) -> bool:
    """Whether ``im_lam`` lies in the convex hull of the B-type Weyl orbit of ``rho``.

    That hull is the set of vectors whose sorted absolute values are weakly
    majorised by ``rho``.
    """
    y = -np.sort(-np.abs(np.asarray(im_lam, dtype=np.float64)), axis=-1)
    r = -np.sort(-np.abs(np.asarray(rho, dtype=np.float64)))
    return bool(np.all(np.cumsum(y, axis=-1) <= np.cumsum(r) + tol))


def fourier_bc(measure, lam, params: ModelParams, n_mc: int, rng) -> MomentEstimate:
    """Spherical Fourier transform ``int phi_lam(x) d measure(x)``.

    ``measure`` is an EmpiricalMeasure (point cloud, uniform weights), a
    MeasureSpec with a Dirac mixture (exact atoms and weights) or a MeasureSpec
    with a pushforward law (``n_mc`` points drawn first).  All points share the
    same ``n_mc`` draws of (u, w); the standard error combines the spread over
    points with the spread over draws.
    """
    lam = _as_lam(lam, params.q)
    lam2 = np.atleast_2d(lam)
    if not in_dual_region(lam2.imag, params.rho):
        warnings.warn(
            "Im(lambda) lies outside co(W rho); the bound |phi| <= 1 does not apply",
            OutOfDualRegion,
            stacklevel=2,
        )
    gen = as_generator(rng)
    sampled = False
    if isinstance(measure, MeasureSpec):
        strata = measure.strata()
        if strata is None:
            xs = sample_nu_batch(measure, n_mc, gen)
            weights = np.full(xs.shape[0], 1.0 / xs.shape[0])
            sampled = True
        else:
            xs, weights = strata
    else:
        xs = np.atleast_2d(np.asarray(getattr(measure, "points", measure), dtype=np.float64))
        weights = np.full(xs.shape[0], 1.0 / xs.shape[0])
        sampled = True
    xs = _points(xs, params.q, "B")
    mu = (1j * lam2 - params.rho) / 2.0

    def fn(f):
        return np.exp(np.einsum("mcq,gq->mcg", f, mu))

    per_point, combined = _evaluate("bc", params, xs, n_mc, gen, fn, weights)
    value = combined.mean
    var = combined.variance() / combined.n
    if sampled and xs.shape[0] > 1:
        spread = np.sum(np.abs(per_point.mean - value) ** 2, axis=0) / (xs.shape[0] - 1)
        var = var + spread / xs.shape[0]
    exact = np.all(mu == 0, axis=-1)
    value = np.where(exact, 1.0 + 0j, value)
    se = np.where(exact, 0.0, np.sqrt(var))
    shape = lam.shape[:-1]
    return MomentEstimate(value.reshape(shape), se.reshape(shape), n_mc)


def fourier_bc_paired(points, lam, params: ModelParams, rng) -> MomentEstimate:
    """Transform of a point cloud with one independent ``(u, w)`` draw per point.

    Each term is an unbiased draw of the joint integrand, so the standard
    error is the plain iid one.  Preferable to ``fourier_bc`` for large clouds
    of sampled points, where a few shared draws make the integrand's heavy
    upper tail invisible to the variance estimate.
    """
    lam = _as_lam(lam, params.q)
    lam2 = np.atleast_2d(lam)
    xs = _points(getattr(points, "points", points), params.q, "B")
    mu = (1j * lam2 - params.rho) / 2.0
    gen = as_generator(rng)
    stats = _Running()
    lo = 0
    for u, w in _draw_chunks("bc", params, xs.shape[0], gen):
        sl = slice(lo, lo + u.shape[0])
        f = increments_bc(params.field, xs[sl], u, w)
        stats.add(np.exp(f @ mu.T))
        lo = sl.stop
    value, se = stats.mean, stats.std_error()
    exact = np.all(mu == 0, axis=-1)
    value = np.where(exact, 1.0 + 0j, value)
    se = np.where(exact, 0.0, se)
    shape = lam.shape[:-1]
    return MomentEstimate(value.reshape(shape), se.reshape(shape), xs.shape[0])


# ----------------------------------------------------------------------------
# the operator L and the curvature of phi at 0


def _l_coefficients(params: ModelParams):
    k1, k2, k3 = params.multiplicities
    return k1, k2, k3


def apply_L_fd(phi_eval, x, params: ModelParams, h: float = 1e-2, batched: bool = False) -> complex:
    """Central finite-difference value of ``L phi`` at an interior point ``x``.

    ``L = sum_i [d_i^2 + (2 k1 coth x_i + 4 k2 coth 2x_i) d_i]
    + 2 k3 sum_{i<j} [coth(x_i + x_j)(d_i + d_j) + coth(x_i - x_j)(d_i - d_j)]``.

    ``phi_eval`` maps a point (q,) to a number, or a stack (m, q) to (m,) when
    ``batched``.  Reuse one RngStream inside ``phi_eval`` so every stencil
    point sees the same draws.
    """
    x = np.asarray(coords_of(x), dtype=np.float64).reshape(-1)
    q = x.shape[0]
    if q != params.q:
        raise ValueError(f"point must have {params.q} coordinates")
    gaps = np.append(x[:-1] - x[1:], x[-1])
    if h <= 0 or np.any(gaps <= h):
        raise StencilLeavesChamber(
            f"stencil of half-width {h:g} around {x} leaves the open chamber (gaps {gaps})"
        )
    eye = np.eye(q)
    stencil = np.vstack([x[None, :], x + h * eye, x - h * eye])
    if batched:
        vals = np.asarray(phi_eval(stencil)).reshape(-1)
    else:
        vals = np.array([complex(phi_eval(pt)) for pt in stencil])
    f0, fp, fm = vals[0], vals[1 : q + 1], vals[q + 1 :]
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / h**2
    k1, k2, k3 = _l_coefficients(params)
    out = np.sum(d2 + (2 * k1 / np.tanh(x) + 4 * k2 / np.tanh(2 * x)) * d1)
    for i in range(q):
        for j in range(i + 1, q):
            out += 2 * k3 * (
                (d1[i] + d1[j]) / np.tanh(x[i] + x[j]) + (d1[i] - d1[j]) / np.tanh(x[i] - x[j])
            )
    return complex(out)


def eigen_residual(lam, x, params: ModelParams, n_mc: int, rng, h: float = 1e-2):
    """Relative residual ``|L phi + (|lam|^2 + |rho|^2) phi| / |(|lam|^2 + |rho|^2) phi|``."""
    lam = np.asarray(lam, dtype=np.complex128).reshape(-1)

    def phi_eval(points):
        return phi_bc(lam, points, params, n_mc, rng).value

    lphi = apply_L_fd(phi_eval, x, params, h, batched=True)
    phi0 = phi_bc(lam, x, params, n_mc, rng).value
    eig = np.sum(lam**2) + np.sum(params.rho**2)
    return abs(lphi + eig * phi0) / abs(eig * phi0), lphi, complex(phi0)


@dataclass(frozen=True)
class CurvatureAtZero:
    """``d^2 phi / dx_1^2 (0)`` and the implied constant ``c`` in ``-(|lam|^2 + |rho|^2) / c``."""

    second_derivative: MomentEstimate
    implied_constant: float
    implied_constant_se: float
    candidates: dict

    def to_dict(self):
        return {
            "second_derivative": self.second_derivative.to_dict(),
            "implied_constant": self.implied_constant,
            "implied_constant_se": self.implied_constant_se,
            "candidates": dict(self.candidates),
        }


def curvature_at_zero(lam, params: ModelParams, n_mc: int, rng, h: float = 0.05) -> CurvatureAtZero:
    """Second derivative of ``phi_lam`` at 0 along ``e_1`` by a symmetric difference.

    ``phi`` is even in each coordinate, so ``(phi(h e1) + phi(-h e1) - 2) / h^2``
    with shared draws; evaluating at ``-h e1`` with draws ``(u, w)`` equals
    ``h e1`` with ``(u, -w)``, which makes the pair antithetic.
    """
    lam = _as_lam(np.asarray(lam, dtype=np.complex128).reshape(-1), params.q)
    q = params.q
    x = np.zeros(q)
    x[0] = h
    mu = (1j * lam - params.rho) / 2.0
    gen = as_generator(rng)
    stats = _Running()
    for u, w in _draw_chunks("bc", params, n_mc, gen):
        fp = increments_bc(params.field, x, u, w)
        fm = increments_bc(params.field, x, u, -w)
        vals = (np.exp(fp @ mu) + np.exp(fm @ mu) - 2.0) / h**2
        stats.add(vals)
    d2 = MomentEstimate(stats.mean, stats.std_error(), n_mc)
    eig = np.sum(lam**2) + np.sum(params.rho**2)
    c = float(np.real(-eig / d2.value))
    c_se = float(abs(c) * d2.std_error / abs(d2.value))
    candidates = {
        "pqd": params.laplace_const_paper,
        "q(d(p+1)-1)": params.laplace_const_multiplicity,
    }
    return CurvatureAtZero(d2, c, c_se, candidates)


def moment_gap(l, spec: MeasureSpec, params: ModelParams, n_mc: int, rng) -> MomentEstimate:
    """``m^p_l(nu) - m~_l(nu)`` for a Dirac mixture, with shared randomness.

    With ``w = 0`` the BC integrand reduces to the type A integrand at
    ``ln cosh x``, so the gap is ``E[F(x,u,w) - F(x,u,0)]``; pairing ``w`` with
    ``-w`` (same law under m_p) removes the odd part of the noise.
    """
    l = _multi_index(l, params.q)
    strata = spec.strata()
    if strata is None:
        raise ValueError("moment_gap needs a Dirac mixture")
    atoms, weights = strata
    gen = as_generator(rng)
    stats = _Running()
    for u, w in _draw_chunks("bc", params, n_mc, gen):
        total = 0.0
        for a, wt in zip(atoms, weights):
            fp = increments_bc(params.field, a, u, w)
            fm = increments_bc(params.field, a, u, -w)
            f0 = increments_a(params.field, log_cosh_map(a), u)
            mom = [np.prod((f / 2.0) ** l, axis=-1) for f in (fp, fm, f0)]
            total = total + wt * (0.5 * (mom[0] + mom[1]) - mom[2])
        stats.add(total)
    return MomentEstimate(stats.mean, stats.std_error(), n_mc)
