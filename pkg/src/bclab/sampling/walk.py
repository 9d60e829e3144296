"""Hypergroup convolution sampler and the random-walk engine.

One exact sample from ``delta_x * delta_y`` is ``arcosh`` of the singular values
of ``sinh(x) w sinh(y) + cosh(x) v cosh(y)`` with ``v`` Haar and ``w ~ m_p``.
Writing that matrix as ``C1 K C2`` with ``C = cosh``, ``K = v + tanh(x) w tanh(y)``
keeps all the large numbers in two diagonal factors.  A plain SVD only resolves
singular values down to ``eps * sigma_1``, which is useless once walk
coordinates spread by more than about 30, so the log singular values are taken
from log norms of compound matrices instead: ``ln(sigma_1 ... sigma_r)`` is the
log of the largest singular value of the r-th compound of ``C1 K C2``, and the
compound of a diagonal matrix is diagonal.
"""

from __future__ import annotations

import hashlib
import io
import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..algebra import ScalarField, expand_diag, gaussian
from ..chamber import ChamberPoint, ModelParams, coords_of, inverse_log_cosh, log_cosh_map
from ..errors import DomainError
from .ball import _check_exponent, mp_from_raw, mp_raw_draws, sample_mp_batch
from .haar import haar_from_gaussian
from .measures import MeasureSpec, sample_nu_batch
from .rng import RngStream, as_generator

BLOCK_STEPS = 64
CHUNK_REPLICAS = 256


# ----------------------------------------------------------------------------
# singular values of graded products


@lru_cache(maxsize=None)
def _combos(n: int, m: int):
    return np.array(list(itertools.combinations(range(n), m)), dtype=np.intp)


def _log_top_sv(a, k, b, m: int):
    """ln of the top singular value of the order-``m`` compound of diag(e^a) k diag(e^b)."""
    if m == 1:
        sa, sb, det = a, b, k
    else:
        idx = _combos(k.shape[-1], m)
        sub = k[..., idx[:, None, :, None], idx[None, :, None, :]]
        det = np.linalg.det(sub)
        sa = a[..., idx].sum(axis=-1)
        sb = b[..., idx].sum(axis=-1)
    ma = sa.max(axis=-1, keepdims=True)
    mb = sb.max(axis=-1, keepdims=True)
    scaled = np.exp(sa - ma)[..., :, None] * det * np.exp(sb - mb)[..., None, :]
    top = np.linalg.svd(scaled, compute_uv=False)[..., 0]
    with np.errstate(divide="ignore"):
        return np.log(top) + ma[..., 0] + mb[..., 0]


def log_singular_values(field: ScalarField, log_left, k, log_right):
    """Descending ``ln sigma`` of ``diag(e^log_left) k diag(e^log_right)``, batched.

    ``log_left`` and ``log_right`` are (..., q) in logical coordinates; for H the
    embedded singular values come in pairs and one of each pair is returned.
    """
    bl = field.block
    a = expand_diag(field, log_left)
    b = expand_diag(field, log_right)
    q = a.shape[-1] // bl
    cum = [np.zeros(a.shape[:-1])]
    for r in range(1, q + 1):
        if r == q:
            _, ld = np.linalg.slogdet(k)
            total = np.real(ld) + a.sum(axis=-1) + b.sum(axis=-1)
        elif r == 1 and bl == 1:
            total = _log_top_sv(a, k, b, 1)
        else:
            total = _log_top_sv(a, k, b, r * bl)
        cum.append(total / bl)
    cum = np.stack(cum, axis=-1)
    logs = np.diff(cum, axis=-1)
    logs = np.nan_to_num(logs, nan=0.0, neginf=0.0, posinf=np.inf)
    return -np.sort(-logs, axis=-1)


def convolve_arrays(s, y, v, w, field: ScalarField):
    """Batched convolution step; rows of ``s`` and ``y`` are chamber points.

    Rows with ``s == 0`` return ``y`` and rows with ``y == 0`` return ``s``
    bit for bit (the identity of the hypergroup).
    """
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ts = expand_diag(field, np.tanh(s))
    ty = expand_diag(field, np.tanh(y))
    k = v + ts[..., :, None] * w * ty[..., None, :]
    logsv = log_singular_values(field, log_cosh_map(s), k, log_cosh_map(y))
    z = inverse_log_cosh(np.maximum(logsv, 0.0))
    s_zero = np.all(s == 0.0, axis=-1)
    y_zero = np.all(y == 0.0, axis=-1)
    z = np.where(s_zero[..., None], y, z)
    z = np.where(y_zero[..., None] & ~s_zero[..., None], s, z)
    return z


def convolve_point_pair(x, y, params: ModelParams, rng, mp_method: str = "direct") -> ChamberPoint:
    """One sample from ``delta_x *_p delta_y``."""
    gen = as_generator(rng)
    xa = coords_of(x).reshape(1, -1)
    ya = coords_of(y).reshape(1, -1)
    if xa.shape[1] != params.q or ya.shape[1] != params.q:
        raise DomainError(f"points must have {params.q} coordinates")
    ChamberPoint(xa[0])
    ChamberPoint(ya[0])
    v = haar_from_gaussian(gaussian(params.field, (1, params.q, params.q), gen), params.field)
    w = sample_mp_batch(params, 1, gen, mp_method)
    return ChamberPoint(convolve_arrays(xa, ya, v, w, params.field)[0], "B")


def convolve_samples(x, y, params: ModelParams, n: int, rng, mp_method: str = "direct"):
    """``n`` samples of ``delta_x *_p delta_y`` (x, y broadcast over rows)."""
    gen = as_generator(rng)
    xa = np.broadcast_to(coords_of(x), (n, params.q))
    ya = np.broadcast_to(coords_of(y), (n, params.q))
    v = haar_from_gaussian(gaussian(params.field, (n, params.q, params.q), gen), params.field)
    w = sample_mp_batch(params, n, gen, mp_method)
    return convolve_arrays(xa, ya, v, w, params.field)


# ----------------------------------------------------------------------------
# walk engine


def _block_draws(gen, spec: MeasureSpec, params: ModelParams, steps: int, mp_method: str):
    """All randomness one replica needs for ``steps`` steps, in a fixed order."""
    nu = sample_nu_batch(spec, steps, gen)
    hg = gaussian(params.field, (steps, params.q, params.q), gen)
    if mp_method == "direct":
        mp = mp_raw_draws(params, steps, gen)
    else:
        mp = sample_mp_batch(params, steps, gen, mp_method)
    return nu, hg, mp


def _stack(items):
    return None if items[0] is None else np.stack(items)


def _run_chunk(spec: MeasureSpec, n: int, params: ModelParams, gens, mp_method: str):
    """Walks for one batch of replicas, each consuming its own generator."""
    field = params.field
    state = np.zeros((len(gens), params.q))
    done = 0
    while done < n:
        steps = min(BLOCK_STEPS, n - done)
        draws = [_block_draws(g, spec, params, steps, mp_method) for g in gens]
        nu = np.stack([d[0] for d in draws])
        v = haar_from_gaussian(np.stack([d[1] for d in draws]), field)
        if mp_method == "direct":
            raw = [_stack([d[2][i] for d in draws]) for i in range(3)]
            w = mp_from_raw(params, *raw)
        else:
            w = np.stack([d[2] for d in draws])
        for t in range(steps):
            state = convolve_arrays(state, nu[:, t], v[:, t], w[:, t], field)
        done += steps
    return state


def simulate_walk(spec: MeasureSpec, n: int, params: ModelParams, rng, mp_method: str = "direct") -> ChamberPoint:
    """``S_n`` of one walk started at 0."""
    if n < 0:
        raise DomainError("walk length must be nonnegative")
    _validate_walk(spec, params, n)
    gen = as_generator(rng)
    return ChamberPoint(_run_chunk(spec, n, params, [gen], mp_method)[0], "B")


def _validate_walk(spec: MeasureSpec, params: ModelParams, n: int):
    if spec.q != params.q:
        raise DomainError(f"measure has rank {spec.q} but the model has q = {params.q}")
    if n > 0:
        _check_exponent(params)


def simulate_ensemble(
    spec: MeasureSpec,
    n: int,
    params: ModelParams,
    replicas: int,
    base: RngStream,
    workers: int = 1,
    mp_method: str = "direct",
) -> "EmpiricalMeasure":
    """``replicas`` independent walks; replica r uses stream ``base.child(r)``.

    Replicas are processed in fixed chunks of ``CHUNK_REPLICAS``; ``workers``
    only decides how many chunks run concurrently, so the output is the same
    for every worker count.
    """
    if replicas < 1:
        raise DomainError("need at least one replica")
    if n < 0:
        raise DomainError("walk length must be nonnegative")
    _validate_walk(spec, params, n)
    if not isinstance(base, RngStream):
        base = RngStream(int(base))
    bounds = [(lo, min(lo + CHUNK_REPLICAS, replicas)) for lo in range(0, replicas, CHUNK_REPLICAS)]

    def job(bound):
        lo, hi = bound
        gens = [base.child(r).generator() for r in range(lo, hi)]
        return _run_chunk(spec, n, params, gens, mp_method)

    if workers <= 1 or len(bounds) == 1:
        parts = [job(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    return EmpiricalMeasure(
        points=np.concatenate(parts, axis=0),
        seed=base.seed,
        stream_id=base.stream_id,
        replicas=replicas,
        params=params,
        n=n,
        spec=spec,
    )


# ----------------------------------------------------------------------------
# empirical measures


def format_float(x: float) -> str:
    """Shortest repr that round-trips."""
    return repr(float(x))


@dataclass
class EmpiricalMeasure:
    """Point cloud of walk end points with the information needed to reproduce it."""

    points: np.ndarray
    seed: int | None = None
    stream_id: int = 0
    replicas: int | None = None
    params: ModelParams | None = None
    n: int | None = None
    spec: MeasureSpec | None = None
    extra: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.replicas is None:
            self.replicas = self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(f"x{i + 1}" for i in range(self.q)) + "\n")
        for row in self.points:
            buf.write(",".join(format_float(v) for v in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv_text())
        return path

    @classmethod
    def read_csv(cls, path) -> "EmpiricalMeasure":
        text = Path(path).read_text().splitlines()
        header = text[0].split(",")
        rows = [list(map(float, line.split(","))) for line in text[1:] if line]
        pts = np.array(rows, dtype=np.float64).reshape(-1, len(header))
        return cls(points=pts)

    def manifest(self, config_hash: str | None = None) -> dict:
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "stream_count": self.replicas,
            "params": None if self.params is None else self.params.to_dict(),
            "walk_length": self.n,
            "measure": None if self.spec is None else self.spec.to_dict(),
            "config_hash": config_hash,
            "data_hash": hashlib.sha256(self.to_csv_text().encode()).hexdigest(),
            **self.extra,
        }

    def write_manifest(self, path, config_hash: str | None = None) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.manifest(config_hash), indent=2, sort_keys=True) + "\n")
        return path
