"""Experiment drivers for the outer, inner and law-of-large-numbers limit theorems."""

from __future__ import annotations

import enum
import io
import json
import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..chamber import ModelParams, inverse_log_cosh, log_cosh_map
from ..errors import InsufficientMoments, InvalidSpec, ScheduleViolation
from ..sampling.measures import MeasureSpec
from ..sampling.rng import RngStream
from ..sampling.walk import simulate_ensemble
from ..special import fourier_bc, measure_moments
from .stats import default_cf_grid, stat_tests
from .targets import BCGaussianTarget, GaussianTarget

KS_THRESHOLD = 0.05
CF_SIGMAS = 3.0
LLN_TOLERANCE = 0.02
COLLAPSE_RATIO = 0.5


class Normalization(enum.Enum):
    OUTER_A = "outer_a"
    OUTER_BC = "outer_bc"
    INNER = "inner"
    LLN = "lln"


@dataclass(frozen=True)
class PRule:
    """``n -> p_n``: ``power`` a n^b, ``linear`` a + b n, or ``constant`` a.

    ``floor`` raises small values to ``2q`` (the default Theorem 4.1 rule is
    ``max(2q, n^2)``); without it a value below ``2q`` is a schedule error.
    """

    kind: str
    a: float
    b: float = 0.0
    floor: bool = False

    def __post_init__(self):
        if self.kind not in ("power", "linear", "constant"):
            raise ScheduleViolation(f"unknown p rule {self.kind!r}")

    @classmethod
    def from_dict(cls, data) -> "PRule":
        data = dict(data)
        unknown = set(data) - {"kind", "a", "b", "floor"}
        if unknown:
            raise ScheduleViolation(f"unknown p_rule keys: {sorted(unknown)}")
        return cls(data["kind"], float(data["a"]), float(data.get("b", 0.0)), bool(data.get("floor", False)))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "floor": self.floor}

    def __call__(self, n: int, q: int) -> float:
        if self.kind == "power":
            p = self.a * float(n) ** self.b
        elif self.kind == "linear":
            p = self.a + self.b * n
        else:
            p = self.a
        if self.floor:
            p = max(p, 2.0 * q)
        if p < 2 * q:
            raise ScheduleViolation(f"p_n = {p:g} at n = {n} is below 2q = {2 * q}")
        return float(p)


@dataclass(frozen=True)
class CltSchedule:
    n_grid: tuple
    p_rule: PRule
    replicas: int
    normalization: Normalization

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 0 for n in grid) or list(grid) != sorted(set(grid)):
            raise ScheduleViolation("n_grid must be strictly increasing nonnegative integers")
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if int(self.replicas) < 1:
            raise ScheduleViolation("replicas must be positive")

    @property
    def positive_grid(self):
        return [n for n in self.n_grid if n > 0]

    def p_of(self, n: int, q: int) -> float:
        return self.p_rule(max(n, 1), q)

    def validate(self, q: int):
        ps = [self.p_of(n, q) for n in self.n_grid]
        if self.normalization in (Normalization.OUTER_A, Normalization.LLN):
            pos = self.positive_grid
            ratios = [n / self.p_of(n, q) for n in pos]
            if any(b >= a for a, b in zip(ratios, ratios[1:])) or (ratios and ratios[-1] >= 1.0):
                raise ScheduleViolation(
                    f"n/p_n must decrease towards 0 along the grid, got {[round(r, 6) for r in ratios]}"
                )
        return ps

    def to_dict(self):
        return {
            "n_grid": list(self.n_grid),
            "p_rule": self.p_rule.to_dict(),
            "replicas": int(self.replicas),
            "normalization": self.normalization.value,
        }


@dataclass
class ExperimentReport:
    """Per-n statistics and verdicts of one driver run.

    ``points`` holds the walk end points at the largest n; it is written to
    its own CSV file and is not part of the JSON report.
    """

    driver: str
    config: dict
    seed: int
    rows: list
    verdicts: dict
    flags: dict = dc_field(default_factory=dict)
    wall_clock_s: float = 0.0
    points: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values() if v.get("gating", True))

    def to_dict(self):
        return {
            "driver": self.driver,
            "config": self.config,
            "seed": self.seed,
            "rows": self.rows,
            "verdicts": self.verdicts,
            "flags": self.flags,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        """Deterministic JSON; wall-clock time is left out on purpose."""
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        flat = [_flatten(r) for r in self.rows]
        keys = []
        for r in flat:
            for k in r:
                if k not in keys:
                    keys.append(k)
        buf = io.StringIO()
        buf.write(",".join(keys) + "\n")
        for r in flat:
            buf.write(",".join(_fmt(r.get(k)) for k in keys) + "\n")
        return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _flatten(row, prefix=""):
    out = {}
    for k, v in row.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple, np.ndarray)):
            for i, item in enumerate(np.asarray(v).reshape(-1).tolist()):
                out[f"{key}_{i + 1}"] = item
        else:
            out[key] = v
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _verdict(passed, value, threshold, rule, gating=True):
    return {"passed": bool(passed), "value": value, "threshold": threshold, "rule": rule, "gating": gating}


def _monotone_violations(values):
    vals = [v for v in values if v is not None]
    return sum(1 for a, b in zip(vals, vals[1:]) if b > a)


def _require_walk_spec(spec: MeasureSpec, order: int):
    if spec.is_dirac_at_zero:
        raise InvalidSpec("the step law must differ from the point mass at 0")
    try:
        spec.require_moments(order)
    except InsufficientMoments:
        raise
    except Exception as exc:
        raise InsufficientMoments(str(exc)) from exc


def _as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))


def _walk(spec, n, params, replicas, stream, workers):
    return simulate_ensemble(spec, n, params, replicas, stream.substream("walk", n), workers=workers)


# ----------------------------------------------------------------------------
# outer normalisation


def _outer(driver, spec, sched, params, rng, n_mc, workers, cf_grid, expected):
    t0 = time.perf_counter()
    if sched.normalization is not expected:
        raise ScheduleViolation(f"{driver} needs a {expected.value} schedule, got {sched.normalization.value}")
    if spec.q != params.q:
        raise InvalidSpec(f"measure has rank {spec.q} but the model has q = {params.q}")
    _require_walk_spec(spec, 4 if expected is Normalization.OUTER_BC else 2)
    sched.validate(params.q)
    stream = _as_stream(rng)
    q = params.q
    modified = measure_moments(spec, "modified", params, n_mc, stream.substream("moments", "modified"))
    target = GaussianTarget(np.zeros(q), modified.sigma.value)
    grid = default_cf_grid(q) if cf_grid is None else np.atleast_2d(cf_grid)
    rows = []
    for n in sched.n_grid:
        p_n = sched.p_of(n, q)
        pn = params.with_p(p_n)
        ens = _walk(spec, n, pn, sched.replicas, stream, workers)
        last = ens.points
        row = {"n": n, "p": p_n, "sanity": n == 0}
        if expected is Normalization.OUTER_BC:
            bc = measure_moments(spec, "bc", pn, n_mc, stream.substream("moments", "bc", n))
            centre = bc.m1.value
            row["m1_bc"] = bc.m1.value
            row["m1_bc_se"] = bc.m1.std_error
            row["centering_gap"] = float(n * np.linalg.norm(bc.m1.value - modified.m1.value))
            row["prop_rate_n_over_sqrt_p"] = float(n / math.sqrt(p_n))
        else:
            centre = modified.m1.value
            row["n_over_p"] = float(n / p_n)
        scale = math.sqrt(n) if n > 0 else 1.0
        z = (ens.points - n * centre) / scale
        st = stat_tests(z, target, grid)
        row.update(st.to_dict())
        if expected is Normalization.OUTER_A:
            zt = (log_cosh_map(ens.points) - n * centre) / scale
            row["t_centered"] = {"ks": stat_tests(zt, target, grid).ks, "mean_offset": zt.mean(axis=0)}
        rows.append(row)
    live = [r for r in rows if not r["sanity"]]
    verdicts = {}
    flags = {}
    final = live[-1] if live else None
    if final is not None and final["ks"]:
        verdicts["ks_final"] = _verdict(
            final["ks_max"] < KS_THRESHOLD, final["ks_max"], KS_THRESHOLD, "max whitened KS at the largest n < threshold"
        )
        verdicts["cf_final"] = _verdict(
            final["cf_max_z"] <= CF_SIGMAS, final["cf_max_z"], CF_SIGMAS,
            "CF-grid distance within 3 standard errors at the largest n", gating=False,
        )
        viol = _monotone_violations([r["ks_max"] for r in live])
        flags["ks_monotone_violations"] = viol
        flags["ks_monotone_ok"] = viol <= 1
    if final is not None and final["degenerate_dims"]:
        spread = [r["degenerate_rms"] for r in live]
        ok = all(b < a for a, b in zip(spread, spread[1:])) and spread[-1] < COLLAPSE_RATIO * spread[0]
        verdicts["degenerate_collapse"] = _verdict(
            ok, spread[-1] / spread[0] if spread[0] > 0 else 0.0, COLLAPSE_RATIO,
            "degenerate-direction spread strictly decreasing and final/first < threshold",
        )
    config = {
        "spec": spec.to_dict(),
        "schedule": sched.to_dict(),
        "model": params.to_dict(),
        "n_mc": n_mc,
        "target_sigma": modified.sigma.value,
        "target_sigma_se": modified.sigma.std_error,
        "m1_modified": modified.m1.value,
        "m1_modified_se": modified.m1.std_error,
        "cf_grid": grid,
    }
    report = ExperimentReport(driver, _clean(config), stream.seed, _clean(rows), verdicts, flags, points=last)
    report.wall_clock_s = time.perf_counter() - t0
    return report


def run_outer_clt_A(spec, sched, params, rng, n_mc=200_000, workers=1, cf_grid=None) -> ExperimentReport:
    """Walks with ``p_n`` growing faster than ``n``, centred with ``n m~_1(nu)`` and scaled by ``sqrt(n)``."""
    return _outer("clt-outer-a", spec, sched, params, rng, n_mc, workers, cf_grid, Normalization.OUTER_A)


def run_outer_clt_BC(spec, sched, params, rng, n_mc=200_000, workers=1, cf_grid=None) -> ExperimentReport:
    """As the type A driver but centred with ``n m^{p_n}_1(nu)``; any unbounded ``p_n``."""
    return _outer("clt-outer-bc", spec, sched, params, rng, n_mc, workers, cf_grid, Normalization.OUTER_BC)


# ----------------------------------------------------------------------------
# inner normalisation


def default_lambda_grid(q: int):
    radii = (0.0, 0.5, 1.0)
    return np.array([r * np.ones(q) / math.sqrt(q) for r in radii])


def run_inner_clt(spec, params, n_grid, replicas, rng, lam_grid=None, n_mc=4096, workers=1) -> ExperimentReport:
    """Compressed walks ``S_n^{(p, n^{-1/2})}`` against ``gamma_{t/p}`` on a real lambda grid."""
    t0 = time.perf_counter()
    if spec.q != params.q:
        raise InvalidSpec(f"measure has rank {spec.q} but the model has q = {params.q}")
    _require_walk_spec(spec, 2)
    sched = CltSchedule(tuple(n_grid), PRule("constant", params.p), replicas, Normalization.INNER)
    stream = _as_stream(rng)
    q, d = params.q, params.d
    second = spec.second_moment()
    t = second / (q * d)
    lam = default_lambda_grid(q) if lam_grid is None else np.atleast_2d(np.asarray(lam_grid, dtype=np.float64))
    targets = {
        "pqd": BCGaussianTarget(second, params.laplace_const_paper, params),
        "q(d(p+1)-1)": BCGaussianTarget(second, params.laplace_const_multiplicity, params),
    }
    rows = []
    for n in sched.n_grid:
        c = 1.0 / math.sqrt(n) if n > 0 else 1.0
        ens = _walk(spec.compressed(c), n, params, replicas, stream, workers)
        last = ens.points
        est = fourier_bc(ens, lam, params, n_mc, stream.substream("fourier", n))
        norm = fourier_bc(ens, -1j * params.rho, params, 16, stream.substream("norm", n))
        row = {
            "n": n,
            "p": params.p,
            "sanity": n == 0,
            "compression": c,
            "cf_re": est.value.real,
            "cf_im": est.value.imag,
            "cf_se": est.std_error,
            "normalization_at_minus_i_rho": float(np.real(norm.value)),
        }
        for name, tgt in targets.items():
            tv = tgt.cf(lam)
            z = np.abs(est.value - tv) / np.maximum(est.std_error, 1e-300)
            row[f"target[{name}]"] = tv
            row[f"z[{name}]"] = z
            row[f"z_max[{name}]"] = float(z.max())
        rows.append(row)
    live = [r for r in rows if not r["sanity"]]
    verdicts = {}
    if live:
        zf = live[-1]["z_max[pqd]"]
        verdicts["cf_final"] = _verdict(zf <= CF_SIGMAS, zf, CF_SIGMAS, "empirical transform within 3 SE of exp(-t(|lam|^2+|rho|^2)/(2p)) at the largest n")
        za = live[-1]["z_max[q(d(p+1)-1)]"]
        verdicts["cf_final_alt_constant"] = _verdict(
            za <= CF_SIGMAS, za, CF_SIGMAS, "same check with the constant q(d(p+1)-1)", gating=False
        )
        verdicts["normalization"] = _verdict(
            all(r["normalization_at_minus_i_rho"] == 1.0 for r in rows), 1.0, 1.0, "transform at -i rho equals 1"
        )
    config = {
        "spec": spec.to_dict(),
        "schedule": sched.to_dict(),
        "model": params.to_dict(),
        "n_mc": n_mc,
        "t": t,
        "second_moment": second,
        "lambda_grid": lam,
        "constants": {k: v.constant for k, v in targets.items()},
    }
    report = ExperimentReport("clt-inner", _clean(config), stream.seed, _clean(rows), verdicts, points=last)
    report.wall_clock_s = time.perf_counter() - t0
    return report


# ----------------------------------------------------------------------------
# law of large numbers


def lln_constants(spec: MeasureSpec, q: int, d: int):
    """Limit candidates: ``arcosh(e^t)`` with ``t = E|x|^2/(qd)``, and the value from ``ln cosh x ~ x^2/2``."""
    second = spec.second_moment()
    t = second / (q * d)
    stated = float(inverse_log_cosh(np.array([t]))[0])
    taylor = float(inverse_log_cosh(np.array([second / (2.0 * q)]))[0])
    return t, stated, taylor


def run_lln(spec, sched, params, rng, workers=1) -> ExperimentReport:
    """Compressed walks with ``n / p_n -> 0``; the law should concentrate at a constant vector."""
    t0 = time.perf_counter()
    if sched.normalization is not Normalization.LLN:
        raise ScheduleViolation(f"run_lln needs an lln schedule, got {sched.normalization.value}")
    if spec.q != params.q:
        raise InvalidSpec(f"measure has rank {spec.q} but the model has q = {params.q}")
    _require_walk_spec(spec, 2)
    sched.validate(params.q)
    stream = _as_stream(rng)
    q, d = params.q, params.d
    t, stated, taylor = lln_constants(spec, q, d)
    rows = []
    for n in sched.n_grid:
        p_n = sched.p_of(n, q)
        c = 1.0 / math.sqrt(n) if n > 0 else 1.0
        ens = _walk(spec.compressed(c), n, params.with_p(p_n), sched.replicas, stream, workers)
        last = ens.points
        mean = ens.points.mean(axis=0)
        sd = ens.points.std(axis=0, ddof=1) if len(ens) > 1 else np.zeros(q)
        rows.append(
            {
                "n": n,
                "p": p_n,
                "sanity": n == 0,
                "mean": mean,
                "mean_se": sd / math.sqrt(len(ens)),
                "sd": sd,
                "error_stated": mean - stated,
                "error_taylor": mean - taylor,
            }
        )
    live = [r for r in rows if not r["sanity"]]
    verdicts = {}
    if live:
        err = float(np.max(np.abs(live[-1]["error_stated"])))
        verdicts["mean_final"] = _verdict(err <= LLN_TOLERANCE, err, LLN_TOLERANCE, "max |mean - arcosh(e^t)| at the largest n")
        spreads = [float(np.max(r["sd"])) for r in live]
        ok = all(b < a for a, b in zip(spreads, spreads[1:]))
        verdicts["spread_decreasing"] = _verdict(ok, spreads, None, "per-coordinate spread strictly decreasing in n")
        err_t = float(np.max(np.abs(live[-1]["error_taylor"])))
        verdicts["mean_final_taylor_constant"] = _verdict(
            err_t <= LLN_TOLERANCE, err_t, LLN_TOLERANCE, "max |mean - arcosh(exp(E|x|^2/(2q)))|", gating=False
        )
    for a, b in zip(live, live[1:]):
        b["sd_ratio_to_previous"] = b["sd"] / a["sd"]
    config = {
        "spec": spec.to_dict(),
        "schedule": sched.to_dict(),
        "model": params.to_dict(),
        "t": t,
        "limit_stated": stated,
        "limit_taylor": taylor,
    }
    report = ExperimentReport("lln", _clean(config), stream.seed, _clean(rows), verdicts, points=last)
    report.wall_clock_s = time.perf_counter() - t0
    return report
