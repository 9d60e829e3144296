"""Command line front end: ``bclab <subcommand> [--config PATH] [--seed N] [--workers N] [--out DIR]``.

Configuration is one YAML file.  Every subcommand has built-in defaults, the
file overrides them section by section and command-line flags override the
file.  Unknown keys are rejected.  Exit codes: 0 success, 1 a statistical
verdict failed, 2 configuration or domain error.

Schema (all keys optional)::

    seed: 0
    workers: 1
    n_mc: 200000            # Monte Carlo draws for moments / transforms
    model: {q: 1, field: real, p: 5}
    measure: {type: dirac, points: [[1.0]], weights: [1.0]}
             # or {type: pushforward, laws: [{name: expon, params: {scale: 1}}]}
    schedule: {n_grid: [16, 64, 256], replicas: 2000,
               p_rule: {kind: power, a: 1, b: 2, floor: true}}
    walk: {n: 16, replicas: 100}
    eval: {function: phi-bc, lam: [[0.5]], x: [[0.0], [1.0]], l: [1], kind: bc}
    lambda_grid: [[0.0], [0.5], [1.0]]   # clt-inner only
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import platform
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
import yaml
from scipy import stats

from . import __version__
from .algebra import FMatrix, ScalarField, gaussian, power_function
from .chamber import ModelParams
from .clt.drivers import (
    CltSchedule,
    Normalization,
    PRule,
    run_inner_clt,
    run_lln,
    run_outer_clt_A,
    run_outer_clt_BC,
)
from .errors import BCLabError, ConfigError
from .sampling.ball import _check_exponent, sample_mp_batch
from .sampling.measures import MeasureSpec
from .sampling.rng import RngStream
from .sampling.walk import EmpiricalMeasure, convolve_samples, format_float, simulate_ensemble
from .special import fourier_bc, moment_a, moment_bc, moment_modified, phi_a, phi_bc

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2

SUBCOMMANDS = ("validate", "walk", "eval", "clt-outer-a", "clt-outer-bc", "clt-inner", "lln")

_SCHEMA = {
    "seed": None,
    "workers": None,
    "n_mc": None,
    "model": {"q", "field", "p"},
    "measure": None,
    "schedule": {"n_grid", "replicas", "p_rule"},
    "walk": {"n", "replicas"},
    "eval": {"function", "lam", "x", "l", "kind"},
    "lambda_grid": None,
}

_OUTER_SCHEDULE = {"n_grid": [16, 64, 256], "replicas": 2000}

DEFAULTS = {
    "validate": {"seed": 0, "workers": 1},
    "walk": {
        "seed": 0,
        "workers": 1,
        "model": {"q": 1, "field": "real", "p": 5},
        "measure": {"type": "dirac", "points": [[1.0]]},
        "walk": {"n": 16, "replicas": 100},
    },
    "eval": {
        "seed": 0,
        "workers": 1,
        "n_mc": 100000,
        "model": {"q": 1, "field": "real", "p": 5},
        "measure": {"type": "dirac", "points": [[0.5], [2.0]], "weights": [0.5, 0.5]},
        "eval": {"function": "phi-bc", "lam": [[0.5]], "x": [[0.0], [0.5], [1.0], [2.0]], "l": [1], "kind": "bc"},
    },
    "clt-outer-a": {
        "seed": 0,
        "workers": 1,
        "n_mc": 2_000_000,
        "model": {"q": 1, "field": "real"},
        "measure": {"type": "dirac", "points": [[0.5], [8.0]], "weights": [0.5, 0.5]},
        "schedule": dict(_OUTER_SCHEDULE, p_rule={"kind": "power", "a": 1.0, "b": 2.0, "floor": True}),
    },
    "clt-outer-bc": {
        "seed": 0,
        "workers": 1,
        "n_mc": 2_000_000,
        "model": {"q": 1, "field": "real"},
        "measure": {"type": "dirac", "points": [[0.5], [8.0]], "weights": [0.5, 0.5]},
        "schedule": dict(_OUTER_SCHEDULE, p_rule={"kind": "linear", "a": "2q", "b": 1.0}),
    },
    "clt-inner": {
        "seed": 0,
        "workers": 1,
        "n_mc": 4096,
        "model": {"q": 1, "field": "real", "p": 5},
        "measure": {"type": "dirac", "points": [[1.0]]},
        "schedule": {"n_grid": [64, 256, 1024], "replicas": 5000},
    },
    "lln": {
        "seed": 0,
        "workers": 1,
        "model": {"q": 1, "field": "real"},
        "measure": {"type": "dirac", "points": [[1.0]]},
        "schedule": dict(_OUTER_SCHEDULE, p_rule={"kind": "power", "a": 1.0, "b": 2.0, "floor": True}),
    },
}


# ----------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    """Parse a YAML config file into a mapping; malformed files raise ConfigError."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    return data


def check_keys(cfg: dict):
    """Reject keys outside the documented schema, naming the first offender."""
    for key, value in cfg.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        allowed = _SCHEMA[key]
        if allowed is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {key!r} must be a mapping")
            for sub in value:
                if sub not in allowed:
                    raise ConfigError(f"unknown config key '{key}.{sub}'")


def resolve_config(subcommand: str, user: dict, overrides: dict) -> dict:
    check_keys(user)
    cfg = copy.deepcopy(DEFAULTS[subcommand])
    for key, value in user.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict) and key != "measure":
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = copy.deepcopy(value)
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _model(cfg, p=None) -> ModelParams:
    m = cfg.get("model", {})
    q = int(m.get("q", 1))
    pv = m.get("p", p if p is not None else 2 * q + 1)
    return ModelParams(q, ScalarField.parse(m.get("field", "real")), float(pv))


def _measure(cfg) -> MeasureSpec:
    return MeasureSpec.from_dict(cfg["measure"])


def _p_rule(data, q) -> PRule:
    data = dict(data)
    if isinstance(data.get("a"), str):
        text = data["a"].replace(" ", "")
        if text.endswith("q"):
            factor = text[:-1]
            data["a"] = float(factor or 1.0) * q
        else:
            raise ConfigError(f"p_rule.a must be a number or '<k>q', got {data['a']!r}")
    return PRule.from_dict(data)


def _schedule(cfg, q, normalization) -> CltSchedule:
    s = cfg["schedule"]
    return CltSchedule(tuple(s["n_grid"]), _p_rule(s["p_rule"], q), int(s["replicas"]), normalization)


def _complex(value, rho):
    if isinstance(value, str):
        text = value.replace(" ", "").lower()
        if text in ("-i*rho", "-irho", "minus_i_rho"):
            return -1j * rho
        return complex(text)
    return value


def _lam_grid(values, params: ModelParams):
    rows = []
    for v in values:
        v = _complex(v, params.rho)
        arr = np.asarray(v, dtype=np.complex128).reshape(-1)
        if arr.size == 1 and params.q > 1:
            arr = np.full(params.q, arr[0])
        rows.append(np.asarray([_complex(x, params.rho) for x in arr], dtype=np.complex128))
    return np.array(rows)


# ----------------------------------------------------------------------------
# artifacts


def _write(out: Path | None, name: str, text: str, files: dict):
    files[name] = hashlib.sha256(text.encode()).hexdigest()
    if out is not None:
        (out / name).write_text(text)


def _write_manifest(out, subcommand, cfg, files, wall_clock):
    manifest = {
        "subcommand": subcommand,
        "seed": cfg.get("seed"),
        "config": cfg,
        "config_hash": config_hash(cfg),
        "files": files,
        "versions": {
            "bclab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "wall_clock_s": wall_clock,
    }
    if out is not None:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return manifest


def _points_csv(points) -> str:
    return EmpiricalMeasure(points=points).to_csv_text()


# ----------------------------------------------------------------------------
# subcommands


def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def cmd_validate(cfg, out):
    """Fast invariant suite; returns (exit code, report dict)."""
    if "model" in cfg:
        params = _model(cfg)
        _check_exponent(params)
    if "measure" in cfg:
        _measure(cfg)
    base = RngStream(int(cfg["seed"]))
    checks = []
    for p in (3.0, 7.0):
        params = ModelParams(1, ScalarField.REAL, p)
        w = sample_mp_batch(params, 200_000, base.substream("mp", p))[:, 0, 0]
        g = params.mp_exponent
        res = stats.kstest((w + 1.0) / 2.0, stats.beta(g + 1.0, g + 1.0).cdf)
        checks.append(_check(f"mp_q1_p{p:g}", res.pvalue > 1e-3, {"ks": res.statistic, "pvalue": res.pvalue}))
    params = ModelParams(2, ScalarField.REAL, 6.0)
    x = np.array([1.3, 0.4])
    y = np.array([0.9, 0.2])
    zero = np.zeros(2)
    ident = convolve_samples(zero, y, params, 64, base.substream("identity"))
    checks.append(_check("identity", np.all(ident == y), {"max_abs_dev": float(np.max(np.abs(ident - y)))}))
    xy = convolve_samples(x, y, params, 20_000, base.substream("xy"))
    yx = convolve_samples(y, x, params, 20_000, base.substream("yx"))
    pv = [stats.ks_2samp(xy[:, i], yx[:, i]).pvalue for i in range(2)]
    checks.append(_check("commutativity", min(pv) > 1e-3, {"pvalues": pv}))
    ones = []
    for q, field in ((1, ScalarField.REAL), (2, ScalarField.COMPLEX), (2, ScalarField.QUATERNION)):
        params = ModelParams(q, field, 2 * q + 1.5)
        est = phi_bc(-1j * params.rho, np.full(q, 0.7), params, 64, base.substream("phi", q, field.d))
        ones.append(complex(est.value))
    checks.append(_check("phi_minus_i_rho_is_one", all(v == 1.0 for v in ones), {"values": [str(v) for v in ones]}))
    gen = base.substream("power").generator()
    errs = []
    for field in ScalarField:
        g = gaussian(field, (3, 3), gen)
        a = FMatrix(field, g @ g.conj().T + np.eye(g.shape[0]))
        lam, mu = gen.normal(size=3), gen.normal(size=3)
        lhs = power_function(a, lam + mu)
        rhs = power_function(a, lam) * power_function(a, mu)
        errs.append(abs(lhs - rhs) / abs(rhs))
    checks.append(_check("power_function_additivity", max(errs) < 1e-10, {"max_rel_err": max(errs)}))
    report = {"checks": checks, "passed": all(c["passed"] for c in checks)}
    return (EXIT_OK if report["passed"] else EXIT_VERDICT), report


def cmd_walk(cfg, out, files):
    params = _model(cfg)
    spec = _measure(cfg)
    w = cfg["walk"]
    ens = simulate_ensemble(
        spec, int(w["n"]), params, int(w["replicas"]), RngStream(int(cfg["seed"])), workers=int(cfg["workers"])
    )
    _write(out, "points.csv", ens.to_csv_text(), files)
    summary = {"mean": ens.points.mean(axis=0).tolist(), "replicas": len(ens), "n": int(w["n"])}
    _write(out, "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n", files)
    return EXIT_OK, summary


def _eval_rows(cfg):
    e = cfg["eval"]
    fn = str(e.get("function", "phi-bc")).lower()
    n_mc = int(cfg.get("n_mc", 100000))
    base = RngStream(int(cfg["seed"]))
    rows = []
    if fn == "fourier":
        params = _model(cfg)
        spec = _measure(cfg)
        lam = _lam_grid(e["lam"], params)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est = fourier_bc(spec, lam, params, n_mc, base.substream("fourier"))
        for i, lv in enumerate(lam):
            rows.append({"lam": lv, "x": None, "value": est.value[i], "std_error": est.std_error[i]})
        return rows, [str(w.message) for w in caught]
    if fn == "phi-a":
        field = ScalarField.parse(cfg.get("model", {}).get("field", "real"))
        q = int(cfg.get("model", {}).get("q", 1))
        params = None
    else:
        params = _model(cfg)
        q, field = params.q, params.field
    lam_src = e.get("lam", [[0.0] * q])
    xs = np.atleast_2d(np.asarray(e["x"], dtype=np.float64))
    if fn == "moment":
        kind = str(e.get("kind", "bc")).lower()
        l = e.get("l", [1])
        for j, x in enumerate(xs):
            rng = base.substream("moment", j)
            if kind == "a":
                est = moment_a(l, x, n_mc, rng, field)
            elif kind == "modified":
                est = moment_modified(l, x, n_mc, rng, field)
            elif kind == "bc":
                est = moment_bc(l, x, params, n_mc, rng)
            else:
                raise ConfigError(f"eval.kind must be a, bc or modified, got {kind!r}")
            rows.append({"lam": None, "x": x, "value": est.value, "std_error": est.std_error, "l": list(l)})
        return rows, []
    if fn not in ("phi-a", "phi-bc"):
        raise ConfigError(f"eval.function must be phi-a, phi-bc, moment or fourier, got {fn!r}")
    rho = np.zeros(q) if params is None else params.rho
    lam = np.array([[_complex(v, rho) for v in np.atleast_1d(_complex(row, rho))] for row in lam_src], dtype=np.complex128)
    if lam.shape[-1] == 1 and q > 1:
        lam = np.repeat(lam, q, axis=-1)
    for j, x in enumerate(xs):
        rng = base.substream("phi", j)
        if fn == "phi-a":
            est = phi_a(lam, x, n_mc, rng, field)
        else:
            est = phi_bc(lam, x, params, n_mc, rng)
        for i, lv in enumerate(lam):
            rows.append({"lam": lv, "x": x, "value": est.value[i], "std_error": est.std_error[i]})
    return rows, []


def _fmt_cell(v):
    if v is None:
        return ""
    arr = np.atleast_1d(np.asarray(v))
    parts = []
    for item in arr.reshape(-1):
        if np.iscomplexobj(item):
            parts.append(f"{format_float(item.real)}{'+' if item.imag >= 0 else ''}{format_float(item.imag)}j")
        else:
            parts.append(format_float(item))
    return ";".join(parts)


def cmd_eval(cfg, out, files):
    rows, notes = _eval_rows(cfg)
    lines = ["lam,x,value_re,value_im,std_error"]
    for r in rows:
        v = complex(r["value"])
        lines.append(
            ",".join([_fmt_cell(r["lam"]), _fmt_cell(r["x"]), format_float(v.real), format_float(v.imag), format_float(r["std_error"])])
        )
    _write(out, "table.csv", "\n".join(lines) + "\n", files)
    report = {"rows": len(rows), "warnings": notes}
    _write(out, "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n", files)
    return EXIT_OK, report


def cmd_driver(subcommand, cfg, out, files):
    spec = _measure(cfg)
    rng = RngStream(int(cfg["seed"]))
    workers = int(cfg["workers"])
    if subcommand == "clt-inner":
        params = _model(cfg)
        s = cfg["schedule"]
        lam = None if cfg.get("lambda_grid") is None else _lam_grid(cfg["lambda_grid"], params).real
        report = run_inner_clt(
            spec, params, s["n_grid"], int(s["replicas"]), rng, lam_grid=lam, n_mc=int(cfg["n_mc"]), workers=workers
        )
    else:
        q = int(cfg.get("model", {}).get("q", 1))
        params = _model(cfg, p=2 * q + 1)
        if subcommand == "lln":
            report = run_lln(spec, _schedule(cfg, q, Normalization.LLN), params, rng, workers=workers)
        elif subcommand == "clt-outer-a":
            sched = _schedule(cfg, q, Normalization.OUTER_A)
            report = run_outer_clt_A(spec, sched, params, rng, n_mc=int(cfg["n_mc"]), workers=workers)
        else:
            sched = _schedule(cfg, q, Normalization.OUTER_BC)
            report = run_outer_clt_BC(spec, sched, params, rng, n_mc=int(cfg["n_mc"]), workers=workers)
    if report.points is not None:
        _write(out, "points.csv", _points_csv(report.points), files)
    _write(out, "report.json", report.to_json(), files)
    _write(out, "stats.csv", report.to_csv(), files)
    return (EXIT_OK if report.passed else EXIT_VERDICT), report


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bclab", description="BC hypergroup random walks and their limit theorems.")
    parser.add_argument("--version", action="version", version=f"bclab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML configuration file")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        p.add_argument("--workers", type=int, help="concurrent replica chunks; output does not depend on it")
        p.add_argument("--out", type=Path, help="directory for points.csv, report.json, manifest.json")
    return parser


def _summary_line(subcommand, code, result):
    verdict = {EXIT_OK: "ok", EXIT_VERDICT: "verdict failed"}[code]
    if hasattr(result, "verdicts"):
        parts = [f"{k}={'pass' if v['passed'] else 'FAIL'}" for k, v in result.verdicts.items()]
        return f"{subcommand}: {verdict} ({', '.join(parts)})"
    if isinstance(result, dict) and "checks" in result:
        parts = [f"{c['name']}={'pass' if c['passed'] else 'FAIL'}" for c in result["checks"]]
        return f"{subcommand}: {verdict} ({', '.join(parts)})"
    return f"{subcommand}: {verdict}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    files: dict = {}
    try:
        user = load_config(args.config) if args.config else {}
        cfg = resolve_config(args.subcommand, user, {"seed": args.seed, "workers": args.workers})
        if int(cfg.get("workers", 1)) < 1:
            raise ConfigError("workers must be at least 1")
        out = args.out
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        start = datetime.now(timezone.utc)
        if args.subcommand == "validate":
            code, result = cmd_validate(cfg, out)
            _write(out, "report.json", json.dumps(result, indent=2, sort_keys=True, default=str) + "\n", files)
        elif args.subcommand == "walk":
            code, result = cmd_walk(cfg, out, files)
        elif args.subcommand == "eval":
            code, result = cmd_eval(cfg, out, files)
        else:
            code, result = cmd_driver(args.subcommand, cfg, out, files)
        wall = (datetime.now(timezone.utc) - start).total_seconds()
        _write_manifest(out, args.subcommand, cfg, files, wall)
    except (BCLabError, ValueError, KeyError, TypeError) as exc:
        name = type(exc).__name__
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"bclab {args.subcommand}: error: {name}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    print(_summary_line(args.subcommand, code, result))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
