"""Command-line front end.

Every command reads an optional ``--config`` file (flat ``key = value`` lines,
or a JSON output of a previous run, whose embedded config is reused), then
applies flags on top.  Exit codes: 0 success, 1 certification failure,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constants import (ConstraintError, DegenerateRateError, InfeasibleError, ProblemParams,
                        SearchConfig, asymptotic_K, build_coefficients, chain_residuals,
                        discrepancy_report, K_limit_sequence, leading_order_fit, optimize_rate,
                        rate_report, regularization_scheme, spectral_gap, validate_coefficients)
from .gamma import GAMMA_KINDS, SIGMA_KINDS, certify_identities
from .geometry import ModelManifold, random_frame_points, verify_brackets
from .simulator import (ConfigError, InsufficientSignalError, SimConfig, estimate_decay_rate,
                        simulate)
from .testfunctions import battery, monomial

SCHEMA_VERSION = "1"
REQUIRED = object()


class UsageError(Exception):
    pass


def _manifold(text: str) -> ModelManifold:
    return ModelManifold.parse(text)


def _kinds(text: str) -> list[str]:
    names = [k.strip() for k in text.split(",") if k.strip()]
    valid = {k.value for k in GAMMA_KINDS + SIGMA_KINDS}
    for k in names:
        if k not in valid:
            raise ValueError(f"unknown kind {k!r}")
    return names


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


PARAMS = {
    "sigma": (float, 1.0), "kappa": (float, 1.0), "n": (int, REQUIRED), "M": (float, 0.0),
}
EPS = {"epsilon": (float, 0.5), "epsilon-prime": (float, 1.0), "scheme": (str, "chain")}
ALL_KINDS = ",".join(k.value for k in GAMMA_KINDS + SIGMA_KINDS)

COMMANDS: dict[str, dict[str, tuple]] = {
    "verify-brackets": {"manifold": (_manifold, REQUIRED), "points": (int, 100),
                        "functions": (int, 20), "seed": (int, 0), "tol": (float, 1e-8)},
    "verify-gamma": {"manifold": (_manifold, REQUIRED), "samples": (int, 50), "seed": (int, 0),
                     "tol": (float, 1e-7), "sigma": (float, 1.3), "kappa": (float, 0.7),
                     "kinds": (_kinds, ALL_KINDS)},
    "constants": {**PARAMS, **EPS, "lambda": (float, None)},
    "optimize": {**PARAMS, "lambda": (float, REQUIRED), "grid": (int, 32),
                 "iterations": (int, 200), "scheme": (str, "corrected")},
    "regularization": {**PARAMS, **EPS, "grid-points": (int, 4000)},
    "simulate": {"manifold": (_manifold, REQUIRED), "sigma": (float, 1.0), "kappa": (float, 1.0),
                 "dt": (float, 1e-3), "horizon": (float, REQUIRED), "paths": (int, REQUIRED),
                 "seed": (int, 0), "observables": (str, "cos2pi_x1"),
                 "initial-law": (str, "point"), "csv": (str, None)},
    "rate-experiment": {"manifold": (_manifold, "flat-torus:2:1"), "sigma": (float, 1.0),
                        "kappa": (float, 1.0), "dt": (float, 1e-3), "horizon": (float, 50.0),
                        "paths": (int, 10000), "seed": (int, 7), "observable": (str, "cos2pi_x1"),
                        "lambda": (float, None), "grid": (int, 32), "iterations": (int, 200),
                        "csv": (str, None)},
}
COMMON = {"output": (str, None)}


# -- configuration -----------------------------------------------------------------------------

def read_config_file(path: str) -> dict:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _norm(key: str) -> str:
    return key.strip().replace("_", "-")


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    """Merge defaults < file < flags, converting and checking every key."""
    schema = {**COMMANDS[command], **COMMON}
    merged = {}
    for source in (file_values, flag_values):
        for k, v in source.items():
            key = _norm(k)
            if key == "command":
                if v != command:
                    raise UsageError(f"config is for command {v!r}, not {command!r}")
                continue
            if key not in schema:
                raise UsageError(f"unknown key: {k}")
            merged[key] = v
    out = {}
    for key, (conv, default) in schema.items():
        raw = merged.get(key)
        if raw is None:
            if default is REQUIRED:
                raise UsageError(f"missing required key: {key}")
            raw = default
        if raw is None:
            out[key] = None
            continue
        try:
            out[key] = _convert(conv, raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for key {key}: {raw!r} ({exc})") from None
    return out


def _convert(conv, raw):
    if conv is int:
        val = float(raw)
        if val != int(val):
            raise ValueError("not an integer")
        return int(val)
    if conv is float:
        return float(raw)
    if conv is str:
        return str(raw)
    if conv is _manifold and isinstance(raw, ModelManifold):
        return raw
    if conv is _kinds and isinstance(raw, list):
        return _kinds(",".join(raw))
    return conv(str(raw))


def config_echo(cfg: dict) -> dict:
    """Resolved experiment settings; output destinations are left out."""
    out = {}
    for k, v in cfg.items():
        if k in ("output", "csv"):
            continue
        if isinstance(v, ModelManifold):
            v = v.spec()
        elif isinstance(v, list):
            v = ",".join(v)
        out[k] = v
    return dict(sorted(out.items()))


def _params(cfg: dict, lam=None) -> ProblemParams:
    try:
        return ProblemParams(cfg["sigma"], cfg["kappa"], cfg["n"], cfg["M"], lam)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_eps(cfg):
    if not 0 < cfg["epsilon"] < 1:
        raise UsageError(f"epsilon must lie in (0, 1), got {cfg['epsilon']}")
    if not cfg["epsilon-prime"] > 0:
        raise UsageError("epsilon-prime must be positive")
    if cfg["scheme"] not in ("chain", "corrected"):
        raise UsageError("scheme must be 'chain' or 'corrected'")


# -- observables -----------------------------------------------------------------------------------

def observable(name: str, m: ModelManifold):
    """Named probes: ``cos2pi_xK`` (period = torus side), ``xK``, ``e0_K`` (1-based K)."""
    n = m.n
    try:
        if name.startswith("cos2pi_x"):
            k = int(name[len("cos2pi_x"):]) - 1
            L = m.side_length if m.kind == "flat-torus" else 1.0
            freq = np.zeros(n)
            freq[k] = 2 * np.pi / L
            return monomial(n, freq=freq, label=name)
        if name.startswith("e0_"):
            k = int(name[3:]) - 1
            pw = np.zeros(n, int)
            pw[k] = 1
            return monomial(n, epow=pw, label=name)
        if name.startswith("x"):
            k = int(name[1:]) - 1
            pw = np.zeros(n, int)
            pw[k] = 1
            return monomial(n, xpow=pw, label=name)
    except (ValueError, IndexError):
        pass
    raise UsageError(f"unknown observable {name!r}")


# -- commands ----------------------------------------------------------------------------------------

def cmd_verify_brackets(cfg):
    m = cfg["manifold"]
    pts = random_frame_points(m, cfg["seed"], cfg["points"])
    fs = battery(m, cfg["functions"], seed=cfg["seed"])
    rep = verify_brackets(m, pts, cfg["tol"], functions=fs)
    return rep.to_record(), rep.passed, None


def cmd_verify_gamma(cfg):
    m = cfg["manifold"]
    reps = certify_identities(m, cfg["kinds"], cfg["samples"], cfg["seed"], cfg["sigma"],
                              cfg["kappa"], cfg["tol"])
    ok = all(r.passed for r in reps)
    worst = max(r.worst_relative for r in reps)
    return {"reports": [r.to_record() for r in reps], "max_relative_residual": worst,
            "passed": ok}, ok, None


def cmd_constants(cfg):
    _check_eps(cfg)
    P = _params(cfg, cfg["lambda"])
    try:
        cs = build_coefficients(P, cfg["epsilon"], cfg["epsilon-prime"], cfg["scheme"])
    except ConstraintError as exc:
        raise UsageError(str(exc)) from None
    rep = validate_coefficients(cs)
    res = {"coefficients": cs.to_record(), "validation": rep.to_record(),
           "chain_residuals": chain_residuals(cs), "printed_summary": discrepancy_report(cs),
           "asymptotic_K_printed": asymptotic_K(P.n, cfg["epsilon"], cfg["epsilon-prime"]),
           "K_large_sigma": K_limit_sequence(P.n, cfg["epsilon"], cfg["epsilon-prime"],
                                             scheme=cfg["scheme"])}
    if P.lam is not None:
        try:
            res["rate"] = rate_report(cs, P.lam).to_record()
        except DegenerateRateError as exc:
            res["rate_error"] = str(exc)
    return res, rep.passed, None


def cmd_optimize(cfg):
    P = _params(cfg, cfg["lambda"])
    search = SearchConfig(grid=cfg["grid"], iterations=cfg["iterations"], scheme=cfg["scheme"])
    try:
        res = optimize_rate(P, search)
    except InfeasibleError as exc:
        return {"infeasible": str(exc)}, False, None
    return res.to_record(), True, None


def cmd_regularization(cfg):
    _check_eps(cfg)
    P = _params(cfg)
    cs = build_coefficients(P, cfg["epsilon"], cfg["epsilon-prime"], cfg["scheme"])
    try:
        rs = regularization_scheme(P, cs.a, cs.b, cs.c, cfg["grid-points"])
    except ConstraintError as exc:
        return {"precondition": str(exc)}, False, None
    except InfeasibleError as exc:
        return {"infeasible": str(exc)}, False, None
    rec = rs.to_record()
    rec["leading_order"] = {"A_over_expected": leading_order_fit(rs, "A", 2) / (-rs.a * P.sigma ** 2 / 2),
                            "C_over_expected": leading_order_fit(rs, "C", 6) / (-rs.c * P.sigma ** 2 / 4)}
    return rec, rs.s_max > 0, None


def _sim_config(cfg, names) -> SimConfig:
    m = cfg["manifold"]
    obs = {nm: observable(nm, m) for nm in names}
    sc = SimConfig(m, cfg["sigma"], cfg["kappa"], cfg["dt"], cfg["horizon"], cfg["paths"],
                   cfg["seed"], obs, cfg.get("initial-law", "point"))
    try:
        sc.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    return sc


def cmd_simulate(cfg):
    names = [s.strip() for s in cfg["observables"].split(",") if s.strip()]
    stats = simulate(_sim_config(cfg, names))
    rec = stats.to_record()
    rec.pop("config")
    return rec, True, stats.to_csv()


def cmd_rate_experiment(cfg):
    m = cfg["manifold"]
    lam = cfg["lambda"] if cfg["lambda"] is not None else spectral_gap(m)
    if lam is None:
        raise UsageError("no closed-form Poincaré constant for this manifold; pass --lambda")
    P = ProblemParams(cfg["sigma"], cfg["kappa"], m.n, m.curvature_bound, lam)
    theory = optimize_rate(P, SearchConfig(grid=cfg["grid"], iterations=cfg["iterations"]))
    stats = simulate(_sim_config(cfg, [cfg["observable"]]))
    t, mu, se = stats.series(cfg["observable"])
    rec = {"lambda": lam, "lambda_tilde_theory": theory.report.lambda_tilde,
           "theory": {"eps": theory.eps, "eps_prime": theory.eps_prime}}
    try:
        fit = estimate_decay_rate(t, mu, se, seed=cfg["seed"])
    except InsufficientSignalError as exc:
        rec["error"] = str(exc)
        return rec, False, stats.to_csv()
    rec.update(rate_observed=fit.rate, ci=[fit.ci_low, fit.ci_high], window=list(fit.window),
               fit_points=fit.points)
    ok = fit.ci_low > 0 and fit.rate >= theory.report.lambda_tilde
    rec["consistent"] = ok
    return rec, ok, stats.to_csv()


HANDLERS = {
    "verify-brackets": cmd_verify_brackets, "verify-gamma": cmd_verify_gamma,
    "constants": cmd_constants, "optimize": cmd_optimize, "regularization": cmd_regularization,
    "simulate": cmd_simulate, "rate-experiment": cmd_rate_experiment,
}


# -- entry point -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypokinetic", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in COMMANDS.items():
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="key = value file or a previous JSON output")
        for key, (conv, default) in {**schema, **COMMON}.items():
            hint = "required" if default is REQUIRED else f"default {default}"
            sp.add_argument(f"--{key}", dest=key, help=hint)
    return parser


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(command: str, cfg: dict) -> tuple[int, dict, str | None]:
    result, ok, csv_text = HANDLERS[command](cfg)
    record = {"schema_version": SCHEMA_VERSION, "command": command, "config": config_echo(cfg),
              "seed": cfg.get("seed"), "passed": bool(ok), "result": _jsonable(result),
              "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    return (0 if ok else 1), record, csv_text


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    command = args.pop("command")
    try:
        file_values = read_config_file(args.pop("config")) if "config" in args else {}
        cfg = resolve_config(command, file_values, args)
        code, record, csv_text = run(command, cfg)
    except (UsageError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"hypokinetic {command}: error: {exc}", file=sys.stderr)
        return 2
    text = json.dumps(record, sort_keys=True, indent=2) + "\n"
    if cfg.get("output"):
        Path(cfg["output"]).write_text(text)
    else:
        sys.stdout.write(text)
    if csv_text is not None and cfg.get("csv"):
        Path(cfg["csv"]).write_text(csv_text)
    return code


if __name__ == "__main__":
    sys.exit(main())
