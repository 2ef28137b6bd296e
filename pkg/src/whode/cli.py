"""Command-line front end.

Usage::

    factorize --config FILE [--out PATH] [--format csv|json] [--L x]
              [--steps n] [--validate] [--b-invariance]
              [--trajectory-dump PATH]

The configuration is a TOML file; see the bundled fixtures in
``whode/fixtures`` and the README for the schema.  Results go to ``--out``
(or stdout), the run summary to stderr.  The exit status is 0 only when
every requested computation and check succeeded.
"""

from dataclasses import dataclass, field
from importlib import resources
import argparse
import json
import os
import re
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, FactorizationError
from .expr import evaluate, parse
from .ode1 import EvalPoint, solve_U
from .ode2 import integrate
from .problem import (
    FactorizationProblem,
    build_B,
    check_branch_commutativity,
    check_real_axis,
    default_poles,
)
from . import validate as V

__all__ = ["RunConfig", "load_config", "run_factorize", "run_validate", "main", "fixture_path"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

RESERVED = {"k", "sqrt", "up", "down", "sign"}
SEED = 0


def fixture_path(name):
    """Path of a bundled fixture, e.g. ``fixture_path("antipov")``."""
    if not name.endswith(".toml"):
        name += ".toml"
    return str(resources.files("whode") / "fixtures" / name)


@dataclass
class RunConfig:
    path: str
    problem: FactorizationProblem
    poles: list = None
    alt_poles: list = None
    L: float = 40.0
    steps: int = 2000
    grid: str = "sqrt"
    points: list = field(default_factory=list)
    shore_points: list = field(default_factory=list)  # (cut index, k)
    out: str = None
    format: str = "csv"
    validate: bool = False
    b_invariance: bool = False
    trajectory_dump: str = None
    residual_tol: float = 1e-3
    b_invariance_tol: float = 1e-5
    commutativity_tol: float = 1e-10
    khrapkov_oracle: bool = False
    oracle_tol: float = 1e-4
    init_tol: float = 0.1
    shore_radius: float = 0.05

    def check(self):
        if self.steps < 10:
            raise ConfigError("steps must be at least 10")
        top = max(c.imag for c in self.problem.cuts)
        if self.L <= top + 1:
            raise ConfigError(f"L = {self.L} must exceed max Im k_j + 1 = {top + 1}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.format!r}")
        if self.grid not in ("sqrt", "uniform"):
            raise ConfigError(f"unknown grid {self.grid!r}")


# ======
# Config
# ======

def _substitute(text, params):
    """Replace whole-word parameter names by their parenthesized values."""
    if not params:
        return text
    pattern = re.compile(r"\b(" + "|".join(map(re.escape, sorted(params, key=len, reverse=True))) + r")\b")
    for _ in range(len(params) + 1):
        new = pattern.sub(lambda m: "(" + params[m.group(1)] + ")", text)
        if new == text:
            return text
        text = new
    raise ConfigError("parameters refer to each other cyclically")


def _const(value, params=None, what="value"):
    if isinstance(value, (int, float)):
        return complex(value)
    if not isinstance(value, str):
        raise ConfigError(f"{what}: expected a number or string, got {value!r}")
    text = _substitute(value, params or {})
    if "k" in re.findall(r"[A-Za-z_]\w*", text):
        raise ConfigError(f"{what}: {value!r} must not depend on k")
    try:
        return complex(evaluate(parse(text), 0.0))
    except (FactorizationError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{what}: cannot read {value!r} ({exc})") from None


def _points(spec, params):
    if spec is None:
        return []
    if isinstance(spec, dict):
        try:
            start, stop, num = spec["start"], spec["stop"], int(spec["num"])
        except KeyError as exc:
            raise ConfigError(f"points range needs start, stop and num (missing {exc})") from None
        a = _const(start, params, "points.start")
        b = _const(stop, params, "points.stop")
        return list(a + (b - a) * np.linspace(0.0, 1.0, num))
    return [_const(v, params, "points") for v in spec]


def load_config(path, **overrides):
    """Read a TOML configuration into a :class:`RunConfig`.

    Keyword overrides (``L``, ``steps``, ``out``, ...) replace file values
    when not None.
    """
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    raw = doc.get("params", {})
    bad = RESERVED.intersection(raw)
    if bad:
        raise ConfigError(f"parameter names {sorted(bad)} are reserved")
    params = {k: (v if isinstance(v, str) else repr(v)) for k, v in raw.items()}

    def expr(e, what):
        if isinstance(e, (int, float)):
            e = repr(e)
        if not isinstance(e, str):
            raise ConfigError(f"{what}: expected an expression string, got {e!r}")
        return _substitute(e, params)

    try:
        dim = int(doc["dim"])
        cuts = [_const(c, params, "cuts") for c in doc["cuts"]]
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    kw = {}
    if "lambda" in doc or "g" in doc:
        kw["lam"] = [[expr(e, "lambda") for e in row] for row in doc.get("lambda", [])]
        kw["g"] = [expr(e, "g") for e in doc.get("g", [])]
    elif "entries" in doc:
        kw["entries"] = [[expr(e, "entries") for e in row] for row in doc["entries"]]
    else:
        raise ConfigError("give either lambda and g, or entries")
    try:
        problem = FactorizationProblem(
            dim=dim,
            cuts=tuple(cuts),
            epsilon=float(doc.get("epsilon", 0.1)),
            name=str(doc.get("name", "")),
            **kw,
        )
    except (FactorizationError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    run = doc.get("run", {})
    val = doc.get("validate", {})
    shore = []
    for j, pts in enumerate(run.get("shore_points", [])):
        shore += [(j, z) for z in _points(pts, params)]
    poles = doc.get("poles")
    alt = val.get("alt_poles")
    cfg = RunConfig(
        path=str(path),
        problem=problem,
        poles=None if poles is None else [_const(z, params, "poles") for z in poles],
        alt_poles=None if alt is None else [_const(z, params, "alt_poles") for z in alt],
        L=float(run.get("L", 40.0)),
        steps=int(run.get("steps", 2000)),
        grid=str(run.get("grid", "sqrt")),
        points=_points(run.get("points"), params),
        shore_points=shore,
        residual_tol=float(val.get("residual_tol", 1e-3)),
        b_invariance_tol=float(val.get("b_invariance_tol", 1e-5)),
        commutativity_tol=float(val.get("commutativity_tol", 1e-10)),
        khrapkov_oracle=bool(val.get("khrapkov_oracle", False)),
        oracle_tol=float(val.get("oracle_tol", 1e-4)),
        init_tol=float(run.get("init_tol", 0.1)),
        shore_radius=float(run.get("shore_radius", 0.05)),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.check()
    return cfg


# ========
# Pipeline
# ========

def _log(msg):
    print(msg, file=sys.stderr)


def _solve(cfg, poles=None):
    p = cfg.problem
    B = build_B(p, poles if poles is not None else (cfg.poles or default_poles(p)))
    traj = integrate(p, B, L=cfg.L, steps=cfg.steps, grid=cfg.grid, init_tol=cfg.init_tol)
    return B, traj


def _evaluate(cfg, traj):
    pts = [EvalPoint(z) for z in cfg.points]
    for j, z in cfg.shore_points:
        pts += [EvalPoint(z, "gamma-plus", j), EvalPoint(z, "gamma-minus", j)]
    return solve_U(pts, traj, radius=cfg.shore_radius)


def _shore_residuals(cfg, result):
    n0 = len(cfg.points)
    out = []
    for i, (j, z) in enumerate(cfg.shore_points):
        up, um = result.U[n0 + 2 * i], result.U[n0 + 2 * i + 1]
        out.append(V.jump_residual(cfg.problem, j, [z], [up], [um])[0])
    return out


def _write(cfg, result):
    if cfg.format == "json":
        text = result.to_json()
        if cfg.out:
            with open(cfg.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
    elif cfg.out:
        result.to_csv(cfg.out)
    else:
        print(",".join(result.header()))
        for row in result.rows():
            print(",".join(repr(float(x)) for x in row))


def run_factorize(cfg):
    """Run ODE2 then ODE1 for ``cfg``; return ``(exit status, result)``."""
    t0 = time.perf_counter()
    B, traj = _solve(cfg)
    t1 = time.perf_counter()
    if cfg.trajectory_dump:
        traj.to_csv(cfg.trajectory_dump)
    result = _evaluate(cfg, traj)
    t2 = time.perf_counter()
    result.diagnostics.update(
        {"grid": cfg.grid, "poles": [[z.real, z.imag] for z in B.poles]}
    )
    status = EXIT_OK
    if cfg.shore_points:
        res = _shore_residuals(cfg, result)
        result.diagnostics["jump_residual"] = res
        result.diagnostics["jump_residual_tol"] = cfg.residual_tol
        if max(res) > cfg.residual_tol:
            status = EXIT_CHECK_FAILED
    _write(cfg, result)
    _log(f"{cfg.problem.name or cfg.path}: L = {cfg.L:g}, N_b = {cfg.steps}, grid = {cfg.grid}")
    _log(f"  ODE2 {t1 - t0:.2f} s, ODE1 {t2 - t1:.2f} s for {len(result.points)} points")
    if cfg.shore_points:
        _log(f"  max jump residual {max(res):.3e} (tolerance {cfg.residual_tol:g})")
    return status, result


def validation_checks(cfg, result=None, traj=None):
    """Run the configured checks and return a list of :class:`CheckResult`."""
    p = cfg.problem
    checks = []
    comm = check_branch_commutativity(p, seed=SEED, tol=cfg.commutativity_tol)
    checks.append(
        V.CheckResult(
            "branch_commutativity",
            comm.max_commutator,
            cfg.commutativity_tol,
            {"samples": comm.samples, "seed": comm.seed, "sheets": comm.sheets},
        )
    )
    if not comm.passed or not p.is_moiseev:
        return checks
    if traj is None and result is not None:
        traj = result.trajectory
    if traj is None:
        _, traj = _solve(cfg)
    if result is None and (cfg.shore_points or cfg.khrapkov_oracle):
        result = _evaluate(cfg, traj)
    if cfg.shore_points:
        res = _shore_residuals(cfg, result)
        checks.append(V.CheckResult("jump_residual", max(res), cfg.residual_tol, {"per_point": res}))
    checks.append(V.CheckResult("ode2_constraint", float(traj.constraint_residual().max()), 1e-8))
    checks.append(V.CheckResult("isospectral_drift", float(traj.spectrum_drift().max()), 1e-8))
    if cfg.khrapkov_oracle and cfg.points:
        spec = V.KhrapkovSpec.from_problem(p, T=cfg.L)
        ref = V.khrapkov_reference(spec, 0j, np.array(cfg.points))
        diff = float(np.max(np.abs(result.U[: len(cfg.points)] - ref)))
        checks.append(V.CheckResult("khrapkov_oracle", diff, cfg.oracle_tol))
    if cfg.b_invariance:
        poles = cfg.alt_poles or default_poles(p)
        _, alt = _solve(cfg, poles)
        diff = float(np.max(np.sum(np.abs(traj.s - alt.s), axis=-1)))
        checks.append(V.CheckResult("b_invariance", diff, cfg.b_invariance_tol))
    return checks


def run_validate(cfg, result=None, traj=None):
    """Run the checks; return ``(exit status, JSON report text)``."""
    checks = validation_checks(cfg, result, traj)
    text = V.report_json(checks)
    doc = json.loads(text)
    doc["seed"] = SEED
    # informational: does not enter the pass/fail verdict
    doc["real_axis"] = check_real_axis(cfg.problem).as_dict()
    text = json.dumps(doc, indent=2)
    for c in checks:
        _log(f"  {c.check}: {c.max_residual:.3e} <= {c.tolerance:g} {'PASS' if c.passed else 'FAIL'}")
    return (EXIT_OK if doc["passed"] else EXIT_CHECK_FAILED), text


# ====
# Main
# ====

def build_parser():
    ap = argparse.ArgumentParser(
        prog="factorize",
        description="Wiener-Hopf factorization of commutative matrices by ODE1/ODE2.",
    )
    ap.add_argument("--config", required=True, help="TOML problem file, or a bundled fixture name")
    ap.add_argument("--out", help="result file (default: stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    ap.add_argument("--L", type=float, default=None, help="height replacing i*infinity")
    ap.add_argument("--steps", type=int, default=None, help="ODE steps N_b")
    ap.add_argument("--validate", action="store_true", help="run the validation checks")
    ap.add_argument("--b-invariance", action="store_true", help="rerun with the alternate poles")
    ap.add_argument("--trajectory-dump", help="CSV of r_l(b), s_j(b) along the grid")
    ap.add_argument("--report", help="validation report path (default: <out>.validation.json or stdout)")
    return ap


def _resolve(path):
    if os.path.exists(path):
        return path
    try:
        candidate = fixture_path(path)
    except (ModuleNotFoundError, ValueError):
        return path
    return candidate if os.path.exists(candidate) else path


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            _resolve(args.config),
            out=args.out,
            format=args.format,
            L=args.L,
            steps=args.steps,
            trajectory_dump=args.trajectory_dump,
        )
        cfg.b_invariance = args.b_invariance
        cfg.validate = args.validate or args.b_invariance
        if not cfg.problem.is_moiseev:
            # only the diagnostic applies to a general matrix
            status, text = run_validate(cfg)
            _emit_report(args, cfg, text)
            return status
        status, result = run_factorize(cfg)
        if cfg.validate:
            vstatus, text = run_validate(cfg, result=result)
            _emit_report(args, cfg, text)
            status = max(status, vstatus)
        return status
    except FactorizationError as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return EXIT_ERROR


def _emit_report(args, cfg, text):
    path = args.report or (cfg.out + ".validation.json" if cfg.out else None)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


if __name__ == "__main__":
    sys.exit(main())
