"""Batch experiment runner.

A run is described by an INI-style file with sections ``[problem]``,
``[schedule]``, ``[x0]``, ``[flow]``, ``[discrete]`` (optional),
``[analyses]`` and ``[output]``.  Vectors are comma-separated reals, matrix
rows are separated by ``;`` and numbers may use ``pi`` (e.g. ``pi/2``).
Only ``#`` starts an inline comment.

Exit status: 0 when every requested analysis passes, 2 when one fails,
1 on configuration or runtime errors.
"""

import argparse
import ast
import configparser
import csv
import json
import logging
import math
import operator as _op
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import analysis
from .discrete import fb_iterate, km_iterate
from .exceptions import KMFlowError
from .flow import METHODS, FlowConfig, integrate
from .operators import MonotoneSpec, certify_nonexpansive
from .problems import make_bolte, make_lasso, make_quadratic, make_rotation
from .rescale import rescale_comparison
from .schedules import Schedule

log = logging.getLogger("kmflow")

SECTIONS = ("problem", "schedule", "x0", "flow", "discrete", "analyses", "output")
REQUIRED_SECTIONS = ("problem", "schedule", "x0", "flow")
ANALYSES = ("lyapunov", "rate_bound", "little_o", "fb_diag", "slope", "rescale_check", "certify")
PROBLEM_KEYS = {
    "rotation": ("theta",),
    "bolte": ("set", "lo", "hi", "center", "radius", "q", "b", "mu"),
    "lasso": ("a", "b", "reg", "gamma"),
    "quadratic": ("q", "gamma"),
}
SCHEDULE_KEYS = {
    "constant": ("c",),
    "hyperbolic": ("a",),
    "piecewise": ("breakpoints", "values"),
    "table": ("times", "values"),
}

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


# --------------------------------------------------------------------------- parsing helpers

_BINOPS = {ast.Add: _op.add, ast.Sub: _op.sub, ast.Mult: _op.mul, ast.Div: _op.truediv, ast.Pow: _op.pow}
_NAMES = {"pi": math.pi, "e": math.e}


def parse_real(text):
    """Evaluate a real literal or a small arithmetic expression in ``pi`` and ``e``."""

    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError

    try:
        value = ev(ast.parse(text.strip(), mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError):
        raise ValueError(f"not a real number: {text.strip()!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text.strip()!r}")
    return value


def parse_vector(text):
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty vector")
    return np.array([parse_real(p) for p in parts])


def parse_matrix(text):
    rows = [parse_vector(r) for r in text.split(";") if r.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise ValueError("matrix rows must be non-empty and of equal length")
    return np.vstack(rows)


@dataclass
class Issue:
    line: Optional[int]
    where: str
    message: str

    def __str__(self):
        prefix = f"line {self.line}: " if self.line else ""
        return f"{prefix}[{self.where}] {self.message}"


@dataclass
class RunConfig:
    path: Path
    problem: object
    schedule: Schedule
    x0: np.ndarray
    flow: FlowConfig
    discrete: Optional[dict]
    analyses: List[str]
    analysis_params: dict
    output: Path
    seed: int
    problem_params: dict = field(default_factory=dict)


class _Reader:
    """configparser wrapper that remembers where each key was defined."""

    _section_re = re.compile(r"^\s*\[([^\]]+)\]")
    _key_re = re.compile(r"^\s*([A-Za-z0-9_]+)\s*[=:]")

    def __init__(self, text):
        self.issues = []
        self.lines = {}
        section = None
        for n, line in enumerate(text.splitlines(), start=1):
            m = self._section_re.match(line)
            if m:
                section = m.group(1).strip().lower()
                self.lines[(section, None)] = n
                continue
            m = self._key_re.match(line)
            if m and section:
                self.lines.setdefault((section, m.group(1).lower()), n)
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            self.cp.read_string(text)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            if line is None and getattr(exc, "errors", None):
                line = exc.errors[0][0]
            msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
            self.issues.append(Issue(line, "parse", msg))

    def line(self, section, key=None):
        return self.lines.get((section, key)) or self.lines.get((section, None))

    def error(self, section, key, message):
        where = f"{section}.{key}" if key else section
        self.issues.append(Issue(self.line(section, key), where, message))

    def has(self, section, key=None):
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key)

    def raw(self, section, key, required=True):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key)
        if required:
            self.error(section, None, f"missing required key {key!r}")
        return None

    def get(self, section, key, parse, required=True, default=None):
        text = self.raw(section, key, required)
        if text is None:
            return default
        try:
            return parse(text)
        except ValueError as exc:
            self.error(section, key, str(exc))
            return None

    def blame(self, section, exc, keys):
        """Anchor a constructor error at the first key its message mentions."""
        msg = str(exc)
        for key in keys:
            if re.search(rf"\b{re.escape(key)}\b", msg, flags=re.IGNORECASE) and self.has(section, key):
                self.error(section, key, msg)
                return
        self.error(section, None, msg)


def _int(text):
    value = parse_real(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text.strip()!r}")
    return int(value)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text.strip()!r}")


def _names(text):
    return [n.strip().lower() for n in text.split(",") if n.strip()]


# --------------------------------------------------------------------------- config building


def _build_problem(r):
    name = (r.raw("problem", "name") or "").strip().lower()
    if not name:
        return None, {}
    if name not in PROBLEM_KEYS:
        r.error("problem", "name", f"unknown problem {name!r}; expected one of {sorted(PROBLEM_KEYS)}")
        return None, {}
    for key in r.cp.options("problem"):
        if key != "name" and key not in PROBLEM_KEYS[name]:
            r.error("problem", key, f"unknown key for problem {name!r}")
    n_before = len(r.issues)
    params = {}
    try:
        if name == "rotation":
            params["theta"] = r.get("problem", "theta", parse_real)
            if len(r.issues) > n_before:
                return None, params
            return make_rotation(params["theta"]), params
        if name == "bolte":
            kind = (r.raw("problem", "set") or "").strip().lower()
            q = r.get("problem", "q", parse_matrix)
            b = r.get("problem", "b", parse_vector)
            mu = r.get("problem", "mu", parse_real)
            if kind == "box":
                lo, hi = r.get("problem", "lo", parse_vector), r.get("problem", "hi", parse_vector)
                if len(r.issues) > n_before:
                    return None, params
                c = MonotoneSpec.box(lo, hi)
            elif kind == "ball":
                center = r.get("problem", "center", parse_vector)
                radius = r.get("problem", "radius", parse_real)
                if len(r.issues) > n_before:
                    return None, params
                c = MonotoneSpec.ball(center, radius)
            else:
                r.error("problem", "set", f"constraint set must be 'box' or 'ball', got {kind!r}")
                return None, params
            if len(r.issues) > n_before:
                return None, params
            params.update(set=kind, mu=mu)
            return make_bolte(c, q, b, mu), params
        if name == "lasso":
            a = r.get("problem", "a", parse_matrix)
            b = r.get("problem", "b", parse_vector)
            reg = r.get("problem", "reg", parse_real)
            gamma = r.get("problem", "gamma", parse_real)
            if len(r.issues) > n_before:
                return None, params
            params.update(reg=reg, gamma=gamma)
            return make_lasso(a, b, reg, gamma), params
        q = r.get("problem", "q", parse_matrix)
        gamma = r.get("problem", "gamma", parse_real)
        if len(r.issues) > n_before:
            return None, params
        params.update(gamma=gamma)
        return make_quadratic(q, gamma), params
    except KMFlowError as exc:
        r.blame("problem", exc, PROBLEM_KEYS[name])
        return None, params


def _build_schedule(r):
    kind = (r.raw("schedule", "kind") or "").strip().lower()
    if not kind:
        return None
    if kind not in SCHEDULE_KEYS:
        r.error("schedule", "kind", f"unknown schedule kind {kind!r}; expected one of {sorted(SCHEDULE_KEYS)}")
        return None
    for key in r.cp.options("schedule"):
        if key not in ("kind", "lambda_max") + SCHEDULE_KEYS[kind]:
            r.error("schedule", key, f"unknown key for schedule kind {kind!r}")
    n_before = len(r.issues)
    lam_max = r.get("schedule", "lambda_max", parse_real, required=False)
    if kind in ("constant", "hyperbolic"):
        key = SCHEDULE_KEYS[kind][0]
        value = r.get("schedule", key, parse_real, required=kind == "constant", default=1.0)
        args = (value,)
    else:
        first, second = SCHEDULE_KEYS[kind]
        args = (r.get("schedule", first, parse_vector), r.get("schedule", second, parse_vector))
    if len(r.issues) > n_before:
        return None
    try:
        return getattr(Schedule, kind)(*args, lambda_max=lam_max)
    except KMFlowError as exc:
        if "upper bound" in str(exc):
            r.error("schedule", "lambda_max", str(exc))
        else:
            r.blame("schedule", exc, SCHEDULE_KEYS[kind] + ("lambda_max",))
        return None


def _build_flow(r):
    n_before = len(r.issues)
    t_end = r.get("flow", "t_end", parse_real)
    kw = {"t_end": t_end}
    if r.has("flow", "sample_times"):
        kw["sample_times"] = r.get("flow", "sample_times", parse_vector)
    else:
        kw["n_samples"] = r.get("flow", "n_samples", _int, required=False, default=101)
    method = (r.raw("flow", "method", required=False) or "rk45").strip().lower()
    if method not in METHODS:
        r.error("flow", "method", f"unknown method {method!r}; expected one of {list(METHODS)}")
    kw["method"] = method
    for key in ("h", "abs_tol", "rel_tol"):
        if r.has("flow", key):
            kw[key] = r.get("flow", key, parse_real)
    if r.has("flow", "record_derivative"):
        kw["record_derivative"] = r.get("flow", "record_derivative", _bool)
    if len(r.issues) > n_before:
        return None
    try:
        return FlowConfig(**kw)
    except KMFlowError as exc:
        r.blame("flow", exc, ("t_end", "sample_times", "n_samples", "method", "h", "abs_tol", "rel_tol"))
        return None


def load_config(path, output_override=None):
    """Parse `path`; returns ``(RunConfig or None, issues)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        return None, [Issue(None, "file", f"cannot read config: {exc.strerror or exc}")]
    r = _Reader(text)
    if r.issues:
        return None, r.issues
    for section in r.cp.sections():
        if section not in SECTIONS:
            r.error(section, None, f"unknown section [{section}]; expected {list(SECTIONS)}")
    for section in REQUIRED_SECTIONS:
        if not r.has(section):
            r.issues.append(Issue(None, section, f"missing required section [{section}]"))
    if r.issues:
        return None, r.issues

    problem, problem_params = _build_problem(r)
    schedule = _build_schedule(r)
    x0 = r.get("x0", "values", parse_vector)
    flow = _build_flow(r)

    if problem is not None and x0 is not None and x0.size != problem.dim:
        r.error("x0", "values", f"x0 has dimension {x0.size}, problem {problem.name} lives in R^{problem.dim}")

    discrete = None
    if r.has("discrete"):
        mode = (r.raw("discrete", "mode") or "").strip().lower()
        n_steps = r.get("discrete", "n_steps", _int)
        relax = r.get("discrete", "relaxation", parse_real, required=False)
        if mode not in ("km", "fb"):
            r.error("discrete", "mode", f"discrete mode must be 'km' or 'fb', got {mode!r}")
        elif mode == "fb" and problem is not None and problem.fb_parts is None:
            r.error("discrete", "mode", f"mode 'fb' needs a forward-backward problem, not {problem.name}")
        if n_steps is not None and n_steps < 0:
            r.error("discrete", "n_steps", "n_steps must be nonnegative")
        if relax is not None:
            upper = problem.constants.get("delta", 1.0) if mode == "fb" and problem is not None else 1.0
            if not 0.0 <= relax <= upper:
                r.error("discrete", "relaxation", f"relaxation must lie in [0, {upper:g}]")
        discrete = {"mode": mode, "n_steps": n_steps, "relaxation": relax}

    names, params = [], {}
    if r.has("analyses"):
        names = r.get("analyses", "include", _names, required=False, default=[]) or []
        for n in names:
            if n not in ANALYSES:
                r.error("analyses", "include", f"unknown analysis {n!r}; expected some of {list(ANALYSES)}")
        if r.has("analyses", "slope_window"):
            window = r.get("analyses", "slope_window", parse_vector)
            if window is not None and (window.size != 2 or not 0 < window[0] < window[1]):
                r.error("analyses", "slope_window", "slope_window must be two increasing positive times")
            params["slope_window"] = window
        if r.has("analyses", "slope_max"):
            params["slope_max"] = r.get("analyses", "slope_max", parse_real)
        if r.has("analyses", "trials"):
            params["trials"] = r.get("analyses", "trials", _int)
        for key in r.cp.options("analyses"):
            if key not in ("include", "slope_window", "slope_max", "trials"):
                r.error("analyses", key, "unknown key")

    if problem is not None:
        if "rate_bound" in names and problem.dist0_of is None:
            r.error("analyses", "include",
                    f"rate_bound needs the exact distance to the fixed-point set, unknown for {problem.name}")
        if "fb_diag" in names and problem.fb_parts is None:
            r.error("analyses", "include", f"fb_diag needs a forward-backward problem, not {problem.name}")
        if "lyapunov" in names and not problem.known_fixed_points:
            r.error("analyses", "include", f"lyapunov needs a known fixed point of {problem.name}")
    if schedule is not None and flow is not None and ({"rate_bound", "little_o"} & set(names)):
        lo, hi = schedule.bounds(flow.t_end)
        if not (lo > 0.0 and hi < 1.0):
            r.error("analyses", "include",
                    f"rate analyses need 0 < lambda < 1 on [0, t_end]; schedule spans [{lo:g}, {hi:g}]")

    out_dir = r.raw("output", "dir", required=False) if r.has("output") else None
    seed = r.get("output", "seed", _int, required=False, default=0) if r.has("output") else 0
    output = Path(output_override) if output_override else Path((out_dir or "kmflow-out").strip())
    if not output.is_absolute():
        output = (path.parent / output) if not output_override else output

    if r.issues:
        return None, r.issues
    return RunConfig(path, problem, schedule, x0, flow, discrete, names, params, output, seed or 0,
                     problem_params), []


# --------------------------------------------------------------------------- running


def _fmt(v):
    return format(float(v), ".17g")


def write_trajectory_csv(path, traj, dist_of=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[f"x_{i}" for i in range(traj.dim)], "residual", "speed", "dist_to_fix"])
        for t, x, r, v in zip(traj.times, traj.states, traj.residuals, traj.speeds):
            dist = _fmt(dist_of(x)) if dist_of is not None else ""
            w.writerow([_fmt(t), *map(_fmt, x), _fmt(r), _fmt(v), dist])


def write_iterates_csv(path, it):
    lams = np.append(it.relaxations, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", *[f"x_{i}" for i in range(it.iterates.shape[1])], "residual", "lambda_n"])
        for n, (x, r, lam) in enumerate(zip(it.iterates, it.residuals, lams)):
            w.writerow([n, *map(_fmt, x), _fmt(r), "" if np.isnan(lam) else _fmt(lam)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _run_analysis(name, cfg, traj):
    prob, s = cfg.problem, cfg.schedule
    if name == "lyapunov":
        reports = [analysis.lyapunov_report(traj, y) for y in prob.known_fixed_points]
        res_ok, res_worst = analysis.residual_report(traj)
        return {"passed": all(rep.passed for rep in reports) and res_ok,
                "fixed_points": [dict(rep.as_dict(), y=y) for rep, y in zip(reports, prob.known_fixed_points)],
                "residual_monotone": res_ok, "residual_max_increase": res_worst}
    if name == "rate_bound":
        rep = analysis.rate_bound_check(traj, s, prob.dist0_of(cfg.x0))
        return rep.as_dict()
    if name == "little_o":
        return analysis.little_o_check(traj, s).as_dict()
    if name == "fb_diag":
        zeros = prob.known_fixed_points
        return analysis.fb_diagnostics(traj, prob.fb_parts[1], zeros[0], zeros[1:]).as_dict()
    if name == "slope":
        window = cfg.analysis_params.get("slope_window")
        if window is None:
            window = (cfg.flow.t_end / 10.0, cfg.flow.t_end)
        try:
            slope = analysis.slope_fit(traj, tuple(window))
        except KMFlowError as exc:
            return {"passed": False, "error": str(exc), "window": list(window)}
        limit = cfg.analysis_params.get("slope_max")
        return {"passed": limit is None or slope <= limit, "slope": slope, "window": list(window),
                "slope_max": limit}
    if name == "rescale_check":
        table = rescale_comparison(prob.operator, s, cfg.x0, cfg.flow.t_end, cfg.flow)
        tol = 50.0 * max(cfg.flow.abs_tol, cfg.flow.rel_tol) * (1.0 + float(np.linalg.norm(cfg.x0)))
        gap = float(np.max(table["discrepancy"]))
        return {"passed": gap <= tol, "max_discrepancy": gap, "tolerance": tol, "_table": table}
    if name == "certify":
        rep = certify_nonexpansive(prob.operator, trials=cfg.analysis_params.get("trials", 1000), seed=cfg.seed)
        return {"passed": rep.passed, "worst_excess": rep.worst, "trials": rep.trials, "seed": rep.seed}
    raise ValueError(name)


def _write_rescale_csv(path, table):
    dim = table["direct"].shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "tau", *[f"x_{i}" for i in range(dim)], *[f"w_{i}" for i in range(dim)], "discrepancy"])
        for row in zip(table["times"], table["tau"], table["direct"], table["rescaled"], table["discrepancy"]):
            t, tau, x, wv, gap = row
            w.writerow([_fmt(t), _fmt(tau), *map(_fmt, x), *map(_fmt, wv), _fmt(gap)])


def execute(cfg):
    """Run one configuration and write its artifacts; returns the exit status."""
    cfg.output.mkdir(parents=True, exist_ok=True)
    prob, s = cfg.problem, cfg.schedule
    traj = integrate(prob.operator, s, cfg.x0, cfg.flow)
    write_trajectory_csv(cfg.output / "trajectory.csv", traj, prob.dist0_of)

    summary = [f"problem: {prob.name}", f"operator: {prob.operator.label} ({prob.operator.regularity})",
               f"schedule: {s.kind} (lambda_max={s.lambda_max:g})", f"x0: {list(map(float, cfg.x0))}",
               f"flow: {cfg.flow.method}, t_end={cfg.flow.t_end:g}, samples={cfg.flow.n_samples}",
               f"continuous residual at t_end: {traj.residuals[-1]:.6g}"]

    if cfg.discrete is not None:
        d = cfg.discrete
        lam = d["relaxation"] if d["relaxation"] is not None else s
        if d["mode"] == "km":
            it = km_iterate(prob.operator, lam, cfg.x0, d["n_steps"])
        else:
            a, b, gamma = prob.fb_parts
            it = fb_iterate(a, b, gamma, lam, cfg.x0, d["n_steps"])
        write_iterates_csv(cfg.output / "iterates.csv", it)
        summary.append(f"discrete {d['mode']}: residual after {d['n_steps']} steps: {it.residuals[-1]:.6g}"
                       f" (initial {it.residuals[0]:.6g})")
        cont_conv = traj.residuals[-1] <= 1e-6 * (1.0 + traj.residuals[0])
        disc_conv = it.residuals[-1] <= 1e-6 * (1.0 + it.residuals[0])
        if cont_conv and not disc_conv:
            summary.append("CONTRAST: the continuous trajectory converges while the discrete iteration does not")
        elif disc_conv and not cont_conv:
            summary.append("CONTRAST: the discrete iteration converges while the continuous trajectory has not yet")

    results = []
    for name in cfg.analyses:
        out = _run_analysis(name, cfg, traj)
        table = out.pop("_table", None)
        if table is not None:
            _write_rescale_csv(cfg.output / "rescale.csv", table)
        results.append({"analysis": name, **out})
        summary.append(f"{name}: {'PASS' if out['passed'] else 'FAIL'}")

    with open(cfg.output / "analysis.json", "w") as fh:
        json.dump(_jsonable({"seed": cfg.seed, "analyses": results}), fh, indent=2)
        fh.write("\n")
    failed = [r["analysis"] for r in results if not r["passed"]]
    summary.append("result: " + ("all analyses passed" if not failed else "failed: " + ", ".join(failed)))
    (cfg.output / "summary.txt").write_text("\n".join(summary) + "\n")
    return (EXIT_FAILED if failed else EXIT_OK), summary


def _cmd_validate(args):
    cfg, issues = load_config(args.config, args.output_dir)
    if issues:
        for issue in issues:
            print(f"{args.config}: {issue}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        print("ok")
    return EXIT_OK


def _cmd_run(args):
    cfg, issues = load_config(args.config, args.output_dir)
    if issues:
        for issue in issues:
            print(f"{args.config}: {issue}", file=sys.stderr)
        return EXIT_ERROR
    try:
        status, summary = execute(cfg)
    except (KMFlowError, OSError) as exc:
        print(f"{args.config}: run failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        print("\n".join(summary))
    return status


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="path to the run configuration")
    common.add_argument("--output-dir", help="override the [output] dir of the config")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    parser = argparse.ArgumentParser(prog="kmflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run a configuration").set_defaults(func=_cmd_run)
    sub.add_parser("validate", parents=[common], help="check a configuration without running it") \
        .set_defaults(func=_cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
