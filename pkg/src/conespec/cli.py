"""
Batch front end: one JSON config per run, validated against the shipped schema.

Usage::

    conespec spectrum run.json --out results/
    conespec flow run.json --set flow.T=0.01 --set flow.nodes=31

Each run writes ``<command>.csv`` and ``summary.json`` into the output
directory.  Results are cached under ``$CONESPEC_CACHE_DIR`` (default
``~/.cache/conespec``) keyed by the SHA-256 of the effective config and the
tool version; a cache hit copies the stored files unchanged.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConeSpecError, FlowBreakdown, InvalidParameterError

log = logging.getLogger("conespec")

COMMANDS = ("spectrum", "modes", "hardy", "sobolev-check", "asymptotics", "lambda", "variation", "flow", "selftest")
DEFAULT_SEED = 20240611
VERSION_LINE = f"conespec {__version__}"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "grid": {"M": 2048, "r_min_factor": 1e-6, "grading": "auto"},
    "solver": {"abs_tol": 1e-12, "inner_bc": "friedrichs", "richardson": True},
    "lambda_max": 200.0,
    "modes": 10,
    "family": {"amplitude": 0.05, "freq": 0, "steps": [1e-3, 1e-4], "second": True},
    "flow": {"T": 0.05, "dt": 1e-5, "sample_every": 100, "nodes": 41, "direction": 1, "M": 512},
    "asymptotics": {"mode": 0, "depth": 1},
    "sobolev": {"samples": 100, "epsilons": [0.5, 1.0], "nodes": 20001},
    "output": {"dir": "conespec-out"},
    "seed": DEFAULT_SEED,
}

# fields that select where results go, not what is computed
_UNHASHED = ("output",)


class ConfigError(Exception):
    """Invalid configuration; ``str()`` is the line-anchored message."""


@dataclass
class Result:
    columns: list
    rows: list
    headline: dict
    status: str = "ok"
    exit_code: int = EXIT_OK
    stdout: str = ""


@dataclass
class Run:
    command: str
    config: dict
    source: str
    text: str
    config_hash: str = ""
    sections: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config handling


def load_schema() -> dict:
    return json.loads(resources.files("conespec").joinpath("schema/config.schema.json").read_text())


def _line_of(text: str, path) -> int:
    """Line of the innermost key of ``path`` found in order in ``text`` (1 if none)."""
    pos, line = 0, 1
    for part in path:
        if not isinstance(part, str):
            continue
        m = re.compile(r'"' + re.escape(part) + r'"\s*:').search(text, pos)
        if m is None:
            break
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return line


def _parse_scalar(raw: str):
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        return raw
    return val


def apply_overrides(cfg: dict, sets, source: str) -> dict:
    """Apply ``key.sub=value`` overrides; only scalar leaves may be replaced."""
    out = copy.deepcopy(cfg)
    for item in sets or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"{source}: --set {item!r}: expected KEY=VALUE")
        val = _parse_scalar(raw)
        if isinstance(val, (dict, list)):
            raise ConfigError(f"{source}: --set {key}: only scalar fields can be overridden")
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"{source}: --set {key}: {p!r} is not a section")
            node = nxt
        if isinstance(node.get(parts[-1]), (dict, list)):
            raise ConfigError(f"{source}: --set {key}: only scalar fields can be overridden")
        node[parts[-1]] = val
    return out


def _merge(defaults: dict, cfg: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256((canon + "\n" + VERSION_LINE).encode()).hexdigest()


def load_config(command: str, path: str | None, sets=()) -> Run:
    """Parse, override, validate and complete a config file."""
    source = path or "<defaults>"
    text = ""
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{source}:1: cannot read config: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}:1: top level must be a JSON object")
    raw = apply_overrides(raw, sets, source)
    errors = sorted(
        jsonschema.Draft202012Validator(load_schema()).iter_errors(raw),
        key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))),
    )
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = ".".join(map(str, err.absolute_path)) or "<root>"
        raise ConfigError(f"{source}:{_line_of(text, err.absolute_path)}: {where}: {err.message}")
    if raw.get("command", command) != command:
        raise ConfigError(
            f"{source}:{_line_of(text, ['command'])}: command: config is for {raw['command']!r}, not {command!r}"
        )
    cfg = _merge(DEFAULTS, raw)
    cfg["command"] = command
    run = Run(command, cfg, source, text)
    run.config_hash = config_hash(cfg)
    return run


def config_fail(run: Run, section: str, message: str) -> ConfigError:
    return ConfigError(f"{run.source}:{_line_of(run.text, section.split('.'))}: {section}: {message}")


# ---------------------------------------------------------------------------
# object construction


def build_cross_section(spec: dict):
    from .cross_section import CrossSection

    return CrossSection.from_dict(spec)


def build_profile(spec: dict):
    from .geometry import ExactCone, PerturbedCone, Spindle

    kind = spec["kind"]
    kw = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "exact_cone":
        return ExactCone(**kw)
    if kind == "perturbed_cone":
        return PerturbedCone(**kw)
    return Spindle(**kw)


def build_manifold(run: Run, diagnostic_ok: bool = True):
    from .geometry import SingularManifold

    spec = run.config.get("manifold")
    if spec is None:
        raise config_fail(run, "manifold", f"command {run.command!r} needs a manifold section")
    try:
        cs = build_cross_section(spec["cross_section"])
        prof = build_profile(spec["profile"])
        outer = spec.get("outer_bc", "conical" if spec["profile"]["kind"] == "spindle" else "dirichlet")
        return SingularManifold(spec["n"], cs, prof, outer, bool(spec.get("diagnostic", False)) and diagnostic_ok)
    except InvalidParameterError as exc:
        raise config_fail(run, "manifold", str(exc)) from None


def _grid_kw(run: Run) -> dict:
    g = run.config["grid"]
    return {"M": int(g["M"]), "r_min_factor": float(g["r_min_factor"])}


def build_grid(run: Run, mfd, M: int | None = None):
    from .radial_modes import RadialGrid

    g = run.config["grid"]
    return RadialGrid.for_manifold(mfd, int(M or g["M"]), float(g["r_min_factor"]), g["grading"])


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _num(x):
    """JSON-safe scalar (non-finite floats become strings)."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(run: Run) -> Result:
    from .spectrum import assemble

    mfd = build_manifold(run)
    lam_max = float(run.config["lambda_max"])
    sv = run.config["solver"]
    M = int(run.config["grid"]["M"])
    spec = assemble(mfd, lam_max, build_grid(run, mfd), inner_bc=sv["inner_bc"], abs_tol=sv["abs_tol"])
    rows = [(e.lam, e.mode, e.radial_index, e.multiplicity) for e in spec.entries]
    if sv["richardson"] and rows:
        # second-order grids: combine with the 2M values of the same (mode, k)
        fine = assemble(mfd, 1.5 * lam_max + 1.0, build_grid(run, mfd, 2 * M), inner_bc=sv["inner_bc"], abs_tol=sv["abs_tol"])
        f = {(e.mode, e.radial_index): e.lam for e in fine.entries}
        rows = sorted(
            ((4 * f[(mo, k)] - lam) / 3, mo, k, mult) for lam, mo, k, mult in rows if (mo, k) in f
        )
    head = {
        "count": len(rows),
        "count_with_multiplicity": int(sum(r[3] for r in rows)),
        "lambda_1": rows[0][0] if rows else math.nan,
        "lambda_max_certified": spec.lambda_max_certified,
        "modes_used": spec.num_modes_used,
        "nonsemibounded": spec.nonsemibounded,
        "richardson": bool(sv["richardson"]),
    }
    return Result(["lambda", "mode", "radial_index", "multiplicity"], rows, head)


def cmd_modes(run: Run) -> Result:
    from .radial_modes import ModeODE, discretize
    from .tridiag import eigenvalues

    mfd = build_manifold(run)
    grid = build_grid(run, mfd)
    sv = run.config["solver"]
    rows = []
    for i in range(int(run.config["modes"])):
        mu, mult = mfd.cross_section.mode(i)
        if not math.isfinite(mu):
            break
        ode = ModeODE(mfd.n, mu, mfd.profile, i, mult)
        op = discretize(ode, grid, sv["inner_bc"])
        lam1 = float(eigenvalues(op.T, 1, 1, sv["abs_tol"])[0])
        nu = ode.nu
        expo = math.nan if nu is None else ode.indicial_exponents()[0]
        rows.append((i, mu, mult, math.nan if nu is None else nu, expo, ode.tip_mu - (mfd.n - 2), lam1))
    head = {"modes": len(rows), "lambda_1": min((r[6] for r in rows), default=math.nan)}
    cols = ["mode", "mu", "multiplicity", "nu", "exponent", "hardy_coefficient", "lambda_1"]
    return Result(cols, rows, head)


def cmd_hardy(run: Run) -> Result:
    from .cross_section import check_cone_condition
    from .radial_modes import ModeODE, compute_delta0, hardy_report

    spec = run.config.get("manifold")
    if spec is None:
        raise config_fail(run, "manifold", "command 'hardy' needs a manifold section")
    try:
        cs = build_cross_section(spec["cross_section"])
        prof = build_profile(spec["profile"])
        n = int(spec["n"])
        tip = cs.scaled(prof.c0)
        cond = check_cone_condition(tip, n)
    except InvalidParameterError as exc:
        raise config_fail(run, "manifold", str(exc)) from None
    rows = []
    for i in range(int(run.config["modes"])):
        mu, mult = cs.mode(i)
        if not math.isfinite(mu):
            break
        rep = hardy_report(ModeODE(n, mu, prof, i, mult))
        rows.append((i, mu, mult, rep.coefficient, rep.semibounded, rep.strictly_positive))
    margin = cond.margin
    report = f"margin {margin:.6g}, {'admissible' if cond.admissible else 'not admissible'}"
    head = {"margin": margin, "admissible": cond.admissible, "report": report}
    if cond.admissible:
        head["delta0"] = compute_delta0(tip, n)
    cols = ["mode", "mu", "multiplicity", "coefficient", "semibounded", "strictly_positive"]
    return Result(cols, rows, head, stdout=report)


def cmd_sobolev(run: Run) -> Result:
    from .geometry import ExactCone
    from .sobolev import RadialFunction, cone_cylinder_check, random_bump

    mfd = build_manifold(run)
    if not isinstance(mfd.profile, ExactCone):
        raise config_fail(run, "manifold.profile", "sobolev-check needs an exact cone")
    sb = run.config["sobolev"]
    rng = np.random.default_rng(int(run.config["seed"]))
    rows = []
    for eps in sb["epsilons"]:
        # random bumps start at or beyond 0.02 eps
        r = np.logspace(math.log10(eps) - 2, math.log10(max(eps, mfd.L)), int(sb["nodes"]))
        for k in range(int(sb["samples"])):
            f, df, d2f = random_bump(rng, (0.0, eps))
            rf = RadialFunction.from_callables(r, f, df, d2f)
            rep = cone_cylinder_check([rf], eps, mfd.n)
            rows.append((k, eps, rep.lhs, rep.rhs, rep.lhs - rep.rhs, rep.identity_residual, rep.passed))
    head = {
        "samples": len(rows),
        "min_margin": min(r[4] for r in rows),
        "max_identity_residual": max(r[5] for r in rows),
        "all_pass": all(r[6] for r in rows),
        "seed": int(run.config["seed"]),
    }
    cols = ["sample", "epsilon", "lhs", "rhs", "margin", "identity_residual", "pass"]
    return Result(cols, rows, head)


def cmd_asymptotics(run: Run) -> Result:
    from .asymptotics import expansion_consistency, gradient_exponent, leading_exponent
    from .geometry import ExactCone
    from .spectrum import eigenfunction_from_operator
    from .radial_modes import ModeODE, discretize

    mfd = build_manifold(run)
    a = run.config["asymptotics"]
    mode = int(a["mode"])
    grid = build_grid(run, mfd)
    mu, mult = mfd.cross_section.mode(mode)
    op = discretize(ModeODE(mfd.n, mu, mfd.profile, mode, mult), grid, run.config["solver"]["inner_bc"])
    prof = eigenfunction_from_operator(op, 1, mfd)
    pid = f"{mfd.profile.kind}:n={mfd.n}:mode={mode}"
    rows = []
    lead = leading_exponent(prof, mfd)
    grad = gradient_exponent(prof, mfd)
    for name, fit, tol in (("leading", lead, 1e-2), ("gradient", grad, 2e-2)):
        rows.append((f"{pid}:{name}", f"{fit.window[0]:.6g}:{fit.window[1]:.6g}", fit.slope, fit.target, fit.error <= tol))
    head = {"leading_slope": lead.slope, "target": lead.target, "gradient_slope": grad.slope}
    if isinstance(mfd.profile, ExactCone) and int(a["depth"]) > 0:
        gk = _grid_kw(run)
        for d in range(1, int(a["depth"]) + 1):
            rep = expansion_consistency(mfd, d, mode, min(gk["M"], 1024), gk["r_min_factor"])
            fit = rep.remainder
            rows.append((f"{pid}:remainder{d}", f"{fit.window[0]:.6g}:{fit.window[1]:.6g}", fit.slope, fit.target, rep.passed))
            head[f"remainder{d}_slope"] = fit.slope
    head["all_pass"] = all(r[4] for r in rows)
    return Result(["profile_id", "window", "slope", "target", "pass"], rows, head)


def cmd_lambda(run: Run) -> Result:
    from .variation import lambda_value

    mfd = build_manifold(run)
    gk = _grid_kw(run)
    lv = lambda_value(mfd, build_grid(run, mfd), gk["M"], gk["r_min_factor"])
    rows = list(zip(lv.r, lv.u, lv.f))
    head = {
        "lambda": lv.lam,
        "residual": lv.residual,
        "normalization": lv.normalization,
        "simple": lv.simple,
        "gap": lv.gap,
    }
    return Result(["r", "u", "f"], rows, head)


def cmd_variation(run: Run) -> Result:
    from .variation import bump_family, first_variation, full_variation, scaling_family, zero_family

    mfd = build_manifold(run, diagnostic_ok=False)
    fam = run.config.get("family")
    if fam is None or "kind" not in fam:
        raise config_fail(run, "family", "command 'variation' needs a family section with a kind")
    kind = fam["kind"]
    try:
        if kind == "bump":
            family = bump_family(mfd, fam["amplitude"], fam["freq"])
        elif kind == "scaling":
            family = scaling_family(mfd)
        else:
            family = zero_family(mfd)
    except InvalidParameterError as exc:
        raise config_fail(run, "family", str(exc)) from None
    gk = _grid_kw(run)
    steps = tuple(float(s) for s in fam["steps"])
    if fam["second"]:
        rep = full_variation(family, **gk)
    else:
        rep = first_variation(family, steps=steps, **gk)
    rec = rep.to_record()
    fam_id = family.label
    rows = [(fam_id, steps[0], steps[1], k, v) for k, v in rec.items() if not isinstance(v, (tuple, list))]
    keys = ("lambda0", "dlambda_fd", "dlambda_hf", "dlambda_geom", "hf_residual", "geom_residual", "d2lambda_fd", "d2lambda_pert")
    head = {k: rec[k] for k in keys if k in rec}
    return Result(["family", "step_1", "step_2", "quantity", "value"], rows, head)


def cmd_flow(run: Run) -> Result:
    from .ricci_flow import FlowState, run_with_lambda

    spec = run.config.get("manifold")
    if spec is None:
        raise config_fail(run, "manifold", "command 'flow' needs a manifold section")
    cs, prof = spec["cross_section"], spec["profile"]
    if cs["kind"] != "round_sphere" or float(cs.get("radius", 1.0)) != 1.0:
        raise config_fail(run, "manifold.cross_section", "flow runs over the unit round sphere")
    if cs["m"] != spec["n"] - 1:
        raise config_fail(run, "manifold.n", "n must equal sphere dimension + 1")
    fl = run.config["flow"]
    nodes = int(fl["nodes"])
    try:
        if prof["kind"] == "spindle":
            st = FlowState.spindle(cs["m"], float(prof.get("c", 1.0)), nodes, float(prof.get("L", math.pi)))
        elif prof["kind"] == "exact_cone":
            st = FlowState.flat_cone(cs["m"], nodes, float(prof.get("L", 1.0)))
        else:
            st = FlowState.from_profile(build_profile(prof), cs["m"], nodes, closure="dirichlet")
    except InvalidParameterError as exc:
        raise config_fail(run, "manifold.profile", str(exc)) from None
    if fl["dt"] > st.stable_dt():
        raise config_fail(run, "flow.dt", f"dt = {fl['dt']:g} exceeds the stability bound {st.stable_dt():.3g}")
    series = run_with_lambda(
        st, fl["T"], fl["dt"], int(fl["sample_every"]), float(fl["direction"]), int(fl["M"]), run.config["grid"]["r_min_factor"]
    )
    rows = [(s.t, s.lam, s.err, s.min_phi, s.tip_ratio) for s in series.samples]
    bad = series.violations()
    head = {
        "samples": len(rows),
        "violations": len(bad),
        "lambda_first": rows[0][1],
        "lambda_last": rows[-1][1],
        "tip_ratio_last": rows[-1][4],
        "failed_samples": sum(1 for s in series.samples if not math.isfinite(s.lam)),
    }
    return Result(["t", "lambda", "err", "min_phi", "tip_ratio"], rows, head)


def selftest_checks():
    """``(name, value, expected, tol)`` for the closed-form example suite."""
    from .cross_section import check_cone_condition, round_sphere
    from .geometry import ExactCone, SingularManifold, scal
    from .radial_modes import ModeODE, hardy_report
    from .ricci_flow import FlowState, velocities
    from .special import bessel_j, digamma, kummer_m, ln_gamma
    from .tridiag import SymTridiag, eigenvalues, sturm_count

    t2 = SymTridiag(np.array([2.0, 2.0]), np.array([-1.0]))
    cone = ExactCone(1.0)
    flat = SingularManifold(3, round_sphere(2), cone)
    rr = np.linspace(0.01, 1.0, 50)
    vphi, vu = velocities(FlowState.flat_cone(2, 51))
    ev = eigenvalues(t2, 1, 2, 1e-14)
    return [
        ("margin S2(1) n=3", check_cone_condition(round_sphere(2), 3).margin, 1.0, 1e-12),
        ("margin S3(1) n=4", check_cone_condition(round_sphere(3), 4).margin, 4.0, 1e-12),
        ("J_0(0)", bessel_j(0.0, 0.0), 1.0, 0.0),
        ("M(a,b,0)", kummer_m(0.7, 1.3, 0.0), 1.0, 0.0),
        ("M(1,1,1)", kummer_m(1.0, 1.0, 1.0), math.e, 1e-14),
        ("digamma(2)-digamma(1)", digamma(2.0) - digamma(1.0), 1.0, 1e-14),
        ("ln_gamma(5)", ln_gamma(5.0), math.log(24.0), 1e-14),
        ("sturm count 2x2 at 1", sturm_count(t2, 1.0), 1, 0),
        ("eigenvalue 1 of 2x2", ev[0], 1.0, 1e-12),
        ("eigenvalue 2 of 2x2", ev[1], 3.0, 1e-12),
        ("hardy n=3 mu=2", hardy_report(ModeODE(3, 2.0, cone)).coefficient, 1.0, 0.0),
        ("hardy n=3 mu=1", hardy_report(ModeODE(3, 1.0, cone)).coefficient, 0.0, 0.0),
        ("flat cone max|R|", float(np.max(np.abs(scal(flat, rr)))), 0.0, 1e-12),
        ("flat cone max|phi_t|", float(np.max(np.abs(vphi))), 0.0, 1e-10),
        ("flat cone max|u_t|", float(np.max(np.abs(vu))), 0.0, 1e-10),
    ]


def cmd_selftest(run: Run) -> Result:
    rows = []
    for name, val, exp, tol in selftest_checks():
        ok = abs(float(val) - float(exp)) <= tol
        rows.append((name, float(val), float(exp), ok))
    passed = sum(r[3] for r in rows)
    head = {"checks": len(rows), "passed": passed}
    ok = passed == len(rows)
    return Result(
        ["check", "value", "expected", "pass"],
        rows,
        head,
        status="ok" if ok else "failed",
        exit_code=EXIT_OK if ok else EXIT_NUMERIC,
        stdout=f"selftest: {passed}/{len(rows)} passed",
    )


HANDLERS = {
    "spectrum": cmd_spectrum,
    "modes": cmd_modes,
    "hardy": cmd_hardy,
    "sobolev-check": cmd_sobolev,
    "asymptotics": cmd_asymptotics,
    "lambda": cmd_lambda,
    "variation": cmd_variation,
    "flow": cmd_flow,
    "selftest": cmd_selftest,
}


# ---------------------------------------------------------------------------
# output and cache


def header_lines(run: Run) -> list[str]:
    return [VERSION_LINE, f"config_hash {run.config_hash}", f"command {run.command}"]


def render_csv(run: Run, res: Result) -> str:
    buf = io.StringIO()
    for line in header_lines(run):
        buf.write(f"# {line}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(res.columns)
    for row in res.rows:
        wr.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def render_summary(run: Run, status: str, headline: dict, extra: dict | None = None) -> str:
    doc = {
        "tool_version": VERSION_LINE,
        "config_hash": run.config_hash,
        "command": run.command,
        "status": status,
        "headline_numbers": {k: _num(v) for k, v in headline.items()},
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cache_dir() -> Path:
    env = os.environ.get("CONESPEC_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "conespec"


def _copy_tree(src: Path, dst: Path):
    dst.mkdir(parents=True, exist_ok=True)
    for f in sorted(src.iterdir()):
        if f.is_file():
            shutil.copyfile(f, dst / f.name)


def _store(entry: Path, files: dict):
    entry.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=entry.parent, prefix=".tmp-"))
    for name, body in files.items():
        (tmp / name).write_text(body)
    try:
        tmp.rename(entry)
    except OSError:  # another run stored it first
        shutil.rmtree(tmp, ignore_errors=True)


def execute(run: Run, out_dir: Path, use_cache: bool = True) -> int:
    """Run (or replay from cache) and write result files into ``out_dir``."""
    entry = cache_dir() / run.config_hash
    if use_cache and entry.is_dir():
        _copy_tree(entry, out_dir)
        log.info("cache hit %s", run.config_hash[:12])
        summary = json.loads((entry / "summary.json").read_text())
        report = summary["headline_numbers"].get("report")
        if report:
            print(report)
        return EXIT_OK
    try:
        res = HANDLERS[run.command](run)
    except ConfigError:
        raise
    except InvalidParameterError as exc:
        raise ConfigError(f"{run.source}:1: {exc}") from None
    except (ConeSpecError, ArithmeticError, np.linalg.LinAlgError) as exc:
        diag = {
            "error_type": type(exc).__name__,
            "message": str(exc),
            "diagnostics": {k: _num(v) for k, v in getattr(exc, "diagnostics", {}).items()} if isinstance(exc, FlowBreakdown) else {},
        }
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "diagnostic.json").write_text(render_summary(run, "failed", {}, diag))
        (out_dir / "summary.json").write_text(render_summary(run, "failed", {}))
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    files = {
        f"{run.command}.csv": render_csv(run, res),
        "summary.json": render_summary(run, res.status, res.headline),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, body in files.items():
        (out_dir / name).write_text(body)
    if res.stdout:
        print(res.stdout)
    if use_cache and res.exit_code == EXIT_OK:
        _store(entry, files)
    return res.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conespec", description="Spectra of -4 Laplacian + R on conical manifolds.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", nargs="?", help="JSON run configuration (optional for selftest)")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scalar config field, e.g. grid.M=1024")
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.add_argument("--no-cache", action="store_true", help="always recompute")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.config is None and args.command != "selftest":
        print(f"conespec: command {args.command!r} needs a config file", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run = load_config(args.command, args.config, args.sets)
        out = Path(args.out or run.config["output"]["dir"])
        return execute(run, out, not args.no_cache)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
