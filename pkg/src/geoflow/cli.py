"""Command-line front end: model loading, exact verification, curvature, flows, approximation, n-body.

Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 negative
mathematical outcome (identity failed, curvature not certified).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from geoflow import approx, dynamics, geometry, integrate, nbody, symplectic
from geoflow.expr import ExpressionError, parse_polynomial, parse_rational

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_NEGATIVE = 0, 2, 3, 4

_EXPR = {"type": ["string", "number"]}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["chart", "embedded", "nbody"]},
        "name": {"type": "string"},
        "variables": {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_]*$"},
                      "minItems": 1, "uniqueItems": True},
        "metric": {"type": "array", "items": {"type": "array", "items": _EXPR}},
        "guard": {"type": "string"},
        "periods": {"type": "object", "additionalProperties": {"type": ["string", "number", "null"]}},
        "constraints": {"type": "array", "items": {"type": "string"}},
        "ambient_dim": {"type": "integer", "minimum": 1},
        "ambient_form": {"oneOf": [{"const": "euclidean"},
                                   {"type": "array", "items": {"type": "array", "items": _EXPR}}]},
        "compact": {"type": "boolean"},
        "hamiltonian": {
            "type": "object",
            "properties": {
                "potential": {"type": ["string", "null"]},
                "convention": {"enum": list(symplectic.CONVENTIONS)},
            },
            "additionalProperties": False,
        },
        "nbody": {
            "type": "object",
            "required": ["bodies"],
            "properties": {
                "bodies": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["mass", "q"],
                    "properties": {
                        "mass": {"type": "number", "exclusiveMinimum": 0},
                        "q": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                        "v": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                    },
                    "additionalProperties": False}},
                "G": {"type": "number", "exclusiveMinimum": 0},
                "signs": {"oneOf": [{"const": "all-plus"},
                                    {"type": "array", "items": {"type": "array", "items": {"enum": [1, -1]}}}]},
                "mode": {"enum": list(nbody.MODES)},
                "delta_min": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "chart"}}},
         "then": {"required": ["variables", "metric"]}},
        {"if": {"properties": {"kind": {"const": "embedded"}}},
         "then": {"required": ["constraints"],
                  "anyOf": [{"required": ["variables"]}, {"required": ["ambient_dim"]}]}},
        {"if": {"properties": {"kind": {"const": "nbody"}}},
         "then": {"required": ["nbody"]}},
    ],
}


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION, kind: str = "validation", **extra):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.extra = extra


class ModelError(CLIError):
    def __init__(self, message: str, pointer: str = "", **extra):
        super().__init__(message, EXIT_VALIDATION, "model", pointer=pointer, **extra)
        self.pointer = pointer


@dataclass
class ModelFile:
    kind: str
    name: str
    data: dict
    metric: geometry.ChartMetric | None = None
    system: symplectic.HamiltonianSystem | None = None
    variety: geometry.EmbeddedVariety | None = None
    compact: bool = False
    nbody: nbody.NBodyConfig | None = None
    source: str = ""
    extra: dict = field(default_factory=dict)


def bundled_models() -> list:
    return sorted(p.name[:-5] for p in resources.files("geoflow.models").iterdir() if p.name.endswith(".json"))


def resolve_model_path(spec: str) -> Path:
    """A file path, or the name of a bundled model (with or without .json)."""
    p = Path(spec)
    if p.exists():
        return p
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    candidate = resources.files("geoflow.models") / f"{name}.json"
    if candidate.is_file():
        return Path(str(candidate))
    raise ModelError(f"model file not found: {spec}", "")


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def _parse(text, variables, pointer, poly=False):
    try:
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = str(Fraction(str(text)))
        return parse_polynomial(text, variables) if poly else parse_rational(text, variables)
    except ExpressionError as exc:
        raise ModelError(str(exc), pointer, offset=exc.offset) from None


def build_model(data: dict, source: str = "<memory>") -> ModelFile:
    """Validate a model dictionary and construct its geometric objects."""
    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ModelError(f"schema violation: {err.message}", _pointer(err.absolute_path))
    kind = data["kind"]
    name = data.get("name", Path(source).stem)
    out = ModelFile(kind, name, data, source=source)
    try:
        if kind == "chart":
            V = data["variables"]
            n = len(V)
            g = data["metric"]
            if len(g) != n or any(len(row) != n for row in g):
                raise ModelError(f"metric must be {n}x{n} for {n} variables", "/metric")
            entries = [[_parse(e, V, f"/metric/{i}/{j}") for j, e in enumerate(row)] for i, row in enumerate(g)]
            guard = _parse(data["guard"], V, "/guard", poly=True) if "guard" in data else None
            periods = {}
            for v, p in (data.get("periods") or {}).items():
                if v not in V:
                    raise ModelError(f"period given for unknown variable {v!r}", f"/periods/{v}")
                periods[v] = None if p is None else Fraction(str(p))
            try:
                out.metric = geometry.ChartMetric(V, entries, guard=guard, periods=periods or None, name=name)
            except geometry.GeometryError as exc:
                raise ModelError(str(exc), "/metric") from None
            ham = data.get("hamiltonian") or {}
            pot = ham.get("potential")
            V_pot = _parse(pot, V, "/hamiltonian/potential") if pot else None
            out.system = symplectic.geodesic_hamiltonian(out.metric, V_pot, ham.get("convention", "mechanics"))
            out.compact = bool(out.metric.has_periods and all(p is not None for p in out.metric.periods.values()))
        elif kind == "embedded":
            V = data.get("variables")
            if V is None:
                V = [f"x{i + 1}" for i in range(data["ambient_dim"])]
            elif data.get("ambient_dim", len(V)) != len(V):
                raise ModelError("ambient_dim disagrees with the number of variables", "/ambient_dim")
            cons = [_parse(c, V, f"/constraints/{i}", poly=True) for i, c in enumerate(data["constraints"])]
            form = data.get("ambient_form")
            if form == "euclidean":
                form = None
            if form is not None:
                if len(form) != len(V) or any(len(r) != len(V) for r in form):
                    raise ModelError("ambient_form must be square of the ambient dimension", "/ambient_form")
                form = [[Fraction(str(e)) for e in row] for row in form]
            try:
                out.variety = geometry.EmbeddedVariety(cons, variables=V, ambient_form=form, name=name)
            except geometry.GeometryError as exc:
                raise ModelError(str(exc), "/constraints") from None
            out.compact = bool(data.get("compact", False))
        else:
            try:
                out.nbody = nbody.NBodyConfig.from_dict(data["nbody"])
            except ValueError as exc:
                raise ModelError(str(exc), "/nbody") from None
    except ModelError:
        raise
    except (ValueError, ZeroDivisionError) as exc:
        raise ModelError(str(exc), "") from None
    return out


def load_model(path) -> ModelFile:
    p = resolve_model_path(str(path))
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", "") from None
    return build_model(data, str(p))


# output ---------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, Fraction):
        return json.dumps(str(x))
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in sorted(x.items(), key=lambda kv: str(kv[0]))) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in (x.tolist() if isinstance(x, np.ndarray) else x)) + "]"
    return json.dumps(str(x))


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _fmt(obj) + "\n"


def _emit(report: dict, args) -> None:
    text = dumps(report)
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
    sys.stdout.write(text)


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CLIError(f"--init expects comma-separated floats, got {text!r}") from None


def _integrator(args, default_h=1e-3, default_T=1.0) -> integrate.IntegratorConfig:
    try:
        return integrate.IntegratorConfig(method=args.method, h=args.step or default_h, T=args.t or default_T)
    except ValueError as exc:
        raise CLIError(str(exc)) from None


# subcommands ---------------------------------------------------------------------

def cmd_verify(args) -> int:
    model = load_model(args.model)
    report = {"model": model.name, "kind": model.kind}
    ok = True
    if model.kind == "chart":
        m, H = model.metric, model.system
        conn = geometry.verify_connection_identities(m)
        curv = geometry.verify_curvature_symmetries(m)
        checks = {**conn, **curv, "hamiltonian_conserved": H.conserves()}
        if H.potential is None:
            checks["fiber_homogeneous"] = symplectic.is_fiber_homogeneous(H, 2)
            for b in (2, 3):
                rep = symplectic.fiber_rescaling(H, b)[1]
                checks[f"energy_scaling_b{b}"] = rep["energy_scaling"]
                checks[f"field_conjugacy_b{b}"] = rep["field_conjugacy"]
            checks["legendre_consistency"] = symplectic.legendre_consistency(m)
        again = build_model(symplectic.system_to_model(H), "<roundtrip>")
        checks["model_roundtrip"] = all(a.equals(b) for ra, rb in zip(m.g, again.metric.g) for a, b in zip(ra, rb))
        report["checks"] = checks
        ok = all(checks.values())
    elif model.kind == "embedded":
        V = model.variety
        rng = np.random.default_rng(args.seed)
        regular = 0
        samples = _variety_samples(V, args.points or 10, rng)
        for x in samples:
            P = V.tangent_projector(x)
            if np.allclose(P @ P, P, atol=1e-10) and np.linalg.matrix_rank(P, tol=1e-8) == V.dimension:
                regular += 1
        checks = {"dimension": V.dimension, "regular_samples": regular, "samples": len(samples)}
        report["checks"] = checks
        ok = regular == len(samples)
    else:
        raise CLIError("verify applies to chart and embedded models")
    report["passed"] = ok
    _emit(report, args)
    return EXIT_OK if ok else EXIT_NEGATIVE


def _variety_samples(V: geometry.EmbeddedVariety, count: int, rng) -> list:
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 100 * count:
            raise CLIError("could not sample regular points on the variety", EXIT_NUMERIC, "numeric")
        try:
            x = V.project(rng.normal(size=V.m))
            V.check_regular(x)
        except (geometry.GeometryError, np.linalg.LinAlgError):
            continue
        if np.all(np.isfinite(x)):
            out.append(x)
    return out


def _curvature_report(model: ModelFile, args, rng) -> approx.CurvatureCertificate:
    points = args.points or 20
    planes = args.planes or 3
    margin = args.margin if args.margin is not None else 0.0
    if model.kind == "chart":
        pts = approx.sample_rational_points(model.metric, points, rng)
        return approx.certify_negative_curvature(model.metric, pts, planes, margin, rng)
    if model.kind == "embedded":
        pts = _variety_samples(model.variety, points, rng)
        return approx.certify_negative_curvature(model.variety, pts, planes, margin, rng)
    raise CLIError("curvature applies to chart and embedded models")


def cmd_curvature(args) -> int:
    model = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    cert = _curvature_report(model, args, rng)
    report = {"model": model.name, **cert.to_dict()}
    exact = [v for v in cert.values if isinstance(v, Fraction)]
    if exact and len(exact) == len(cert.values):
        report["exact_min_K"] = str(min(exact))
        report["exact_max_K"] = str(max(exact))
    if args.symbolic and model.kind == "chart" and model.metric.n == 2:
        m = model.metric
        L = geometry.lowered_curvature(m, m.curvature)
        det = m.g[0][0] * m.g[1][1] - m.g[0][1] * m.g[1][0]
        K = L[0][1][1][0] / det
        report["symbolic_K"] = K.to_text()
        report["symbolic_K_roundtrip"] = parse_rational(K.to_text(), m.variables).equals(K)
    _emit(report, args)
    if args.margin is not None and not cert.certified:
        return EXIT_NEGATIVE
    return EXIT_OK


def _initial_state(model: ModelFile, args, rng):
    init = _floats(args.init)
    if model.kind == "chart":
        sys_ = model.system
        if init is None:
            return dynamics.random_unit_seeds(sys_, 1, rng)[0]
        if len(init) != sys_.dim:
            raise CLIError(f"--init needs {sys_.dim} values (positions then momenta)")
        return np.array(init)
    V = model.variety
    if init is None:
        x = _variety_samples(V, 1, rng)[0]
        v = V.tangent_projector(x) @ rng.normal(size=V.m)
        return np.concatenate([x, v / math.sqrt(V.inner(v, v))])
    if len(init) != 2 * V.m:
        raise CLIError(f"--init needs {2 * V.m} values (point then velocity)")
    return np.array(init)


def cmd_geodesic(args) -> int:
    model = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    z0 = _initial_state(model, args, rng)
    report = {"model": model.name, "initial": z0.tolist()}
    failure = None
    if model.kind == "chart":
        if args.method == "constrained-projection":
            raise CLIError("constrained-projection applies to embedded models")
        cfg = _integrator(args)
        try:
            traj = integrate.flow_chart(model.system, z0, cfg)
        except integrate.IntegrationError as exc:
            traj, failure = exc.partial, str(exc)
    elif model.kind == "embedded":
        args.method = "constrained-projection"
        cfg = _integrator(args)
        m = model.variety.m
        try:
            traj = integrate.flow_embedded(model.variety, z0[:m], z0[m:], cfg)
        except integrate.IntegrationError as exc:
            traj, failure = exc.partial, str(exc)
    else:
        raise CLIError("geodesic applies to chart and embedded models; use nbody for n-body files")
    report.update(_trajectory_summary(traj))
    if args.lyapunov and model.kind == "chart" and failure is None:
        est = dynamics.lyapunov_spectrum(model.system, z0, cfg, cfg.T)
        report["lyapunov"] = est.to_dict()
    if args.out and traj is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        traj.to_csv(Path(args.out) / "trajectory.csv")
    if failure:
        report["failure"] = failure
    _emit(report, args)
    if failure:
        # the partial report goes to stdout, the machine-readable error to stderr
        sys.stderr.write(dumps({"error": "numeric", "message": failure}))
        return EXIT_NUMERIC
    return EXIT_OK


def _trajectory_summary(traj) -> dict:
    if traj is None:
        return {}
    out = {
        "reason": traj.reason,
        "t_final": float(traj.times[-1]),
        "final": traj.final.tolist(),
        "samples": len(traj.times),
        "energy_drift": traj.energy_drift(),
        "variables": list(traj.variables),
    }
    if traj.constraint is not None or "constraint_residual" in traj.observables:
        out["constraint_drift"] = traj.constraint_drift()
    return out


def cmd_dynamics(args) -> int:
    model = load_model(args.model)
    if model.kind == "nbody":
        raise CLIError("dynamics applies to chart and embedded models")
    do_all = args.mixing or not (args.recurrence or args.spectrum or args.lyapunov)
    rec, spec, lyap = (args.recurrence or do_all), (args.spectrum or do_all), (args.lyapunov or do_all)
    rng = np.random.default_rng(args.seed)
    cfg = integrate.IntegratorConfig(method="implicit-midpoint" if model.kind == "chart" else "constrained-projection",
                                     h=args.step or 1e-2, T=1.0)
    target = model.system if model.kind == "chart" else model.variety
    spectrum_seeds = None
    if spec and model.compact:
        if model.kind == "chart" and model.metric.has_periods:
            spectrum_seeds = dynamics.lattice_direction_seeds(model.system, 6)
        elif model.kind == "chart":
            spectrum_seeds = dynamics.random_unit_seeds(model.system, 3, rng)
        else:
            spectrum_seeds = [_initial_state(model, argparse.Namespace(init=None), rng) for _ in range(2)]
    lyap_point = _floats(args.init)
    report = dynamics.mixing_report(
        target, cfg, seed=args.seed, spectrum_seeds=spectrum_seeds, compact=model.compact,
        lyapunov_point=lyap_point, lyapunov_horizon=args.t or 50.0,
        do_recurrence=rec, do_spectrum=spec, do_lyapunov=lyap,
        do_correlation=args.mixing or do_all)
    report["model"] = model.name
    _emit(report, args)
    return EXIT_OK


def cmd_approx(args) -> int:
    action = args.action
    rng = np.random.default_rng(args.seed)
    report = {"action": action}
    code = EXIT_OK
    if action in ("twist", "fit"):
        n = args.points or 200
        grid = approx.SampleGrid.uniform(-1.0, 1.0, n)
        f = _parse_cli_expr(args.f or "x", ["x"])
        if action == "twist":
            phi = _parse_cli_expr(args.phi or "1", ["x"])
            eps = args.epsilon if args.epsilon is not None else 0.5
            if not eps > 0:
                raise CLIError("--epsilon must be positive")
            degree = args.degree or 8
            rep = approx.twist_polynomialize(approx.SmoothFunction.from_rational(f, ["x"]),
                                             approx.SmoothFunction.from_rational(phi, ["x"]), eps, degree, grid)
            report.update({
                "f": f.to_text(), "phi": phi.to_text(), "epsilon": eps, "degree": degree,
                "identity_residual": approx.twist_identity_residual(f, phi, eps, grid),
                "delta_c0": rep.delta_c0, "target_c0": rep.target_c0,
                "h": rep.h.to_text(), "k": rep.k.to_text(),
                "ridge": rep.fit_h.ridge or rep.fit_k.ridge,
            })
            report["roundtrip"] = (parse_polynomial(rep.h.to_text(), ["x"]) == rep.h
                                   and parse_polynomial(rep.k.to_text(), ["x"]) == rep.k)
        else:
            sf = approx.SmoothFunction.from_rational(f, ["x"])
            res = approx.fit_smooth(sf, grid, args.degree or 8, ["x"])
            report.update({"f": f.to_text(), "degree": args.degree or 8, "polynomial": res.to_text(),
                           "residual_l2": res.residual_l2, "c0_error": res.c0_error, "c1_error": res.c1_error,
                           "ridge": res.ridge, "condition": res.condition,
                           "roundtrip": parse_polynomial(res.to_text(), ["x"]) == res.polynomial})
    elif action == "embed":
        model = load_model(args.model or "circle")
        if model.kind != "embedded":
            raise CLIError("embed needs an embedded base model")
        V = model.variety
        rho = [r.strip() for r in (args.rho or "x^2,0").split(",")]
        try:
            ge = approx.graph_embedding(V, rho)
        except ExpressionError as exc:
            raise CLIError(str(exc), offset=exc.offset) from None
        except ValueError as exc:
            raise CLIError(str(exc)) from None
        if args.point:
            pts = [[Fraction(t.strip()) for t in args.point.split(",")]]
        else:
            pts = [_rational_point_on(V)]
        checks = [ge.verify_pullback(p) for p in pts]
        report.update({"base": model.name, "rho": [r.to_text() for r in ge.rho],
                       "graph_variables": list(ge.graph_variables), "dimension": ge.variety.dimension,
                       "checks": checks, "exact": all(c["residual_zero"] for c in checks)})
        if not report["exact"]:
            code = EXIT_NEGATIVE
    elif action == "certify":
        model = load_model(args.model or "halfplane")
        if args.margin is None:
            args.margin = 0.5
        cert = _curvature_report(model, args, rng)
        report.update({"model": model.name, **cert.to_dict()})
        if not cert.certified:
            code = EXIT_NEGATIVE
    else:
        raise CLIError(f"unknown approx action {action!r}")
    _emit(report, args)
    return code


def _parse_cli_expr(text, variables):
    try:
        return parse_rational(text, variables)
    except ExpressionError as exc:
        raise CLIError(str(exc), offset=exc.offset) from None


def _rational_point_on(V: geometry.EmbeddedVariety):
    """A rational point on the unit circle/sphere-like base, or the origin if it lies on V."""
    candidates = [[Fraction(0)] * V.m]
    if V.m >= 2:
        candidates.append([Fraction(3, 5), Fraction(4, 5)] + [Fraction(0)] * (V.m - 2))
        candidates.append([Fraction(0)] * (V.m - 1) + [Fraction(1)])
    for c in candidates:
        if all(f.evaluate(c) == 0 for f in V.constraints):
            return c
    raise CLIError("no rational base point known for this model; pass --point")


def cmd_nbody(args) -> int:
    model = load_model(args.model)
    if model.kind != "nbody":
        raise CLIError("nbody needs a model with an nbody block")
    cfg = model.nbody
    icfg = _integrator(args, 1e-3, 10.0)
    traj = nbody.simulate_nbody(cfg, icfg)
    report = {"model": model.name, "config": cfg.to_dict(), **_trajectory_summary(traj)}
    if traj.metadata.get("failure"):
        report["failure"] = traj.metadata["failure"]
    if "Px" in traj.observables:
        dp, dl = nbody.momentum_drift(traj)
        report["momentum_drift"] = dp
        report["angular_momentum_drift"] = dl
    report["cover"] = nbody.cover_consistency(traj)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        traj.to_csv(Path(args.out) / "trajectory.csv")
    _emit(report, args)
    if report.get("failure"):
        sys.stderr.write(dumps({"error": "numeric", "message": report["failure"]}))
        return EXIT_NUMERIC
    return EXIT_OK


# argument parsing -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--points", type=int)
    common.add_argument("--planes", type=int)
    common.add_argument("--margin", type=float)
    common.add_argument("--init")
    common.add_argument("--t", type=float)
    common.add_argument("--step", type=float)
    common.add_argument("--method", default="implicit-midpoint", choices=integrate.METHODS)
    common.add_argument("--lyapunov", action="store_true")
    common.add_argument("--recurrence", action="store_true")
    common.add_argument("--spectrum", action="store_true")
    common.add_argument("--mixing", action="store_true")
    common.add_argument("--degree", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1,
                        help="worker cap; computations here run in one process")
    common.add_argument("--out")
    common.add_argument("--symbolic", action="store_true")

    parser = _Parser(prog="geoflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in (("verify", cmd_verify), ("curvature", cmd_curvature), ("geodesic", cmd_geodesic),
                     ("dynamics", cmd_dynamics), ("nbody", cmd_nbody)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("model", help="model file or bundled model name")
        p.set_defaults(func=fn)
    p = sub.add_parser("approx", parents=[common])
    p.add_argument("action", choices=("twist", "fit", "embed", "certify"))
    p.add_argument("model", nargs="?")
    p.add_argument("--f")
    p.add_argument("--phi")
    p.add_argument("--rho", help="comma-separated polynomials h1,k1,...")
    p.add_argument("--point", help="comma-separated rational base point, e.g. 3/5,4/5")
    p.set_defaults(func=cmd_approx)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise CLIError("--threads must be at least 1")
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
        return args.func(args)
    except CLIError as exc:
        err, code = {"error": exc.kind, "message": str(exc), **exc.extra}, exc.code
    except integrate.IntegrationError as exc:
        err, code = {"error": "numeric", "message": str(exc)}, EXIT_NUMERIC
    except geometry.GeometryError as exc:
        err, code = {"error": "geometry", "message": str(exc)}, EXIT_VALIDATION
    sys.stderr.write(dumps(err))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
