"""Command-line front end.

    finslerconn <command> [--config PATH] [--output json|table] [--seed N]
                [--samples N] [--tol X] [--workers N] [--out-dir DIR]

Commands: tensors, connection, curvature, classify, geodesic, verify.
Exit status is 0 when every requested check passes, 1 when a check fails
and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .classify import (
    DEFAULT_TOL,
    MIN_SAMPLES,
    classify_from_rows,
    coincidence_tests,
    point_witnesses,
)
from .connections import ConnectionParams, christoffel
from .curvature import curvature_jets, flag_curvature
from .diffengine import TangentPoint
from .errors import ConfigError, DegenerateFlagError, FinslerError
from .geodesics import fit_ode_parameter, fit_solution_form, integrate_geodesic, profile_cartan, trace_csv
from .metrics import LocalGeometry, MetricInstance, metric_from_json, zoo
from .report import CHECK_INDEX, _pair_map, dumps, make_report, run_verify

COMMANDS = ("tensors", "connection", "curvature", "classify", "geodesic", "verify")
TOP_LEVEL_KEYS = {"metric", "connection", "sampler", "points", "tolerances", "options"}
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

ANTISYMMETRY_TOL = 1e-9
FLAG_TOL = 1e-6
SPEED_TOL = 1e-7
PROFILE_TOL = 1e-5
EXTRA_TOLERANCES = {"default", "classify", "R_antisymmetry", "Q_antisymmetry", "flag_curvature", "unit_speed"}


# ---------------------------------------------------------------------------
# configuration


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "--config") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "config") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", "config")
    unknown = sorted(set(doc) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", "config")
    return doc


def _number(value, field, positive=False, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if integer:
        ok = ok and isinstance(value, int)
    if not ok or (positive and value <= 0):
        kind = "positive " if positive else ""
        raise ConfigError(f"must be a {kind}{'integer' if integer else 'number'}", field)
    return value


def apply_overrides(cfg: dict, args, command: str = "verify") -> dict:
    cfg = json.loads(json.dumps(cfg))  # deep copy
    sampler = cfg.setdefault("sampler", {})
    if not isinstance(sampler, dict):
        raise ConfigError("must be an object", "sampler")
    if args.seed is not None:
        sampler["seed"] = args.seed
    if args.samples is not None:
        sampler["count"] = args.samples
    sampler.setdefault("seed", 0)
    sampler.setdefault("count", MIN_SAMPLES if command == "classify" else 5)
    sampler.setdefault("domain", 1.0)
    _number(sampler["seed"], "sampler.seed", integer=True)
    _number(sampler["count"], "sampler.count", positive=True, integer=True)
    dom = _number(sampler["domain"], "sampler.domain", positive=True)
    if dom > 1:
        raise ConfigError("must lie in (0, 1]", "sampler.domain")
    tols = cfg.setdefault("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("must be an object", "tolerances")
    if args.tol is not None:
        tols["default"] = args.tol
    for key, val in tols.items():
        if key not in EXTRA_TOLERANCES and key not in CHECK_INDEX:
            raise ConfigError(f"unknown tolerance name {key!r}", f"tolerances.{key}")
        _number(val, f"tolerances.{key}", positive=True)
    opts = cfg.setdefault("options", {})
    if not isinstance(opts, dict):
        raise ConfigError("must be an object", "options")
    return cfg


def config_metrics(cfg: dict) -> List[MetricInstance]:
    doc = cfg.get("metric")
    if doc is None:
        return list(zoo().values())
    docs = doc if isinstance(doc, list) else [doc]
    out = []
    for i, d in enumerate(docs):
        try:
            out.append(metric_from_json(d))
        except ConfigError as exc:
            where = f"metric[{i}]" if isinstance(doc, list) else "metric"
            field = exc.field.replace("metric", where, 1) if exc.field else where
            raise ConfigError(str(exc).split(": ", 1)[-1], field) from None
    return out


def config_connection(cfg: dict, default: str = "cartan") -> ConnectionParams:
    return ConnectionParams.from_json(cfg.get("connection", {"preset": default}))


def config_points(cfg: dict, m: MetricInstance, label: str) -> List[TangentPoint]:
    explicit = cfg.get("points")
    if explicit is not None:
        if not isinstance(explicit, list) or not explicit:
            raise ConfigError("must be a non-empty list", "points")
        pts = []
        for i, doc in enumerate(explicit):
            if not isinstance(doc, dict) or "x" not in doc or "y" not in doc:
                raise ConfigError("needs 'x' and 'y'", f"points[{i}]")
            try:
                p = TangentPoint(doc["x"], doc["y"])
            except (ValueError, TypeError, FinslerError) as exc:
                raise ConfigError(str(exc), f"points[{i}]") from None
            if not m.admissible(p):
                raise ConfigError(f"not admissible for {m.kind}", f"points[{i}]")
            pts.append(p)
        return pts
    s = cfg["sampler"]
    rng = np.random.default_rng([s["seed"], _label_key(label)])
    return [m.sample_point(rng, s["domain"]) for _ in range(s["count"])]


def _label_key(label: str) -> int:
    # stable across processes (str hash is salted)
    return sum((i + 1) * ord(ch) for i, ch in enumerate(label))


def _tol(cfg, name, default):
    t = cfg["tolerances"]
    return t.get(name, t.get("default", default))


# ---------------------------------------------------------------------------
# commands


def cmd_tensors(cfg, args):
    results = []
    for m in config_metrics(cfg):
        for p in config_points(cfg, m, m.kind):
            geo = LocalGeometry(m, p, 3)
            results.append(
                {
                    "metric": m.kind,
                    "point": p.to_json(),
                    "F": geo.F.value,
                    "g": geo.g.value,
                    "g_inv": geo.ginv.value,
                    "A": geo.A.value,
                    "C": geo.C.value,
                    "ell": geo.ell.value,
                    "ell_low": geo.ell_low.value,
                    "cond_g": geo.condition_number(),
                }
            )
    return make_report("tensors", cfg, results=results), True


def cmd_connection(cfg, args):
    c = config_connection(cfg)
    results = []
    for m in config_metrics(cfg):
        for p in config_points(cfg, m, m.kind):
            cc = christoffel(m, p, c)
            results.append(
                {
                    "metric": m.kind,
                    "point": p.to_json(),
                    "params": c.to_json(),
                    "N": cc.N.values,
                    "Gamma": cc.Gamma.values,
                    "V": cc.V.values,
                    "Gamma_natural": cc.Gamma_natural.values,
                }
            )
    return make_report("connection", cfg, results=results), True


def _flag_edges(cfg, m, p, rng):
    flags = cfg["options"].get("flags", 3)
    if isinstance(flags, int) and not isinstance(flags, bool):
        edges = []
        while len(edges) < flags:
            v = rng.normal(size=m.dim)
            if abs(np.dot(v, p.y)) < 0.95 * np.linalg.norm(v) * np.linalg.norm(p.y):
                edges.append(v)
        return edges
    if isinstance(flags, list):
        return [np.asarray(v, dtype=float) for v in flags]
    raise ConfigError("must be an integer count or a list of vectors", "options.flags")


def cmd_curvature(cfg, args):
    c = config_connection(cfg)
    expected_K = cfg["options"].get("expected_flag_curvature")
    if expected_K is not None:
        _number(expected_K, "options.expected_flag_curvature")
    results, residuals = [], []
    ok = True
    for m in config_metrics(cfg):
        rng = np.random.default_rng([cfg["sampler"]["seed"], _label_key(m.kind), 1])
        worst = {"R_antisymmetry": 0.0, "Q_antisymmetry": 0.0}
        if expected_K is not None:
            worst["flag_curvature"] = 0.0
        for p in config_points(cfg, m, m.kind):
            cj = curvature_jets(m, p, c)
            R, P, Q = cj.R.value, cj.P.value, cj.Q.value
            worst["R_antisymmetry"] = max(worst["R_antisymmetry"], float(np.max(np.abs(R + R.transpose(0, 1, 3, 2)))))
            worst["Q_antisymmetry"] = max(worst["Q_antisymmetry"], float(np.max(np.abs(Q + Q.transpose(0, 1, 3, 2)))))
            Ks = []
            for V in _flag_edges(cfg, m, p, rng):
                try:
                    K = flag_curvature(m, p, V)
                except DegenerateFlagError as exc:
                    raise ConfigError(str(exc), "options.flags") from None
                Ks.append({"V": V, "K": K})
                if expected_K is not None:
                    worst["flag_curvature"] = max(worst["flag_curvature"], abs(K - expected_K))
            results.append(
                {
                    "metric": m.kind,
                    "point": p.to_json(),
                    "params": c.to_json(),
                    "R": R,
                    "P": P,
                    "Q": Q,
                    "reduced_hv": cj.reduced(cj.P).value,
                    "flag_curvature": Ks,
                }
            )
        for name, val in worst.items():
            tol = _tol(cfg, name, FLAG_TOL if name == "flag_curvature" else ANTISYMMETRY_TOL)
            passed = val < tol
            ok &= passed
            residuals.append({"name": name, "metric": m.kind, "max_residual": val, "tol": tol, "status": "PASS" if passed else "FAIL"})
    return make_report("curvature", cfg, results=results, residuals=residuals), ok


def cmd_classify(cfg, args):
    tol = _tol(cfg, "classify", DEFAULT_TOL)
    expected = cfg["options"].get("expected")
    results, verdicts = [], {}
    ok = True
    mapper = _pair_map(args.workers)
    for m in config_metrics(cfg):
        pts = config_points(cfg, m, m.kind)
        if len(pts) < MIN_SAMPLES:
            raise ConfigError(f"classification needs at least {MIN_SAMPLES} points, got {len(pts)}", "sampler.count")
        rows = mapper(point_witnesses, [m] * len(pts), pts)
        cls = classify_from_rows(m, rows, tol)
        co = coincidence_tests(m, sampler=lambda: pts, tol=tol, mapper=mapper)
        flags = cls.flags()
        ok &= cls.consistent and cls.chain_ok and co.cross_check_ok
        if expected is not None:
            want = expected.get(m.kind) if isinstance(expected, dict) else None
            if want is not None and want != flags:
                ok = False
        verdicts[m.kind] = flags
        results.append({"classification": cls.to_json(), "coincidences": co.to_json()})
    return make_report("classify", cfg, results=results, verdicts=verdicts), ok


def cmd_geodesic(cfg, args):
    opts = cfg["options"].get("geodesic", {})
    if not isinstance(opts, dict):
        raise ConfigError("must be an object", "options.geodesic")
    metrics = config_metrics(cfg)
    if len(metrics) != 1:
        raise ConfigError("geodesic needs exactly one metric", "metric")
    m = metrics[0]
    if "x0" in opts or "y0" in opts:
        try:
            p = TangentPoint(opts["x0"], opts["y0"])
        except (KeyError, ValueError, FinslerError) as exc:
            raise ConfigError(f"x0 and y0 must both be given: {exc}", "options.geodesic") from None
    else:
        p = config_points(cfg, m, m.kind)[0]
    t_span = opts.get("t_span", [0.0, 2.0])
    steps = _number(opts.get("steps", 100), "options.geodesic.steps", positive=True, integer=True)
    trace = integrate_geodesic(m, p.x, p.y, t_span, steps)
    n = m.dim
    X = np.asarray(opts.get("X", np.eye(n)[0]), dtype=float)
    Y = np.asarray(opts.get("Y", np.eye(n)[-1]), dtype=float)
    Z = np.asarray(opts.get("Z", np.eye(n)[-1]), dtype=float)
    prof = profile_cartan(trace, X, Y, Z)
    lam, lam_res = fit_ode_parameter(prof)
    fits = []
    for i, f in enumerate(opts.get("fits", [])):
        try:
            fits.append(fit_solution_form(prof.times, prof.A, f["form"], f["parameter"]).to_json())
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), f"options.geodesic.fits[{i}]") from None
    speed = trace.speed_defect()
    pres = prof.transport_residual()
    residuals = [
        {"name": "unit_speed", "max_residual": speed, "tol": _tol(cfg, "unit_speed", SPEED_TOL)},
        {"name": "profile_derivative", "max_residual": pres, "tol": _tol(cfg, "profile_derivative", PROFILE_TOL)},
    ]
    ok = True
    for r in residuals:
        r["status"] = "PASS" if r["max_residual"] < r["tol"] else "FAIL"
        ok &= r["status"] == "PASS"
    results = [
        {
            "metric": m.kind,
            "start": p.to_json(),
            "samples": len(trace),
            "exited_chart": trace.exited,
            "frame_defect": trace.frame_defect(),
            "ode_parameter": {"lambda": lam, "residual": lam_res},
            "fits": fits,
        }
    ]
    report = make_report("geodesic", cfg, results=results, residuals=residuals)
    return report, ok, trace_csv(trace, prof)


def cmd_verify(cfg, args):
    metrics = config_metrics(cfg)
    pts = {m.kind: config_points(cfg, m, m.kind) for m in metrics}
    s = cfg["sampler"]
    gp = {m.kind: m.sample_point(np.random.default_rng([s["seed"], _label_key(m.kind), 2]), 0.5) for m in metrics}
    tols = {k: v for k, v in cfg["tolerances"].items() if k in CHECK_INDEX}
    if "default" in cfg["tolerances"]:
        tols = {name: tols.get(name, cfg["tolerances"]["default"]) for name in CHECK_INDEX}
    draws = _number(cfg["options"].get("draws", 3), "options.draws", positive=True, integer=True)
    lines = run_verify(metrics, pts, s["seed"], draws=draws, workers=args.workers, tol_overrides=tols, geodesic_points=gp)
    ok = all(line.passed for line in lines)
    verdicts = {"all_passed": ok, "failed": sorted({f"{l.metric}:{l.name}" for l in lines if not l.passed})}
    return make_report("verify", cfg, residuals=[l.to_json() for l in lines], verdicts=verdicts), ok


# ---------------------------------------------------------------------------
# output


def render_table(report: dict) -> str:
    out = [f"# {report['meta']['command']}"]
    for r in report["residuals"]:
        metric = r.get("metric", "")
        anchor = r.get("anchor", "")
        out.append(f"{r['name']:<24} {metric:<18} {r['max_residual']:>11.3e} {r['tol']:>9.1e}  {r['status']}  {anchor}".rstrip())
    for k, v in sorted(report["verdicts"].items()):
        out.append(f"verdict {k}: {v}")
    if not report["residuals"] and not report["verdicts"]:
        out.append(f"{len(report['results'])} result records (use --output json for values)")
    return "\n".join(out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="finslerconn", description="Numerical Finsler connections, curvature and checks.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--output", choices=("json", "table"), default="json")
    ap.add_argument("--seed", type=int, help="override sampler.seed")
    ap.add_argument("--samples", type=int, help="override sampler.count")
    ap.add_argument("--tol", type=float, help="override the default tolerance")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for point sweeps")
    ap.add_argument("--out-dir", help="also write report.json (and trace.csv) here")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    csv_text = None
    try:
        cfg = apply_overrides(load_config(args.config), args, args.command)
        handler = {
            "tensors": cmd_tensors,
            "connection": cmd_connection,
            "curvature": cmd_curvature,
            "classify": cmd_classify,
            "geodesic": cmd_geodesic,
            "verify": cmd_verify,
        }[args.command]
        out = handler(cfg, args)
        if len(out) == 3:
            report, ok, csv_text = out
        else:
            report, ok = out
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FinslerError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = dumps(report) + "\n"
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(text, encoding="utf-8")
        if csv_text is not None:
            (d / "trace.csv").write_text(csv_text, encoding="utf-8")
    sys.stdout.write(text if args.output == "json" else render_table(report) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
