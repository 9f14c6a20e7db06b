"""Identity suite and deterministic report serialization.

Every check evaluates one identity at sampled points and reports the
worst residual.  Work is split into independent tasks (one per metric and
point, plus one geodesic task per metric) so that it can be fanned out to
processes; results are combined in task order, which makes the report
independent of the degree of parallelism.
"""

from __future__ import annotations

import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import __version__
from .connections import (
    PRESETS,
    ConnectionParams,
    cartan_iterate,
    h_cov,
    horizontal_coefficients,
    natural_coefficients,
    preset_coefficients,
    v_cov,
    vertical_jet,
)
from .curvature import (
    SIGN_CONVENTIONS,
    CurvatureJets,
    bianchi_from_jets,
    reduced_hv_closed_form,
    symmetry_from_jets,
)
from .diffengine import TangentPoint
from .errors import ChartExitError
from .geodesics import integrate_geodesic, profile_cartan, transported_cartan_derivative
from .metrics import LocalGeometry, MetricInstance, metric_from_json

JET_ORDER = 7


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    tol: float


CHECKS = [
    Check("spray_connection", "N equals the y-gradient of the geodesic spray", 1e-9),
    Check("horizontal_F", "F is constant along horizontal directions", 1e-9),
    Check("preset_dual_route", "general assembly equals closed-form presets", 1e-10),
    Check("torsion_relation", "antisymmetric part of natural coefficients is the N-C torsion", 1e-8),
    Check("metric_h_defect", "g_ij|k = 2((1-k0)A - k1 A' - k2 A'' - k3 A''')", 1e-7),
    Check("metric_v_defect", "g_ij.k = 2(1-r)A", 1e-8),
    Check("cartan_ell_h", "ell-contracted A has vanishing h-derivative", 1e-8),
    Check("cartan_ell_v", "ell-contracted A has v-derivative -A", 1e-8),
    Check("hh_cyclic", "cyclic hh-curvature identity for Cartan-type connections", 1e-6),
    Check("hv_exchange", "hv-curvature exchange identity for Cartan-type connections", 1e-6),
    Check("vv_exchange", "vv-curvature exchange identity for Cartan-type connections", 1e-6),
    Check("hh_symmetrized", "R_ijkl + R_jikl from h-derivatives of S~", 1e-6),
    Check("hv_symmetrized", "P_ijkl + P_jikl from v-derivatives of S~", 1e-6),
    Check("vv_symmetrized", "Q_ijkl + Q_jikl = 0", 1e-6),
    Check("reduced_hv_cartan_type", "reduced hv-curvature closed form, Cartan-type", 1e-6),
    Check("reduced_hv_berwald_type", "reduced hv-curvature closed form, Berwald-type", 1e-6),
    Check("kappa1_cancellation", "reduced hv-curvature vanishes at kappa = (1, 1)", 1e-7),
    Check("berwald_minus_shen", "Berwald minus Shen coefficients equal A + A'", 1e-8),
    Check("landsberg_transport", "Landsberg tensor from parallel transport", 1e-6),
    Check("profile_derivative", "d/dt A'(t) = A''(t) along geodesics", 1e-5),
]
CHECK_INDEX = {c.name: c for c in CHECKS}


def _maxabs(a) -> float:
    a = a.value if hasattr(a, "value") and not isinstance(a, np.ndarray) else np.asarray(a)
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


# ---------------------------------------------------------------------------
# parameter draws


def parameter_draws(seed: int, draws: int) -> dict:
    """Deterministic connection parameter sets for each family of checks."""
    rng = np.random.default_rng([seed, 7])

    def vec(k):
        return [float(v) for v in np.round(rng.uniform(-1.0, 1.0, k), 6)]

    general = [ConnectionParams(tuple(vec(4)), float(np.round(rng.uniform(-1, 1), 6))) for _ in range(draws)]
    cartan_type = [ConnectionParams(tuple([1.0] + vec(3)), 1.0) for _ in range(draws)]
    berwald_type = [ConnectionParams(tuple([1.0] + vec(3)), 0.0) for _ in range(draws)]
    presets = [ConnectionParams.preset(name) for name in PRESETS]
    return {
        "presets": presets,
        "general": presets + general,
        "cartan_type": [ConnectionParams.preset("cartan"), ConnectionParams.preset("hashiguchi")] + cartan_type,
        "berwald_type": [ConnectionParams.preset("berwald"), ConnectionParams.preset("chern")] + berwald_type,
        "kappa1": [ConnectionParams.preset("berwald"), ConnectionParams.preset("hashiguchi")],
    }


# ---------------------------------------------------------------------------
# per-point residuals


def point_residuals(m: MetricInstance, p: TangentPoint, draws: dict) -> dict:
    geo = LocalGeometry(m, p, JET_ORDER)
    out = {}

    def put(name, value):
        out[name] = max(out.get(name, 0.0), float(value))

    put("spray_connection", _maxabs(geo.N.value - geo.dy(geo.spray).value))
    put("horizontal_F", _maxabs(geo.delta(geo.F).value))

    for c in draws["presets"]:
        G, V = preset_coefficients(geo, c.preset_name)
        put("preset_dual_route", _maxabs(horizontal_coefficients(geo, c).value - G.value))
        put("preset_dual_route", _maxabs(vertical_jet(geo, c).value - V.value))

    A = geo.A
    Aq = [cartan_iterate(geo, q).value for q in range(4)]
    N = geo.N.value
    Cm = geo.C.value
    ell = geo.ell.value
    for c in draws["general"]:
        k = c.kappas
        expected_h = 2.0 * ((1.0 - k[0]) * Aq[0] - k[1] * Aq[1] - k[2] * Aq[2] - k[3] * Aq[3])
        put("metric_h_defect", _maxabs(h_cov(geo, c, geo.g).value - expected_h))
        put("metric_v_defect", _maxabs(v_cov(geo, c, geo.g).value - 2.0 * (1.0 - c.r) * Aq[0]))
        Ah = h_cov(geo, c, A).value
        Av = v_cov(geo, c, A).value
        put("cartan_ell_h", _maxabs(np.einsum("i,ijkl->jkl", ell, Ah)))
        put("cartan_ell_v", _maxabs(np.einsum("i,ijkl->jkl", ell, Av) + Aq[0]))
        Gn = natural_coefficients(geo, c).value
        tors = c.r * (np.einsum("si,ksj->kij", N, Cm) - np.einsum("sj,ksi->kij", N, Cm))
        put("torsion_relation", _maxabs(Gn - Gn.transpose(0, 2, 1) - tors))

    for c in draws["cartan_type"]:
        cj = CurvatureJets(geo, c)
        for name, val in bianchi_from_jets(cj).items():
            put(name, val)
        for name, val in symmetry_from_jets(cj).items():
            put(name, val)
        put("reduced_hv_cartan_type", _maxabs(cj.reduced(cj.P).value - reduced_hv_closed_form(geo, c)))
    for c in draws["berwald_type"]:
        cj = CurvatureJets(geo, c)
        put("reduced_hv_berwald_type", _maxabs(cj.reduced(cj.P).value - reduced_hv_closed_form(geo, c)))
    for c in draws["kappa1"]:
        cj = CurvatureJets(geo, c)
        put("kappa1_cancellation", _maxabs(cj.reduced(cj.P).value))

    gb, _ = preset_coefficients(geo, "berwald")
    gs, _ = preset_coefficients(geo, "shen")
    put("berwald_minus_shen", _maxabs(gb.value - gs.value - geo.raise_first(A).value - geo.raise_first(cartan_iterate(geo, 1)).value))
    return out


GEODESIC_SPAN = 0.5
GEODESIC_STEPS = 40
TRANSPORT_STEP = 0.02


def geodesic_residuals(m: MetricInstance, p: TangentPoint) -> dict:
    """Transport-route Landsberg tensor and the profile ODE at one start point."""
    out = {}
    try:
        lands = transported_cartan_derivative(m, p, 1, h=TRANSPORT_STEP)
        out["landsberg_transport"] = _maxabs(lands - cartan_iterate(LocalGeometry(m, p, 4), 1).value)
    except ChartExitError:
        out["landsberg_transport"] = float("nan")
    trace = integrate_geodesic(m, p.x, p.y, (0.0, GEODESIC_SPAN), GEODESIC_STEPS)
    if len(trace) < 5:
        out["profile_derivative"] = float("nan")
        return out
    n = m.dim
    X = np.zeros(n)
    X[0] = 1.0
    Y = np.zeros(n)
    Y[-1] = 1.0
    prof = profile_cartan(trace, X, Y, Y)
    out["profile_derivative"] = prof.transport_residual()
    return out


# ---------------------------------------------------------------------------
# task fan-out


def _run_task(task):
    kind, metric_doc, point_doc, draws_spec = task
    m = metric_from_json(metric_doc)
    p = TangentPoint(point_doc["x"], point_doc["y"])
    if kind == "point":
        return point_residuals(m, p, parameter_draws(*draws_spec))
    return geodesic_residuals(m, p)


def ordered_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """``map`` that optionally uses processes; result order is input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _pair_map(workers):
    """Two-argument ordered map suitable for the classify module."""

    def mapper(fn, ms, ps):
        return ordered_map(_Apply(fn), list(zip(ms, ps)), workers)

    return mapper


class _Apply:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, args):
        return self.fn(*args)


@dataclass
class VerifyLine:
    name: str
    anchor: str
    metric: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.residual < self.tol) if not math.isnan(self.residual) else False

    def to_json(self):
        return {
            "name": self.name,
            "anchor": self.anchor,
            "metric": self.metric,
            "max_residual": self.residual,
            "tol": self.tol,
            "status": "PASS" if self.passed else "FAIL",
        }

    def table_row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<24} {self.metric:<18} {self.residual:>11.3e} {self.tol:>9.1e}  {status}  {self.anchor}"


def run_verify(
    metrics: Sequence[MetricInstance],
    points_per_metric: dict,
    seed: int,
    draws: int = 3,
    workers: int = 1,
    tol_overrides: Optional[dict] = None,
    geodesic_points: Optional[dict] = None,
) -> List[VerifyLine]:
    """Evaluate every check on each metric.

    ``geodesic_points[kind]`` is the start of that metric's geodesic task
    (default: its first sample point).
    """
    tol_overrides = tol_overrides or {}
    geodesic_points = geodesic_points or {}
    tasks = []
    owners = []
    for m in metrics:
        doc = m.to_json()
        pts = points_per_metric[m.kind]
        for p in pts:
            tasks.append(("point", doc, p.to_json(), (seed, draws)))
            owners.append(m.kind)
        start = geodesic_points.get(m.kind, pts[0])
        tasks.append(("geodesic", doc, start.to_json(), (seed, draws)))
        owners.append(m.kind)
    results = ordered_map(_run_task, tasks, workers)
    per_metric = {}
    for kind, res in zip(owners, results):
        agg = per_metric.setdefault(kind, {})
        for name, val in res.items():
            prev = agg.get(name, 0.0)
            agg[name] = val if (math.isnan(val) or math.isnan(prev)) else max(prev, val)
    lines = []
    for m in metrics:
        agg = per_metric[m.kind]
        for chk in CHECKS:
            if chk.name in agg:
                lines.append(VerifyLine(chk.name, chk.anchor, m.kind, agg[chk.name], tol_overrides.get(chk.name, chk.tol)))
    return lines


# ---------------------------------------------------------------------------
# serialization


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and floats written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "to_json"):
        return dumps(obj.to_json(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def meta(command: str, config: dict) -> dict:
    return {
        "command": command,
        "config": config,
        "versions": {
            "finslerconn": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "sign_conventions": SIGN_CONVENTIONS,
    }


def make_report(command: str, config: dict, results=None, residuals=None, verdicts=None) -> dict:
    return {
        "meta": meta(command, config),
        "results": results or [],
        "residuals": residuals or [],
        "verdicts": verdicts or {},
    }
