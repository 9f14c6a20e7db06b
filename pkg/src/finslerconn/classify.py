"""Class membership of a metric (Riemannian, Berwald, Landsberg) and connection coincidences.

Every class is decided by two independent witnesses: the vanishing of a
tensor (A, A', or the y-derivative of the Berwald coefficients) and the
vanishing of the hv-curvature of the connection that characterizes it.
Norms are reported raw and divided by the condition number of ``g``; the
verdicts use the scaled norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .connections import (
    ConnectionParams,
    berwald_spray_coefficients,
    cartan_iterate,
    preset_coefficients,
    required_order,
)
from .curvature import CurvatureJets
from .diffengine import TangentPoint
from .errors import DomainError
from .metrics import LocalGeometry, MetricInstance

DEFAULT_TOL = 1e-6
MIN_SAMPLES = 30

CLASSES = ("riemannian", "berwald", "landsberg")
WITNESSES = {
    "riemannian": ("A", "P_shen"),
    "landsberg": ("Adot", "P_cartan"),
    "berwald": ("dGamma_berwald_dy", "P_berwald"),
}


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def sample_points(m: MetricInstance, count: int, seed: int) -> List[TangentPoint]:
    rng = np.random.default_rng(seed)
    return [m.sample_point(rng) for _ in range(count)]


def point_witnesses(m: MetricInstance, p: TangentPoint) -> dict:
    """Raw witness norms and ``cond(g)`` at one point."""
    geo = LocalGeometry(m, p, 5)
    out = {
        "A": _maxabs(geo.A.value),
        "Adot": _maxabs(cartan_iterate(geo, 1).value),
        "dGamma_berwald_dy": _maxabs(geo.F.value * geo.dy(berwald_spray_coefficients(geo)).value),
        "cond": geo.condition_number(),
    }
    for name in ("shen", "cartan", "berwald"):
        cj = CurvatureJets(geo, ConnectionParams.preset(name))
        out[f"P_{name}"] = _maxabs(cj.P.value)
    return out


def _admissible(m: MetricInstance, points: Iterable[TangentPoint]) -> List[TangentPoint]:
    pts = [p for p in points if m.admissible(p)]
    if not pts:
        raise DomainError(f"sampler produced no admissible points for {m.kind}")
    return pts


def _aggregate(rows: Sequence[dict]) -> dict:
    """Max of raw and condition-scaled norms over rows in their given order."""
    agg = {}
    for key in rows[0]:
        if key == "cond":
            agg["cond_max"] = max(r["cond"] for r in rows)
            continue
        agg[key] = {
            "raw": max(r[key] for r in rows),
            "scaled": max(r[key] / r["cond"] for r in rows),
        }
    return agg


@dataclass
class ClassVerdict:
    name: str
    value: object  # True, False or "inconsistent"
    witnesses: dict

    def to_json(self):
        return {"value": self.value, "witnesses": self.witnesses}


@dataclass
class Classification:
    metric: str
    samples: int
    tol: float
    verdicts: dict
    chain_ok: bool
    norms: dict = field(default_factory=dict)

    def flags(self) -> dict:
        return {k: v.value for k, v in self.verdicts.items()}

    @property
    def consistent(self) -> bool:
        return all(v.value != "inconsistent" for v in self.verdicts.values())

    def to_json(self):
        return {
            "metric": self.metric,
            "samples": self.samples,
            "tol": self.tol,
            "verdicts": {k: v.to_json() for k, v in self.verdicts.items()},
            "inclusion_chain_ok": self.chain_ok,
            "cond_max": self.norms.get("cond_max"),
        }


def classify_from_rows(m: MetricInstance, rows: Sequence[dict], tol: float = DEFAULT_TOL) -> Classification:
    agg = _aggregate(rows)
    verdicts = {}
    for cls in CLASSES:
        tensor, curv = WITNESSES[cls]
        t_ok = agg[tensor]["scaled"] < tol
        c_ok = agg[curv]["scaled"] < tol
        value = t_ok if t_ok == c_ok else "inconsistent"
        verdicts[cls] = ClassVerdict(
            cls, value, {tensor: agg[tensor], curv: agg[curv]}
        )
    flags = {k: v.value for k, v in verdicts.items()}
    chain_ok = not (flags["riemannian"] is True and flags["berwald"] is not True) and not (
        flags["berwald"] is True and flags["landsberg"] is not True
    )
    return Classification(m.kind, len(rows), tol, verdicts, chain_ok, agg)


def classify_metric(
    m: MetricInstance,
    sampler: Optional[Callable[[], Iterable[TangentPoint]]] = None,
    tol: float = DEFAULT_TOL,
    samples: int = MIN_SAMPLES,
    seed: int = 0,
    mapper: Callable = map,
) -> Classification:
    """Decide the three classes from a point sample.

    ``sampler`` returns the points (default: ``samples`` seeded draws).
    ``mapper`` evaluates :func:`point_witnesses` over the points and must
    preserve order (``map`` or an executor's ``map``).
    """
    pts = list(sampler()) if sampler is not None else sample_points(m, samples, seed)
    pts = _admissible(m, pts)
    if len(pts) < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} admissible points, got {len(pts)}")
    rows = list(mapper(point_witnesses, [m] * len(pts), pts))
    return classify_from_rows(m, rows, tol)


# ---------------------------------------------------------------------------
# connection coincidences


def point_coincidences(m: MetricInstance, p: TangentPoint) -> dict:
    """Preset coefficient differences and their closed forms at one point."""
    geo = LocalGeometry(m, p, 4)
    gb, _ = preset_coefficients(geo, "berwald")
    gc, _ = preset_coefficients(geo, "chern")
    gs, _ = preset_coefficients(geo, "shen")
    Ad = geo.raise_first(cartan_iterate(geo, 1)).value
    Au = geo.raise_first(geo.A).value
    d_bc = gb.value - gc.value
    d_bs = gb.value - gs.value
    return {
        "berwald_minus_chern": _maxabs(d_bc),
        "berwald_minus_shen": _maxabs(d_bs),
        "berwald_minus_chern_vs_Adot": _maxabs(d_bc - Ad),
        "berwald_minus_shen_vs_A_plus_Adot": _maxabs(d_bs - Au - Ad),
        "cond": geo.condition_number(),
    }


@dataclass
class CoincidenceReport:
    metric: str
    norms: dict
    verdicts: dict
    cross_check_ok: bool

    def to_json(self):
        return {"metric": self.metric, "norms": self.norms, "verdicts": self.verdicts, "cross_check_ok": self.cross_check_ok}


CROSS_CHECK_TOL = 1e-8


def coincidence_tests(
    m: MetricInstance,
    sampler: Optional[Callable[[], Iterable[TangentPoint]]] = None,
    tol: float = DEFAULT_TOL,
    samples: int = MIN_SAMPLES,
    seed: int = 0,
    mapper: Callable = map,
) -> CoincidenceReport:
    pts = list(sampler()) if sampler is not None else sample_points(m, samples, seed)
    pts = _admissible(m, pts)
    rows = list(mapper(point_coincidences, [m] * len(pts), pts))
    agg = _aggregate(rows)
    verdicts = {
        "berwald_equals_chern": agg["berwald_minus_chern"]["scaled"] < tol,
        "berwald_equals_shen": agg["berwald_minus_shen"]["scaled"] < tol,
    }
    cross = max(agg["berwald_minus_chern_vs_Adot"]["raw"], agg["berwald_minus_shen_vs_A_plus_Adot"]["raw"])
    return CoincidenceReport(m.kind, agg, verdicts, cross < CROSS_CHECK_TOL)


# ---------------------------------------------------------------------------
# hv-curvature characterizations

# connection type -> (class whose members have P = 0, builder of random params)
TYPE_CLASS = {"shen": "riemannian", "cartan": "landsberg", "berwald": "berwald"}


def random_type_params(kind: str, rng: np.random.Generator, max_q: int = 2) -> ConnectionParams:
    ks = [float(v) for v in np.round(rng.uniform(-1.0, 1.0, max_q), 6)]
    if kind == "shen":
        return ConnectionParams(tuple([0.0] + ks), 0.0)
    if kind == "cartan":
        return ConnectionParams(tuple([1.0] + ks), 1.0)
    if kind == "berwald":
        return ConnectionParams(tuple([1.0] + ks), 0.0)
    raise ValueError(f"unknown connection type {kind!r}")


@dataclass
class Assertion:
    name: str
    metric: str
    params: str
    measured: float
    bound: float
    relation: str  # "<" or ">"

    @property
    def passed(self) -> bool:
        return self.measured < self.bound if self.relation == "<" else self.measured > self.bound

    def to_json(self):
        return {
            "name": self.name,
            "metric": self.metric,
            "params": self.params,
            "measured": self.measured,
            "relation": self.relation,
            "bound": self.bound,
            "passed": self.passed,
        }


def _max_P(m, pts, c: ConnectionParams, reduced=False) -> float:
    worst = 0.0
    for p in pts:
        geo = LocalGeometry(m, p, required_order(c, 1))
        cj = CurvatureJets(geo, c)
        val = cj.reduced(cj.P).value if reduced else cj.P.value
        worst = max(worst, _maxabs(val) / geo.condition_number())
    return worst


def theorem_suite(
    metrics: dict,
    classes: dict,
    tol: float = DEFAULT_TOL,
    samples: int = 5,
    seed: int = 0,
    draws: int = 2,
) -> List[Assertion]:
    """hv-curvature characterizations as measured assertions.

    ``classes[kind]`` holds the known class flags of ``metrics[kind]``.  For
    every connection type and ``draws`` random parameter sets, P must
    vanish on each metric of the matching class and exceed ``10 tol`` on
    every metric outside it.  With ``kappa = (1, 1)`` (r = 0 or 1) the
    reduced hv-curvature must vanish on every metric.
    """
    rng = np.random.default_rng(seed)
    pts = {k: sample_points(m, samples, seed + 1) for k, m in sorted(metrics.items())}
    ledger = []
    for kind in ("shen", "cartan", "berwald"):
        cls = TYPE_CLASS[kind]
        for _ in range(draws):
            c = random_type_params(kind, rng)
            for mk in sorted(metrics):
                val = _max_P(metrics[mk], pts[mk], c)
                inside = bool(classes[mk][cls])
                ledger.append(
                    Assertion(
                        f"{kind}-type P {'vanishes' if inside else 'nonzero'} ({cls})",
                        mk,
                        c.label,
                        val,
                        tol if inside else 10.0 * tol,
                        "<" if inside else ">",
                    )
                )
    # the kappa_1 = 1 cancellation needs the higher kappas to vanish
    for name in ("berwald", "hashiguchi"):
        c = ConnectionParams.preset(name)
        for mk in sorted(metrics):
            ledger.append(
                Assertion(
                    "kappa_1=1 reduced hv vanishes",
                    mk,
                    c.label,
                    _max_P(metrics[mk], pts[mk], c, reduced=True),
                    tol,
                    "<",
                )
            )
    return ledger


KNOWN_CLASSES = {
    "euclidean": {"riemannian": True, "berwald": True, "landsberg": True},
    "riemannian": {"riemannian": True, "berwald": True, "landsberg": True},
    "minkowski_quartic": {"riemannian": False, "berwald": True, "landsberg": True},
    "randers": {"riemannian": False, "berwald": False, "landsberg": False},
    "funk_disk": {"riemannian": False, "berwald": False, "landsberg": False},
}
