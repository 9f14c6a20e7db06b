"""The Finsler metric zoo and the pointwise tensors derived from F alone.

All tensors are built on jets: :class:`LocalGeometry` expands ``F`` to a
chosen order around a tangent point and derives ``g``, ``A``, ``C``, ``ell``
and the spray quantities as jets, so later modules can keep differentiating
them in x and y.

Conventions
-----------
* ``g_ij = 1/2 [F^2]_{y^i y^j}``.
* ``A_ijk = (F/4) [F^2]_{y^i y^j y^k} = (F/2) dg_ij/dy^k``, so that
  ``C^i_jk = F^{-1} g^im A_mjk`` is half the y-derivative of ``g``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import jets
from .diffengine import ScalarField, TangentPoint
from .errors import ConfigError, DomainError, SingularMetricError, StrongConvexityError

__all__ = [
    "TangentPoint",
    "TensorBlock",
    "MetricInstance",
    "make_metric",
    "metric_from_json",
    "LocalGeometry",
    "eval_F",
    "fundamental_tensor",
    "inverse_metric",
    "cartan_tensor",
    "normalized_cartan",
    "unit_ell",
    "symmetrize",
]


@dataclass
class TensorBlock:
    """Dense coordinate tensor at a point with declared symmetry and degree.

    ``symmetries`` lists groups of slots the values are symmetric under;
    ``homogeneity`` is the degree in ``y``.
    """

    values: np.ndarray
    symmetries: tuple = ()
    homogeneity: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def rank(self) -> int:
        return self.values.ndim

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def symmetry_defect(self) -> float:
        worst = 0.0
        for group in self.symmetries:
            for perm in itertools.permutations(group):
                axes = list(range(self.rank))
                for src, dst in zip(group, perm):
                    axes[src] = dst
                worst = max(worst, float(np.max(np.abs(self.values - self.values.transpose(axes)))))
        return worst


def symmetrize(t, slots: Sequence[int]):
    """Average a jet or array over all permutations of ``slots``."""
    slots = tuple(slots)
    perms = list(itertools.permutations(slots))
    total = None
    for perm in perms:
        axes = list(range(t.ndim))
        for src, dst in zip(slots, perm):
            axes[src] = dst
        term = t.transpose(axes)
        total = term if total is None else total + term
    return total * (1.0 / len(perms))


# ---------------------------------------------------------------------------
# metric zoo


def _dot(u, v):
    total = 0.0
    for a, b in zip(u, v):
        total = total + a * b
    return total


def _quad(mat, u, v):
    total = 0.0
    n = len(u)
    for i in range(n):
        for j in range(n):
            a = mat[i][j]
            if isinstance(a, float) and a == 0.0:
                continue
            total = total + a * u[i] * v[j]
    return total


class MetricInstance:
    """Base class of the zoo.  Subclasses define :meth:`F` and the chart."""

    kind = "abstract"

    def __init__(self, dim: int = 2, **params):
        if int(dim) < 2:
            raise ConfigError("dimension must be at least 2", "metric.dim")
        self.dim = int(dim)
        self.params = params

    # -- formula ------------------------------------------------------
    def F(self, x, y):
        raise NotImplementedError

    def F2(self, x, y):
        f = self.F(x, y)
        return f * f

    @property
    def is_riemannian_kind(self) -> bool:
        return False

    # -- chart --------------------------------------------------------
    def domain(self) -> dict:
        return {"type": "box", "low": [-1.0] * self.dim, "high": [1.0] * self.dim}

    def in_chart(self, x) -> bool:
        d = self.domain()
        x = np.asarray(x, dtype=float)
        if d["type"] == "ball":
            return bool(np.linalg.norm(x) <= d["radius"])
        return bool(np.all(x >= np.asarray(d["low"])) and np.all(x <= np.asarray(d["high"])))

    def check_direction(self, p: TangentPoint):
        """Hook for y-cone restrictions."""

    def check_admissible(self, p: TangentPoint):
        if p.dim != self.dim:
            raise DomainError(f"point has dimension {p.dim}, metric has {self.dim}")
        if not self.in_chart(p.x):
            raise DomainError(f"x={p.x.tolist()} outside the {self.kind} chart domain")
        self.check_direction(p)
        self.check_extra(p)

    def check_extra(self, p: TangentPoint):
        pass

    def admissible(self, p: TangentPoint) -> bool:
        try:
            self.check_admissible(p)
        except DomainError:
            return False
        return True

    def fd_scales(self, p: TangentPoint) -> np.ndarray:
        ny = np.linalg.norm(p.y)
        return np.concatenate([np.ones(self.dim), np.full(self.dim, ny)])

    # -- sampling -----------------------------------------------------
    def sample_x(self, rng: np.random.Generator, shrink: float = 1.0) -> np.ndarray:
        d = self.domain()
        if d["type"] == "ball":
            while True:
                x = rng.uniform(-1, 1, self.dim)
                if np.linalg.norm(x) <= 1:
                    return x * d["radius"] * shrink
        low, high = np.asarray(d["low"], float), np.asarray(d["high"], float)
        mid, half = (low + high) / 2, (high - low) / 2
        return mid + rng.uniform(-1, 1, self.dim) * half * shrink

    def sample_y(self, rng: np.random.Generator) -> np.ndarray:
        v = rng.normal(size=self.dim)
        return v / np.linalg.norm(v) * rng.uniform(0.5, 2.0)

    def sample_point(self, rng: np.random.Generator, shrink: float = 1.0) -> TangentPoint:
        for _ in range(10000):
            p = TangentPoint(self.sample_x(rng, shrink), self.sample_y(rng))
            if self.admissible(p):
                return p
        raise DomainError(f"could not sample an admissible point for {self.kind}")

    # -- plumbing -----------------------------------------------------
    def scalar_field(self, which: str = "F2") -> ScalarField:
        fn = self.F2 if which == "F2" else self.F
        return ScalarField(
            evaluator=fn,
            dim=self.dim,
            check=self.check_admissible,
            scales=self.fd_scales,
            name=which,
            homogeneity=2 if which == "F2" else 1,
        )

    def to_json(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": _jsonable(self.params)}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, params={self.params})"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in list(obj)]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


class Euclidean(MetricInstance):
    kind = "euclidean"

    @property
    def is_riemannian_kind(self):
        return True

    def F(self, x, y):
        return np.sqrt(_dot(y, y))


class Riemannian(MetricInstance):
    """Riemannian metric ``sqrt(a_ij(x) y^i y^j)`` on one of several charts.

    ``chart`` is ``"sphere"`` (round sphere of ``radius`` in (theta, phi)),
    ``"polar"`` (flat plane in polar coordinates), ``"hyperbolic"``
    (upper half-space, any dimension, last coordinate positive) or
    ``"constant"`` (``matrix`` given).
    """

    kind = "riemannian"
    CHARTS = ("sphere", "polar", "hyperbolic", "constant")

    def __init__(self, dim=2, chart="sphere", **params):
        super().__init__(dim, chart=chart, **params)
        if chart not in self.CHARTS:
            raise ConfigError(f"unknown chart {chart!r}; expected one of {self.CHARTS}", "metric.params.chart")
        if chart in ("sphere", "polar") and self.dim != 2:
            raise ConfigError(f"chart {chart!r} is two-dimensional", "metric.dim")
        self.chart = chart
        self.radius = float(params.get("radius", 1.0))
        self.margin = float(params.get("margin", 0.3))
        if chart == "constant":
            mat = np.asarray(params.get("matrix", np.eye(self.dim)), dtype=float)
            if mat.shape != (self.dim, self.dim) or not np.allclose(mat, mat.T):
                raise ConfigError("matrix must be symmetric dim x dim", "metric.params.matrix")
            if np.any(np.linalg.eigvalsh(mat) <= 0):
                raise ConfigError("matrix must be positive definite", "metric.params.matrix")
            self.matrix = mat

    @property
    def is_riemannian_kind(self):
        return True

    def a(self, x):
        """Coefficient matrix as nested lists (works for jets and arrays)."""
        if self.chart == "sphere":
            r2 = self.radius**2
            s = np.sin(x[0])
            return [[r2, 0.0], [0.0, r2 * s * s]]
        if self.chart == "polar":
            return [[1.0, 0.0], [0.0, x[0] * x[0]]]
        if self.chart == "hyperbolic":
            w = 1.0 / (x[-1] * x[-1])
            return [[w if i == j else 0.0 for j in range(self.dim)] for i in range(self.dim)]
        return self.matrix.tolist()

    def F(self, x, y):
        return np.sqrt(_quad(self.a(x), y, y))

    def domain(self):
        m = self.margin
        if self.chart == "sphere":
            return {"type": "box", "low": [m, -np.pi], "high": [np.pi - m, np.pi]}
        if self.chart == "polar":
            return {"type": "box", "low": [m, -np.pi], "high": [2.0, np.pi]}
        if self.chart == "hyperbolic":
            n = self.dim
            return {"type": "box", "low": [-1.0] * (n - 1) + [m], "high": [1.0] * (n - 1) + [2.0]}
        return super().domain()

    def in_chart(self, x):
        x = np.asarray(x, dtype=float)
        if self.chart == "sphere":
            # phi is periodic; only theta is restricted
            d = self.domain()
            return bool(d["low"][0] <= x[0] <= d["high"][0])
        return super().in_chart(x)

    def fd_scales(self, p):
        s = super().fd_scales(p)
        if self.chart == "sphere":
            s[: self.dim] = min(1.0, p.x[0], np.pi - p.x[0])
        elif self.chart == "polar":
            s[: self.dim] = min(1.0, p.x[0])
        elif self.chart == "hyperbolic":
            s[: self.dim] = min(1.0, p.x[-1])
        return s


class MinkowskiQuartic(MetricInstance):
    """``F = (sum_i (y^i)^4)^(1/4)``: locally Minkowski, not Riemannian.

    Strong convexity fails on the coordinate axes, so directions must keep
    every ``|y^i| / |y|`` above ``cone`` (default 0.1).
    """

    kind = "minkowski_quartic"

    def __init__(self, dim=2, **params):
        super().__init__(dim, **params)
        self.cone = float(params.get("cone", 0.1))

    def F(self, x, y):
        return _dot([yi * yi for yi in y], [yi * yi for yi in y]) ** 0.25

    def F2(self, x, y):
        return np.sqrt(_dot([yi * yi for yi in y], [yi * yi for yi in y]))

    def check_direction(self, p):
        ratio = np.min(np.abs(p.y)) / np.linalg.norm(p.y)
        if ratio < self.cone:
            raise DomainError(
                f"y={p.y.tolist()} is within the degenerate cone of the quartic metric "
                f"(min |y^i|/|y| = {ratio:.3g} < {self.cone})"
            )

    def sample_y(self, rng):
        while True:
            v = super().sample_y(rng)
            if np.min(np.abs(v)) / np.linalg.norm(v) >= max(self.cone, 0.25):
                return v

    def fd_scales(self, p):
        # complex roots of sum y^4 sit about min|y^i| / sqrt(2) away
        s = super().fd_scales(p)
        s[self.dim:] = np.min(np.abs(p.y)) / np.sqrt(2.0)
        return s


class Randers(MetricInstance):
    """``F = sqrt(a_ij y^i y^j) + b_i(x) y^i`` with ``b(x) = b + b_grad @ x``.

    ``a`` is a constant positive-definite matrix; the a-norm of ``b(x)``
    must stay below ``bound`` (default 0.95) on the chart.
    """

    kind = "randers"

    def __init__(self, dim=2, **params):
        super().__init__(dim, **params)
        n = self.dim
        self.a_mat = np.asarray(params.get("a", np.eye(n)), dtype=float)
        self.b_vec = np.asarray(params.get("b", [0.0] * n), dtype=float)
        self.b_grad = np.asarray(params.get("b_grad", np.zeros((n, n))), dtype=float)
        self.half_width = float(params.get("half_width", 0.5))
        self.bound = float(params.get("bound", 0.95))
        if self.a_mat.shape != (n, n) or not np.allclose(self.a_mat, self.a_mat.T):
            raise ConfigError("a must be a symmetric dim x dim matrix", "metric.params.a")
        if np.any(np.linalg.eigvalsh(self.a_mat) <= 0):
            raise ConfigError("a must be positive definite", "metric.params.a")
        if self.b_vec.shape != (n,):
            raise ConfigError("b must have dim entries", "metric.params.b")
        if self.b_grad.shape != (n, n):
            raise ConfigError("b_grad must be dim x dim", "metric.params.b_grad")
        self.a_inv = np.linalg.inv(self.a_mat)
        corners = itertools.product([-self.half_width, self.half_width], repeat=n)
        worst = max(self.b_norm(np.array(c)) for c in corners)
        if worst >= self.bound:
            raise ConfigError(
                f"a-norm of b reaches {worst:.3g} >= {self.bound} on the chart", "metric.params.b"
            )

    def b_of_x(self, x):
        n = self.dim
        return [self.b_vec[i] + _dot(self.b_grad[i].tolist(), [x[j] for j in range(n)]) for i in range(n)]

    def b_norm(self, x) -> float:
        b = np.asarray(self.b_vec + self.b_grad @ np.asarray(x, dtype=float))
        return float(np.sqrt(b @ self.a_inv @ b))

    def F(self, x, y):
        alpha = np.sqrt(_quad(self.a_mat.tolist(), y, y))
        return alpha + _dot(self.b_of_x(x), y)

    def domain(self):
        h = self.half_width
        return {"type": "box", "low": [-h] * self.dim, "high": [h] * self.dim}

    def check_extra(self, p):
        if self.b_norm(p.x) >= 1.0:
            raise DomainError(f"|b|_a >= 1 at x={p.x.tolist()}")


class FunkDisk(MetricInstance):
    """Funk metric of the open unit ball (constant flag curvature -1/4).

    ``F = (sqrt((1-|x|^2)|y|^2 + <x,y>^2) + <x,y>) / (1 - |x|^2)``; the chart
    is the ball of radius ``1 - margin``.
    """

    kind = "funk_disk"

    def __init__(self, dim=2, **params):
        super().__init__(dim, **params)
        self.margin = float(params.get("margin", 0.05))
        if not 0 < self.margin < 1:
            raise ConfigError("margin must lie in (0, 1)", "metric.params.margin")

    def F(self, x, y):
        xx = _dot(x, x)
        xy = _dot(x, y)
        yy = _dot(y, y)
        q = 1.0 - xx
        return (np.sqrt(q * yy + xy * xy) + xy) / q

    def domain(self):
        return {"type": "ball", "radius": 1.0 - self.margin}

    def fd_scales(self, p):
        # distances to the complex singularities of 1/(1-|x|^2) and of the root
        s = super().fd_scales(p)
        s[: self.dim] = min(1.0, 1.0 - np.linalg.norm(p.x))
        s[self.dim :] *= np.sqrt(1.0 - p.x @ p.x)
        return s


KINDS = {
    cls.kind: cls for cls in (Euclidean, Riemannian, MinkowskiQuartic, Randers, FunkDisk)
}

# parameters used when a zoo member is requested without explicit params
DEFAULT_PARAMS = {
    "euclidean": {},
    "riemannian": {"chart": "sphere"},
    "minkowski_quartic": {},
    "randers": {"b": [0.2, 0.1], "b_grad": [[0.1, 0.3], [-0.25, 0.05]]},
    "funk_disk": {},
}


def make_metric(kind: str, dim: int = 2, **params) -> MetricInstance:
    if kind not in KINDS:
        raise ConfigError(f"unknown metric kind {kind!r}; expected one of {sorted(KINDS)}", "metric.kind")
    if not params:
        params = dict(DEFAULT_PARAMS[kind])
        if kind == "randers" and dim != 2:
            # x-dependent, non-closed b keeps the metric outside the Berwald class
            idx = np.add.outer(np.arange(dim), 2 * np.arange(dim))
            params = {"b": [0.2, 0.1] + [0.0] * (dim - 2), "b_grad": (0.12 * np.sin(1.0 + idx)).tolist()}
        if kind == "riemannian" and dim != 2:
            params = {"chart": "hyperbolic"}
    return KINDS[kind](dim=dim, **params)


def metric_from_json(doc: dict) -> MetricInstance:
    if not isinstance(doc, dict):
        raise ConfigError("metric must be an object", "metric")
    if "kind" not in doc:
        raise ConfigError("missing required field", "metric.kind")
    dim = doc.get("dim", 2)
    if not isinstance(dim, int) or isinstance(dim, bool):
        raise ConfigError("must be an integer", "metric.dim")
    params = doc.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("must be an object", "metric.params")
    try:
        return make_metric(doc["kind"], dim, **params)
    except TypeError as exc:
        raise ConfigError(str(exc), "metric.params") from exc


def zoo(dim: int = 2):
    """One default instance of each metric kind."""
    return {kind: make_metric(kind, dim) for kind in KINDS}


# ---------------------------------------------------------------------------
# jets at a point


class LocalGeometry:
    """Jets of every F-derived quantity around one tangent point.

    ``order`` is the truncation order of the ``F`` jet; each derived tensor
    carries ``order`` minus the number of derivatives it consumed.
    """

    def __init__(self, metric: MetricInstance, point: TangentPoint, order: int):
        metric.check_admissible(point)
        self.metric = metric
        self.point = point
        self.n = metric.dim
        self.order = order
        self.x, self.y = jets.seed(point.x, point.y, order)
        self.cache = {}

    # -- derivative helpers -------------------------------------------
    def dx(self, t):
        """x-gradient appended as a trailing axis."""
        return t.gradient(range(self.n))

    def dy(self, t):
        """y-gradient appended as a trailing axis."""
        return t.gradient(range(self.n, 2 * self.n))

    def delta(self, t):
        """Horizontal derivative ``d/dx^k - N^m_k d/dy^m`` as a trailing axis."""
        ndim = t.ndim
        idx = "abcdefgh"[:ndim]
        return self.dx(t) - jets.einsum(f"mk,{idx}m->{idx}k", self.N, self.dy(t))

    # -- scalar and vector data ---------------------------------------
    @cached_property
    def F2(self):
        return jets.as_jet(self.metric.F2(self.x, self.y), 2 * self.n, self.order)

    @cached_property
    def F(self):
        return jets.as_jet(self.metric.F(self.x, self.y), 2 * self.n, self.order)

    @cached_property
    def ell(self):
        return self.y / self.F

    @cached_property
    def ell_low(self):
        return self.dy(self.F)

    # -- tensors -------------------------------------------------------
    @cached_property
    def g(self):
        g = 0.5 * self.dy(self.dy(self.F2))
        g = symmetrize(g, (0, 1))
        g0 = g.value
        try:
            np.linalg.cholesky(g0)
        except np.linalg.LinAlgError:
            raise StrongConvexityError(
                f"fundamental tensor not positive definite at x={self.point.x.tolist()}, "
                f"y={self.point.y.tolist()} (eigenvalues {np.linalg.eigvalsh(g0).tolist()})"
            ) from None
        return g

    @cached_property
    def ginv(self):
        try:
            return jets.inv(self.g)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError(str(exc)) from exc

    @cached_property
    def g_raw(self):
        return 0.5 * self.dy(self.dy(self.F2))

    @cached_property
    def A_raw(self):
        return 0.5 * self.F * self.dy(self.g_raw)

    @cached_property
    def A(self):
        return symmetrize(self.A_raw, (0, 1, 2))

    @cached_property
    def C(self):
        """``C^i_jk = F^-1 g^im A_mjk`` (first slot raised)."""
        return jets.einsum("im,mjk->ijk", self.ginv, self.A) / self.F

    def raise_first(self, t):
        rest = "jklp"[: t.ndim - 1]
        return jets.einsum(f"im,m{rest}->i{rest}", self.ginv, t)

    def lower_first(self, t):
        rest = "jklp"[: t.ndim - 1]
        return jets.einsum(f"im,m{rest}->i{rest}", self.g, t)

    # -- spray data ----------------------------------------------------
    @cached_property
    def gamma(self):
        """Formal Christoffel symbols ``gamma^k_ij`` from x-derivatives of g."""
        dg = self.dx(self.g)  # dg[j, l, i] = d g_jl / dx^i
        low = 0.5 * (dg.transpose(2, 0, 1) + dg.transpose(0, 2, 1) - dg)  # [i, j, l]
        return jets.einsum("kl,ijl->kij", self.ginv, low)

    @cached_property
    def N(self):
        """Nonlinear connection ``N^k_i = gamma^k_ij y^j - C^k_il gamma^l_ab y^a y^b``."""
        gy = jets.einsum("kij,j->ki", self.gamma, self.y)
        gyy = jets.einsum("lab,a,b->l", self.gamma, self.y, self.y)
        return gy - jets.einsum("kil,l->ki", self.C, gyy)

    @cached_property
    def spray(self):
        """``G^i`` from the geodesic-equation formula (independent of N)."""
        F2 = self.F2
        dxF2 = self.dx(F2)
        mixed = self.dy(dxF2)  # [k, l] = d^2 F^2 / dx^k dy^l
        rhs = jets.einsum("kl,k->l", mixed, self.y) - dxF2
        return 0.25 * jets.einsum("il,l->i", self.ginv, rhs)

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.g.value))


def geometry(metric: MetricInstance, p: TangentPoint, order: int) -> LocalGeometry:
    return LocalGeometry(metric, p, order)


# ---------------------------------------------------------------------------
# public pointwise operations


def eval_F(m: MetricInstance, p: TangentPoint) -> float:
    m.check_admissible(p)
    val = float(m.F(p.x, p.y))
    if not val > 0:
        raise DomainError(f"F={val} is not positive at {p.to_json()}")
    return val


def fundamental_tensor(m: MetricInstance, p: TangentPoint) -> TensorBlock:
    geo = LocalGeometry(m, p, 2)
    return TensorBlock(geo.g.value, ((0, 1),), 0, "g")


def inverse_metric(m: MetricInstance, p: TangentPoint) -> TensorBlock:
    geo = LocalGeometry(m, p, 2)
    return TensorBlock(symmetrize(geo.ginv.value, (0, 1)), ((0, 1),), 0, "g_inv")


def cartan_tensor(m: MetricInstance, p: TangentPoint, raw: bool = False) -> TensorBlock:
    geo = LocalGeometry(m, p, 3)
    vals = geo.A_raw.value if raw else geo.A.value
    return TensorBlock(vals, ((0, 1, 2),), 0, "A")


def normalized_cartan(m: MetricInstance, p: TangentPoint) -> TensorBlock:
    geo = LocalGeometry(m, p, 3)
    return TensorBlock(geo.C.value, ((1, 2),), -1, "C")


def unit_ell(m: MetricInstance, p: TangentPoint):
    """Return ``(ell^i, ell_i)``."""
    geo = LocalGeometry(m, p, 2)
    return geo.ell.value, geo.ell_low.value
