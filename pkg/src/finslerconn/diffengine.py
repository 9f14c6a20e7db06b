"""Partial derivatives of scalar fields on the chart.

Two independent routes are provided: :func:`partial` reads derivatives off a
truncated Taylor jet (exact up to rounding), and :func:`fd_partial` uses
tensor-product fourth-order central differences with one Richardson step.  The second is
only an oracle for the first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Callable, Optional

import numpy as np

from . import jets
from .errors import DomainError, OrderExceededError, StepUnderflowError, ZeroDirectionError

FD_MAX_ORDER = 4
# relative step per derivative order, balanced between O(h^6) truncation
# (after extrapolation) and O(eps / h^k) cancellation
FD_DEFAULT_STEP = {1: 2e-3, 2: 5e-3, 3: 4e-2, 4: 6e-2}


@dataclass(frozen=True)
class TangentPoint:
    """A chart point ``x`` together with a nonzero tangent vector ``y``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ValueError(f"x and y dimensions differ: {x.shape} vs {y.shape}")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise DomainError("non-finite coordinates")
        if not np.any(y):
            raise ZeroDirectionError("tangent vector y must be nonzero")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return self.x.size

    def scaled(self, lam: float) -> "TangentPoint":
        return TangentPoint(self.x, lam * self.y)

    def to_json(self):
        return {"x": self.x.tolist(), "y": self.y.tolist()}


@dataclass
class ScalarField:
    """A scalar field ``f(x, y)`` usable with floats, arrays and jets.

    ``evaluator(x, y)`` receives component-indexable ``x`` and ``y`` (each
    ``x[i]`` is a float, an ndarray of sample values or a scalar jet) and
    must return ``f`` in the same representation.
    """

    evaluator: Callable
    dim: int
    check: Optional[Callable[[TangentPoint], None]] = None
    scales: Optional[Callable[[TangentPoint], np.ndarray]] = None
    name: str = "f"
    homogeneity: Optional[int] = field(default=None)

    def validate(self, p: TangentPoint):
        if p.dim != self.dim:
            raise DomainError(f"point dimension {p.dim} != field dimension {self.dim}")
        if self.check is not None:
            self.check(p)

    def __call__(self, x, y):
        return self.evaluator(x, y)

    def variable_scales(self, p: TangentPoint) -> np.ndarray:
        if self.scales is not None:
            return np.asarray(self.scales(p), dtype=float)
        ny = np.linalg.norm(p.y)
        return np.concatenate([np.ones(self.dim), np.full(self.dim, ny)])

    def jet(self, p: TangentPoint, order: int) -> jets.JetArray:
        self.validate(p)
        x, y = jets.seed(p.x, p.y, order)
        return jets.as_jet(self.evaluator(x, y), 2 * self.dim, order)


def _as_multi_index(idx, nvars):
    alpha = tuple(int(a) for a in idx)
    if len(alpha) != nvars or any(a < 0 for a in alpha):
        raise ValueError(f"multi-index must have {nvars} non-negative entries, got {idx}")
    return alpha


def multi_index(dim: int, *variables: str):
    """Build a multi-index from labels such as ``"x1"`` or ``"y2"`` (1-based)."""
    alpha = [0] * (2 * dim)
    for v in variables:
        kind, k = v[0], int(v[1:]) - 1
        if kind not in "xy" or not 0 <= k < dim:
            raise ValueError(f"bad variable label {v!r}")
        alpha[k + (dim if kind == "y" else 0)] += 1
    return tuple(alpha)


def partial(f: ScalarField, p: TangentPoint, idx) -> float:
    """Exact (jet) value of ``d^idx f`` at ``p``; ``idx`` indexes (x, y)."""
    alpha = _as_multi_index(idx, 2 * f.dim)
    k = sum(alpha)
    if k > jets.MAX_ORDER:
        raise OrderExceededError(f"derivative order {k} exceeds {jets.MAX_ORDER}")
    return float(f.jet(p, k).partial(alpha))


def all_partials(f: ScalarField, p: TangentPoint, order: int):
    """Every partial derivative up to ``order`` as ``{multi_index: value}``."""
    jet = f.jet(p, order)
    t = jets.tables(2 * f.dim, order)
    vals = jet.c * t.factorial
    return {tuple(int(a) for a in e): float(v) for e, v in zip(t.exps, vals)}


FD_ACCURACY = 6  # truncation order of the base stencil, before extrapolation
# stencils are evaluated in extended precision where the platform has it:
# fourth differences near the Funk boundary lose ~11 digits to cancellation
FD_DTYPE = np.longdouble


@lru_cache(maxsize=None)
def _stencil(m):
    """Symmetric ``m + 3`` point rule for the m-th derivative, unit spacing.

    Offsets are integers for even ``m`` and half-integers for odd ``m``;
    symmetry lifts the accuracy to ``FD_ACCURACY``.  Weights are exact
    rationals so that they sum to zero exactly.
    """
    npts = m + FD_ACCURACY - 1
    offs = [Fraction(2 * k - (npts - 1), 2) for k in range(npts)]
    # moment conditions sum_j w_j o_j^i / i! = [i == m], solved exactly
    rows = [[o**i / factorial(i) for o in offs] + [Fraction(int(i == m))] for i in range(npts)]
    for c in range(npts):
        piv = next(r for r in range(c, npts) if rows[r][c] != 0)
        rows[c], rows[piv] = rows[piv], rows[c]
        rows[c] = [v / rows[c][c] for v in rows[c]]
        for r in range(npts):
            if r != c and rows[r][c] != 0:
                rows[r] = [a - rows[r][c] * b for a, b in zip(rows[r], rows[c])]
    return tuple((o, rows[j][-1]) for j, o in enumerate(offs))


@lru_cache(maxsize=None)
def _stencil_ext(m):
    """``_stencil(m)`` as two ``FD_DTYPE`` arrays (offsets, weights)."""
    ext = [[FD_DTYPE(q.numerator) / FD_DTYPE(q.denominator) for q in pair] for pair in _stencil(m)]
    return np.array([e[0] for e in ext], dtype=FD_DTYPE), np.array([e[1] for e in ext], dtype=FD_DTYPE)


def fd_partial(f: ScalarField, p: TangentPoint, idx, h: Optional[float] = None) -> float:
    """Central finite-difference estimate of ``d^idx f`` with one Richardson step.

    ``h`` is relative: the step along each variable is ``h`` times the
    field's scale for that variable (1 for x, ``|y|`` for y by default).
    Without ``h`` the extrapolated estimate is formed at ``2h0, h0, h0/2``
    (``h0`` from ``FD_DEFAULT_STEP``) and the finer member of the closest
    agreeing neighbour pair is returned, which steers between truncation
    and cancellation error point by point.
    """
    alpha = _as_multi_index(idx, 2 * f.dim)
    k = sum(alpha)
    if k > FD_MAX_ORDER:
        raise OrderExceededError(f"finite differences support order <= {FD_MAX_ORDER}")
    f.validate(p)
    n = f.dim
    if k == 0:
        return float(f.evaluator(p.x, p.y))
    if h is not None:
        if not h > 0:
            raise ValueError("step must be positive")
        if h < 1e-7:
            raise StepUnderflowError(f"relative step {h:g} below 1e-7 of the coordinate scale")
    base = np.concatenate([p.x, p.y]).astype(FD_DTYPE)
    scales = f.variable_scales(p).astype(FD_DTYPE)
    active = [v for v in range(2 * n) if alpha[v] > 0]
    rules = [_stencil_ext(alpha[v]) for v in active]
    grids = np.meshgrid(*[o for o, _ in rules], indexing="ij")

    def raw(step):
        wts = np.ones(grids[0].shape, dtype=FD_DTYPE)
        pts = np.repeat(base[:, None], wts.size, axis=1)
        for (o, w), grid, v in zip(rules, grids, active):
            dv = step * scales[v]
            pts[v] += grid.ravel() * dv
            wts = wts * (w / dv ** alpha[v]).reshape([-1 if u == v else 1 for u in active])
        vals = np.asarray(f.evaluator(pts[:n], pts[n:]), dtype=FD_DTYPE)
        return np.dot(wts.ravel(), vals)

    gain = FD_DTYPE(2) ** FD_ACCURACY
    if h is not None:
        coarse, fine = raw(FD_DTYPE(h)), raw(FD_DTYPE(h) / 2)
        return float((gain * fine - coarse) / (gain - 1))
    steps = [FD_DTYPE(FD_DEFAULT_STEP[k]) * 2 / FD_DTYPE(2) ** i for i in range(4)]
    r = [raw(s) for s in steps]
    ext = [(gain * r[i + 1] - r[i]) / (gain - 1) for i in range(3)]
    best = 1 if abs(ext[0] - ext[1]) <= abs(ext[1] - ext[2]) else 2
    return float(ext[best])
