"""Geodesics, parallel frames and Cartan-tensor time profiles.

The geodesic equation ``x'' + 2 G(x, x') = 0`` is integrated with classic
RK4 together with a frame ``E`` solving ``E' = -N(x, x') E``, which is
parallel transport along the geodesic for every member of the connection
family (all of them share ``D_ell`` on the pulled-back frame).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import factorial
from typing import Optional, Sequence

import numpy as np

from .connections import cartan_iterate
from .diffengine import TangentPoint
from .errors import ChartExitError, DomainError, IllConditionedFitError
from .metrics import LocalGeometry, MetricInstance

MIN_STEPS = 8
FIT_COND_LIMIT = 1e10


@dataclass
class GeodesicTrace:
    """Sampled unit-speed geodesic with a parallel frame.

    ``frames[k][:, a]`` is the a-th transported vector at ``times[k]``.
    ``exited`` is set when integration stopped at the chart boundary.
    """

    metric: MetricInstance
    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    frames: np.ndarray
    exited: bool = False

    def __len__(self):
        return len(self.times)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def point(self, k: int) -> TangentPoint:
        return TangentPoint(self.xs[k], self.ys[k])

    def speed_defect(self) -> float:
        """``max |F(x(t), x'(t)) - 1|``."""
        F = np.array([float(self.metric.F(x, y)) for x, y in zip(self.xs, self.ys)])
        return float(np.max(np.abs(F - 1.0)))

    def frame_gram(self) -> np.ndarray:
        """``g(E_a, E_b)`` at every sample, shape ``(K, n, n)``."""
        out = []
        for k in range(len(self)):
            g = LocalGeometry(self.metric, self.point(k), 2).g.value
            E = self.frames[k]
            out.append(E.T @ g @ E)
        return np.array(out)

    def frame_defect(self) -> float:
        gram = self.frame_gram()
        return float(np.max(np.abs(gram - gram[0])))


def spray_and_connection(m: MetricInstance, x, y):
    """``(G^i, N^i_j)`` at a single point."""
    geo = LocalGeometry(m, TangentPoint(x, y), 3)
    return geo.spray.value, geo.N.value


def _rhs(m, state, n):
    x, y = state[:n], state[n : 2 * n]
    E = state[2 * n :].reshape(n, -1)
    G, N = spray_and_connection(m, x, y)
    return np.concatenate([y, -2.0 * G, (-N @ E).ravel()])


def integrate_geodesic(
    m: MetricInstance,
    x0,
    y0,
    t_span: Sequence[float] = (0.0, 2.0),
    steps: int = 200,
    frame: Optional[np.ndarray] = None,
    normalize: bool = True,
) -> GeodesicTrace:
    """RK4 geodesic from ``(x0, y0)`` over ``t_span`` with ``steps`` steps.

    ``y0`` is rescaled to unit speed unless ``normalize`` is false.  The
    frame starts at ``frame`` (columns; identity by default).  If the
    trace leaves the chart the samples up to the last interior point are
    kept and ``exited`` is set.
    """
    if steps < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps, got {steps}")
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    p0 = TangentPoint(x0, y0)
    m.check_admissible(p0)
    if normalize:
        y0 = y0 / float(m.F(x0, y0))
    n = m.dim
    E0 = np.eye(n) if frame is None else np.asarray(frame, dtype=float).reshape(n, -1)
    t0, t1 = float(t_span[0]), float(t_span[1])
    h = (t1 - t0) / steps
    state = np.concatenate([x0, y0, E0.ravel()])
    states = [state]
    exited = False
    for _ in range(steps):
        try:
            k1 = _rhs(m, state, n)
            k2 = _rhs(m, state + 0.5 * h * k1, n)
            k3 = _rhs(m, state + 0.5 * h * k2, n)
            k4 = _rhs(m, state + h * k3, n)
        except DomainError:
            exited = True
            break
        new = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not m.admissible(TangentPoint(new[:n], new[n : 2 * n])):
            exited = True
            break
        state = new
        states.append(state)
    S = np.array(states)
    times = t0 + h * np.arange(len(S))
    return GeodesicTrace(
        metric=m,
        times=times,
        xs=S[:, :n],
        ys=S[:, n : 2 * n],
        frames=S[:, 2 * n :].reshape(len(S), n, -1),
        exited=exited,
    )


# ---------------------------------------------------------------------------
# profiles


@dataclass
class CartanProfile:
    """``A(t)``, ``A'(t)``, ``A''(t)`` on transported vectors ``X, Y, Z``."""

    times: np.ndarray
    A: np.ndarray
    Adot: np.ndarray
    Addot: np.ndarray
    trace: Optional[GeodesicTrace] = field(default=None, repr=False)

    def derivative(self, which: str = "Adot") -> np.ndarray:
        return time_derivative(getattr(self, which), float(self.times[1] - self.times[0]))

    def transport_residual(self) -> float:
        """``max |d/dt A'(t) - A''(t)|``."""
        return float(np.max(np.abs(self.derivative("Adot") - self.Addot)))

    def first_residual(self) -> float:
        """``max |d/dt A(t) - A'(t)|``."""
        return float(np.max(np.abs(self.derivative("A") - self.Adot)))


def profile_cartan(trace: GeodesicTrace, X, Y, Z, with_second: bool = True) -> CartanProfile:
    """Evaluate ``A^(q)(x(t), y(t))(X(t), Y(t), Z(t))`` for ``q = 0, 1, 2``.

    ``X, Y, Z`` are given at ``t = 0`` in coordinates and carried along by
    the trace's parallel frame.
    """
    E0inv = np.linalg.inv(trace.frames[0])
    cx, cy, cz = (E0inv @ np.asarray(v, dtype=float) for v in (X, Y, Z))
    order = 5 if with_second else 4
    A, Ad, Add = [], [], []
    for k in range(len(trace)):
        geo = LocalGeometry(trace.metric, trace.point(k), order)
        E = trace.frames[k]
        u, v, w = E @ cx, E @ cy, E @ cz
        A.append(np.einsum("ijk,i,j,k->", geo.A.value, u, v, w))
        Ad.append(np.einsum("ijk,i,j,k->", cartan_iterate(geo, 1).value, u, v, w))
        Add.append(np.einsum("ijk,i,j,k->", cartan_iterate(geo, 2).value, u, v, w) if with_second else np.nan)
    return CartanProfile(trace.times.copy(), np.array(A), np.array(Ad), np.array(Add), trace)


def fd_weights(offsets: Sequence[float], q: int) -> np.ndarray:
    """Weights ``w`` with ``sum w_j f(o_j) ~ f^(q)(0)`` (unit spacing)."""
    o = np.asarray(offsets, dtype=float)
    k = np.arange(len(o))
    V = o[None, :] ** k[:, None] / np.array([factorial(int(i)) for i in k])[:, None]
    rhs = np.zeros(len(o))
    rhs[q] = 1.0
    return np.linalg.solve(V, rhs)


_CENTRAL = fd_weights([-2, -1, 0, 1, 2], 1)


def time_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """First derivative of a uniformly sampled series.

    Five-point central stencils inside; four-point one-sided stencils on
    the two samples at each end.
    """
    f = np.asarray(values, dtype=float)
    K = len(f)
    if K < 5:
        raise ValueError("need at least 5 samples")
    out = np.empty_like(f)
    out[2:-2] = sum(w * f[2 + o : K - 2 + o] for o, w in zip(range(-2, 3), _CENTRAL)) / h
    for i in (0, 1):
        w = fd_weights(np.arange(4) - i, 1)
        out[i] = w @ f[:4] / h
        w = fd_weights(np.arange(-3, 1) + i, 1)
        out[K - 1 - i] = w @ f[K - 4 :] / h
    return out


# ---------------------------------------------------------------------------
# transport route for iterated Cartan tensors


def _frame_tensor_series(m, p, half_steps, h, substeps=4):
    """``A(t)`` in the parallel frame at ``t = -half_steps*h .. +half_steps*h``."""
    y = p.y / float(m.F(p.x, p.y))
    T = half_steps * h
    n_int = half_steps * substeps
    fwd = integrate_geodesic(m, p.x, y, (0.0, T), n_int, normalize=False)
    # negative time keeps the direction y: Finsler transport is not reversible by y -> -y
    bwd = integrate_geodesic(m, p.x, y, (0.0, -T), n_int, normalize=False)
    if fwd.exited or bwd.exited:
        raise ChartExitError(f"geodesic through {p.to_json()} leaves the chart within |t| <= {T:g}")
    series = []
    for k in range(half_steps, 0, -1):
        j = k * substeps
        series.append(_frame_cartan(m, bwd.xs[j], bwd.ys[j], bwd.frames[j]))
    for k in range(half_steps + 1):
        j = k * substeps
        series.append(_frame_cartan(m, fwd.xs[j], fwd.ys[j], fwd.frames[j]))
    return np.array(series)


def _frame_cartan(m, x, y, E):
    A = LocalGeometry(m, TangentPoint(x, y), 3).A.value
    return np.einsum("abc,ai,bj,ck->ijk", A, E, E, E)


def transported_cartan_derivative(
    m: MetricInstance, p: TangentPoint, q: int, h: float = 0.05, stencil: int = 3
) -> np.ndarray:
    """``A^(q)`` at ``p`` as the q-th time derivative of the frame components of A.

    Central differences on ``2*stencil+1`` samples spaced ``h`` apart,
    followed by one Richardson step between spacings ``2h`` and ``h``.
    """
    if q == 0:
        return LocalGeometry(m, p, 3).A.value
    offs = np.arange(-stencil, stencil + 1)
    w = fd_weights(offs, q)
    accuracy = 2 * stencil + 2 - q - (q % 2 == 1)  # even error order of the central rule
    series = _frame_tensor_series(m, p, 2 * stencil, h)
    mid = 2 * stencil
    fine = np.tensordot(w, series[mid + offs], axes=1) / h**q
    coarse = np.tensordot(w, series[mid + 2 * offs], axes=1) / (2 * h) ** q
    factor = 2.0**accuracy
    return (factor * fine - coarse) / (factor - 1.0)


# ---------------------------------------------------------------------------
# solution forms


@dataclass
class FitResult:
    form: str
    parameter: float
    names: tuple
    coefficients: np.ndarray
    residual: float
    condition: float

    def to_json(self):
        return {
            "form": self.form,
            "parameter": self.parameter,
            "coefficients": dict(zip(self.names, self.coefficients.tolist())),
            "residual": self.residual,
            "condition": self.condition,
        }


def _basis(form: str, k: float, t: np.ndarray):
    if form == "sinh_cosh":
        if k > 0:
            s = np.sqrt(k)
            return ("sinh", "cosh"), [np.sinh(s * t), np.cosh(s * t)]
        if k < 0:
            s = np.sqrt(-k)
            return ("sin", "cos"), [np.sin(s * t), np.cos(s * t)]
        return ("t", "1"), [t, np.ones_like(t)]
    if form == "exponential":
        return ("exp",), [np.exp(k * t)]
    if form == "three_term":
        if k < 0:
            s = np.sqrt(-k)
            return ("1", "exp+", "exp-"), [np.ones_like(t), np.exp(s * t), np.exp(-s * t)]
        if k > 0:
            s = np.sqrt(k)
            return ("1", "sin", "cos"), [np.ones_like(t), np.sin(s * t), np.cos(s * t)]
        return ("1", "t", "t2"), [np.ones_like(t), t, t * t]
    raise ValueError(f"unknown solution form {form!r}; expected sinh_cosh, exponential or three_term")


def fit_solution_form(times, values, form: str, parameter: float) -> FitResult:
    """Least-squares fit of ``values(t)`` in the basis of the named form.

    ``sinh_cosh(k)``: ``c1 sinh(sqrt(k) t) + c2 cosh(sqrt(k) t)``;
    ``exponential(k)``: ``c exp(k t)``;
    ``three_term(lam)``: ``c1 + c2 exp(sqrt(-lam) t) + c3 exp(-sqrt(-lam) t)``.
    Coefficients are absolute; divide by ``A(0)`` for the normalized form.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    names, cols = _basis(form, float(parameter), t)
    if len(t) < 3 * len(cols):
        raise ValueError(f"profile has {len(t)} samples; need at least {3 * len(cols)}")
    M = np.stack(cols, axis=1)
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > FIT_COND_LIMIT:
        raise IllConditionedFitError(f"basis condition number {cond:.3g} for {form}({parameter:g})")
    coef, *_ = np.linalg.lstsq(M, v, rcond=None)
    resid = float(np.max(np.abs(M @ coef - v)))
    return FitResult(form, float(parameter), names, coef, resid, cond)


def fit_ode_parameter(profile: CartanProfile) -> tuple:
    """Least-squares ``lam`` in ``A'' + lam A = 0`` and the resulting residual."""
    A, Add = profile.A, profile.Addot
    denom = float(A @ A)
    if denom == 0.0:
        return 0.0, float(np.max(np.abs(Add)))
    lam = -float(A @ Add) / denom
    return lam, float(np.max(np.abs(Add + lam * A)))


# ---------------------------------------------------------------------------
# export


def trace_csv(trace: GeodesicTrace, profile: Optional[CartanProfile] = None) -> str:
    """CSV text with columns t, x1.., y1.., A, Adot, Addot."""
    n = trace.metric.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + ["A", "Adot", "Addot"]
    w.writerow(header)
    for k in range(len(trace)):
        row = [trace.times[k], *trace.xs[k], *trace.ys[k]]
        if profile is not None:
            row += [profile.A[k], profile.Adot[k], profile.Addot[k]]
        else:
            row += [float("nan")] * 3
        w.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()
