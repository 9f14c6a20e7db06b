"""Truncated multivariate Taylor arithmetic.

A :class:`JetArray` is an array of truncated Taylor polynomials in ``nvars``
variables, all expanded around the same base point.  Coefficients are stored
in graded order (total degree first), so a jet of order ``k`` is a prefix of
any higher-order jet of the same expansion.  The coefficient of the monomial
``e^alpha`` is ``d^alpha f / alpha!`` at the base point.

Every operation is exact truncated Taylor algebra: differentiating a jet of
order ``k`` yields the jet of order ``k - 1`` of the derivative field, so
tensors built from a metric by repeated differentiation and algebra carry
their own derivatives with them.
"""

from __future__ import annotations

import math
import string
from functools import lru_cache
from numbers import Number

import numpy as np

from .errors import OrderExceededError

MAX_ORDER = 7


class _Tables:
    """Index tables for one (nvars, order) pair."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        exps = []
        for d in range(order + 1):
            block = set()
            for combo in _combos(nvars, d):
                block.add(combo)
            exps.extend(sorted(block, reverse=True))
        self.exps = np.array(exps, dtype=np.int64).reshape(-1, nvars)
        self.size = len(self.exps)
        self.degree = self.exps.sum(axis=1)
        self.counts = np.array(
            [int(np.count_nonzero(self.degree <= d)) for d in range(order + 1)]
        )
        base = order + 1
        self._weights = base ** np.arange(nvars, dtype=np.int64)
        codes = self.exps @ self._weights
        self._order_codes = np.argsort(codes)
        self._sorted_codes = codes[self._order_codes]
        self.factorial = np.array(
            [math.prod(math.factorial(int(a)) for a in row) for row in self.exps],
            dtype=float,
        )

        # product table: all (a, b) with deg a + deg b <= order, grouped by target
        total = self.exps[:, None, :] + self.exps[None, :, :]
        ok = (self.degree[:, None] + self.degree[None, :]) <= order
        ia, ib = np.nonzero(ok)
        ic = self.lookup(total[ia, ib])
        perm = np.argsort(ic, kind="stable")
        self.mul_a = ia[perm]
        self.mul_b = ib[perm]
        self.mul_starts = np.searchsorted(ic[perm], np.arange(self.size))

        # derivative tables (only meaningful when order >= 1)
        self.diff_src = []
        self.diff_fac = []
        if order >= 1:
            low = self.exps[: self.counts[order - 1]]
            for v in range(nvars):
                shifted = low.copy()
                shifted[:, v] += 1
                self.diff_src.append(self.lookup(shifted))
                self.diff_fac.append((low[:, v] + 1).astype(float))

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        codes = np.asarray(exps, dtype=np.int64) @ self._weights
        pos = np.searchsorted(self._sorted_codes, codes)
        return self._order_codes[pos]


def _combos(nvars, d):
    if nvars == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _combos(nvars - 1, d - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def tables(nvars: int, order: int) -> _Tables:
    return _Tables(nvars, order)


class JetArray:
    """Array of truncated Taylor polynomials sharing a base point.

    Parameters
    ----------
    coeffs : ndarray
        Shape ``(*shape, M)`` where ``M`` is the number of monomials of
        total degree ``<= order`` in ``nvars`` variables.
    nvars, order : int
    """

    __array_priority__ = 1000

    def __init__(self, coeffs, nvars: int, order: int):
        self.c = np.asarray(coeffs, dtype=float)
        self.nvars = nvars
        self.order = order

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, nvars, order):
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (tables(nvars, order).size,))
        c[..., 0] = value
        return cls(c, nvars, order)

    @classmethod
    def variable(cls, value, var, nvars, order):
        jet = cls.constant(value, nvars, order)
        if order >= 1:
            jet.c[..., 1 + var] = 1.0
        return jet

    # -- basic properties ---------------------------------------------
    @property
    def shape(self):
        return self.c.shape[:-1]

    @property
    def ndim(self):
        return self.c.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0].copy()

    def __len__(self):
        if self.ndim == 0:
            raise TypeError("len() of a scalar jet")
        return self.c.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"JetArray(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    def truncate(self, order: int) -> "JetArray":
        if order > self.order:
            raise OrderExceededError(
                f"cannot raise jet order from {self.order} to {order}"
            )
        if order == self.order:
            return self
        n = tables(self.nvars, self.order).counts[order]
        return JetArray(self.c[..., :n], self.nvars, order)

    def copy(self):
        return JetArray(self.c.copy(), self.nvars, self.order)

    # -- shape manipulation -------------------------------------------
    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key) or len(key) > self.ndim:
            raise IndexError("jet indexing applies to the leading tensor axes only")
        return JetArray(self.c[key], self.nvars, self.order)

    def __setitem__(self, key, val):
        if isinstance(val, JetArray):
            if val.order < self.order:
                raise OrderExceededError("assigned jet has lower order")
            self.c[key] = val.truncate(self.order).c
        else:
            self.c[key] = 0.0
            sub = self.c[key]
            sub[..., 0] = val

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return JetArray(self.c.transpose(tuple(axes) + (self.ndim,)), self.nvars, self.order)

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        if isinstance(axis, int):
            axis = (axis,)
        axis = tuple(a % self.ndim for a in axis)
        return JetArray(self.c.sum(axis=axis), self.nvars, self.order)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return JetArray(self.c.reshape(tuple(shape) + (self.c.shape[-1],)), self.nvars, self.order)

    # -- calculus -----------------------------------------------------
    def diff(self, var: int) -> "JetArray":
        """Jet of the partial derivative with respect to variable ``var``."""
        if self.order == 0:
            raise OrderExceededError("cannot differentiate an order-0 jet")
        t = tables(self.nvars, self.order)
        c = self.c[..., t.diff_src[var]] * t.diff_fac[var]
        return JetArray(c, self.nvars, self.order - 1)

    def gradient(self, variables) -> "JetArray":
        """Stack derivatives along a new trailing tensor axis."""
        return stack([self.diff(v) for v in variables], axis=-1)

    def partial(self, multi_index) -> np.ndarray:
        """Value of the mixed partial derivative ``d^alpha`` at the base point."""
        alpha = np.asarray(multi_index, dtype=np.int64)
        if alpha.shape != (self.nvars,) or np.any(alpha < 0):
            raise ValueError(f"multi-index must have {self.nvars} non-negative entries")
        if alpha.sum() > self.order:
            raise OrderExceededError(
                f"derivative of order {alpha.sum()} exceeds jet order {self.order}"
            )
        t = tables(self.nvars, self.order)
        i = int(t.lookup(alpha[None, :])[0])
        return self.c[..., i] * t.factorial[i]

    # -- arithmetic ---------------------------------------------------
    def _align(self, other):
        if isinstance(other, JetArray):
            if other.nvars != self.nvars:
                raise ValueError("jets expanded in different variable counts")
            k = min(self.order, other.order)
            return self.truncate(k), other.truncate(k)
        return self, None

    def __add__(self, other):
        a, b = self._align(other)
        if b is not None:
            return JetArray(a.c + b.c, a.nvars, a.order)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.broadcast_to(self.c, shape + (self.c.shape[-1],)).copy()
        c[..., 0] += other
        return JetArray(c, self.nvars, self.order)

    __radd__ = __add__

    def __neg__(self):
        return JetArray(-self.c, self.nvars, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._align(other)
        if b is not None:
            t = tables(a.nvars, a.order)
            prod = a.c[..., t.mul_a] * b.c[..., t.mul_b]
            return JetArray(np.add.reduceat(prod, t.mul_starts, axis=-1), a.nvars, a.order)
        other = np.asarray(other, dtype=float)
        return JetArray(self.c * other[..., None], self.nvars, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, JetArray):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, JetArray):
            return (self.log() * p).exp()
        p = float(p)
        if p.is_integer() and p >= 0:
            return self._int_power(int(p))
        u0 = self.value
        derivs = []
        coef = np.ones_like(u0)
        for m in range(self.order + 1):
            derivs.append(coef * u0 ** (p - m))
            coef = coef * (p - m)
        return self._compose(derivs)

    def _int_power(self, p):
        result = JetArray.constant(np.ones(self.shape), self.nvars, self.order)
        base = self
        while p:
            if p & 1:
                result = result * base
            p >>= 1
            if p:
                base = base * base
        return result

    def reciprocal(self):
        u0 = self.value
        if np.any(u0 == 0):
            raise ZeroDivisionError("jet division by a zero base value")
        derivs = [(-1.0) ** m * math.factorial(m) / u0 ** (m + 1) for m in range(self.order + 1)]
        return self._compose(derivs)

    def sqrt(self):
        return self ** 0.5

    def exp(self):
        e = np.exp(self.value)
        return self._compose([e] * (self.order + 1))

    def log(self):
        u0 = self.value
        derivs = [np.log(u0)]
        for m in range(1, self.order + 1):
            derivs.append((-1.0) ** (m - 1) * math.factorial(m - 1) / u0**m)
        return self._compose(derivs)

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [s, c, -s, -c]
        return self._compose([cycle[m % 4] for m in range(self.order + 1)])

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [c, -s, -c, s]
        return self._compose([cycle[m % 4] for m in range(self.order + 1)])

    def _compose(self, derivs):
        """f(u) given the derivatives f^(m)(u0), m = 0..order."""
        h = self.copy()
        h.c[..., 0] = 0.0
        k = self.order
        result = JetArray.constant(derivs[k] / math.factorial(k), self.nvars, k)
        for m in range(k - 1, -1, -1):
            result = result * h + derivs[m] / math.factorial(m)
        return result

    _UFUNCS = {
        np.sqrt: "sqrt",
        np.exp: "exp",
        np.log: "log",
        np.sin: "sin",
        np.cos: "cos",
    }

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        if ufunc in self._UFUNCS:
            return getattr(inputs[0], self._UFUNCS[ufunc])()
        binary = {
            np.add: lambda a, b: a + b if isinstance(a, JetArray) else b + a,
            np.subtract: lambda a, b: a - b if isinstance(a, JetArray) else -(b - a),
            np.multiply: lambda a, b: a * b if isinstance(a, JetArray) else b * a,
            np.true_divide: lambda a, b: a / b if isinstance(a, JetArray) else b.__rtruediv__(a),
            np.power: lambda a, b: a**b,
        }
        if ufunc in binary:
            return binary[ufunc](*inputs)
        if ufunc is np.negative:
            return -inputs[0]
        if ufunc is np.square:
            return inputs[0] * inputs[0]
        return NotImplemented


def as_jet(x, nvars, order):
    if isinstance(x, JetArray):
        return x
    return JetArray.constant(x, nvars, order)


def stack(jets, axis=0):
    jets = list(jets)
    k = min(j.order for j in jets)
    nd = jets[0].ndim + 1
    axis = axis % nd
    c = np.stack([j.truncate(k).c for j in jets], axis=axis)
    return JetArray(c, jets[0].nvars, k)


def _letters(subscripts):
    return set(subscripts) - set(",->")


def einsum(subscripts: str, *operands):
    """``np.einsum`` over the tensor axes of jets and plain arrays.

    Only explicit-output subscripts without ellipses are supported.
    """
    inputs, output = subscripts.replace(" ", "").split("->")
    specs = inputs.split(",")
    if len(specs) != len(operands):
        raise ValueError("subscript/operand count mismatch")
    spare = [c for c in string.ascii_letters if c not in _letters(subscripts)]
    z = spare[0]
    jets = [(s, o) for s, o in zip(specs, operands) if isinstance(o, JetArray)]
    consts = [(s, np.asarray(o, dtype=float)) for s, o in zip(specs, operands) if not isinstance(o, JetArray)]
    if not jets:
        return np.einsum(subscripts, *operands)

    # fold the jets pairwise; constants ride along with the first product
    while len(jets) > 1:
        (s1, a), (s2, b) = jets[0], jets[1]
        rest = "".join(s for s, _ in jets[2:]) + "".join(s for s, _ in consts) + output
        keep = "".join(dict.fromkeys(c for c in s1 + s2 if c in rest))
        a, b = a._align(b)
        t = tables(a.nvars, a.order)
        ga = a.c[..., t.mul_a]
        gb = b.c[..., t.mul_b]
        prod = np.einsum(f"{s1}{z},{s2}{z}->{keep}{z}", ga, gb)
        prod = np.add.reduceat(prod, t.mul_starts, axis=-1)
        jets = [(keep, JetArray(prod, a.nvars, a.order))] + jets[2:]
    s, j = jets[0]
    expr = ",".join([s + z] + [cs for cs, _ in consts]) + f"->{output}{z}"
    c = np.einsum(expr, j.c, *[cv for _, cv in consts])
    return JetArray(c, j.nvars, j.order)


def inv(mat: JetArray) -> JetArray:
    """Inverse of a jet-valued square matrix (last two tensor axes)."""
    g0 = mat.value
    inv0 = np.linalg.inv(g0)
    h = mat - g0
    t = -einsum("ij,jk->ik", inv0, h)
    result = JetArray.constant(inv0, mat.nvars, mat.order)
    term = result
    for _ in range(mat.order):
        term = einsum("ij,jk->ik", t, term)
        result = result + term
    return result


def seed(x0, y0, order: int):
    """Jet variables for the 2n coordinates (x, y) around (x0, y0).

    Variables ``0..n-1`` are the x components and ``n..2n-1`` the y components.
    """
    if order > MAX_ORDER:
        raise OrderExceededError(f"jet order {order} exceeds the maximum {MAX_ORDER}")
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    n = x0.size
    nv = 2 * n
    x = stack([JetArray.variable(x0[i], i, nv, order) for i in range(n)])
    y = stack([JetArray.variable(y0[i], n + i, nv, order) for i in range(n)])
    return x, y


def is_scalar(x):
    return isinstance(x, Number) or (isinstance(x, np.ndarray) and x.ndim == 0)
