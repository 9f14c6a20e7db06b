"""The general-type connection family and its covariant derivatives.

Coordinate conventions used throughout the package:

* Horizontal frame ``delta_k = d/dx^k - N^m_k d/dy^m`` with the canonical
  nonlinear connection ``N`` of the geodesic spray.
* ``Gamma[k, i, j]`` are the horizontal coefficients in that frame,
  ``D_{delta_i} e_j = Gamma[k, i, j] e_k`` (output, direction, input).
* ``V[k, i, j]`` are the vertical coefficients,
  ``D_{d/dy^i} e_j = V[k, i, j] e_k``.
* ``Gamma_natural[k, i, j]`` are the coefficients along the natural
  ``d/dx^i``; they carry the torsion ``N^s_i C^k_sj - N^s_j C^k_si`` when
  ``r != 0``.

For compatible tensors ``S = k0 A + k1 A' + ... + km A^(m)`` and ``T = r A``
the defining torsion and almost-compatibility conditions give

    Gamma = Chern + (k0 - 1) A^k_ij + sum_q kq A^(q)k_ij,     V = r C,

where ``Chern`` is ``g^is/2 (delta_k g_sj - delta_s g_jk + delta_j g_ks)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union


from . import jets
from .diffengine import TangentPoint
from .errors import ConfigError, OrderExceededError
from .metrics import LocalGeometry, MetricInstance, TensorBlock, symmetrize

MAX_KAPPA_INDEX = 3

PRESETS = {
    "berwald": ((1.0, 1.0), 0.0),
    "chern": ((1.0,), 0.0),
    "cartan": ((1.0,), 1.0),
    "hashiguchi": ((1.0, 1.0), 1.0),
    "shen": ((), 0.0),
}


@dataclass(frozen=True)
class ConnectionParams:
    """Family coordinates ``(kappa_0, ..., kappa_3; r)``."""

    kappas: tuple = (0.0, 0.0, 0.0, 0.0)
    r: float = 0.0
    preset_name: Optional[str] = None

    def __post_init__(self):
        ks = tuple(float(k) for k in self.kappas)
        if len(ks) > MAX_KAPPA_INDEX + 1 and any(ks[MAX_KAPPA_INDEX + 1:]):
            raise ConfigError(
                f"kappa indices above {MAX_KAPPA_INDEX} are not supported", "connection.kappas"
            )
        ks = (ks + (0.0,) * (MAX_KAPPA_INDEX + 1))[: MAX_KAPPA_INDEX + 1]
        object.__setattr__(self, "kappas", ks)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def preset(cls, name: str) -> "ConnectionParams":
        key = name.lower().replace("-", "_")
        if key == "chern_rund":
            key = "chern"
        if key not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}", "connection.preset")
        ks, r = PRESETS[key]
        return cls(ks, r, key)

    @classmethod
    def from_json(cls, doc) -> "ConnectionParams":
        if isinstance(doc, str):
            return cls.preset(doc)
        if not isinstance(doc, dict):
            raise ConfigError("must be an object", "connection")
        if "preset" in doc:
            return cls.preset(doc["preset"])
        if "kappas" not in doc:
            raise ConfigError("need 'preset' or 'kappas'", "connection")
        ks = doc["kappas"]
        if not isinstance(ks, list) or not all(isinstance(k, (int, float)) for k in ks):
            raise ConfigError("must be a list of numbers", "connection.kappas")
        r = doc.get("r", 0.0)
        if not isinstance(r, (int, float)):
            raise ConfigError("must be a number", "connection.r")
        return cls(tuple(ks), r)

    def to_json(self) -> dict:
        doc = {"kappas": list(self.kappas), "r": self.r}
        if self.preset_name:
            doc["preset"] = self.preset_name
        return doc

    @property
    def max_q(self) -> int:
        """Highest iterated-Cartan order with a nonzero coefficient."""
        for q in range(MAX_KAPPA_INDEX, 0, -1):
            if self.kappas[q] != 0.0:
                return q
        return 0

    @property
    def label(self) -> str:
        if self.preset_name:
            return self.preset_name
        ks = ",".join(f"{k:g}" for k in self.kappas)
        return f"kappas=({ks}),r={self.r:g}"


def params(kappas=(), r=0.0) -> ConnectionParams:
    return ConnectionParams(tuple(kappas), r)


# ---------------------------------------------------------------------------
# jet-level assembly


def required_order(c: Optional[ConnectionParams] = None, extra: int = 0) -> int:
    """F-jet order needed for connection coefficients plus ``extra`` derivatives."""
    q = c.max_q if c is not None else 0
    k = 3 + q + extra
    if k > jets.MAX_ORDER:
        raise OrderExceededError(
            f"needs derivatives of F^2 up to order {k} (kappa_{q} with {extra} further "
            f"derivatives); the engine stops at {jets.MAX_ORDER}"
        )
    return k


def cartan_iterate(geo: LocalGeometry, q: int) -> jets.JetArray:
    """``A^(q)`` as a jet: repeated derivative of A along ``ell``-bar."""
    key = ("Aq", q)
    if key in geo.cache:
        return geo.cache[key]
    if q < 0 or q > MAX_KAPPA_INDEX:
        raise OrderExceededError(f"iterated Cartan order {q} not in 0..{MAX_KAPPA_INDEX}")
    if q == 0:
        out = geo.A
    else:
        prev = cartan_iterate(geo, q - 1)
        if prev.order < 1:
            raise OrderExceededError(f"jet order {geo.order} too low for A^({q})")
        along = jets.einsum("ijks,s->ijk", geo.delta(prev), geo.y)
        N = geo.N
        moved = (
            jets.einsum("mjk,mi->ijk", prev, N)
            + jets.einsum("imk,mj->ijk", prev, N)
            + jets.einsum("ijm,mk->ijk", prev, N)
        )
        out = symmetrize((along - moved) / geo.F, (0, 1, 2))
    geo.cache[key] = out
    return out


def chern_coefficients(geo: LocalGeometry) -> jets.JetArray:
    """``g^is/2 (delta_k g_sj - delta_s g_jk + delta_j g_ks)``."""
    if "chern" not in geo.cache:
        dg = geo.delta(geo.g)  # [s, j, k] = delta_k g_sj
        low = dg - dg.transpose(2, 0, 1) + dg.transpose(1, 2, 0)
        # low[s, j, k] = delta_k g_sj - delta_s g_jk + delta_j g_ks
        geo.cache["chern"] = symmetrize(0.5 * jets.einsum("is,sjk->ijk", geo.ginv, low), (1, 2))
    return geo.cache["chern"]


def compatible_S(geo: LocalGeometry, c: ConnectionParams, skip_zero: bool = True):
    """``S = sum_q kappa_q A^(q)`` (lowered)."""
    total = None
    for q, k in enumerate(c.kappas):
        if k == 0.0 and skip_zero:
            continue
        term = k * cartan_iterate(geo, q)
        total = term if total is None else total + term
    if total is None:
        total = 0.0 * geo.A
    return total


def S_tilde(geo: LocalGeometry, c: ConnectionParams):
    """The part of S beyond ``kappa_0 A``."""
    return compatible_S(geo, ConnectionParams((0.0,) + c.kappas[1:], c.r))


def horizontal_coefficients(geo: LocalGeometry, c: ConnectionParams) -> jets.JetArray:
    key = ("Gamma", c.kappas)
    if key not in geo.cache:
        shift = ConnectionParams((c.kappas[0] - 1.0,) + c.kappas[1:], c.r)
        geo.cache[key] = chern_coefficients(geo) + geo.raise_first(compatible_S(geo, shift))
    return geo.cache[key]


def vertical_jet(geo: LocalGeometry, c: ConnectionParams) -> jets.JetArray:
    return c.r * geo.C


def natural_coefficients(geo: LocalGeometry, c: ConnectionParams) -> jets.JetArray:
    gam = horizontal_coefficients(geo, c)
    return gam + jets.einsum("si,kjs->kij", geo.N, vertical_jet(geo, c))


def berwald_spray_coefficients(geo: LocalGeometry) -> jets.JetArray:
    """Classical Berwald coefficients ``d N^i_j / d y^k``."""
    return symmetrize(geo.dy(geo.N), (1, 2))


def chern_gamma_formula(geo: LocalGeometry) -> jets.JetArray:
    """Chern coefficients from ``gamma`` and ``C`` without horizontal derivatives."""
    Clow = geo.lower_first(geo.C)  # C_sjm
    t1 = jets.einsum("sjm,mk->sjk", Clow, geo.N)
    t2 = jets.einsum("jkm,ms->sjk", Clow, geo.N)
    t3 = jets.einsum("ksm,mj->sjk", Clow, geo.N)
    return geo.gamma - jets.einsum("is,sjk->ijk", geo.ginv, t1 - t2 + t3)


def preset_coefficients(geo: LocalGeometry, name: str):
    """Independent closed forms for each named connection: ``(Gamma, V)``.

    Berwald-based presets use the spray; the others use the ``gamma``
    formula, so neither shares code with :func:`horizontal_coefficients`.
    """
    zero = 0.0 * geo.C
    if name == "berwald":
        return berwald_spray_coefficients(geo), zero
    if name == "chern":
        return chern_gamma_formula(geo), zero
    if name == "cartan":
        return chern_gamma_formula(geo), geo.C
    if name == "hashiguchi":
        return berwald_spray_coefficients(geo), geo.C
    if name == "shen":
        return chern_gamma_formula(geo) - geo.raise_first(geo.A), zero
    raise ConfigError(f"unknown preset {name!r}", "connection.preset")


# -- covariant derivatives on jets ------------------------------------------

_LETTERS = "abcdefgh"


def _slot_terms(t, coeffs, upper: Sequence[int]):
    """``sum_slots (+/-) coeffs`` contraction; coeffs is ``[out, dir, in]``."""
    nd = t.ndim
    idx = _LETTERS[:nd]
    total = None
    for a in range(nd):
        if a in upper:
            src = idx[:a] + "m" + idx[a + 1:]
            term = jets.einsum(f"{src},{idx[a]}zm->{idx}z", t, coeffs)
        else:
            src = idx[:a] + "m" + idx[a + 1:]
            term = -jets.einsum(f"{src},mz{idx[a]}->{idx}z", t, coeffs)
        total = term if total is None else total + term
    return total


def h_cov(geo: LocalGeometry, c: ConnectionParams, t, upper: Sequence[int] = ()):
    """Horizontal covariant derivative; the new slot is appended last."""
    out = geo.delta(t)
    if t.ndim:
        out = out + _slot_terms(t, horizontal_coefficients(geo, c), upper)
    return out


def v_cov(geo: LocalGeometry, c: ConnectionParams, t, upper: Sequence[int] = ()):
    """Vertical covariant derivative along ``F d/dy``; new slot appended last."""
    out = geo.F * geo.dy(t)
    if t.ndim and c.r != 0.0:
        out = out + geo.F * _slot_terms(t, vertical_jet(geo, c), upper)
    return out


# ---------------------------------------------------------------------------
# named fields

FIELD_COST = {"F": 0, "F2": 0, "ell": 1, "ell_low": 1, "g": 2, "A": 3, "C": 3, "N": 3}


def _field(geo: LocalGeometry, field):
    if callable(field):
        return field(geo)
    if field in ("A1", "A2", "A3", "Adot", "Addot", "Adddot"):
        q = {"A1": 1, "Adot": 1, "A2": 2, "Addot": 2, "A3": 3, "Adddot": 3}[field]
        return cartan_iterate(geo, q)
    if field == "C":
        return geo.C
    return getattr(geo, field)


def _field_cost(field) -> int:
    if callable(field):
        return getattr(field, "cost", 3)
    if field in ("A1", "Adot"):
        return 4
    if field in ("A2", "Addot"):
        return 5
    if field in ("A3", "Adddot"):
        return 6
    return FIELD_COST[field]


FieldSpec = Union[str, Callable[[LocalGeometry], jets.JetArray]]


# ---------------------------------------------------------------------------
# public pointwise operations


@dataclass
class ConnectionCoefficients:
    """N (1-homogeneous), Gamma (0-homogeneous) and V (-1-homogeneous)."""

    N: TensorBlock
    Gamma: TensorBlock
    V: TensorBlock
    Gamma_natural: TensorBlock
    params: ConnectionParams = field(default_factory=ConnectionParams)


def formal_christoffel(m: MetricInstance, p: TangentPoint) -> TensorBlock:
    geo = LocalGeometry(m, p, 3)
    return TensorBlock(symmetrize(geo.gamma.value, (1, 2)), ((1, 2),), 0, "gamma")


def nonlinear_connection(m: MetricInstance, p: TangentPoint) -> TensorBlock:
    geo = LocalGeometry(m, p, 3)
    return TensorBlock(geo.N.value, (), 1, "N")


def spray_nonlinear_connection(m: MetricInstance, p: TangentPoint) -> TensorBlock:
    """``dG^i/dy^j`` from the spray formula; oracle for :func:`nonlinear_connection`."""
    geo = LocalGeometry(m, p, 3)
    return TensorBlock(geo.dy(geo.spray).value, (), 1, "N_spray")


def delta_derivative(m: MetricInstance, p: TangentPoint, field: FieldSpec) -> TensorBlock:
    """``delta/delta x^j`` of a tensor field; the derivative slot is last."""
    geo = LocalGeometry(m, p, max(3, _field_cost(field) + 1))
    return TensorBlock(geo.delta(jets.as_jet(_field(geo, field), 2 * m.dim, geo.order)).value, (), None, "delta")


def christoffel(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> ConnectionCoefficients:
    geo = LocalGeometry(m, p, required_order(c))
    return coefficients_from_geometry(geo, c)


def coefficients_from_geometry(geo: LocalGeometry, c: ConnectionParams) -> ConnectionCoefficients:
    return ConnectionCoefficients(
        N=TensorBlock(geo.N.value, (), 1, "N"),
        Gamma=TensorBlock(horizontal_coefficients(geo, c).value, ((1, 2),), 0, "Gamma"),
        V=TensorBlock(vertical_jet(geo, c).value, ((1, 2),), -1, "V"),
        Gamma_natural=TensorBlock(natural_coefficients(geo, c).value, (), 0, "Gamma_natural"),
        params=c,
    )


def vertical_coefficients(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> TensorBlock:
    geo = LocalGeometry(m, p, 3)
    return TensorBlock(vertical_jet(geo, c).value, ((1, 2),), -1, "V")


def h_cov_deriv(
    m: MetricInstance, p: TangentPoint, c: ConnectionParams, field: FieldSpec, upper: Sequence[int] = ()
) -> TensorBlock:
    """The ``|`` derivative of a named or callable tensor field."""
    k = max(required_order(c, 1), _field_cost(field) + 1)
    geo = LocalGeometry(m, p, k)
    return TensorBlock(h_cov(geo, c, _field(geo, field), upper).value, (), None, "h_cov")


def v_cov_deriv(
    m: MetricInstance, p: TangentPoint, c: ConnectionParams, field: FieldSpec, upper: Sequence[int] = ()
) -> TensorBlock:
    """The ``.`` derivative of a named or callable tensor field."""
    k = max(3, _field_cost(field) + 1)
    geo = LocalGeometry(m, p, k)
    return TensorBlock(v_cov(geo, c, _field(geo, field), upper).value, (), None, "v_cov")


def iterated_cartan(m: MetricInstance, p: TangentPoint, q: int, method: str = "jet", **kwargs) -> TensorBlock:
    """``A^(q)`` for ``q <= 3``.

    ``method="jet"`` evaluates the defining recursion exactly on jets;
    ``method="transport"`` differentiates ``A`` in time along the geodesic
    through ``p`` on a parallel frame (see :mod:`finslerconn.geodesics`).
    """
    if not 0 <= q <= MAX_KAPPA_INDEX:
        raise OrderExceededError(f"q must lie in 0..{MAX_KAPPA_INDEX}")
    if method == "jet":
        geo = LocalGeometry(m, p, 3 + q)
        return TensorBlock(cartan_iterate(geo, q).value, ((0, 1, 2),), 0, f"A^({q})")
    if method == "transport":
        from .geodesics import transported_cartan_derivative

        return TensorBlock(transported_cartan_derivative(m, p, q, **kwargs), ((0, 1, 2),), 0, f"A^({q})")
    raise ValueError(f"unknown method {method!r}")
