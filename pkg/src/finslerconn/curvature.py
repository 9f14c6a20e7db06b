"""hh-, hv- and vv-curvature of family connections, and identity residuals.

Curvature is the commutator ``D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z`` on the
frames ``delta_k`` (horizontal) and ``F d/dy^l`` (vertical).  Mixed arrays
are stored as ``R[i, j, k, l] = R^i_{j kl}`` with ``i`` the output and ``j``
the input slot; lowered arrays are ``R_ijkl = g_sj R^s_{i kl}``.

Sign conventions fixed here (reported in every CLI header):

* ``Omega(delta_k, delta_l) d_j = R^i_{j kl} d_i`` with the commutator above,
  which gives flag curvature ``+1`` on the unit sphere;
* ``Omega(delta_k, F d/dy^l) d_j = P^i_{j kl} d_i``;
* ``Omega(F d/dy^k, F d/dy^l) d_j = Q^i_{j kl} d_i``;
* the reduced hv-curvature contracts the input slot with ``ell``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .connections import (
    ConnectionParams,
    S_tilde,
    cartan_iterate,
    h_cov,
    horizontal_coefficients,
    required_order,
    v_cov,
    vertical_jet,
)
from .diffengine import TangentPoint
from .errors import DegenerateFlagError
from .metrics import LocalGeometry, MetricInstance, TensorBlock

SIGN_CONVENTIONS = {
    "curvature": "Omega(X,Y)Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z",
    "frames": "horizontal delta_k = d/dx^k - N^m_k d/dy^m, vertical F d/dy^l",
    "index_order": "R[i,j,k,l] = R^i_{j kl} (i output, j input); R_ijkl = g_sj R^s_{i kl}",
    "reduced_hv": "P_jkl = ell^i P_ijkl",
    "cartan_tensor": "A_ijk = (F/4) d^3[F^2]/dy^i dy^j dy^k, C^i_jk = F^-1 g^im A_mjk",
    "metric_defect": "g_ij|k = 2((1-k0) A - k1 A' - k2 A'' - k3 A''')_ijk, g_ij.k = 2(1-r) A_ijk",
    "flag_curvature": "berwald preset hh-curvature",
}

DENOM_EPS = 1e-8


class CurvatureJets:
    """Jet-level R, P, Q for one connection at one point."""

    def __init__(self, geo: LocalGeometry, c: ConnectionParams):
        self.geo = geo
        self.c = c
        G = horizontal_coefficients(geo, c)  # [out, dir, in]
        V = vertical_jet(geo, c)
        F = geo.F
        N = geo.N
        dN = geo.delta(N)  # [m, k, l] = delta_l N^m_k
        xi = dN - dN.transpose(0, 2, 1)  # xi[m, k, l] = delta_l N^m_k - delta_k N^m_l
        dG = geo.delta(G)  # [j, l, i, k] = delta_k G[j, l, i]
        self.R = (
            dG.transpose(0, 2, 3, 1)
            - dG.transpose(0, 2, 1, 3)
            + jets.einsum("mli,jkm->jikl", G, G)
            - jets.einsum("mki,jlm->jikl", G, G)
            - jets.einsum("mkl,jmi->jikl", xi, V)
        )
        if self.c.r == 0.0:
            # V = 0 leaves only the y-derivative of Gamma
            self.P = -F * geo.dy(G).transpose(0, 2, 1, 3)
            self.Q = 0.0 * self.R
        else:
            FV = F * V
            dFV = geo.delta(FV)  # [j, l, i, k]
            dyG = geo.dy(G)  # [j, k, i, l]
            dyN = geo.dy(N)  # [a, k, l]
            self.P = (
                dFV.transpose(0, 2, 3, 1)
                + F * jets.einsum("mli,jkm->jikl", V, G)
                - F * dyG.transpose(0, 2, 1, 3)
                - F * jets.einsum("mki,jlm->jikl", G, V)
                - F * jets.einsum("akl,jai->jikl", dyN, V)
            )
            dyV = geo.dy(V)  # [j, l, i, k] = d V[j,l,i] / dy^k
            self.Q = (F * F) * (
                dyV.transpose(0, 2, 3, 1)
                - dyV.transpose(0, 2, 1, 3)
                + jets.einsum("mli,jkm->jikl", V, V)
                - jets.einsum("mki,jlm->jikl", V, V)
            )

    def lowered(self, t):
        return jets.einsum("sj,sikl->ijkl", self.geo.g, t)

    def reduced(self, t):
        """``ell^i T_ijkl`` on the lowered tensor."""
        return jets.einsum("i,ijkl->jkl", self.geo.ell, self.lowered(t))

    def pole(self, t):
        """``T^m_{n kl} = ell^j T^m_{j kl}`` (mixed, input slot on ell)."""
        return jets.einsum("j,mjkl->mkl", self.geo.ell, t)


@dataclass
class CurvatureBundle:
    R: TensorBlock
    P: TensorBlock
    Q: TensorBlock
    at: TangentPoint
    params: ConnectionParams

    def lowered(self, g):
        return {k: np.einsum("sj,sikl->ijkl", g, getattr(self, k).values) for k in ("R", "P", "Q")}


def curvature_order(c: ConnectionParams, extra: int = 0) -> int:
    return required_order(c, 1 + extra)


def curvature_jets(m: MetricInstance, p: TangentPoint, c: ConnectionParams, extra: int = 0) -> CurvatureJets:
    return CurvatureJets(LocalGeometry(m, p, curvature_order(c, extra)), c)


def curvature(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> CurvatureBundle:
    cj = curvature_jets(m, p, c)
    return CurvatureBundle(
        R=TensorBlock(cj.R.value, (), 0, "R"),
        P=TensorBlock(cj.P.value, (), 0, "P"),
        Q=TensorBlock(cj.Q.value, (), 0, "Q"),
        at=p,
        params=c,
    )


def reduced_hv(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> TensorBlock:
    """``P_jkl = ell^i P_ijkl``."""
    cj = curvature_jets(m, p, c)
    return TensorBlock(cj.reduced(cj.P).value, (), 0, "P_reduced")


def reduced_hv_expected(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> TensorBlock:
    """Closed form ``-A' + k1 A' + k2 A'' + k3 A'''`` for r in {0, 1}, k0 = 1."""
    geo = LocalGeometry(m, p, max(4, required_order(c)))
    return TensorBlock(reduced_hv_closed_form(geo, c), ((0, 1, 2),), 0, "P_reduced_closed_form")


def reduced_hv_closed_form(geo: LocalGeometry, c: ConnectionParams) -> np.ndarray:
    total = -cartan_iterate(geo, 1).value
    for q in range(1, 4):
        if c.kappas[q]:
            total = total + c.kappas[q] * cartan_iterate(geo, q).value
    return total


def flag_curvature(m: MetricInstance, p: TangentPoint, V) -> float:
    """Flag curvature ``K(y, V)`` from the Berwald hh-curvature."""
    V = np.asarray(V, dtype=float)
    cj = curvature_jets(m, p, ConnectionParams.preset("berwald"))
    g = cj.geo.g.value
    y = p.y
    denom = (y @ g @ y) * (V @ g @ V) - (y @ g @ V) ** 2
    scale = (y @ g @ y) * (V @ g @ V)
    if not denom > DENOM_EPS * scale:
        raise DegenerateFlagError(f"flag edge {V.tolist()} is (nearly) parallel to y")
    R = cj.lowered(cj.R).value  # R_ijkl = g_sj R^s_{i kl}
    # g(R(V, y) y, V): input slot y, output slot V, directions (V, y)
    num = np.einsum("i,j,ijkl,k,l->", y, V, R, V, y)
    return float(num / denom)


# ---------------------------------------------------------------------------
# identity residuals


def _maxabs(a) -> float:
    a = a.value if isinstance(a, jets.JetArray) else np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _is_cartan_type(c: ConnectionParams) -> bool:
    return c.kappas[0] == 1.0 and c.r == 1.0


def bianchi_residuals(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> dict:
    """Residuals of the hh, hv and vv Bianchi-type identities for Cartan-type connections.

    With ``B^i_jk = F C^i_jk = g^im A_mjk`` (the hv-torsion in the unit
    vertical frame) and ``T^m_{n kl} = ell^j T^m_{j kl}``:

    1. ``R^i_{j kl} + cyclic(jkl) = B^i_jm R^m_{n kl} + cyclic(jkl)``
    2. ``P^i_{j kl} - P^i_{k jl} = B^i_{jl|k} - B^i_{kl|j} + B^i_jr P^r_{n kl} - B^i_kr P^r_{n jl}``
    3. ``Q^i_{j kl} - Q^i_{j lk} = 2 F (C^i_{jk.l} - C^i_{jl.k}) + 2 (B^i_ml B^m_jk - B^i_mk B^m_jl)
       + B^i_jm (Q^m_{n kl} - Q^m_{n lk})``
    """
    if not _is_cartan_type(c):
        raise ValueError("Bianchi-type identities apply to Cartan-type parameters (kappa_0 = 1, r = 1)")
    return bianchi_from_jets(curvature_jets(m, p, c))


def bianchi_from_jets(cj: CurvatureJets) -> dict:
    geo, c = cj.geo, cj.c
    Bj = geo.raise_first(geo.A)
    B = Bj.value
    R, P, Q = cj.R.value, cj.P.value, cj.Q.value
    Rn, Pn, Qn = cj.pole(cj.R).value, cj.pole(cj.P).value, cj.pole(cj.Q).value

    def cyc(t):  # t[i, j, k, l] summed over cyclic (j, k, l)
        return t + t.transpose(0, 2, 3, 1) + t.transpose(0, 3, 1, 2)

    item1 = _maxabs(cyc(R) - cyc(np.einsum("ijm,mkl->ijkl", B, Rn)))

    Bh = h_cov(geo, c, Bj, upper=(0,)).value  # [i, j, l, k] = B^i_{jl|k}
    rhs2 = (
        Bh.transpose(0, 1, 3, 2)
        - Bh.transpose(0, 3, 1, 2)
        + np.einsum("ijr,rkl->ijkl", B, Pn)
        - np.einsum("ikr,rjl->ijkl", B, Pn)
    )
    item2 = _maxabs(P - P.transpose(0, 2, 1, 3) - rhs2)

    Cv = geo.F.value * v_cov(geo, c, geo.C, upper=(0,)).value  # [i, j, k, l] = F C^i_{jk.l}
    rhs3 = (
        2.0 * (Cv - Cv.transpose(0, 1, 3, 2))
        + 2.0 * (np.einsum("iml,mjk->ijkl", B, B) - np.einsum("imk,mjl->ijkl", B, B))
        + np.einsum("ijm,mkl->ijkl", B, Qn - Qn.transpose(0, 2, 1))
    )
    item3 = _maxabs(Q - Q.transpose(0, 1, 3, 2) - rhs3)
    return {"hh_cyclic": item1, "hv_exchange": item2, "vv_exchange": item3}


def symmetry_residuals(m: MetricInstance, p: TangentPoint, c: ConnectionParams) -> dict:
    """Residuals of the (i, j)-symmetrized curvature identities for Cartan-type parameters.

    ``R_ijkl + R_jikl = 2 (S~_ijl|k - S~_ijk|l)``,
    ``P_ijkl + P_jikl = -2 (S~_ijk.l + A^u_kl S~_uij)`` and
    ``Q_ijkl + Q_jikl = 0`` with ``S~ = k1 A' + k2 A'' + k3 A'''``.
    """
    if not _is_cartan_type(c):
        raise ValueError("symmetrized identities apply to Cartan-type parameters (kappa_0 = 1, r = 1)")
    return symmetry_from_jets(curvature_jets(m, p, c))


def symmetry_from_jets(cj: CurvatureJets) -> dict:
    geo, c = cj.geo, cj.c
    St = S_tilde(geo, c)
    Sh = h_cov(geo, c, St).value  # [i, j, k, l] = S~_ijk|l
    Sv = v_cov(geo, c, St).value  # S~_ijk.l
    Rl, Pl, Ql = cj.lowered(cj.R).value, cj.lowered(cj.P).value, cj.lowered(cj.Q).value
    Aup = geo.raise_first(geo.A).value
    r_hh = _maxabs(Rl + Rl.transpose(1, 0, 2, 3) - 2.0 * (Sh.transpose(0, 1, 3, 2) - Sh))
    r_hv = _maxabs(Pl + Pl.transpose(1, 0, 2, 3) + 2.0 * (Sv + np.einsum("ukl,uij->ijkl", Aup, St.value)))
    r_vv = _maxabs(Ql + Ql.transpose(1, 0, 2, 3))
    return {"hh_symmetrized": r_hh, "hv_symmetrized": r_hv, "vv_symmetrized": r_vv}
