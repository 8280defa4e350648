"""Christoffel symbols, Riemann tensor, and Ricci scalar at points.

Conventions (signature +---):

    Gamma^a_mn = 1/2 g^ab (d_m g_bn + d_n g_bm - d_b g_mn)
    R^a_mbn    = d_b Gamma^a_mn - d_n Gamma^a_mb
                 + Gamma^a_bl Gamma^l_mn - Gamma^a_nl Gamma^l_mb
    R_mn = R^a_man ,   R = g^mn R_mn

Under these conventions flat spacetime in any coordinates (including
accelerated and rotating frames) has R = 0, and a 2-sphere embedded as a
static spatial factor has R = -2/a^2: the massless wave equation with the
conformal coupling R/6 subtracted is then conformally invariant, which is
the property the operator pipeline tests end to end.

Derivatives of the Christoffels are obtained by differentiating the
Christoffel formula itself against the exact metric jets (second metric
derivatives enter); no finite differences anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import Metric, at_points


@dataclass
class CurvaturePoint:
    """Curvature data batched over points (leading axis P)."""

    points: np.ndarray
    christoffel: np.ndarray   # (P,4,4,4)  Gamma^a_{mn}, symmetric in (m,n)
    riemann: np.ndarray       # (P,4,4,4,4) R^a_{mbn}
    ricci: np.ndarray         # (P,4,4)
    scalar: np.ndarray        # (P,)

    def antisymmetry_defect(self):
        """max |R^a_mbn + R^a_mnb| (exact antisymmetry in the last pair)."""
        s = self.riemann + np.swapaxes(self.riemann, -1, -2)
        return np.max(np.abs(s), axis=(1, 2, 3, 4))

    def first_bianchi_defect(self):
        """max |R^a_[mbn]| over the cyclic sum of the three lower slots."""
        r = self.riemann
        cyc = (r + np.transpose(r, (0, 1, 3, 4, 2))
               + np.transpose(r, (0, 1, 4, 2, 3)))
        return np.max(np.abs(cyc), axis=(1, 2, 3, 4))


def _christoffel_arrays(mp):
    g_up = mp.g_up_jet.value
    dg = mp.g_lo_jet.grad  # (4s,P,4,4)
    # bracket_{m,n,b} = d_m g_bn + d_n g_bm - d_b g_mn  -> (P,b,m,n)
    br = (np.einsum("mpbn->pbmn", dg) + np.einsum("npbm->pbmn", dg)
          - np.einsum("bpmn->pbmn", dg))
    gamma = 0.5 * np.einsum("pab,pbmn->pamn", g_up, br)
    return gamma, br


def christoffel(m: Metric, points) -> np.ndarray:
    """Gamma^a_{mn} at a batch of points, shape (P,4,4,4)."""
    mp = at_points(m, points, depth=1)
    gamma, _ = _christoffel_arrays(mp)
    return gamma


def curvature(m: Metric, points) -> CurvaturePoint:
    """Full curvature data (Christoffel, Riemann, Ricci, scalar)."""
    mp = at_points(m, points, depth=2)
    gamma, br = _christoffel_arrays(mp)

    g_up = mp.g_up_jet.value
    dg_up = mp.g_up_jet.grad       # (4s,P,4,4)
    dg = mp.g_lo_jet.grad          # (4s,P,4,4)
    d2g = mp.g_lo_jet.hess         # (4s,4t,P,4,4)

    # d_s Gamma^a_mn = 1/2 d_s g^ab * bracket_bmn + 1/2 g^ab d_s bracket_bmn
    dbr = (np.einsum("smpbn->spbmn", d2g) + np.einsum("snpbm->spbmn", d2g)
           - np.einsum("sbpmn->spbmn", d2g))
    dgamma = (0.5 * np.einsum("spab,pbmn->spamn", dg_up, br)
              + 0.5 * np.einsum("pab,spbmn->spamn", g_up, dbr))

    # R^a_mbn = d_b Gamma^a_mn - d_n Gamma^a_mb + G^a_bl G^l_mn - G^a_nl G^l_mb
    riem = (np.einsum("bpamn->pambn", dgamma)
            - np.einsum("npamb->pambn", dgamma)
            + np.einsum("pabl,plmn->pambn", gamma, gamma)
            - np.einsum("panl,plmb->pambn", gamma, gamma))

    ricci = np.einsum("paman->pmn", riem)
    scalar = np.einsum("pmn,pmn->p", g_up, ricci)
    return CurvaturePoint(mp.points, gamma, riem, ricci, scalar)


def ricci_scalar(m: Metric, points) -> np.ndarray:
    """Scalar curvature R at a batch of points, shape (P,)."""
    return curvature(m, points).scalar
