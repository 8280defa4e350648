"""Spacetime metrics as expression-valued symmetric 4x4 fields.

Signature is (+---); coordinates (x0,x1,x2,x3) = (t,x,y,z).  Only the ten
independent covariant components are stored.  Contravariant components and
all derived pointwise quantities (determinant, the pseudo-Hermitizing weight
f = sqrt(g^00 sqrt(-g)), the reduced spatial metric G^ij = g^ij -
g^0i g^0j / g^00, and Gamma^i = sqrt(-g) g^0i) are computed numerically at
evaluation points, with exact first/second derivatives propagated through
the matrix-inverse differential identity d(g^-1) = -g^-1 dg g^-1.

Provided families: general static diagonal metrics ds^2 = V^2 dt^2 -
W^2 dr.dr, stationary rotating isotropic metrics with shift K = Omega x r,
the spatially isotropic approximation of a rotating (Kerr-type) source, its
weak-field Lense-Thirring limit, uniformly accelerated/rotating observer
frames, conformal rescalings g -> O^-2 g, and fully custom components.
Internal units are geometric, c = G = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import expr as ex
from .errors import ConfigError, DomainError, SignatureError, SingularMetric
from .jets import PACK_INDEX, Jet2

# component storage order: (0,0),(0,1),(0,2),(0,3),(1,1),...,(3,3)
COMP_INDEX = PACK_INDEX
COMP_POS = {ij: k for k, ij in enumerate(COMP_INDEX)}

_ZERO = ex.Num(0.0)
_X, _Y, _Z = ex.Var("x"), ex.Var("y"), ex.Var("z")


def _as_expr(v) -> ex.Expr:
    if isinstance(v, ex.Expr):
        return v
    if isinstance(v, str):
        return ex.parse(v)
    return ex.Num(float(v))


def _require_stationary(name: str, e: ex.Expr):
    if e.uses_coordinate("t"):
        raise ConfigError(f"{name} must not depend on t (stationary family)")


def _default_check_points(r_min):
    base = 1.0 if r_min is None else float(r_min)
    radii = [1.6 * base, 3.1 * base, 9.7 * base]
    dirs = np.array([[0.3, 0.5, 0.81], [-0.6, 0.64, 0.48], [0.72, -0.4, 0.56]])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return tuple((0.0, *(rho * d)) for rho, d in zip(radii, dirs))


@dataclass(frozen=True)
class Metric:
    """Immutable Expr-valued metric; evaluation is pure and thread-safe."""

    components: tuple  # ten Expr, COMP_INDEX order
    params: Mapping = field(default_factory=dict)
    check_points: tuple = ()
    family: str = "custom"
    family_data: Mapping | None = None
    r_min: float | None = None

    def component(self, mu: int, nu: int) -> ex.Expr:
        if mu > nu:
            mu, nu = nu, mu
        return self.components[COMP_POS[(mu, nu)]]

    def with_params(self, extra: Mapping) -> "Metric":
        merged = dict(self.params)
        merged.update(extra)
        return Metric(self.components, merged, self.check_points,
                      self.family, self.family_data, self.r_min)

    def validate_signature(self):
        """Run the signature checks at the declared check points."""
        if self.check_points:
            at_points(self, np.asarray(self.check_points, dtype=float), depth=0)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def _build(components, params, check_points, family, family_data, r_min):
    cps = _default_check_points(r_min) if check_points is None else tuple(
        tuple(float(c) for c in p) for p in check_points)
    m = Metric(tuple(components), dict(params or {}), cps, family,
               family_data, r_min)
    m.validate_signature()
    return m


def static_diagonal(V, W, *, params=None, check_points=None, r_min=None) -> Metric:
    """ds^2 = V^2 dt^2 - W^2 (dx^2+dy^2+dz^2) with spatial V, W."""
    V, W = _as_expr(V), _as_expr(W)
    _require_stationary("V", V)
    _require_stationary("W", W)
    comps = [_ZERO] * 10
    comps[COMP_POS[(0, 0)]] = V * V
    mWW = -(W * W)
    for i in (1, 2, 3):
        comps[COMP_POS[(i, i)]] = mWW
    return _build(comps, params, check_points, "static",
                  {"V": V, "W": W, "omega": None}, r_min)


def rotating_isotropic(V, W, omega, *, params=None, check_points=None,
                       r_min=None, family="rotating-isotropic") -> Metric:
    """Stationary metric with shift K = Omega x r and isotropic 3-space.

    Expands ds^2 = V^2 dt^2 - W^2 delta_ij (dx^i - K^i dt)(dx^j - K^j dt)
    into covariant components g_00 = V^2 - W^2 |K|^2, g_0i = W^2 K^i,
    g_ij = -W^2 delta_ij.  ``omega`` is a 3-tuple of expressions.
    """
    V, W = _as_expr(V), _as_expr(W)
    ox, oy, oz = (_as_expr(c) for c in omega)
    for name, e in (("V", V), ("W", W), ("Omega_x", ox), ("Omega_y", oy),
                    ("Omega_z", oz)):
        _require_stationary(name, e)
    kx = oy * _Z - oz * _Y
    ky = oz * _X - ox * _Z
    kz = ox * _Y - oy * _X
    ww = W * W
    comps = [_ZERO] * 10
    comps[COMP_POS[(0, 0)]] = V * V - ww * (kx * kx + ky * ky + kz * kz)
    for i, k in zip((1, 2, 3), (kx, ky, kz)):
        comps[COMP_POS[(0, i)]] = ww * k
        comps[COMP_POS[(i, i)]] = -ww
    return _build(comps, params, check_points, family,
                  {"V": V, "W": W, "omega": (ox, oy, oz)}, r_min)


def kerr_isotropic(M: float, a_spin: float, truncation_order: str = "full"):
    """Spatially isotropic approximation of the field of a rotating source.

    Returns the profile expressions (V, W, omega) with kappa_pm = 1 +- mu/(2r):
    V = kappa_-/kappa_+, W = kappa_+^2, and the dragging rate omega(r) =
    (2 mu a / r^3)(1 - 3 mu/r + 21 mu^2/(4 r^2)), truncated to the leading
    1/r^3 term when ``truncation_order`` is "leading".  Geometric units:
    mu = M and a = J/M; spin is along z.  For a_spin = 0 this is the exact
    isotropic Schwarzschild solution.
    """
    if M <= 0:
        raise ConfigError("M must be positive")
    if truncation_order not in ("leading", "full"):
        raise ConfigError("truncation_order must be 'leading' or 'full'")
    mu = ex.Num(float(M))
    r = ex.Var("r")
    half = mu / (2.0 * r)
    kp = 1.0 + half
    km = 1.0 - half
    V = km / kp
    W = kp * kp
    omega = 2.0 * mu * float(a_spin) / r**3
    if truncation_order == "full" and a_spin != 0.0:
        omega = omega * (1.0 - 3.0 * mu / r + 21.0 * (mu * mu) / (4.0 * r**2))
    return V, W, omega


def kerr_metric(M: float, a_spin: float, truncation_order: str = "full",
                **kw) -> Metric:
    V, W, omega = kerr_isotropic(M, a_spin, truncation_order)
    kw.setdefault("r_min", float(M))
    return rotating_isotropic(V, W, (_ZERO, _ZERO, omega), family="kerr", **kw)


def lense_thirring(M: float, J: float, **kw) -> Metric:
    """Weak-field rotating source: V = 1 - M/r, W = 1 + M/r, Omega = 2J/r^3 z."""
    r = ex.Var("r")
    V = 1.0 - float(M) / r
    W = 1.0 + float(M) / r
    omega_z = 2.0 * float(J) / r**3
    kw.setdefault("r_min", float(M))
    return rotating_isotropic(V, W, (_ZERO, _ZERO, omega_z),
                              family="lense-thirring", **kw)


def noninertial(accel=(0.0, 0.0, 0.0), rotation=(0.0, 0.0, 0.0), **kw) -> Metric:
    """Frame of a uniformly accelerated, rotating observer (flat spacetime).

    V = 1 + a.r, W = 1, Omega = -o for observer acceleration a and rotation o.
    """
    ax, ay, az = (float(c) for c in accel)
    V = 1.0 + ax * _X + ay * _Y + az * _Z
    omega = tuple(ex.Num(-float(c)) for c in rotation)
    kw.setdefault("check_points", _default_check_points(0.05))
    return rotating_isotropic(V, ex.Num(1.0), omega, family="noninertial", **kw)


def rotate_to_frame(m: Metric, o) -> Metric:
    """Pass to a frame rotating with angular velocity o: Omega -> Omega - o.

    Only meaningful for metrics of the rotating-isotropic family (for an
    observer bound to a body of moment of inertia I, o = J/I).
    """
    if not (m.family_data and m.family_data.get("omega") is not None):
        raise TypeError("rotate_to_frame requires a rotating-isotropic metric")
    fd = m.family_data
    new_omega = tuple(c - ex.Num(float(oc)) for c, oc in zip(fd["omega"], o))
    return rotating_isotropic(fd["V"], fd["W"], new_omega, params=m.params,
                              check_points=m.check_points, r_min=m.r_min,
                              family=m.family)


def conformal(m: Metric, O) -> Metric:
    """Conformally rescaled metric O^-2 g (O must be positive)."""
    O = _as_expr(O)
    if m.check_points:
        vals = ex.eval_value(O, np.asarray(m.check_points, dtype=float), m.params)
        if np.any(vals <= 0.0):
            raise DomainError("conformal factor is not positive at a check point")
    inv2 = O * O
    comps = tuple(c / inv2 for c in m.components)
    fd = None
    if m.family_data:
        fd = dict(m.family_data)
        fd["V"] = fd["V"] / O
        fd["W"] = fd["W"] / O
    return Metric(comps, dict(m.params), m.check_points, m.family, fd, m.r_min)


def custom_metric(components: Mapping, *, params=None, check_points=None,
                  r_min=None) -> Metric:
    """Metric from explicit components {(mu,nu): Expr or text}, mu <= nu."""
    comps = [_ZERO] * 10
    for key, val in components.items():
        mu, nu = (int(k) for k in key) if not isinstance(key, str) else (
            int(key[1]), int(key[2]))
        if mu > nu:
            mu, nu = nu, mu
        comps[COMP_POS[(mu, nu)]] = _as_expr(val)
    return _build(comps, params, check_points, "custom", None, r_min)


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------

@dataclass
class TensorJet:
    """Value with optional first/second coordinate derivatives.

    ``value`` has shape (P, ...); ``grad`` prepends one axis of length 4,
    ``hess`` two (full symmetric storage, unlike the packed Jet2).
    """

    value: np.ndarray
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None

    @staticmethod
    def from_jet2(j: Jet2) -> "TensorJet":
        return TensorJet(j.value, j.grad,
                         None if j.hess is None else j.hess_full())


@dataclass
class MetricPoint:
    """All pointwise metric data needed by the operator pipeline.

    Arrays are batched over the evaluation points (leading axis P).  The
    short attributes are values; ``*_jet`` carry derivatives as deep as the
    requested ``derivative_depth``.
    """

    points: np.ndarray
    depth: int
    g_lo_jet: TensorJet
    g_up_jet: TensorJet
    det_jet: TensorJet
    sqrt_neg_g_jet: TensorJet
    f_jet: TensorJet
    finv_jet: TensorJet
    G_up_jet: TensorJet      # (P,3,3)
    Gamma_vec_jet: TensorJet  # (P,3)
    drag_vec_jet: TensorJet   # g^{0i}/g^{00}, (P,3)

    @property
    def g_lo(self):
        return self.g_lo_jet.value

    @property
    def g_up(self):
        return self.g_up_jet.value

    @property
    def det(self):
        return self.det_jet.value

    @property
    def sqrt_neg_g(self):
        return self.sqrt_neg_g_jet.value

    @property
    def f(self):
        return self.f_jet.value

    @property
    def G_up(self):
        return self.G_up_jet.value

    @property
    def Gamma_vec(self):
        return self.Gamma_vec_jet.value

    @property
    def drag_vec(self):
        return self.drag_vec_jet.value


def _scalar_jet_from_slice(value, grad, hess):
    return TensorJet(value, grad, hess)


def at_points(m: Metric, points, depth: int = 2, validate: bool = True) -> MetricPoint:
    """Evaluate the metric and its derived quantities at a batch of points.

    ``points``: array (P, 4) of (t,x,y,z).  ``depth``: 0 values only,
    1 adds gradients, 2 adds Hessians.  Raises SignatureError / SingularMetric
    when the (+---) signature checks fail.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 4:
        raise ValueError("points must have shape (P, 4)")
    P = pts.shape[0]

    comp_jets = [ex.eval_jet2(c, pts, m.params, order=depth)
                 for c in m.components]

    g = np.zeros((P, 4, 4))
    for k, (mu, nu) in enumerate(COMP_INDEX):
        g[:, mu, nu] = comp_jets[k].value
        g[:, nu, mu] = comp_jets[k].value

    det = np.linalg.det(g)
    if validate and np.any(np.abs(det) < 1e-14):
        raise SingularMetric("|det g| < 1e-14 at an evaluation point")
    if validate and np.any(det >= 0.0):
        raise SignatureError("det g must be negative (signature +---)")
    ginv = np.linalg.inv(g)
    g00_up = ginv[:, 0, 0]
    if validate and np.any(g00_up <= 0.0):
        raise SignatureError("g^00 must be positive (signature +---)")

    # G^ij = g^ij - g^0i g^0j / g^00 ; -G must be positive definite
    Gup = ginv[:, 1:, 1:] - (ginv[:, 0, 1:, None] * ginv[:, 0, None, 1:]
                             / g00_up[:, None, None])
    if validate:
        eig = np.linalg.eigvalsh(-Gup)
        if np.any(eig <= 0.0):
            raise SignatureError("-G^ij is not positive definite")

    dg = d2g = None
    if depth >= 1:
        dg = np.zeros((4, P, 4, 4))
        for k, (mu, nu) in enumerate(COMP_INDEX):
            dg[:, :, mu, nu] = comp_jets[k].grad
            dg[:, :, nu, mu] = comp_jets[k].grad
    if depth >= 2:
        d2g = np.zeros((4, 4, P, 4, 4))
        for k, (mu, nu) in enumerate(COMP_INDEX):
            full = comp_jets[k].hess_full()
            d2g[:, :, :, mu, nu] = full
            d2g[:, :, :, nu, mu] = full

    dginv = d2ginv = None
    ddet = d2det = None
    if depth >= 1:
        # d(g^-1) = -g^-1 dg g^-1 ; d(det) = det tr(g^-1 dg)
        dginv = -np.einsum("pab,spbc,pcd->spad", ginv, dg, ginv)
        tr1 = np.einsum("pab,spba->sp", ginv, dg)
        ddet = det * tr1
    if depth >= 2:
        A = np.einsum("pab,spbc->spac", ginv, dg)        # g^-1 dg
        d2ginv = (-np.einsum("pab,stpbc,pcd->stpad", ginv, d2g, ginv)
                  + np.einsum("spab,tpbc,pcd->stpad", A, A, ginv)
                  + np.einsum("tpab,spbc,pcd->stpad", A, A, ginv))
        tr2 = np.einsum("pab,stpba->stp", ginv, d2g)
        trAA = np.einsum("spab,tpba->stp", A, A)
        d2det = det * (tr1[:, None, :] * tr1[None, :, :] + tr2 - trAA)

    # scalar composites via packed-jet arithmetic
    def as_jet2(value, grad, hess_full):
        hess = None
        if hess_full is not None:
            hess = np.stack([hess_full[i, j] for i, j in PACK_INDEX])
        return Jet2(value, grad, hess)

    det_j2 = as_jet2(det, ddet, d2det)
    sqrt_neg_g_j2 = (-det_j2).sqrt()
    g00_j2 = as_jet2(g00_up,
                     None if depth < 1 else dginv[:, :, 0, 0],
                     None if depth < 2 else d2ginv[:, :, :, 0, 0])
    f_j2 = (g00_j2 * sqrt_neg_g_j2).sqrt()
    finv_j2 = f_j2.reciprocal()

    # vector/tensor composites (spatial indices)
    g0i_j2 = [as_jet2(ginv[:, 0, i],
                      None if depth < 1 else dginv[:, :, 0, i],
                      None if depth < 2 else d2ginv[:, :, :, 0, i])
              for i in (1, 2, 3)]
    gij_j2 = {}
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            if i <= j:
                gij_j2[(i, j)] = as_jet2(
                    ginv[:, i, j],
                    None if depth < 1 else dginv[:, :, i, j],
                    None if depth < 2 else d2ginv[:, :, :, i, j])

    drag_j2 = [gi / g00_j2 for gi in g0i_j2]
    Gup_j2 = {}
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            if i <= j:
                Gup_j2[(i, j)] = gij_j2[(i, j)] - g0i_j2[i - 1] * g0i_j2[j - 1] / g00_j2
    Gamma_j2 = [sqrt_neg_g_j2 * gi for gi in g0i_j2]

    def stack_vec(jets):
        value = np.stack([j.value for j in jets], axis=-1)
        grad = hess = None
        if depth >= 1:
            grad = np.stack([j.grad for j in jets], axis=-1)
        if depth >= 2:
            hess = np.stack([j.hess_full() for j in jets], axis=-1)
        return TensorJet(value, grad, hess)

    def stack_mat3(jets):
        value = np.zeros((P, 3, 3))
        grad = np.zeros((4, P, 3, 3)) if depth >= 1 else None
        hess = np.zeros((4, 4, P, 3, 3)) if depth >= 2 else None
        for (i, j), jet in jets.items():
            value[:, i - 1, j - 1] = jet.value
            value[:, j - 1, i - 1] = jet.value
            if depth >= 1:
                grad[:, :, i - 1, j - 1] = jet.grad
                grad[:, :, j - 1, i - 1] = jet.grad
            if depth >= 2:
                hf = jet.hess_full()
                hess[:, :, :, i - 1, j - 1] = hf
                hess[:, :, :, j - 1, i - 1] = hf
        return TensorJet(value, grad, hess)

    return MetricPoint(
        points=pts,
        depth=depth,
        g_lo_jet=TensorJet(g, dg, d2g),
        g_up_jet=TensorJet(ginv, dginv, d2ginv),
        det_jet=TensorJet(det, ddet, d2det),
        sqrt_neg_g_jet=TensorJet.from_jet2(sqrt_neg_g_j2),
        f_jet=TensorJet.from_jet2(f_j2),
        finv_jet=TensorJet.from_jet2(finv_j2),
        G_up_jet=stack_mat3(Gup_j2),
        Gamma_vec_jet=stack_vec(Gamma_j2),
        drag_vec_jet=stack_vec(drag_j2),
    )


def at_point(m: Metric, point, derivative_depth: int = 2,
             validate: bool = True) -> MetricPoint:
    """Single-point convenience wrapper (batch of one)."""
    return at_points(m, np.asarray(point, dtype=float)[None, :],
                     depth=derivative_depth, validate=validate)
