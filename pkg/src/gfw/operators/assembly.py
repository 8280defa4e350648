"""Assembly of the wave-operator pieces on a grid.

The Hamiltonian pipeline works with two ingredients per (metric, grid):

* the symmetric "energy-squared" operator

      T = d_i (G^ij / g^00) d_j + (m^2 - lambda R)/g^00
          + (1/f) d_i(sqrt(-g) G^ij) d_j(1/f)
          + (sqrt(-g)/f) G^ij d_i d_j (1/f)
          + (div Gamma)^2 / (4 f^4)
          - div(g^0i/g^00) div(Gamma) / (2 f^2)
          - (g^0i / (2 g^00 f^2)) d_i div(Gamma),

  where every derivative in brackets is a pointwise multiplication field
  evaluated from exact metric jets, f = sqrt(g^00 sqrt(-g)), and
  Gamma^i = sqrt(-g) g^0i.  The square root of T is the energy operator of
  the block-diagonalized Hamiltonian.

* the Hermitian rotation (frame-drag) coupling

      C = -i/2 {d_i, g^0i/g^00},

  which for the rotating families reduces to Omega.(r x p); in an (l, m)
  sector it acts as multiplication by m * Omega(r).

Closed-form assemblies for the static diagonal family,

      T = m^2 V^2 + F p^2 F - (grad F)^2/4 + D_lambda(V, W),
      D_lambda = lambda F lap F
                 + (1 - 6 lambda) (V/(2W^2)) (F lap W + lap V),

with F = V/W, and for the rotating isotropic family (radial V, W, Omega),
which adds (lambda/2)(x^2+y^2) Omega'(r)^2, provide an independent route
used as a cross-oracle against the generic pipeline: the two
discretizations agree to O(h^2) and pin down, in particular, the sign and
normalization of the scalar-curvature coupling.

The generalized two-component Hamiltonian with free positive parameter N is

      H' = rho_3 (N^2 + T)/(2N) + i rho_2 (T - N^2)/(2N) + C,

rho_3-pseudo-Hermitian by construction; its physical spectrum does not
depend on N.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .. import expr as ex
from ..curvature import curvature
from ..errors import ConfigError, UnsupportedGrid
from ..metric import Metric, at_points
from .grids import (GridOperator, GridSpec, SectorBasis, ensure_symmetric,
                    cartesian_derivative, cartesian_flux_operator,
                    sector_flux_operator, sector_mult_operator)

ISOTROPY_TOL = 1e-10
AXISYM_TOL = 1e-10
RADIAL_TOL = 1e-11


@dataclass(frozen=True)
class Coupling:
    """Scalar-curvature coupling, mass, and the free two-component parameter.

    ``lam`` is kept as an exact rational so that the conformal point 1/6 is
    representable without rounding; the default is the conformal value.
    """

    lam: Fraction = Fraction(1, 6)
    mass: float = 0.0
    n_param: float = 1.0

    def __post_init__(self):
        if self.mass < 0:
            raise ConfigError("mass must be >= 0")
        if not self.n_param > 0:
            raise ConfigError("N must be a positive real number")

    @property
    def lam_float(self) -> float:
        return float(Fraction(self.lam))


def depends_only_on_r(e: ex.Expr) -> bool:
    """True when the expression uses no coordinate other than r."""
    return not any(_tree_uses_var(e, v) for v in ("t", "x", "y", "z"))


def _tree_uses_var(e, name):
    if isinstance(e, ex.Var):
        return e.name == name
    if isinstance(e, ex.Bin):
        return _tree_uses_var(e.lhs, name) or _tree_uses_var(e.rhs, name)
    if isinstance(e, ex.Pow):
        return _tree_uses_var(e.base, name)
    if isinstance(e, ex.Call):
        return _tree_uses_var(e.arg, name)
    return False


# ---------------------------------------------------------------------------
# pointwise fields entering T (generic pipeline)
# ---------------------------------------------------------------------------

def _isotropic_coefficient(mp, what):
    """G^ij/g^00 must be a multiple of delta^ij on sector grids."""
    A = mp.G_up_jet.value / mp.g_up_jet.value[:, 0, 0][:, None, None]
    alpha = np.trace(A, axis1=1, axis2=2) / 3.0
    defect = np.abs(A - alpha[:, None, None] * np.eye(3)).max()
    scale = np.abs(alpha).max() + 1e-300
    if defect > ISOTROPY_TOL * scale:
        raise UnsupportedGrid(
            f"{what}: G^ij/g^00 is anisotropic (defect {defect / scale:.2e}); "
            "use a cartesian-3d grid")
    return -alpha  # positive coefficient of the flux form


def _bracket_fields(mp):
    """Sum of the multiplication-operator terms of T except (m^2-lam R)/g^00."""
    sg = mp.sqrt_neg_g_jet
    f = mp.f_jet
    fi = mp.finv_jet
    G = mp.G_up_jet
    Gam = mp.Gamma_vec_jet
    c = mp.drag_vec_jet
    s = slice(1, 4)  # spatial derivative axes

    # (1/f) d_i(sqrt(-g) G^ij) d_j(1/f)
    d_sgG = (sg.grad[s, :, None, None] * G.value[None, :, :, :]
             + sg.value[None, :, None, None] * G.grad[s])
    b3 = fi.value * np.einsum("ipij,jp->p", d_sgG, fi.grad[s])

    # (sqrt(-g)/f) G^ij d_i d_j (1/f)
    b4 = (sg.value / f.value) * np.einsum(
        "pij,ijp->p", G.value, fi.hess[s, s])

    div_gamma = np.einsum("ipi->p", Gam.grad[s])
    div_c = np.einsum("ipi->p", c.grad[s])
    grad_div_gamma = np.einsum("ijpj->pi", Gam.hess[s, s])

    b5 = div_gamma**2 / (4.0 * f.value**4)
    b6 = -div_c * div_gamma / (2.0 * f.value**2)
    b7 = -np.einsum("pi,pi->p", c.value, grad_div_gamma) / (2.0 * f.value**2)
    return b3 + b4 + b5 + b6 + b7


def _mass_curvature_field(metric, pts, mp, coupling):
    g00 = mp.g_up_jet.value[:, 0, 0]
    out = coupling.mass**2 / g00
    if coupling.lam != 0:
        R = curvature(metric, pts).scalar
        out = out - coupling.lam_float * R / g00
    return out


def _check_axisymmetric(metric, grid):
    """Spot check that the metric is phi-independent (sector prerequisite)."""
    radii = np.array([grid.r_min + 0.37 * (grid.r_max - grid.r_min),
                      grid.r_min + 0.81 * (grid.r_max - grid.r_min)])
    thetas = np.array([0.6, 1.9])
    for phi in (0.0, 1.1, 2.7):
        pts = []
        for r in radii:
            for th in thetas:
                pts.append((0.0, r * np.sin(th) * np.cos(phi),
                            r * np.sin(th) * np.sin(phi), r * np.cos(th)))
        mp = at_points(metric, np.asarray(pts), depth=0, validate=False)
        # compare scalar invariants of the block decomposition across phi
        probe = np.stack([mp.g_up_jet.value[:, 0, 0], mp.det_jet.value,
                          np.trace(mp.G_up_jet.value, axis1=1, axis2=2),
                          np.einsum("pi,pi->p", mp.drag_vec, mp.drag_vec)])
        if phi == 0.0:
            ref = probe
        elif not np.allclose(probe, ref, rtol=AXISYM_TOL, atol=1e-13):
            raise UnsupportedGrid(
                "metric is not axisymmetric about z; use a cartesian-3d grid")


# ---------------------------------------------------------------------------
# generic pipeline
# ---------------------------------------------------------------------------

def assemble_energy_squared(metric: Metric, coupling: Coupling,
                            grid: GridSpec) -> GridOperator:
    """Discretize T from the exact general expression (any supported metric)."""
    if grid.kind == "radial-sector":
        return _energy_squared_sector(metric, coupling, grid)
    return _energy_squared_cartesian(metric, coupling, grid)


def _energy_squared_sector(metric, coupling, grid):
    _check_axisymmetric(metric, grid)
    basis = SectorBasis(grid)
    n, Q = grid.n_points, basis.mu.size

    pts_nodes = basis.sector_points(grid.nodes())
    pts_edges = basis.sector_points(grid.edges())
    mp_n = at_points(metric, pts_nodes, depth=2)
    mp_e = at_points(metric, pts_edges, depth=0)

    a_edges = _isotropic_coefficient(mp_e, "edge coefficient").reshape(n + 1, Q)
    a_nodes = _isotropic_coefficient(mp_n, "node coefficient").reshape(n, Q)
    b = (_bracket_fields(mp_n)
         + _mass_curvature_field(metric, pts_nodes, mp_n, coupling)).reshape(n, Q)

    K = sector_flux_operator(grid, basis, basis.project_mult(a_edges),
                             basis.project_grad(a_nodes))
    K = K + sector_mult_operator(grid, basis, basis.project_mult(b))
    K = ensure_symmetric(K, "energy-squared (sector)")
    return GridOperator(K, grid)


def _energy_squared_cartesian(metric, coupling, grid):
    pts = grid.cartesian_points()
    mp = at_points(metric, pts, depth=2)
    A = -(mp.G_up_jet.value
          / mp.g_up_jet.value[:, 0, 0][:, None, None])  # positive definite

    nx, ny, nz = grid.n_axis
    # diagonal coefficients at the edge midpoints of each axis
    coeff_edges = []
    xs, ys, zs = grid.axis_nodes()
    for axis, nodes1d in enumerate((xs, ys, zs)):
        (lo, hi) = grid.bounds[axis]
        mids = np.concatenate([[0.5 * (lo + nodes1d[0])],
                               0.5 * (nodes1d[1:] + nodes1d[:-1]),
                               [0.5 * (nodes1d[-1] + hi)]])
        grids1 = [xs, ys, zs]
        grids1[axis] = mids
        X, Y, Z = np.meshgrid(*grids1, indexing="ij")
        ptsm = np.column_stack([np.zeros(X.size), X.ravel(), Y.ravel(), Z.ravel()])
        mpm = at_points(metric, ptsm, depth=0)
        Am = -(mpm.G_up_jet.value[:, axis, axis]
               / mpm.g_up_jet.value[:, 0, 0])
        coeff_edges.append(Am.reshape(X.shape))

    K = cartesian_flux_operator(grid, coeff_edges)
    # mixed-derivative terms, symmetrized central differences
    for i in range(3):
        for j in range(i + 1, 3):
            cij = -A[:, i, j]  # d_i (A^ij) d_j with A = -coefficients
            if np.max(np.abs(cij)) > 0:
                Di = cartesian_derivative(grid, i)
                Dj = cartesian_derivative(grid, j)
                Cd = np.diag(cij)
                K += Di @ Cd @ Dj + Dj @ Cd @ Di
    b = _bracket_fields(mp) + _mass_curvature_field(metric, pts, mp, coupling)
    K = K + np.diag(b)
    K = ensure_symmetric(K, "energy-squared (cartesian)")
    return GridOperator(K, grid)


# ---------------------------------------------------------------------------
# rotation (frame-drag) coupling C = -i Upsilon'
# ---------------------------------------------------------------------------

def assemble_rotation_coupling(metric: Metric, grid: GridSpec) -> GridOperator:
    """Hermitian drag term; real multiplication by m*Omega(r,theta) on sectors."""
    if grid.kind == "cartesian-3d":
        pts = grid.cartesian_points()
        mp = at_points(metric, pts, depth=0)
        c = mp.drag_vec
        N = grid.size
        C = np.zeros((N, N), dtype=complex)
        for i in range(3):
            if np.max(np.abs(c[:, i])) == 0.0:
                continue
            D = cartesian_derivative(grid, i)
            Cd = np.diag(c[:, i])
            C += -0.5j * (D @ Cd + Cd @ D)
        return GridOperator(C, grid)

    basis = SectorBasis(grid)
    n, Q = grid.n_points, basis.mu.size
    pts = basis.sector_points(grid.nodes())
    mp = at_points(metric, pts, depth=1)
    c = mp.drag_vec  # at phi=0: x-z plane; phi direction is +y
    sin_t = np.tile(basis.sin_t, n)
    mu = np.tile(basis.mu, n)
    r = np.repeat(grid.nodes(), Q)
    c_r = c[:, 0] * sin_t + c[:, 2] * mu
    c_th = c[:, 0] * mu - c[:, 2] * sin_t
    scale = np.max(np.abs(c)) + 1e-300
    if max(np.max(np.abs(c_r)), np.max(np.abs(c_th))) > 1e-10 * scale:
        raise UnsupportedGrid(
            "shift g^0i/g^00 has non-azimuthal components; the sector basis "
            "cannot represent the drag term (use a cartesian-3d grid)")
    div_c = np.einsum("ipi->p", mp.drag_vec_jet.grad[1:4])
    if np.max(np.abs(div_c)) > 1e-9 * (scale / grid.r_max + 1e-300):
        raise UnsupportedGrid("div(g^0i/g^00) != 0 in the sector basis")
    field = (grid.azimuthal_m * c[:, 1] / (r * sin_t)).reshape(n, Q)
    C = sector_mult_operator(grid, basis, basis.project_mult(field))
    C = ensure_symmetric(C, "rotation coupling (sector)")
    return GridOperator(C, grid)


# ---------------------------------------------------------------------------
# closed forms (independent route for the cross-oracle)
# ---------------------------------------------------------------------------

def _profile_jets(exprs, params, pts):
    return [ex.eval_jet2(e, pts, params, order=2) for e in exprs]


def _spatial_lap(j):
    hf = j.hess_full()
    return hf[1, 1] + hf[2, 2] + hf[3, 3]


def _spatial_grad_sq(j):
    return j.grad[1]**2 + j.grad[2]**2 + j.grad[3]**2


def _closed_static_fields(V, W, coupling, params, pts):
    jV, jW = _profile_jets((V, W), params, pts)
    F = jV / jW
    lam = coupling.lam_float
    b = (coupling.mass**2 * jV.value**2
         - 0.25 * _spatial_grad_sq(F)
         + lam * F.value * _spatial_lap(F)
         + (1.0 - 6.0 * lam) * jV.value / (2.0 * jW.value**2)
         * (F.value * _spatial_lap(jW) + _spatial_lap(jV)))
    return F, b


def assemble_energy_squared_static(V, W, coupling: Coupling, grid: GridSpec,
                                   params=None) -> GridOperator:
    """Closed form for the static diagonal family, F = V/W.

    T = m^2 V^2 + F p^2 F - (grad F)^2/4 + D_lambda(V, W).  For radial
    V, W the F p^2 F term is assembled as the operator product
    M_F . (-Laplacian) . M_F, deliberately a different discretization from
    the generic flux form so the two routes only have to agree in the
    continuum limit; for theta-dependent (axisymmetric) V, W it falls back
    to the flux form of F^2 plus the pointwise -F lap F correction.
    """
    V, W = ex.as_expr(V) if not isinstance(V, str) else ex.parse(V), W
    W = ex.as_expr(W) if not isinstance(W, str) else ex.parse(W)
    params = params or {}
    for name, e in (("V", V), ("W", W)):
        if e.uses_coordinate("t"):
            raise ConfigError(f"{name} must be static")

    if grid.kind == "cartesian-3d":
        return _closed_static_cartesian(V, W, coupling, grid, params)

    basis = SectorBasis(grid)
    n, Q = grid.n_points, basis.mu.size
    pts_nodes = basis.sector_points(grid.nodes())
    F, b = _closed_static_fields(V, W, coupling, params, pts_nodes)
    Fn = F.value.reshape(n, Q)
    b = b.reshape(n, Q)

    radial = basis.theta_variation(Fn) < RADIAL_TOL
    ones_e = np.ones((n + 1, Q))
    ones_n = np.ones((n, Q))
    if radial:
        lap = sector_flux_operator(grid, basis, basis.project_mult(ones_e),
                                   basis.project_grad(ones_n))
        MF = sector_mult_operator(grid, basis, basis.project_mult(Fn))
        K = MF @ lap @ MF
    else:
        pts_edges = basis.sector_points(grid.edges())
        Fe, _ = _closed_static_fields(V, W, coupling, params, pts_edges)
        F2e = (Fe.value**2).reshape(n + 1, Q)
        K = sector_flux_operator(grid, basis, basis.project_mult(F2e),
                                 basis.project_grad(Fn**2))
        b = b - (F.value * _spatial_lap(F)).reshape(n, Q)
    K = K + sector_mult_operator(grid, basis, basis.project_mult(b))
    K = ensure_symmetric(K, "energy-squared (static closed form)")
    return GridOperator(K, grid)


def _closed_static_cartesian(V, W, coupling, grid, params):
    pts = grid.cartesian_points()
    F, b = _closed_static_fields(V, W, coupling, params, pts)
    lap = cartesian_flux_operator(
        grid, [np.ones((grid.n_axis[0] + (ax == 0), grid.n_axis[1] + (ax == 1),
                        grid.n_axis[2] + (ax == 2))) for ax in range(3)])
    MF = np.diag(F.value)
    K = MF @ lap @ MF + np.diag(b)
    K = ensure_symmetric(K, "energy-squared (static closed form)")
    return GridOperator(K, grid)


def assemble_energy_squared_rotating(V, W, omega, coupling: Coupling,
                                     grid: GridSpec, params=None) -> GridOperator:
    """Closed form for the rotating isotropic family (V, W, Omega radial).

    Adds the (lambda/2)(x^2 + y^2) Omega'(r)^2 multiplication term to the
    static closed form; the drag term itself is a separate operator
    (see assemble_rotation_coupling).
    """
    V = ex.parse(V) if isinstance(V, str) else ex.as_expr(V)
    W = ex.parse(W) if isinstance(W, str) else ex.as_expr(W)
    omega = ex.parse(omega) if isinstance(omega, str) else ex.as_expr(omega)
    params = params or {}
    for name, e in (("V", V), ("W", W), ("Omega", omega)):
        if not depends_only_on_r(e):
            raise ConfigError(
                f"{name} must depend on r only for the rotating closed form")
    if grid.kind != "radial-sector":
        raise UnsupportedGrid("rotating closed form is sector-based")

    op = assemble_energy_squared_static(V, W, coupling, grid, params)
    lam = coupling.lam_float
    if lam != 0.0:
        basis = SectorBasis(grid)
        n, Q = grid.n_points, basis.mu.size
        pts = basis.sector_points(grid.nodes())
        jO = ex.eval_jet2(omega, pts, params, order=1)
        rhat = np.zeros((pts.shape[0], 3))
        rn = np.linalg.norm(pts[:, 1:], axis=1)
        rhat = pts[:, 1:] / rn[:, None]
        omega_p = np.einsum("ip,pi->p", jO.grad[1:4], rhat)
        rho2 = pts[:, 1]**2 + pts[:, 2]**2
        extra = (0.5 * lam * rho2 * omega_p**2).reshape(n, Q)
        M = sector_mult_operator(grid, basis, basis.project_mult(extra))
        op = GridOperator(ensure_symmetric(op.matrix + M, "rotating closed"),
                          grid)
    return op


# ---------------------------------------------------------------------------
# two-component Hamiltonian
# ---------------------------------------------------------------------------

def two_component_hamiltonian(t_op: GridOperator,
                              rotation: GridOperator | None,
                              coupling: Coupling) -> GridOperator:
    """H' = rho_3 (N^2+T)/(2N) + i rho_2 (T-N^2)/(2N) + C (pseudo-Hermitian)."""
    T = t_op.matrix
    N = coupling.n_param
    n = T.shape[0]
    eye = np.eye(n)
    A = (N**2 * eye + T) / (2.0 * N)
    B = (T - N**2 * eye) / (2.0 * N)
    dtype = complex if (rotation is not None
                        and np.iscomplexobj(rotation.matrix)) else float
    H = np.zeros((2 * n, 2 * n), dtype=dtype)
    H[:n, :n] = A
    H[n:, n:] = -A
    H[:n, n:] = B
    H[n:, :n] = -B
    if rotation is not None:
        C = rotation.matrix
        H[:n, :n] += C
        H[n:, n:] += C
    return GridOperator(H, t_op.grid, component_structure="two-component")


def pseudo_hermiticity_defect(h: GridOperator) -> float:
    """|| rho_3 H^dag rho_3 - H ||_F / ||H||_F for a two-component operator."""
    H = h.matrix
    n = H.shape[0] // 2
    rho3 = np.diag(np.concatenate([np.ones(n), -np.ones(n)]))
    defect = np.linalg.norm(rho3 @ H.conj().T @ rho3 - H)
    return float(defect / np.linalg.norm(H))
