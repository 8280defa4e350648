"""Discretization grids and the spherical-sector reduction machinery.

Two grid kinds are supported:

* ``radial-sector``: functions u_l(r) Y_{l,m}(theta,phi) on a radial
  Dirichlet grid, reduced wave function u = r R(r).  A sector carries either
  a single polar channel l or a small block of channels l = |m|..l_max,
  because theta-dependent coefficients (e.g. the centrifugal-type
  (x^2+y^2) Omega'^2 term, or V = 1 + a.r frames) couple neighbouring l.
  Angular matrix elements are evaluated with Gauss-Legendre quadrature in
  cos(theta), exact for the polynomial angular dependence of the supported
  metric families.

* ``cartesian-3d``: plain interior nodes of a box with Dirichlet walls;
  used for metrics without the axial symmetry the sector basis needs.

All assembled operators are dense numpy matrices; problem sizes stay in the
few-thousand range, where dense symmetric eigensolves are exact and simple.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, NonSymmetricAssembly

SYMMETRY_TOL = 1e-12


# ---------------------------------------------------------------------------
# grid specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Discretization request.

    radial-sector: ``n_points`` interior radial nodes on (r_min, r_max),
    azimuthal quantum number ``azimuthal_m``, polar index ``polar_l``
    (defaults to |m|), channel block up to ``l_max`` (default |m|+4), or a
    single polar channel when ``single_channel`` is set.

    cartesian-3d: ``bounds`` = ((x0,x1),(y0,y1),(z0,z1)) and ``n_axis``
    interior nodes per axis.
    """

    kind: str = "radial-sector"
    r_min: float = 0.1
    r_max: float = 10.0
    n_points: int = 100
    azimuthal_m: int = 0
    polar_l: int | None = None
    l_max: int | None = None
    single_channel: bool = False
    n_quad: int | None = None
    bounds: tuple = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))
    n_axis: tuple = (8, 8, 8)

    def __post_init__(self):
        if self.kind not in ("radial-sector", "cartesian-3d"):
            raise ConfigError(f"unknown grid kind '{self.kind}'")
        if self.kind == "radial-sector":
            if self.n_points < 16:
                raise ConfigError("radial-sector grids need n_points >= 16")
            if self.r_min <= 0 or self.r_max <= self.r_min:
                raise ConfigError("need 0 < r_min < r_max")
            pl = self.polar_l
            if pl is not None and pl < abs(self.azimuthal_m):
                raise ConfigError("polar_l must satisfy l >= |m|")
        else:
            if any(n < 4 for n in self.n_axis):
                raise ConfigError("cartesian grids need >= 4 nodes per axis")

    # -- radial-sector helpers ------------------------------------------

    @property
    def l0(self) -> int:
        return abs(self.azimuthal_m) if self.polar_l is None else self.polar_l

    @property
    def channels(self) -> tuple:
        if self.kind != "radial-sector":
            raise ConfigError("channels only defined for radial-sector grids")
        if self.single_channel:
            return (self.l0,)
        lmax = self.l_max if self.l_max is not None else abs(self.azimuthal_m) + 4
        if lmax < self.l0:
            raise ConfigError("l_max must be >= polar_l")
        return tuple(range(abs(self.azimuthal_m), lmax + 1))

    @property
    def h(self) -> float:
        return (self.r_max - self.r_min) / (self.n_points + 1)

    def nodes(self) -> np.ndarray:
        return self.r_min + self.h * np.arange(1, self.n_points + 1)

    def edges(self) -> np.ndarray:
        return self.r_min + self.h * (0.5 + np.arange(self.n_points + 1))

    def quad_count(self) -> int:
        if self.n_quad is not None:
            return self.n_quad
        return max(8, 2 * max(self.channels) + 6)

    def refined(self, n_points: int) -> "GridSpec":
        return replace(self, n_points=n_points)

    # -- cartesian helpers ----------------------------------------------

    def axis_nodes(self):
        out = []
        for (lo, hi), n in zip(self.bounds, self.n_axis):
            hstep = (hi - lo) / (n + 1)
            out.append(lo + hstep * np.arange(1, n + 1))
        return out

    def cartesian_points(self) -> np.ndarray:
        xs, ys, zs = self.axis_nodes()
        X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
        pts = np.column_stack([np.zeros(X.size), X.ravel(), Y.ravel(), Z.ravel()])
        return pts

    @property
    def size(self) -> int:
        if self.kind == "radial-sector":
            return self.n_points * len(self.channels)
        return int(np.prod(self.n_axis))


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@dataclass
class GridOperator:
    """Matrix representation of an operator on a grid basis.

    ``component_structure`` is "scalar" for N x N single-component matrices
    and "two-component" for 2N x 2N block matrices ordered (upper, lower),
    i.e. the rho_3 = diag(+1, -1) blocking.
    """

    matrix: np.ndarray
    grid: GridSpec
    component_structure: str = "scalar"

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def scalar_size(self) -> int:
        return self.n // 2 if self.component_structure == "two-component" else self.n

    def channel_slice(self, l: int) -> slice:
        """Index slice of channel l in a radial-sector scalar operator."""
        chans = self.grid.channels
        a = chans.index(l)
        n = self.grid.n_points
        return slice(a * n, (a + 1) * n)

    def channel_block(self, l: int) -> np.ndarray:
        s = self.channel_slice(l)
        return self.matrix[s, s]

    def symmetry_defect(self) -> float:
        m = self.matrix
        scale = np.linalg.norm(m)
        if scale == 0.0:
            return 0.0
        return float(np.linalg.norm(m - m.conj().T) / scale)


def ensure_symmetric(matrix: np.ndarray, what: str) -> np.ndarray:
    """Verify symmetry to 1e-12 (relative) and return the symmetrized matrix.

    Raises NonSymmetricAssembly when the defect is genuine rather than
    rounding noise.
    """
    scale = np.linalg.norm(matrix)
    defect = np.linalg.norm(matrix - matrix.T)
    if scale > 0.0 and defect > SYMMETRY_TOL * scale:
        raise NonSymmetricAssembly(
            f"{what}: symmetry defect {defect / scale:.3e} exceeds 1e-12")
    return 0.5 * (matrix + matrix.T)


# ---------------------------------------------------------------------------
# normalized associated Legendre basis on Gauss-Legendre nodes
# ---------------------------------------------------------------------------

def _normalized_legendre_table(ls, m, mu):
    """Theta_{l,m}(mu) and d Theta/d theta for l in ls, orthonormal on dmu."""
    m = abs(m)
    lmax = max(ls)
    mu = np.asarray(mu)
    sin_t = np.sqrt(1.0 - mu**2)
    table = {}
    # seed Theta_{m,m}
    val = np.full_like(mu, 1.0 / np.sqrt(2.0))
    for k in range(1, m + 1):
        val = val * np.sqrt((2 * k + 1) / (2.0 * k)) * sin_t
    table[m] = val
    if lmax >= m + 1:
        table[m + 1] = mu * np.sqrt(2.0 * m + 3.0) * table[m]
    for l in range(m + 2, lmax + 1):
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((2.0 * l + 1.0) * ((l - 1.0)**2 - m * m))
                    / ((2.0 * l - 3.0) * (l * l - m * m)))
        table[l] = a * mu * table[l - 1] - b * table[l - 2]
    theta_vals = np.stack([table[l] for l in ls])
    # d Theta_lm / d theta = (l mu Theta_lm - c_lm Theta_{l-1,m}) / sin(theta)
    dtheta = []
    for l in ls:
        if l == 0:
            dtheta.append(np.zeros_like(mu))
            continue
        c = np.sqrt((2.0 * l + 1.0) * (l * l - m * m) / (2.0 * l - 1.0))
        lower = table.get(l - 1)
        low = lower if lower is not None else 0.0 * mu
        dtheta.append((l * mu * table[l] - c * low) / sin_t)
    dtheta = np.stack(dtheta)
    return theta_vals, dtheta, sin_t


class SectorBasis:
    """Angular projection onto the (l, m) channels of a radial-sector grid."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.ls = grid.channels
        self.m = grid.azimuthal_m
        q = grid.quad_count()
        self.mu, self.w = np.polynomial.legendre.leggauss(q)
        self.theta, self.dtheta, self.sin_t = _normalized_legendre_table(
            self.ls, self.m, self.mu)
        self.theta_over_sin = self.theta / self.sin_t

    @property
    def L(self) -> int:
        return len(self.ls)

    def sector_points(self, radii) -> np.ndarray:
        """Cartesian (t=0) evaluation points for radii x quadrature nodes.

        Returns shape (len(radii)*Q, 4); axisymmetric fields are evaluated in
        the phi = 0 half plane (x = r sin(theta), y = 0, z = r cos(theta)).
        """
        r = np.asarray(radii)[:, None]
        x = r * self.sin_t[None, :]
        z = r * self.mu[None, :]
        pts = np.zeros((r.size * self.mu.size, 4))
        pts[:, 1] = x.ravel()
        pts[:, 3] = z.ravel()
        return pts

    def project_mult(self, f):
        """<l'| f |l> per radius: f shape (..., Q) -> (..., L, L)."""
        return np.einsum("...q,aq,bq,q->...ab", f, self.theta, self.theta,
                         self.w, optimize=True)

    def project_grad(self, f):
        """<grad_S l'| f |grad_S l> per radius (theta part of grad . grad)."""
        mats = np.einsum("...q,aq,bq,q->...ab", f, self.dtheta, self.dtheta,
                         self.w, optimize=True)
        if self.m != 0:
            mats = mats + self.m**2 * np.einsum(
                "...q,aq,bq,q->...ab", f, self.theta_over_sin,
                self.theta_over_sin, self.w, optimize=True)
        return mats

    def theta_variation(self, f) -> float:
        """Relative spread of a (..., Q) field across the quadrature nodes."""
        f = np.asarray(f)
        spread = f.max(axis=-1) - f.min(axis=-1)
        scale = np.max(np.abs(f)) + 1e-300
        return float(np.max(spread) / scale)


# ---------------------------------------------------------------------------
# radial-sector building blocks
# ---------------------------------------------------------------------------

def sector_flux_operator(grid: GridSpec, basis: SectorBasis,
                         m0_edges, m1_nodes) -> np.ndarray:
    """Discretize -div(a grad .) on the sector basis (flux form).

    ``m0_edges``: (n+1, L, L) angular projections of the coefficient at the
    radial edge midpoints; ``m1_nodes``: (n, L, L) projections against the
    angular gradients at the nodes.  Built as an explicitly symmetric
    quadratic form, positive semidefinite for positive coefficients.
    """
    n, L = grid.n_points, basis.L
    r = grid.nodes()
    re = grid.edges()
    h = grid.h
    K = np.zeros((n * L, n * L))
    tilde = (re**2)[:, None, None] * m0_edges / h**2
    for e in range(n + 1):
        left, right = e - 1, e  # node indices, -1/n are boundary (u=0)
        blk = tilde[e]
        if right < n:
            K[right * L:(right + 1) * L, right * L:(right + 1) * L] += blk / r[right]**2
        if left >= 0:
            K[left * L:(left + 1) * L, left * L:(left + 1) * L] += blk / r[left]**2
        if left >= 0 and right < n:
            cross = -blk / (r[left] * r[right])
            K[left * L:(left + 1) * L, right * L:(right + 1) * L] += cross
            K[right * L:(right + 1) * L, left * L:(left + 1) * L] += cross.T
    for i in range(n):
        K[i * L:(i + 1) * L, i * L:(i + 1) * L] += m1_nodes[i] / r[i]**2
    return K


def sector_mult_operator(grid: GridSpec, basis: SectorBasis, m_nodes) -> np.ndarray:
    """Block-diagonal multiplication operator from (n, L, L) projections."""
    n, L = grid.n_points, basis.L
    M = np.zeros((n * L, n * L))
    for i in range(n):
        M[i * L:(i + 1) * L, i * L:(i + 1) * L] = m_nodes[i]
    return M


def sector_reorder_node_major(grid: GridSpec):
    """Index maps between (node-major) storage and (channel, node) views."""
    n, L = grid.n_points, len(grid.channels)
    idx = np.arange(n * L).reshape(n, L)
    return idx


def sector_to_channel_major(matrix: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Reorder a node-major sector matrix into channel-major blocks."""
    n, L = grid.n_points, len(grid.channels)
    perm = np.arange(n * L).reshape(n, L).T.ravel()
    return matrix[np.ix_(perm, perm)]


# ---------------------------------------------------------------------------
# cartesian building blocks
# ---------------------------------------------------------------------------

def _axis_shift_pairs(nx, ny, nz, axis):
    """Index pairs (flat_from, flat_to) of nearest neighbours along an axis."""
    idx = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    if axis == 0:
        return idx[:-1].ravel(), idx[1:].ravel()
    if axis == 1:
        return idx[:, :-1].ravel(), idx[:, 1:].ravel()
    return idx[:, :, :-1].ravel(), idx[:, :, 1:].ravel()


def cartesian_flux_operator(grid: GridSpec, coeff_edges) -> np.ndarray:
    """-div(a grad .) with diagonal coefficient a^{ii} on a cartesian grid.

    ``coeff_edges[axis]`` holds a evaluated at the midpoints between
    neighbouring interior nodes along that axis, plus the half steps to the
    Dirichlet boundary (shape: nodes with one extra along the axis).
    """
    nx, ny, nz = grid.n_axis
    steps = [(hi - lo) / (n + 1) for (lo, hi), n in zip(grid.bounds, grid.n_axis)]
    N = nx * ny * nz
    K = np.zeros((N, N))
    diag = np.zeros(N)
    for axis in range(3):
        h = steps[axis]
        edge = coeff_edges[axis] / h**2
        # interior edges couple neighbours
        inner = edge[tuple(slice(1, -1) if a == axis else slice(None)
                           for a in range(3))].ravel()
        i_from, i_to = _axis_shift_pairs(nx, ny, nz, axis)
        K[i_from, i_to] -= inner
        K[i_to, i_from] -= inner
        np.add.at(diag, i_from, inner)
        np.add.at(diag, i_to, inner)
        # boundary half-edges only add to the diagonal (u = 0 outside)
        first = edge[tuple(slice(0, 1) if a == axis else slice(None)
                           for a in range(3))]
        last = edge[tuple(slice(-1, None) if a == axis else slice(None)
                          for a in range(3))]
        sl_first = tuple(slice(0, 1) if a == axis else slice(None) for a in range(3))
        sl_last = tuple(slice(-1, None) if a == axis else slice(None) for a in range(3))
        full = np.zeros((nx, ny, nz))
        full[sl_first] += first
        full[sl_last] += last
        diag += full.ravel()
    K[np.diag_indices_from(K)] += diag
    return K


def cartesian_derivative(grid: GridSpec, axis: int) -> np.ndarray:
    """Central-difference d/dx_axis with Dirichlet boundaries (antisymmetric)."""
    nx, ny, nz = grid.n_axis
    h = (grid.bounds[axis][1] - grid.bounds[axis][0]) / (grid.n_axis[axis] + 1)
    N = nx * ny * nz
    D = np.zeros((N, N))
    i_from, i_to = _axis_shift_pairs(nx, ny, nz, axis)
    D[i_from, i_to] += 1.0 / (2.0 * h)
    D[i_to, i_from] -= 1.0 / (2.0 * h)
    return D
