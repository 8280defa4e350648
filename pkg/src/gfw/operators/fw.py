"""Block-diagonalization of the two-component Hamiltonian.

With T the symmetric energy-squared operator and C the Hermitian rotation
coupling, the block-diagonal (Foldy-Wouthuysen)Amiltonian is

    H_fw = rho_3 sqrt(T) + C

exactly whenever the stationarity condition [T, i C] = 0 holds (all static
metrics, where C = 0, and rotating sectors with constant drag).  The
residual commutator norm is reported as ``exactness_defect``; when it does
not vanish the corrected form

    H_fw = rho_3 e + C + (1/(2 sqrt(e))) [sqrt(e), [sqrt(e), C]] (1/sqrt(e)),
    e = sqrt(T),

adds the leading odd-term elimination for stationary metrics.

The pseudo-unitary transformation operator that block-diagonalizes the
two-component Hamiltonian is

    U = (e + N + rho_1 (e - N)) / (2 sqrt(e N)),   U^dag = rho_3 U^-1 rho_3.

Spectra of the (non-normal, pseudo-Hermitian) two-component Hamiltonian are
computed with a dense eigensolve; the physical branch is selected by the
sign of the indefinite norm psi^dag rho_3 psi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..errors import ConvergenceFailure, NegativeSpectrum
from .assembly import Coupling
from .grids import GridOperator

CLIP_TOL = 1e-10


@dataclass
class FwResult:
    """Block-diagonalized Hamiltonian plus diagnostics."""

    h_fw: GridOperator
    exactness_defect: float
    pseudo_hermiticity_defect: float
    method: str  # "exact" | "sqrt-form" | "approximate"


def _symmetric_eig(matrix, negative_tol):
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    scale = np.max(np.abs(vals)) + 1e-300
    if vals[0] < -negative_tol * scale:
        raise NegativeSpectrum(
            f"most negative eigenvalue {vals[0]:.3e} below -{negative_tol:.0e} "
            f"* {scale:.3e}; the metric/grid is outside the validity domain")
    return np.clip(vals, 0.0, None), vecs


def sqrt_psd(op: GridOperator | np.ndarray,
             negative_tol: float = CLIP_TOL) -> GridOperator | np.ndarray:
    """Spectral square root of a symmetric positive-semidefinite operator.

    Eigenvalues in [-negative_tol * ||A||, 0) are treated as discretization
    noise and clipped to zero; anything lower raises NegativeSpectrum.
    """
    matrix = op.matrix if isinstance(op, GridOperator) else np.asarray(op)
    vals, vecs = _symmetric_eig(matrix, negative_tol)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    if isinstance(op, GridOperator):
        return GridOperator(root, op.grid, op.component_structure)
    return root


def _two_component(upper, lower, grid):
    n = upper.shape[0]
    H = np.zeros((2 * n, 2 * n), dtype=np.result_type(upper, lower))
    H[:n, :n] = upper
    H[n:, n:] = lower
    return GridOperator(H, grid, component_structure="two-component")


def _defects(t, c):
    T, C = t.matrix, None if c is None else c.matrix
    nT = np.linalg.norm(T)
    if C is None or np.linalg.norm(C) == 0.0:
        return 0.0
    # stationary metrics: defect of d_t T - [T, Upsilon'] reduces to ||[T, C]||
    comm = T @ C - C @ T
    return float(np.linalg.norm(comm) / nT)


def fw_exact(t: GridOperator, rotation: GridOperator | None = None,
             negative_tol: float = 1e-6) -> FwResult:
    """H_fw = rho_3 sqrt(T) + C with the exactness condition monitored.

    ``method`` is "exact" when the commutator defect is at rounding level,
    otherwise "sqrt-form" (the formula is still evaluated; the defect
    quantifies how far the sufficient condition is from holding).
    """
    eps = sqrt_psd(t.matrix, negative_tol)
    C = None if rotation is None else rotation.matrix
    upper = eps + (0.0 if C is None else C)
    lower = -eps + (0.0 if C is None else C)
    h = _two_component(upper, lower, t.grid)
    defect = _defects(t, rotation)
    method = "exact" if defect <= 1e-10 else "sqrt-form"
    return FwResult(h, defect, _pseudo_defect(h), method)


def fw_approximate(t: GridOperator, rotation: GridOperator | None = None,
                   negative_tol: float = 1e-6) -> FwResult:
    """Relativistic corrected form for stationary metrics.

    Equals fw_exact bit-for-bit when C commutes with T (in particular for
    every static metric); otherwise adds the double-commutator correction.
    """
    vals, vecs = _symmetric_eig(t.matrix, negative_tol)
    eps = (vecs * np.sqrt(vals)) @ vecs.T
    quarter = np.sqrt(np.sqrt(vals))
    if rotation is None or np.linalg.norm(rotation.matrix) == 0.0:
        h = _two_component(eps, -eps, t.grid)
        return FwResult(h, 0.0, _pseudo_defect(h), "approximate")
    if np.any(vals <= 0.0):
        raise NegativeSpectrum(
            "zero modes of T: 1/sqrt(sqrt(T)) in the correction is undefined")
    root4 = (vecs * quarter) @ vecs.T           # T^(1/4) = sqrt(eps)
    inv_root4 = (vecs / quarter) @ vecs.T
    C = rotation.matrix
    inner = root4 @ C - C @ root4
    dcomm = root4 @ inner - inner @ root4
    corr = 0.5 * (inv_root4 @ dcomm @ inv_root4)
    upper = eps + C + corr
    lower = -eps + C + corr
    h = _two_component(upper, lower, t.grid)
    return FwResult(h, _defects(t, rotation), _pseudo_defect(h), "approximate")


def _pseudo_defect(h: GridOperator) -> float:
    from .assembly import pseudo_hermiticity_defect
    return pseudo_hermiticity_defect(h)


def fw_transform_operator(t: GridOperator, coupling: Coupling,
                          negative_tol: float = CLIP_TOL) -> GridOperator:
    """Pseudo-unitary U = (e + N + rho_1(e - N)) / (2 sqrt(e N)).

    Validated against U^dag rho_3 U = rho_3 to 1e-10; U block-diagonalizes
    the two-component Hamiltonian built from the same T whenever the
    exactness condition holds.
    """
    vals, vecs = _symmetric_eig(t.matrix, negative_tol)
    if np.any(vals <= 0.0):
        raise NegativeSpectrum("U requires strictly positive T")
    N = coupling.n_param
    e = np.sqrt(vals)
    diag_plus = (e + N) / (2.0 * np.sqrt(e * N))
    diag_minus = (e - N) / (2.0 * np.sqrt(e * N))
    P = (vecs * diag_plus) @ vecs.T
    M = (vecs * diag_minus) @ vecs.T
    n = P.shape[0]
    U = np.zeros((2 * n, 2 * n))
    U[:n, :n] = P
    U[n:, n:] = P
    U[:n, n:] = M
    U[n:, :n] = M
    rho3 = np.diag(np.concatenate([np.ones(n), -np.ones(n)]))
    defect = np.linalg.norm(U.T @ rho3 @ U - rho3) / np.linalg.norm(rho3)
    if defect > 1e-10:
        raise ConvergenceFailure(
            f"pseudo-unitarity defect {defect:.3e} exceeds 1e-10")
    return GridOperator(U, t.grid, component_structure="two-component")


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def _position_moment(grid, weights):
    """First moment of |eigenvector|^2 against the node coordinate."""
    if grid.kind == "radial-sector":
        r = np.repeat(grid.nodes(), len(grid.channels))
    else:
        r = np.linalg.norm(grid.cartesian_points()[:, 1:], axis=1)
    n = weights.shape[0]
    if n == 2 * r.size:  # two-component
        r = np.concatenate([r, r])
    return (weights * r[:, None]).sum(axis=0)


def spectrum(h: GridOperator, k: int, imag_tol: float = 1e-8) -> np.ndarray:
    """k lowest-|E| physical-branch eigenvalues, deterministically ordered.

    For symmetric single-component operators this is a plain symmetric
    eigensolve.  For two-component operators the dense nonsymmetric problem
    is solved; eigenvalues are kept when their imaginary part is at rounding
    level and the indefinite norm psi^dag rho_3 psi is positive (particle
    branch).  Ties are broken by the first position moment of |psi|^2, so
    degenerate multiplets are emitted in a stable order.
    """
    M = h.matrix
    if h.component_structure == "scalar":
        if np.linalg.norm(M - M.conj().T) <= 1e-12 * np.linalg.norm(M):
            vals, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
            order = np.argsort(np.abs(vals), kind="stable")[:k]
            chosen = vals[order]
            moments = _position_moment(h.grid, np.abs(vecs[:, order])**2)
            fine = np.lexsort((moments, np.abs(chosen)))
            return chosen[fine]
        raise ConvergenceFailure("non-symmetric single-component operator")

    n = M.shape[0] // 2
    vals, vecs = sla.eig(M)
    scale = np.max(np.abs(vals)) + 1e-300
    real = np.abs(vals.imag) <= imag_tol * scale
    norms = (np.abs(vecs[:n])**2).sum(axis=0) - (np.abs(vecs[n:])**2).sum(axis=0)
    phys = real & (norms > 0.0)
    if phys.sum() < k:
        raise ConvergenceFailure(
            f"only {int(phys.sum())} physical real eigenvalues found, need {k}")
    cand = vals[phys].real
    cvec = vecs[:, phys]
    order = np.argsort(np.abs(cand), kind="stable")[:k]
    chosen = cand[order]
    moments = _position_moment(h.grid, np.abs(cvec[:, order])**2)
    fine = np.lexsort((moments, np.abs(chosen)))
    return chosen[fine]
