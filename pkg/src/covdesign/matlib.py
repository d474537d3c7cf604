"""Dense symmetric-matrix kernel: factorizations, eigenvalues, PSD ordering,
Schur-complement tests and the matrix-inversion-lemma identity.

Matrices are plain float ndarrays treated as immutable; every function is pure.
Problem sizes here are tiny (2 to 8), so everything is dense and backed by
numpy's LAPACK bindings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray

#: Default relative tolerance for PSD decisions, scaled by matrix norm.
PSD_TOL = 1e-9


class NotPositiveDefiniteError(ValueError):
    """Cholesky failed; carries the index of the failing pivot."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix not positive definite (pivot {pivot})")


class SingularMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class PsdCheck:
    min_eigenvalue: float
    max_eigenvalue: float
    is_psd: bool
    tolerance: float


def as_square(a, name: str = "matrix") -> Array:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def symmetrize(a) -> Array:
    """0.5 * (A + A^T); applied after every product that is symmetric in exact
    arithmetic to stop drift in iterative Riccati updates."""
    a = as_square(a)
    return 0.5 * (a + a.T)


def frob(a) -> float:
    return float(np.linalg.norm(a, "fro"))


def sym_eig(a) -> tuple[Array, Array]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues ascending, orthonormal eigenvectors as columns) with
    A = V diag(w) V^T.
    """
    a = symmetrize(a)
    w, v = np.linalg.eigh(a)
    return w, v


def min_eig(a) -> float:
    return float(np.linalg.eigvalsh(symmetrize(a))[0])


def psd_check(a, tol: float = PSD_TOL) -> PsdCheck:
    w = np.linalg.eigvalsh(symmetrize(a))
    lo, hi = float(w[0]), float(w[-1])
    return PsdCheck(lo, hi, lo >= -tol * max(1.0, abs(hi)), tol)


def chol(a) -> Array:
    """Lower-triangular Cholesky factor L with L L^T = A.

    Raises NotPositiveDefiniteError carrying the failing pivot index when A is
    not positive definite.
    """
    a = symmetrize(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        # locate the failing pivot by growing leading minors
        for k in range(1, a.shape[0] + 1):
            try:
                np.linalg.cholesky(a[:k, :k])
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(k - 1) from None
        raise NotPositiveDefiniteError(a.shape[0] - 1) from None


def solve_spd(a, b) -> Array:
    """Solve A x = b for symmetric positive definite A via Cholesky."""
    L = chol(a)
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def spd_inverse(a) -> Array:
    """Explicit inverse of an SPD matrix (only where the inverse itself is the
    result; solves are preferred elsewhere)."""
    return symmetrize(solve_spd(a, np.eye(a.shape[0])))


def psd_sqrt(a, tol: float = PSD_TOL) -> Array:
    """Symmetric square root of a PSD matrix, tolerant of round-off negatives."""
    w, v = sym_eig(a)
    scale = max(1.0, abs(float(w[-1])))
    if w[0] < -tol * scale:
        raise NotPositiveDefiniteError(0, f"matrix not PSD: min eigenvalue {w[0]:.3e}")
    return symmetrize((v * np.sqrt(np.clip(w, 0.0, None))) @ v.T)


def psd_order(a, b, tol: float = PSD_TOL) -> bool:
    """True iff A - B is PSD: min_eig(A - B) >= -tol * (1 + ||A||_F + ||B||_F)."""
    a, b = as_square(a, "A"), as_square(b, "B")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return min_eig(a - b) >= -tol * (1.0 + frob(a) + frob(b))


def schur_psd_equiv(m11, m12, m22, tol: float = PSD_TOL) -> bool:
    """PSD test of the block matrix [[M11, M12], [M12^T, M22]] with M22 > 0.

    By the Schur-complement identity this equals the PSD test of
    M11 - M12 M22^{-1} M12^T; the block form is what gets evaluated.
    """
    m11, m22 = symmetrize(m11), symmetrize(m22)
    m12 = np.asarray(m12, dtype=float)
    if m12.shape != (m11.shape[0], m22.shape[0]):
        raise ValueError(f"off-diagonal block has shape {m12.shape}, "
                         f"expected {(m11.shape[0], m22.shape[0])}")
    try:
        chol(m22)
    except NotPositiveDefiniteError as e:
        raise SingularMatrixError(f"M22 not positive definite (pivot {e.pivot})") from None
    block = np.block([[m11, m12], [m12.T, m22]])
    return psd_check(block, tol).is_psd


def woodbury_lhs(L, Ups) -> Array:
    """L^{-1} - (L + L Ups L)^{-1} for SPD L and PSD Ups.

    Equals (L + Ups^{-1})^{-1} whenever Ups is invertible; this is the
    matrix-inversion-lemma expansion used to linearize the Riccati inequality.
    """
    L, Ups = symmetrize(L), symmetrize(Ups)
    if L.shape != Ups.shape:
        raise ValueError(f"dimension mismatch: {L.shape} vs {Ups.shape}")
    try:
        inv_L = spd_inverse(L)
    except NotPositiveDefiniteError:
        raise SingularMatrixError("L must be positive definite") from None
    inner = symmetrize(L + L @ Ups @ L)
    return symmetrize(inv_L - spd_inverse(inner))
