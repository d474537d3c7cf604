"""Steady-state Riccati machinery for the linear-Gaussian tracking model.

The solver iterates the filter's own covariance map (propagate + update) to its
fixed point, which keeps the semantics identical to running the filter forever
and is plenty fast at the state dimensions used here (<= 8).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matlib import (
    Array,
    SingularMatrixError,
    as_square,
    frob,
    min_eig,
    psd_check,
    psd_sqrt,
    solve_spd,
    symmetrize,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000

#: Relative singular-value threshold for numerical rank decisions.
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class SystemModel:
    """Dynamics F (n_x x n_x), observation map H (n_y x n_x) and process-noise
    covariance Q (n_x x n_x PSD) of the per-frame linear model."""

    F: Array
    H: Array
    Q: Array

    def __post_init__(self):
        F = as_square(self.F, "F")
        Q = symmetrize(as_square(self.Q, "Q"))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape[1] != F.shape[0]:
            raise ValueError(f"H has {H.shape[1]} columns, expected {F.shape[0]}")
        if Q.shape != F.shape:
            raise ValueError(f"Q has shape {Q.shape}, expected {F.shape}")
        if not psd_check(Q).is_psd:
            raise ValueError("Q must be positive semidefinite")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Q", Q)

    @property
    def n_x(self) -> int:
        return self.F.shape[0]

    @property
    def n_y(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class DareResult:
    sigma_inf: Array
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class AssumptionDiagnostics:
    """Numerical ranks of the observability/controllability matrices.

    Full rank is a sufficient (stronger-than-necessary) condition for the
    detectability and stabilizability the steady-state theory assumes; a
    deficient rank here does not by itself prove the weaker condition fails.
    """

    observability_rank: int
    controllability_rank: int
    n_x: int
    note: str = field(default=(
        "full-rank observability/controllability is sufficient for "
        "detectability/stabilizability but not necessary"
    ))

    @property
    def observable(self) -> bool:
        return self.observability_rank == self.n_x

    @property
    def controllable(self) -> bool:
        return self.controllability_rank == self.n_x


def riccati_map(model: SystemModel, R: Array, sigma: Array) -> Array:
    """One application of the covariance map
    S -> F S F^T + Q - F S H^T (H S H^T + R)^{-1} H S F^T."""
    F, H, Q = model.F, model.H, model.Q
    innov = symmetrize(H @ sigma @ H.T + R)
    gain_t = solve_spd(innov, H @ sigma @ F.T)  # (H S H^T + R)^{-1} H S F^T
    return symmetrize(F @ sigma @ F.T + Q - (F @ sigma @ H.T) @ gain_t)


def dare_defect(model: SystemModel, R: Array, sigma: Array) -> float:
    """Frobenius norm of the fixed-point defect, evaluated with fresh arithmetic."""
    return frob(riccati_map(model, R, sigma) - sigma)


def _iterate(model: SystemModel, R: Array, tol: float, max_iter: int,
             sigma0: Array | None, guard_innovation: bool) -> DareResult:
    sigma = symmetrize(sigma0) if sigma0 is not None else model.Q.copy()
    H = model.H
    for k in range(1, max_iter + 1):
        if guard_innovation:
            innov = symmetrize(H @ sigma @ H.T + R)
            lam = min_eig(innov)
            if lam < 1e-10:
                raise SingularMatrixError(
                    "innovation covariance singular at iterate "
                    f"{k - 1}: min eigenvalue {lam:.3e}")
        nxt = riccati_map(model, R, sigma)
        if frob(nxt - sigma) <= tol * (1.0 + frob(nxt)):
            residual = dare_defect(model, R, nxt)
            return DareResult(nxt, k, residual,
                              residual <= tol * (1.0 + frob(nxt)))
        sigma = nxt
    residual = dare_defect(model, R, sigma)
    return DareResult(sigma, max_iter, residual, False)


def solve_dare(model: SystemModel, R, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER, sigma0: Array | None = None) -> DareResult:
    """Steady-state prior covariance for measurement-noise covariance R.

    Fixed-point iteration of the covariance map starting from Q (or sigma0).
    Non-convergence is reported through ``converged=False``, not raised; an R
    with a negative eigenvalue is an input error.
    """
    R = symmetrize(as_square(R, "R"))
    if R.shape[0] != model.n_y:
        raise ValueError(f"R has shape {R.shape}, expected ({model.n_y}, {model.n_y})")
    check = psd_check(R)
    if not check.is_psd:
        raise ValueError(f"R has negative eigenvalue {check.min_eigenvalue:.3e}")
    return _iterate(model, R, tol, max_iter, sigma0, guard_innovation=True)


def solve_dare_noiseless(model: SystemModel, tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER,
                         sigma0: Array | None = None) -> DareResult:
    """Steady-state prior covariance in the exact-measurement limit (R = 0).

    This is the infimum of ``solve_dare`` over all PSD R and therefore the
    idealized floor on achievable steady-state accuracy.  H Sigma H^T must stay
    full rank along the iteration; a near-singular iterate raises.
    """
    R = np.zeros((model.n_y, model.n_y))
    return _iterate(model, R, tol, max_iter, sigma0, guard_innovation=True)


def check_assumptions(model: SystemModel) -> AssumptionDiagnostics:
    """Ranks of [H; HF; ...; HF^{n-1}] and [Q^{1/2}, F Q^{1/2}, ...], computed
    through the eigenvalues of their Gramians."""
    F, H = model.F, model.H
    n = model.n_x
    q_sqrt = psd_sqrt(model.Q)

    obs_blocks, blk = [], H.copy()
    ctr_blocks, cblk = [], q_sqrt.copy()
    for _ in range(n):
        obs_blocks.append(blk)
        ctr_blocks.append(cblk)
        blk = blk @ F
        cblk = F @ cblk
    obs = np.vstack(obs_blocks)
    ctr = np.hstack(ctr_blocks)
    return AssumptionDiagnostics(_gramian_rank(obs.T @ obs),
                                 _gramian_rank(ctr @ ctr.T), n)


def _gramian_rank(gram: Array) -> int:
    w = np.clip(np.linalg.eigvalsh(symmetrize(gram)), 0.0, None)
    svals = np.sqrt(w)
    top = svals[-1]
    if top == 0.0:
        return 0
    return int(np.count_nonzero(svals >= RANK_RTOL * top))
