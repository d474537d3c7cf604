"""Kalman filter recursion (gain, propagation, update) plus a batch
least-squares oracle used to cross-check the recursion in tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matlib import Array, SingularMatrixError, psd_check, solve_spd, symmetrize
from .riccati import SystemModel

MAX_BATCH_HORIZON = 20


@dataclass(frozen=True)
class InitialBelief:
    mu0: Array
    sigma0: Array

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=float).reshape(-1)
        sigma0 = symmetrize(np.asarray(self.sigma0, dtype=float))
        if sigma0.shape != (mu0.size, mu0.size):
            raise ValueError(f"sigma0 has shape {sigma0.shape}, expected "
                             f"({mu0.size}, {mu0.size})")
        if not psd_check(sigma0).is_psd:
            raise ValueError("sigma0 must be positive semidefinite")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", sigma0)


@dataclass(frozen=True)
class FilterState:
    """Belief at one frame: prior and posterior mean/covariance plus the gain
    used by the update (None before the first update)."""

    mean_prior: Array
    cov_prior: Array
    mean_post: Array
    cov_post: Array
    gain: Array | None
    frame: int


def initial_state(init: InitialBelief) -> FilterState:
    return FilterState(init.mu0, init.sigma0, init.mu0, init.sigma0, None, 0)


def predict(state: FilterState, model: SystemModel) -> FilterState:
    """Propagate the posterior of frame k to the prior of frame k+1."""
    if state.mean_post.size != model.n_x:
        raise ValueError(f"state dimension {state.mean_post.size} does not match "
                         f"model n_x={model.n_x}")
    mean = model.F @ state.mean_post
    cov = symmetrize(model.F @ state.cov_post @ model.F.T + model.Q)
    return FilterState(mean, cov, mean, cov, None, state.frame + 1)


def update(state: FilterState, model: SystemModel, R: Array, y) -> FilterState:
    """Fuse measurement y into the prior of the current frame."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != model.n_y:
        raise ValueError(f"measurement dimension {y.size} != n_y={model.n_y}")
    H = model.H
    innov_cov = symmetrize(H @ state.cov_prior @ H.T + R)
    lam = float(np.linalg.eigvalsh(innov_cov)[0])
    if lam <= 1e-12 * max(1.0, float(np.linalg.eigvalsh(innov_cov)[-1])):
        raise SingularMatrixError(
            f"singular innovation covariance: min eigenvalue {lam:.3e}")
    gain = solve_spd(innov_cov, H @ state.cov_prior).T    # Sigma^- H^T S^{-1}
    mean = state.mean_prior + gain @ (y - H @ state.mean_prior)
    cov = symmetrize((np.eye(model.n_x) - gain @ H) @ state.cov_prior)
    return FilterState(state.mean_prior, state.cov_prior, mean, cov, gain,
                       state.frame)


def run_filter(model: SystemModel, R, init: InitialBelief,
               measurements) -> list[FilterState]:
    """Alternate predict/update from the initial belief, one state per
    measurement (measurement k is fused at frame k, counting from 1).

    The covariance sequence depends only on (model, R, sigma0), never on the
    measurement values.
    """
    state = initial_state(init)
    out: list[FilterState] = []
    for y in measurements:
        state = update(predict(state, model), model, R, y)
        out.append(state)
    return out


def batch_ls_oracle(model: SystemModel, R, init: InitialBelief,
                    measurements) -> tuple[Array, Array]:
    """Information-form MAP estimate over the whole trajectory, marginalized to
    the final state.  Test oracle for run_filter; horizons are capped because
    the normal equations are dense.

    Returns (final posterior mean, final posterior covariance).
    """
    ys = [np.asarray(y, dtype=float).reshape(-1) for y in measurements]
    N = len(ys)
    if N == 0:
        raise ValueError("need at least one measurement")
    if N > MAX_BATCH_HORIZON:
        raise ValueError(f"horizon {N} exceeds cap {MAX_BATCH_HORIZON}")
    n, F, H, Q = model.n_x, model.F, model.H, model.Q
    R = symmetrize(np.asarray(R, dtype=float))

    try:
        R_inv = solve_spd(R, np.eye(model.n_y))
        sig0_inv = solve_spd(init.sigma0, np.eye(n))
    except Exception as exc:
        raise SingularMatrixError(f"singular information matrix: {exc}") from None

    if np.all(model.Q == 0.0):
        # Deterministic dynamics: the whole trajectory is a function of x_0.
        info = sig0_inv.copy()
        rhs = sig0_inv @ init.mu0
        Fk = np.eye(n)
        for y in ys:
            Fk = F @ Fk
            HFk = H @ Fk
            info += HFk.T @ R_inv @ HFk
            rhs += HFk.T @ R_inv @ y
        x0 = np.linalg.solve(info, rhs)
        cov0 = np.linalg.inv(symmetrize(info))
        FN = np.linalg.matrix_power(F, N)
        return FN @ x0, symmetrize(FN @ cov0 @ FN.T)

    try:
        Q_inv = solve_spd(Q, np.eye(n))
    except Exception:
        raise SingularMatrixError(
            "singular information matrix: Q neither zero nor positive definite"
        ) from None

    dim = (N + 1) * n
    J = np.zeros((dim, dim))
    b = np.zeros(dim)

    def blk(i):
        return slice(i * n, (i + 1) * n)

    J[blk(0), blk(0)] += sig0_inv
    b[blk(0)] += sig0_inv @ init.mu0
    for k in range(N):
        J[blk(k), blk(k)] += F.T @ Q_inv @ F
        J[blk(k), blk(k + 1)] += -(F.T @ Q_inv)
        J[blk(k + 1), blk(k)] += -(Q_inv @ F)
        J[blk(k + 1), blk(k + 1)] += Q_inv
    for k, y in enumerate(ys, start=1):
        J[blk(k), blk(k)] += H.T @ R_inv @ H
        b[blk(k)] += H.T @ R_inv @ y

    try:
        z = np.linalg.solve(J, b)
        unit = np.zeros((dim, n))
        unit[blk(N), :] = np.eye(n)
        cov_last = np.linalg.solve(J, unit)[blk(N), :]
    except np.linalg.LinAlgError:
        raise SingularMatrixError("singular information matrix") from None
    return z[blk(N)], symmetrize(cov_last)
