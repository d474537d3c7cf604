"""Design procedures for sensing precision (utility) and injected noise
(privacy): assemble the LMI data, run the SDP solver, and post-validate the
delivered guarantee with independent arithmetic.

Both optimization problems can sit exactly on the feasibility boundary when
the prescribed covariance is itself a Riccati fixed point (the constraint then
holds with equality and has no strict interior).  The design layer handles
this by re-solving a slightly relaxed problem and then lifting the returned
variable by the smallest multiple of the identity that restores feasibility of
the *original* inequality; monotonicity of the Riccati map in the noise
covariance makes the lifted design satisfy its guarantee exactly, which is
re-checked before anything is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import sdp
from .matlib import (
    Array,
    NotPositiveDefiniteError,
    SingularMatrixError,
    as_square,
    chol,
    frob,
    min_eig,
    psd_check,
    solve_spd,
    sym_eig,
    symmetrize,
)
from .riccati import SystemModel, riccati_map, solve_dare, solve_dare_noiseless

#: Detection in pixel coordinates cannot resolve below this measurement-noise
#: level (one pixel squared per coordinate); the published reference bounds
#: for the pixel study are computed at this floor.  Pass ``noise_floor=None``
#: for the idealized zero-noise limit.
DEFAULT_PIXEL_NOISE_FLOOR = 1.0

#: Relaxation ladder applied (relative to the constraint-block scale) when the
#: assembled LMI has no strict interior.
RELAX_LADDER = (1e-8, 1e-7, 1e-6, 1e-5)

GUARANTEE_TOL = 1e-6        # absolute, from the design contracts
INPUT_TOL = 1e-8            # relative feasibility tolerance on design inputs


class InfeasibleError(ValueError):
    """The prescribed covariance target cannot be met by any noise design."""

    def __init__(self, message: str, bound: Array | None = None):
        super().__init__(message)
        self.bound = bound


class DesignValidationError(RuntimeError):
    """Post-validation of a computed design failed; never silently returned."""


def _floor_matrix(noise_floor, n_y: int) -> Array:
    if np.isscalar(noise_floor):
        return float(noise_floor) * np.eye(n_y)
    return symmetrize(as_square(noise_floor, "noise_floor"))


@dataclass(frozen=True)
class UtilitySpec:
    """Prescribed steady-state prior covariance bound and objective weight."""

    model: SystemModel
    sigma_d_inf: Array
    W: Array

    def __post_init__(self):
        sd = symmetrize(as_square(self.sigma_d_inf, "sigma_d_inf"))
        W = as_square(self.W, "W")
        n, ny = self.model.n_x, self.model.n_y
        if sd.shape != (n, n):
            raise ValueError(f"sigma_d_inf has shape {sd.shape}, expected ({n}, {n})")
        if W.shape != (ny, ny):
            raise ValueError(f"W has shape {W.shape}, expected ({ny}, {ny})")
        chol(sd)  # must be positive definite
        object.__setattr__(self, "sigma_d_inf", sd)
        object.__setattr__(self, "W", W)


@dataclass(frozen=True)
class UtilityDesign:
    upsilon_opt: Array
    R_opt: Array
    objective: float
    achieved_sigma_inf: Array
    certificate: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PrivacySpec:
    """Privacy floor on the next predicted covariance, given the current prior
    and the inherent sensing noise."""

    model: SystemModel
    sigma_prior: Array
    R_s: Array
    sigma_d_next: Array
    W: Array

    def __post_init__(self):
        n, ny = self.model.n_x, self.model.n_y
        sp = symmetrize(as_square(self.sigma_prior, "sigma_prior"))
        rs = symmetrize(as_square(self.R_s, "R_s"))
        sd = symmetrize(as_square(self.sigma_d_next, "sigma_d_next"))
        W = as_square(self.W, "W")
        if sp.shape != (n, n) or sd.shape != (n, n):
            raise ValueError("sigma_prior and sigma_d_next must be n_x x n_x")
        if rs.shape != (ny, ny) or W.shape != (ny, ny):
            raise ValueError("R_s and W must be n_y x n_y")
        for name, m in (("sigma_prior", sp), ("R_s", rs), ("sigma_d_next", sd)):
            if not psd_check(m).is_psd:
                raise ValueError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "sigma_prior", sp)
        object.__setattr__(self, "R_s", rs)
        object.__setattr__(self, "sigma_d_next", sd)
        object.__setattr__(self, "W", W)


@dataclass(frozen=True)
class PrivacyDesign:
    R_p_opt: Array
    achieved_sigma_next: Array
    achieved_sigma_post: Array
    objective: float
    certificate: dict = field(default_factory=dict)


def theoretical_bound(model: SystemModel, noise_floor=DEFAULT_PIXEL_NOISE_FLOOR) -> Array:
    """Best achievable steady-state prior covariance at a given sensing floor.

    ``noise_floor`` is the measurement-noise covariance no detector can beat
    (scalar r means r * I); ``None`` requests the idealized zero-noise limit.
    The default of one pixel squared per coordinate reproduces the published
    pixel-plane reference values.
    """
    if noise_floor is None:
        result = solve_dare_noiseless(model)
    else:
        result = solve_dare(model, _floor_matrix(noise_floor, model.n_y))
    if not result.converged:
        raise DesignValidationError(
            f"bound DARE did not converge (residual {result.residual:.3e})")
    return result.sigma_inf


def sigma_d_from_position_scale(model: SystemModel, position_scale: float,
                                noise_floor=DEFAULT_PIXEL_NOISE_FLOOR) -> Array:
    """Full prescribed covariance whose position diagonal sits at
    ``position_scale`` times the reference bound's.

    The whole bound matrix is scaled, keeping the velocity and cross blocks
    proportionally consistent with the reference steady state; scaling only
    the position block would leave the target unreachable by any finite-noise
    design.
    """
    if position_scale <= 0.0:
        raise ValueError("position_scale must be positive")
    return position_scale * theoretical_bound(model, noise_floor)


def utility_lmi_data(spec: UtilitySpec) -> sdp.SdpProblem:
    """LMI data for the precision design: variable Ups (n_y x n_y), cost
    W^T W, constraint [[M11, F Sd H^T], [H Sd F^T, L + L Ups L]] >= 0 with
    L = H Sd H^T."""
    F, H, Q = spec.model.F, spec.model.H, spec.model.Q
    Sd = spec.sigma_d_inf
    n, ny = spec.model.n_x, spec.model.n_y
    L = symmetrize(H @ Sd @ H.T)
    try:
        chol(L)
    except NotPositiveDefiniteError:
        raise SingularMatrixError("H sigma_d H^T must be positive definite") from None
    B = F @ Sd @ H.T
    M11 = symmetrize(Sd - F @ Sd @ F.T - Q + B @ solve_spd(L, B.T))
    G0 = np.block([[M11, B], [B.T, L]])
    basis = sdp.sym_basis(ny)
    lam = np.zeros((basis.shape[0], n + ny, n + ny))
    for k in range(basis.shape[0]):
        lam[k, n:, n:] = L @ basis[k] @ L
    return sdp.SdpProblem(var_dim=ny, cost=spec.W.T @ spec.W,
                          constant_block=G0, lin_map=lam)


def privacy_lmi_data(spec: PrivacySpec) -> sdp.SdpProblem:
    """LMI data for the injected-noise design: variable R_p, cost W^T W,
    constraint [[M11, L1], [L1^T, L2 + R_p]] >= 0 with L1 = F Sp H^T and
    L2 = H Sp H^T + R_s."""
    F, H, Q = spec.model.F, spec.model.H, spec.model.Q
    Sp = spec.sigma_prior
    n, ny = spec.model.n_x, spec.model.n_y
    L1 = F @ Sp @ H.T
    L2 = symmetrize(H @ Sp @ H.T + spec.R_s)
    try:
        chol(L2)
    except NotPositiveDefiniteError:
        raise SingularMatrixError(
            "H sigma_prior H^T + R_s must be positive definite") from None
    M11 = symmetrize(-spec.sigma_d_next + F @ Sp @ F.T + Q)
    G0 = np.block([[M11, L1], [L1.T, L2]])
    basis = sdp.sym_basis(ny)
    lam = np.zeros((basis.shape[0], n + ny, n + ny))
    for k in range(basis.shape[0]):
        lam[k, n:, n:] = basis[k]
    return sdp.SdpProblem(var_dim=ny, cost=spec.W.T @ spec.W,
                          constant_block=G0, lin_map=lam)


def _solve_with_relaxation(problem: sdp.SdpProblem, gap_tol: float,
                           trace: Callable[[str], None] | None):
    """Solve the LMI; on empty- or razor-thin-interior instances retry with
    G0 + eta I, walking eta up until the barrier succeeds."""
    solution = sdp.solve(problem, gap_tol, trace)
    eta_used = 0.0
    if solution.status == sdp.NUMERICAL_FAILURE:
        scale = problem.scale()
        for eta_rel in RELAX_LADDER:
            eta = eta_rel * scale
            relaxed = replace(problem, constant_block=problem.constant_block
                              + eta * np.eye(problem.block_dim))
            solution = sdp.solve(relaxed, gap_tol, trace)
            if solution.status == sdp.OPTIMAL:
                eta_used = eta
                break
    return solution, eta_used


def _lift_to_feasibility(problem: sdp.SdpProblem, S: Array) -> tuple[Array, float]:
    """Smallest beta >= 0 such that S + beta I satisfies the original LMI.

    Both LMIs here are monotone in the variable (it only enters the (2,2)
    block positively), so lifting along the identity always moves toward
    feasibility.
    """
    tol = 1e-12 * problem.scale()

    def feasible(cand: Array) -> bool:
        return (float(np.linalg.eigvalsh(problem.constraint(cand))[0]) >= -tol
                and float(np.linalg.eigvalsh(symmetrize(cand))[0]) >= -tol)

    if feasible(S):
        return S, 0.0
    eye = np.eye(S.shape[0])
    hi = 1e-12 * (1.0 + float(np.trace(S)))
    while not feasible(S + hi * eye):
        hi *= 2.0
        if hi > 1e9 * problem.scale():
            raise InfeasibleError(
                "target sits on the feasibility boundary; no finite design "
                "satisfies the original inequality")
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if feasible(S + mid * eye):
            hi = mid
        else:
            lo = mid
    return symmetrize(S + hi * eye), hi


def _invert_with_floor(ups: Array, certificate: dict) -> Array:
    """R = Ups^{-1} with an eigenvalue floor of 1e-12 for singular precision."""
    w, v = sym_eig(ups)
    floor = 1e-12 * max(1.0, float(w[-1]))
    if w[0] < floor:
        certificate.setdefault("warnings", []).append(
            f"upsilon_opt nearly singular (min eigenvalue {w[0]:.3e}); "
            "inverse taken with eigenvalue floor")
        w = np.maximum(w, floor)
    return symmetrize((v / w) @ v.T)


def design_utility(spec: UtilitySpec, gap_tol: float = 1e-8,
                   trace: Callable[[str], None] | None = None) -> UtilityDesign:
    """Cheapest sensing precision whose steady-state covariance stays below
    the prescribed ``sigma_d_inf``; the guarantee is re-verified by solving
    the DARE at the returned noise covariance."""
    model = spec.model
    lb = None
    try:
        lb = solve_dare_noiseless(model).sigma_inf
    except SingularMatrixError:
        lb = None  # zero-noise limit undefined for this model; SDP decides
    if lb is not None:
        gap = min_eig(spec.sigma_d_inf - lb)
        if gap < -INPUT_TOL * (1.0 + frob(lb)):
            raise InfeasibleError(
                "utility target below theoretical bound: sigma_d_inf is not "
                "above the zero-noise steady-state covariance", bound=lb)

    problem = utility_lmi_data(spec)
    solution, eta = _solve_with_relaxation(problem, gap_tol, trace)
    if solution.status == sdp.INFEASIBLE:
        raise InfeasibleError(
            "utility target below theoretical bound: the precision LMI is "
            "infeasible", bound=lb)
    if solution.status != sdp.OPTIMAL:
        raise DesignValidationError(
            f"SDP failed: {solution.diagnostics.get('reason', 'unknown')}")

    certificate = {"gap_bound": solution.gap_bound,
                   "phase1_margin": solution.phase1_margin,
                   "relaxation_eta": eta,
                   "warnings": list(solution.diagnostics.get("warnings", []))}
    ups, beta = _lift_to_feasibility(problem, solution.S_opt)
    certificate["lift_beta"] = beta
    R_opt = _invert_with_floor(ups, certificate)
    if min_eig(R_opt) < 1e-9:
        # only noise-free sensing would meet the target; treat as unreachable
        raise InfeasibleError(
            "utility target achievable only in the infinite-precision limit; "
            "prescribe a covariance strictly above the theoretical bound",
            bound=lb)

    achieved = solve_dare(model, R_opt, tol=1e-11)
    if not achieved.converged:
        raise DesignValidationError("DARE at the designed R did not converge")
    slack = min_eig(spec.sigma_d_inf + GUARANTEE_TOL * np.eye(model.n_x)
                    - achieved.sigma_inf)
    if slack < 0.0:
        raise DesignValidationError(
            f"designed precision violates the covariance bound by {-slack:.3e}")
    certificate["guarantee_slack"] = slack
    objective = float(np.trace(spec.W @ ups @ spec.W.T))
    return UtilityDesign(ups, R_opt, objective, achieved.sigma_inf, certificate)


def one_step_prediction(model: SystemModel, sigma_prior: Array, R_total: Array) -> Array:
    """Predicted covariance after one propagate/update cycle at total
    measurement noise R_total (fresh arithmetic, used for validation)."""
    return riccati_map(model, symmetrize(R_total), symmetrize(sigma_prior))


def design_privacy(spec: PrivacySpec, gap_tol: float = 1e-8,
                   trace: Callable[[str], None] | None = None) -> PrivacyDesign:
    """Minimal injected measurement noise keeping the next predicted
    covariance above the prescribed floor."""
    model = spec.model
    open_loop = symmetrize(model.F @ spec.sigma_prior @ model.F.T + model.Q)
    gap = min_eig(open_loop - spec.sigma_d_next)
    if gap < -INPUT_TOL * (1.0 + frob(open_loop)):
        raise InfeasibleError(
            "privacy floor above the open-loop covariance: injected noise can "
            "at most push the prediction up to F Sigma F^T + Q",
            bound=open_loop)

    problem = privacy_lmi_data(spec)
    solution, eta = _solve_with_relaxation(problem, gap_tol, trace)
    if solution.status == sdp.INFEASIBLE:
        raise InfeasibleError("privacy floor unreachable: the LMI is infeasible",
                              bound=open_loop)
    if solution.status != sdp.OPTIMAL:
        raise DesignValidationError(
            f"SDP failed: {solution.diagnostics.get('reason', 'unknown')}")

    certificate = {"gap_bound": solution.gap_bound,
                   "phase1_margin": solution.phase1_margin,
                   "relaxation_eta": eta,
                   "warnings": list(solution.diagnostics.get("warnings", []))}
    R_p, beta = _lift_to_feasibility(problem, solution.S_opt)
    certificate["lift_beta"] = beta
    if frob(R_p) > 1e8 * (1.0 + frob(open_loop)):
        # the floor touches the open-loop covariance; only unbounded noise works
        raise InfeasibleError(
            "privacy floor reachable only with unbounded injected noise; "
            "prescribe a floor strictly below the open-loop covariance",
            bound=open_loop)

    R_total = symmetrize(spec.R_s + R_p)
    achieved = one_step_prediction(model, spec.sigma_prior, R_total)
    slack = min_eig(achieved - spec.sigma_d_next
                    + GUARANTEE_TOL * np.eye(model.n_x))
    if slack < 0.0:
        raise DesignValidationError(
            f"designed noise violates the privacy floor by {-slack:.3e}")
    certificate["guarantee_slack"] = slack

    H = model.H
    innov = symmetrize(H @ achieved @ H.T + R_total)
    gain_t = solve_spd(innov, H @ achieved)
    posterior = symmetrize(achieved - (achieved @ H.T) @ gain_t)
    objective = float(np.trace(spec.W @ R_p @ spec.W.T))
    return PrivacyDesign(R_p, achieved, posterior, objective, certificate)


def privacy_floor_from_position_diag(model: SystemModel, sigma_prior: Array,
                                     R_s: Array, position_diag,
                                     interior_margin: float = 1e-6) -> Array:
    """Construct a full privacy floor from requested position-variance values.

    Finds the smallest isotropic injected noise r I whose one-step prediction
    covers the requested position diagonal, takes that prediction as the
    template (so velocity and cross terms are consistent with the one-step
    dynamics), pins the position diagonal to the requested values and backs
    everything off by ``interior_margin`` so the resulting LMI has a strict
    interior.
    """
    targets = np.asarray(position_diag, dtype=float).reshape(-1)
    k = targets.size
    sigma_prior = symmetrize(as_square(sigma_prior, "sigma_prior"))
    R_s = symmetrize(as_square(R_s, "R_s"))

    def predicted(r: float) -> Array:
        return one_step_prediction(model, sigma_prior,
                                   R_s + r * np.eye(model.n_y))

    def covered(r: float) -> bool:
        return bool(np.all(np.diag(predicted(r))[:k] >= targets))

    if covered(0.0):
        r_star = 0.0
    else:
        hi = 1.0
        while not covered(hi):
            hi *= 2.0
            if hi > 1e12:
                raise InfeasibleError(
                    "requested position floor above the open-loop covariance")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if covered(mid):
                hi = mid
            else:
                lo = mid
        r_star = hi

    template = predicted(r_star)
    excess = symmetrize(template[:k, :k] - np.diag(targets))
    w, v = sym_eig(excess)
    excess_psd = symmetrize((v * np.clip(w, 0.0, None)) @ v.T)
    floor = template.copy()
    floor[:k, :k] -= excess_psd
    return symmetrize(floor - interior_margin * np.eye(model.n_x))
