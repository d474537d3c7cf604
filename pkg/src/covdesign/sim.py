"""Pixel-plane tracking study: constant-velocity trajectory synthesis, the
affine pixel/spatial homography, noise injection, and a Monte Carlo harness
producing per-frame RMSE and averaged empirical error covariances.

Randomness comes from numpy's seeded PCG64 generator; Gaussian vectors are
drawn as mean + L z with L a (PSD-tolerant) factor of the covariance, and run
k of a Monte Carlo experiment owns the stream seeded with seed + k, so
experiments are reproducible draw-for-draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kalman import InitialBelief
from .matlib import (
    Array,
    NotPositiveDefiniteError,
    as_square,
    psd_check,
    psd_sqrt,
    solve_spd,
    symmetrize,
)
from .riccati import SystemModel

PIXEL_F = np.array([[1., 0., 1., 0.],
                    [0., 1., 0., 1.],
                    [0., 0., 1., 0.],
                    [0., 0., 0., 1.]])
PIXEL_H = np.array([[1., 0., 0., 0.],
                    [0., 1., 0., 0.]])

#: Illustrative zig-zag circuit used by the scripted-waypoint mode (pixels).
#: The near-reversals are deliberately sharp so the mismatch with the
#: constant-velocity model shows up as clear RMSE peaks.
DEFAULT_WAYPOINTS = ((60.0, 60.0), (360.0, 60.0), (60.0, 110.0), (360.0, 160.0),
                     (60.0, 210.0), (360.0, 260.0), (60.0, 310.0), (360.0, 360.0),
                     (60.0, 410.0), (360.0, 460.0), (60.0, 510.0), (360.0, 510.0),
                     (60.0, 60.0))
DEFAULT_WAYPOINT_SPEED = 70.0


@dataclass(frozen=True)
class PixelModel:
    """Frame geometry plus the constant-velocity pixel dynamics."""

    n_r: int = 425
    n_c: int = 570
    frames: int = 500
    Q: Array = field(default_factory=lambda: np.diag([0.1, 0.1, 50.0, 50.0]))

    def __post_init__(self):
        object.__setattr__(self, "Q", symmetrize(as_square(self.Q, "Q")))
        if self.Q.shape != (4, 4):
            raise ValueError("pixel model state is 4-dimensional")

    @property
    def F(self) -> Array:
        return PIXEL_F.copy()

    @property
    def H(self) -> Array:
        return PIXEL_H.copy()

    def system(self) -> SystemModel:
        return SystemModel(self.F, self.H, self.Q)

    def default_init(self) -> InitialBelief:
        mu0 = np.array([self.n_r / 2.0, self.n_c / 2.0, 1.0, 1.0])
        return InitialBelief(mu0, np.diag([100.0, 100.0, 10.0, 10.0]))


@dataclass(frozen=True)
class Homography:
    """Affine map pixel = U @ spatial + offset between coordinate frames."""

    n_r: int = 425
    n_c: int = 570

    @property
    def U(self) -> Array:
        return np.array([[0.0, self.n_r / 4.0], [-self.n_c / 4.0, 0.0]])

    @property
    def offset(self) -> Array:
        return np.array([self.n_r / 2.0, self.n_c / 2.0])


@dataclass(frozen=True)
class McReport:
    rmse_per_frame: Array               # (frames,)
    mean_emp_cov_per_frame: Array       # (frames, 2, 2) position block
    filter_cov_per_frame: Array         # (frames, 2, 2) posterior position block
    nees_per_frame: Array               # (frames,)
    runs: int
    seed: int


def spatial_to_pixel_point(h: Homography, x) -> Array:
    return h.U @ np.asarray(x, dtype=float) + h.offset


def pixel_to_spatial_point(h: Homography, xp) -> Array:
    return np.linalg.solve(h.U, np.asarray(xp, dtype=float) - h.offset)


def spatial_to_pixel_cov(h: Homography, sigma_xx) -> Array:
    return symmetrize(h.U @ as_square(sigma_xx) @ h.U.T)


def pixel_to_spatial_cov(h: Homography, sigma_pp) -> Array:
    """Inverse covariance transform of the affine map: U^{-1} S U^{-T}."""
    sigma_pp = as_square(sigma_pp, "sigma_pp")
    if not psd_check(sigma_pp).is_psd:
        raise ValueError("sigma_pp must be positive semidefinite")
    u_inv = np.linalg.inv(h.U)
    return symmetrize(u_inv @ sigma_pp @ u_inv.T)


def _draw(rng: np.random.Generator, mean, factor: Array) -> Array:
    return np.asarray(mean, dtype=float) + factor @ rng.standard_normal(factor.shape[1])


def synthesize_trajectory(model: PixelModel, init: InitialBelief, seed: int,
                          frames: int | None = None, reflect: bool = False) -> Array:
    """States x_0 .. x_{frames-1} of x_{k+1} = F x_k + w_k with seeded draws of
    x_0 ~ N(mu0, sigma0) and w_k ~ N(0, Q).  With ``reflect`` the position
    bounces off the frame boundary (velocity sign flip)."""
    frames = model.frames if frames is None else frames
    rng = np.random.default_rng(seed)
    F = model.F
    q_factor = psd_sqrt(model.Q)
    s0_factor = psd_sqrt(init.sigma0)
    out = np.empty((frames, 4))
    out[0] = _draw(rng, init.mu0, s0_factor)
    for k in range(1, frames):
        out[k] = F @ out[k - 1] + _draw(rng, np.zeros(4), q_factor)
        if reflect:
            out[k] = _reflect(out[k], model.n_r, model.n_c)
    return out


def _reflect(x: Array, n_r: int, n_c: int) -> Array:
    x = x.copy()
    for axis, limit in ((0, float(n_r)), (1, float(n_c))):
        if x[axis] < 0.0:
            x[axis] = -x[axis]
            x[axis + 2] = -x[axis + 2]
        elif x[axis] > limit:
            x[axis] = 2.0 * limit - x[axis]
            x[axis + 2] = -x[axis + 2]
    return x


def waypoint_trajectory(model: PixelModel, frames: int | None = None,
                        waypoints=DEFAULT_WAYPOINTS,
                        speed: float = DEFAULT_WAYPOINT_SPEED) -> Array:
    """Piecewise constant-velocity path through waypoints (looped), one pixel
    frame per step.  Deliberately violates the linear model at the turns."""
    frames = model.frames if frames is None else frames
    pts = [np.asarray(p, dtype=float) for p in waypoints]
    if len(pts) < 2:
        raise ValueError("need at least two waypoints")
    out = np.empty((frames, 4))
    seg = 0
    pos = pts[0].copy()
    direction = _unit(pts[1] - pts[0])
    for k in range(frames):
        out[k, :2] = pos
        out[k, 2:] = speed * direction
        pos = pos + speed * direction
        # advance through as many segment ends as the step crossed
        while np.linalg.norm(pts[(seg + 1) % len(pts)] - pos) < speed:
            seg = (seg + 1) % len(pts)
            nxt = (seg + 1) % len(pts)
            if np.allclose(pts[nxt], pts[seg]):
                nxt = (nxt + 1) % len(pts)
            direction = _unit(pts[nxt] - pts[seg])
    return out


def _unit(v: Array) -> Array:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("degenerate waypoint segment")
    return v / n


def measure(states, R, seed: int) -> Array:
    """y_k = H x_k + n_k with n_k ~ N(0, R), one row per provided state."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    R = symmetrize(as_square(R, "R"))
    rng = np.random.default_rng(seed)
    factor = psd_sqrt(R)
    noise = rng.standard_normal((states.shape[0], R.shape[0])) @ factor.T
    return states @ PIXEL_H.T + noise


def perturb_frame_measurement(y, R_p, seed: int) -> Array:
    """Privacy perturbation of one frame's measurement: y + n_p, n_p ~ N(0, R_p)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    R_p = symmetrize(as_square(R_p, "R_p"))
    rng = np.random.default_rng(seed)
    return y + psd_sqrt(R_p) @ rng.standard_normal(y.size)


def _covariance_schedule(model: SystemModel, R: Array, sigma0: Array, frames: int):
    """Posterior covariance and gain sequences (measurement-independent).

    Singular innovation covariances (possible in noise-free corner cases) fall
    back to the pseudo-inverse gain, whose zero-information directions get
    zero gain.
    """
    n = model.n_x
    cov_post = np.empty((frames, n, n))
    gains = np.empty((frames, n, model.n_y))
    cov_post[0] = sigma0
    gains[0] = 0.0
    cov = sigma0
    for k in range(1, frames):
        prior = symmetrize(model.F @ cov @ model.F.T + model.Q)
        innov = symmetrize(model.H @ prior @ model.H.T + R)
        try:
            K = solve_spd(innov, model.H @ prior).T
        except NotPositiveDefiniteError:
            K = (np.linalg.pinv(innov, rcond=1e-12) @ (model.H @ prior)).T
        cov = symmetrize((np.eye(n) - K @ model.H) @ prior)
        cov_post[k] = cov
        gains[k] = K
    return cov_post, gains


def monte_carlo(model: PixelModel, R, init: InitialBelief, runs: int, seed: int,
                frames: int | None = None, waypoint_mode: bool = False,
                waypoints=DEFAULT_WAYPOINTS,
                waypoint_speed: float = DEFAULT_WAYPOINT_SPEED) -> McReport:
    """Monte Carlo filter study with randomized initial conditions.

    Each run draws a fresh truth (x_0 ~ N(mu0, sigma0), or the scripted
    waypoint path) and measurement noise from its own stream (seed + run); all
    runs share the filter covariance schedule, which never depends on the
    measurements.  Reported position statistics are posterior quantities.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    frames = model.frames if frames is None else frames
    R = symmetrize(as_square(R, "R"))
    system = model.system()
    F, H = system.F, system.H

    cov_post, gains = _covariance_schedule(system, R, init.sigma0, frames)
    filter_cov = cov_post[:, :2, :2].copy()

    q_factor = psd_sqrt(model.Q)
    r_factor = psd_sqrt(R)
    s0_factor = psd_sqrt(init.sigma0)

    if waypoint_mode:
        base_truth = waypoint_trajectory(model, frames, waypoints, waypoint_speed)

    truths = np.empty((runs, frames, 4))
    noises = np.empty((runs, frames, 2))
    for r in range(runs):
        rng = np.random.default_rng(seed + r)
        if waypoint_mode:
            truths[r] = base_truth
        else:
            truths[r, 0] = _draw(rng, init.mu0, s0_factor)
            w = rng.standard_normal((frames - 1, 4)) @ q_factor.T
            for k in range(1, frames):
                truths[r, k] = F @ truths[r, k - 1] + w[k - 1]
        noises[r] = rng.standard_normal((frames, 2)) @ r_factor.T

    if waypoint_mode:
        mu0 = np.concatenate([np.asarray(waypoints[0], dtype=float),
                              base_truth[0, 2:]])
    else:
        mu0 = init.mu0

    means = np.tile(mu0, (runs, 1))
    errors = np.empty((runs, frames, 2))
    errors[:, 0, :] = means[:, :2] - truths[:, 0, :2]
    for k in range(1, frames):
        pred = means @ F.T
        y = truths[:, k] @ H.T + noises[:, k]
        means = pred + (y - pred @ H.T) @ gains[k].T
        errors[:, k, :] = means[:, :2] - truths[:, k, :2]

    rmse = np.sqrt(np.mean(np.sum(errors ** 2, axis=2), axis=0))
    emp_cov = np.einsum("rki,rkj->kij", errors, errors) / runs
    nees = np.empty(frames)
    for k in range(frames):
        p_inv = np.linalg.inv(filter_cov[k] + 1e-30 * np.eye(2))
        nees[k] = float(np.mean(np.einsum("ri,ij,rj->r", errors[:, k, :], p_inv,
                                          errors[:, k, :])))
    return McReport(rmse, emp_cov, filter_cov, nees, runs, seed)


def report_rows(report: McReport):
    """CSV rows: frame, rmse, empirical and filter position covariances."""
    for k in range(report.rmse_per_frame.size):
        e, f = report.mean_emp_cov_per_frame[k], report.filter_cov_per_frame[k]
        yield (k, report.rmse_per_frame[k], e[0, 0], e[0, 1], e[1, 1],
               f[0, 0], f[0, 1], f[1, 1])


def report_to_dict(report: McReport) -> dict:
    return {
        "runs": report.runs,
        "seed": report.seed,
        "rmse_per_frame": report.rmse_per_frame.tolist(),
        "mean_emp_cov_per_frame": report.mean_emp_cov_per_frame.tolist(),
        "filter_cov_per_frame": report.filter_cov_per_frame.tolist(),
        "nees_per_frame": report.nees_per_frame.tolist(),
    }
