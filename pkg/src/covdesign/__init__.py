"""Accuracy bounds, sensing-precision design and privacy-noise design for
linear-Gaussian tracking, with an in-repo dense SDP solver and a pixel-plane
Monte Carlo validator."""

from .design import (
    DesignValidationError,
    InfeasibleError,
    PrivacyDesign,
    PrivacySpec,
    UtilityDesign,
    UtilitySpec,
    design_privacy,
    design_utility,
    privacy_floor_from_position_diag,
    sigma_d_from_position_scale,
    theoretical_bound,
)
from .kalman import FilterState, InitialBelief, batch_ls_oracle, run_filter
from .riccati import (
    DareResult,
    SystemModel,
    check_assumptions,
    solve_dare,
    solve_dare_noiseless,
)
from .sdp import SdpProblem, SdpSolution, solve as solve_sdp
from .sim import Homography, McReport, PixelModel, monte_carlo

__all__ = [
    "DareResult",
    "DesignValidationError",
    "FilterState",
    "Homography",
    "InfeasibleError",
    "InitialBelief",
    "McReport",
    "PixelModel",
    "PrivacyDesign",
    "PrivacySpec",
    "SdpProblem",
    "SdpSolution",
    "SystemModel",
    "UtilityDesign",
    "UtilitySpec",
    "batch_ls_oracle",
    "check_assumptions",
    "design_privacy",
    "design_utility",
    "monte_carlo",
    "privacy_floor_from_position_diag",
    "run_filter",
    "sigma_d_from_position_scale",
    "solve_dare",
    "solve_dare_noiseless",
    "solve_sdp",
    "theoretical_bound",
]

__version__ = "0.1.0"
