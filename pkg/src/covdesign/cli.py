"""Command-line surface: compute bounds, run the two designs, run Monte Carlo
simulations, and emit machine-readable reports.

    covdesign <bound|utility|privacy|simulate> --config file.json
              [--out dir] [--trace file] [--seed N]

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 infeasible
target.  All floats in emitted files are rounded to 9 significant digits and a
fixed seed makes every output byte-identical across runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import design, sim
from .kalman import InitialBelief
from .matlib import NotPositiveDefiniteError, SingularMatrixError, psd_check, symmetrize
from .riccati import SystemModel, check_assumptions

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _round9(value):
    """Round every float to 9 significant digits, recursively."""
    if isinstance(value, float):
        return float(f"{value:.9g}")
    if isinstance(value, dict):
        return {k: _round9(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round9(v) for v in value]
    return value


def _matrix(cfg: dict, field: str, shape=None, default=None, scalar_dim=None):
    """Parse a nested-array matrix; a bare number means that multiple of I."""
    parts = field.split(".")
    node = cfg
    for p in parts:
        if not isinstance(node, dict) or p not in node:
            if default is not None:
                return default
            raise ConfigError(field, "missing required field")
        node = node[p]
    if isinstance(node, (int, float)) and scalar_dim is not None:
        return float(node) * np.eye(scalar_dim)
    try:
        mat = np.asarray(node, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(field, "not a numeric matrix") from None
    if mat.ndim != 2:
        raise ConfigError(field, f"expected a 2-d array, got shape {mat.shape}")
    if shape is not None and mat.shape != shape:
        raise ConfigError(field, f"expected shape {shape}, got {mat.shape}")
    return mat


def _parse_model(cfg: dict) -> tuple[SystemModel, sim.PixelModel | None]:
    node = cfg.get("model", "pixel")
    if node == "pixel":
        pm = sim.PixelModel()
        return pm.system(), pm
    if not isinstance(node, dict):
        raise ConfigError("model", "must be 'pixel' or an object with F, H, Q")
    F = _matrix(cfg, "model.F")
    H = _matrix(cfg, "model.H")
    Q = _matrix(cfg, "model.Q", shape=F.shape)
    try:
        model = SystemModel(F, H, Q)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None
    pm = None
    if model.n_x == 4 and np.array_equal(F, sim.PIXEL_F) and np.array_equal(H, sim.PIXEL_H):
        pm = sim.PixelModel(Q=Q)
    return model, pm


def _parse_homography(cfg: dict) -> sim.Homography | None:
    node = cfg.get("homography")
    if node is None:
        return sim.Homography() if cfg.get("model", "pixel") == "pixel" else None
    if not isinstance(node, dict):
        raise ConfigError("homography", "must be an object with n_r, n_c")
    try:
        return sim.Homography(int(node["n_r"]), int(node["n_c"]))
    except KeyError as exc:
        raise ConfigError(f"homography.{exc.args[0]}", "missing required field") from None


def _noise_floor(cfg: dict, section: str, n_y: int):
    node = cfg.get(section, {})
    floor = node.get("noise_floor", design.DEFAULT_PIXEL_NOISE_FLOOR)
    if floor is None:
        return None
    if isinstance(floor, (int, float)):
        return None if float(floor) == 0.0 else float(floor) * np.eye(n_y)
    return _matrix(cfg, f"{section}.noise_floor", shape=(n_y, n_y))


def _spatial_blocks(h: sim.Homography | None, pixel_cov) -> dict | None:
    if h is None or pixel_cov.shape[0] < 2:
        return None
    return sim.pixel_to_spatial_cov(h, pixel_cov[:2, :2]).tolist()


def cmd_bound(cfg: dict, out_dir: Path, trace_path: Path | None, seed) -> dict:
    model, _ = _parse_model(cfg)
    h = _parse_homography(cfg)
    floor = _noise_floor(cfg, "bound", model.n_y)

    diag = check_assumptions(model)
    warnings = []
    if not diag.observable:
        warnings.append(f"observability matrix rank {diag.observability_rank} "
                        f"< {diag.n_x}: detectability not established")
    if not diag.controllable:
        warnings.append(f"controllability matrix rank {diag.controllability_rank} "
                        f"< {diag.n_x}: stabilizability not established")

    bound = design.theoretical_bound(model, floor)
    report = {
        "command": "bound",
        "noise_floor": None if floor is None else floor.tolist(),
        "bound_pixel": bound.tolist(),
        "bound_pixel_position": bound[:2, :2].tolist() if model.n_x >= 2 else None,
        "bound_spatial_position": _spatial_blocks(h, bound),
        "diagnostics": {"observability_rank": diag.observability_rank,
                        "controllability_rank": diag.controllability_rank},
        "warnings": warnings,
    }
    if floor is not None:
        # the zero-noise limit is reported alongside the floor-level bound
        try:
            ideal = design.theoretical_bound(model, None)
            report["bound_pixel_idealized"] = ideal.tolist()
            report["bound_spatial_position_idealized"] = _spatial_blocks(h, ideal)
        except (SingularMatrixError, design.DesignValidationError) as exc:
            report["bound_pixel_idealized"] = None
            warnings.append(f"zero-noise bound unavailable: {exc}")
    return report


def _trace_sink(trace_path: Path | None):
    if trace_path is None:
        return None, None
    lines: list[str] = []
    return lines.append, lines


def cmd_utility(cfg: dict, out_dir: Path, trace_path: Path | None, seed) -> dict:
    model, _ = _parse_model(cfg)
    node = cfg.get("utility")
    if not isinstance(node, dict):
        raise ConfigError("utility", "missing configuration block")
    target = node.get("target")
    if not isinstance(target, dict):
        raise ConfigError("utility.target", "need sigma_d or position_scale")
    floor = _noise_floor(cfg, "utility", model.n_y)
    if "sigma_d" in target:
        sigma_d = _matrix(cfg, "utility.target.sigma_d",
                          shape=(model.n_x, model.n_x))
    elif "position_scale" in target:
        sigma_d = design.sigma_d_from_position_scale(
            model, float(target["position_scale"]), floor)
    else:
        raise ConfigError("utility.target", "need sigma_d or position_scale")
    W = _matrix(cfg, "utility.W", shape=(model.n_y, model.n_y),
                default=np.eye(model.n_y), scalar_dim=model.n_y)

    sink, lines = _trace_sink(trace_path)
    spec = design.UtilitySpec(model, sigma_d, W)
    result = design.design_utility(spec, trace=sink)
    if trace_path is not None:
        trace_path.write_text("\n".join(lines) + "\n")
    return {
        "command": "utility",
        "sigma_d": sigma_d.tolist(),
        "upsilon_opt": result.upsilon_opt.tolist(),
        "R_opt": result.R_opt.tolist(),
        "objective": result.objective,
        "achieved_sigma_inf": result.achieved_sigma_inf.tolist(),
        "certificate": {k: v for k, v in result.certificate.items()
                        if k != "warnings"},
        "warnings": result.certificate.get("warnings", []),
    }


def cmd_privacy(cfg: dict, out_dir: Path, trace_path: Path | None, seed) -> dict:
    model, _ = _parse_model(cfg)
    node = cfg.get("privacy")
    if not isinstance(node, dict):
        raise ConfigError("privacy", "missing configuration block")
    floor = _noise_floor(cfg, "privacy", model.n_y)
    R_s = _matrix(cfg, "privacy.R_s", shape=(model.n_y, model.n_y),
                  default=np.zeros((model.n_y, model.n_y)), scalar_dim=model.n_y)

    prior_node = node.get("sigma_prior")
    if isinstance(prior_node, dict) and prior_node.get("use") == "noiseless_steady_state":
        sigma_prior = design.theoretical_bound(model, floor)
    elif prior_node is not None:
        sigma_prior = _matrix(cfg, "privacy.sigma_prior",
                              shape=(model.n_x, model.n_x))
    else:
        raise ConfigError("privacy.sigma_prior", "missing required field")

    floor_node = node.get("sigma_d_next")
    margin = float(node.get("interior_margin", 1e-6))
    if isinstance(floor_node, dict) and "position_diag" in floor_node:
        sigma_d = design.privacy_floor_from_position_diag(
            model, sigma_prior, R_s, floor_node["position_diag"], margin)
    elif floor_node is not None:
        sigma_d = _matrix(cfg, "privacy.sigma_d_next",
                          shape=(model.n_x, model.n_x))
    else:
        raise ConfigError("privacy.sigma_d_next", "missing required field")
    W = _matrix(cfg, "privacy.W", shape=(model.n_y, model.n_y),
                default=np.eye(model.n_y), scalar_dim=model.n_y)

    sink, lines = _trace_sink(trace_path)
    spec = design.PrivacySpec(model, sigma_prior, R_s, sigma_d, W)
    result = design.design_privacy(spec, trace=sink)
    if trace_path is not None:
        trace_path.write_text("\n".join(lines) + "\n")
    return {
        "command": "privacy",
        "sigma_prior": sigma_prior.tolist(),
        "sigma_d_next": sigma_d.tolist(),
        "R_s": R_s.tolist(),
        "R_p_opt": result.R_p_opt.tolist(),
        "objective": result.objective,
        "achieved_sigma_next": result.achieved_sigma_next.tolist(),
        "achieved_sigma_post": result.achieved_sigma_post.tolist(),
        "certificate": {k: v for k, v in result.certificate.items()
                        if k != "warnings"},
        "warnings": result.certificate.get("warnings", []),
    }


def cmd_simulate(cfg: dict, out_dir: Path, trace_path: Path | None, seed) -> dict:
    model, pm = _parse_model(cfg)
    if pm is None:
        raise ConfigError("model", "simulate requires the 4-state pixel model")
    node = cfg.get("simulate")
    if not isinstance(node, dict):
        raise ConfigError("simulate", "missing configuration block")
    R = _matrix(cfg, "simulate.R", shape=(2, 2), scalar_dim=2)
    if not psd_check(R).is_psd:
        raise ConfigError("simulate.R", "must be positive semidefinite")
    runs = int(node.get("runs", 500))
    cfg_seed = int(node.get("seed", 0))
    if seed is not None:
        cfg_seed = int(seed)
    frames = int(node.get("frames", pm.frames))
    waypoint_mode = bool(node.get("waypoint_mode", False))
    init_node = node.get("init", {})
    default_init = pm.default_init()
    try:
        mu0 = np.asarray(init_node.get("mu0", default_init.mu0), dtype=float)
        sigma0 = _matrix(cfg, "simulate.init.sigma0", shape=(4, 4),
                         default=default_init.sigma0, scalar_dim=4)
        init = InitialBelief(mu0, sigma0)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("simulate.init", str(exc)) from None
    waypoints = node.get("waypoints", sim.DEFAULT_WAYPOINTS)
    speed = float(node.get("waypoint_speed", sim.DEFAULT_WAYPOINT_SPEED))

    report = sim.monte_carlo(pm, R, init, runs=runs, seed=cfg_seed,
                             frames=frames, waypoint_mode=waypoint_mode,
                             waypoints=waypoints, waypoint_speed=speed)

    csv_path = out_dir / "mc.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "rmse", "emp_cov_11", "emp_cov_12",
                         "emp_cov_22", "filt_cov_11", "filt_cov_12",
                         "filt_cov_22"])
        for row in sim.report_rows(report):
            writer.writerow([row[0]] + [f"{v:.9g}" for v in row[1:]])

    tail = max(1, frames // 5)
    doc = sim.report_to_dict(report)
    doc.update({
        "command": "simulate",
        "R": R.tolist(),
        "frames": frames,
        "waypoint_mode": waypoint_mode,
        "steady_state_rmse": float(np.mean(report.rmse_per_frame[-tail:])),
        "csv": csv_path.name,
    })
    return doc


COMMANDS = {"bound": cmd_bound, "utility": cmd_utility,
            "privacy": cmd_privacy, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covdesign",
        description="Tracking accuracy bounds, sensing-precision and "
                    "privacy-noise design, and Monte Carlo validation.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--trace", default=None,
                        help="write the SDP iteration log to this file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed (simulate)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        cfg = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        print(f"config: file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = None
    if args.trace is not None:
        trace_path = Path(args.trace)
        if not trace_path.is_absolute():
            trace_path = out_dir / trace_path

    try:
        report = COMMANDS[args.command](cfg, out_dir, trace_path, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except design.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.bound is not None:
            print("theoretical bound:", file=sys.stderr)
            print(np.array2string(exc.bound, precision=6), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SingularMatrixError, NotPositiveDefiniteError,
            design.DesignValidationError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(_round9(report), indent=2, sort_keys=True)
                           + "\n")
    for w in report.get("warnings", []):
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(_round9({k: v for k, v in report.items()
                              if not isinstance(v, list) or len(v) <= 8}),
                     indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
