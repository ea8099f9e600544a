"""Command-line orchestration: config ingestion and the four pipeline commands.

Configuration files are flat sectioned key-value (INI syntax) with sections
[web], [grid], [forward], [inverse], [output]; unknown sections or keys are
rejected so typos fail loudly. Subcommands::

    orbweb eigs      --config cfg.ini [--out DIR]
    orbweb forward   --config cfg.ini [--out DIR] [--seed N]
    orbweb invert    --config cfg.ini --measurement data.csv [--out DIR]
    orbweb roundtrip --config cfg.ini [--out DIR] [--seed N] [--noise-sweep S1,S2,...]

Exit codes: 0 success, 1 numerical failure, 2 input/config error. Every JSON
sidecar records the configuration hash and the seed.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import forward as fwd
from . import inverse as inv
from . import model, spectral
from .inverse import ReconstructionConfig
from .model import WebParameters


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


# ---------------------------------------------------------------------------
# configuration

_GRID_KEYS = {"resolution", "n_theta", "n_rad"}
_FORWARD_KEYS = {
    "profile", "tau0", "dt", "rate", "duration", "amplitude",
    "impact_rho", "impact_theta", "impact_width", "impact_amplitude",
    "ring_radii", "n_angles", "noise_sigma", "seed",
}
_INVERSE_KEYS = {
    "n_theta", "n_rad", "regularization", "nodal_threshold",
    "condition_cap", "min_g0_ratio", "out_rho_count", "out_theta_count",
}
_OUTPUT_KEYS = {"directory"}
_SECTIONS = {"web", "grid", "forward", "inverse", "output"}


@dataclass
class ForwardSettings:
    """[forward] section: impact profile, footprint, rings, noise, seed."""

    profile: str = "decaying_exponential"
    tau0: Optional[float] = None  # None: spectrum-gap rule
    dt: float = 1e-3
    rate: float = 1.0
    duration: float = 0.5
    amplitude: float = 1.0
    impact_rho: float = 0.35
    impact_theta: float = 0.7853981633974483
    impact_width: float = 0.12
    impact_amplitude: float = 1.0
    ring_radii: List[float] = field(default_factory=lambda: [0.15])
    n_angles: Optional[int] = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.profile not in ("constant", "decaying_exponential", "raised_cosine"):
            raise ConfigError(f"unknown time profile {self.profile!r}")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not self.ring_radii:
            raise ConfigError("ring_radii must list at least one radius")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")


@dataclass
class RunConfig:
    """Validated contents of a run-configuration file."""

    web: WebParameters
    resolution: int = 2048
    n_theta: int = 8
    n_rad: int = 12
    forward: ForwardSettings = field(default_factory=ForwardSettings)
    inverse: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    out_rho_count: int = 65
    out_theta_count: int = 64
    output_dir: Path = Path("out")

    def __post_init__(self):
        if self.resolution < 64:
            raise ConfigError("resolution must be at least 64")
        if self.n_theta < 0 or self.n_rad < 1:
            raise ConfigError("need n_theta >= 0 and n_rad >= 1")
        if self.out_rho_count < 2 or self.out_theta_count < 1:
            raise ConfigError("output grid too small")


def _check_keys(section: str, present, allowed) -> None:
    unknown = set(present) - allowed
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")


def _get(sec, key, cast, default):
    if key not in sec:
        return default
    try:
        return cast(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Parse and validate a run-configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    unknown = set(parser.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    if "web" not in parser:
        raise ConfigError("missing required [web] section")

    try:
        web = model.from_dict(dict(parser["web"]))
    except model.ValidationError as exc:
        raise ConfigError(f"[web] {exc}") from exc

    grid = parser["grid"] if "grid" in parser else {}
    _check_keys("grid", grid.keys(), _GRID_KEYS)

    fsec = parser["forward"] if "forward" in parser else {}
    _check_keys("forward", fsec.keys(), _FORWARD_KEYS)
    tau0_raw = fsec.get("tau0", "auto")
    try:
        tau0 = None if str(tau0_raw).strip().lower() == "auto" else float(tau0_raw)
        settings = ForwardSettings(
            profile=str(fsec.get("profile", "decaying_exponential")).strip(),
            tau0=tau0,
            dt=_get(fsec, "dt", float, 1e-3),
            rate=_get(fsec, "rate", float, 1.0),
            duration=_get(fsec, "duration", float, 0.5),
            amplitude=_get(fsec, "amplitude", float, 1.0),
            impact_rho=_get(fsec, "impact_rho", float, 0.35),
            impact_theta=_get(fsec, "impact_theta", float, 0.7853981633974483),
            impact_width=_get(fsec, "impact_width", float, 0.12),
            impact_amplitude=_get(fsec, "impact_amplitude", float, 1.0),
            ring_radii=[float(s) for s in
                        str(fsec.get("ring_radii", "0.15")).split(",")],
            n_angles=_get(fsec, "n_angles", int, None),
            noise_sigma=_get(fsec, "noise_sigma", float, 0.0),
            seed=_get(fsec, "seed", int, 0),
        )
    except ValueError as exc:
        raise ConfigError(f"[forward] {exc}") from exc

    isec = parser["inverse"] if "inverse" in parser else {}
    _check_keys("inverse", isec.keys(), _INVERSE_KEYS)
    try:
        recon = ReconstructionConfig(
            n_theta=_get(isec, "n_theta", int, None),
            n_rad=_get(isec, "n_rad", int, None),
            regularization=_get(isec, "regularization", float, 0.0),
            nodal_threshold=_get(isec, "nodal_threshold", float, 1e-3),
            condition_cap=_get(isec, "condition_cap", float, 1e8),
            min_g0_ratio=_get(isec, "min_g0_ratio", float, 1e-8),
        )
    except ValueError as exc:
        raise ConfigError(f"[inverse] {exc}") from exc

    osec = parser["output"] if "output" in parser else {}
    _check_keys("output", osec.keys(), _OUTPUT_KEYS)

    try:
        return RunConfig(
            web=web,
            resolution=_get(grid, "resolution", int, 2048),
            n_theta=_get(grid, "n_theta", int, 8),
            n_rad=_get(grid, "n_rad", int, 12),
            forward=settings,
            inverse=recon,
            out_rho_count=_get(isec, "out_rho_count", int, 65),
            out_theta_count=_get(isec, "out_theta_count", int, 64),
            output_dir=Path(str(osec.get("directory", "out"))),
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg: RunConfig) -> str:
    """Stable hash of the full configuration, recorded in output sidecars."""

    def encode(obj):
        if isinstance(obj, Path):
            return str(obj)
        if hasattr(obj, "__dict__"):
            return {k: encode(v) for k, v in vars(obj).items()
                    if not k.startswith("_")}
        if isinstance(obj, (list, tuple)):
            return [encode(v) for v in obj]
        return obj

    blob = json.dumps(encode(cfg), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# shared builders

def _build_basis(cfg: RunConfig) -> spectral.ModalBasis:
    return spectral.compute_basis(cfg.web, resolution=cfg.resolution,
                                  n_theta=cfg.n_theta, n_rad=cfg.n_rad)


def _build_profile(cfg: RunConfig, basis) -> fwd.TimeProfile:
    s = cfg.forward
    tau0 = s.tau0 if s.tau0 is not None else inv.recommended_observation_time(basis)
    if s.profile == "constant":
        return fwd.constant_profile(tau0, s.dt, s.amplitude)
    if s.profile == "raised_cosine":
        return fwd.raised_cosine(tau0, s.dt, s.duration, s.amplitude)
    return fwd.decaying_exponential(tau0, s.dt, s.rate, s.amplitude)


def _build_source(cfg: RunConfig) -> fwd.SourceField:
    s = cfg.forward
    return fwd.gaussian_bump(s.impact_rho, s.impact_theta, s.impact_width,
                             s.impact_amplitude)


def _sidecar(cfg: RunConfig, extra: dict) -> dict:
    payload = {"config_hash": config_hash(cfg), "seed": cfg.forward.seed}
    payload.update(extra)
    return payload


def _coeff_dict(c: fwd.ModalCoefficients) -> dict:
    return {"f0": c.f0.tolist(), "fc": c.fc.tolist(), "fs": c.fs.tolist()}


def _run_forward(cfg: RunConfig, seed: int):
    basis = _build_basis(cfg)
    g = _build_profile(cfg, basis)
    source = _build_source(cfg)
    coeffs = fwd.project_source(source, basis)
    meas = fwd.synthesize_ring(basis, coeffs, g, cfg.forward.ring_radii,
                               n_angles=cfg.forward.n_angles,
                               noise_sigma=cfg.forward.noise_sigma, seed=seed)
    return basis, g, source, coeffs, meas


# ---------------------------------------------------------------------------
# subcommands

def cmd_eigs(cfg: RunConfig, out: Path, seed: int) -> int:
    """Write eigenvalue CSV, per-mode eigenfunction CSVs and a spectrum report."""
    basis = _build_basis(cfg)
    out.mkdir(parents=True, exist_ok=True)
    spectral.export_eigenvalues_csv(basis, out / "eigenvalues.csv")
    spectral.export_eigenfunctions_csv(basis, out)
    summary = spectral.spectrum_summary(basis)
    summary.update(_sidecar(cfg, {}))
    (out / "spectrum.json").write_text(json.dumps(summary, indent=2))
    print(f"eigs: {len(basis.pairs)} modes -> {out}")
    return 0


def cmd_forward(cfg: RunConfig, out: Path, seed: int) -> int:
    """Synthesize the ring measurement and displacement snapshots."""
    basis, g, source, coeffs, meas = _run_forward(cfg, seed)
    out.mkdir(parents=True, exist_ok=True)
    meas.metadata.update(_sidecar(cfg, {"source": source.description}))
    fwd.save_measurement(meas, out / "measurement.csv")

    rhos = np.linspace(0.0, cfg.web.radius, cfg.out_rho_count)
    thetas = 2.0 * np.pi * np.arange(cfg.out_theta_count) / cfg.out_theta_count
    tau0 = g.times[-1]
    for frac in (0.25, 0.5, 1.0):
        t = frac * tau0
        U = fwd.evaluate_displacement(basis, coeffs, g, rhos, thetas, [t])
        fwd.save_field(rhos, thetas, U[:, :, 0],
                       out / f"snapshot_t{frac:.2f}tau.csv", value_column="u")
    print(f"forward: measurement {meas.u.shape} -> {out}")
    return 0


def cmd_invert(cfg: RunConfig, out: Path, seed: int, measurement: Path) -> int:
    """Reconstruct the load from a saved measurement."""
    if not measurement.exists():
        raise ConfigError(f"measurement file not found: {measurement}")
    meas = fwd.load_measurement(measurement)
    basis = _build_basis(cfg)
    g = _build_profile(cfg, basis)
    t0 = time.perf_counter()
    rhos = np.linspace(0.0, cfg.web.radius, cfg.out_rho_count)
    thetas = 2.0 * np.pi * np.arange(cfg.out_theta_count) / cfg.out_theta_count
    result = inv.invert(meas, basis, g, cfg.inverse,
                        out_rhos=rhos, out_thetas=thetas)
    elapsed = time.perf_counter() - t0

    out.mkdir(parents=True, exist_ok=True)
    fwd.save_field(result.rhos, result.thetas, result.field,
                   out / "reconstruction.csv", value_column="f_hat")
    report = _sidecar(cfg, {
        "coefficients": _coeff_dict(result.coefficients),
        "channel_residuals": result.channel_residuals,
        "condition_numbers": {str(k): v for k, v in
                              result.condition_numbers.items()},
        "skipped_modes": [list(nm) for nm in result.skipped_modes],
        "localization": result.localization,
        "timing_seconds": elapsed,
    })
    (out / "reconstruction.json").write_text(json.dumps(report, indent=2))
    loc = result.localization
    where = "none" if loc is None else f"rho={loc[0]:.4f}, theta={loc[1]:.4f}"
    print(f"invert: localization {where} ({elapsed:.2f} s) -> {out}")
    return 0


def cmd_roundtrip(cfg: RunConfig, out: Path, seed: int,
                  noise_sweep: Optional[List[float]] = None) -> int:
    """Forward synthesis followed by inversion, with error metrics."""
    t0 = time.perf_counter()
    basis, g, source, truth, meas = _run_forward(cfg, seed)
    rhos = np.linspace(0.0, cfg.web.radius, cfg.out_rho_count)
    thetas = 2.0 * np.pi * np.arange(cfg.out_theta_count) / cfg.out_theta_count
    result = inv.invert(meas, basis, g, cfg.inverse,
                        out_rhos=rhos, out_thetas=thetas)
    elapsed = time.perf_counter() - t0

    def stack(c):
        return np.concatenate([c.f0.ravel(), c.fc.ravel(), c.fs.ravel()])

    def rel_err(recovered):
        t = stack(truth)
        return float(np.linalg.norm(stack(recovered) - t) / np.linalg.norm(t))

    err = rel_err(result.coefficients)
    sweep_table = []
    if noise_sweep:
        for sigma in noise_sweep:
            noisy = fwd.synthesize_ring(basis, truth, g, cfg.forward.ring_radii,
                                        n_angles=cfg.forward.n_angles,
                                        noise_sigma=sigma, seed=seed)
            res_s = inv.invert(noisy, basis, g, cfg.inverse,
                               out_rhos=rhos, out_thetas=thetas)
            sweep_table.append({"sigma": sigma,
                                "coefficient_rel_error": rel_err(res_s.coefficients)})

    out.mkdir(parents=True, exist_ok=True)
    fwd.save_field(result.rhos, result.thetas, result.field,
                   out / "reconstruction.csv", value_column="f_hat")
    report = _sidecar(cfg, {
        "coefficient_rel_error": err,
        "true_coefficients": _coeff_dict(truth),
        "recovered_coefficients": _coeff_dict(result.coefficients),
        "localization": result.localization,
        "impact_center": [cfg.forward.impact_rho, cfg.forward.impact_theta],
        "skipped_modes": [list(nm) for nm in result.skipped_modes],
        "condition_numbers": {str(k): v for k, v in
                              result.condition_numbers.items()},
        "spectrum_gaps": {str(k): v for k, v in
                          spectral.spectrum_gap_diagnostic(basis).items()},
        "noise_sweep": sweep_table,
        "timing_seconds": elapsed,
    })
    (out / "roundtrip.json").write_text(json.dumps(report, indent=2))
    print(f"roundtrip: coefficient rel error {err:.3e} ({elapsed:.2f} s) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbweb",
                                 description="Orb-web vibration: spectrum, "
                                             "forward response, source recovery")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("eigs", "forward", "invert", "roundtrip"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        if name == "invert":
            p.add_argument("--measurement", required=True, type=Path)
        if name == "roundtrip":
            p.add_argument("--noise-sweep", type=str, default=None,
                           help="comma-separated noise sigmas")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = args.out if args.out is not None else cfg.output_dir
        seed = args.seed if args.seed is not None else cfg.forward.seed
        if args.command == "eigs":
            return cmd_eigs(cfg, out, seed)
        if args.command == "forward":
            return cmd_forward(cfg, out, seed)
        if args.command == "invert":
            return cmd_invert(cfg, out, seed, args.measurement)
        sweep = ([float(s) for s in args.noise_sweep.split(",")]
                 if args.noise_sweep else None)
        return cmd_roundtrip(cfg, out, seed, sweep)
    except (ConfigError, model.ValidationError, inv.TimeProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (spectral.SolverError, inv.PipelineError, inv.ConditioningError,
            np.linalg.LinAlgError, fwd.QueryDomainError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
