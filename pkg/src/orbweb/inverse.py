"""Source recovery from ring measurements.

Pipeline: differentiate the measured displacement in time, deconvolve the
impact time profile (a Volterra equation of the second kind, solvable because
g(0) != 0), split the resulting kernel into angular Fourier channels, fit each
channel against the known modal frequencies by least squares, divide out the
eigenfunction values at the sensor radii to expose the load coefficients, and
resum the coefficient expansion into a field estimate with a localization
peak. Modes whose eigenfunctions are near a node at every sensor radius are
skipped and reported rather than amplified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .forward import (ModalCoefficients, RingMeasurement, TimeProfile,
                      reconstruct_field_from_coeffs)
from .spectral import ModalBasis


class PipelineError(RuntimeError):
    """Failure in a named stage of the inversion pipeline."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class TimeProfileError(ValueError):
    """g(0) is (numerically) zero; the deconvolution hypothesis fails."""


class ConditioningError(RuntimeError):
    """Sine design matrix too ill-conditioned; a longer observation window
    is needed."""


@dataclass
class ReconstructionConfig:
    """Knobs of the inversion. ``nodal_threshold`` is relative to the
    eigenfunction's maximum amplitude."""

    n_theta: Optional[int] = None  # default: basis truncation
    n_rad: Optional[int] = None
    regularization: float = 0.0
    nodal_threshold: float = 1e-3
    condition_cap: float = 1e8
    min_g0_ratio: float = 1e-8
    derivative_order: int = 4

    def __post_init__(self):
        if self.regularization < 0:
            raise ValueError("regularization must be nonnegative")
        if self.derivative_order != 4:
            raise ValueError("only the 4th-order derivative scheme is implemented")


@dataclass
class ReconstructionResult:
    """Everything the inversion produced, including per-channel diagnostics."""

    coefficients: ModalCoefficients
    field: np.ndarray
    rhos: np.ndarray
    thetas: np.ndarray
    localization: Optional[Tuple[float, float, float]]  # (rho, theta, peak)
    channel_residuals: Dict[str, float]
    condition_numbers: Dict[int, float]
    skipped_modes: List[Tuple[int, int]]
    diagnostics: dict = field(default_factory=dict)


def time_derivative(measurement: RingMeasurement) -> np.ndarray:
    """dU/dt on the measurement lattice: 4th-order centered differences in
    the interior, 4th-order one-sided at the ends."""
    u = measurement.u
    t = measurement.times
    if t.size < 5:
        raise ValueError("need at least 5 time samples for the 4th-order scheme")
    dt = t[1] - t[0]
    d = np.empty_like(u)
    d[..., 2:-2] = (u[..., :-4] - 8 * u[..., 1:-3]
                    + 8 * u[..., 3:-1] - u[..., 4:]) / (12 * dt)
    d[..., 0] = (-25 * u[..., 0] + 48 * u[..., 1] - 36 * u[..., 2]
                 + 16 * u[..., 3] - 3 * u[..., 4]) / (12 * dt)
    d[..., 1] = (-3 * u[..., 0] - 10 * u[..., 1] + 18 * u[..., 2]
                 - 6 * u[..., 3] + u[..., 4]) / (12 * dt)
    d[..., -2] = (3 * u[..., -1] + 10 * u[..., -2] - 18 * u[..., -3]
                  + 6 * u[..., -4] - u[..., -5]) / (12 * dt)
    d[..., -1] = (25 * u[..., -1] - 48 * u[..., -2] + 36 * u[..., -3]
                  - 16 * u[..., -4] + 3 * u[..., -5]) / (12 * dt)
    return d


def _series_inverse(c: np.ndarray) -> np.ndarray:
    """Power-series inverse of a lower-triangular Toeplitz kernel (Newton
    doubling with FFT convolutions)."""
    K = c.size
    v = np.array([1.0 / c[0]])
    while v.size < K:
        k = min(2 * v.size, K)
        v = np.concatenate([v, np.zeros(k - v.size)]) * 2 - fftconvolve(v, fftconvolve(v, c[:k]))[:k]
    return v[:K]


def volterra_deconvolve(dudt: np.ndarray, g: TimeProfile,
                        min_g0_ratio: float = 1e-8) -> np.ndarray:
    """Solve g(0)*k(t) + int_0^t g'(t-s) k(s) ds = dU/dt for the modal kernel
    k, by forward substitution of the trapezoidal discretization (evaluated
    through the inverse of the triangular Toeplitz operator).

    ``dudt`` may have any leading shape; time is the last axis.
    """
    gmax = np.max(np.abs(g.values))
    if gmax == 0.0 or abs(g.g0) < min_g0_ratio * gmax:
        raise TimeProfileError(
            "g(0) is numerically zero; the inverse problem requires g(0) != 0")
    dudt = np.asarray(dudt, dtype=float)
    K = g.times.size
    if dudt.shape[-1] != K:
        raise ValueError("dudt and g must share the time grid")
    dt = g.times[1] - g.times[0]
    gp = g.spline.derivative()(g.times)

    # trapezoidal system: (g0 + dt*gp[0]/2) k_j + dt*sum_{i=1}^{j-1} gp[j-i] k_i
    #                     + (dt/2)*gp[j] k_0 = d_j ;  g0 k_0 = d_0
    k0 = dudt[..., 0] / g.g0
    rhs = dudt[..., 1:] - 0.5 * dt * gp[1:] * k0[..., None]
    kernel = np.empty(K)
    kernel[0] = g.g0 + 0.5 * dt * gp[0]
    kernel[1:] = dt * gp[1:]
    inv = _series_inverse(kernel[:-1] if K > 1 else kernel)

    flat = rhs.reshape(-1, K - 1)
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = fftconvolve(inv, flat[i])[: K - 1]
    result = np.empty_like(dudt)
    result[..., 0] = k0
    result[..., 1:] = out.reshape(rhs.shape)
    return result


def convolve_profile(g: TimeProfile, kernel: np.ndarray) -> np.ndarray:
    """Trapezoidal convolution int_0^t g(t-s) kernel(s) ds on g's grid; the
    discrete adjoint used to check deconvolution round trips."""
    kernel = np.asarray(kernel, dtype=float)
    K = g.times.size
    dt = g.times[1] - g.times[0]
    full = fftconvolve(g.values, kernel, axes=-1)[..., :K] * dt
    # trapezoid endpoint halving
    corr = 0.5 * dt * (g.values[0] * kernel + kernel[..., 0:1] * g.values[:K])
    return full - corr


def angular_decompose(kernel: np.ndarray, n_theta: int):
    """Fourier channels of a ring kernel sampled at uniform angles.

    ``kernel`` is (angles, time). Returns (a0, an, bn) with an, bn of shape
    (n_theta, time). Exact for angularly band-limited data.
    """
    kernel = np.asarray(kernel, dtype=float)
    na = kernel.shape[0]
    if na < 2 * n_theta + 1:
        raise ValueError(
            f"{na} angles alias a truncation of {n_theta}: need >= {2 * n_theta + 1}")
    angles = 2.0 * np.pi * np.arange(na) / na
    a0 = kernel.mean(axis=0)
    ns = np.arange(1, n_theta + 1)
    an = (2.0 / na) * np.einsum("na,at->nt", np.cos(np.outer(ns, angles)), kernel)
    bn = (2.0 / na) * np.einsum("na,at->nt", np.sin(np.outer(ns, angles)), kernel)
    return a0, an, bn


def angular_recompose(a0: np.ndarray, an: np.ndarray, bn: np.ndarray,
                      angles: np.ndarray) -> np.ndarray:
    """Inverse of angular_decompose on the given angles."""
    ns = np.arange(1, an.shape[0] + 1)
    out = np.broadcast_to(a0, (angles.size,) + a0.shape).copy()
    out += np.einsum("na,nt->at", np.cos(np.outer(ns, angles)), an)
    out += np.einsum("na,nt->at", np.sin(np.outer(ns, angles)), bn)
    return out


def recover_modal_amplitudes(channel: np.ndarray, frequencies: np.ndarray,
                             times: np.ndarray,
                             config: Optional[ReconstructionConfig] = None):
    """Fit channel(t) ~ sum_m A_m sin(freq_m t) by (optionally ridge-)
    regularized least squares. Returns (amplitudes, condition, residual)."""
    config = config or ReconstructionConfig()
    S = np.sin(np.outer(times, np.asarray(frequencies, float)))
    sv = np.linalg.svd(S, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if cond > config.condition_cap and config.regularization == 0.0:
        raise ConditioningError(
            f"sine design condition number {cond:.3g} exceeds the cap "
            f"{config.condition_cap:.3g}; increase the observation time tau0")
    if config.regularization > 0.0:
        G = S.T @ S + config.regularization * np.eye(S.shape[1])
        A = np.linalg.solve(G, S.T @ channel)
    else:
        A, *_ = np.linalg.lstsq(S, channel, rcond=None)
    residual = float(np.linalg.norm(channel - S @ A))
    return A, cond, residual


def recover_coefficients(amplitudes: Dict[Tuple[int, str], np.ndarray],
                         basis: ModalBasis, radii: np.ndarray,
                         config: Optional[ReconstructionConfig] = None):
    """Convert per-channel amplitudes A = sqrt(lam)*F*u(rho*) into load
    coefficients. ``amplitudes[(n, kind)]`` has shape (n_radii, n_rad) with
    kind in {"c", "s"} (n=0 uses kind "c").

    With several radii the coefficient is the least-squares fit across radii.
    Modes nodal at every sensor radius are skipped and reported.
    Returns (ModalCoefficients, skipped list).
    """
    config = config or ReconstructionConfig()
    radii = np.atleast_1d(np.asarray(radii, float))
    n_theta = max((n for n, _ in amplitudes), default=0)
    n_rad = max(a.shape[-1] for a in amplitudes.values())
    coeffs = ModalCoefficients.zeros(n_theta, n_rad)
    skipped: List[Tuple[int, int]] = []

    for n in range(0, n_theta + 1):
        for m in range(1, n_rad + 1):
            pair = basis.pairs[(n, m)]
            u_star = basis.eigenfunction_at(n, m, radii)
            u_max = np.max(np.abs(pair.values))
            usable = np.abs(u_star) >= config.nodal_threshold * u_max
            if not np.any(usable):
                skipped.append((n, m))
                continue
            s = math.sqrt(pair.lam) * u_star[usable]
            denom = float(s @ s)
            for kind, target in (("c", coeffs.f0 if n == 0 else coeffs.fc[n - 1]),
                                 ("s", None if n == 0 else coeffs.fs[n - 1])):
                if target is None:
                    continue
                if (n, kind) not in amplitudes:
                    continue
                A = amplitudes[(n, kind)][:, m - 1][usable]
                target[m - 1] = float(s @ A) / denom
    return coeffs, skipped


def recommended_observation_time(basis: ModalBasis) -> float:
    """Observation window from the spectrum-gap rule: 4 periods of the
    smallest sqrt-eigenvalue gap."""
    from .spectral import spectrum_gap_diagnostic

    gaps = spectrum_gap_diagnostic(basis)
    if not gaps:
        raise ValueError("basis has too few modes per class for the gap rule")
    return 4.0 * 2.0 * math.pi / min(gaps.values())


def invert(measurement: RingMeasurement, basis: ModalBasis, g: TimeProfile,
           config: Optional[ReconstructionConfig] = None,
           out_rhos=None, out_thetas=None) -> ReconstructionResult:
    """Full reconstruction: deconvolve, decompose, fit, divide out the
    eigenfunctions, resum the field, localize."""
    config = config or ReconstructionConfig()
    n_theta = config.n_theta if config.n_theta is not None else basis.n_theta
    n_rad = config.n_rad if config.n_rad is not None else basis.n_rad
    if n_theta > basis.n_theta or n_rad > basis.n_rad:
        raise PipelineError("config", "requested truncation exceeds the basis")
    if measurement.times.size != g.times.size or not np.allclose(
            measurement.times, g.times):
        raise PipelineError("config", "measurement and g use different time grids")

    try:
        dudt = time_derivative(measurement)
    except Exception as exc:
        raise PipelineError("time_derivative", str(exc)) from exc

    try:
        kern = volterra_deconvolve(dudt, g, config.min_g0_ratio)
    except TimeProfileError:
        raise
    except Exception as exc:
        raise PipelineError("volterra", str(exc)) from exc

    nr = measurement.radii.size
    try:
        chan_a0 = []
        chan_an = []
        chan_bn = []
        for r in range(nr):
            a0, an, bn = angular_decompose(kern[r], n_theta)
            chan_a0.append(a0)
            chan_an.append(an)
            chan_bn.append(bn)
    except Exception as exc:
        raise PipelineError("angular", str(exc)) from exc

    amplitudes: Dict[Tuple[int, str], np.ndarray] = {}
    conds: Dict[int, float] = {}
    residuals: Dict[str, float] = {}
    try:
        for n in range(0, n_theta + 1):
            freqs = basis.frequencies(n)[:n_rad]
            A_c = np.zeros((nr, n_rad))
            A_s = np.zeros((nr, n_rad))
            for r in range(nr):
                ch_c = chan_a0[r] if n == 0 else chan_an[r][n - 1]
                A, cond, res = recover_modal_amplitudes(
                    ch_c, freqs, measurement.times, config)
                A_c[r] = A
                conds[n] = max(conds.get(n, 0.0), cond)
                residuals[f"n={n},cos,radius={measurement.radii[r]:.6g}"] = res
                if n >= 1:
                    A, cond, res = recover_modal_amplitudes(
                        chan_bn[r][n - 1], freqs, measurement.times, config)
                    A_s[r] = A
                    conds[n] = max(conds[n], cond)
                    residuals[f"n={n},sin,radius={measurement.radii[r]:.6g}"] = res
            amplitudes[(n, "c")] = A_c
            if n >= 1:
                amplitudes[(n, "s")] = A_s
    except (ConditioningError, TimeProfileError):
        raise
    except Exception as exc:
        raise PipelineError("amplitudes", str(exc)) from exc

    try:
        coeffs, skipped = recover_coefficients(amplitudes, basis,
                                               measurement.radii, config)
    except Exception as exc:
        raise PipelineError("coefficients", str(exc)) from exc

    if out_rhos is None:
        out_rhos = np.linspace(0.0, basis.params.radius, 65)
    if out_thetas is None:
        out_thetas = 2.0 * np.pi * np.arange(64) / 64
    out_rhos = np.asarray(out_rhos, float)
    out_thetas = np.asarray(out_thetas, float)
    try:
        fhat = reconstruct_field_from_coeffs(coeffs, basis, out_rhos, out_thetas)
    except Exception as exc:
        raise PipelineError("field", str(exc)) from exc

    result = ReconstructionResult(
        coefficients=coeffs, field=fhat, rhos=out_rhos, thetas=out_thetas,
        localization=None, channel_residuals=residuals,
        condition_numbers=conds, skipped_modes=skipped)
    result.localization = localize(result)
    return result


def localize(result: ReconstructionResult):
    """Argmax of |f_hat| on the output grid; ties broken by smallest rho then
    smallest theta. Returns (rho, theta, peak value) or None for a zero field."""
    mag = np.abs(result.field)
    peak = mag.max()
    if peak == 0.0:
        result.diagnostics["localization_ties"] = []
        return None
    tie_idx = np.argwhere(mag >= peak * (1.0 - 1e-12))
    ties = sorted((result.rhos[i], result.thetas[j]) for i, j in tie_idx)
    result.diagnostics["localization_ties"] = [
        (float(r), float(t)) for r, t in ties]
    rho_hat, theta_hat = ties[0]
    i = int(np.argmin(np.abs(result.rhos - rho_hat)))
    j = int(np.argmin(np.abs(result.thetas - theta_hat)))
    return (float(rho_hat), float(theta_hat), float(result.field[i, j]))
