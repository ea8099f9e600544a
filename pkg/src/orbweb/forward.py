"""Forward response of the web: modal projection, Duhamel evolution, series
evaluation, and synthetic ring measurements.

A transverse impact load g(t)*f(rho,theta) excites each mode independently.
The modal amplitude obeys c'' + lam*c = lam*F*g with rest initial data, whose
solution is F times the sine-kernel convolution

    theta(t) = sqrt(lam) * int_0^t sin(sqrt(lam)(t-tau)) g(tau) dtau.

The convolution is evaluated by product integration: g is represented by its
cubic spline between time samples and the oscillatory kernel is propagated
exactly per subinterval, so there is no phase drift at high frequencies.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from . import model
from .model import WebParameters
from .spectral import ModalBasis


class QueryDomainError(ValueError):
    """Query point outside [0,R] x [0,2pi] x [0,tau0]."""


@dataclass(frozen=True)
class SourceField:
    """Spatial load distribution f(rho, theta), force per unit area."""

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    description: str = ""

    def evaluate(self, rho, theta) -> np.ndarray:
        rho, theta = np.broadcast_arrays(np.asarray(rho, float), np.asarray(theta, float))
        out = np.asarray(self.evaluator(rho, theta), dtype=float)
        if not np.all(np.isfinite(out)):
            raise ValueError("source field is not finite on the sampling grid")
        return out


def gaussian_bump(rho0: float, theta0: float, width: float,
                  amplitude: float = 1.0) -> SourceField:
    """Gaussian impact footprint centered at (rho0, theta0), planar width
    parameter ``width``."""

    x0, y0 = rho0 * math.cos(theta0), rho0 * math.sin(theta0)

    def f(rho, theta):
        d2 = (rho * np.cos(theta) - x0) ** 2 + (rho * np.sin(theta) - y0) ** 2
        return amplitude * np.exp(-0.5 * d2 / width**2)

    return SourceField(f, description=f"gaussian bump at (rho={rho0}, theta={theta0}), "
                                      f"width={width}, amplitude={amplitude}")


@dataclass
class TimeProfile:
    """Impact time profile g(t) sampled on a uniform grid starting at 0."""

    times: np.ndarray
    values: np.ndarray
    smooth: bool = True  # continuously differentiable
    _spline: Optional[CubicSpline] = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.size < 2 or self.times[0] != 0.0:
            raise ValueError("time grid must start at 0 with at least two samples")
        steps = np.diff(self.times)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("time grid must be uniform and increasing")

    @property
    def g0(self) -> float:
        return float(self.values[0])

    @property
    def spline(self) -> CubicSpline:
        if self._spline is None:
            self._spline = CubicSpline(self.times, self.values)
        return self._spline


def _time_axis(tau0: float, dt: float) -> np.ndarray:
    n = int(round(tau0 / dt))
    if n < 1:
        raise ValueError("observation window shorter than one time step")
    return np.linspace(0.0, n * dt, n + 1)


def constant_profile(tau0: float, dt: float, amplitude: float = 1.0) -> TimeProfile:
    t = _time_axis(tau0, dt)
    return TimeProfile(t, np.full_like(t, amplitude))


def decaying_exponential(tau0: float, dt: float, rate: float = 1.0,
                         amplitude: float = 1.0) -> TimeProfile:
    t = _time_axis(tau0, dt)
    return TimeProfile(t, amplitude * np.exp(-rate * t))


def raised_cosine(tau0: float, dt: float, duration: float,
                  amplitude: float = 1.0) -> TimeProfile:
    """Half-period raised cosine pulse: g(0)=amplitude, g(duration)=0, C^1."""
    t = _time_axis(tau0, dt)
    g = np.where(t <= duration,
                 0.5 * amplitude * (1.0 + np.cos(np.pi * np.minimum(t, duration) / duration)),
                 0.0)
    return TimeProfile(t, g)


@dataclass
class ModalCoefficients:
    """Load projections: f0[m-1] for the axisymmetric class, fc[n-1, m-1] and
    fs[n-1, m-1] for the cos/sin classes."""

    f0: np.ndarray
    fc: np.ndarray
    fs: np.ndarray

    @property
    def n_rad(self) -> int:
        return self.f0.size

    @property
    def n_theta(self) -> int:
        return self.fc.shape[0]

    @staticmethod
    def zeros(n_theta: int, n_rad: int) -> "ModalCoefficients":
        return ModalCoefficients(np.zeros(n_rad), np.zeros((n_theta, n_rad)),
                                 np.zeros((n_theta, n_rad)))


@dataclass
class RingMeasurement:
    """Displacement time histories on rings near the hub.

    ``u`` is indexed (radius, angle, time); angles are uniform on [0, 2pi).
    """

    radii: np.ndarray
    angles: np.ndarray
    times: np.ndarray
    u: np.ndarray
    noise_sigma: float = 0.0
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.atleast_1d(np.asarray(self.radii, float))
        self.angles = np.asarray(self.angles, float)
        self.times = np.asarray(self.times, float)
        self.u = np.asarray(self.u, float)
        if self.u.shape != (self.radii.size, self.angles.size, self.times.size):
            raise ValueError("u must be indexed (radius, angle, time)")
        if self.times[0] != 0.0:
            raise ValueError("times must start at 0")


def default_angle_count(n_theta: int) -> int:
    """Angular sample count used for projections: exact for the truncation
    with comfortable margin."""
    return max(4 * n_theta, 64)


def project_source(f: SourceField, basis: ModalBasis,
                   n_angles: Optional[int] = None) -> ModalCoefficients:
    """Project f onto the modal basis by tensor quadrature:
    F0_m = (1/2pi) iint f u_m rho, FC/FS_nm = (1/pi) iint f u_m cos/sin(n th) rho."""
    K = n_angles or default_angle_count(basis.n_theta)
    if K < 2 * basis.n_theta + 1:
        raise ValueError("angular sampling below Nyquist for the truncation")
    thetas = 2.0 * np.pi * np.arange(K) / K
    rho = basis.grid.nodes
    fvals = f.evaluate(rho[:, None], thetas[None, :])  # (N, K)

    wr = basis.grid.weights * rho
    a0 = fvals.mean(axis=1)
    cosn = np.cos(np.outer(np.arange(1, basis.n_theta + 1), thetas))  # (n, K)
    sinn = np.sin(np.outer(np.arange(1, basis.n_theta + 1), thetas))
    an = (2.0 / K) * fvals @ cosn.T  # (N, n)
    bn = (2.0 / K) * fvals @ sinn.T

    coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
    for m in range(1, basis.n_rad + 1):
        coeffs.f0[m - 1] = np.sum(wr * basis.pairs[(0, m)].values * a0)
    for n in range(1, basis.n_theta + 1):
        for m in range(1, basis.n_rad + 1):
            u = basis.pairs[(n, m)].values
            coeffs.fc[n - 1, m - 1] = np.sum(wr * u * an[:, n - 1])
            coeffs.fs[n - 1, m - 1] = np.sum(wr * u * bn[:, n - 1])
    return coeffs


def modal_responses(lams, g: TimeProfile) -> np.ndarray:
    """Sine-kernel responses theta(t) = sqrt(lam)*int_0^t sin(sqrt(lam)(t-s))g(s)ds
    for a vector of eigenvalues, on g's time grid. Exact for piecewise-cubic g."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if np.any(lams <= 0):
        raise ValueError("eigenvalues must be positive")
    om = np.sqrt(lams)
    t = g.times
    c = g.spline.c  # (4, K-1): c0*s^3 + c1*s^2 + c2*s + c3 on each interval
    D = t[1] - t[0]
    cw, sw = np.cos(om * D), np.sin(om * D)

    theta = np.zeros((lams.size, t.size))
    th = np.zeros(lams.size)
    thp = np.zeros(lams.size)
    for k in range(t.size - 1):
        c0, c1, c2, c3 = c[0, k], c[1, k], c[2, k], c[3, k]
        # particular solution g - g''/lam of theta'' + lam*theta = lam*g
        p0 = c3 - 2.0 * c1 / lams
        p0p = c2 - 6.0 * c0 / lams
        alpha = th - p0
        beta = (thp - p0p) / om
        pD = ((c0 * D + c1) * D + c2) * D + c3 - (6.0 * c0 * D + 2.0 * c1) / lams
        pDp = (3.0 * c0 * D + 2.0 * c1) * D + c2 - 6.0 * c0 / lams
        th = pD + alpha * cw + beta * sw
        thp = pDp + om * (beta * cw - alpha * sw)
        theta[:, k + 1] = th
    return theta


def duhamel(lam: float, g: TimeProfile, times=None) -> np.ndarray:
    """Modal response for a single eigenvalue (coefficient factor excluded).
    Satisfies theta(0)=0 and theta'(0)=0."""
    resp = modal_responses([lam], g)[0]
    if times is None:
        return resp
    return CubicSpline(g.times, resp)(np.asarray(times, float))


def _mode_table(basis: ModalBasis, coeffs: ModalCoefficients):
    if coeffs.n_theta > basis.n_theta or coeffs.n_rad > basis.n_rad:
        raise ValueError("coefficient truncation exceeds basis truncation")
    modes = [(0, m) for m in range(1, coeffs.n_rad + 1)]
    for n in range(1, coeffs.n_theta + 1):
        modes += [(n, m) for m in range(1, coeffs.n_rad + 1)]
    lams = np.array([basis.pairs[nm].lam for nm in modes])
    return modes, lams


def evaluate_displacement(basis: ModalBasis, coeffs: ModalCoefficients,
                          g: TimeProfile, rhos, thetas, times) -> np.ndarray:
    """Displacement lattice U[rho, theta, time] from the truncated modal series."""
    rhos = np.atleast_1d(np.asarray(rhos, float))
    thetas = np.atleast_1d(np.asarray(thetas, float))
    times = np.atleast_1d(np.asarray(times, float))
    R = basis.params.radius
    tau0 = g.times[-1]
    if np.any(rhos < 0) or np.any(rhos > R):
        raise QueryDomainError("rho outside [0, R]")
    if np.any(thetas < 0) or np.any(thetas > 2 * np.pi):
        raise QueryDomainError("theta outside [0, 2pi]")
    if np.any(times < 0) or np.any(times > tau0 * (1 + 1e-12)):
        raise QueryDomainError("time outside [0, tau0]")

    modes, lams = _mode_table(basis, coeffs)
    resp = modal_responses(lams, g)
    if times.size != g.times.size or not np.allclose(times, g.times):
        resp = CubicSpline(g.times, resp, axis=1)(times)

    U = np.zeros((rhos.size, thetas.size, times.size))
    n_rad = coeffs.n_rad
    r0 = np.array([basis.eigenfunction_at(0, m, rhos) for m in range(1, n_rad + 1)])
    U += np.einsum("mr,mt->rt", coeffs.f0[:, None] * r0, resp[:n_rad])[:, None, :]
    for n in range(1, coeffs.n_theta + 1):
        sl = slice(n * n_rad, (n + 1) * n_rad)
        rn = np.array([basis.eigenfunction_at(n, m, rhos) for m in range(1, n_rad + 1)])
        ang = (coeffs.fc[n - 1][:, None] * np.cos(n * thetas)[None, :]
               + coeffs.fs[n - 1][:, None] * np.sin(n * thetas)[None, :])
        U += np.einsum("mr,ma,mt->rat", rn, ang, resp[sl])
    return U


def synthesize_ring(basis: ModalBasis, coeffs: ModalCoefficients, g: TimeProfile,
                    radii, n_angles: Optional[int] = None,
                    noise_sigma: float = 0.0, seed: int = 0) -> RingMeasurement:
    """Sample the exact series response on a ring lattice; Gaussian noise (if
    any) is added after synthesis with a recorded seed."""
    radii = np.atleast_1d(np.asarray(radii, float))
    R = basis.params.radius
    if np.any((radii <= 0) | (radii >= R / 2)):
        warnings.warn("ring radius outside (0, R/2): accepted, but the "
                      "uniqueness hypothesis does not cover it", stacklevel=2)
    n_angles = n_angles or (2 * basis.n_theta + 1)
    if n_angles < 2 * coeffs.n_theta + 1:
        raise ValueError("angle count below angular Nyquist for the truncation")
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles

    U = evaluate_displacement(basis, coeffs, g, radii, angles, g.times)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        U = U + noise_sigma * rng.standard_normal(U.shape)
    meta = {
        "n_theta": coeffs.n_theta,
        "n_rad": coeffs.n_rad,
        "noise_sigma": noise_sigma,
        "seed": seed,
        "params_hash": params_hash(basis.params),
    }
    return RingMeasurement(radii=radii, angles=angles, times=g.times, u=U,
                           noise_sigma=noise_sigma, seed=seed, metadata=meta)


def reconstruct_field_from_coeffs(coeffs: ModalCoefficients, basis: ModalBasis,
                                  rhos, thetas) -> np.ndarray:
    """Band-limited field on a polar grid from the coefficient expansion:
    f_hat = gamma(rho)/rho * sum lam*F*u*trig, with f_hat(0) = 0."""
    rhos = np.atleast_1d(np.asarray(rhos, float))
    thetas = np.atleast_1d(np.asarray(thetas, float))
    F = np.zeros((rhos.size, thetas.size))
    for m in range(1, coeffs.n_rad + 1):
        pair = basis.pairs[(0, m)]
        F += (pair.lam * coeffs.f0[m - 1]
              * basis.eigenfunction_at(0, m, rhos))[:, None]
    for n in range(1, coeffs.n_theta + 1):
        ang_c, ang_s = np.cos(n * thetas), np.sin(n * thetas)
        for m in range(1, coeffs.n_rad + 1):
            pair = basis.pairs[(n, m)]
            u = basis.eigenfunction_at(n, m, rhos)
            F += pair.lam * u[:, None] * (coeffs.fc[n - 1, m - 1] * ang_c
                                          + coeffs.fs[n - 1, m - 1] * ang_s)[None, :]
    out = np.zeros_like(F)
    pos = rhos > 0
    gamma = model.linear_mass_density(basis.params, rhos[pos])
    out[pos] = F[pos] * (gamma / rhos[pos])[:, None]
    return out


def coefficient_energy(coeffs: ModalCoefficients, basis: ModalBasis) -> float:
    """Weighted square sum 2pi*sum lam*F0^2 + pi*sum lam*(FC^2+FS^2); equals
    the scaled-load energy <F, F> in the modal space."""
    total = 2.0 * np.pi * sum(
        basis.pairs[(0, m)].lam * coeffs.f0[m - 1] ** 2
        for m in range(1, coeffs.n_rad + 1))
    for n in range(1, coeffs.n_theta + 1):
        lams = np.array([basis.pairs[(n, m)].lam for m in range(1, coeffs.n_rad + 1)])
        total += np.pi * np.sum(lams * (coeffs.fc[n - 1] ** 2 + coeffs.fs[n - 1] ** 2))
    return float(total)


def field_energy(f: SourceField, basis: ModalBasis,
                 n_angles: Optional[int] = None) -> float:
    """<F, F> for F = rho*f/gamma, computed by quadrature:
    iint rho^2 f^2 / gamma drho dtheta."""
    K = n_angles or default_angle_count(basis.n_theta)
    thetas = 2.0 * np.pi * np.arange(K) / K
    rho = basis.grid.nodes
    fvals = f.evaluate(rho[:, None], thetas[None, :])
    gamma = model.linear_mass_density(basis.params, rho)
    radial = basis.grid.weights * rho**2 / gamma
    return float(np.sum(radial[:, None] * fvals**2) * (2.0 * np.pi / K))


def pde_residual(basis: ModalBasis, coeffs: ModalCoefficients, g: TimeProfile,
                 points: np.ndarray) -> np.ndarray:
    """Relative residual of the governing equation

        gamma*U_tt - (C_rho*Tbar_rho*U_rho)_rho - (C_theta*Tbar_theta/rho)*U_thth
            = rho * f_hat * g(t)

    at interior collocation ``points`` (P, 3) of (rho, theta, t), checked by
    independent 4th-order finite differences of the synthesized series (the
    source term uses the band-limited field of the same coefficients).
    Residuals are normalized by the sum of the term magnitudes at each point.
    """
    points = np.asarray(points, float)
    params = basis.params
    R, tau0 = params.radius, g.times[-1]
    modes, lams = _mode_table(basis, coeffs)
    om_max = math.sqrt(lams.max())
    hr = 0.1 / om_max
    ht = 0.1 / om_max
    hth = min(0.04, 0.1 / max(1, coeffs.n_theta))
    lo = points - np.array([2 * hr, 0.0, 2 * ht])
    hi = points + np.array([2 * hr, 0.0, 2 * ht])
    if np.any(lo[:, 0] <= 0) or np.any(hi[:, 0] >= R) or np.any(lo[:, 2] < 0) \
            or np.any(hi[:, 2] > tau0):
        raise QueryDomainError("collocation stencil leaves the domain")

    resp = modal_responses(lams, g)
    resp_spl = CubicSpline(g.times, resp, axis=1)
    offsets = np.arange(-2, 3)
    d2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0  # times h^-2
    d1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0      # times h^-1

    P = points.shape[0]
    rho_st = points[:, 0:1] + offsets * hr        # (P, 5)
    th_st = points[:, 1:2] + offsets * hth
    t_st = points[:, 2:3] + offsets * ht

    n_rad = coeffs.n_rad
    u_st = np.empty((len(modes), P, 5))
    amp_st = np.empty((len(modes), P, 5))
    for i, (n, m) in enumerate(modes):
        u_st[i] = basis.eigenfunction_at(n, m, rho_st.ravel()).reshape(P, 5)
        if n == 0:
            amp_st[i] = coeffs.f0[m - 1]
        else:
            amp_st[i] = (coeffs.fc[n - 1, m - 1] * np.cos(n * th_st)
                         + coeffs.fs[n - 1, m - 1] * np.sin(n * th_st))
    th_resp = resp_spl(t_st)                      # (M, P, 5)

    u0, a0, r0 = u_st[:, :, 2], amp_st[:, :, 2], th_resp[:, :, 2]
    U_rr = np.einsum("mp,mp->p", (u_st @ d2) / hr**2, a0 * r0)
    U_r = np.einsum("mp,mp->p", (u_st @ d1) / hr, a0 * r0)
    U_aa = np.einsum("mp,mp->p", (amp_st @ d2) / hth**2, u0 * r0)
    U_tt = np.einsum("mp,mp->p", (th_resp @ d2) / ht**2, u0 * a0)

    rho = points[:, 0]
    p = params.c_rho * np.asarray(model.radial_prestress(params, rho), float)
    p_up = params.c_rho * np.asarray(model.radial_prestress(params, rho + hr), float)
    p_dn = params.c_rho * np.asarray(model.radial_prestress(params, rho - hr), float)
    dp = (p_up - p_dn) / (2 * hr)
    q = params.c_theta * np.asarray(
        model.circumferential_prestress(params, rho), float)
    gamma = np.asarray(model.linear_mass_density(params, rho), float)

    fhat = np.array([reconstruct_field_from_coeffs(
        coeffs, basis, [points[i, 0]], [points[i, 1]])[0, 0] for i in range(P)])
    gt = g.spline(points[:, 2])

    t_inertia = gamma * U_tt
    t_radial = p * U_rr + dp * U_r
    t_angular = (q / rho) * U_aa
    t_source = rho * fhat * gt
    resid = t_inertia - t_radial - t_angular - t_source
    scale = (np.abs(t_inertia) + np.abs(t_radial) + np.abs(t_angular)
             + np.abs(t_source))
    return resid / np.maximum(scale, 1e-300)


def params_hash(params: WebParameters) -> str:
    blob = json.dumps(params.__dict__, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# file formats

def save_measurement(meas: RingMeasurement, csv_path, sidecar_path=None) -> None:
    """CSV with header radius,theta,time,u plus a JSON sidecar with metadata."""
    nr, na, nt = meas.u.shape
    df = pd.DataFrame({
        "radius": np.repeat(meas.radii, na * nt),
        "theta": np.tile(np.repeat(meas.angles, nt), nr),
        "time": np.tile(meas.times, nr * na),
        "u": meas.u.ravel(),
    })
    df.to_csv(csv_path, index=False)
    sidecar = Path(sidecar_path) if sidecar_path else Path(csv_path).with_suffix(".json")
    payload = dict(meas.metadata)
    payload.update({
        "radii": list(map(float, meas.radii)),
        "angle_count": int(na),
        "time_count": int(nt),
        "time_step": float(meas.times[1] - meas.times[0]),
    })
    sidecar.write_text(json.dumps(payload, indent=2))


def load_measurement(csv_path, sidecar_path=None) -> RingMeasurement:
    df = pd.read_csv(csv_path)
    expected = ["radius", "theta", "time", "u"]
    if list(df.columns) != expected:
        raise ValueError(f"measurement CSV must have columns {expected}")
    radii = df["radius"].unique()
    angles = df["theta"].unique()
    times = df["time"].unique()
    u = df["u"].to_numpy().reshape(radii.size, angles.size, times.size)
    meta = {}
    sidecar = Path(sidecar_path) if sidecar_path else Path(csv_path).with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return RingMeasurement(radii=radii, angles=angles, times=times,
                           u=u, noise_sigma=meta.get("noise_sigma", 0.0),
                           seed=meta.get("seed"), metadata=meta)


def save_field(rhos, thetas, values, csv_path, value_column: str = "f") -> None:
    """Polar-grid field CSV with header rho,theta,<value_column>."""
    nr, na = values.shape
    pd.DataFrame({
        "rho": np.repeat(rhos, na),
        "theta": np.tile(thetas, nr),
        value_column: values.ravel(),
    }).to_csv(csv_path, index=False)
