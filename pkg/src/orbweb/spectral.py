"""Radial eigenproblems of the orb-web and the modal basis.

The transverse modes separate as u(rho)*{1, cos(n theta), sin(n theta)}. The
radial factors solve

    (C_rho*T_rho(rho) u')' + lam*gamma(rho) u = n^2 * (C_theta*T_theta/rho) u

with u(R)=0 and, at the center, either the hub-mass flux condition

    2*pi*C_rho*T_rho(0) u'(0) = -lam*M*u(0)           (n = 0)

or u(0)=0 (n >= 1, where the 1/rho potential is singular).

Everything is discretized after a Liouville change of variable
x = (1/J) * int_0^rho sqrt(gamma/(C_rho*T_rho)), J the full integral, which
maps [0,R] to [0,1] and turns the equation into impedance form
(A u_x)_x + mu*A*u = W(x)*u with mu = lam*J^2 and A = sqrt(p*gamma),
p = C_rho*T_rho. A finite-volume scheme on the uniform x grid yields a
symmetric tridiagonal pencil (K, B) with diagonal B; eigenvalues are then
extracted by bisection/Sturm counts and vectors by inverse iteration (LAPACK
stebz/stein via eigh_tridiagonal), so no eigenvalue is missed or duplicated.
Discrete eigenvalues carry the standard sine-recurrence correction
sqrt(mu) = (2/h)*asin(h*sqrt(mu_h)/2), which removes the O(m^4 h^2) stiffness
error of the three-point Laplacian and is exact for constant coefficients.

The quadrature weights stored on the grid are the trapezoidal weights of the
transformed variable pulled back to rho. Inner products computed with them
reproduce the discrete B-inner product exactly, so the computed basis is
orthogonal to machine precision in the scalar products used everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from . import model
from .model import WebParameters


class SolverError(RuntimeError):
    """Eigenvalue extraction failed."""


class ResolutionError(SolverError):
    """Requested more modes than the grid can resolve."""


class DegenerateModeError(SolverError):
    """An eigenfunction with (near-)zero norm was produced."""


class GridMismatchError(ValueError):
    """Operands are sampled on different grids."""


@dataclass(frozen=True)
class RadialGrid:
    """Radial nodes rho_i (images of a uniform grid in the transformed
    variable x), with quadrature weights for int_0^R phi(rho) drho.

    ``impedance`` holds A(x_i)=sqrt(p*gamma) at the nodes and ``impedance_mid``
    at midpoints; ``j_const`` is the Liouville normalization integral J.
    """

    nodes: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    impedance: np.ndarray
    impedance_mid: np.ndarray
    j_const: float

    def __post_init__(self):
        if self.nodes.size < 3 or np.any(np.diff(self.nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")

    @property
    def count(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class LiouvilleTransform:
    """Change of variable to the unit interval plus canonical-form data.

    ``q_of_x`` samples the regular canonical potential a''/a (a = sqrt(A));
    for n >= 1, ``singular_potential`` samples the additional V(x) term, which
    is bounded by C/x near the center.
    """

    params: WebParameters
    n: int
    J: float
    grid: RadialGrid
    x_of_y: CubicSpline
    y_of_x: CubicSpline
    A_of_x: np.ndarray
    q_of_x: np.ndarray
    singular_potential: Optional[np.ndarray]

    @property
    def G(self) -> float:
        """Normalization constant of the n>=1 classes; same J-style integral
        (with p = C_rho*T_rho) is used for every class."""
        return self.J


@dataclass
class RadialEigenpair:
    """One radial mode: eigenvalue and eigenfunction samples on the grid."""

    n: int
    m: int
    lam: float
    values: np.ndarray
    value_at_zero: float
    derivative_at_zero: float
    residual: float  # discrete pencil residual, relative


@dataclass
class ModalBasis:
    """Truncated modal basis: pairs indexed by (n, m), 0<=n<=n_theta,
    1<=m<=n_rad, normalized so <u_m, u_m> = 1/lam_m in the class scalar
    product."""

    params: WebParameters
    grid: RadialGrid
    pairs: Dict[Tuple[int, int], RadialEigenpair]
    n_theta: int
    n_rad: int
    normalized: bool = False
    _splines: dict = field(default_factory=dict, repr=False)

    def eigenvalues(self, n: int) -> np.ndarray:
        return np.array([self.pairs[(n, m)].lam for m in range(1, self.n_rad + 1)])

    def frequencies(self, n: int) -> np.ndarray:
        return np.sqrt(self.eigenvalues(n))

    def eigenfunction_at(self, n: int, m: int, rho) -> np.ndarray:
        """Cubic interpolation of u_m^(n) between grid nodes."""
        key = (n, m)
        if key not in self._splines:
            self._splines[key] = CubicSpline(self.grid.nodes, self.pairs[key].values)
        return self._splines[key](rho)


def _coefficients(params: WebParameters):
    p = lambda rho: params.c_rho * model.radial_prestress(params, rho)
    r = lambda rho: model.linear_mass_density(params, rho)
    return p, r


def make_grid(params: WebParameters, resolution: int = 2048) -> RadialGrid:
    """Build the transformed uniform grid and its pulled-back quadrature weights."""
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    p, r = _coefficients(params)
    R = params.radius
    integrand = lambda s: np.sqrt(r(s) / p(s))
    J, err = quad(integrand, 0.0, R, epsabs=0.0, epsrel=1e-12, limit=200)
    if not np.isfinite(J) or J <= 0 or err > 1e-8 * J:
        raise SolverError("non-integrable coefficient data in Liouville map")

    # dense map rho -> x by cumulative quadrature, inverted by spline
    fine = np.linspace(0.0, R, max(8 * resolution, 8192) + 1)
    x_fine = cumulative_simpson(integrand(fine), x=fine, initial=0.0)
    x_fine /= x_fine[-1]
    rho_of_x = CubicSpline(x_fine, fine)

    x = np.linspace(0.0, 1.0, resolution)
    nodes = np.clip(rho_of_x(x), 0.0, R)
    nodes[0], nodes[-1] = 0.0, R
    mids = np.clip(rho_of_x(0.5 * (x[:-1] + x[1:])), 0.0, R)

    A = np.sqrt(p(nodes) * r(nodes))
    A_mid = np.sqrt(p(mids) * r(mids))

    h = 1.0 / (resolution - 1)
    w = J * np.sqrt(p(nodes) / r(nodes)) * h
    w[0] *= 0.5
    w[-1] *= 0.5
    return RadialGrid(nodes=nodes, x=x, weights=w, impedance=A,
                      impedance_mid=A_mid, j_const=J)


def build_liouville_transform(params: WebParameters, n: int,
                              resolution: int = 2048) -> LiouvilleTransform:
    """Assemble the Liouville-transform data (J, x-map, impedance, canonical
    potential; plus the singular 1/x-bounded potential for n >= 1)."""
    grid = make_grid(params, resolution)
    p, r = _coefficients(params)
    x, nodes, J = grid.x, grid.nodes, grid.j_const
    h = x[1] - x[0]

    a = np.sqrt(grid.impedance)
    app = np.empty_like(a)
    app[1:-1] = (a[:-2] - 2 * a[1:-1] + a[2:]) / h**2
    app[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    app[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    q = app / a

    V = None
    if n >= 1:
        interior = nodes[1:]
        ttheta = model.circumferential_prestress(params, interior)
        V_int = J**2 * n**2 * params.c_theta * ttheta / (interior * r(interior))
        V = np.concatenate([[np.nan], V_int])  # diverges at x=0

    return LiouvilleTransform(params=params, n=n, J=J, grid=grid,
                              x_of_y=_forward_map(params, resolution),
                              y_of_x=CubicSpline(x, nodes),
                              A_of_x=grid.impedance, q_of_x=q,
                              singular_potential=V)


def _forward_map(params: WebParameters, resolution: int) -> CubicSpline:
    p, r = _coefficients(params)
    fine = np.linspace(0.0, params.radius, max(8 * resolution, 8192) + 1)
    x_fine = cumulative_simpson(np.sqrt(r(fine) / p(fine)), x=fine, initial=0.0)
    x_fine /= x_fine[-1]
    return CubicSpline(fine, x_fine)


def _assemble_pencil(params: WebParameters, grid: RadialGrid, n: int):
    """Tridiagonal pencil (K, B) for class n. Returns diagonals of K, the
    off-diagonal, and the diagonal of B, over the free DOFs."""
    N = grid.count
    h = 1.0 / (N - 1)
    A, Am, J = grid.impedance, grid.impedance_mid, grid.j_const
    p, r = _coefficients(params)

    if n == 0:
        # DOFs at nodes 0..N-2 (Dirichlet at rho=R); hub mass borders node 0
        Kd = np.empty(N - 1)
        Kd[0] = Am[0] / h
        Kd[1:] = (Am[:-1] + Am[1:]) / h
        Ke = -Am[:-1] / h
        Bd = A[: N - 1] * h
        Bd[0] = 0.5 * A[0] * h + params.hub_mass / (2.0 * math.pi * J)
        return Kd, Ke, Bd

    # n >= 1: Dirichlet at both ends, DOFs at nodes 1..N-2
    inner = grid.nodes[1:-1]
    ttheta = model.circumferential_prestress(params, inner)
    W = J**2 * n**2 * params.c_theta * ttheta / inner * (A[1:-1] / r(inner))
    Kd = (Am[:-1] + Am[1:]) / h + W * h
    Ke = -Am[1:-1] / h
    Bd = A[1:-1] * h
    return Kd, Ke, Bd


def _solve_class(params: WebParameters, grid: RadialGrid, n: int,
                 count: int) -> List[RadialEigenpair]:
    if count < 1:
        raise ValueError("count must be >= 1")
    Kd, Ke, Bd = _assemble_pencil(params, grid, n)
    dim = Kd.size
    if count > dim // 4:
        raise ResolutionError(
            f"count={count} exceeds the capacity of a {grid.count}-node grid")

    s = np.sqrt(Bd)
    d = Kd / Bd
    e = Ke / (s[:-1] * s[1:])
    try:
        mu, vecs = eigh_tridiagonal(d, e, select="i",
                                    select_range=(0, count - 1),
                                    check_finite=False)
    except Exception as exc:  # LinAlgError or convergence failure
        raise SolverError(f"eigenvalue extraction failed for n={n}: {exc}") from exc
    if np.any(mu <= 0) or np.any(np.diff(mu) <= 0):
        raise SolverError(f"non-simple or non-positive spectrum for n={n}")

    h = 1.0 / (grid.count - 1)
    J = grid.j_const

    # residual of the symmetric tridiagonal eigensystem, per mode
    res = np.empty(count)
    for k in range(count):
        w = vecs[:, k]
        Tw = d * w
        Tw[:-1] += e * w[1:]
        Tw[1:] += e * w[:-1]
        res[k] = np.linalg.norm(Tw - mu[k] * w) / mu[k]

    # sine-recurrence correction for the three-point Laplacian, then lam = mu/J^2
    sqrt_mu = (2.0 / h) * np.arcsin(np.clip(h * np.sqrt(mu) / 2.0, 0.0, 1.0))
    lams = (sqrt_mu / J) ** 2

    p, r = _coefficients(params)
    dxdy0 = np.sqrt(r(0.0) / p(0.0)) / J
    pairs = []
    for k in range(count):
        u = np.zeros(grid.count)
        if n == 0:
            u[:-1] = vecs[:, k] / s
        else:
            u[1:-1] = vecs[:, k] / s
        ux0 = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
        pairs.append(RadialEigenpair(
            n=n, m=k + 1, lam=float(lams[k]), values=u,
            value_at_zero=float(u[0]),
            derivative_at_zero=float(ux0 * dxdy0),
            residual=float(res[k])))
    return pairs


def solve_radial_n0(params: WebParameters, grid: RadialGrid,
                    count: int) -> List[RadialEigenpair]:
    """Lowest ``count`` eigenpairs of the axisymmetric class (hub-mass
    boundary condition at the center)."""
    return _solve_class(params, grid, 0, count)


def solve_radial_n(params: WebParameters, grid: RadialGrid, n: int,
                   count: int) -> List[RadialEigenpair]:
    """Lowest ``count`` eigenpairs of the class with angular index n >= 1
    (Dirichlet at both ends, singular 1/rho potential)."""
    if n < 1:
        raise ValueError("n must be >= 1; use solve_radial_n0 for n=0")
    return _solve_class(params, grid, n, count)


def inner_product_gamma(h1, h2, params: WebParameters, grid: RadialGrid) -> float:
    """int_0^R gamma*h1*h2 drho by the grid's composite quadrature."""
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.shape != (grid.count,) or h2.shape != (grid.count,):
        raise GridMismatchError("operands not sampled on this grid")
    gamma = model.linear_mass_density(params, grid.nodes)
    return float(np.sum(grid.weights * gamma * h1 * h2))


def inner_product_gamma_M(h1, h2, params: WebParameters, grid: RadialGrid) -> float:
    """Same as inner_product_gamma plus the hub-mass term (M/2pi)*h1(0)*h2(0)."""
    base = inner_product_gamma(h1, h2, params, grid)
    return base + params.hub_mass / (2.0 * math.pi) * float(h1[0]) * float(h2[0])


def _first_extremum_sign(u: np.ndarray, interior_start: int) -> float:
    a = np.abs(u)
    amax = a.max()
    for i in range(interior_start, u.size - 1):
        prev = a[i - 1] if i > 0 else 0.0
        if a[i] >= prev and a[i] >= a[i + 1] and a[i] > 0.05 * amax:
            return math.copysign(1.0, u[i])
    return math.copysign(1.0, u[np.argmax(a)])


def normalize_basis(raw_pairs, params: WebParameters, grid: RadialGrid) -> ModalBasis:
    """Rescale eigenpairs to <u_m, u_m> = 1/lam_m (class scalar product) and
    enforce the positive-first-extremum sign convention."""
    pairs: Dict[Tuple[int, int], RadialEigenpair] = {}
    n_theta, n_rad = 0, 0
    for pair in raw_pairs:
        ip = inner_product_gamma_M if pair.n == 0 else inner_product_gamma
        norm = ip(pair.values, pair.values, params, grid)
        if norm <= 1e-300:
            raise DegenerateModeError(f"mode (n={pair.n}, m={pair.m}) has zero norm")
        scale = 1.0 / math.sqrt(pair.lam * norm)
        scale *= _first_extremum_sign(pair.values, 0 if pair.n == 0 else 1)
        u = pair.values * scale
        ux0_scaled = pair.derivative_at_zero * scale
        pairs[(pair.n, pair.m)] = RadialEigenpair(
            n=pair.n, m=pair.m, lam=pair.lam, values=u,
            value_at_zero=float(u[0]), derivative_at_zero=ux0_scaled,
            residual=pair.residual)
        n_theta = max(n_theta, pair.n)
        n_rad = max(n_rad, pair.m)
    return ModalBasis(params=params, grid=grid, pairs=pairs,
                      n_theta=n_theta, n_rad=n_rad, normalized=True)


def compute_basis(params: WebParameters, resolution: int = 2048,
                  n_theta: int = 8, n_rad: int = 12) -> ModalBasis:
    """Solve all classes n = 0..n_theta for n_rad modes each and normalize."""
    grid = make_grid(params, resolution)
    raw = solve_radial_n0(params, grid, n_rad)
    for n in range(1, n_theta + 1):
        raw += solve_radial_n(params, grid, n, n_rad)
    basis = normalize_basis(raw, params, grid)
    basis.n_theta, basis.n_rad = n_theta, n_rad
    return basis


def spectrum_gap_diagnostic(basis: ModalBasis) -> Dict[int, float]:
    """Minimum gap of each sqrt-eigenvalue sequence, per angular index.
    Classes with fewer than two modes are omitted."""
    gaps = {}
    for n in range(0, basis.n_theta + 1):
        freqs = basis.frequencies(n)
        if freqs.size >= 2:
            gaps[n] = float(np.min(np.diff(freqs)))
    return gaps


def center_condition_residual(pair: RadialEigenpair, params: WebParameters) -> float:
    """Relative residual of the hub condition
    2*pi*C_rho*T_rho(0)*u'(0) + lam*M*u(0) for an n=0 mode."""
    flux = 2 * math.pi * params.c_rho * model.radial_prestress(params, 0.0)
    lhs = flux * pair.derivative_at_zero + pair.lam * params.hub_mass * pair.value_at_zero
    scale = abs(flux * pair.derivative_at_zero) + abs(
        pair.lam * params.hub_mass * pair.value_at_zero)
    return abs(lhs) / scale if scale > 0 else 0.0


def canonical_mode_shape(basis: ModalBasis, n: int, m: int) -> np.ndarray:
    """Mode shape in the canonical variable, z(x) = sqrt(A(x)) * u(x),
    sampled on the uniform x grid."""
    return np.sqrt(basis.grid.impedance) * basis.pairs[(n, m)].values


def spectrum_summary(basis: ModalBasis) -> dict:
    """JSON-serializable summary: J, per-n gap diagnostics, residual norms."""
    return {
        "j_const": basis.grid.j_const,
        "n_theta": basis.n_theta,
        "n_rad": basis.n_rad,
        "grid_nodes": int(basis.grid.count),
        "gap_by_n": {str(n): g for n, g in spectrum_gap_diagnostic(basis).items()},
        "max_ode_residual": max(p.residual for p in basis.pairs.values()),
    }


def export_eigenvalues_csv(basis: ModalBasis, path) -> None:
    """CSV with header n,m,lambda."""
    import pandas as pd

    rows = [(n, m, basis.pairs[(n, m)].lam)
            for n in range(0, basis.n_theta + 1)
            for m in range(1, basis.n_rad + 1)]
    pd.DataFrame(rows, columns=["n", "m", "lambda"]).to_csv(path, index=False)


def export_eigenfunctions_csv(basis: ModalBasis, outdir) -> None:
    """One CSV per (n, m) with header rho,u."""
    import pandas as pd
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for (n, m), pair in sorted(basis.pairs.items()):
        pd.DataFrame({"rho": basis.grid.nodes, "u": pair.values}).to_csv(
            outdir / f"eigenfunction_n{n}_m{m}.csv", index=False)
