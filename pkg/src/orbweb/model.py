"""Physical description of the orb-web: parameters, pre-stress profiles, mass densities.

The web is a circular fibrous membrane of radius R with two thread families:
radial threads (count per unit plane angle C_rho, linear density m_rho) and
circumferential threads (count per unit radial length C_theta, linear density
m_theta). A point mass M (the spider) sits at the hub. Two pre-stress profiles
are supported:

* ``finished``:   T_rho(rho) = T_hat + xi*T_script*rho,  T_theta(rho) = T_script
* ``unfinished``: T_rho(rho) = T_hat*exp(k*xi*rho),      T_theta(rho) = k*T_rho(rho)

with xi = C_theta/C_rho. All quantities are SI; no unit conversion is done.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

FINISHED = "finished"
UNFINISHED = "unfinished"

#: Keys accepted in the [web] section of a configuration file.
CONFIG_KEYS = (
    "c_rho",
    "c_theta",
    "m_rho",
    "m_theta",
    "t_hat",
    "t_script",
    "radius",
    "hub_mass",
    "profile",
    "k",
)


class ValidationError(ValueError):
    """Raised when web parameters violate a physical invariant.

    ``violations`` is a list of (field_name, message) pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{field}: {reason}" for field, reason in self.violations)
        super().__init__(f"invalid web parameters: {msg}")


class DomainError(ValueError):
    """Raised when a radius falls outside [0, R] (or the open domain for
    quantities singular at the center)."""


@dataclass(frozen=True)
class WebParameters:
    """Immutable physical constants of the web.

    ``t_script`` is the circumferential pre-stress constant of the finished
    web; it is ignored for the unfinished profile, which instead requires the
    proportionality constant ``k``.
    """

    c_rho: float
    c_theta: float
    m_rho: float
    m_theta: float
    t_hat: float
    t_script: float
    radius: float
    hub_mass: float = 0.0
    profile: str = FINISHED
    k: Union[float, None] = None

    @property
    def xi(self) -> float:
        """Thread-count ratio C_theta/C_rho (derived, never stored)."""
        return self.c_theta / self.c_rho

    def __post_init__(self):
        validate(self)


def validate(params: WebParameters) -> WebParameters:
    """Check all parameter invariants; raise ValidationError listing every violation."""
    violations = []
    positive = [
        ("c_rho", params.c_rho),
        ("c_theta", params.c_theta),
        ("m_rho", params.m_rho),
        ("t_hat", params.t_hat),
        ("radius", params.radius),
    ]
    for name, value in positive:
        if not (np.isfinite(value) and value > 0):
            violations.append((name, "must be a positive finite number"))
    if not (np.isfinite(params.m_theta) and params.m_theta >= 0):
        violations.append(("m_theta", "must be nonnegative"))
    if not (np.isfinite(params.hub_mass) and params.hub_mass >= 0):
        violations.append(("hub_mass", "must be nonnegative"))
    if params.profile == FINISHED:
        if not (np.isfinite(params.t_script) and params.t_script > 0):
            violations.append(("t_script", "finished profile requires t_script > 0"))
    elif params.profile == UNFINISHED:
        if params.k is None or not (np.isfinite(params.k) and params.k > 0):
            violations.append(("k", "unfinished profile requires k > 0"))
    else:
        violations.append(("profile", f"unknown profile {params.profile!r}"))
    if violations:
        raise ValidationError(violations)
    return params


def _check_radius(params: WebParameters, rho, exclude_zero: bool = False):
    rho = np.asarray(rho, dtype=float)
    low_ok = (rho > 0) if exclude_zero else (rho >= 0)
    if not np.all(low_ok & (rho <= params.radius)):
        bound = "]0" if exclude_zero else "[0"
        raise DomainError(f"radius out of range {bound}, {params.radius}]")
    return rho


def radial_prestress(params: WebParameters, rho):
    """Radial pre-stress T_rho(rho) for the active profile. Strictly positive."""
    rho = _check_radius(params, rho)
    if params.profile == FINISHED:
        return params.t_hat + params.xi * params.t_script * rho
    return params.t_hat * np.exp(params.k * params.xi * rho)


def circumferential_prestress(params: WebParameters, rho):
    """Circumferential pre-stress T_theta(rho): constant for the finished web,
    k*T_rho(rho) for the unfinished one."""
    rho = _check_radius(params, rho)
    if params.profile == FINISHED:
        return np.broadcast_to(np.float64(params.t_script), rho.shape).copy() if rho.ndim else np.float64(params.t_script)
    return params.k * radial_prestress(params, rho)


def linear_mass_density(params: WebParameters, rho):
    """gamma(rho) = C_rho*m_rho + rho*C_theta*m_theta (mass per unit radius,
    azimuthally integrated up to the 2*pi factor)."""
    rho = _check_radius(params, rho)
    return params.c_rho * params.m_rho + rho * params.c_theta * params.m_theta


def surface_mass_density(params: WebParameters, rho):
    """gamma_tilde(rho) = C_rho*m_rho/rho + C_theta*m_theta. Diverges at rho=0."""
    rho = _check_radius(params, rho, exclude_zero=True)
    return params.c_rho * params.m_rho / rho + params.c_theta * params.m_theta


def from_dict(raw: dict) -> WebParameters:
    """Build WebParameters from a string-keyed mapping (config-file section).

    Unknown keys are an error. Missing keys get no defaults except
    ``hub_mass`` (0), ``profile`` ("finished") and ``k`` (absent).
    """
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise ValidationError([(key, "unknown key") for key in sorted(unknown)])
    missing = [
        key
        for key in ("c_rho", "c_theta", "m_rho", "m_theta", "t_hat", "t_script", "radius")
        if key not in raw
    ]
    if missing:
        raise ValidationError([(key, "missing required key") for key in missing])

    def num(key, default=None):
        if key not in raw:
            return default
        try:
            return float(raw[key])
        except (TypeError, ValueError):
            raise ValidationError([(key, f"not a number: {raw[key]!r}")])

    return WebParameters(
        c_rho=num("c_rho"),
        c_theta=num("c_theta"),
        m_rho=num("m_rho"),
        m_theta=num("m_theta"),
        t_hat=num("t_hat"),
        t_script=num("t_script"),
        radius=num("radius"),
        hub_mass=num("hub_mass", 0.0),
        profile=str(raw.get("profile", FINISHED)).strip(),
        k=num("k", None),
    )
