"""Shared fixtures: the synthetic demo web and precomputed modal bases."""

import numpy as np
import pytest

from orbweb.model import WebParameters
from orbweb.spectral import compute_basis


@pytest.fixture(scope="session")
def params():
    """Default synthetic finished web (affine coefficient functions, J = 1)."""
    return WebParameters(c_rho=10.0, c_theta=20.0, m_rho=0.1, m_theta=0.05,
                         t_hat=0.1, t_script=0.05, radius=1.0, hub_mass=1.0)


@pytest.fixture(scope="session")
def params_m0(params):
    """Same web without the hub mass (analytic-oracle variant)."""
    return WebParameters(c_rho=params.c_rho, c_theta=params.c_theta,
                         m_rho=params.m_rho, m_theta=params.m_theta,
                         t_hat=params.t_hat, t_script=params.t_script,
                         radius=params.radius, hub_mass=0.0)


@pytest.fixture(scope="session")
def basis(params):
    """Default truncation basis used by forward/inverse tests."""
    return compute_basis(params, resolution=2048, n_theta=8, n_rad=12)


@pytest.fixture(scope="session")
def basis_m0(params_m0):
    return compute_basis(params_m0, resolution=2048, n_theta=8, n_rad=12)


@pytest.fixture(scope="session")
def deep_basis(params):
    """Axisymmetric-only basis reaching m = 40 for asymptotic checks."""
    return compute_basis(params, resolution=2048, n_theta=0, n_rad=40)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
