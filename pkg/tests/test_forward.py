"""Projection, Duhamel evolution, series evaluation, ring synthesis, formats."""

import math

import numpy as np
import pytest

from orbweb import model
from orbweb.forward import (ModalCoefficients, QueryDomainError, SourceField,
                            TimeProfile, coefficient_energy, constant_profile,
                            decaying_exponential, duhamel,
                            evaluate_displacement, field_energy, gaussian_bump,
                            load_measurement, modal_responses, pde_residual,
                            project_source, raised_cosine,
                            reconstruct_field_from_coeffs, save_measurement,
                            synthesize_ring)


def band_limited_source(coeffs, basis):
    """Exact series evaluation of the field represented by ``coeffs``; the
    reference object for projection self-consistency tests."""

    def ev(rho, theta):
        rho, theta = np.broadcast_arrays(np.asarray(rho, float),
                                         np.asarray(theta, float))
        F = np.zeros(rho.shape)
        for m in range(1, coeffs.n_rad + 1):
            F += (basis.pairs[(0, m)].lam * coeffs.f0[m - 1]
                  * basis.eigenfunction_at(0, m, rho))
        for n in range(1, coeffs.n_theta + 1):
            for m in range(1, coeffs.n_rad + 1):
                pair = basis.pairs[(n, m)]
                u = basis.eigenfunction_at(n, m, rho)
                F += pair.lam * u * (coeffs.fc[n - 1, m - 1] * np.cos(n * theta)
                                     + coeffs.fs[n - 1, m - 1] * np.sin(n * theta))
        gam = model.linear_mass_density(basis.params, rho)
        return np.where(rho > 0, gam * F / np.where(rho > 0, rho, 1.0), 0.0)

    return SourceField(ev, description="band-limited reference")


def stack(c):
    return np.concatenate([c.f0.ravel(), c.fc.ravel(), c.fs.ravel()])


class TestProjection:
    def test_zero_field(self, basis):
        coeffs = project_source(SourceField(lambda r, t: np.zeros(np.broadcast(
            r, t).shape)), basis)
        assert np.all(stack(coeffs) == 0)

    def test_angular_orthogonality(self, basis):
        src = SourceField(lambda r, t: r * (1 - r) * np.cos(3 * t))
        coeffs = project_source(src, basis)
        assert np.max(np.abs(coeffs.f0)) < 1e-14
        assert np.max(np.abs(coeffs.fs)) < 1e-14
        mask = np.ones(basis.n_theta, bool)
        mask[2] = False
        assert np.max(np.abs(coeffs.fc[mask])) < 1e-14
        assert np.max(np.abs(coeffs.fc[2])) > 1e-6

    def test_identity_oracle(self, basis_m0):
        """f = gamma*u_k/rho with M=0 gives F0_m = delta_mk/lam_k up to the
        endpoint quadrature error of the (singular) test integrand."""
        k = 3
        pair = basis_m0.pairs[(0, k)]

        def ev(rho, theta):
            rho, theta = np.broadcast_arrays(np.asarray(rho, float),
                                             np.asarray(theta, float))
            gam = model.linear_mass_density(basis_m0.params, rho)
            u = basis_m0.eigenfunction_at(0, k, rho)
            return np.where(rho > 0, gam * u / np.where(rho > 0, rho, 1.0), 0.0)

        coeffs = project_source(SourceField(ev), basis_m0)
        expected = np.zeros(basis_m0.n_rad)
        expected[k - 1] = 1.0 / pair.lam
        assert np.linalg.norm(coeffs.f0 - expected) <= 5e-3 * np.linalg.norm(expected)
        # the residual deviation is exactly the hub-node quadrature term that
        # the rho-weighted projection of this singular integrand cannot see
        gam0 = model.linear_mass_density(basis_m0.params, 0.0)
        w0 = basis_m0.grid.weights[0]
        endpoint = np.array([w0 * gam0 * basis_m0.pairs[(0, m)].values[0]
                             * pair.values[0]
                             for m in range(1, basis_m0.n_rad + 1)])
        assert np.linalg.norm(coeffs.f0 + endpoint - expected) <= 1e-12
        assert np.max(np.abs(coeffs.fc)) < 1e-12
        assert np.max(np.abs(coeffs.fs)) < 1e-12

    def test_band_limited_self_consistency(self, basis, rng):
        """Projecting the exact series of random n>=1 coefficients returns
        them to machine precision."""
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        coeffs.fc[:] = rng.standard_normal(coeffs.fc.shape)
        coeffs.fs[:] = rng.standard_normal(coeffs.fs.shape)
        got = project_source(band_limited_source(coeffs, basis), basis)
        assert np.linalg.norm(stack(got) - stack(coeffs)) <= 1e-10 * np.linalg.norm(
            stack(coeffs))

    def test_nyquist_guard(self, basis):
        with pytest.raises(ValueError):
            project_source(gaussian_bump(0.3, 0.0, 0.1), basis, n_angles=5)


class TestDuhamel:
    def test_constant_profile_closed_form(self):
        """g = 1: theta(t) = 1 - cos(sqrt(lam) t)."""
        for lam in (1.0, 4.0, 10.0, 100.0):
            g = constant_profile(math.pi / 2, 1e-3)
            got = duhamel(lam, g)
            expected = 1.0 - np.cos(math.sqrt(lam) * g.times)
            assert np.max(np.abs(got - expected)) < 1e-8

    def test_resonant_closed_form(self):
        """g = sin(sqrt(lam) t): theta = (sin(wt) - wt cos(wt)) / 2."""
        for lam in (1.0, 10.0, 100.0):
            w = math.sqrt(lam)
            g = TimeProfile(np.arange(0, 3201) * 1e-3,
                            np.sin(w * np.arange(0, 3201) * 1e-3))
            got = duhamel(lam, g)
            wt = w * g.times
            expected = 0.5 * (np.sin(wt) - wt * np.cos(wt))
            assert np.max(np.abs(got - expected)) < 1e-8

    def test_zero_time(self):
        g = decaying_exponential(1.0, 1e-3)
        assert duhamel(5.0, g)[0] == 0.0

    def test_rest_initial_velocity(self):
        g = decaying_exponential(1.0, 1e-4)
        theta = duhamel(25.0, g)
        dt = g.times[1]
        assert abs(theta[1] - theta[0]) / dt < 1e-2  # O(dt) start from rest

    def test_modal_ode_residual(self, basis):
        """theta'' + lam*theta = lam*g holds discretely to 1e-6 relative."""
        lam = basis.pairs[(8, 12)].lam  # stiffest mode
        g = decaying_exponential(2.0, 5e-4, rate=1.0)
        theta = duhamel(lam, g)
        dt = g.times[1]
        dd = (-theta[:-4] + 16 * theta[1:-3] - 30 * theta[2:-2]
              + 16 * theta[3:-1] - theta[4:]) / (12 * dt**2)
        resid = dd + lam * theta[2:-2] - lam * g.values[2:-2]
        assert np.max(np.abs(resid)) <= 1e-6 * lam * np.max(np.abs(theta))

    def test_rejects_nonpositive_eigenvalue(self):
        g = constant_profile(1.0, 1e-3)
        with pytest.raises(ValueError):
            duhamel(-1.0, g)


class TestDisplacement:
    def test_zero_coefficients(self, basis):
        g = constant_profile(0.5, 1e-2)
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        U = evaluate_displacement(basis, coeffs, g, [0.2, 0.5], [0.0, 1.0],
                                  g.times)
        assert np.all(U == 0)

    def test_boundary_condition(self, basis):
        g = decaying_exponential(0.5, 1e-2)
        coeffs = project_source(gaussian_bump(0.4, 1.0, 0.15), basis)
        R = basis.params.radius
        U = evaluate_displacement(basis, coeffs, g, [R], np.linspace(0, 2 * np.pi, 9),
                                  g.times)
        assert np.max(np.abs(U)) < 1e-12

    def test_initial_conditions(self, basis):
        g = decaying_exponential(0.5, 1e-3)
        coeffs = project_source(gaussian_bump(0.4, 1.0, 0.15), basis)
        U = evaluate_displacement(basis, coeffs, g, [0.3], [0.5], g.times)
        assert np.all(U[..., 0] == 0)
        # centered estimate of dU/dt at t=0 using the odd extension U(-t)=-U(t)
        dt = g.times[1]
        scale = np.max(np.abs(U)) / (g.times[-1])
        assert abs(U[0, 0, 1] - (-U[0, 0, 1])) / (2 * dt) < 1e2 * dt * scale

    def test_linearity(self, basis, rng):
        g = decaying_exponential(0.5, 2e-3)
        c1 = ModalCoefficients(rng.standard_normal(basis.n_rad),
                               rng.standard_normal((basis.n_theta, basis.n_rad)),
                               rng.standard_normal((basis.n_theta, basis.n_rad)))
        c2 = ModalCoefficients(rng.standard_normal(basis.n_rad),
                               rng.standard_normal((basis.n_theta, basis.n_rad)),
                               rng.standard_normal((basis.n_theta, basis.n_rad)))
        csum = ModalCoefficients(c1.f0 + c2.f0, c1.fc + c2.fc, c1.fs + c2.fs)
        rhos, thetas = [0.2, 0.45], [0.3, 2.0]
        U1 = evaluate_displacement(basis, c1, g, rhos, thetas, g.times)
        U2 = evaluate_displacement(basis, c2, g, rhos, thetas, g.times)
        Usum = evaluate_displacement(basis, csum, g, rhos, thetas, g.times)
        np.testing.assert_allclose(Usum, U1 + U2, atol=1e-12 * np.max(np.abs(U1)))

    def test_query_domain_guard(self, basis):
        g = constant_profile(0.5, 1e-2)
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        with pytest.raises(QueryDomainError):
            evaluate_displacement(basis, coeffs, g, [1.5], [0.0], [0.1])
        with pytest.raises(QueryDomainError):
            evaluate_displacement(basis, coeffs, g, [0.5], [0.0], [2.0])

    def test_pde_residual_collocation(self, basis, rng):
        """The synthesized series satisfies the governing equation at random
        interior points by independent finite differences."""
        coeffs = project_source(gaussian_bump(0.35, np.pi / 4, 0.12), basis)
        g = decaying_exponential(2.0, 1e-3, rate=1.0)
        pts = np.column_stack([rng.uniform(0.05, 0.95, 100),
                               rng.uniform(0.0, 2 * np.pi, 100),
                               rng.uniform(0.1, 1.9, 100)])
        resid = pde_residual(basis, coeffs, g, pts)
        assert np.max(np.abs(resid)) <= 1e-3


class TestRingSynthesis:
    def test_zero_source(self, basis):
        g = constant_profile(0.5, 1e-2)
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        meas = synthesize_ring(basis, coeffs, g, [0.15])
        assert np.all(meas.u == 0)

    def test_noiseless_matches_direct_evaluation(self, basis):
        g = decaying_exponential(0.5, 2e-3)
        coeffs = project_source(gaussian_bump(0.4, 1.0, 0.15), basis)
        meas = synthesize_ring(basis, coeffs, g, [0.15], n_angles=32)
        direct = evaluate_displacement(basis, coeffs, g, meas.radii,
                                       meas.angles, g.times)
        assert np.array_equal(meas.u, direct)

    def test_axisymmetric_source_angle_independent(self, basis):
        src = SourceField(lambda r, t: np.exp(-8 * (r - 0.4) ** 2)
                          * np.ones(np.broadcast(r, t).shape))
        coeffs = project_source(src, basis)
        g = decaying_exponential(0.5, 2e-3)
        meas = synthesize_ring(basis, coeffs, g, [0.15], n_angles=24)
        spread = np.max(np.abs(meas.u - meas.u[:, :1, :]))
        assert spread < 1e-10 * max(np.max(np.abs(meas.u)), 1e-30)

    def test_noise_reproducible(self, basis):
        g = decaying_exponential(0.3, 5e-3)
        coeffs = project_source(gaussian_bump(0.4, 1.0, 0.15), basis)
        m1 = synthesize_ring(basis, coeffs, g, [0.15], noise_sigma=1e-3, seed=7)
        m2 = synthesize_ring(basis, coeffs, g, [0.15], noise_sigma=1e-3, seed=7)
        assert np.array_equal(m1.u, m2.u)

    def test_radius_outside_hypothesis_warns(self, basis):
        g = constant_profile(0.3, 1e-2)
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        with pytest.warns(UserWarning):
            synthesize_ring(basis, coeffs, g, [0.8])


class TestFieldReconstruction:
    def test_zero_coefficients(self, basis):
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        f = reconstruct_field_from_coeffs(coeffs, basis, np.linspace(0, 1, 9),
                                          np.linspace(0, 2 * np.pi, 8))
        assert np.all(f == 0)

    def test_single_coefficient_series(self, basis):
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        coeffs.fc[0, 0] = 1.0
        rhos = np.linspace(0.05, 0.95, 13)
        thetas = np.linspace(0, 2 * np.pi, 9)
        f = reconstruct_field_from_coeffs(coeffs, basis, rhos, thetas)
        pair = basis.pairs[(1, 1)]
        gam = model.linear_mass_density(basis.params, rhos)
        expected = (pair.lam * basis.eigenfunction_at(1, 1, rhos)
                    * gam / rhos)[:, None] * np.cos(thetas)[None, :]
        np.testing.assert_allclose(f, expected, rtol=1e-12)

    def test_project_reconstruct_band_limited(self, basis, rng):
        """Round trip through the continuous field of random n>=1
        coefficients: relative L2 error <= 1e-6."""
        coeffs = ModalCoefficients.zeros(basis.n_theta, basis.n_rad)
        coeffs.fc[:] = rng.standard_normal(coeffs.fc.shape)
        coeffs.fs[:] = rng.standard_normal(coeffs.fs.shape)
        src = band_limited_source(coeffs, basis)
        got = project_source(src, basis)
        rhos = basis.grid.nodes[1:]
        thetas = 2 * np.pi * np.arange(48) / 48
        f_back = reconstruct_field_from_coeffs(got, basis, rhos, thetas)
        f_true = src.evaluate(rhos[:, None], thetas[None, :])
        err = np.linalg.norm(f_back - f_true) / np.linalg.norm(f_true)
        assert err <= 1e-6


class TestParseval:
    def test_energy_identity_gaussian(self, basis):
        src = gaussian_bump(0.35, np.pi / 4, 0.12)
        coeffs = project_source(src, basis)
        lhs = coefficient_energy(coeffs, basis)
        rhs = field_energy(src, basis)
        assert abs(lhs - rhs) <= 0.01 * rhs

    def test_completeness_monotone(self, params):
        """Projection error strictly decreases as the radial truncation
        doubles."""
        from orbweb.spectral import compute_basis
        src = gaussian_bump(0.35, np.pi / 4, 0.12)
        errors = []
        for n_rad in (3, 6, 12):
            b = compute_basis(params, resolution=1024, n_theta=6, n_rad=n_rad)
            coeffs = project_source(src, b)
            errors.append(field_energy(src, b) - coefficient_energy(coeffs, b))
        assert errors[0] > errors[1] > errors[2] > 0


class TestFileFormats:
    def test_measurement_round_trip(self, basis, tmp_path):
        g = decaying_exponential(0.2, 5e-3)
        coeffs = project_source(gaussian_bump(0.4, 1.0, 0.15), basis)
        meas = synthesize_ring(basis, coeffs, g, [0.1, 0.15], n_angles=20,
                               noise_sigma=1e-4, seed=11)
        path = tmp_path / "meas.csv"
        save_measurement(meas, path)
        loaded = load_measurement(path)
        np.testing.assert_allclose(loaded.u, meas.u, atol=1e-12)
        np.testing.assert_allclose(loaded.radii, meas.radii)
        np.testing.assert_allclose(loaded.times, meas.times)
        assert loaded.noise_sigma == 1e-4
        assert loaded.seed == 11
        assert (tmp_path / "meas.json").exists()

    def test_time_profile_validation(self):
        with pytest.raises(ValueError):
            TimeProfile(np.array([0.1, 0.2]), np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            TimeProfile(np.array([0.0, 0.1, 0.15]), np.array([1.0, 1.0, 1.0]))

    def test_raised_cosine_profile(self):
        g = raised_cosine(1.0, 1e-3, duration=0.4)
        assert g.g0 == pytest.approx(1.0)
        assert g.values[-1] == 0.0
        assert np.all(np.diff(g.values[g.times <= 0.4]) <= 0)
