import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from fields.gauge import gauge_transform
from fields.lattice import GaugeFunction, OneFormField, PeriodicGrid, ScalarField
from fields.operators import exterior_d
from geometry.measures import MeasureDensity
from geometry.norms import CotangentVector, QuadraticNorm, RandersNorm, TangentVector, dual_norm, eval_norm
from geometry.profiles import CoefficientProfile
from main.enums import CoMetric, MeasureKind
from main.exceptions import DomainError

from .functional import (
    EnergyBreakdown,
    GLParams,
    complex_conorm_sq,
    diamagnetic_residual,
    dirichlet_energy,
    energy_and_gradient,
    finsler_gradient_field,
    finsler_laplacian,
    gl_energy,
    gl_gradient,
    laplacian_spectral_gap,
    pairing,
    poincare_constant,
)

EUCLIDEAN = CoMetric.EUCLIDEAN


def smooth(grid, rng, modes=2):
    theta, phi = grid.mesh()
    values = np.zeros(grid.shape)
    for k in range(-modes, modes + 1):
        for l in range(-modes, modes + 1):
            c = rng.normal(size=2) / (1 + k * k + l * l)
            values += c[0] * np.cos(k * theta + l * phi) + c[1] * np.sin(k * theta + l * phi)
    return values


def profile_norm():
    return QuadraticNorm(CoefficientProfile.parse('cos_theta(2.0, 0.3)'), CoefficientProfile.parse('sin_product(1.0, 0.2)'))


def randers_norm():
    return RandersNorm(CoefficientProfile.parse('cos_phi(1.5, 0.2)'), 1.0, (0.3, -0.2))


def classical_energy(psi, a_theta, a_phi, lam, epsilon):
    """Flat GL energy with explicit index arithmetic for the same stencil."""
    n_theta, n_phi = psi.shape
    h_theta, h_phi = 2 * np.pi / n_theta, 2 * np.pi / n_phi
    i = np.arange(n_theta)[:, None]
    j = np.arange(n_phi)[None, :]

    def along_theta(f):
        return (-f[(i + 2) % n_theta, j] + 8 * f[(i + 1) % n_theta, j] - 8 * f[(i - 1) % n_theta, j] + f[(i - 2) % n_theta, j]) / (12 * h_theta)

    def along_phi(f):
        return (-f[i, (j + 2) % n_phi] + 8 * f[i, (j + 1) % n_phi] - 8 * f[i, (j - 1) % n_phi] + f[i, (j - 2) % n_phi]) / (12 * h_phi)

    covariant = [along_theta(psi) - 1j * a_theta * psi, along_phi(psi) - 1j * a_phi * psi]
    kinetic = 0.5 * sum(np.abs(c) ** 2 for c in covariant)
    field = along_theta(a_phi) - along_phi(a_theta)
    density = kinetic + field ** 2 / (2 * lam) + (1 - np.abs(psi) ** 2) ** 2 / (4 * epsilon ** 2)
    return np.sum(density) * h_theta * h_phi


class GLParamsTests(SimpleTestCase):
    """Test parameter validation"""

    def test_rejects_nonpositive(self):
        """Test that lam and epsilon must be positive and finite"""
        for lam, epsilon in ((0.0, 1.0), (1.0, -0.1), (np.inf, 1.0)):
            with self.assertRaises(ValidationError):
                GLParams(lam, epsilon)

    def test_breakdown_is_additive(self):
        """Test that the total is the sum of its parts"""
        energy = EnergyBreakdown.from_parts(1.5, 0.25, 2.0)
        self.assertEqual(energy.total, 3.75)
        self.assertEqual(set(energy.as_row()), {'kinetic', 'maxwell', 'potential', 'total'})


class ComplexConormTests(SimpleTestCase):
    """Test |eta|^2 = F*(Re eta)^2 + F*(Im eta)^2"""

    def test_examples(self):
        """Test real, imaginary and rotated covectors for a = 4, b = 1"""
        norm = QuadraticNorm(4.0, 1.0)
        for xi in (1.0, 1j, (1 + 1j) / np.sqrt(2)):
            self.assertAlmostEqual(complex_conorm_sq(norm, CotangentVector(xi, 0.0)), 0.25, places=14)

    def test_kinetic_integrand_is_convex(self):
        """Test convexity of 1/2 |eta|^2 along segments for a Randers norm"""
        norm = randers_norm()
        rng = np.random.default_rng(30)
        theta, phi = rng.uniform(0, 2 * np.pi, (2, 200))
        eta1 = rng.normal(size=(2, 200)) + 1j * rng.normal(size=(2, 200))
        eta2 = rng.normal(size=(2, 200)) + 1j * rng.normal(size=(2, 200))
        t = rng.uniform(0, 1, 200)
        middle = t * eta1 + (1 - t) * eta2
        left = 0.5 * complex_conorm_sq(norm, CotangentVector(middle[0], middle[1], theta, phi))
        right = (
            t * 0.5 * complex_conorm_sq(norm, CotangentVector(eta1[0], eta1[1], theta, phi))
            + (1 - t) * 0.5 * complex_conorm_sq(norm, CotangentVector(eta2[0], eta2[1], theta, phi))
        )
        self.assertTrue(np.all(left <= right + 1e-12))


class GLEnergyTests(SimpleTestCase):
    """Test the energy on analytic configurations"""

    def setUp(self):
        self.grid = PeriodicGrid(64, 64)
        self.theta, self.phi = self.grid.mesh()
        self.params = GLParams(1.0, 0.3)

    def test_theta_winding_anisotropic(self):
        """Test kinetic = pi^2 sqrt 2 for e^{i theta}, a = 2, b = 1, sigma = sqrt 2"""
        norm = QuadraticNorm(2.0, 1.0)
        density = MeasureDensity(norm, MeasureKind.BUSEMANN_HAUSDORFF)
        self.assertAlmostEqual(density.on_grid(self.grid)[0, 0], np.sqrt(2.0), places=10)
        psi = ScalarField(self.grid, np.exp(1j * self.theta))
        energy = gl_energy(norm, density, EUCLIDEAN, self.params, psi, OneFormField.zeros(self.grid))
        self.assertAlmostEqual(energy.kinetic / (np.pi ** 2 * np.sqrt(2.0)), 1.0, delta=1e-4)
        self.assertEqual(energy.maxwell, 0.0)
        self.assertLess(energy.potential, 1e-25)

    def test_theta_winding_isotropic(self):
        """Test total = 2 pi^2 for a = b = 1"""
        norm = QuadraticNorm(1.0, 1.0)
        psi = ScalarField(self.grid, np.exp(1j * self.theta))
        energy = gl_energy(norm, MeasureDensity(norm), EUCLIDEAN, self.params, psi, OneFormField.zeros(self.grid))
        self.assertAlmostEqual(energy.total / (2 * np.pi ** 2), 1.0, delta=1e-4)

    def test_ground_state(self):
        """Test that psi = 1, A = 0 has zero energy and zero gradient"""
        norm = randers_norm()
        density = MeasureDensity(norm)
        psi = ScalarField.constant(self.grid, 1.0 + 0j)
        energy, gradient = energy_and_gradient(norm, density, EUCLIDEAN, self.params, psi, OneFormField.zeros(self.grid))
        self.assertEqual(energy.total, 0.0)
        self.assertFalse(np.any(gradient.psi.values))
        self.assertFalse(np.any(gradient.A.theta_component) or np.any(gradient.A.phi_component))

    def test_parts_nonnegative(self):
        """Test that every part is nonnegative on random data"""
        rng = np.random.default_rng(31)
        psi = ScalarField(self.grid, smooth(self.grid, rng) + 1j * smooth(self.grid, rng))
        A = OneFormField(self.grid, smooth(self.grid, rng), smooth(self.grid, rng))
        norm = randers_norm()
        energy = gl_energy(norm, MeasureDensity(norm), EUCLIDEAN, self.params, psi, A)
        self.assertGreater(energy.kinetic, 0.0)
        self.assertGreater(energy.maxwell, 0.0)
        self.assertGreater(energy.potential, 0.0)
        self.assertAlmostEqual(energy.total, energy.kinetic + energy.maxwell + energy.potential, delta=1e-12 * energy.total)

    def test_classical_reduction(self):
        """Test a = b = 1 against an independent flat implementation"""
        grid = PeriodicGrid(16, 16)
        rng = np.random.default_rng(32)
        psi = smooth(grid, rng) + 1j * smooth(grid, rng)
        a_theta, a_phi = smooth(grid, rng), smooth(grid, rng)
        norm = QuadraticNorm(1.0, 1.0)
        params = GLParams(0.7, 0.4)
        energy = gl_energy(norm, MeasureDensity(norm), EUCLIDEAN, params, ScalarField(grid, psi), OneFormField(grid, a_theta, a_phi))
        reference = classical_energy(psi, a_theta, a_phi, 0.7, 0.4)
        self.assertAlmostEqual(energy.total / reference, 1.0, delta=1e-12)

    def test_unsupported_cometric(self):
        """Test that only the Euclidean co-metric is accepted"""
        norm = QuadraticNorm(1.0, 1.0)
        with self.assertRaises(ValueError):
            gl_energy(norm, MeasureDensity(norm), 'riemannian', self.params, ScalarField.constant(self.grid, 1.0), OneFormField.zeros(self.grid))

    def test_gauge_invariance_under_refinement(self):
        """Test that the gauge defect of the energy shrinks at fourth order"""
        norm = profile_norm()
        density = MeasureDensity(norm)
        defects = []
        for n in (32, 64):
            grid = PeriodicGrid(n, n)
            theta, phi = grid.mesh()
            psi = ScalarField(grid, (1.2 + 0.3 * np.cos(theta)) * np.exp(1j * np.sin(phi)))
            A = OneFormField(grid, 0.3 * np.sin(phi), 0.2 * np.cos(theta))
            chi = GaugeFunction(grid, np.sin(theta) * np.cos(phi))
            before = gl_energy(norm, density, EUCLIDEAN, self.params, psi, A).total
            after = gl_energy(norm, density, EUCLIDEAN, self.params, *gauge_transform(psi, A, chi)).total
            defects.append(abs(after - before))
        self.assertGreaterEqual(defects[0] / defects[1], 7.0)


class GLGradientTests(SimpleTestCase):
    """Test the gradient against central differences of the energy"""

    def check_directional_derivatives(self, norm):
        grid = PeriodicGrid(16, 16)
        rng = np.random.default_rng(33)
        density = MeasureDensity(norm)
        sigma = density.on_grid(grid)
        params = GLParams(0.8, 0.5)
        psi = ScalarField(grid, smooth(grid, rng) + 1j * smooth(grid, rng))
        A = OneFormField(grid, smooth(grid, rng), smooth(grid, rng))
        gradient = gl_gradient(norm, density, EUCLIDEAN, params, psi, A)
        t = 1e-5
        for _ in range(20):
            phi = ScalarField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
            B = OneFormField(grid, rng.normal(size=grid.shape), rng.normal(size=grid.shape))
            forward = gl_energy(norm, density, EUCLIDEAN, params, ScalarField(grid, psi.values + t * phi.values), A + B.scaled(t))
            backward = gl_energy(norm, density, EUCLIDEAN, params, ScalarField(grid, psi.values - t * phi.values), A - B.scaled(t))
            numeric = (forward.total - backward.total) / (2 * t)
            exact = pairing(sigma, grid, gradient, (phi, B))
            self.assertAlmostEqual(exact / numeric, 1.0, delta=1e-6)

    def test_quadratic_profile_norm(self):
        """Test 20 random directions for an x-dependent quadratic norm"""
        self.check_directional_derivatives(profile_norm())

    def test_randers_norm(self):
        """Test 20 random directions for an x-dependent Randers norm"""
        self.check_directional_derivatives(randers_norm())


class FinslerGradientTests(SimpleTestCase):
    """Test grad_F, Delta_F and the Dirichlet energy"""

    def setUp(self):
        self.grid = PeriodicGrid(64, 64)
        self.theta, self.phi = self.grid.mesh()

    def test_gradient_examples(self):
        """Test grad_F sin(theta) = (cos(theta)/4, 0) for a = 4, b = 1 and constants"""
        norm = QuadraticNorm(4.0, 1.0)
        Y = finsler_gradient_field(norm, ScalarField(self.grid, np.sin(self.theta)))
        np.testing.assert_allclose(Y.theta_component, np.cos(self.theta) / 4, atol=1e-6)
        Y = finsler_gradient_field(norm, ScalarField.constant(self.grid, 3.0))
        self.assertFalse(np.any(Y.theta_component) or np.any(Y.phi_component))

    def test_norm_compatibility(self):
        """Test F(grad_F u) = F*(du) for a Randers norm"""
        norm = randers_norm()
        u = ScalarField(self.grid, smooth(self.grid, np.random.default_rng(34)))
        Y = finsler_gradient_field(norm, u)
        du = exterior_d(u)
        primal = eval_norm(norm, TangentVector(Y.theta_component, Y.phi_component, self.theta, self.phi))
        dual = dual_norm(norm, CotangentVector(du.theta_component, du.phi_component, self.theta, self.phi))
        np.testing.assert_allclose(primal, dual, rtol=1e-9, atol=1e-12)

    def test_laplacian_examples(self):
        """Test Delta_F cos(theta) = -cos(theta)/2 for a = 2 and the flat eigenfunction"""
        norm = QuadraticNorm(2.0, 1.0)
        lap = finsler_laplacian(norm, MeasureDensity(norm), ScalarField(self.grid, np.cos(self.theta)))
        np.testing.assert_allclose(lap.values, -np.cos(self.theta) / 2, atol=1e-5)
        flat = QuadraticNorm(1.0, 1.0)
        u = np.cos(self.theta) + np.cos(self.phi)
        lap = finsler_laplacian(flat, MeasureDensity(flat), ScalarField(self.grid, u))
        np.testing.assert_allclose(lap.values, -u, atol=1e-5)
        lap = finsler_laplacian(flat, MeasureDensity(flat), ScalarField.constant(self.grid, 2.0))
        self.assertFalse(np.any(lap.values))

    def test_laplacian_convergence_order(self):
        """Test an observed order of at least 3.5 between N = 32 and N = 64"""
        norm = QuadraticNorm(2.0, 1.0)
        errors = []
        for n in (32, 64):
            grid = PeriodicGrid(n, n)
            theta, _ = grid.mesh()
            lap = finsler_laplacian(norm, MeasureDensity(norm), ScalarField(grid, np.cos(theta)))
            errors.append(np.max(np.abs(lap.values + np.cos(theta) / 2)))
        self.assertGreaterEqual(np.log2(errors[0] / errors[1]), 3.5)

    def test_dirichlet_energy(self):
        """Test E[sin(theta)] = pi^2 and E[c] = 0 for a = b = 1"""
        norm = QuadraticNorm(1.0, 1.0)
        density = MeasureDensity(norm)
        energy = dirichlet_energy(norm, density, ScalarField(self.grid, np.sin(self.theta)))
        self.assertAlmostEqual(energy / np.pi ** 2, 1.0, delta=1e-4)
        self.assertEqual(dirichlet_energy(norm, density, ScalarField.constant(self.grid, 1.0)), 0.0)

    def test_first_variation_is_minus_laplacian(self):
        """Test d/dt E[u + t v] = <-Delta_F u, v> for a Randers norm"""
        grid = PeriodicGrid(16, 16)
        rng = np.random.default_rng(35)
        norm = randers_norm()
        density = MeasureDensity(norm)
        sigma = density.on_grid(grid)
        u = smooth(grid, rng)
        v = rng.normal(size=grid.shape)
        t = 1e-5
        numeric = (
            dirichlet_energy(norm, density, ScalarField(grid, u + t * v))
            - dirichlet_energy(norm, density, ScalarField(grid, u - t * v))
        ) / (2 * t)
        lap = finsler_laplacian(norm, density, ScalarField(grid, u))
        exact = -np.sum(lap.values * v * sigma) * grid.cell_area
        self.assertAlmostEqual(exact / numeric, 1.0, delta=1e-6)


class DiamagneticTests(SimpleTestCase):
    """Test |D_A psi|_{F*} >= F*(d|psi|) up to the reported slack"""

    def test_pure_winding(self):
        """Test that the residual equals |d psi| when |psi| = 1"""
        grid = PeriodicGrid(32, 32)
        theta, _ = grid.mesh()
        residual, _ = diamagnetic_residual(QuadraticNorm(4.0, 1.0), ScalarField(grid, np.exp(2j * theta)), OneFormField.zeros(grid))
        self.assertGreater(residual.values.min(), 0.9)

    def test_real_positive_equality(self):
        """Test equality for a real positive psi with A = 0"""
        grid = PeriodicGrid(32, 32)
        theta, phi = grid.mesh()
        psi = ScalarField(grid, 2.0 + np.cos(theta) * np.sin(phi))
        residual, slack = diamagnetic_residual(profile_norm(), psi, OneFormField.zeros(grid))
        self.assertLess(np.max(np.abs(residual.values)), 1e-12)
        self.assertLess(slack, 1e-12)

    def test_slack_shrinks_under_refinement(self):
        """Test residual >= -slack and slack halving at N = 16, 32, 64"""
        norm = profile_norm()
        slacks = []
        for n in (16, 32, 64):
            grid = PeriodicGrid(n, n)
            theta, phi = grid.mesh()
            psi = ScalarField(grid, (1.5 + 0.5 * np.sin(theta) * np.cos(phi)) * np.exp(1j * (np.sin(phi) + np.cos(theta))))
            A = OneFormField(grid, 0.4 * np.cos(phi), -0.3 * np.sin(theta + phi))
            residual, slack = diamagnetic_residual(norm, psi, A)
            self.assertGreaterEqual(residual.values.min(), -slack - 1e-12)
            slacks.append(slack)
        self.assertLessEqual(slacks[1], slacks[0] / 2)
        self.assertLessEqual(slacks[2], slacks[1] / 2)

    def test_irreversible_norm_rejected(self):
        """Test that Randers norms with drift are refused"""
        grid = PeriodicGrid(8, 8)
        with self.assertRaises(DomainError):
            diamagnetic_residual(randers_norm(), ScalarField.constant(grid, 1.0), OneFormField.zeros(grid))


class SpectralGapTests(SimpleTestCase):
    """Test the first nonzero eigenvalue of -Delta_F"""

    def test_constant_coefficients(self):
        """Test gap = min(1/a, 1/b) for a = 2, b = 1"""
        norm = QuadraticNorm(2.0, 1.0)
        gap = laplacian_spectral_gap(norm, MeasureDensity(norm), PeriodicGrid(32, 32))
        self.assertAlmostEqual(gap, 0.5, delta=1e-3)
        self.assertAlmostEqual(poincare_constant(norm, MeasureDensity(norm), PeriodicGrid(32, 32)), np.sqrt(2.0), delta=2e-3)

    def test_profile_norm(self):
        """Test a positive gap and C = 1/sqrt(gap) for an x-dependent norm"""
        norm = profile_norm()
        density = MeasureDensity(norm)
        grid = PeriodicGrid(24, 24)
        gap = laplacian_spectral_gap(norm, density, grid)
        self.assertGreater(gap, 0.1)
        self.assertLess(gap, 2.0)
        self.assertAlmostEqual(poincare_constant(norm, density, grid), 1.0 / np.sqrt(gap), places=8)

    def test_randers_rejected(self):
        """Test that the nonlinear case is refused"""
        norm = randers_norm()
        with self.assertRaises(DomainError):
            laplacian_spectral_gap(norm, MeasureDensity(norm), PeriodicGrid(16, 16))
