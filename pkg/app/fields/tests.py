from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings

from main.exceptions import GridMismatchError, IterativeFailure, NonFiniteFieldError

from .dumps import DumpFormatError, dump_bytes, load_bytes, read_field, write_field, write_field_csv
from .gauge import coulomb_project, coulomb_residual, fix_gauge, gauge_transform
from .lattice import GaugeFunction, OneFormField, PeriodicGrid, ScalarField
from .operators import covariant_derivative, curl, divergence, exterior_d


def smooth_field(grid, rng, modes=3, complex_values=False):
    """Random trigonometric polynomial with a few low modes."""
    theta, phi = grid.mesh()
    values = np.zeros(grid.shape, dtype=complex if complex_values else float)
    for k in range(modes + 1):
        for l in range(-modes, modes + 1):
            c = rng.normal(size=4) / (1 + k * k + l * l)
            wave = c[0] * np.cos(k * theta + l * phi) + c[1] * np.sin(k * theta + l * phi)
            if complex_values:
                wave = wave + 1j * (c[2] * np.cos(k * theta + l * phi) + c[3] * np.sin(k * theta + l * phi))
            values = values + wave
    return values


def smooth_density(grid):
    theta, phi = grid.mesh()
    return 1.5 + 0.4 * np.cos(theta) + 0.3 * np.sin(theta) * np.sin(phi)


class PeriodicGridTests(SimpleTestCase):
    """Test grid validation and geometry"""

    def test_invalid_sizes_rejected(self):
        """Test that odd or small node counts are rejected"""
        for n_theta, n_phi in ((6, 8), (9, 8), (8, 11)):
            with self.assertRaises(ValidationError):
                PeriodicGrid(n_theta, n_phi)

    def test_spacing_and_mesh(self):
        """Test spacings and the theta-major node layout"""
        grid = PeriodicGrid(16, 8)
        self.assertAlmostEqual(grid.h_theta, np.pi / 8)
        self.assertAlmostEqual(grid.h_phi, np.pi / 4)
        theta, phi = grid.mesh()
        self.assertEqual(theta.shape, (16, 8))
        self.assertAlmostEqual(theta[1, 0], grid.h_theta)
        self.assertAlmostEqual(phi[0, 1], grid.h_phi)

    def test_fields_reject_bad_values(self):
        """Test shape and finiteness checks on fields"""
        grid = PeriodicGrid(8, 8)
        with self.assertRaises(GridMismatchError):
            ScalarField(grid, np.zeros((8, 10)))
        values = np.zeros(grid.shape)
        values[2, 3] = np.nan
        with self.assertRaises(NonFiniteFieldError):
            ScalarField(grid, values)

    def test_mean_zero_gauge_function(self):
        """Test the mean-zero flag"""
        grid = PeriodicGrid(8, 8)
        chi = GaugeFunction.centered(grid, np.arange(64.0).reshape(8, 8))
        self.assertLessEqual(abs(chi.values.mean()), 1e-12)
        with self.assertRaises(ValidationError):
            GaugeFunction(grid, np.ones(grid.shape), mean_zero=True)


class ExteriorDerivativeTests(SimpleTestCase):
    """Test the fourth-order exterior derivative"""

    def test_sine(self):
        """Test d sin(theta) = cos(theta) dtheta to O(h^4)"""
        grid = PeriodicGrid(64, 64)
        theta, _ = grid.mesh()
        du = exterior_d(ScalarField(grid, np.sin(theta)))
        self.assertLess(np.max(np.abs(du.theta_component - np.cos(theta))), 1e-5)
        self.assertLess(np.max(np.abs(du.phi_component)), 1e-14)

    def test_constants_annihilated(self):
        """Test that constants have exactly zero derivative"""
        du = exterior_d(ScalarField.constant(PeriodicGrid(16, 16), 2.5))
        self.assertFalse(np.any(du.theta_component))
        self.assertFalse(np.any(du.phi_component))

    def test_fourth_order_convergence(self):
        """Test the observed order on e^{i theta} between N = 64 and N = 128"""
        errors = []
        for n in (64, 128):
            grid = PeriodicGrid(n, n)
            theta, _ = grid.mesh()
            du = exterior_d(ScalarField(grid, np.exp(1j * theta)))
            errors.append(np.max(np.abs(du.theta_component - 1j * np.exp(1j * theta))))
        self.assertGreaterEqual(np.log2(errors[0] / errors[1]), 3.9)


class CovariantDerivativeTests(SimpleTestCase):
    """Test D_A psi = (d - iA) psi"""

    def setUp(self):
        self.grid = PeriodicGrid(128, 128)
        self.theta, self.phi = self.grid.mesh()

    def test_gauge_field_cancels_phase(self):
        """Test that A = dtheta cancels psi = e^{i theta}"""
        psi = ScalarField(self.grid, np.exp(1j * self.theta))
        D = covariant_derivative(psi, OneFormField.constant(self.grid, 1.0, 0.0))
        self.assertLess(np.max(np.abs(D.theta_component)), 1e-6)
        self.assertLess(np.max(np.abs(D.phi_component)), 1e-14)

    def test_constant_field(self):
        """Test D_A 1 = -iA exactly"""
        D = covariant_derivative(ScalarField.constant(self.grid, 1.0 + 0j), OneFormField.constant(self.grid, 0.7, 0.0))
        np.testing.assert_array_equal(D.theta_component, -0.7j * np.ones(self.grid.shape))
        np.testing.assert_array_equal(D.phi_component, np.zeros(self.grid.shape))

    def test_winding_has_pointwise_norm_m(self):
        """Test |D e^{3 i theta}| = 3 pointwise"""
        psi = ScalarField(self.grid, np.exp(3j * self.theta))
        D = covariant_derivative(psi, OneFormField.zeros(self.grid))
        np.testing.assert_allclose(np.abs(D.theta_component), 3.0, rtol=1e-4)

    def test_grid_mismatch(self):
        """Test that fields on different grids are refused"""
        with self.assertRaises(GridMismatchError):
            covariant_derivative(ScalarField.constant(self.grid, 1.0), OneFormField.zeros(PeriodicGrid(8, 8)))


class CurlAndDivergenceTests(SimpleTestCase):
    """Test curl, d o d = 0 and discrete integration by parts"""

    def setUp(self):
        self.grid = PeriodicGrid(64, 64)
        self.theta, self.phi = self.grid.mesh()
        self.rng = np.random.default_rng(20)

    def test_curl_of_gradient_vanishes(self):
        """Test d o d = 0 to rounding for the commuting stencil pair"""
        chi = GaugeFunction(self.grid, np.sin(self.theta) * np.cos(self.phi))
        self.assertLess(np.max(np.abs(curl(exterior_d(chi)).values)), 1e-10)
        u = ScalarField(self.grid, smooth_field(self.grid, self.rng))
        self.assertLess(np.max(np.abs(curl(exterior_d(u)).values)), 1e-10)

    def test_curl_examples(self):
        """Test analytic curls of smooth periodic forms"""
        A = OneFormField(self.grid, np.zeros(self.grid.shape), np.sin(self.theta))
        np.testing.assert_allclose(curl(A).values, np.cos(self.theta), atol=1e-5)
        A = OneFormField(self.grid, -np.sin(self.phi), np.sin(self.theta))
        np.testing.assert_allclose(curl(A).values, np.cos(self.theta) + np.cos(self.phi), atol=1e-5)

    def test_integration_by_parts(self):
        """Test sum du(X) sigma = -sum u div_sigma(X) sigma for constant and smooth sigma"""
        u = smooth_field(self.grid, self.rng)
        X = OneFormField(self.grid, smooth_field(self.grid, self.rng), smooth_field(self.grid, self.rng))
        du = exterior_d(ScalarField(self.grid, u))
        for sigma in (np.full(self.grid.shape, np.sqrt(2.0)), smooth_density(self.grid)):
            left = np.sum((du.theta_component * X.theta_component + du.phi_component * X.phi_component) * sigma)
            right = -np.sum(u * divergence(X, sigma).values * sigma)
            self.assertAlmostEqual(left / right, 1.0, delta=1e-10)


class GaugeTransformTests(SimpleTestCase):
    """Test (psi, A) -> (e^{i chi} psi, A + d chi)"""

    def setUp(self):
        self.grid = PeriodicGrid(32, 32)
        rng = np.random.default_rng(21)
        self.psi = ScalarField(self.grid, smooth_field(self.grid, rng, complex_values=True))
        self.A = OneFormField(self.grid, smooth_field(self.grid, rng), smooth_field(self.grid, rng))

    def test_zero_gauge_is_identity(self):
        """Test that chi = 0 changes nothing"""
        psi, A = gauge_transform(self.psi, self.A, GaugeFunction(self.grid, np.zeros(self.grid.shape)))
        np.testing.assert_array_equal(psi.values, self.psi.values)
        np.testing.assert_array_equal(A.theta_component, self.A.theta_component)

    def test_constant_gauge(self):
        """Test that a constant chi only rotates the phase"""
        one = ScalarField.constant(self.grid, 1.0 + 0j)
        psi, A = gauge_transform(one, OneFormField.zeros(self.grid), GaugeFunction(self.grid, np.full(self.grid.shape, 0.3)))
        np.testing.assert_allclose(psi.values, np.exp(0.3j))
        self.assertFalse(np.any(A.theta_component) or np.any(A.phi_component))


class CoulombProjectionTests(SimpleTestCase):
    """Test the Coulomb projection and its harmonic part"""

    def setUp(self):
        self.grid = PeriodicGrid(32, 32)
        self.theta, self.phi = self.grid.mesh()
        self.rng = np.random.default_rng(22)

    def random_form(self):
        return OneFormField(self.grid, smooth_field(self.grid, self.rng), smooth_field(self.grid, self.rng))

    def test_pure_gauge_removed(self):
        """Test that A = d sin(theta) projects to zero with chi = sin(theta)"""
        chi0 = GaugeFunction(self.grid, np.sin(self.theta))
        A_c, chi, harmonic = coulomb_project(exterior_d(chi0))
        self.assertLess(np.max(np.abs(A_c.theta_component)), 1e-10)
        self.assertLess(np.max(np.abs(chi.values - np.sin(self.theta))), 1e-10)
        self.assertTrue(chi.mean_zero)

    def test_harmonic_forms_fixed(self):
        """Test that constant forms are left alone"""
        A = OneFormField.constant(self.grid, 0.4, -1.2)
        A_c, chi, harmonic = coulomb_project(A)
        np.testing.assert_allclose(A_c.theta_component, 0.4, atol=1e-14)
        np.testing.assert_allclose(A_c.phi_component, -1.2, atol=1e-14)
        self.assertLess(np.max(np.abs(chi.values)), 1e-14)
        self.assertAlmostEqual(harmonic[0], 0.4)
        self.assertAlmostEqual(harmonic[1], -1.2)

    def test_constant_density_projection(self):
        """Test zero divergence, idempotence and preserved means with sigma = sqrt 2"""
        sigma = np.full(self.grid.shape, np.sqrt(2.0))
        A = self.random_form()
        A_c, _, harmonic = coulomb_project(A, sigma)
        self.assertLessEqual(coulomb_residual(A_c, sigma), 1e-10)
        twice = coulomb_project(A_c, sigma).coulomb
        self.assertLess(np.max(np.abs(twice.theta_component - A_c.theta_component)), 1e-10)
        self.assertLess(np.max(np.abs(twice.phi_component - A_c.phi_component)), 1e-10)
        np.testing.assert_allclose(A_c.harmonic_part(), harmonic, atol=1e-13)

    def test_weighted_projection(self):
        """Test the CG path for a nonconstant density"""
        sigma = smooth_density(self.grid)
        A = self.random_form()
        A_c, chi, harmonic = coulomb_project(A, sigma)
        self.assertLessEqual(coulomb_residual(A_c, sigma), 1e-8)
        self.assertGreater(coulomb_residual(A, sigma), 1e-3)
        np.testing.assert_allclose(A_c.harmonic_part(), harmonic, atol=1e-13)
        twice = coulomb_project(A_c, sigma)
        self.assertLess(np.max(np.abs(twice.gauge.values)), 1e-8)

    def test_gauge_then_project_recovers_representative(self):
        """Test that gauge-equivalent pairs share their Coulomb representative"""
        psi = ScalarField(self.grid, smooth_field(self.grid, self.rng, complex_values=True))
        A = self.random_form()
        chi = GaugeFunction(self.grid, smooth_field(self.grid, self.rng))
        for sigma in (None, smooth_density(self.grid)):
            psi1, A1, _ = fix_gauge(psi, A, sigma)
            psi2, A2, _ = fix_gauge(*gauge_transform(psi, A, chi), sigma)
            self.assertLess(np.max(np.abs(A2.theta_component - A1.theta_component)), 1e-8)
            self.assertLess(np.max(np.abs(A2.phi_component - A1.phi_component)), 1e-8)
            phase = psi2.values / psi1.values
            self.assertLess(np.max(np.abs(phase - phase.flat[0])), 1e-8)

    def test_cg_failure_reported(self):
        """Test that a stalled weighted solve raises with its residual"""
        budget = {**settings.FGL, 'CG_MAXITER': 1}
        with override_settings(FGL=budget):
            with self.assertRaises(IterativeFailure) as caught:
                coulomb_project(self.random_form(), smooth_density(self.grid))
        self.assertGreater(caught.exception.residual, 0.0)


class FieldDumpTests(SimpleTestCase):
    """Test the FGL1 binary dump and CSV export"""

    def setUp(self):
        self.grid = PeriodicGrid(8, 10)
        rng = np.random.default_rng(23)
        self.psi = ScalarField(self.grid, rng.normal(size=self.grid.shape) + 1j * rng.normal(size=self.grid.shape))
        self.A = OneFormField(self.grid, rng.normal(size=self.grid.shape), rng.normal(size=self.grid.shape))

    def test_header_layout(self):
        """Test magic, little-endian sizes, kind tag and payload length"""
        data = dump_bytes(self.psi)
        self.assertEqual(data[:4], b"FGL1")
        self.assertEqual(data[4:8], (8).to_bytes(4, 'little'))
        self.assertEqual(data[8:12], (10).to_bytes(4, 'little'))
        self.assertEqual(data[12:16], (1).to_bytes(4, 'little'))
        self.assertEqual(len(data), 16 + 8 * 10 * 2 * 8)
        # first node stores (re, im)
        first = np.frombuffer(data, dtype='<f8', count=2, offset=16)
        self.assertEqual(first[0], self.psi.values[0, 0].real)
        self.assertEqual(first[1], self.psi.values[0, 0].imag)

    def test_files_restore_fields(self):
        """Test that dumps written to disk restore the exact values"""
        with TemporaryDirectory() as directory:
            psi = read_field(write_field(Path(directory) / 'psi.fgl', self.psi))
            A = read_field(write_field(Path(directory) / 'A.fgl', self.A))
        self.assertEqual(psi.grid, self.grid)
        np.testing.assert_array_equal(psi.values, self.psi.values)
        np.testing.assert_array_equal(A.phi_component, self.A.phi_component)

    def test_bad_dumps_rejected(self):
        """Test wrong magic and truncated payloads"""
        with self.assertRaises(DumpFormatError):
            load_bytes(b"XXXX" + dump_bytes(self.A)[4:])
        with self.assertRaises(DumpFormatError):
            load_bytes(dump_bytes(self.A)[:-8])

    def test_csv_export(self):
        """Test one row per node with theta, phi and components"""
        with TemporaryDirectory() as directory:
            path = write_field_csv(Path(directory) / 'A.csv', self.A)
            lines = path.read_text().splitlines()
        self.assertEqual(lines[0], 'theta,phi,a_theta,a_phi')
        self.assertEqual(len(lines), 1 + 80)
