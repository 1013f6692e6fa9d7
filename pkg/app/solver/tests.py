from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import scipy.optimize
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, tag

from energy.functional import GLParams, gl_energy
from fields.gauge import coulomb_residual
from fields.lattice import OneFormField, PeriodicGrid, ScalarField
from fields.operators import symbol
from geometry.measures import MeasureDensity
from geometry.norms import QuadraticNorm, RandersNorm
from geometry.profiles import CoefficientProfile
from main.enums import CoMetric, SectorKind, StepRule, Termination, TraceKind
from main.exceptions import ResolutionError
from vortices.detection import cycle_windings, detect_vortices

from .minimize import SolverConfig, minimize
from .sectors import Sector, init_winding, pinning_mask, vortex_profile
from .sweep import GridSchedule, epsilon_sweep, fit_log_slope, grid_for_epsilon


def flat_norm():
    return QuadraticNorm(1.0, 1.0)


def uniform_winding_energy(n, epsilon):
    """Discrete minimum in the unit theta-winding sector for a = b = 1, lam arbitrary."""
    s = symbol(n, 2 * np.pi / n)[1]
    f2 = 1.0 - epsilon ** 2 * s ** 2
    return 4 * np.pi ** 2 * (0.5 * f2 * s ** 2 + (1 - f2) ** 2 / (4 * epsilon ** 2))


def classical_psi_minimum(psi0, epsilon):
    """Flat GL minimum over psi with A = 0 by L-BFGS, independent of the package."""
    n = psi0.shape[0]
    h = 2 * np.pi / n
    index = np.arange(n)

    def along(f, axis):
        def shifted(k):
            return np.take(f, (index + k) % n, axis=axis)
        return (-shifted(2) + 8 * shifted(1) - 8 * shifted(-1) + shifted(-2)) / (12 * h)

    def energy_and_grad(x):
        psi = x[:n * n].reshape(n, n) + 1j * x[n * n:].reshape(n, n)
        d0, d1 = along(psi, 0), along(psi, 1)
        defect = 1 - np.abs(psi) ** 2
        energy = np.sum(0.5 * (np.abs(d0) ** 2 + np.abs(d1) ** 2) + defect ** 2 / (4 * epsilon ** 2)) * h * h
        g = (-(along(d0, 0) + along(d1, 1)) - defect * psi / epsilon ** 2) * h * h
        return energy, np.concatenate([g.real.ravel(), g.imag.ravel()])

    x0 = np.concatenate([psi0.real.ravel(), psi0.imag.ravel()])
    result = scipy.optimize.minimize(
        energy_and_grad, x0, jac=True, method='L-BFGS-B',
        options={'ftol': 1e-15, 'gtol': 1e-12, 'maxiter': 10000},
    )
    return result.fun


class SectorTests(SimpleTestCase):
    """Test initial configurations"""

    def setUp(self):
        self.grid = PeriodicGrid(64, 64)
        self.theta, self.phi = self.grid.mesh()

    def test_pure_windings(self):
        """Test e^{i theta} and e^{2 i phi} without noise"""
        psi, A = init_winding(self.grid, Sector.theta_winding(1))
        np.testing.assert_array_equal(psi.values, np.exp(1j * self.theta))
        self.assertFalse(np.any(A.theta_component))
        psi, _ = init_winding(self.grid, Sector.phi_winding(2))
        self.assertEqual(cycle_windings(psi), (0, 2))

    def test_seeded_noise_is_reproducible(self):
        """Test bit-identical fields for equal seeds"""
        sector = Sector.vortex_pair()
        first, _ = init_winding(self.grid, sector, noise=0.05, seed=7, epsilon=0.25)
        second, _ = init_winding(self.grid, sector, noise=0.05, seed=7, epsilon=0.25)
        other, _ = init_winding(self.grid, sector, noise=0.05, seed=8, epsilon=0.25)
        np.testing.assert_array_equal(first.values, second.values)
        self.assertFalse(np.array_equal(first.values, other.values))

    def test_vortex_pair_detected_at_cores(self):
        """Test that the pair is found as +1 at (pi/2, pi) and -1 at (3pi/2, pi)"""
        for n in (64, 66):
            grid = PeriodicGrid(n, n)
            psi, _ = init_winding(grid, Sector.vortex_pair(), epsilon=0.25)
            vortices = detect_vortices(psi)
            self.assertEqual(vortices.degrees, [1, -1])
            self.assertEqual(vortices.total_degree, 0)
            for vortex, (theta, phi, _) in zip(vortices, Sector.vortex_pair().cores):
                self.assertLessEqual(abs(vortex.theta - theta), grid.h_theta)
                self.assertLessEqual(abs(vortex.phi - phi), grid.h_phi)
            self.assertEqual(cycle_windings(psi), (0, 0))

    def test_invalid_sectors(self):
        """Test separation and winding validation"""
        with self.assertRaises(ValidationError):
            Sector.vortex_pair(0.0)
        with self.assertRaises(ValidationError):
            Sector.vortex_pair(2 * np.pi)
        with self.assertRaises(ValidationError):
            Sector(SectorKind.THETA_WINDING, winding=1.5)
        with self.assertRaises(ValidationError):
            init_winding(self.grid, Sector.theta_winding(), noise=-0.1)

    def test_vortex_profile(self):
        """Test a zero at the core and the Finsler distance scaling"""
        norm = QuadraticNorm(4.0, 1.0)
        core = (np.pi, np.pi)
        profile = vortex_profile(norm, self.grid, core, 0.25).values
        i, j = self.grid.nearest_node(*core)
        self.assertEqual(profile[i, j], 0.0)
        # one node along theta costs twice the Finsler distance of one node along phi
        self.assertAlmostEqual(profile[i + 1, j], np.tanh(2 * self.grid.h_theta / (np.sqrt(2) * 0.25)))
        self.assertAlmostEqual(profile[i, j + 1], np.tanh(self.grid.h_phi / (np.sqrt(2) * 0.25)))

    def test_pinning_mask(self):
        """Test two 3x3 patches around the cores"""
        mask = pinning_mask(self.grid, Sector.vortex_pair())
        self.assertEqual(mask.sum(), 18)
        self.assertTrue(mask[self.grid.nearest_node(np.pi / 2, np.pi)])
        self.assertFalse(pinning_mask(self.grid, Sector.theta_winding()).any())


class SolverConfigTests(SimpleTestCase):
    """Test solver configuration validation"""

    def test_invalid_values(self):
        """Test that nonpositive limits are rejected"""
        for kwargs in ({'max_iters': 0}, {'grad_tol': 0.0}, {'fixed_step': -1.0}, {'step_rule': 'newton'}):
            with self.assertRaises((ValidationError, ValueError)):
                SolverConfig(**kwargs)


class MinimizeTests(SimpleTestCase):
    """Test the descent loop"""

    def setUp(self):
        self.grid = PeriodicGrid(16, 16)
        self.theta, _ = self.grid.mesh()
        self.norm = flat_norm()
        self.density = MeasureDensity(self.norm)
        self.params = GLParams(1.0, 0.5)

    def test_ground_state_is_critical(self):
        """Test that psi = 1, A = 0 converges without a step"""
        psi0 = ScalarField.constant(self.grid, 1.0 + 0j)
        psi, A, trace = minimize(self.norm, self.density, self.params, SolverConfig(), psi0, OneFormField.zeros(self.grid))
        self.assertEqual(trace.termination, Termination.CONVERGED)
        self.assertEqual(trace.iterations, 0)
        self.assertEqual(trace.final.energy.total, 0.0)

    def test_uniform_winding_minimum(self):
        """Test convergence from 0.5 e^{i theta} to the discrete minimum of the winding sector"""
        psi0 = ScalarField(self.grid, 0.5 * np.exp(1j * self.theta))
        config = SolverConfig(max_iters=5000, grad_tol=1e-8)
        psi, A, trace = minimize(self.norm, self.density, self.params, config, psi0, OneFormField.zeros(self.grid))
        self.assertEqual(trace.termination, Termination.CONVERGED)
        self.assertLessEqual(trace.final.grad_norm, 1e-8)
        self.assertLessEqual(trace.final.energy.total, trace.rows[0].energy.total)
        self.assertAlmostEqual(trace.final.energy.total / uniform_winding_energy(16, 0.5), 1.0, delta=1e-8)
        self.assertEqual(cycle_windings(psi), (1, 0))

    def test_matches_classical_reference(self):
        """Test the final energy against an L-BFGS minimization of the flat functional"""
        psi0 = 0.5 * np.exp(1j * self.theta)
        _, _, trace = minimize(
            self.norm, self.density, self.params, SolverConfig(max_iters=5000, grad_tol=1e-9),
            ScalarField(self.grid, psi0), OneFormField.zeros(self.grid),
        )
        reference = classical_psi_minimum(psi0, 0.5)
        self.assertAlmostEqual(trace.final.energy.total / reference, 1.0, delta=1e-8)

    def test_descent_is_monotone_and_deterministic(self):
        """Test nonincreasing energy and bit-identical reruns for every step rule"""
        psi0, A0 = init_winding(self.grid, Sector.theta_winding(), noise=0.2, seed=3)
        A0 = OneFormField(self.grid, 0.1 * np.sin(self.theta), 0.2 * np.cos(self.theta))
        for rule in StepRule:
            config = SolverConfig(max_iters=60, step_rule=rule, gauge_reproject_every=0)
            _, _, first = minimize(self.norm, self.density, self.params, config, psi0, A0)
            _, _, second = minimize(self.norm, self.density, self.params, config, psi0, A0)
            totals = first.totals()
            self.assertLess(totals[-1], totals[0])
            self.assertTrue(np.all(np.diff(totals) <= 1e-12 * max(1.0, totals[0])))
            np.testing.assert_array_equal(totals, second.totals())

    def test_gauge_reprojection(self):
        """Test Coulomb residual and recorded gauge rows after reprojection"""
        norm = QuadraticNorm(CoefficientProfile.parse('cos_theta(1.5, 0.3)'), 1.0)
        density = MeasureDensity(norm)
        sigma = density.on_grid(self.grid)
        psi0, _ = init_winding(self.grid, Sector.theta_winding(), noise=0.1, seed=4)
        A0 = OneFormField(self.grid, 0.3 + np.sin(self.theta), np.zeros(self.grid.shape))
        config = SolverConfig(max_iters=20, gauge_reproject_every=10)
        _, A, trace = minimize(norm, density, self.params, config, psi0, A0)
        self.assertEqual(trace.termination, Termination.MAX_ITERS)
        self.assertEqual([row.iteration for row in trace.rows if row.kind is TraceKind.GAUGE], [10, 20])
        self.assertLessEqual(coulomb_residual(A, sigma), 1e-10)
        self.assertAlmostEqual(A.harmonic_part()[0], 0.3, places=12)

    def test_irreversible_norm_skips_reprojection(self):
        """Test that a Randers drift disables gauge reprojection with a warning"""
        norm = RandersNorm(1.0, 1.0, (0.2, 0.0))
        psi0, A0 = init_winding(self.grid, Sector.theta_winding(), noise=0.1, seed=5)
        with self.assertLogs('solver.minimize', level='WARNING'):
            _, _, trace = minimize(norm, MeasureDensity(norm), self.params, SolverConfig(max_iters=15, gauge_reproject_every=5), psi0, A0)
        self.assertFalse(any(row.kind is TraceKind.GAUGE for row in trace.rows))

    def test_pinned_nodes_frozen(self):
        """Test that pinned psi values do not move"""
        grid = PeriodicGrid(32, 32)
        sector = Sector.vortex_pair()
        psi0, A0 = init_winding(grid, sector, epsilon=0.4)
        pinned = pinning_mask(grid, sector)
        config = SolverConfig(max_iters=30, gauge_reproject_every=0)
        psi, _, _ = minimize(self.norm, self.density, GLParams(1.0, 0.4), config, psi0, A0, pinned=pinned)
        np.testing.assert_array_equal(psi.values[pinned], psi0.values[pinned])
        self.assertFalse(np.array_equal(psi.values[~pinned], psi0.values[~pinned]))

    def test_stall_on_rejected_fixed_step(self):
        """Test that an oversized fixed step stalls and keeps the initial fields"""
        psi0, A0 = init_winding(self.grid, Sector.theta_winding(), noise=0.2, seed=6)
        config = SolverConfig(step_rule=StepRule.FIXED, fixed_step=50.0, gauge_reproject_every=0)
        psi, _, trace = minimize(self.norm, self.density, self.params, config, psi0, A0)
        self.assertEqual(trace.termination, Termination.STALL)
        self.assertEqual(trace.iterations, 0)
        np.testing.assert_array_equal(psi.values, psi0.values)

    def test_checkpoints_written(self):
        """Test field dumps every K iterations"""
        psi0, A0 = init_winding(self.grid, Sector.theta_winding(), noise=0.2, seed=7)
        config = SolverConfig(max_iters=10, checkpoint_every=5)
        with TemporaryDirectory() as directory:
            minimize(self.norm, self.density, self.params, config, psi0, A0, checkpoint_dir=directory)
            names = sorted(path.name for path in Path(directory).iterdir())
        self.assertEqual(names, ['A_000005.fgl', 'A_000010.fgl', 'psi_000005.fgl', 'psi_000010.fgl'])


class SweepTests(SimpleTestCase):
    """Test grid schedules and the eps sweep"""

    def test_grid_for_epsilon(self):
        """Test the coarsest even grid with h <= eps/4"""
        self.assertEqual([grid_for_epsilon(eps).n_theta for eps in (0.25, 0.125, 0.0625)], [102, 202, 404])

    def test_eps_list_validation(self):
        """Test empty and non-decreasing lists"""
        norm = flat_norm()
        for eps_list in ([], [0.1, 0.2], [0.2, 0.2]):
            with self.assertRaises(ValidationError):
                epsilon_sweep(norm, MeasureDensity(norm), 1.0, Sector.vortex_pair(), eps_list, GridSchedule(), SolverConfig())

    def test_resolution_violation(self):
        """Test that coarse explicit grids are reported per eps"""
        schedule = GridSchedule(n_list=(64, 64))
        with self.assertRaises(ResolutionError) as caught:
            schedule.grids([0.5, 0.125])
        self.assertEqual(len(caught.exception.violations), 1)
        self.assertIn('eps=0.125', caught.exception.violations[0])

    def test_theta_winding_sweep(self):
        """Test that each point reaches the uniform winding minimum without vortices"""
        norm = flat_norm()
        points = epsilon_sweep(
            norm, MeasureDensity(norm), 1.0, Sector.theta_winding(), [0.5, 0.35, 0.25],
            GridSchedule(), SolverConfig(grad_tol=1e-8), threads=2,
        )
        self.assertEqual([point.epsilon for point in points], [0.5, 0.35, 0.25])
        for point in points:
            self.assertEqual(point.vortex_count, 0)
            self.assertAlmostEqual(point.energy.total / uniform_winding_energy(point.n, point.epsilon), 1.0, delta=1e-8)

    @tag('slow')
    def test_vortex_pair_log_scaling(self):
        """Test the |log eps| slope against pi sum |d| = 2 pi with quantized degrees"""
        norm = flat_norm()
        points = epsilon_sweep(
            norm, MeasureDensity(norm), 1.0, Sector.vortex_pair(), [0.25, 0.125, 0.0625],
            GridSchedule(), SolverConfig(grad_tol=1e-6), threads=3,
        )
        for point in points:
            self.assertEqual(point.degrees, (1, -1))
        slope, _ = fit_log_slope(points)
        self.assertAlmostEqual(slope / (2 * np.pi), 1.0, delta=0.15)

    @tag('slow')
    def test_theta_winding_slope_small(self):
        """Test that the winding energy barely depends on eps"""
        norm = flat_norm()
        points = epsilon_sweep(
            norm, MeasureDensity(norm), 1.0, Sector.theta_winding(), [0.25, 0.125, 0.0625],
            GridSchedule(), SolverConfig(), threads=3,
        )
        slope, _ = fit_log_slope(points)
        self.assertLess(abs(slope), 0.1 * 2 * np.pi)
