from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from fields.gauge import gauge_transform
from fields.lattice import GaugeFunction, OneFormField, PeriodicGrid, ScalarField
from geometry.norms import QuadraticNorm, RandersNorm
from geometry.profiles import CoefficientProfile
from main.exceptions import DomainError
from solver.sectors import Sector, init_winding

from .currents import PolylineCurrent, finsler_length, read_polyline_csv, write_polyline_csv
from .detection import (
    Vortex,
    VortexSet,
    _periodic_labels,
    core_mask,
    cycle_windings,
    detect_vortices,
    gamma_limit_energy,
    jacobian_field,
    plaquette_degrees,
    vortex_charge,
)


class VortexDetectionTests(SimpleTestCase):
    """Test plaquette degrees and clustering"""

    def setUp(self):
        self.grid = PeriodicGrid(32, 32)
        self.theta, self.phi = self.grid.mesh()

    def test_no_zeros(self):
        """Test that constants and pure windings have no vortices"""
        self.assertEqual(len(detect_vortices(ScalarField.constant(self.grid, 1.0))), 0)
        self.assertEqual(len(detect_vortices(ScalarField(self.grid, np.exp(3j * self.theta)))), 0)

    def test_four_zeros_between_nodes(self):
        """Test sin(theta - t0) + i sin(phi - p0): +1, -1, -1, +1 off the grid"""
        t0, p0 = 0.3, 0.2
        psi = ScalarField(self.grid, np.sin(self.theta - t0) + 1j * np.sin(self.phi - p0))
        vortices = detect_vortices(psi)
        expected = {
            (t0, p0): 1,
            (t0, p0 + np.pi): -1,
            (t0 + np.pi, p0): -1,
            (t0 + np.pi, p0 + np.pi): 1,
        }
        self.assertEqual(len(vortices), 4)
        self.assertEqual(vortices.total_degree, 0)
        for vortex in vortices:
            key = min(expected, key=lambda p: np.hypot(p[0] - vortex.theta, p[1] - vortex.phi))
            self.assertLessEqual(np.hypot(key[0] - vortex.theta, key[1] - vortex.phi), self.grid.h_max)
            self.assertEqual(vortex.degree, expected[key])

    def test_zeros_on_nodes(self):
        """Test that zero nodes are resolved by bilinear subdivision"""
        psi = ScalarField(self.grid, np.sin(self.theta) + 1j * np.sin(self.phi))
        vortices = detect_vortices(psi)
        found = {(round(v.theta, 12), round(v.phi, 12)): v.degree for v in vortices}
        self.assertEqual(found, {
            (0.0, 0.0): 1,
            (0.0, round(np.pi, 12)): -1,
            (round(np.pi, 12), 0.0): -1,
            (round(np.pi, 12), round(np.pi, 12)): 1,
        })

    def test_plaquette_degrees_sum_to_zero(self):
        """Test exact integer degrees summing to zero for a random field"""
        rng = np.random.default_rng(40)
        values = rng.normal(size=self.grid.shape) + 1j * rng.normal(size=self.grid.shape)
        degrees = plaquette_degrees(values)
        self.assertEqual(degrees.dtype.kind, 'i')
        self.assertEqual(degrees.sum(), 0)
        self.assertGreater(np.abs(degrees).sum(), 0)

    def test_clusters_wrap_around(self):
        """Test that clusters touching across a seam or corner are merged"""
        mask = np.zeros((8, 8), dtype=bool)
        mask[0, 3] = mask[-1, 3] = True
        mask[0, 0] = mask[-1, -1] = True
        labels, count = _periodic_labels(mask)
        self.assertEqual(count, 2)
        self.assertEqual(labels[0, 3], labels[-1, 3])
        self.assertEqual(labels[0, 0], labels[-1, -1])


class CycleWindingTests(SimpleTestCase):
    """Test windings along the coordinate cycles"""

    def setUp(self):
        self.grid = PeriodicGrid(32, 32)
        self.theta, self.phi = self.grid.mesh()

    def test_windings(self):
        """Test e^{i theta} and e^{i(2 theta - 3 phi)}"""
        self.assertEqual(cycle_windings(ScalarField(self.grid, np.exp(1j * self.theta))), (1, 0))
        self.assertEqual(cycle_windings(ScalarField(self.grid, np.exp(1j * (2 * self.theta - 3 * self.phi)))), (2, -3))

    def test_gauge_invariance(self):
        """Test that a periodic gauge transformation keeps the windings"""
        psi = ScalarField(self.grid, np.exp(1j * (2 * self.theta - self.phi)))
        chi = GaugeFunction(self.grid, 1.5 * np.sin(self.theta) * np.cos(self.phi))
        transformed, _ = gauge_transform(psi, OneFormField.zeros(self.grid), chi)
        self.assertEqual(cycle_windings(transformed), (2, -1))

    def test_zero_on_reference_cycle(self):
        """Test that cycles through zeros are shifted, and that all-zero fields fail"""
        psi = ScalarField(self.grid, np.sin(self.theta) + 1j * np.sin(self.phi))
        self.assertEqual(cycle_windings(psi), (0, 0))
        with self.assertRaises(DomainError):
            cycle_windings(ScalarField.constant(self.grid, 0.0))


class JacobianTests(SimpleTestCase):
    """Test the vorticity field"""

    def test_pure_winding_has_no_vorticity(self):
        """Test J = 0 for e^{i theta}, A = 0"""
        grid = PeriodicGrid(32, 32)
        theta, _ = grid.mesh()
        J = jacobian_field(ScalarField(grid, np.exp(1j * theta)), OneFormField.zeros(grid))
        self.assertLess(np.max(np.abs(J.values)), 1e-12)

    def test_constant_order_parameter(self):
        """Test J = -curl(A)/2 for psi = 1"""
        grid = PeriodicGrid(64, 64)
        theta, phi = grid.mesh()
        A = OneFormField(grid, np.sin(phi), np.cos(theta))
        J = jacobian_field(ScalarField.constant(grid, 1.0 + 0j), A)
        np.testing.assert_allclose(J.values, 0.5 * (np.sin(theta) + np.cos(phi)), atol=1e-5)

    def test_vortex_charges(self):
        """Test +-pi per vortex of the pair at h = eps/8"""
        epsilon = 0.125
        grid = PeriodicGrid(404, 404)
        sector = Sector.vortex_pair()
        psi, A = init_winding(grid, sector, epsilon=epsilon)
        J = jacobian_field(psi, A)
        for theta, phi, degree in sector.cores:
            charge = vortex_charge(J, (theta, phi), 0.8)
            self.assertAlmostEqual(charge / (np.pi * degree), 1.0, delta=0.05)
        self.assertLess(abs(np.sum(J.values) * grid.cell_area), 1e-8)

    def test_core_mask(self):
        """Test default radius of three grid steps"""
        grid = PeriodicGrid(32, 32)
        mask = core_mask(grid, VortexSet((Vortex(0.0, 0.0, 1),)))
        self.assertTrue(mask[0, 0] and mask[3, 0] and mask[-2, 0])
        self.assertFalse(mask[4, 0] or mask[16, 16])


class GammaLimitTests(SimpleTestCase):
    """Test pi sum |d|"""

    def test_examples(self):
        """Test empty, dipole and doubly charged sets"""
        norm = QuadraticNorm(2.0, 1.0)
        self.assertEqual(gamma_limit_energy(norm, VortexSet()), 0.0)
        dipole = VortexSet((Vortex(1.0, 1.0, 1), Vortex(2.0, 1.0, -1)))
        self.assertAlmostEqual(gamma_limit_energy(norm, dipole), 2 * np.pi)
        self.assertAlmostEqual(gamma_limit_energy(norm, VortexSet((Vortex(1.0, 1.0, 2),))), 2 * np.pi)
        union = VortexSet(dipole.vortices + (Vortex(3.0, 3.0, -3),))
        self.assertAlmostEqual(gamma_limit_energy(norm, union), gamma_limit_energy(norm, dipole) + 3 * np.pi)


class FinslerLengthTests(SimpleTestCase):
    """Test polyline validation and Finsler lengths"""

    def test_examples(self):
        """Test straight segments and a theta-circle"""
        segment = PolylineCurrent([(0.0, 0.0), (1.0, 0.0)])
        self.assertAlmostEqual(finsler_length(QuadraticNorm(4.0, 1.0), segment), 2.0, places=14)
        circle = PolylineCurrent([(k * np.pi / 2, 0.0) for k in range(5)])
        self.assertTrue(circle.closed)
        self.assertAlmostEqual(finsler_length(QuadraticNorm(1.0, 1.0), circle), 2 * np.pi, places=13)

    def test_randers_orientation(self):
        """Test 1.5 forward and 0.5 backward for beta = (0.5, 0)"""
        norm = RandersNorm(1.0, 1.0, (0.5, 0.0))
        segment = PolylineCurrent([(0.0, 0.0), (1.0, 0.0)])
        self.assertAlmostEqual(finsler_length(norm, segment), 1.5, places=14)
        self.assertAlmostEqual(finsler_length(norm, segment.reversed()), 0.5, places=14)
        backwards = PolylineCurrent([(0.0, 0.0), (1.0, 0.0)], multiplicity=-2)
        self.assertAlmostEqual(finsler_length(norm, backwards), 1.0, places=14)

    def test_vertex_insertion_and_refinement(self):
        """Test invariance under splitting straight segments"""
        norm = QuadraticNorm(CoefficientProfile.parse('cos_theta(2.0, 0.3)'), CoefficientProfile.parse('sin_product(1.0, 0.2)'))
        coarse = np.array([(0.1, 0.2), (0.5, 0.4), (0.8, 0.1), (1.2, 0.3)])
        fine = [coarse[0]]
        for start, end in zip(coarse[:-1], coarse[1:]):
            fine.extend(start + t * (end - start) for t in (0.25, 0.5, 0.75, 1.0))
        self.assertAlmostEqual(
            finsler_length(norm, PolylineCurrent(coarse)),
            finsler_length(norm, PolylineCurrent(np.array(fine))),
            delta=1e-10,
        )

    def test_triangle_inequality(self):
        """Test that a detour is never shorter for a constant Randers norm"""
        norm = RandersNorm(2.0, 1.0, (0.3, -0.4))
        rng = np.random.default_rng(41)
        for _ in range(50):
            p, q, r = rng.uniform(0, 2, (3, 2))
            direct = finsler_length(norm, PolylineCurrent([p, r]))
            detour = finsler_length(norm, PolylineCurrent([p, q, r]))
            self.assertGreaterEqual(detour, direct - 1e-12)

    def test_validation(self):
        """Test vertex count, multiplicity and closed flag checks"""
        with self.assertRaises(ValidationError):
            PolylineCurrent([(0.0, 0.0)])
        with self.assertRaises(ValidationError):
            PolylineCurrent([(0.0, 0.0), (0.0, 0.0)])
        with self.assertRaises(ValidationError):
            PolylineCurrent([(0.0, 0.0), (1.0, 0.0)], multiplicity=0)
        with self.assertRaises(ValidationError):
            PolylineCurrent([(0.0, 0.0), (1.0, 0.0)], closed=True)
        curve = PolylineCurrent([(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (2.0, 1.0)])
        self.assertEqual(len(curve.vertices), 3)
        self.assertFalse(curve.closed)

    def test_csv_files(self):
        """Test that a written polyline reads back with its header"""
        curve = PolylineCurrent([(0.0, 0.0), (1.0, 0.5), (2.0, 0.25)], multiplicity=-3)
        with TemporaryDirectory() as directory:
            path = write_polyline_csv(Path(directory) / 'curve.csv', curve)
            restored = read_polyline_csv(path)
            path.write_text("theta,phi\n0.0,0.0\n")
            with self.assertRaises(ValidationError):
                read_polyline_csv(path)
        np.testing.assert_array_equal(restored.vertices, curve.vertices)
        self.assertEqual(restored.multiplicity, -3)
