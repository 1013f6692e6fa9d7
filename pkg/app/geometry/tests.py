from unittest.mock import patch

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings

from fields.lattice import PeriodicGrid, ScalarField
from main.enums import MeasureKind, ProfileKind
from main.exceptions import DomainError, GridMismatchError, IterativeFailure

from .measures import (
    MeasureDensity,
    bh_density,
    dual_ball_volume_by_pushforward,
    ht_density,
    integrate,
    unit_ball_volume,
)
from .norms import (
    CotangentVector,
    QuadraticNorm,
    RandersNorm,
    TangentVector,
    build_norm,
    dual_norm,
    dual_norm_by_support,
    eval_norm,
    fenchel_gap,
    fundamental_tensor,
    legendre_forward,
    legendre_inverse,
)
from .profiles import CoefficientProfile


def sample_norms():
    """One norm of every supported flavour, constant and x-dependent."""
    return {
        'quadratic': QuadraticNorm(4.0, 1.0),
        'quadratic_profile': QuadraticNorm(CoefficientProfile.parse('cos_theta(2.0, 0.4)'), CoefficientProfile.parse('sin_product(1.0, 0.3)')),
        'randers': RandersNorm(1.0, 1.0, (0.5, 0.0)),
        'randers_profile': RandersNorm(CoefficientProfile.parse('cos_phi(2.0, 0.25)'), 1.5, (0.3, -0.4)),
    }


def random_tangents(rng, count, scale=3.0):
    theta, phi = rng.uniform(0, 2 * np.pi, (2, count))
    y = rng.normal(scale=scale, size=(2, count))
    return TangentVector(y[0], y[1], theta, phi)


class CoefficientProfileTests(SimpleTestCase):
    """Test parsing and evaluation of coefficient profiles"""

    def test_parse_bare_float(self):
        """Test that a bare float becomes a constant profile"""
        profile = CoefficientProfile.parse('2.5')
        self.assertEqual(profile.kind, ProfileKind.CONSTANT)
        self.assertTrue(profile.is_constant)
        self.assertEqual(float(profile(1.0, 2.0)), 2.5)

    def test_parse_named_profile(self):
        """Test that named profiles evaluate their closed form"""
        profile = CoefficientProfile.parse('cos_theta(2.0, 0.5)')
        self.assertEqual(profile.kind, ProfileKind.COS_THETA)
        self.assertAlmostEqual(float(profile(0.0, 1.3)), 3.0)
        self.assertAlmostEqual(float(profile(np.pi, 0.2)), 1.0)
        self.assertAlmostEqual(profile.minimum, 1.0)

    def test_text_round_trip(self):
        """Test that to_text parses back to the same profile"""
        for text in ('0.1', 'cos_phi(1.25, -0.3)', 'sin_product(3.0, 0.999)'):
            profile = CoefficientProfile.parse(text)
            self.assertEqual(CoefficientProfile.parse(profile.to_text()), profile)

    def test_invalid_profiles_rejected(self):
        """Test that nonpositive values, large amplitudes and junk are rejected"""
        for text in ('0', '-1.0', 'cos_theta(1.0, 1.0)', 'wobble(1.0, 0.1)', 'cos_theta(1.0)', 'abc'):
            with self.assertRaises(ValidationError, msg=text):
                CoefficientProfile.parse(text)


class NormConstructionTests(SimpleTestCase):
    """Test construction-time validation of norms"""

    def test_nonpositive_coefficient_rejected(self):
        """Test that b = 0 is rejected at construction"""
        with self.assertRaises(ValidationError):
            QuadraticNorm(1.0, 0.0)

    def test_randers_drift_must_be_small(self):
        """Test that ||beta|| >= 1 is rejected"""
        with self.assertRaises(ValidationError):
            RandersNorm(1.0, 1.0, (1.0, 0.0))
        with self.assertRaises(ValidationError):
            RandersNorm(CoefficientProfile.parse('cos_theta(1.0, 0.5)'), 1.0, (0.8, 0.0))

    def test_build_norm_from_config_values(self):
        """Test the factory used by the experiment config"""
        norm = build_norm('randers', '1.0', 'cos_phi(2.0, 0.1)', (0.2, 0.1))
        self.assertIsInstance(norm, RandersNorm)
        self.assertFalse(norm.reversible)
        with self.assertRaises(ValidationError):
            build_norm('quadratic', 1.0, 1.0, (0.1, 0.0))

    def test_homogeneity_flag(self):
        """Test that only constant coefficients make a homogeneous norm"""
        norms = sample_norms()
        self.assertTrue(norms['quadratic'].is_homogeneous)
        self.assertFalse(norms['quadratic_profile'].is_homogeneous)


class EvalNormTests(SimpleTestCase):
    """Test evaluation of F(x, y)"""

    def test_quadratic_examples(self):
        """Test closed-form values of quadratic norms"""
        self.assertAlmostEqual(eval_norm(QuadraticNorm(4.0, 1.0), TangentVector(1.0, 0.0)), 2.0)
        self.assertAlmostEqual(eval_norm(QuadraticNorm(1.0, 1.0), TangentVector(3.0, 4.0)), 5.0)

    def test_randers_example(self):
        """Test |y| + beta(y) for the Euclidean base"""
        self.assertAlmostEqual(eval_norm(RandersNorm(1.0, 1.0, (0.5, 0.0)), TangentVector(1.0, 0.0)), 1.5)

    def test_zero_vector(self):
        """Test that F vanishes exactly at the origin and is positive elsewhere"""
        rng = np.random.default_rng(1)
        for name, norm in sample_norms().items():
            self.assertEqual(eval_norm(norm, TangentVector(0.0, 0.0, 1.0, 2.0)), 0.0, name)
            values = eval_norm(norm, random_tangents(rng, 1000))
            self.assertTrue(np.all(values > 0), name)

    def test_positive_homogeneity(self):
        """Test F(x, t y) = t F(x, y) at random samples"""
        rng = np.random.default_rng(2)
        for name, norm in sample_norms().items():
            y = random_tangents(rng, 1000)
            base = eval_norm(norm, y)
            for factor in (0.5, 2.0, 7.3):
                scaled = eval_norm(norm, y.scaled(factor))
                np.testing.assert_allclose(scaled, factor * base, rtol=1e-12, err_msg=name)

    def test_base_point_stored_modulo_two_pi(self):
        """Test that base points wrap into [0, 2 pi)"""
        y = TangentVector(1.0, 0.0, 2 * np.pi + 0.5, -0.25)
        self.assertAlmostEqual(float(y.theta), 0.5)
        self.assertAlmostEqual(float(y.phi), 2 * np.pi - 0.25)


class FundamentalTensorTests(SimpleTestCase):
    """Test g_ij(x, y)"""

    def test_quadratic_tensor_is_diagonal(self):
        """Test that quadratic tensors equal diag(a, b) for every y"""
        g = fundamental_tensor(QuadraticNorm(4.0, 1.0), TangentVector(0.3, -2.0))
        np.testing.assert_allclose(g, np.diag([4.0, 1.0]))
        g = fundamental_tensor(QuadraticNorm(1.0, 1.0), TangentVector(5.0, 1.0))
        np.testing.assert_allclose(g, np.eye(2))

    def test_randers_tensor_matches_finite_differences(self):
        """Test g against the central finite-difference Hessian of F^2/2"""
        norm = RandersNorm(1.0, 1.0, (0.5, 0.0))
        y = np.array([0.0, 1.0])
        h = 1e-4

        def half_square(v):
            return 0.5 * eval_norm(norm, TangentVector(v[0], v[1])) ** 2

        hessian = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                ei = np.eye(2)[i] * h
                ej = np.eye(2)[j] * h
                hessian[i, j] = (
                    half_square(y + ei + ej) - half_square(y + ei - ej)
                    - half_square(y - ei + ej) + half_square(y - ei - ej)
                ) / (4 * h * h)
        g = fundamental_tensor(norm, TangentVector(*y))
        np.testing.assert_allclose(g, hessian, rtol=1e-6, atol=1e-7)

    def test_positive_definite_at_random_samples(self):
        """Test that the smallest eigenvalue is positive for y != 0"""
        rng = np.random.default_rng(3)
        for name, norm in sample_norms().items():
            g = fundamental_tensor(norm, random_tangents(rng, 2000))
            self.assertTrue(np.all(np.linalg.eigvalsh(g)[..., 0] > 0), name)
            np.testing.assert_allclose(g, np.swapaxes(g, -1, -2), err_msg=name)

    def test_randers_tensor_undefined_at_origin(self):
        """Test the domain error at y = 0 for non-quadratic norms"""
        with self.assertRaises(DomainError):
            fundamental_tensor(RandersNorm(1.0, 1.0, (0.5, 0.0)), TangentVector(0.0, 0.0))


class LegendreMapTests(SimpleTestCase):
    """Test the Legendre map, its inverse and the dual norm"""

    def test_forward_examples(self):
        """Test L(y) = g y for quadratic norms and xi(y) = F^2 for Randers"""
        xi = legendre_forward(QuadraticNorm(4.0, 1.0), TangentVector(1.0, 0.0))
        self.assertAlmostEqual(xi.xi_theta, 4.0)
        self.assertAlmostEqual(xi.xi_phi, 0.0)
        xi = legendre_forward(QuadraticNorm(1.0, 1.0), TangentVector(3.0, 4.0))
        self.assertEqual((xi.xi_theta, xi.xi_phi), (3.0, 4.0))
        y = TangentVector(1.0, 0.0)
        xi = legendre_forward(RandersNorm(1.0, 1.0, (0.5, 0.0)), y)
        self.assertAlmostEqual(xi.pair(y), 2.25)

    def test_origin_maps_to_origin(self):
        """Test the continuous extension L(0) = 0, L^{-1}(0) = 0"""
        for norm in sample_norms().values():
            xi = legendre_forward(norm, TangentVector(0.0, 0.0))
            self.assertEqual((xi.xi_theta, xi.xi_phi), (0.0, 0.0))
            y = legendre_inverse(norm, CotangentVector(0.0, 0.0))
            self.assertEqual((y.y_theta, y.y_phi), (0.0, 0.0))

    def test_inverse_examples(self):
        """Test closed-form inverses of quadratic norms"""
        y = legendre_inverse(QuadraticNorm(4.0, 1.0), CotangentVector(4.0, 0.0))
        self.assertAlmostEqual(y.y_theta, 1.0)
        self.assertAlmostEqual(y.y_phi, 0.0)
        y = legendre_inverse(QuadraticNorm(1.0, 1.0), CotangentVector(3.0, 4.0))
        self.assertEqual((y.y_theta, y.y_phi), (3.0, 4.0))

    def test_randers_inverse_residual(self):
        """Test that L(L^{-1}(xi)) = xi to 1e-10 relative"""
        rng = np.random.default_rng(4)
        norm = RandersNorm(1.0, 1.0, (0.5, 0.0))
        theta, phi = rng.uniform(0, 2 * np.pi, (2, 10000))
        xi1, xi2 = rng.normal(scale=2.0, size=(2, 10000))
        y = legendre_inverse(norm, CotangentVector(xi1, xi2, theta, phi))
        back = legendre_forward(norm, y)
        error = np.hypot(back.xi_theta - xi1, back.xi_phi - xi2)
        self.assertTrue(np.all(error <= 1e-10 * np.hypot(xi1, xi2)))

    def test_round_trip_all_kinds(self):
        """Test L^{-1}(L(y)) = y to 1e-9 relative on 10^4 samples"""
        rng = np.random.default_rng(5)
        for name, norm in sample_norms().items():
            y = random_tangents(rng, 10000)
            back = legendre_inverse(norm, legendre_forward(norm, y))
            error = np.hypot(back.y_theta - y.y_theta, back.y_phi - y.y_phi)
            self.assertTrue(np.all(error <= 1e-9 * np.hypot(y.y_theta, y.y_phi)), name)

    def test_newton_failure_is_reported(self):
        """Test that an exhausted Newton budget raises with the residual"""
        budget = {**settings.FGL, 'NEWTON_MAX_ITERS': 0}
        with override_settings(FGL=budget):
            with self.assertRaises(IterativeFailure) as caught:
                legendre_inverse(RandersNorm(1.0, 1.0, (0.5, 0.0)), CotangentVector(1.0, 0.3))
        self.assertGreater(caught.exception.residual, 0.0)

    def test_dual_norm_examples(self):
        """Test closed-form dual norms and the Randers value 2/3"""
        self.assertAlmostEqual(dual_norm(QuadraticNorm(4.0, 1.0), CotangentVector(1.0, 0.0)), 0.5)
        self.assertAlmostEqual(dual_norm(QuadraticNorm(1.0, 1.0), CotangentVector(0.0, 2.0)), 2.0)
        self.assertAlmostEqual(dual_norm(RandersNorm(1.0, 1.0, (0.5, 0.0)), CotangentVector(1.0, 0.0)), 2.0 / 3.0, places=12)

    def test_dual_norm_matches_support_function(self):
        """Test F* against the angular supremum over the unit sphere"""
        rng = np.random.default_rng(6)
        for name, norm in sample_norms().items():
            theta, phi = rng.uniform(0, 2 * np.pi, (2, 50))
            xi1, xi2 = rng.normal(size=(2, 50))
            xi = CotangentVector(xi1, xi2, theta, phi)
            np.testing.assert_allclose(dual_norm_by_support(norm, xi), dual_norm(norm, xi), rtol=1e-4, err_msg=name)

    def test_norm_compatibility(self):
        """Test F*(x, L(y)) = F(x, y) to 1e-9 relative"""
        rng = np.random.default_rng(7)
        for name, norm in sample_norms().items():
            y = random_tangents(rng, 10000)
            np.testing.assert_allclose(dual_norm(norm, legendre_forward(norm, y)), eval_norm(norm, y), rtol=1e-9, err_msg=name)

    def test_equivalence_constants_bound_samples(self):
        """Test c1 |xi| <= F*(x, xi) <= c2 |xi| at fresh samples"""
        rng = np.random.default_rng(8)
        for name, norm in sample_norms().items():
            c1, c2 = norm.equivalence_constants
            self.assertGreater(c1, 0.0)
            theta, phi = rng.uniform(0, 2 * np.pi, (2, 5000))
            xi1, xi2 = rng.normal(size=(2, 5000))
            ratio = dual_norm(norm, CotangentVector(xi1, xi2, theta, phi)) / np.hypot(xi1, xi2)
            self.assertTrue(np.all(ratio >= c1) and np.all(ratio <= c2), name)


class FenchelGapTests(SimpleTestCase):
    """Test the Fenchel-Young gap"""

    def test_examples(self):
        """Test the equality case and an orthogonal pair"""
        norm = QuadraticNorm(4.0, 1.0)
        self.assertAlmostEqual(fenchel_gap(norm, TangentVector(1.0, 0.0), CotangentVector(4.0, 0.0)), 0.0)
        self.assertAlmostEqual(fenchel_gap(QuadraticNorm(1.0, 1.0), TangentVector(1.0, 0.0), CotangentVector(0.0, 1.0)), 1.0)

    def test_gap_nonnegative_and_zero_on_graph(self):
        """Test gap >= 0 at random pairs and = 0 on the Legendre graph"""
        rng = np.random.default_rng(9)
        for name, norm in sample_norms().items():
            y = random_tangents(rng, 10000)
            xi1, xi2 = rng.normal(scale=3.0, size=(2, 10000))
            xi = CotangentVector(xi1, xi2, y.theta, y.phi)
            self.assertGreaterEqual(np.min(fenchel_gap(norm, y, xi)), -1e-10, name)
            on_graph = fenchel_gap(norm, y, legendre_forward(norm, y))
            scale = np.maximum(1.0, eval_norm(norm, y) ** 2)
            self.assertLessEqual(np.max(np.abs(on_graph) / scale), 1e-10, name)

    def test_base_points_must_agree(self):
        """Test that pairing vectors at different points is refused"""
        with self.assertRaises(DomainError):
            fenchel_gap(QuadraticNorm(1.0, 1.0), TangentVector(1.0, 0.0, 0.0, 0.0), CotangentVector(1.0, 0.0, 1.0, 0.0))


class UnitBallVolumeTests(SimpleTestCase):
    """Test polar-quadrature ball areas and the canonical densities"""

    def test_quadratic_balls(self):
        """Test ellipse areas pi / sqrt(ab)"""
        self.assertAlmostEqual(unit_ball_volume(QuadraticNorm(4.0, 1.0), (0.0, 0.0)), np.pi / 2, places=12)
        self.assertAlmostEqual(unit_ball_volume(QuadraticNorm(1.0, 1.0), (0.0, 0.0)), np.pi, places=12)

    def test_randers_primal_ball(self):
        """Test the off-centre ellipse area pi (1 - |beta|^2)^(-3/2)"""
        area = unit_ball_volume(RandersNorm(1.0, 1.0, (0.5, 0.0)), (0.0, 0.0))
        self.assertAlmostEqual(area / (np.pi * 0.75 ** -1.5), 1.0, delta=1e-8)

    def test_densities_of_quadratic_norms(self):
        """Test BH = HT = sqrt(ab)"""
        for a, b, expected in ((4.0, 1.0, 2.0), (1.0, 1.0, 1.0)):
            norm = QuadraticNorm(a, b)
            self.assertAlmostEqual(bh_density(norm, (0.0, 0.0)), expected, places=10)
            self.assertAlmostEqual(ht_density(norm, (0.0, 0.0)), expected, places=10)

    def test_randers_densities_differ(self):
        """Test BH = 0.75^(3/2) while HT stays sqrt(ab) for Randers"""
        norm = RandersNorm(1.0, 1.0, (0.5, 0.0))
        bh = bh_density(norm, (0.0, 0.0))
        ht = ht_density(norm, (0.0, 0.0))
        self.assertAlmostEqual(bh / 0.75 ** 1.5, 1.0, delta=1e-8)
        # The dual ball of a Randers norm is the base dual ellipse translated by beta.
        self.assertAlmostEqual(ht, 1.0, delta=1e-8)
        self.assertGreater(abs(ht - bh), 0.3)

    def test_pushforward_cross_check(self):
        """Test the dual area against the integral of det g over the primal ball"""
        for norm in sample_norms().values():
            x = (np.array([0.3, 2.0]), np.array([1.1, 4.0]))
            np.testing.assert_allclose(
                dual_ball_volume_by_pushforward(norm, x),
                unit_ball_volume(norm, x, dual=True),
                rtol=1e-8,
            )

    def test_bh_equals_ht_for_random_quadratic_norms(self):
        """Test the Riemannian identity at 100 random coefficient pairs"""
        rng = np.random.default_rng(10)
        for a, b in rng.uniform(0.1, 10.0, (100, 2)):
            norm = QuadraticNorm(a, b)
            expected = np.sqrt(a * b)
            self.assertAlmostEqual(bh_density(norm, (0.0, 0.0)) / expected, 1.0, delta=1e-8)
            self.assertAlmostEqual(ht_density(norm, (0.0, 0.0)) / expected, 1.0, delta=1e-8)

    def test_angular_refinement_converged(self):
        """Test that doubling the angular resolution changes the area by < 1e-9"""
        norm = QuadraticNorm(CoefficientProfile.parse('cos_theta(3.0, 0.5)'), 0.7)
        coarse = unit_ball_volume(norm, (1.0, 2.0), samples=2048)
        fine = unit_ball_volume(norm, (1.0, 2.0), samples=4096)
        self.assertLess(abs(fine - coarse) / fine, 1e-9)


class MeasureDensityTests(SimpleTestCase):
    """Test density caching and integration"""

    def setUp(self):
        self.grid = PeriodicGrid(64, 64)

    def test_x_dependent_density_is_riemannian_volume(self):
        """Test sigma = sqrt(a(x) b(x)) for an x-dependent quadratic norm"""
        norm = QuadraticNorm(CoefficientProfile.parse('cos_theta(2.0, 0.4)'), CoefficientProfile.parse('cos_phi(1.0, 0.2)'))
        grid = PeriodicGrid(16, 16)
        theta, phi = grid.mesh()
        expected = np.sqrt(norm.a(theta, phi) * norm.b(theta, phi))
        for kind in MeasureKind:
            sigma = MeasureDensity(norm, kind).on_grid(grid)
            np.testing.assert_allclose(sigma, expected, rtol=1e-8)

    def test_cache_is_reused_and_read_only(self):
        """Test that on_grid hands out the same read-only array"""
        density = MeasureDensity(QuadraticNorm(2.0, 1.0))
        first = density.on_grid(self.grid)
        self.assertIs(density.on_grid(self.grid), first)
        self.assertFalse(first.flags.writeable)

    def test_integrate_constants(self):
        """Test integrals of f = 1 against sigma = 1 and sigma = sqrt(2)"""
        one = ScalarField.constant(self.grid, 1.0)
        self.assertAlmostEqual(integrate(MeasureDensity(QuadraticNorm(1.0, 1.0)), one), (2 * np.pi) ** 2, delta=1e-12 * (2 * np.pi) ** 2)
        value = integrate(MeasureDensity(QuadraticNorm(2.0, 1.0)), one)
        self.assertAlmostEqual(value / ((2 * np.pi) ** 2 * np.sqrt(2.0)), 1.0, delta=1e-8)

    def test_integrate_cos_squared(self):
        """Test the midpoint rule on cos^2 theta"""
        f = ScalarField.from_function(self.grid, lambda theta, phi: np.cos(theta) ** 2)
        value = integrate(MeasureDensity(QuadraticNorm(1.0, 1.0)), f)
        self.assertAlmostEqual(value, 2 * np.pi ** 2, delta=1e-10)

    def test_integrate_is_monotone(self):
        """Test that nonnegative integrands have nonnegative integrals"""
        rng = np.random.default_rng(11)
        density = MeasureDensity(RandersNorm(1.0, 2.0, (0.2, 0.1)), MeasureKind.HOLMES_THOMPSON)
        f = ScalarField(self.grid, rng.uniform(0.0, 1.0, self.grid.shape))
        self.assertGreaterEqual(integrate(density, f), 0.0)

    def test_grid_mismatch(self):
        """Test that a density cached on another grid is rejected"""
        density = MeasureDensity(QuadraticNorm(1.0, 1.0))
        wrong = PeriodicGrid(8, 8)
        with patch.object(MeasureDensity, 'on_grid', return_value=np.ones(wrong.shape)):
            with self.assertRaises(GridMismatchError):
                integrate(density, ScalarField.constant(self.grid, 1.0))
