"""
Property suites run by ``fgl check``.

Each suite measures one number against a fixed tolerance and returns a
SuiteResult. The random samples come from the config seed, but the
tolerances hold for any seed.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from django.core.exceptions import ValidationError

from energy.functional import GLParams, diamagnetic_residual, gl_energy, gl_gradient, pairing
from fields.gauge import gauge_transform
from fields.lattice import GaugeFunction, OneFormField, PeriodicGrid, ScalarField
from fields.operators import divergence, exterior_d
from geometry.measures import MeasureDensity, bh_density, ht_density
from geometry.norms import (
    CotangentVector,
    QuadraticNorm,
    RandersNorm,
    TangentVector,
    build_norm,
    dual_norm,
    dual_norm_by_support,
    eval_norm,
    fenchel_gap,
    legendre_forward,
    legendre_inverse,
)
from geometry.profiles import CoefficientProfile
from main.enums import CoMetric
from main.exceptions import FGLError

logger = logging.getLogger(__name__)

SAMPLES = 10000


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ''

    def as_row(self):
        return asdict(self)


def reference_norms(config):
    """The configured norm plus an x-dependent quadratic and Randers norm."""
    return {
        'configured': config.norm,
        'quadratic_profile': QuadraticNorm(
            CoefficientProfile.parse('cos_theta(2.0, 0.3)'), CoefficientProfile.parse('sin_product(1.0, 0.2)'),
        ),
        'randers_profile': RandersNorm(CoefficientProfile.parse('cos_phi(1.5, 0.2)'), 1.0, (0.3, -0.2)),
    }


def _reversible(config):
    if config.norm.reversible:
        return 'configured', config.norm
    return 'quadratic_profile', reference_norms(config)['quadratic_profile']


def _tangents(rng, count):
    theta, phi = rng.uniform(0.0, 2 * np.pi, (2, count))
    y1, y2 = rng.normal(scale=3.0, size=(2, count))
    return TangentVector(y1, y2, theta, phi)


def _smooth(grid, rng, modes=2):
    theta, phi = grid.mesh()
    values = np.zeros(grid.shape)
    for k in range(-modes, modes + 1):
        for l in range(-modes, modes + 1):
            c = rng.normal(size=2) / (1 + k * k + l * l)
            values += c[0] * np.cos(k * theta + l * phi) + c[1] * np.sin(k * theta + l * phi)
    return values


def fenchel_young(config, rng):
    """gap >= 0 at random pairs, and 0 on the Legendre graph relative to max(1, F^2)."""
    tolerance = 1e-10
    worst = 0.0
    for norm in reference_norms(config).values():
        y = _tangents(rng, SAMPLES)
        xi1, xi2 = rng.normal(scale=3.0, size=(2, SAMPLES))
        gaps = fenchel_gap(norm, y, CotangentVector(xi1, xi2, y.theta, y.phi))
        on_graph = fenchel_gap(norm, y, legendre_forward(norm, y))
        scale = np.maximum(1.0, eval_norm(norm, y) ** 2)
        worst = max(worst, -float(np.min(gaps)), float(np.max(np.abs(on_graph) / scale)))
    return SuiteResult('fenchel_young', worst <= tolerance, worst, tolerance)


def legendre_round_trip(config, rng):
    tolerance = 1e-9
    worst = 0.0
    for norm in reference_norms(config).values():
        y = _tangents(rng, SAMPLES)
        back = legendre_inverse(norm, legendre_forward(norm, y))
        error = np.hypot(back.y_theta - y.y_theta, back.y_phi - y.y_phi) / np.hypot(y.y_theta, y.y_phi)
        worst = max(worst, float(np.max(error)))
    return SuiteResult('legendre_round_trip', worst <= tolerance, worst, tolerance)


def norm_compatibility(config, rng):
    """F*(x, L(y)) = F(x, y)."""
    tolerance = 1e-9
    worst = 0.0
    for norm in reference_norms(config).values():
        y = _tangents(rng, SAMPLES)
        primal = eval_norm(norm, y)
        error = np.abs(dual_norm(norm, legendre_forward(norm, y)) - primal) / primal
        worst = max(worst, float(np.max(error)))
    return SuiteResult('norm_compatibility', worst <= tolerance, worst, tolerance)


def support_function(config, rng):
    """F* through Newton against the supremum over a discretized unit sphere."""
    tolerance = 1e-4
    worst = 0.0
    for norm in reference_norms(config).values():
        theta, phi = rng.uniform(0.0, 2 * np.pi, (2, 50))
        xi1, xi2 = rng.normal(size=(2, 50))
        xi = CotangentVector(xi1, xi2, theta, phi)
        exact = dual_norm(norm, xi)
        worst = max(worst, float(np.max(np.abs(dual_norm_by_support(norm, xi) - exact) / exact)))
    return SuiteResult('support_function', worst <= tolerance, worst, tolerance)


def measure_identity(config, rng):
    """BH = HT = sqrt(ab) for quadratic norms; the Randers densities must differ."""
    tolerance = 1e-8
    worst = 0.0
    for a, b in rng.uniform(0.1, 10.0, (100, 2)):
        norm = QuadraticNorm(a, b)
        expected = np.sqrt(a * b)
        worst = max(worst, abs(bh_density(norm, (0.0, 0.0)) / expected - 1), abs(ht_density(norm, (0.0, 0.0)) / expected - 1))
    randers = RandersNorm(1.0, 1.0, (0.5, 0.0))
    split = abs(bh_density(randers, (0.0, 0.0)) - ht_density(randers, (0.0, 0.0)))
    return SuiteResult(
        'measure_identity', worst <= tolerance and split > 0.1, worst, tolerance,
        f"randers |BH - HT| = {split:.6g}",
    )


def gradient_test(config, rng):
    """gl_gradient against central differences in 20 random directions on a 16x16 grid."""
    tolerance = 1e-6
    grid = PeriodicGrid(16, 16)
    params = GLParams(0.8, 0.5)
    t = 1e-5
    worst = 0.0
    for norm in reference_norms(config).values():
        density = MeasureDensity(norm, config.measure)
        sigma = density.on_grid(grid)
        psi = ScalarField(grid, _smooth(grid, rng) + 1j * _smooth(grid, rng))
        A = OneFormField(grid, _smooth(grid, rng), _smooth(grid, rng))
        gradient = gl_gradient(norm, density, CoMetric.EUCLIDEAN, params, psi, A)
        for _ in range(20):
            phi = ScalarField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))
            B = OneFormField(grid, rng.normal(size=grid.shape), rng.normal(size=grid.shape))
            forward = gl_energy(norm, density, CoMetric.EUCLIDEAN, params, ScalarField(grid, psi.values + t * phi.values), A + B.scaled(t))
            backward = gl_energy(norm, density, CoMetric.EUCLIDEAN, params, ScalarField(grid, psi.values - t * phi.values), A - B.scaled(t))
            numeric = (forward.total - backward.total) / (2 * t)
            worst = max(worst, abs(pairing(sigma, grid, gradient, (phi, B)) / numeric - 1))
    return SuiteResult('gradient_test', worst <= tolerance, worst, tolerance)


def diamagnetic(config, rng):
    """residual >= -slack at N = 16, 32, 64 with the slack at least halving."""
    name, norm = _reversible(config)
    slacks = []
    holds = True
    for n in (16, 32, 64):
        grid = PeriodicGrid(n, n)
        theta, phi = grid.mesh()
        psi = ScalarField(grid, (1.5 + 0.5 * np.sin(theta) * np.cos(phi)) * np.exp(1j * (np.sin(phi) + np.cos(theta))))
        A = OneFormField(grid, 0.4 * np.cos(phi), -0.3 * np.sin(theta + phi))
        residual, slack = diamagnetic_residual(norm, psi, A)
        holds = holds and residual.values.min() >= -slack - 1e-12
        slacks.append(slack)
    ratio = max(slacks[1] / slacks[0], slacks[2] / slacks[1]) if slacks[0] > 0 and slacks[1] > 0 else 0.0
    detail = f"{name} norm, slack " + ', '.join(f"{slack:.3e}" for slack in slacks)
    return SuiteResult('diamagnetic', holds and ratio <= 0.5, ratio, 0.5, detail)


def integration_by_parts(config, rng):
    """sum du(X) sigma = -sum u div_sigma(X) sigma for the configured and an x-dependent density."""
    tolerance = 1e-10
    grid = PeriodicGrid(64, 64)
    u = _smooth(grid, rng)
    X = OneFormField(grid, _smooth(grid, rng), _smooth(grid, rng))
    du = exterior_d(ScalarField(grid, u))
    worst = 0.0
    for norm in (config.norm, reference_norms(config)['quadratic_profile']):
        sigma = MeasureDensity(norm, config.measure).on_grid(grid)
        left = np.sum((du.theta_component * X.theta_component + du.phi_component * X.phi_component) * sigma)
        right = -np.sum(u * divergence(X, sigma).values * sigma)
        worst = max(worst, abs(left / right - 1))
    return SuiteResult('integration_by_parts', worst <= tolerance, worst, tolerance)


def gauge_invariance_refinement(config, rng):
    """The gauge defect of the energy shrinks by at least 7 from N = 32 to N = 64."""
    name, norm = _reversible(config)
    density = MeasureDensity(norm, config.measure)
    params = GLParams(1.0, 0.5)
    defects = []
    for n in (32, 64):
        grid = PeriodicGrid(n, n)
        theta, phi = grid.mesh()
        psi = ScalarField(grid, (1.2 + 0.3 * np.cos(theta)) * np.exp(1j * np.sin(phi)))
        A = OneFormField(grid, 0.3 * np.sin(phi), 0.2 * np.cos(theta))
        chi = GaugeFunction(grid, np.sin(theta) * np.cos(phi))
        before = gl_energy(norm, density, CoMetric.EUCLIDEAN, params, psi, A).total
        after = gl_energy(norm, density, CoMetric.EUCLIDEAN, params, *gauge_transform(psi, A, chi)).total
        defects.append(abs(after - before))
    ratio = defects[0] / defects[1] if defects[1] > 0 else np.inf
    detail = f"{name} norm, defects {defects[0]:.3e}, {defects[1]:.3e}"
    return SuiteResult('gauge_invariance_refinement', ratio >= 7.0, float(ratio), 7.0, detail)


def construction_rejection(config, rng):
    """A degenerate coefficient (b = 0) must be refused when the norm is built."""
    try:
        build_norm(config.norm.kind, config.norm.a, '0.0')
    except ValidationError as error:
        return SuiteResult('construction_rejection', True, 1.0, 1.0, '; '.join(error.messages))
    return SuiteResult('construction_rejection', False, 0.0, 1.0, "b = 0 was accepted")


SUITES = {
    suite.__name__: suite
    for suite in (
        fenchel_young,
        legendre_round_trip,
        norm_compatibility,
        support_function,
        measure_identity,
        gradient_test,
        diamagnetic,
        integration_by_parts,
        gauge_invariance_refinement,
        construction_rejection,
    )
}


def run_suites(config, names=None):
    """Run the named suites (all by default) in a fixed order, seeded from the config."""
    names = list(SUITES) if not names else names
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    rng = np.random.default_rng(config.seed)
    results = []
    for name in names:
        try:
            result = SUITES[name](config, rng)
        except (FGLError, ValidationError) as error:
            logger.error(f"suite {name} raised {error.__class__.__name__}: {error}")
            result = SuiteResult(name, False, float('nan'), float('nan'), str(error))
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"{name}: {'pass' if result.passed else 'FAIL'} (measured {result.measured:.3e}, tolerance {result.tolerance:.3e})")
        results.append(result)
    return results
