"""
The computations behind the fgl subcommands.

Each run takes a validated ExperimentConfig and an OutputDirectory, writes
its artifacts and returns what the command prints.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from energy.functional import gl_energy
from fields.lattice import OneFormField, ScalarField
from main.enums import CoMetric, NormKind, SectorKind
from main.exceptions import DomainError
from solver.minimize import minimize
from solver.sectors import init_winding, pinning_mask
from solver.sweep import epsilon_sweep, fit_log_slope
from vortices.detection import VortexSet, cycle_windings, detect_vortices, gamma_limit_energy

from .reports import SWEEP_COLUMNS, TORUS_COLUMNS, TRACE_COLUMNS, VORTEX_COLUMNS, summary_line

logger = logging.getLogger(__name__)

# Relative agreement required between quadrature and a closed form.
FORMULA_RTOL = 1e-5


@dataclass(frozen=True)
class WindingReport:
    winding: str
    number: int
    quadrature: float
    printed_formula: float
    intermediate_formula: float

    def _matches(self, value):
        return math.isclose(self.quadrature, value, rel_tol=FORMULA_RTOL, abs_tol=1e-12)

    @property
    def matches_printed(self):
        return self._matches(self.printed_formula)

    @property
    def matches_intermediate(self):
        return self._matches(self.intermediate_formula)

    def as_row(self):
        return {
            'winding': self.winding,
            'number': self.number,
            'quadrature': self.quadrature,
            'printed_formula': self.printed_formula,
            'intermediate_formula': self.intermediate_formula,
            'matches_printed': self.matches_printed,
            'matches_intermediate': self.matches_intermediate,
        }


def winding_formulas(a, b, number, axis):
    """
    Closed forms for the energy of e^{i m theta} (axis 'theta') or e^{i n phi}.

    The printed form is 2 pi^2 k^2 sqrt(a/b) for both cycles; the
    intermediate form 1/2 k^2 (1/c) (2 pi)^2 sqrt(ab) uses c = a along
    theta and c = b along phi. They only agree along theta when a = b.
    """
    printed = 2 * np.pi ** 2 * number ** 2 * np.sqrt(a / b)
    c = a if axis == 'theta' else b
    intermediate = 0.5 * number ** 2 / c * (2 * np.pi) ** 2 * np.sqrt(a * b)
    return float(printed), float(intermediate)


def torus_example(config, output):
    """gl_energy of the pure cycle windings, compared with both closed forms."""
    norm = config.norm
    if norm.kind is not NormKind.QUADRATIC:
        raise DomainError("torus-example needs a quadratic norm")
    if not norm.is_homogeneous:
        raise DomainError("torus-example needs constant coefficients a and b")
    a, b = norm.a.value, norm.b.value
    grid = config.grid
    density = config.density()
    theta, phi = grid.mesh()
    reports = []
    for axis, number, coordinate in (('theta', config.torus[0], theta), ('phi', config.torus[1], phi)):
        psi = ScalarField(grid, np.exp(1j * number * coordinate))
        energy = gl_energy(norm, density, CoMetric.EUCLIDEAN, config.params, psi, OneFormField.zeros(grid))
        report = WindingReport(axis, number, energy.total, *winding_formulas(a, b, number, axis))
        if not report.matches_printed:
            logger.warning(
                f"{axis}-winding {number}: quadrature {report.quadrature:.10g} differs from the printed formula "
                f"2 pi^2 k^2 sqrt(a/b) = {report.printed_formula:.10g}"
                + (" but matches the intermediate formula" if report.matches_intermediate else "")
            )
        reports.append(report)
    output.write_csv('torus_example.csv', [report.as_row() for report in reports], TORUS_COLUMNS)
    return reports


def _pinned(config, grid):
    if config.pin_cores and config.sector.kind is SectorKind.VORTEX_PAIR:
        return pinning_mask(grid, config.sector)
    return None


def minimize_run(config, output):
    """Minimize from the configured sector and write trace, fields, vortices and summary."""
    grid = config.grid
    psi0, A0 = init_winding(grid, config.sector, config.noise, config.seed, config.norm, config.params.epsilon)
    checkpoint_dir = output.path('checkpoints') if config.solver.checkpoint_every else None
    psi, A, trace = minimize(
        config.norm, config.density(), config.params, config.solver, psi0, A0,
        pinned=_pinned(config, grid), checkpoint_dir=checkpoint_dir,
    )
    vortices = detect_vortices(psi)
    windings = cycle_windings(psi)

    output.write_csv('trace.csv', trace.as_rows(), TRACE_COLUMNS)
    output.write_field('psi.fgl', psi)
    output.write_field('A.fgl', A)
    output.write_csv('vortices.csv', vortices.as_rows(), VORTEX_COLUMNS)
    line = summary_line(trace.final.energy, vortices, windings, trace.termination, trace.iterations)
    output.write_text('summary.txt', line + '\n')
    return line, vortices, trace


@dataclass(frozen=True)
class SweepReport:
    points: list
    slope: float
    intercept: float
    prediction: float

    @property
    def relative_deviation(self):
        if self.prediction == 0:
            return abs(self.slope)
        return abs(self.slope - self.prediction) / self.prediction

    def summary(self):
        return (
            f"slope={self.slope!r} intercept={self.intercept!r} gamma_limit={self.prediction!r} "
            f"relative_deviation={self.relative_deviation!r}"
        )


def sweep_run(config, output, threads=None):
    """eps-sweep, |log eps| fit and the Gamma-limit prediction of the finest point."""
    if len(config.eps_list) < 3:
        raise DomainError(f"a sweep needs at least 3 values of eps, got {len(config.eps_list)}")
    points = epsilon_sweep(
        config.norm, config.density(), config.params.lam, config.sector, config.eps_list,
        config.schedule, config.solver, noise=config.noise, seed=config.seed,
        pin_cores=config.pin_cores, threads=threads,
    )
    slope, intercept = fit_log_slope(points)
    finest = points[-1].vortices if points else VortexSet()
    report = SweepReport(points, slope, intercept, gamma_limit_energy(config.norm, finest))
    output.write_csv('sweep.csv', [point.as_row() for point in points], SWEEP_COLUMNS)
    output.write_text('sweep_fit.txt', report.summary() + '\n')
    return report
