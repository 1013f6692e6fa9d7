"""
Descent on the discrete GL energy over the Coulomb slice.

The A-direction is kept in {div_sigma B = 0, mean B = 0}: pure gauge
directions are removed by the Coulomb projection and the harmonic part of
A is held fixed, so a winding cannot be undone by a constant A. The psi
direction is zeroed on pinned nodes.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from energy.functional import energy_and_gradient, gradient_norm, pairing
from fields.dumps import write_field
from fields.gauge import coulomb_project, fix_gauge
from fields.lattice import OneFormField, ScalarField
from main.enums import CoMetric, StepRule, Termination, TraceKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 50000
    grad_tol: float = 1e-8
    step_rule: StepRule = StepRule.BB
    fixed_step: float = None
    gauge_reproject_every: int = 100
    checkpoint_every: int = 0
    min_step: float = 1e-14
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'step_rule', StepRule(self.step_rule))
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValidationError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if not self.grad_tol > 0:
            raise ValidationError(f"grad_tol must be positive, got {self.grad_tol!r}")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValidationError(f"fixed_step must be positive, got {self.fixed_step!r}")
        if not self.min_step > 0:
            raise ValidationError(f"min_step must be positive, got {self.min_step!r}")
        for name in ('gauge_reproject_every', 'checkpoint_every'):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    kind: TraceKind
    energy: object
    grad_norm: float
    step: float

    def as_row(self):
        return {
            'iter': self.iteration,
            'kind': self.kind.value,
            **self.energy.as_row(),
            'grad_norm': self.grad_norm,
            'step': self.step,
        }


@dataclass
class SolverTrace:
    rows: list = field(default_factory=list)
    termination: Termination = None

    def record(self, iteration, kind, energy, grad_norm, step=0.0):
        self.rows.append(TraceRow(iteration, kind, energy, grad_norm, step))

    @property
    def final(self):
        return self.rows[-1]

    @property
    def iterations(self):
        return self.final.iteration

    def totals(self):
        return np.array([row.energy.total for row in self.rows])

    def as_rows(self):
        return [row.as_row() for row in self.rows]


def initial_step(norm, grid, params):
    """Inverse of a rough bound on the curvature of the discrete energy."""
    c2 = norm.equivalence_constants[1]
    h = min(grid.h_theta, grid.h_phi)
    return 1.0 / (4.0 * (c2 * c2 + 1.0 / params.lam) / h ** 2 + 3.0 / params.epsilon ** 2)


class _Descent:
    """One minimization run: state arrays, projections and step bookkeeping."""

    def __init__(self, norm, density, gamma, params, config, grid, pinned, checkpoint_dir):
        self.norm = norm
        self.density = density
        self.gamma = gamma
        self.params = params
        self.config = config
        self.grid = grid
        self.sigma = density.on_grid(grid)
        self.pinned = pinned
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.slack = settings.FGL['ENERGY_SLACK']

    def evaluate(self, psi, A):
        return energy_and_gradient(self.norm, self.density, self.gamma, self.params, psi, A)

    def project(self, gradient):
        """Restrict the gradient to the admissible directions."""
        g_psi = gradient.psi.values
        if self.pinned is not None:
            g_psi = np.where(self.pinned, 0.0, g_psi)
        inverse = 1.0 / self.sigma
        components = []
        for component in (gradient.A.theta_component, gradient.A.phi_component):
            kappa = np.mean(component) / np.mean(inverse)
            components.append(component - kappa * inverse)
        B = OneFormField(self.grid, *components)
        B = coulomb_project(B, self.sigma).coulomb
        return ScalarField(self.grid, g_psi), B

    def move(self, psi, A, direction, alpha):
        d_psi, d_A = direction
        return (
            ScalarField(self.grid, psi.values - alpha * d_psi.values),
            OneFormField(self.grid, A.theta_component - alpha * d_A.theta_component, A.phi_component - alpha * d_A.phi_component),
        )

    def accepts(self, trial, energy, decrease):
        bound = energy.total - decrease + self.slack * max(1.0, abs(energy.total))
        return np.isfinite(trial.total) and trial.total <= bound

    def checkpoint(self, iteration, psi, A):
        if self.checkpoint_dir is None:
            return
        write_field(self.checkpoint_dir / f"psi_{iteration:06d}.fgl", psi)
        write_field(self.checkpoint_dir / f"A_{iteration:06d}.fgl", A)


def minimize(norm, density, params, config, psi0, A0, pinned=None, gamma=CoMetric.EUCLIDEAN, checkpoint_dir=None):
    """
    Minimize the GL energy from (psi0, A0).

    Returns (psi, A, trace). The trace holds one row per accepted step and
    per gauge reprojection; energies are nonincreasing across descent rows.
    The reported gradient norm is that of the projected gradient.
    """
    grid = psi0.grid
    run = _Descent(norm, density, gamma, params, config, grid, pinned, checkpoint_dir)
    reproject = config.gauge_reproject_every > 0
    if reproject and not norm.reversible:
        logger.warning(f"gauge reprojection skipped: {norm.describe()} is not reversible")
        reproject = False

    psi, A = psi0, A0
    if reproject:
        psi, A, _ = fix_gauge(psi, A, run.sigma)
    energy, gradient = run.evaluate(psi, A)
    direction = run.project(gradient)
    g_norm = gradient_norm(run.sigma, grid, direction)
    trace = SolverTrace()
    trace.record(0, TraceKind.INITIAL, energy, g_norm)

    alpha0 = config.fixed_step or initial_step(norm, grid, params)
    alpha = alpha0
    previous = None
    iteration = 0
    while True:
        if g_norm <= config.grad_tol:
            trace.termination = Termination.CONVERGED
            break
        if iteration >= config.max_iters:
            trace.termination = Termination.MAX_ITERS
            break

        if config.step_rule is StepRule.BB and previous is not None:
            s, y = previous
            sy = pairing(run.sigma, grid, s, y)
            alpha = pairing(run.sigma, grid, s, s) / sy if sy > 0 else alpha0
        elif config.step_rule is StepRule.ARMIJO:
            alpha = min(alpha / settings.FGL['ARMIJO_SHRINK'], 1e6 * alpha0)
        elif config.step_rule is StepRule.FIXED:
            alpha = alpha0

        squared = g_norm * g_norm
        while True:
            trial_psi, trial_A = run.move(psi, A, direction, alpha)
            trial, trial_gradient = run.evaluate(trial_psi, trial_A)
            if config.step_rule is StepRule.FIXED:
                decrease = 0.0
            else:
                decrease = settings.FGL['ARMIJO_C'] * alpha * squared
            if run.accepts(trial, energy, decrease):
                break
            if config.step_rule is StepRule.FIXED:
                alpha = 0.0
                break
            alpha *= settings.FGL['ARMIJO_SHRINK']
            if alpha < config.min_step:
                break
        if alpha < config.min_step:
            logger.warning(f"line search stalled at iteration {iteration}, energy {energy.total:.12g}")
            trace.termination = Termination.STALL
            break

        iteration += 1
        trial_direction = run.project(trial_gradient)
        step_taken = (
            ScalarField(grid, trial_psi.values - psi.values),
            trial_A - A,
        )
        previous = (
            step_taken,
            (
                ScalarField(grid, trial_direction[0].values - direction[0].values),
                trial_direction[1] - direction[1],
            ),
        )
        psi, A, energy, direction = trial_psi, trial_A, trial, trial_direction
        g_norm = gradient_norm(run.sigma, grid, direction)
        trace.record(iteration, TraceKind.DESCENT, energy, g_norm, alpha)
        if iteration % 100 == 0:
            logger.debug(f"iteration {iteration}: energy {energy.total:.12g}, gradient {g_norm:.3e}, step {alpha:.3e}")

        if reproject and iteration % config.gauge_reproject_every == 0:
            psi, A, _ = fix_gauge(psi, A, run.sigma)
            energy, gradient = run.evaluate(psi, A)
            direction = run.project(gradient)
            g_norm = gradient_norm(run.sigma, grid, direction)
            trace.record(iteration, TraceKind.GAUGE, energy, g_norm)
            previous = None
        if config.checkpoint_every and iteration % config.checkpoint_every == 0:
            run.checkpoint(iteration, psi, A)

    logger.info(
        f"minimize on {grid.n_theta}x{grid.n_phi}: {trace.termination.value} after {iteration} iterations, "
        f"energy {energy.total:.12g}, gradient {g_norm:.3e}"
    )
    return psi, A, trace
