"""
Minimization over a decreasing sequence of eps on grids that resolve the core.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from energy.functional import GLParams
from fields.lattice import PeriodicGrid, TWO_PI
from main.enums import CoMetric, SectorKind
from main.exceptions import ResolutionError
from vortices.detection import detect_vortices

from .minimize import minimize
from .sectors import init_winding, pinning_mask

logger = logging.getLogger(__name__)


def grid_for_epsilon(epsilon, resolution=4):
    """Smallest even N >= 8 with 2 pi / N <= eps / resolution."""
    n = math.ceil(TWO_PI * resolution / epsilon)
    n = max(8, n + (n % 2))
    # ceil can land one short when 2 pi resolution / eps is within rounding of an integer
    while TWO_PI / n > epsilon / resolution:
        n += 2
    return PeriodicGrid(n, n)


@dataclass(frozen=True)
class GridSchedule:
    """Grid per eps: explicit sizes from ``n_list`` or the coarsest resolving grid."""

    resolution: float = 4.0
    n_list: tuple = None

    def __post_init__(self):
        if not self.resolution >= 4:
            raise ValidationError(f"resolution must be at least 4 nodes per core, got {self.resolution!r}")
        if self.n_list is not None:
            object.__setattr__(self, 'n_list', tuple(int(n) for n in self.n_list))

    def grids(self, eps_list):
        if self.n_list is None:
            return [grid_for_epsilon(eps, self.resolution) for eps in eps_list]
        if len(self.n_list) != len(eps_list):
            raise ValidationError(f"n_list has {len(self.n_list)} entries for {len(eps_list)} values of eps")
        grids = [PeriodicGrid(n, n) for n in self.n_list]
        violations = [
            f"eps={eps!r}: h={grid.h_max:.6g} > eps/{self.resolution:g}={eps / self.resolution:.6g}"
            for eps, grid in zip(eps_list, grids)
            if grid.h_max > eps / self.resolution
        ]
        if violations:
            raise ResolutionError("grid schedule does not resolve the vortex cores", violations)
        return grids


@dataclass(frozen=True)
class SweepPoint:
    epsilon: float
    n: int
    energy: object
    vortices: object
    termination: object
    iterations: int

    @property
    def vortex_count(self):
        return len(self.vortices)

    @property
    def degrees(self):
        return tuple(self.vortices.degrees)

    @property
    def energy_over_logeps(self):
        return self.energy.total / abs(math.log(self.epsilon))

    def as_row(self):
        return {
            'epsilon': self.epsilon,
            'N': self.n,
            'total': self.energy.total,
            'kinetic': self.energy.kinetic,
            'maxwell': self.energy.maxwell,
            'potential': self.energy.potential,
            'vortex_count': self.vortex_count,
            'energy_over_logeps': self.energy_over_logeps,
        }


def check_eps_list(eps_list):
    eps = [float(value) for value in eps_list]
    if not eps:
        raise ValidationError("eps_list is empty")
    if any(not value > 0 for value in eps):
        raise ValidationError("every eps must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("eps_list must be strictly decreasing")
    if any(value >= 1 for value in eps):
        raise ValidationError("eps must be below 1 for the |log eps| scaling")
    return eps


def epsilon_sweep(norm, density, lam, sector, eps_list, schedule, config,
                  noise=0.0, seed=0, pin_cores=True, threads=None, gamma=CoMetric.EUCLIDEAN):
    """
    Minimize in ``sector`` for every eps and return the SweepPoints in eps order.

    Points run concurrently on ``threads`` workers (FGL['THREADS'] by
    default); each has its own fields, so only the cached density is shared.
    """
    eps = check_eps_list(eps_list)
    grids = schedule.grids(eps)
    threads = threads or settings.FGL['THREADS']

    def run(epsilon, grid):
        params = GLParams(lam, epsilon)
        psi0, A0 = init_winding(grid, sector, noise, seed, norm, epsilon)
        pinned = pinning_mask(grid, sector) if pin_cores and sector.kind is SectorKind.VORTEX_PAIR else None
        psi, A, trace = minimize(norm, density, params, config, psi0, A0, pinned=pinned, gamma=gamma)
        vortices = detect_vortices(psi)
        logger.info(f"eps={epsilon!r} on {grid.n_theta}x{grid.n_phi}: energy {trace.final.energy.total:.10g}, {len(vortices)} vortices")
        return SweepPoint(
            epsilon, grid.n_theta, trace.final.energy, vortices, trace.termination, trace.iterations,
        )

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = {epsilon: pool.submit(run, epsilon, grid) for epsilon, grid in zip(eps, grids)}
        results = {epsilon: future.result() for epsilon, future in futures.items()}
    return [results[epsilon] for epsilon in eps]


def fit_log_slope(points):
    """Least-squares slope and intercept of total energy against |log eps|."""
    x = np.abs(np.log([point.epsilon for point in points]))
    y = np.array([point.energy.total for point in points])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
