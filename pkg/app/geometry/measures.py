"""
Busemann-Hausdorff and Holmes-Thompson volume densities.

In two dimensions the area of a star-shaped unit ball is
1/2 * integral of r(omega)^2 over the circle, with r = 1/F(u) (primal)
or r = 1/F*(u) (dual). The composite trapezoid rule on equally spaced
angles is spectrally accurate for smooth norms.
"""

import logging
import threading

import numpy as np
from django.conf import settings

from fields.lattice import ScalarField
from main.enums import MeasureKind
from main.exceptions import DomainError, GridMismatchError

from .norms import Minkowski, TWO_PI, as_result

logger = logging.getLogger(__name__)

# Number of (point, angle) evaluations per vectorized block.
_BLOCK = 1 << 20


def _polar_area(local, dual, samples):
    omega = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    u1, u2 = np.cos(omega), np.sin(omega)
    radial = local.dual_value(u1, u2) if dual else local.value(u1, u2)
    return 0.5 * np.sum(1.0 / radial ** 2, axis=-1) * (TWO_PI / samples)


def _pushforward_area(local, samples):
    omega = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    u1, u2 = np.cos(omega), np.sin(omega)
    g11, g12, g22 = local.tensor(u1, u2)
    det = g11 * g22 - g12 * g12
    return 0.5 * np.sum(det / local.value(u1, u2) ** 2, axis=-1) * (TWO_PI / samples)


def _areas(norm, x, samples, area):
    """Evaluate ``area`` once per distinct coefficient pair among the points x."""
    theta, phi = np.broadcast_arrays(np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float))
    shape = theta.shape
    # The local norm depends on x only through (a(x), b(x)).
    coefficients = np.stack([np.ravel(norm.a(theta, phi)), np.ravel(norm.b(theta, phi))], axis=1)
    pairs, inverse = np.unique(coefficients, axis=0, return_inverse=True)
    values = np.empty(len(pairs))
    block = max(1, _BLOCK // samples)
    for start in range(0, len(pairs), block):
        chunk = pairs[start:start + block]
        local = Minkowski(chunk[:, 0:1], chunk[:, 1:2], norm.drift)
        values[start:start + block] = area(local)
    return values[np.reshape(inverse, -1)].reshape(shape)


def unit_ball_volume(norm, x, dual=False, samples=None):
    """Area of {F(x, .) < 1}, or of {F*(x, .) < 1} when ``dual``."""
    samples = max(samples or settings.FGL['BALL_SAMPLES'], 2048)
    return as_result(_areas(norm, x, samples, lambda local: _polar_area(local, dual, samples)))


def dual_ball_volume_by_pushforward(norm, x, samples=None):
    """
    Area of the dual unit ball as the integral of det g over the primal ball.

    The Legendre map carries B_F onto B*_F, so no dual Newton solve is
    needed; used to cross-check the Holmes-Thompson density.
    """
    samples = max(samples or settings.FGL['BALL_SAMPLES'], 2048)
    return as_result(_areas(norm, x, samples, lambda local: _pushforward_area(local, samples)))


def bh_density(norm, x):
    """Busemann-Hausdorff: vol(unit disk) / vol(B_F(x))."""
    return as_result(np.pi / np.asarray(unit_ball_volume(norm, x)))


def ht_density(norm, x):
    """Holmes-Thompson: vol(B*_F(x)) / vol(unit disk)."""
    return as_result(np.asarray(unit_ball_volume(norm, x, dual=True)) / np.pi)


class MeasureDensity:
    """
    sigma(x) of the chosen canonical measure, cached per grid.

    The cache is filled once per grid shape and handed out read-only, so a
    density can be shared between concurrent sweep points.
    """

    def __init__(self, norm, kind=MeasureKind.BUSEMANN_HAUSDORFF):
        self.norm = norm
        self.kind = MeasureKind(kind)
        self._cache = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"MeasureDensity({self.kind.value}, {self.norm.describe()})"

    @property
    def is_constant(self):
        return self.norm.is_homogeneous

    def sigma(self, theta, phi):
        if self.kind is MeasureKind.BUSEMANN_HAUSDORFF:
            return bh_density(self.norm, (theta, phi))
        return ht_density(self.norm, (theta, phi))

    def on_grid(self, grid):
        key = (grid.n_theta, grid.n_phi)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            if self.is_constant:
                values = np.full(grid.shape, float(self.sigma(0.0, 0.0)))
            else:
                theta, phi = grid.mesh()
                values = np.asarray(self.sigma(theta, phi), dtype=float)
            if not np.all(values > 0):
                raise DomainError(f"{self!r} is not positive on the {key[0]}x{key[1]} grid")
            values.setflags(write=False)
            self._cache[key] = values
            logger.debug(f"cached {self!r} on {key[0]}x{key[1]} grid")
            return values


def integrate(density, f):
    """Midpoint rule: sum f(x_i) sigma(x_i) h_theta h_phi."""
    if not isinstance(f, ScalarField):
        raise TypeError("integrate expects a ScalarField")
    sigma = density.on_grid(f.grid)
    if f.values.shape != sigma.shape:
        raise GridMismatchError(f"field shape {f.values.shape} does not match density grid {sigma.shape}")
    total = np.sum(f.values * sigma) * f.grid.cell_area
    return as_result(total) if not np.iscomplexobj(total) else complex(total)
