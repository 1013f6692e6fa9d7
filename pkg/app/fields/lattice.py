"""
The periodic grid on the flat torus and the field types that live on it.

Axis 0 is theta, axis 1 is phi; node (i, j) sits at (i h_theta, j h_phi).
Fields are value objects: operators return new fields.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from django.core.exceptions import ValidationError

from main.exceptions import GridMismatchError, NonFiniteFieldError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    n_theta: int
    n_phi: int

    def __post_init__(self):
        for name in ('n_theta', 'n_phi'):
            value = getattr(self, name)
            if int(value) != value or value < 8 or value % 2:
                raise ValidationError(f"{name} must be an even integer >= 8, got {value!r}")
            object.__setattr__(self, name, int(value))

    @classmethod
    def square(cls, n):
        return cls(n, n)

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @property
    def h_theta(self):
        return TWO_PI / self.n_theta

    @property
    def h_phi(self):
        return TWO_PI / self.n_phi

    @property
    def h_max(self):
        return max(self.h_theta, self.h_phi)

    @property
    def cell_area(self):
        return self.h_theta * self.h_phi

    @cached_property
    def theta(self):
        return np.arange(self.n_theta) * self.h_theta

    @cached_property
    def phi(self):
        return np.arange(self.n_phi) * self.h_phi

    def mesh(self):
        return np.meshgrid(self.theta, self.phi, indexing='ij')

    def sample(self, function):
        theta, phi = self.mesh()
        return np.asarray(function(theta, phi))

    def nearest_node(self, theta, phi):
        i = int(np.rint(np.mod(theta, TWO_PI) / self.h_theta)) % self.n_theta
        j = int(np.rint(np.mod(phi, TWO_PI) / self.h_phi)) % self.n_phi
        return i, j


def check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError(f"{what} contains NaN or Inf")


def same_grid(*fields):
    grids = {field.grid for field in fields}
    if len(grids) > 1:
        shapes = ', '.join(f"{grid.n_theta}x{grid.n_phi}" for grid in grids)
        raise GridMismatchError(f"fields live on different grids: {shapes}")
    return grids.pop()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real or complex value per node."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"values of shape {values.shape} on a {self.grid.shape} grid")
        check_finite(values, "scalar field")
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_function(cls, grid, function):
        return cls(grid, grid.sample(function))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, value))

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def modulus(self):
        return ScalarField(self.grid, np.abs(self.values))

    def mean(self):
        return self.values.mean()


@dataclass(frozen=True, eq=False)
class OneFormField:
    """Components (A_theta, A_phi) per node; complex components are allowed."""

    grid: PeriodicGrid
    theta_component: np.ndarray
    phi_component: np.ndarray

    def __post_init__(self):
        for name in ('theta_component', 'phi_component'):
            values = np.asarray(getattr(self, name))
            if values.shape != self.grid.shape:
                raise GridMismatchError(f"{name} of shape {values.shape} on a {self.grid.shape} grid")
            check_finite(values, "one-form")
            object.__setattr__(self, name, values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, c_theta, c_phi):
        return cls(grid, np.full(grid.shape, float(c_theta)), np.full(grid.shape, float(c_phi)))

    @property
    def components(self):
        return self.theta_component, self.phi_component

    def harmonic_part(self):
        """Grid means of both components."""
        return float(np.mean(self.theta_component)), float(np.mean(self.phi_component))

    def __add__(self, other):
        same_grid(self, other)
        return OneFormField(self.grid, self.theta_component + other.theta_component, self.phi_component + other.phi_component)

    def __sub__(self, other):
        same_grid(self, other)
        return OneFormField(self.grid, self.theta_component - other.theta_component, self.phi_component - other.phi_component)

    def scaled(self, factor):
        return OneFormField(self.grid, factor * self.theta_component, factor * self.phi_component)


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """Real chi per node; ``mean_zero`` promises |grid mean| <= 1e-12."""

    grid: PeriodicGrid
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatchError(f"values of shape {values.shape} on a {self.grid.shape} grid")
        check_finite(values, "gauge function")
        if self.mean_zero and abs(values.mean()) > 1e-12:
            raise ValidationError(f"gauge function flagged mean-zero has mean {values.mean():.3e}")
        object.__setattr__(self, 'values', values)

    @classmethod
    def centered(cls, grid, values):
        values = np.asarray(values, dtype=float)
        return cls(grid, values - values.mean(), mean_zero=True)

    @classmethod
    def from_function(cls, grid, function, mean_zero=False):
        values = grid.sample(function).astype(float)
        if mean_zero:
            return cls.centered(grid, values)
        return cls(grid, values)
