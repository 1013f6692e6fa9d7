"""
Discrete differential operators on the periodic grid.

Derivatives use the fourth-order central stencil

    (-f[i+2] + 8 f[i+1] - 8 f[i-1] + f[i-2]) / (12 h)

with periodic wraparound. The stencil is antisymmetric, so the weighted
divergence defined here is exactly minus the adjoint of exterior_d in
L^2(sigma) for any positive sigma, and the two partial stencils commute,
which makes curl(exterior_d(u)) vanish to rounding.
"""

import numpy as np

from .lattice import GaugeFunction, OneFormField, ScalarField, same_grid


def stencil(values, axis, h):
    """Fourth-order periodic central difference along ``axis``."""
    return (
        -np.roll(values, -2, axis=axis)
        + 8.0 * np.roll(values, -1, axis=axis)
        - 8.0 * np.roll(values, 1, axis=axis)
        + np.roll(values, 2, axis=axis)
    ) / (12.0 * h)


def d_theta(values, grid):
    return stencil(values, 0, grid.h_theta)


def d_phi(values, grid):
    return stencil(values, 1, grid.h_phi)


def symbol(n, h):
    """
    Fourier symbol s(k) of the stencil: D e^{ikx} = i s(k) e^{ikx}.

    Vanishes at k = 0 and at the Nyquist mode.
    """
    k = np.fft.fftfreq(n, d=1.0 / n)
    s = (8.0 * np.sin(k * h) - np.sin(2.0 * k * h)) / (6.0 * h)
    s[0] = 0.0
    s[n // 2] = 0.0
    return s


def exterior_d(u):
    """du for a ScalarField (complex allowed) or GaugeFunction."""
    if not isinstance(u, (ScalarField, GaugeFunction)):
        raise TypeError("exterior_d expects a ScalarField or GaugeFunction")
    return OneFormField(u.grid, d_theta(u.values, u.grid), d_phi(u.values, u.grid))


def covariant_derivative(psi, A):
    """D_A psi = (d - iA) psi at nodes."""
    grid = same_grid(psi, A)
    values = psi.values
    return OneFormField(
        grid,
        d_theta(values, grid) - 1j * A.theta_component * values,
        d_phi(values, grid) - 1j * A.phi_component * values,
    )


def curl(A):
    """The single component d_theta A_phi - d_phi A_theta of dA."""
    grid = A.grid
    return ScalarField(grid, d_theta(A.phi_component, grid) - d_phi(A.theta_component, grid))


def weighted_divergence(x_theta, x_phi, grid, sigma=None):
    """(D_theta(sigma X_theta) + D_phi(sigma X_phi)) / sigma on raw arrays."""
    if sigma is None:
        return d_theta(x_theta, grid) + d_phi(x_phi, grid)
    return (d_theta(sigma * x_theta, grid) + d_phi(sigma * x_phi, grid)) / sigma


def divergence(X, sigma=None):
    """
    div_sigma X, the negative L^2(sigma) adjoint of exterior_d.

    ``sigma`` is a density array on X's grid; None means sigma = 1.
    """
    return ScalarField(X.grid, weighted_divergence(X.theta_component, X.phi_component, X.grid, sigma))
