"""
Gauge transformations and the Coulomb projection.

coulomb_project splits A = A_C + d chi with div_sigma A_C = 0 and chi of
mean zero. Constant densities use the flat Hodge projection in Fourier
space; nonconstant ones solve the weighted Poisson problem
div_sigma d chi = div_sigma A by preconditioned conjugate gradients. The
harmonic part (the grid means of A) is never removed.
"""

import logging
from typing import NamedTuple

import numpy as np
import scipy.fft
from django.conf import settings
from scipy.sparse.linalg import LinearOperator, cg

from main.exceptions import GridMismatchError, IterativeFailure

from .lattice import GaugeFunction, OneFormField, ScalarField, same_grid
from .operators import d_phi, d_theta, exterior_d, symbol, weighted_divergence

logger = logging.getLogger(__name__)


class CoulombDecomposition(NamedTuple):
    coulomb: OneFormField
    gauge: GaugeFunction
    harmonic: tuple


def gauge_transform(psi, A, chi):
    """(psi, A) -> (e^{i chi} psi, A + d chi)."""
    grid = same_grid(psi, A, chi)
    return ScalarField(grid, np.exp(1j * chi.values) * psi.values), A + exterior_d(chi)


def _squared_symbol(grid):
    s_theta = symbol(grid.n_theta, grid.h_theta)[:, None]
    s_phi = symbol(grid.n_phi, grid.h_phi)[None, :]
    return s_theta, s_phi, s_theta ** 2 + s_phi ** 2


def _spectral_potential(a_theta, a_phi, grid):
    workers = settings.FGL['THREADS']
    s_theta, s_phi, denominator = _squared_symbol(grid)
    numerator = -1j * (
        s_theta * scipy.fft.fft2(a_theta, workers=workers)
        + s_phi * scipy.fft.fft2(a_phi, workers=workers)
    )
    chi_hat = np.divide(numerator, denominator, out=np.zeros(grid.shape, dtype=complex), where=denominator > 0)
    return scipy.fft.ifft2(chi_hat, workers=workers).real


def _weighted_potential(a_theta, a_phi, grid, sigma):
    workers = settings.FGL['THREADS']
    shape = grid.shape
    size = grid.n_theta * grid.n_phi
    _, _, denominator = _squared_symbol(grid)
    inverse_symbol = np.divide(1.0, float(sigma.mean()) * denominator, out=np.zeros(shape), where=denominator > 0)

    def apply(x):
        v = x.reshape(shape)
        return -(d_theta(sigma * d_theta(v, grid), grid) + d_phi(sigma * d_phi(v, grid), grid)).ravel()

    def precondition(r):
        r_hat = scipy.fft.fft2(r.reshape(shape), workers=workers)
        return scipy.fft.ifft2(inverse_symbol * r_hat, workers=workers).real.ravel()

    rhs = -(d_theta(sigma * a_theta, grid) + d_phi(sigma * a_phi, grid)).ravel()
    if not np.any(rhs):
        return np.zeros(shape)
    operator = LinearOperator((size, size), matvec=apply, dtype=float)
    preconditioner = LinearOperator((size, size), matvec=precondition, dtype=float)
    solution, info = cg(
        operator,
        rhs,
        rtol=settings.FGL['CG_RTOL'],
        atol=0.0,
        maxiter=settings.FGL['CG_MAXITER'],
        M=preconditioner,
    )
    if info != 0:
        residual = float(np.linalg.norm(apply(solution) - rhs) / np.linalg.norm(rhs))
        logger.error(f"weighted Poisson solve stalled on {shape[0]}x{shape[1]} grid")
        raise IterativeFailure("Coulomb projection: CG did not converge", residual=residual, iterations=info)
    return solution.reshape(shape)


def coulomb_project(A, sigma=None):
    """
    Decompose A = A_C + d chi on the Coulomb slice div_sigma A_C = 0.

    ``sigma`` is the measure density on A's grid (None for sigma = 1).
    Returns the Coulomb representative, the mean-zero chi and the
    harmonic part (mean of A_theta, mean of A_phi).
    """
    grid = A.grid
    a_theta = np.real(A.theta_component)
    a_phi = np.real(A.phi_component)
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.shape != grid.shape:
            raise GridMismatchError(f"density of shape {sigma.shape} on a {grid.shape} grid")
    if sigma is None or np.ptp(sigma) == 0.0:
        chi = _spectral_potential(a_theta, a_phi, grid)
    else:
        chi = _weighted_potential(a_theta, a_phi, grid, sigma)
    gauge = GaugeFunction.centered(grid, chi)
    coulomb = OneFormField(grid, a_theta, a_phi) - exterior_d(gauge)
    return CoulombDecomposition(coulomb, gauge, A.harmonic_part())


def coulomb_residual(A, sigma=None):
    """max |div_sigma A| over the grid."""
    return float(np.max(np.abs(weighted_divergence(A.theta_component, A.phi_component, A.grid, sigma))))


def fix_gauge(psi, A, sigma=None):
    """Move (psi, A) to its Coulomb representative: (e^{-i chi} psi, A - d chi)."""
    decomposition = coulomb_project(A, sigma)
    psi_c = ScalarField(psi.grid, np.exp(-1j * decomposition.gauge.values) * psi.values)
    return psi_c, decomposition.coulomb, decomposition
