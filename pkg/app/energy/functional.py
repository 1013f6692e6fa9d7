"""
The Finslerian Ginzburg-Landau energy on the discrete torus.

    G[psi, A] = sum over nodes of
        ( 1/2 |D_A psi|^2_{F*} + 1/(2 lam) (dA)^2 + 1/(4 eps^2) (1 - |psi|^2)^2 ) sigma h^2

with |eta|^2_{F*} = F*(Re eta)^2 + F*(Im eta)^2 and the Euclidean co-metric
for the Maxwell term. Gradients are the exact derivatives of this discrete
sum, taken as Riesz representatives in L^2(sigma): the kinetic part goes
through the Legendre map because d(F*^2/2)/dxi = L^{-1}(xi), and the
stencil adjoint is the sigma-weighted divergence.
"""

import logging
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from django.core.exceptions import ValidationError
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from fields.lattice import OneFormField, ScalarField, same_grid
from fields.operators import covariant_derivative, curl, d_phi, d_theta, exterior_d, weighted_divergence
from geometry.norms import as_result
from main.enums import CoMetric
from main.exceptions import DomainError, GridMismatchError, IterativeFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GLParams:
    lam: float
    epsilon: float

    def __post_init__(self):
        for name in ('lam', 'epsilon'):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} must be a positive number, got {value!r}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    maxwell: float
    potential: float
    total: float

    @classmethod
    def from_parts(cls, kinetic, maxwell, potential):
        kinetic, maxwell, potential = float(kinetic), float(maxwell), float(potential)
        return cls(kinetic, maxwell, potential, kinetic + maxwell + potential)

    def as_row(self):
        return asdict(self)


class GLGradient(NamedTuple):
    """L^2(sigma) gradient: complex scalar part and one-form part."""

    psi: ScalarField
    A: OneFormField


def _check_cometric(gamma):
    if gamma is not None and CoMetric(gamma) is not CoMetric.EUCLIDEAN:
        raise ValidationError(f"unsupported background co-metric {gamma!r}")


def _sigma(density, grid):
    sigma = density.on_grid(grid)
    if sigma.shape != grid.shape:
        raise GridMismatchError(f"density on {sigma.shape} used with a {grid.shape} grid")
    return sigma


def local_norm(norm, grid):
    theta, phi = grid.mesh()
    return norm.localize(theta, phi)


def _conorm_half_square(local, eta_theta, eta_phi):
    """
    1/2 |eta|^2_{F*} per node and Y = L^{-1}(Re eta) + i L^{-1}(Im eta).
    """
    h_re, y1_re, y2_re = local.dual_half_square(np.real(eta_theta), np.real(eta_phi))
    h_im, y1_im, y2_im = local.dual_half_square(np.imag(eta_theta), np.imag(eta_phi))
    return h_re + h_im, y1_re + 1j * y1_im, y2_re + 1j * y2_im


def complex_conorm_sq(norm, eta):
    """F*(x, Re eta)^2 + F*(x, Im eta)^2 for a CotangentVector with complex components."""
    local = norm.localize(eta.theta, eta.phi)
    half, _, _ = _conorm_half_square(local, np.asarray(eta.xi_theta, dtype=complex), np.asarray(eta.xi_phi, dtype=complex))
    return as_result(2.0 * half)


def _assemble(norm, density, gamma, params, psi, A, with_gradient):
    _check_cometric(gamma)
    grid = same_grid(psi, A)
    sigma = _sigma(density, grid)
    weight = sigma * grid.cell_area
    values = psi.values

    eta = covariant_derivative(psi, A)
    half, y_theta, y_phi = _conorm_half_square(local_norm(norm, grid), eta.theta_component, eta.phi_component)
    c = curl(A).values
    defect = 1.0 - np.abs(values) ** 2

    energy = EnergyBreakdown.from_parts(
        np.sum(half * weight),
        np.sum(c * c * weight) / (2.0 * params.lam),
        np.sum(defect * defect * weight) / (4.0 * params.epsilon ** 2),
    )
    if not with_gradient:
        return energy, None

    a_theta, a_phi = np.real(A.theta_component), np.real(A.phi_component)
    g_psi = (
        -weighted_divergence(y_theta, y_phi, grid, sigma)
        + 1j * (a_theta * y_theta + a_phi * y_phi)
        - defect * values / params.epsilon ** 2
    )
    sc = sigma * c
    g_theta = np.imag(np.conj(y_theta) * values) + d_phi(sc, grid) / (params.lam * sigma)
    g_phi = np.imag(np.conj(y_phi) * values) - d_theta(sc, grid) / (params.lam * sigma)
    return energy, GLGradient(ScalarField(grid, g_psi), OneFormField(grid, g_theta, g_phi))


def gl_energy(norm, density, gamma, params, psi, A):
    """Midpoint quadrature of the three GL densities against sigma."""
    energy, _ = _assemble(norm, density, gamma, params, psi, A, with_gradient=False)
    return energy


def gl_gradient(norm, density, gamma, params, psi, A):
    _, gradient = _assemble(norm, density, gamma, params, psi, A, with_gradient=True)
    return gradient


def energy_and_gradient(norm, density, gamma, params, psi, A):
    """Both at once; the Legendre inverses are shared."""
    return _assemble(norm, density, gamma, params, psi, A, with_gradient=True)


def pairing(sigma, grid, first, second):
    """
    Re <first, second> in L^2(sigma) for (scalar, one-form) pairs.

    Either scalar part may be None to pair only the one-form parts.
    """
    weight = sigma * grid.cell_area
    total = 0.0
    if first[0] is not None and second[0] is not None:
        total += np.sum(np.real(np.conj(first[0].values) * second[0].values) * weight)
    total += np.sum(
        (np.real(first[1].theta_component) * np.real(second[1].theta_component)
         + np.real(first[1].phi_component) * np.real(second[1].phi_component)) * weight
    )
    return float(total)


def gradient_norm(sigma, grid, gradient):
    return float(np.sqrt(max(pairing(sigma, grid, gradient, gradient), 0.0)))


def finsler_gradient_field(norm, u):
    """
    Nodewise L^{-1}(du), the Finsler gradient of a real scalar field.

    The result holds tangent components (y_theta, y_phi) in a OneFormField
    container; du below FGL['ZERO_COVECTOR'] maps to 0.
    """
    if u.is_complex:
        raise TypeError("finsler_gradient_field expects a real scalar field")
    du = exterior_d(u)
    y1, y2 = local_norm(norm, u.grid).legendre_inverse(du.theta_component, du.phi_component)
    return OneFormField(u.grid, y1, y2)


def finsler_laplacian(norm, density, u):
    """(1/sigma) div(sigma grad_F u), with the stencil adjoint as divergence."""
    Y = finsler_gradient_field(norm, u)
    sigma = _sigma(density, u.grid)
    return ScalarField(u.grid, weighted_divergence(Y.theta_component, Y.phi_component, u.grid, sigma))


def dirichlet_energy(norm, density, u):
    du = exterior_d(u)
    half, _, _ = local_norm(norm, u.grid).dual_half_square(du.theta_component, du.phi_component)
    return float(np.sum(half * _sigma(density, u.grid)) * u.grid.cell_area)


def diamagnetic_residual(norm, psi, A):
    """
    Pointwise |D_A psi|_{F*} - F*(x, d|psi|) and its discretization slack.

    In the continuum d|psi| = Re(conj(u) D_A psi) with u = psi/|psi|, and
    for reversible norms F*(Re(conj(u) eta)) <= |eta|_{F*}. The discrete
    residual is therefore bounded below by -delta_h with
    delta_h = max F*(d|psi| - Re(conj(u) D_A psi)); at zeros of psi the
    defect is d|psi| itself. Returns (residual ScalarField, delta_h).
    """
    if not norm.reversible:
        raise DomainError("the diamagnetic inequality needs a reversible norm")
    grid = same_grid(psi, A)
    local = local_norm(norm, grid)
    eta = covariant_derivative(psi, A)
    conorm = np.sqrt(2.0 * _conorm_half_square(local, eta.theta_component, eta.phi_component)[0])
    modulus = np.abs(psi.values)
    d_modulus = exterior_d(ScalarField(grid, modulus))
    residual = conorm - local.dual_value(d_modulus.theta_component, d_modulus.phi_component)

    phase = np.divide(psi.values, modulus, out=np.zeros(grid.shape, dtype=complex), where=modulus > 0)
    e_theta = d_modulus.theta_component - np.real(np.conj(phase) * eta.theta_component)
    e_phi = d_modulus.phi_component - np.real(np.conj(phase) * eta.phi_component)
    slack = float(np.max(local.dual_value(e_theta, e_phi)))
    return ScalarField(grid, residual), slack


def _difference_matrix(n, h):
    offsets = [-2, -1, 1, 2]
    coefficients = [1.0, -8.0, 8.0, -1.0]
    eye = [sp.eye(n, k=k, format='csr') + sp.eye(n, k=k - n if k > 0 else k + n, format='csr') for k in offsets]
    return sum(c * e for c, e in zip(coefficients, eye)) / (12.0 * h)


def _stiffness(norm, density, grid):
    if not norm.is_quadratic:
        raise DomainError("the Finsler Laplacian is linear only for quadratic norms")
    theta, phi = grid.mesh()
    sigma = _sigma(density, grid).ravel()
    a = norm.a(theta, phi).ravel()
    b = norm.b(theta, phi).ravel()
    D_theta = sp.kron(_difference_matrix(grid.n_theta, grid.h_theta), sp.eye(grid.n_phi), format='csr')
    D_phi = sp.kron(sp.eye(grid.n_theta), _difference_matrix(grid.n_phi, grid.h_phi), format='csr')
    K = D_theta.T @ sp.diags(sigma / a) @ D_theta + D_phi.T @ sp.diags(sigma / b) @ D_phi
    return K.tocsc(), sp.diags(sigma).tocsc()


def laplacian_spectral_gap(norm, density, grid):
    """
    Smallest nonzero eigenvalue of -Delta_F on the grid (quadratic norms).

    The stencil also annihilates the Nyquist checkerboards, so the first
    few eigenvalues are zero; the gap is the first one clearly above them.
    """
    K, M = _stiffness(norm, density, grid)
    try:
        eigenvalues = eigsh(K, k=8, M=M, sigma=-1e-2, which='LM', return_eigenvectors=False)
    except ArpackNoConvergence as error:
        logger.error(f"eigsh did not converge on {grid.n_theta}x{grid.n_phi} grid")
        raise IterativeFailure("spectral gap: ARPACK did not converge", iterations=len(error.eigenvalues))
    eigenvalues = np.sort(eigenvalues)
    positive = eigenvalues[eigenvalues > 1e-8 * eigenvalues[-1]]
    if positive.size == 0:
        raise IterativeFailure("spectral gap: no positive eigenvalue among the lowest modes")
    gap = float(positive[0])
    logger.debug(f"spectral gap {gap:.10g} for {norm.describe()} on {grid.n_theta}x{grid.n_phi}")
    return gap


def poincare_constant(norm, density, grid):
    """C with ||u - mean u|| <= C ||grad_F u|| in L^2(sigma): 1/sqrt(gap)."""
    return 1.0 / np.sqrt(laplacian_spectral_gap(norm, density, grid))
