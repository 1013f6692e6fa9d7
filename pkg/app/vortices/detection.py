"""
Vortex detection, cycle windings and the Jacobian of a complex field.

Plaquette (i, j) has corners (i, j), (i+1, j), (i+1, j+1), (i, j+1) in that
order, which is counterclockwise in the (theta, phi) plane. Its degree is
the sum of principal-value phase increments along the four edges over 2 pi.
"""

import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from fields.lattice import TWO_PI, OneFormField, ScalarField, same_grid
from fields.operators import covariant_derivative, curl
from main.exceptions import DomainError

logger = logging.getLogger(__name__)

# Bilinear circle of radius h/2 around a node that is itself a zero.
_CIRCLE_POINTS = 16


@dataclass(frozen=True)
class Vortex:
    theta: float
    phi: float
    degree: int

    def as_row(self):
        return {'theta': self.theta, 'phi': self.phi, 'degree': self.degree}


@dataclass(frozen=True)
class VortexSet:
    vortices: tuple = ()

    def __len__(self):
        return len(self.vortices)

    def __iter__(self):
        return iter(self.vortices)

    @property
    def degrees(self):
        return [vortex.degree for vortex in self.vortices]

    @property
    def total_degree(self):
        return int(sum(self.degrees))

    def as_rows(self):
        return [vortex.as_row() for vortex in self.vortices]


def _increment(a, b):
    """Principal-value phase increment from a to b."""
    return np.angle(b * np.conj(a))


def plaquette_degrees(values):
    """Integer degree per plaquette; plaquettes with a zero corner get 0."""
    a = values
    b = np.roll(values, -1, axis=0)
    c = np.roll(b, -1, axis=1)
    d = np.roll(values, -1, axis=1)
    total = _increment(a, b) + _increment(b, c) + _increment(c, d) + _increment(d, a)
    degrees = np.rint(total / TWO_PI).astype(int)
    zero = np.abs(values) < settings.FGL['ZERO_MODULUS']
    touched = zero | np.roll(zero, 1, axis=0) | np.roll(zero, 1, axis=1) | np.roll(np.roll(zero, 1, axis=0), 1, axis=1)
    degrees[touched] = 0
    return degrees


def _bilinear(values, x, y):
    """Periodic bilinear interpolation at fractional indices (x, y)."""
    n_theta, n_phi = values.shape
    i0 = np.floor(x).astype(int)
    j0 = np.floor(y).astype(int)
    tx = x - i0
    ty = y - j0
    i1 = (i0 + 1) % n_theta
    j1 = (j0 + 1) % n_phi
    i0 %= n_theta
    j0 %= n_phi
    return (
        (1 - tx) * (1 - ty) * values[i0, j0]
        + tx * (1 - ty) * values[i1, j0]
        + tx * ty * values[i1, j1]
        + (1 - tx) * ty * values[i0, j1]
    )


def node_degrees(values):
    """Degree of each zero node from a bilinear circle of radius h/2."""
    degrees = np.zeros(values.shape, dtype=int)
    zero_nodes = np.argwhere(np.abs(values) < settings.FGL['ZERO_MODULUS'])
    if not len(zero_nodes):
        return degrees
    angles = np.linspace(0.0, TWO_PI, _CIRCLE_POINTS, endpoint=False)
    for i, j in zero_nodes:
        ring = _bilinear(values, i + 0.5 * np.cos(angles), j + 0.5 * np.sin(angles))
        total = np.sum(_increment(ring, np.roll(ring, -1)))
        degrees[i, j] = int(np.rint(total / TWO_PI))
    logger.debug(f"resolved {len(zero_nodes)} zero node(s) by bilinear subdivision")
    return degrees


def _periodic_labels(mask):
    """8-connected labels with clusters merged across the periodic seams."""
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return labels, 0
    rows, cols = [], []
    for shift in (-1, 0, 1):
        # last row touches the first, last column the first; rolls cover the diagonals
        seam_theta = (labels[-1, :], np.roll(labels[0, :], shift))
        seam_phi = (labels[:, -1], np.roll(labels[:, 0], shift))
        for left, right in (seam_theta, seam_phi):
            both = (left > 0) & (right > 0)
            rows.extend(left[both] - 1)
            cols.extend(right[both] - 1)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(count, count))
    components, merged = connected_components(graph, directed=False)
    out = np.zeros_like(labels)
    out[labels > 0] = merged[labels[labels > 0] - 1] + 1
    return out, components


def _circular_mean(angles, weights):
    return float(np.mod(np.angle(np.sum(weights * np.exp(1j * angles))), TWO_PI))


def detect_vortices(psi):
    """
    Vortices of psi: clusters of nonzero plaquette or zero-node degrees.

    Clusters are 8-connected and wrap around the torus; each becomes one
    vortex at the |degree|-weighted circular mean of its charges, with the
    summed degree. Clusters of net degree zero are dropped.
    """
    grid = psi.grid
    values = np.asarray(psi.values, dtype=complex)
    plaquettes = plaquette_degrees(values)
    nodes = node_degrees(values)
    labels, count = _periodic_labels((plaquettes != 0) | (nodes != 0))
    if count == 0:
        return VortexSet()

    theta_nodes, phi_nodes = grid.mesh()
    charges = np.concatenate([plaquettes.ravel(), nodes.ravel()])
    thetas = np.concatenate([(theta_nodes + 0.5 * grid.h_theta).ravel(), theta_nodes.ravel()])
    phis = np.concatenate([(phi_nodes + 0.5 * grid.h_phi).ravel(), phi_nodes.ravel()])
    owners = np.concatenate([labels.ravel(), labels.ravel()])

    vortices = []
    for label in range(1, count + 1):
        members = (owners == label) & (charges != 0)
        degree = int(charges[members].sum())
        if degree == 0:
            continue
        weights = np.abs(charges[members])
        vortices.append(Vortex(
            _circular_mean(thetas[members], weights),
            _circular_mean(phis[members], weights),
            degree,
        ))
    vortices.sort(key=lambda v: (v.theta, v.phi))
    return VortexSet(tuple(vortices))


def _cycle_winding(values, axis):
    tolerance = settings.FGL['ZERO_MODULUS']
    lines = values if axis == 0 else values.T
    for offset in range(lines.shape[1]):
        line = lines[:, offset]
        if np.all(np.abs(line) >= tolerance):
            return int(np.rint(np.sum(_increment(line, np.roll(line, -1))) / TWO_PI))
    raise DomainError("every coordinate cycle passes through a zero of psi")


def cycle_windings(psi):
    """(theta winding, phi winding) along the coordinate cycles through node 0."""
    values = np.asarray(psi.values, dtype=complex)
    return _cycle_winding(values, 0), _cycle_winding(values, 1)


def supercurrent(psi, A):
    """j = Im(conj(psi) D_A psi) per component."""
    eta = covariant_derivative(psi, A)
    conj = np.conj(psi.values)
    return np.imag(conj * eta.theta_component), np.imag(conj * eta.phi_component)


def jacobian_field(psi, A):
    """
    Vorticity 1/2 curl <i psi, D_A psi>, set to 0 where psi vanishes.

    The current is that of psi itself rather than of psi/|psi|, so the
    vorticity is spread over the core instead of concentrated on it.
    """
    grid = same_grid(psi, A)
    j_theta, j_phi = supercurrent(psi, A)
    J = 0.5 * curl(OneFormField(grid, j_theta, j_phi)).values
    J[np.abs(psi.values) < settings.FGL['ZERO_MODULUS']] = 0.0
    return ScalarField(grid, J)


def _periodic_distance(grid, theta, phi):
    theta_nodes, phi_nodes = grid.mesh()
    d_theta = np.mod(theta_nodes - theta + np.pi, TWO_PI) - np.pi
    d_phi = np.mod(phi_nodes - phi + np.pi, TWO_PI) - np.pi
    return np.hypot(d_theta, d_phi)


def core_mask(grid, vortices, radius=None):
    """Nodes within ``radius`` (default 3h) of any vortex."""
    radius = 3.0 * grid.h_max if radius is None else radius
    mask = np.zeros(grid.shape, dtype=bool)
    for vortex in vortices:
        mask |= _periodic_distance(grid, vortex.theta, vortex.phi) <= radius
    return mask


def vortex_charge(J, center, radius):
    """Integral of J over the periodic disk of ``radius`` around (theta, phi)."""
    inside = _periodic_distance(J.grid, center[0], center[1]) <= radius
    return float(np.sum(J.values[inside]) * J.grid.cell_area)


def gamma_limit_energy(norm, vortices):
    """
    pi sum |d| over the vortex set.

    Point vortices have no normal direction, so the Finsler weight F(x, nu)
    is 1 and ``norm`` only enters for line currents (finsler_length).
    """
    return float(np.pi * sum(abs(degree) for degree in vortices.degrees))
