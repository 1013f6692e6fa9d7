"""
Initial configurations in a chosen topological sector.

theta_winding and phi_winding are the pure cycle windings e^{i m theta},
e^{i n phi} with A = 0. vortex_pair places a +1 zero at (pi - s/2, pi) and
a -1 zero at (pi + s/2, pi): the phase is arg((z - z1)/(z - z2)) in the
offset z = (theta - pi) + i (phi - pi), whose branch cut is the segment
between the cores, damped to zero towards the boundary of the fundamental
square so that it is periodic. The modulus is a product of one-vortex
profiles tanh(rho_F / (sqrt 2 eps)).
"""

import logging
from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError
from scipy.ndimage import gaussian_filter

from fields.lattice import OneFormField, ScalarField, TWO_PI
from geometry.norms import euclidean
from main.enums import SectorKind

logger = logging.getLogger(__name__)

# Width in nodes of the smoothing kernel for seeded noise.
NOISE_SMOOTHING = 2.0


@dataclass(frozen=True)
class Sector:
    kind: SectorKind
    winding: int = 1
    separation: float = np.pi

    def __post_init__(self):
        object.__setattr__(self, 'kind', SectorKind(self.kind))
        if int(self.winding) != self.winding:
            raise ValidationError(f"winding must be an integer, got {self.winding!r}")
        object.__setattr__(self, 'winding', int(self.winding))
        separation = float(self.separation)
        if not 0.0 < separation < TWO_PI:
            raise ValidationError(f"vortex separation must lie in (0, 2 pi), got {separation!r}")
        object.__setattr__(self, 'separation', separation)

    @classmethod
    def theta_winding(cls, m=1):
        return cls(SectorKind.THETA_WINDING, winding=m)

    @classmethod
    def phi_winding(cls, n=1):
        return cls(SectorKind.PHI_WINDING, winding=n)

    @classmethod
    def vortex_pair(cls, separation=np.pi):
        return cls(SectorKind.VORTEX_PAIR, separation=separation)

    @property
    def cores(self):
        """((theta, phi, degree), ...) of the prescribed zeros."""
        if self.kind is not SectorKind.VORTEX_PAIR:
            return ()
        half = 0.5 * self.separation
        return ((np.pi - half, np.pi, 1), (np.pi + half, np.pi, -1))

    def describe(self):
        if self.kind is SectorKind.VORTEX_PAIR:
            return f"vortex_pair(separation={self.separation!r})"
        return f"{self.kind.value}({self.winding})"


def _minimal_image(delta):
    return np.mod(delta + np.pi, TWO_PI) - np.pi


def vortex_profile(norm, grid, core, epsilon):
    """tanh(rho_F(core, x) / (sqrt 2 eps)), rho_F measured with F at the core."""
    theta, phi = grid.mesh()
    local = norm.localize(core[0], core[1])
    rho = local.value(_minimal_image(theta - core[0]), _minimal_image(phi - core[1]))
    return ScalarField(grid, np.tanh(rho / (np.sqrt(2.0) * epsilon)))


def _taper(offset, flat):
    """1 on |offset| <= flat, cos^2 down to 0 at |offset| = pi."""
    distance = np.abs(offset)
    ramp = np.clip((distance - flat) / (np.pi - flat), 0.0, 1.0)
    return np.cos(0.5 * np.pi * ramp) ** 2


def pair_phase(grid, separation):
    theta, phi = grid.mesh()
    z = _minimal_image(theta - np.pi) + 1j * _minimal_image(phi - np.pi)
    half = 0.5 * separation
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = (z + half) / (z - half)
    phase = np.angle(np.nan_to_num(ratio))
    cutoff = _taper(z.real, 0.5 * (half + np.pi)) * _taper(z.imag, 0.5 * np.pi)
    return cutoff * phase


def _smooth_noise(grid, rng):
    noise = gaussian_filter(rng.standard_normal(grid.shape), NOISE_SMOOTHING, mode='wrap')
    return noise / np.max(np.abs(noise))


def init_winding(grid, sector, noise=0.0, seed=0, norm=None, epsilon=None):
    """
    (psi, A) in ``sector`` with A = 0 and seeded multiplicative noise.

    ``norm`` and ``epsilon`` shape the vortex cores (Euclidean, 4h by
    default). The noise is smooth, periodic and reproducible from ``seed``.
    """
    if noise < 0:
        raise ValidationError(f"noise amplitude must be nonnegative, got {noise!r}")
    theta, phi = grid.mesh()
    if sector.kind is SectorKind.THETA_WINDING:
        values = np.exp(1j * sector.winding * theta)
    elif sector.kind is SectorKind.PHI_WINDING:
        values = np.exp(1j * sector.winding * phi)
    else:
        norm = norm or euclidean()
        epsilon = epsilon or 4.0 * grid.h_max
        modulus = np.ones(grid.shape)
        for core_theta, core_phi, _ in sector.cores:
            modulus = modulus * vortex_profile(norm, grid, (core_theta, core_phi), epsilon).values
        values = modulus * np.exp(1j * pair_phase(grid, sector.separation))
    if noise > 0:
        rng = np.random.default_rng(seed)
        values = values * (1.0 + noise * (_smooth_noise(grid, rng) + 1j * _smooth_noise(grid, rng)))
    logger.debug(f"initialized {sector.describe()} on {grid.n_theta}x{grid.n_phi}, noise {noise}, seed {seed}")
    return ScalarField(grid, values), OneFormField.zeros(grid)


def pinning_mask(grid, sector):
    """3x3 node patches around the nearest nodes of the prescribed cores."""
    mask = np.zeros(grid.shape, dtype=bool)
    for core_theta, core_phi, _ in sector.cores:
        i, j = grid.nearest_node(core_theta, core_phi)
        rows = np.arange(i - 1, i + 2) % grid.n_theta
        cols = np.arange(j - 1, j + 2) % grid.n_phi
        mask[np.ix_(rows, cols)] = True
    return mask
