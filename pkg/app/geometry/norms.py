"""
Finsler norms on the flat torus.

Two families are supported, both with exact derivatives in the fibre:

* quadratic: F(x, y) = sqrt(a(x) y_theta^2 + b(x) y_phi^2)
* Randers:   F(x, y) = sqrt(a(x) y_theta^2 + b(x) y_phi^2) + beta . y

A FinslerNorm holds the coefficient profiles; ``localize`` freezes it at a
batch of base points and returns a Minkowski object whose methods are
vectorized over numpy arrays. The public operations at the bottom of the
module take TangentVector / CotangentVector values whose components may be
floats or arrays of samples.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from main.enums import NormKind
from main.exceptions import DomainError, IterativeFailure

from .profiles import CoefficientProfile

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def as_result(value):
    """Unwrap 0-d arrays to floats so scalar calls return plain numbers."""
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True, eq=False)
class TangentVector:
    y_theta: float
    y_phi: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'theta', np.mod(self.theta, TWO_PI))
        object.__setattr__(self, 'phi', np.mod(self.phi, TWO_PI))

    def scaled(self, factor):
        return TangentVector(factor * self.y_theta, factor * self.y_phi, self.theta, self.phi)


@dataclass(frozen=True, eq=False)
class CotangentVector:
    xi_theta: float
    xi_phi: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'theta', np.mod(self.theta, TWO_PI))
        object.__setattr__(self, 'phi', np.mod(self.phi, TWO_PI))

    def pair(self, y):
        """The duality pairing xi(y)."""
        return as_result(self.xi_theta * y.y_theta + self.xi_phi * y.y_phi)


class Minkowski:
    """
    F(y) = sqrt(a y1^2 + b y2^2) + beta1 y1 + beta2 y2 at a batch of points.

    ``a`` and ``b`` are arrays (or floats) of the coefficients at the base
    points; every method broadcasts them against its arguments. With
    beta = 0 the norm is quadratic and every map has a closed form.
    """

    def __init__(self, a, b, beta=(0.0, 0.0)):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.beta = (float(beta[0]), float(beta[1]))

    @property
    def is_quadratic(self):
        return self.beta == (0.0, 0.0)

    def base(self, y1, y2):
        return np.sqrt(self.a * y1 * y1 + self.b * y2 * y2)

    def value(self, y1, y2):
        alpha = self.base(y1, y2)
        if self.is_quadratic:
            return alpha
        return alpha + self.beta[0] * y1 + self.beta[1] * y2

    def gradient(self, y1, y2):
        """dF/dy, extended by 0 at the origin."""
        alpha = self.base(y1, y2)
        num1, num2 = np.broadcast_arrays(self.a * y1, self.b * y2)
        with np.errstate(divide='ignore', invalid='ignore'):
            l1 = np.divide(num1, alpha, out=np.zeros(alpha.shape), where=alpha > 0)
            l2 = np.divide(num2, alpha, out=np.zeros(alpha.shape), where=alpha > 0)
        return l1 + self.beta[0], l2 + self.beta[1]

    def legendre(self, y1, y2):
        """L(y) = d(F^2/2)/dy = F dF/dy; L(0) = 0."""
        if self.is_quadratic:
            xi1, xi2 = np.broadcast_arrays(self.a * y1, self.b * y2)
            return np.array(xi1), np.array(xi2)
        value = self.value(y1, y2)
        l1, l2 = self.gradient(y1, y2)
        return value * l1, value * l2

    def tensor(self, y1, y2):
        """Components (g11, g12, g22) of the fundamental tensor."""
        if not self.is_quadratic and np.any(self.base(y1, y2) == 0):
            raise DomainError("fundamental tensor of a Randers norm is undefined at y = 0")
        return self._tensor(y1, y2)

    def _tensor(self, y1, y2):
        if self.is_quadratic:
            shape = np.broadcast(self.a, self.b, y1, y2).shape
            return (
                np.broadcast_to(self.a, shape).copy(),
                np.zeros(shape),
                np.broadcast_to(self.b, shape).copy(),
            )
        with np.errstate(divide='ignore', invalid='ignore'):
            alpha = self.base(y1, y2)
            value = alpha + self.beta[0] * y1 + self.beta[1] * y2
            ay1 = self.a * y1
            by2 = self.b * y2
            l1 = ay1 / alpha + self.beta[0]
            l2 = by2 / alpha + self.beta[1]
            alpha3 = alpha ** 3
            g11 = l1 * l1 + value * (self.a / alpha - ay1 * ay1 / alpha3)
            g12 = l1 * l2 - value * ay1 * by2 / alpha3
            g22 = l2 * l2 + value * (self.b / alpha - by2 * by2 / alpha3)
        return g11, g12, g22

    def legendre_inverse(self, xi1, xi2):
        """
        Solve L(y) = xi.

        Closed form g^{-1} xi for quadratic norms. Otherwise damped Newton
        from y0 = A^{-1} xi with an Armijo rule on the residual norm.
        Covectors below FGL['ZERO_COVECTOR'] map to 0.
        """
        xi1, xi2, a, b = (np.array(v, dtype=float) for v in np.broadcast_arrays(xi1, xi2, self.a, self.b))
        if self.is_quadratic:
            return xi1 / a, xi2 / b

        opts = settings.FGL
        local = Minkowski(a, b, self.beta)
        size = np.hypot(xi1, xi2)
        active = size >= opts['ZERO_COVECTOR']
        # absolute NEWTON_TOL, tightened to 1e-10 relative for small covectors
        tol = np.maximum(64.0 * np.finfo(float).eps * size, np.minimum(opts['NEWTON_TOL'], 1e-10 * size))
        y1 = np.where(active, xi1 / a, 0.0)
        y2 = np.where(active, xi2 / b, 0.0)

        def residual(z1, z2):
            l1, l2 = local.legendre(z1, z2)
            return l1 - xi1, l2 - xi2

        r1, r2 = residual(y1, y2)
        rnorm = np.hypot(r1, r2)
        iterations = 0
        while iterations < opts['NEWTON_MAX_ITERS']:
            pending = active & (rnorm > tol)
            if not pending.any():
                break
            iterations += 1
            g11, g12, g22 = local._tensor(y1, y2)
            with np.errstate(divide='ignore', invalid='ignore'):
                det = g11 * g22 - g12 * g12
                d1 = -(g22 * r1 - g12 * r2) / det
                d2 = -(g11 * r2 - g12 * r1) / det

            step = np.ones(y1.shape)
            accepted = np.zeros(y1.shape, dtype=bool)
            for _ in range(opts['NEWTON_MAX_HALVINGS']):
                with np.errstate(invalid='ignore', over='ignore'):
                    c1 = y1 + step * d1
                    c2 = y2 + step * d2
                    q1, q2 = residual(c1, c2)
                    qnorm = np.hypot(q1, q2)
                    ok = pending & ~accepted & (qnorm <= (1.0 - 1e-4 * step) * rnorm)
                y1 = np.where(ok, c1, y1)
                y2 = np.where(ok, c2, y2)
                r1 = np.where(ok, q1, r1)
                r2 = np.where(ok, q2, r2)
                rnorm = np.where(ok, qnorm, rnorm)
                accepted |= ok
                waiting = pending & ~accepted
                if not waiting.any():
                    break
                step = np.where(waiting, 0.5 * step, step)

        failed = active & ~(rnorm <= tol)
        if failed.any():
            worst = float(np.nanmax(np.where(failed, rnorm, 0.0)))
            logger.error(f"Legendre inverse did not converge at {int(failed.sum())} sample(s)")
            raise IterativeFailure("Legendre inverse: Newton did not converge", residual=worst, iterations=iterations)
        return y1, y2

    def dual_value(self, xi1, xi2):
        """F*(xi) = F(L^{-1} xi)."""
        if self.is_quadratic:
            return np.sqrt(xi1 * xi1 / self.a + xi2 * xi2 / self.b)
        y1, y2 = self.legendre_inverse(xi1, xi2)
        return self.value(y1, y2)

    def dual_half_square(self, xi1, xi2):
        """
        (F*(xi)^2 / 2, L^{-1} xi).

        Uses xi(y) - F(y)^2 / 2 at y = L^{-1} xi, which is stationary in y,
        so a Newton error in y enters the value only at second order.
        """
        y1, y2 = self.legendre_inverse(xi1, xi2)
        if self.is_quadratic:
            return 0.5 * (xi1 * y1 + xi2 * y2), y1, y2
        value = self.value(y1, y2)
        return xi1 * y1 + xi2 * y2 - 0.5 * value * value, y1, y2


@dataclass(frozen=True)
class FinslerNorm:
    """Coefficient profiles a(x), b(x) of the base quadratic form."""

    a: CoefficientProfile
    b: CoefficientProfile

    kind = None

    def __post_init__(self):
        for name in ('a', 'b'):
            value = getattr(self, name)
            if not isinstance(value, CoefficientProfile):
                try:
                    value = CoefficientProfile.constant(float(value))
                except (TypeError, ValueError):
                    raise ValidationError(f"coefficient {name} must be a number or profile")
                object.__setattr__(self, name, value)

    @property
    def drift(self):
        return (0.0, 0.0)

    @property
    def is_quadratic(self):
        return self.drift == (0.0, 0.0)

    @property
    def reversible(self):
        return self.is_quadratic

    @property
    def is_homogeneous(self):
        """True when the norm does not depend on the base point."""
        return self.a.is_constant and self.b.is_constant

    def localize(self, theta, phi):
        return Minkowski(self.a(theta, phi), self.b(theta, phi), self.drift)

    @cached_property
    def equivalence_constants(self):
        """
        (c1, c2) with c1 |xi| <= F*(x, xi) <= c2 |xi| for the Euclidean |.|.

        Angular sweep over a grid of base points, widened by
        FGL['EQUIVALENCE_MARGIN'].
        """
        opts = settings.FGL
        points = np.linspace(0.0, TWO_PI, opts['EQUIVALENCE_POINTS'], endpoint=False)
        angles = np.linspace(0.0, TWO_PI, opts['EQUIVALENCE_ANGLES'], endpoint=False)
        theta, phi = np.meshgrid(points, points, indexing='ij')
        local = self.localize(theta[..., None], phi[..., None])
        ratios = local.dual_value(np.cos(angles), np.sin(angles))
        margin = opts['EQUIVALENCE_MARGIN']
        c1 = float(ratios.min()) * (1.0 - margin)
        c2 = float(ratios.max()) * (1.0 + margin)
        logger.debug(f"equivalence constants for {self.describe()}: [{c1:.6g}, {c2:.6g}]")
        return c1, c2

    def describe(self):
        return f"{self.kind.value}(a={self.a.to_text()}, b={self.b.to_text()})"


@dataclass(frozen=True)
class QuadraticNorm(FinslerNorm):
    kind = NormKind.QUADRATIC


@dataclass(frozen=True)
class RandersNorm(FinslerNorm):
    """Quadratic base plus a constant drift 1-form beta, strictly inside the dual base ball."""

    beta: tuple = (0.0, 0.0)

    kind = NormKind.RANDERS

    def __post_init__(self):
        super().__post_init__()
        try:
            beta = (float(self.beta[0]), float(self.beta[1]))
        except (TypeError, ValueError, IndexError):
            raise ValidationError("Randers drift must have two components")
        object.__setattr__(self, 'beta', beta)
        # sup_x beta1^2 / a(x) + beta2^2 / b(x), bounded through the profile minima
        strength = beta[0] ** 2 / self.a.minimum + beta[1] ** 2 / self.b.minimum
        if not strength < 1.0:
            raise ValidationError(f"Randers drift too strong: |beta|_* = {np.sqrt(strength):.6g} must be < 1")

    @property
    def drift(self):
        return self.beta

    def describe(self):
        return f"randers(a={self.a.to_text()}, b={self.b.to_text()}, beta=({self.beta[0]!r}, {self.beta[1]!r}))"


def build_norm(kind, a, b, beta=(0.0, 0.0)):
    """Construct a norm from config values; raises ValidationError."""
    kind = NormKind(kind)
    a = a if isinstance(a, CoefficientProfile) else CoefficientProfile.parse(a)
    b = b if isinstance(b, CoefficientProfile) else CoefficientProfile.parse(b)
    if kind is NormKind.QUADRATIC:
        if tuple(float(v) for v in beta) != (0.0, 0.0):
            raise ValidationError("a quadratic norm has no drift; use kind = randers")
        return QuadraticNorm(a, b)
    return RandersNorm(a, b, tuple(beta))


def euclidean():
    return QuadraticNorm(1.0, 1.0)


def eval_norm(norm, y):
    """F(x, y); exactly 0 iff y = 0."""
    return as_result(norm.localize(y.theta, y.phi).value(y.y_theta, y.y_phi))


def fundamental_tensor(norm, y):
    """g_ij(x, y) as an array of shape (..., 2, 2)."""
    g11, g12, g22 = norm.localize(y.theta, y.phi).tensor(y.y_theta, y.y_phi)
    matrix = np.stack([np.stack([g11, g12], axis=-1), np.stack([g12, g22], axis=-1)], axis=-2)
    return matrix


def legendre_forward(norm, y):
    xi1, xi2 = norm.localize(y.theta, y.phi).legendre(y.y_theta, y.y_phi)
    return CotangentVector(as_result(xi1), as_result(xi2), y.theta, y.phi)


def legendre_inverse(norm, xi):
    y1, y2 = norm.localize(xi.theta, xi.phi).legendre_inverse(xi.xi_theta, xi.xi_phi)
    return TangentVector(as_result(y1), as_result(y2), xi.theta, xi.phi)


def dual_norm(norm, xi):
    """F*(x, xi) through the Legendre inverse; F*(x, 0) = 0."""
    return as_result(norm.localize(xi.theta, xi.phi).dual_value(xi.xi_theta, xi.xi_phi))


def dual_norm_by_support(norm, xi, samples=None):
    """sup { xi(v) : F(x, v) <= 1 } over a discretized unit sphere."""
    samples = samples or settings.FGL['SUPPORT_SAMPLES']
    omega = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    u1, u2 = np.cos(omega), np.sin(omega)
    theta = np.asarray(xi.theta)[..., None]
    phi = np.asarray(xi.phi)[..., None]
    local = norm.localize(theta, phi)
    pairing = np.asarray(xi.xi_theta)[..., None] * u1 + np.asarray(xi.xi_phi)[..., None] * u2
    support = np.max(pairing / local.value(u1, u2), axis=-1)
    return as_result(np.maximum(support, 0.0))


def fenchel_gap(norm, y, xi):
    """F(y)^2/2 + F*(xi)^2/2 - xi(y) >= 0, with equality iff xi = L(y)."""
    if np.any(np.asarray(y.theta) != np.asarray(xi.theta)) or np.any(np.asarray(y.phi) != np.asarray(xi.phi)):
        raise DomainError("tangent and cotangent vectors live at different base points")
    local = norm.localize(y.theta, y.phi)
    primal = local.value(y.y_theta, y.y_phi)
    dual = local.dual_value(xi.xi_theta, xi.xi_phi)
    return as_result(0.5 * primal ** 2 + 0.5 * dual ** 2 - (xi.xi_theta * y.y_theta + xi.xi_phi * y.y_phi))
