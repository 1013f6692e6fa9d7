"""
Closed-form coefficient profiles on the torus.

A profile is a positive smooth function c(theta, phi) written in the
experiment file either as a bare float or as ``name(value, amplitude)``.
Profiles are evaluated on demand, so the geometry is exact at any point.
"""

import re
from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError

from main.enums import ProfileKind

_PROFILE_RE = re.compile(r'^\s*(?P<name>[a-z_]+)\s*\((?P<args>[^()]*)\)\s*$')


@dataclass(frozen=True)
class CoefficientProfile:
    """c(theta, phi) = value * (1 + amplitude * shape(theta, phi))."""

    kind: ProfileKind
    value: float
    amplitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'value', float(self.value))
        object.__setattr__(self, 'amplitude', float(self.amplitude))
        if not np.isfinite(self.value) or self.value <= 0:
            raise ValidationError(f"coefficient must be positive, got {self.value!r}")
        if not np.isfinite(self.amplitude) or abs(self.amplitude) >= 1:
            raise ValidationError(f"profile amplitude must satisfy |amp| < 1, got {self.amplitude!r}")
        if self.kind is ProfileKind.CONSTANT and self.amplitude != 0.0:
            raise ValidationError("constant profile takes no amplitude")

    @classmethod
    def constant(cls, value):
        return cls(ProfileKind.CONSTANT, value)

    @classmethod
    def parse(cls, text):
        """Parse ``2.0``, ``constant(2.0)`` or ``cos_theta(2.0, 0.3)``."""
        text = str(text).strip()
        match = _PROFILE_RE.match(text)
        if match is None:
            try:
                return cls.constant(float(text))
            except ValueError:
                raise ValidationError(f"cannot parse coefficient {text!r}")
        try:
            kind = ProfileKind(match.group('name'))
        except ValueError:
            known = ', '.join(member.value for member in ProfileKind)
            raise ValidationError(f"unknown profile {match.group('name')!r} (known: {known})")
        try:
            args = [float(arg) for arg in match.group('args').split(',') if arg.strip()]
        except ValueError:
            raise ValidationError(f"profile arguments must be numbers in {text!r}")
        expected = 1 if kind is ProfileKind.CONSTANT else 2
        if len(args) != expected:
            raise ValidationError(f"profile {kind.value} takes {expected} argument(s), got {len(args)}")
        return cls(kind, *args)

    def to_text(self):
        if self.kind is ProfileKind.CONSTANT:
            return repr(self.value)
        return f"{self.kind.value}({self.value!r}, {self.amplitude!r})"

    @property
    def is_constant(self):
        return self.kind is ProfileKind.CONSTANT or self.amplitude == 0.0

    @property
    def minimum(self):
        return self.value * (1.0 - abs(self.amplitude))

    @property
    def maximum(self):
        return self.value * (1.0 + abs(self.amplitude))

    def shape(self, theta, phi):
        if self.kind is ProfileKind.COS_THETA:
            return np.cos(theta) + 0.0 * phi
        if self.kind is ProfileKind.COS_PHI:
            return np.cos(phi) + 0.0 * theta
        if self.kind is ProfileKind.SIN_PRODUCT:
            return np.sin(theta) * np.sin(phi)
        return np.zeros(np.broadcast(theta, phi).shape)

    def __call__(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        if self.is_constant:
            return np.full(np.broadcast(theta, phi).shape, self.value)
        return self.value * (1.0 + self.amplitude * self.shape(theta, phi))
