"""
Polyline 1-currents on the torus and their Finsler length.

Vertices are unwrapped on input, so a polyline may wind around the torus;
consecutive vertices are joined by the straight lift in the universal cover.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from fields.lattice import TWO_PI

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _wraps_to_start(vertices):
    gap = vertices[-1] - vertices[0]
    return bool(np.all(np.abs(np.mod(gap + np.pi, TWO_PI) - np.pi) <= 1e-12))


@dataclass(frozen=True, eq=False)
class PolylineCurrent:
    """
    Ordered vertices (theta, phi) with an integer multiplicity.

    A negative multiplicity is the same curve traversed backwards.
    ``closed`` defaults to whether the last vertex coincides with the first
    modulo 2 pi; an explicit value must agree with that.
    """

    vertices: np.ndarray
    multiplicity: int = 1
    closed: bool = None

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValidationError("polyline vertices must be (theta, phi) pairs")
        if not np.all(np.isfinite(vertices)):
            raise ValidationError("polyline vertices must be finite")
        vertices = np.unwrap(vertices, axis=0, period=TWO_PI)
        if len(vertices) > 1:
            keep = np.concatenate([[True], np.any(np.diff(vertices, axis=0) != 0, axis=1)])
            vertices = vertices[keep]
        if len(vertices) < 2:
            raise ValidationError("a polyline needs at least two distinct vertices")
        if int(self.multiplicity) != self.multiplicity or self.multiplicity == 0:
            raise ValidationError(f"multiplicity must be a nonzero integer, got {self.multiplicity!r}")
        closed = _wraps_to_start(vertices)
        if self.closed is not None and bool(self.closed) != closed:
            raise ValidationError(f"closed={self.closed} does not match the first and last vertices")
        vertices.setflags(write=False)
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'multiplicity', int(self.multiplicity))
        object.__setattr__(self, 'closed', closed)

    def reversed(self):
        return PolylineCurrent(self.vertices[::-1], self.multiplicity, self.closed)

    def oriented_vertices(self):
        """Vertices in the direction of traversal (reversed for negative multiplicity)."""
        return self.vertices if self.multiplicity > 0 else self.vertices[::-1]


def finsler_length(norm, curve):
    """
    |m| times the sum over segments of the integral of F(x(t), x'(t)) dt.

    Five-point Gauss-Legendre per segment; zero-length segments are skipped.
    """
    vertices = curve.oriented_vertices()
    step = np.diff(vertices, axis=0)
    moving = np.any(step != 0, axis=1)
    start, step = vertices[:-1][moving], step[moving]
    t = 0.5 * (_GAUSS_NODES + 1.0)
    theta = start[:, 0:1] + t * step[:, 0:1]
    phi = start[:, 1:2] + t * step[:, 1:2]
    speed = norm.localize(theta, phi).value(step[:, 0:1], step[:, 1:2])
    length = np.sum(0.5 * _GAUSS_WEIGHTS * speed)
    return float(abs(curve.multiplicity) * length)


def write_polyline_csv(path, curve):
    """Header rows (multiplicity, closed) then one (theta, phi) row per vertex."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['multiplicity', 'closed'])
        writer.writerow([curve.multiplicity, 'true' if curve.closed else 'false'])
        writer.writerow(['theta', 'phi'])
        for theta, phi in curve.vertices:
            writer.writerow([repr(float(theta)), repr(float(phi))])
    return path


def read_polyline_csv(path):
    with Path(path).open(newline='') as handle:
        rows = [row for row in csv.reader(handle) if row]
    if len(rows) < 3 or [c.strip() for c in rows[0]] != ['multiplicity', 'closed'] or [c.strip() for c in rows[2]] != ['theta', 'phi']:
        raise ValidationError(f"{path}: expected 'multiplicity,closed' and 'theta,phi' header rows")
    try:
        multiplicity = int(rows[1][0])
        flag = rows[1][1].strip().lower() if len(rows[1]) > 1 else ''
        vertices = [(float(row[0]), float(row[1])) for row in rows[3:]]
    except (ValueError, IndexError) as error:
        raise ValidationError(f"{path}: malformed polyline row ({error})")
    if flag not in ('', 'true', 'false'):
        raise ValidationError(f"{path}: closed must be true or false, got {flag!r}")
    closed = None if flag == '' else flag == 'true'
    return PolylineCurrent(np.array(vertices, dtype=float).reshape(-1, 2), multiplicity, closed)
