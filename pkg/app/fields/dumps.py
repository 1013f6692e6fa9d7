"""
Binary field dumps and CSV export.

Layout: magic b"FGL1", then little-endian uint32 N_theta, N_phi and the
field kind tag, then little-endian float64 node values in row-major
(theta-major) order. Complex scalars store (re, im) per node; one-forms
store (A_theta, A_phi) per node.
"""

import csv
from pathlib import Path

import numpy as np

from main.enums import FieldKind
from main.exceptions import FGLError

from .lattice import OneFormField, PeriodicGrid, ScalarField

MAGIC = b"FGL1"
_HEADER = np.dtype('<u4')
_VALUE = np.dtype('<f8')


class DumpFormatError(FGLError, ValueError):
    """A dump file is truncated or has the wrong header."""


def _kind_and_payload(field):
    if isinstance(field, OneFormField):
        payload = np.stack([np.real(field.theta_component), np.real(field.phi_component)], axis=-1)
        return FieldKind.ONE_FORM, payload
    if isinstance(field, ScalarField):
        if field.is_complex:
            return FieldKind.COMPLEX_SCALAR, np.stack([field.values.real, field.values.imag], axis=-1)
        return FieldKind.REAL_SCALAR, field.values
    raise TypeError(f"cannot dump {type(field).__name__}")


def dump_bytes(field):
    kind, payload = _kind_and_payload(field)
    header = np.array([field.grid.n_theta, field.grid.n_phi, kind.value], dtype=_HEADER)
    return MAGIC + header.tobytes() + np.ascontiguousarray(payload, dtype=_VALUE).tobytes()


def load_bytes(data):
    if len(data) < 16 or data[:4] != MAGIC:
        raise DumpFormatError("not an FGL1 field dump")
    n_theta, n_phi, tag = (int(v) for v in np.frombuffer(data, dtype=_HEADER, count=3, offset=4))
    try:
        kind = FieldKind(tag)
    except ValueError:
        raise DumpFormatError(f"unknown field kind tag {tag}")
    grid = PeriodicGrid(n_theta, n_phi)
    per_node = 1 if kind is FieldKind.REAL_SCALAR else 2
    expected = 16 + grid.n_theta * grid.n_phi * per_node * _VALUE.itemsize
    if len(data) != expected:
        raise DumpFormatError(f"dump has {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype=_VALUE, offset=16).astype(float)
    if kind is FieldKind.REAL_SCALAR:
        return ScalarField(grid, values.reshape(grid.shape))
    values = values.reshape(grid.shape + (2,))
    if kind is FieldKind.COMPLEX_SCALAR:
        return ScalarField(grid, values[..., 0] + 1j * values[..., 1])
    return OneFormField(grid, values[..., 0].copy(), values[..., 1].copy())


def write_field(path, field):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_bytes(field))
    return path


def read_field(path):
    return load_bytes(Path(path).read_bytes())


def write_field_csv(path, field):
    """One row per node: theta, phi and the field components."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = field.grid
    theta, phi = grid.mesh()
    if isinstance(field, OneFormField):
        header = ['theta', 'phi', 'a_theta', 'a_phi']
        columns = [np.real(field.theta_component), np.real(field.phi_component)]
    elif field.is_complex:
        header = ['theta', 'phi', 're', 'im']
        columns = [field.values.real, field.values.imag]
    else:
        header = ['theta', 'phi', 'value']
        columns = [field.values]
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for index in np.ndindex(grid.shape):
            writer.writerow([repr(float(theta[index])), repr(float(phi[index]))] + [repr(float(c[index])) for c in columns])
    return path
