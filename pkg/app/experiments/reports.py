"""
Artifacts of a run, all written below one output directory.

CSV is the only tabular format. Floats are written with repr so a rerun
with the same config and seed reproduces every file byte for byte.
"""

import csv
import logging
from pathlib import Path

import numpy as np

from fields.dumps import write_field, write_field_csv
from main.exceptions import DomainError

logger = logging.getLogger(__name__)


def format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


class OutputDirectory:
    """Resolves artifact names and refuses any that would leave the directory."""

    def __init__(self, root):
        self.root = Path(root).resolve()

    def __str__(self):
        return str(self.root)

    def path(self, name):
        path = (self.root / name).resolve()
        if not path.is_relative_to(self.root):
            raise DomainError(f"{name!r} is outside the output directory {self.root}")
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_csv(self, name, rows, fieldnames=None):
        """One dict per row; the header comes from ``fieldnames`` or the first row."""
        rows = list(rows)
        if fieldnames is None:
            fieldnames = list(rows[0]) if rows else []
        path = self.path(name)
        with path.open('w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([format_cell(row[key]) for key in fieldnames])
        logger.debug(f"wrote {len(rows)} rows to {path}")
        return path

    def write_text(self, name, text):
        path = self.path(name)
        path.write_text(text)
        return path

    def write_field(self, name, field):
        return write_field(self.path(name), field)

    def write_field_csv(self, name, field):
        return write_field_csv(self.path(name), field)


TRACE_COLUMNS = ['iter', 'kind', 'kinetic', 'maxwell', 'potential', 'total', 'grad_norm', 'step']
VORTEX_COLUMNS = ['theta', 'phi', 'degree']
SWEEP_COLUMNS = ['epsilon', 'N', 'total', 'kinetic', 'maxwell', 'potential', 'vortex_count', 'energy_over_logeps']
TORUS_COLUMNS = [
    'winding', 'number', 'quadrature', 'printed_formula', 'intermediate_formula',
    'matches_printed', 'matches_intermediate',
]
CHECK_COLUMNS = ['suite', 'passed', 'measured', 'tolerance', 'detail']


def summary_line(energy, vortices, windings, termination, iterations):
    degrees = ' '.join(f"{degree:+d}" for degree in vortices.degrees) or '-'
    return (
        f"{termination.value} after {iterations} iterations: "
        f"total={energy.total!r} kinetic={energy.kinetic!r} maxwell={energy.maxwell!r} potential={energy.potential!r} "
        f"vortices={len(vortices)} degrees={degrees} windings=({windings[0]}, {windings[1]})"
    )
