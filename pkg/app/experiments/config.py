"""
Experiment files: sectioned INI text validated section by section.

Every value is checked by the django Form of its section before anything
is computed. Problems come back together as ``path:line: [section] key:
message`` diagnostics inside one ConfigurationError. ``to_text`` writes
the canonical form (every key, floats as repr), and parsing it gives back
an equal ExperimentConfig.
"""

import configparser
import io
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path

from django.conf import settings

from geometry.measures import MeasureDensity
from main.exceptions import ConfigurationError
from solver.minimize import SolverConfig

from .forms import SECTION_FORMS

logger = logging.getLogger(__name__)

_SECTION_RE = re.compile(r'^\[(?P<name>[^\]]+)\]')
_KEY_RE = re.compile(r'^(?P<key>[^\s=:#;\[][^=:]*?)\s*[=:]')


def default_sections():
    return {
        'norm': {'kind': 'quadratic', 'a': '1.0', 'b': '1.0', 'beta_theta': '0.0', 'beta_phi': '0.0'},
        'measure': {'kind': 'busemann-hausdorff'},
        'grid': {'n_theta': '64', 'n_phi': '64'},
        'params': {'lam': '1.0', 'epsilon': '0.125'},
        'sector': {'kind': 'vortex_pair', 'winding': '1', 'separation': '3.141592653589793',
                   'noise': '0.0', 'pin_cores': 'true'},
        'solver': {'max_iters': '50000', 'grad_tol': '1e-08', 'step_rule': 'bb', 'fixed_step': '',
                   'gauge_reproject_every': '100', 'checkpoint_every': '0', 'min_step': '1e-14'},
        'sweep': {'eps_list': '0.25, 0.125, 0.0625', 'resolution': '4.0', 'n_list': ''},
        'torus': {'m': '1', 'n': '1'},
        'output': {'directory': settings.FGL['OUTPUT_DIR'], 'seed': '0'},
    }


@dataclass(frozen=True)
class ExperimentConfig:
    norm: object
    measure: object
    grid: object
    params: object
    sector: object
    noise: float
    pin_cores: bool
    solver: SolverConfig
    eps_list: tuple
    schedule: object
    torus: tuple
    output_dir: str
    seed: int

    def density(self):
        return MeasureDensity(self.norm, self.measure)

    def with_overrides(self, output_dir=None, seed=None):
        """Copy with ``--out`` / ``--seed`` applied."""
        changes = {}
        if output_dir is not None:
            changes['output_dir'] = str(output_dir)
        if seed is not None:
            changes['seed'] = int(seed)
            changes['solver'] = replace(self.solver, rng_seed=int(seed))
        return replace(self, **changes)

    def to_sections(self):
        solver = self.solver
        n_list = self.schedule.n_list
        return {
            'norm': {
                'kind': self.norm.kind.value,
                'a': self.norm.a.to_text(),
                'b': self.norm.b.to_text(),
                'beta_theta': repr(self.norm.drift[0]),
                'beta_phi': repr(self.norm.drift[1]),
            },
            'measure': {'kind': self.measure.value},
            'grid': {'n_theta': str(self.grid.n_theta), 'n_phi': str(self.grid.n_phi)},
            'params': {'lam': repr(self.params.lam), 'epsilon': repr(self.params.epsilon)},
            'sector': {
                'kind': self.sector.kind.value,
                'winding': str(self.sector.winding),
                'separation': repr(self.sector.separation),
                'noise': repr(self.noise),
                'pin_cores': 'true' if self.pin_cores else 'false',
            },
            'solver': {
                'max_iters': str(solver.max_iters),
                'grad_tol': repr(solver.grad_tol),
                'step_rule': solver.step_rule.value,
                'fixed_step': '' if solver.fixed_step is None else repr(solver.fixed_step),
                'gauge_reproject_every': str(solver.gauge_reproject_every),
                'checkpoint_every': str(solver.checkpoint_every),
                'min_step': repr(solver.min_step),
            },
            'sweep': {
                'eps_list': ', '.join(repr(eps) for eps in self.eps_list),
                'resolution': repr(self.schedule.resolution),
                'n_list': '' if n_list is None else ', '.join(str(n) for n in n_list),
            },
            'torus': {'m': str(self.torus[0]), 'n': str(self.torus[1])},
            'output': {'directory': self.output_dir, 'seed': str(self.seed)},
        }

    def to_text(self):
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(self.to_sections())
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()


def _line_index(text):
    """(section, key) -> line number; (section, None) is the header line."""
    lines = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        match = _SECTION_RE.match(line)
        if match:
            section = match.group('name').strip()
            lines.setdefault((section, None), number)
            continue
        match = _KEY_RE.match(line)
        if match and section is not None:
            lines.setdefault((section, match.group('key').strip().lower()), number)
    return lines


class _Diagnostics(list):
    def __init__(self, source, text):
        super().__init__()
        self.source = source
        self.lines = _line_index(text)

    def add(self, section, key, message):
        line = self.lines.get((section, key)) or self.lines.get((section, None)) or 1
        where = f"[{section}] {key}" if key else f"[{section}]"
        self.append(f"{self.source}:{line}: {where}: {message}")


def _read_ini(text, source):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as error:
        raise ConfigurationError([f"{source}:{error.lineno}: expected a [section] header before {error.line.strip()!r}"])
    except configparser.ParsingError as error:
        raise ConfigurationError([f"{source}:{lineno}: cannot parse {line.strip()!r}" for lineno, line in error.errors])
    except configparser.Error as error:
        lineno = getattr(error, 'lineno', None) or 1
        raise ConfigurationError([f"{source}:{lineno}: {error.message}"])
    return parser


def parse_config(text, source='<config>'):
    """Validate experiment text and return an ExperimentConfig; raises ConfigurationError."""
    parser = _read_ini(text, source)
    diagnostics = _Diagnostics(source, text)
    if parser.defaults():
        diagnostics.add(parser.default_section, None, "a DEFAULT section is not supported")

    for section in parser.sections():
        if section not in SECTION_FORMS:
            diagnostics.add(section, None, f"unknown section (known: {', '.join(SECTION_FORMS)})")
            continue
        for key in parser[section]:
            if key not in SECTION_FORMS[section].base_fields:
                diagnostics.add(section, key, "unknown key")

    defaults = default_sections()
    cleaned = {}
    for section, form_class in SECTION_FORMS.items():
        data = dict(defaults[section])
        if parser.has_section(section):
            data.update((key, value) for key, value in parser[section].items() if key in data)
        form = form_class(data)
        if not form.is_valid():
            for field, errors in form.errors.items():
                for message in errors:
                    diagnostics.add(section, None if field == '__all__' else field, message)
            continue
        cleaned[section] = form.cleaned_data

    if diagnostics:
        raise ConfigurationError(diagnostics)

    solver = cleaned['solver']
    output = cleaned['output']
    config = ExperimentConfig(
        norm=cleaned['norm']['norm'],
        measure=cleaned['measure']['kind'],
        grid=cleaned['grid']['grid'],
        params=cleaned['params']['params'],
        sector=cleaned['sector']['sector'],
        noise=cleaned['sector']['noise'],
        pin_cores=cleaned['sector']['pin_cores'],
        solver=SolverConfig(
            max_iters=solver['max_iters'],
            grad_tol=solver['grad_tol'],
            step_rule=solver['step_rule'],
            fixed_step=solver['fixed_step'],
            gauge_reproject_every=solver['gauge_reproject_every'],
            checkpoint_every=solver['checkpoint_every'],
            min_step=solver['min_step'],
            rng_seed=output['seed'],
        ),
        eps_list=cleaned['sweep']['eps_list'],
        schedule=cleaned['sweep']['schedule'],
        torus=(cleaned['torus']['m'], cleaned['torus']['n']),
        output_dir=output['directory'],
        seed=output['seed'],
    )
    logger.debug(f"parsed {source}: {config.norm.describe()}, {config.sector.describe()}")
    return config


def load_config(path=None):
    """Read ``path``, or the defaults when no file is given."""
    if path is None:
        return parse_config('', source='<defaults>')
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as error:
        raise ConfigurationError([f"{path}: cannot read config: {error.strerror}"])
    return parse_config(text, source=str(path))
