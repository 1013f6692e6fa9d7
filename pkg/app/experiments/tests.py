import csv
import re
from io import StringIO
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest.mock import patch

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from geometry.norms import RandersNorm
from geometry.profiles import CoefficientProfile
from main.enums import MeasureKind, NormKind, SectorKind, StepRule
from main.exceptions import ConfigurationError, DomainError
from vortices.currents import PolylineCurrent, write_polyline_csv

from .checks import SUITES, SuiteResult, run_suites
from .config import load_config, parse_config
from .reports import OutputDirectory, format_cell
from .runs import winding_formulas

FULL_CONFIG = """\
[norm]
kind = randers
a = cos_phi(1.5, 0.2)
b = 1.0
beta_theta = 0.3
beta_phi = -0.2

[measure]
kind = holmes-thompson

[grid]
n_theta = 32
n_phi = 48

[params]
lam = 0.8
epsilon = 0.3

[sector]
kind = theta_winding
winding = -2
noise = 0.05
pin_cores = no

[solver]
max_iters = 500
step_rule = fixed
fixed_step = 0.001
gauge_reproject_every = 0

[sweep]
eps_list = 0.5, 0.35, 0.25
n_list = 52, 72, 102

[torus]
m = 2
n = 3

[output]
directory = runs/first
seed = 12
"""


def write_config(directory, text, name='experiment.ini'):
    path = Path(directory) / name
    path.write_text(text)
    return str(path)


def run_fgl(*args):
    stdout = StringIO()
    call_command('fgl', *args, stdout=stdout, no_color=True)
    return stdout.getvalue()


def read_rows(path):
    with open(path, newline='') as handle:
        return list(csv.DictReader(handle))


class ExperimentConfigTests(SimpleTestCase):
    """Test parsing, defaults and the canonical text form"""

    def test_defaults(self):
        """Test the configuration used when no file is given"""
        config = load_config()
        self.assertEqual(config.norm.kind, NormKind.QUADRATIC)
        self.assertEqual((config.norm.a.value, config.norm.b.value), (1.0, 1.0))
        self.assertEqual(config.measure, MeasureKind.BUSEMANN_HAUSDORFF)
        self.assertEqual(config.grid.shape, (64, 64))
        self.assertEqual((config.params.lam, config.params.epsilon), (1.0, 0.125))
        self.assertEqual(config.sector.kind, SectorKind.VORTEX_PAIR)
        self.assertTrue(config.pin_cores)
        self.assertEqual(config.solver.step_rule, StepRule.BB)
        self.assertEqual(config.eps_list, (0.25, 0.125, 0.0625))
        self.assertEqual(config.seed, 0)

    def test_full_file(self):
        """Test that every section reaches the typed configuration"""
        config = parse_config(FULL_CONFIG)
        self.assertIsInstance(config.norm, RandersNorm)
        self.assertEqual(config.norm.a, CoefficientProfile.parse('cos_phi(1.5, 0.2)'))
        self.assertEqual(config.norm.beta, (0.3, -0.2))
        self.assertEqual(config.measure, MeasureKind.HOLMES_THOMPSON)
        self.assertEqual(config.grid.shape, (32, 48))
        self.assertEqual(config.sector.winding, -2)
        self.assertFalse(config.pin_cores)
        self.assertEqual(config.solver.fixed_step, 0.001)
        self.assertEqual(config.solver.rng_seed, 12)
        self.assertEqual(config.schedule.n_list, (52, 72, 102))
        self.assertEqual(config.torus, (2, 3))
        self.assertEqual(config.output_dir, 'runs/first')

    def test_round_trip(self):
        """Test parse -> serialize -> parse is the identity"""
        for text in ('', FULL_CONFIG):
            config = parse_config(text)
            canonical = config.to_text()
            again = parse_config(canonical)
            self.assertEqual(again, config)
            self.assertEqual(again.to_text(), canonical)

    def test_overrides(self):
        """Test that --out and --seed replace the file values"""
        config = parse_config(FULL_CONFIG).with_overrides('elsewhere', 99)
        self.assertEqual(config.output_dir, 'elsewhere')
        self.assertEqual(config.seed, 99)
        self.assertEqual(config.solver.rng_seed, 99)

    def test_diagnostics_name_line_section_and_key(self):
        """Test that every problem is reported with its location"""
        text = "\n".join([
            "[norm]",
            "kind = quadratic",
            "b = 0",
            "[grid]",
            "n_theta = 7",
            "[bogus]",
            "x = 1",
            "[solver]",
            "step_rule = newton",
            "colour = red",
        ]) + "\n"
        with self.assertRaises(ConfigurationError) as caught:
            parse_config(text, source='bad.ini')
        diagnostics = caught.exception.diagnostics
        for prefix in (
            'bad.ini:3: [norm] b: ',
            'bad.ini:5: [grid] n_theta: ',
            'bad.ini:6: [bogus]: unknown section',
            'bad.ini:9: [solver] step_rule: ',
            'bad.ini:10: [solver] colour: unknown key',
        ):
            self.assertTrue(any(d.startswith(prefix) for d in diagnostics), f"{prefix} not in {diagnostics}")

    def test_empty_eps_list_rejected(self):
        """Test that an empty sweep list is a configuration error"""
        with self.assertRaises(ConfigurationError) as caught:
            parse_config("[sweep]\neps_list =\n", source='sweep.ini')
        self.assertTrue(caught.exception.diagnostics[0].startswith('sweep.ini:2: [sweep] eps_list: '))

    def test_cross_field_errors(self):
        """Test drift strength, unresolved schedules and missing fixed steps"""
        cases = {
            "[norm]\nkind = randers\nbeta_theta = 1.5\n": '[norm] beta_theta',
            "[norm]\nbeta_phi = 0.5\n": '[norm] kind',
            "[sweep]\neps_list = 0.5, 0.25, 0.125\nn_list = 52, 64, 202\n": '[sweep] n_list',
            "[solver]\nstep_rule = fixed\n": '[solver] fixed_step',
            "[sector]\nseparation = 7.0\n": '[sector] separation',
            "[sector]\npin_cores = maybe\n": '[sector] pin_cores',
        }
        for text, where in cases.items():
            with self.assertRaises(ConfigurationError, msg=text) as caught:
                parse_config(text)
            self.assertTrue(any(where in d for d in caught.exception.diagnostics), caught.exception.diagnostics)

    def test_resolution_violations_per_epsilon(self):
        """Test one diagnostic per unresolved eps"""
        with self.assertRaises(ConfigurationError) as caught:
            parse_config("[sweep]\neps_list = 0.5, 0.25, 0.125\nn_list = 16, 16, 16\n")
        self.assertEqual(len([d for d in caught.exception.diagnostics if 'eps=' in d]), 3)

    def test_syntax_errors(self):
        """Test that INI syntax errors carry the line number"""
        with self.assertRaises(ConfigurationError) as caught:
            parse_config("[norm]\nkind quadratic\n", source='syntax.ini')
        self.assertTrue(caught.exception.diagnostics[0].startswith('syntax.ini:2: '))
        with self.assertRaises(ConfigurationError) as caught:
            parse_config("kind = quadratic\n", source='header.ini')
        self.assertTrue(caught.exception.diagnostics[0].startswith('header.ini:1: '))

    def test_missing_file(self):
        """Test that an unreadable path is a configuration error"""
        with self.assertRaises(ConfigurationError):
            load_config('/nonexistent/experiment.ini')


class OutputDirectoryTests(SimpleTestCase):
    """Test artifact paths and CSV formatting"""

    def test_paths_stay_inside(self):
        """Test that names escaping the directory are refused"""
        with TemporaryDirectory() as directory:
            output = OutputDirectory(directory)
            self.assertEqual(output.path('a/b.csv'), Path(directory).resolve() / 'a' / 'b.csv')
            with self.assertRaises(DomainError):
                output.path('../escape.csv')
            with self.assertRaises(DomainError):
                output.path('/tmp/escape.csv')

    def test_cells(self):
        """Test repr floats, integers and booleans"""
        self.assertEqual(format_cell(0.1), '0.1')
        self.assertEqual(format_cell(np.float64(1e-17)), '1e-17')
        self.assertEqual(format_cell(np.int64(3)), '3')
        self.assertEqual(format_cell(True), 'true')
        self.assertEqual(format_cell('descent'), 'descent')


class TorusExampleTests(SimpleTestCase):
    """Test the pure winding energies against both closed forms"""

    def run_example(self, directory, a, b):
        path = write_config(directory, f"[norm]\na = {a}\nb = {b}\n[grid]\nn_theta = 128\nn_phi = 128\n")
        output = run_fgl('torus-example', '--config', path, '--out', str(Path(directory) / 'out'))
        rows = read_rows(Path(directory) / 'out' / 'torus_example.csv')
        return output, {row['winding']: row for row in rows}

    def test_formulas(self):
        """Test the printed and intermediate closed forms"""
        self.assertEqual(winding_formulas(1.0, 1.0, 1, 'theta'), winding_formulas(1.0, 1.0, 1, 'phi'))
        printed, intermediate = winding_formulas(2.0, 1.0, 1, 'theta')
        self.assertAlmostEqual(printed, 2 * np.pi ** 2 * np.sqrt(2.0))
        self.assertAlmostEqual(intermediate, np.pi ** 2 * np.sqrt(2.0))
        self.assertEqual(winding_formulas(2.0, 1.0, 0, 'theta'), (0.0, 0.0))

    def test_isotropic(self):
        """Test 2 pi^2 for a = b = 1, with all three values agreeing"""
        with TemporaryDirectory() as directory:
            output, rows = self.run_example(directory, 1.0, 1.0)
        for row in rows.values():
            self.assertAlmostEqual(float(row['quadrature']) / (2 * np.pi ** 2), 1.0, delta=1e-6)
            self.assertEqual(row['matches_printed'], 'true')
            self.assertEqual(row['matches_intermediate'], 'true')
        self.assertNotIn('MISMATCH', output)

    def test_anisotropic(self):
        """Test a = 2, b = 1: the theta formula mismatch is flagged, phi agrees"""
        with TemporaryDirectory() as directory:
            with self.assertLogs('experiments.runs', level='WARNING') as logs:
                output, rows = self.run_example(directory, 2.0, 1.0)
        theta, phi = rows['theta'], rows['phi']
        self.assertAlmostEqual(float(theta['quadrature']) / (np.pi ** 2 * np.sqrt(2.0)), 1.0, delta=1e-6)
        self.assertEqual(theta['matches_printed'], 'false')
        self.assertEqual(theta['matches_intermediate'], 'true')
        self.assertAlmostEqual(float(phi['quadrature']) / (2 * np.pi ** 2 * np.sqrt(2.0)), 1.0, delta=1e-6)
        self.assertEqual(phi['matches_printed'], 'true')
        self.assertIn('MISMATCH printed', output)
        self.assertEqual(len(logs.records), 1)

    def test_randers_unsupported(self):
        """Test that a non-quadratic norm is refused"""
        with TemporaryDirectory() as directory:
            path = write_config(directory, "[norm]\nkind = randers\nbeta_theta = 0.5\n")
            with self.assertRaises(CommandError):
                run_fgl('torus-example', '--config', path, '--out', directory)


class MinimizeCommandTests(SimpleTestCase):
    """Test fgl minimize artifacts"""

    def test_trivial_sector_converges_immediately(self):
        """Test theta_winding with m = 0: zero energy at iteration 0"""
        with TemporaryDirectory() as directory:
            path = write_config(directory, "[grid]\nn_theta = 16\nn_phi = 16\n[sector]\nkind = theta_winding\nwinding = 0\n")
            out = Path(directory) / 'out'
            output = run_fgl('minimize', '--config', path, '--out', str(out))
            self.assertEqual(
                sorted(p.name for p in out.iterdir()),
                ['A.fgl', 'config.ini', 'psi.fgl', 'summary.txt', 'trace.csv', 'vortices.csv'],
            )
            trace = read_rows(out / 'trace.csv')
            self.assertEqual(list(trace[0]), ['iter', 'kind', 'kinetic', 'maxwell', 'potential', 'total', 'grad_norm', 'step'])
            self.assertEqual(read_rows(out / 'vortices.csv'), [])
            self.assertEqual((out / 'summary.txt').read_text().strip(), output.strip())
        self.assertIn('converged after 0 iterations', output)
        self.assertIn('total=0.0 ', output)
        self.assertIn('vortices=0', output)
        self.assertIn('windings=(0, 0)', output)

    def test_reruns_are_byte_identical(self):
        """Test determinism for a seeded noisy vortex pair"""
        text = (
            "[grid]\nn_theta = 16\nn_phi = 16\n[params]\nepsilon = 0.5\n"
            "[sector]\nkind = vortex_pair\nnoise = 0.1\n[solver]\nmax_iters = 20\n[output]\nseed = 7\n"
        )
        with TemporaryDirectory() as directory:
            path = write_config(directory, text)
            first, second = Path(directory) / 'first', Path(directory) / 'second'
            run_fgl('minimize', '--config', path, '--out', str(first))
            run_fgl('minimize', '--config', path, '--out', str(second))
            for name in ('trace.csv', 'vortices.csv', 'psi.fgl', 'A.fgl', 'summary.txt'):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)
            vortices = read_rows(first / 'vortices.csv')
        self.assertEqual(sorted(int(row['degree']) for row in vortices), [-1, 1])

    def test_invalid_config_exits_nonzero(self):
        """Test that b = 0 is rejected before anything runs"""
        with TemporaryDirectory() as directory:
            path = write_config(directory, "[norm]\nb = 0\n")
            out = Path(directory) / 'out'
            with self.assertRaises(CommandError) as caught:
                run_fgl('minimize', '--config', path, '--out', str(out))
            self.assertFalse(out.exists())
        self.assertIn('[norm] b', str(caught.exception))


class SweepCommandTests(SimpleTestCase):
    """Test fgl sweep"""

    def test_theta_winding_sweep(self):
        """Test the CSV and the fit for a short theta-winding sweep"""
        text = "[sector]\nkind = theta_winding\n[sweep]\neps_list = 0.9, 0.7, 0.5\n"
        with TemporaryDirectory() as directory:
            path = write_config(directory, text)
            out = Path(directory) / 'out'
            with override_settings(FGL=dict(settings.FGL)):
                output = run_fgl('sweep', '--config', path, '--out', str(out), '--threads', '2')
            rows = read_rows(out / 'sweep.csv')
            fit = (out / 'sweep_fit.txt').read_text()
        self.assertEqual([row['epsilon'] for row in rows], ['0.9', '0.7', '0.5'])
        self.assertEqual([row['N'] for row in rows], ['28', '36', '52'])
        self.assertEqual(list(rows[0]), ['epsilon', 'N', 'total', 'kinetic', 'maxwell', 'potential', 'vortex_count', 'energy_over_logeps'])
        self.assertTrue(all(row['vortex_count'] == '0' for row in rows))
        self.assertIn('gamma_limit=0.0', fit)
        self.assertIn('slope=', output)

    def test_eps_list_validation(self):
        """Test empty and too short eps lists"""
        with TemporaryDirectory() as directory:
            for text in ("[sweep]\neps_list =\n", "[sweep]\neps_list = 0.5, 0.25\n"):
                path = write_config(directory, text)
                with self.assertRaises(CommandError, msg=text):
                    run_fgl('sweep', '--config', path, '--out', directory)


class CheckCommandTests(SimpleTestCase):
    """Test the property suites"""

    def test_default_config_passes(self):
        """Test that every suite passes on the defaults"""
        with TemporaryDirectory() as directory:
            output = run_fgl('check', '--out', directory)
            rows = read_rows(Path(directory) / 'check.csv')
        self.assertEqual([row['suite'] for row in rows], list(SUITES))
        self.assertTrue(all(row['passed'] == 'true' for row in rows), rows)
        self.assertEqual(output.count(': pass'), len(SUITES))

    def test_seed_does_not_change_outcomes(self):
        """Test identical pass/fail across seeds"""
        config = load_config()
        names = ['fenchel_young', 'gradient_test', 'integration_by_parts']
        outcomes = [
            [result.passed for result in run_suites(config.with_overrides(seed=seed), names)]
            for seed in (1, 2, 3)
        ]
        self.assertEqual(outcomes, [[True] * 3] * 3)

    def test_randers_config(self):
        """Test the suites for a configured Randers norm"""
        config = parse_config("[norm]\nkind = randers\nbeta_theta = 0.4\n")
        results = run_suites(config, ['diamagnetic', 'gauge_invariance_refinement', 'construction_rejection'])
        self.assertTrue(all(result.passed for result in results))
        self.assertIn('quadratic_profile', results[0].detail)

    def test_failure_exits_nonzero(self):
        """Test that a failing suite raises CommandError"""
        failing = {'construction_rejection': lambda config, rng: SuiteResult('construction_rejection', False, 0.0, 1.0)}
        with TemporaryDirectory() as directory, patch.dict(SUITES, failing):
            with self.assertRaises(CommandError):
                run_fgl('check', '--suite', 'construction_rejection', '--out', directory)

    def test_unknown_suite(self):
        with self.assertRaises(ValueError):
            run_suites(load_config(), ['nope'])


class UtilityCommandTests(SimpleTestCase):
    """Test print-config, length and export-density"""

    def test_print_config(self):
        """Test that the printed defaults parse back to the defaults"""
        with TemporaryDirectory() as directory:
            output = run_fgl('print-config', '--out', directory)
            self.assertEqual(list(Path(directory).iterdir()), [])
        self.assertEqual(parse_config(output), load_config().with_overrides(directory))
        self.assertIn('[solver]', output)

    def test_length(self):
        """Test forward and reversed Randers lengths of a unit segment"""
        with TemporaryDirectory() as directory:
            polyline = write_polyline_csv(Path(directory) / 'segment.csv', PolylineCurrent([(0.0, 0.0), (1.0, 0.0)]))
            path = write_config(directory, "[norm]\nkind = randers\nbeta_theta = 0.5\n")
            output = run_fgl('length', '--config', path, '--polyline', str(polyline), '--out', directory)
        values = dict(re.findall(r'(\w+)=(\S+)', output))
        self.assertAlmostEqual(float(values['forward']), 1.5, places=12)
        self.assertAlmostEqual(float(values['reversed']), 0.5, places=12)

    def test_export_density(self):
        """Test sigma = sqrt(ab) at every node"""
        with TemporaryDirectory() as directory:
            path = write_config(directory, "[norm]\na = 4.0\n[grid]\nn_theta = 8\nn_phi = 8\n")
            run_fgl('export-density', '--config', path, '--out', directory)
            rows = read_rows(Path(directory) / 'density.csv')
        self.assertEqual(len(rows), 64)
        for row in rows:
            self.assertAlmostEqual(float(row['value']), 2.0, places=10)

    def test_threads_must_be_positive(self):
        with self.assertRaises(CommandError):
            run_fgl('print-config', '--threads', '0')
