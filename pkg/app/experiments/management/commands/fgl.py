import logging

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from experiments.checks import SUITES, run_suites
from experiments.config import load_config
from experiments.reports import CHECK_COLUMNS, OutputDirectory
from experiments.runs import minimize_run, sweep_run, torus_example
from fields.lattice import ScalarField
from main.exceptions import FGLError
from vortices.currents import finsler_length, read_polyline_csv

logger = logging.getLogger('experiments')


class Command(BaseCommand):
    help = 'Finsler Ginzburg-Landau experiments: torus example, minimization, eps-sweeps and property checks'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(title='subcommands', dest='subcommand', required=True)
        commands = {
            'torus-example': 'energies of the pure cycle windings against the closed forms',
            'minimize': 'minimize from the configured sector and write trace, fields and vortices',
            'sweep': 'minimize over eps_list and fit the energy against |log eps|',
            'check': 'run the property suites',
            'print-config': 'print the canonical configuration with all defaults',
            'length': 'Finsler length of a polyline, forward and reversed',
            'export-density': 'write the measure density on the configured grid as CSV',
        }
        for name, help_text in commands.items():
            sub = subparsers.add_parser(name, help=help_text)
            sub.add_argument('--config', help='experiment file (INI); defaults when omitted')
            sub.add_argument('--out', help='output directory, overrides [output] directory')
            sub.add_argument('--seed', type=int, help='random seed, overrides [output] seed')
            sub.add_argument('--threads', type=int, help='worker threads (default FGL_THREADS)')
            if name == 'check':
                sub.add_argument('--suite', action='append', choices=list(SUITES), help='run only this suite (repeatable)')
            if name == 'length':
                sub.add_argument('--polyline', required=True, help='polyline CSV with a multiplicity/closed header')

    def handle(self, *args, **options):
        subcommand = options['subcommand']
        threads = options.get('threads')
        if threads is not None:
            if threads < 1:
                raise CommandError(f"--threads must be at least 1, got {threads}")
            settings.FGL = {**settings.FGL, 'THREADS': threads}
        try:
            config = load_config(options.get('config')).with_overrides(options.get('out'), options.get('seed'))
            if subcommand == 'print-config':
                self.stdout.write(config.to_text(), ending='')
                return
            handler = getattr(self, f"handle_{subcommand.replace('-', '_')}")
            logger.info(f"fgl {subcommand}: {config.norm.describe()} on {config.grid.n_theta}x{config.grid.n_phi}")
            handler(config, options)
        except ValidationError as error:
            logger.error(f"fgl {subcommand} rejected: {'; '.join(error.messages)}")
            raise CommandError('; '.join(error.messages)) from error
        except (FGLError, OSError) as error:
            logger.error(f"fgl {subcommand} failed: {error}")
            raise CommandError(str(error)) from error

    def _output(self, config):
        output = OutputDirectory(config.output_dir)
        output.write_text('config.ini', config.to_text())
        return output

    def handle_torus_example(self, config, options):
        reports = torus_example(config, self._output(config))
        for report in reports:
            flags = []
            if not report.matches_printed:
                flags.append('MISMATCH printed')
            if report.matches_intermediate:
                flags.append('matches intermediate')
            self.stdout.write(
                f"{report.winding}-winding {report.number}: quadrature={report.quadrature!r} "
                f"printed={report.printed_formula!r} intermediate={report.intermediate_formula!r}"
                + (f" [{', '.join(flags)}]" if flags else '')
            )

    def handle_minimize(self, config, options):
        line, _, _ = minimize_run(config, self._output(config))
        self.stdout.write(line)

    def handle_sweep(self, config, options):
        report = sweep_run(config, self._output(config), threads=options.get('threads'))
        for point in report.points:
            degrees = ' '.join(f"{degree:+d}" for degree in point.degrees) or '-'
            self.stdout.write(
                f"eps={point.epsilon!r} N={point.n}: total={point.energy.total!r} "
                f"vortices={point.vortex_count} degrees={degrees} ({point.termination.value})"
            )
        self.stdout.write(report.summary())

    def handle_check(self, config, options):
        output = self._output(config)
        results = run_suites(config, options.get('suite'))
        output.write_csv('check.csv', [result.as_row() for result in results], CHECK_COLUMNS)
        for result in results:
            status = self.style.SUCCESS('pass') if result.passed else self.style.ERROR('FAIL')
            detail = f" {result.detail}" if result.detail else ''
            self.stdout.write(f"{result.suite}: {status} measured={result.measured:.3e} tolerance={result.tolerance:.3e}{detail}")
        failed = [result.suite for result in results if not result.passed]
        if failed:
            raise CommandError(f"{len(failed)} of {len(results)} suites failed: {', '.join(failed)}")

    def handle_length(self, config, options):
        curve = read_polyline_csv(options['polyline'])
        forward = finsler_length(config.norm, curve)
        backward = finsler_length(config.norm, curve.reversed())
        self.stdout.write(f"forward={forward!r} reversed={backward!r}")

    def handle_export_density(self, config, options):
        sigma = config.density().on_grid(config.grid)
        path = self._output(config).write_field_csv('density.csv', ScalarField(config.grid, np.array(sigma)))
        self.stdout.write(f"density written to {path}")
