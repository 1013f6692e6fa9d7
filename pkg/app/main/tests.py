import logging

from django.conf import settings
from django.test import SimpleTestCase

from .enums import MeasureKind, StepRule, choices
from .exceptions import ConfigurationError, DomainError, FGLError, IterativeFailure, ResolutionError


class SettingsTests(SimpleTestCase):
    """Test the project-level configuration"""

    def test_numerical_defaults(self):
        """Test that the tolerances library code reads are present"""
        for key in ('THREADS', 'NEWTON_TOL', 'ZERO_MODULUS', 'CG_RTOL', 'ARMIJO_C', 'ENERGY_SLACK'):
            self.assertIn(key, settings.FGL)
        self.assertGreaterEqual(settings.FGL['THREADS'], 1)

    def test_app_loggers(self):
        """Test that every app logs through its own configured logger"""
        for app in ('geometry', 'fields', 'energy', 'solver', 'vortices', 'experiments'):
            self.assertIn(app, settings.LOGGING['loggers'])
            self.assertTrue(logging.getLogger(app).handlers)

    def test_no_database(self):
        self.assertEqual(settings.DATABASES, {})


class EnumTests(SimpleTestCase):
    def test_choices(self):
        """Test (value, label) pairs for form fields"""
        self.assertEqual(choices(StepRule), [('fixed', 'fixed'), ('armijo', 'armijo'), ('bb', 'bb')])
        self.assertEqual(MeasureKind('holmes-thompson'), MeasureKind.HOLMES_THOMPSON)


class ExceptionTests(SimpleTestCase):
    """Test the runtime failure hierarchy"""

    def test_hierarchy(self):
        """Test that failures can be caught as FGLError or the builtin they refine"""
        self.assertTrue(issubclass(DomainError, ValueError))
        self.assertTrue(issubclass(IterativeFailure, RuntimeError))
        for error in (DomainError, IterativeFailure, ResolutionError, ConfigurationError):
            self.assertTrue(issubclass(error, FGLError))

    def test_iterative_failure_message(self):
        """Test that the residual and iteration count are reported"""
        error = IterativeFailure("cg did not converge", residual=1.5e-3, iterations=40)
        self.assertEqual(str(error), "cg did not converge (residual 1.500e-03 after 40 iterations)")
        self.assertEqual(str(IterativeFailure("plain")), "plain")

    def test_carried_details(self):
        """Test diagnostics and violations lists"""
        error = ConfigurationError(["a.ini:1: [norm] a: bad", "a.ini:2: [norm] b: bad"])
        self.assertEqual(str(error), "a.ini:1: [norm] a: bad\na.ini:2: [norm] b: bad")
        self.assertEqual(ResolutionError("unresolved", ["eps=0.1"]).violations, ["eps=0.1"])
        self.assertEqual(ResolutionError("unresolved").violations, [])
