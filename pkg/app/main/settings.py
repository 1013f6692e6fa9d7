"""
Django settings for the finslergl project.

The project has no web surface: Django provides configuration, logging,
form validation for experiment files, management commands and the test
runner. There is no database; the dummy backend is never touched because
the suites only use SimpleTestCase.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing here is served.
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'finslergl-insecure-local-key')

DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'geometry',
    'fields',
    'energy',
    'solver',
    'vortices',
    'experiments',
]

DATABASES = {}

USE_I18N = False

USE_TZ = True

TIME_ZONE = os.environ.get('TIME_ZONE', 'UTC')

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Numerical defaults
# Library code reads these through django.conf.settings so tests can
# override them with override_settings.

FGL = {
    # Worker count for scipy.fft and concurrent sweep points.
    'THREADS': int(os.environ.get('FGL_THREADS', '1')),
    'OUTPUT_DIR': os.environ.get('FGL_OUTPUT_DIR', 'out'),
    # Legendre inverse (damped Newton)
    'NEWTON_MAX_ITERS': 50,
    'NEWTON_TOL': 1e-12,
    'NEWTON_MAX_HALVINGS': 30,
    # Covectors and moduli below these are treated as zero
    'ZERO_COVECTOR': 1e-14,
    'ZERO_MODULUS': 1e-12,
    # Angular quadrature
    'BALL_SAMPLES': 2048,
    'SUPPORT_SAMPLES': 4096,
    'EQUIVALENCE_POINTS': 16,
    'EQUIVALENCE_ANGLES': 256,
    'EQUIVALENCE_MARGIN': 0.02,
    # Weighted Poisson solve for nonconstant densities
    'CG_RTOL': 1e-12,
    'CG_MAXITER': 5000,
    # Descent
    'ARMIJO_C': 1e-4,
    'ARMIJO_SHRINK': 0.5,
    'ENERGY_SLACK': 1e-14,
}


# Logging configuration

LOG_LEVEL = os.environ.get('FGL_LOG_LEVEL', 'INFO').upper()
LOG_FILE = os.environ.get('FGL_LOG_FILE')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}

for _app in INSTALLED_APPS:
    LOGGING['loggers'][_app] = {
        'handlers': ['console'],
        'level': LOG_LEVEL,
        'propagate': False,
    }

# The file handler is opt-in so runs never write outside their output directory.
if LOG_FILE:
    LOGGING['handlers']['file'] = {
        'level': 'DEBUG',
        'class': 'logging.FileHandler',
        'filename': LOG_FILE,
        'formatter': 'verbose',
    }
    for _logger in LOGGING['loggers'].values():
        _logger['handlers'].append('file')
