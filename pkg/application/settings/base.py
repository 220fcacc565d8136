"""
Django settings for the crcfp project.

The project has no web surface: settings drive the app registry, the
management commands that form the command line, logging and the
process-level knobs read from the environment (or a local ``.env``).

Experiment hyper-parameters do not live here; they are defined in
``segmentation.experiments.settings`` and can be overridden project-wide
through ``CRCFP_CONFIG``.
"""

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
import os
import ast
import dj_database_url
from dotenv import load_dotenv
import logging

logger = logging.getLogger(__name__)

PROJECT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
BASE_DIR = os.path.dirname(PROJECT_DIR)

dotenv_path = os.path.join(str(BASE_DIR), '.env')
load_dotenv(dotenv_path)


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",

    # crcfp apps
    "common",
    "common.base",

    "segmentation",
    "segmentation.datasets",
    "segmentation.networks",
    "segmentation.perturbations",
    "segmentation.losses",
    "segmentation.memory_bank",
    "segmentation.training",
    "segmentation.evaluation",
    "segmentation.analysis",
    "segmentation.experiments",
]

# Commands never touch the database; a local sqlite file keeps Django happy.
DATABASE_URL = os.getenv('DATABASE_URL', f"sqlite:///{os.path.join(BASE_DIR, 'db.sqlite3')}")

DATABASES = {
    "default": dj_database_url.config(default=DATABASE_URL)
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

LANGUAGE_CODE = "en"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True


# Training runtime

# Every run gets a directory below this one: config.yaml, checkpoints/,
# metrics.log and reports/.
CRCFP_RUNS_DIR = os.getenv('CRCFP_RUNS_DIR', os.path.join(BASE_DIR, 'runs'))

# "auto" picks cuda when available.
CRCFP_DEVICE = os.getenv('CRCFP_DEVICE', 'auto')

CRCFP_NUM_THREADS = int(os.getenv('CRCFP_NUM_THREADS', 0))

# Project-wide overrides of the experiment defaults, same nesting as
# segmentation.experiments.settings.DEFAULT_CRCFP_CONFIG.
CRCFP_CONFIG = ast.literal_eval(os.getenv('CRCFP_CONFIG', '{}'))

CRCFP_RUN_SLOW = ast.literal_eval(os.getenv('CRCFP_RUN_SLOW', 'False'))


# Logging

CRCFP_LOG_LEVEL = os.getenv('CRCFP_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'segmentation': {
            'handlers': ['console'],
            'level': CRCFP_LOG_LEVEL,
            'propagate': False,
        },
        'common': {
            'handlers': ['console'],
            'level': CRCFP_LOG_LEVEL,
            'propagate': False,
        },
    },
}
