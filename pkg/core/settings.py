"""
Django settings for the thoughtgraph project.

The project serves no web pages: Django provides configuration, logging,
prompt templates, management commands and the test runner.

For more information on this file, see
https://docs.djangoproject.com/en/5.0/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Nothing is signed or served, the key only satisfies Django's startup checks.
SECRET_KEY = os.environ.get('THOUGHTGRAPH_SECRET_KEY', 'thoughtgraph-local-key')

DEBUG = os.environ.get('THOUGHTGRAPH_DEBUG', '0') == '1'

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'apps.graphs',
    'apps.tasks',
    'apps.backends',
    'apps.schedules',
    'apps.policy',
    'apps.search',
    'apps.experiments',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            # prompts are plain text, escaping would corrupt them
            'autoescape': False,
            'context_processors': [],
        },
    },
]

# Database
# Records are JSON files under RESULTS_DIR, no database is used.

DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Logging

LOG_LEVEL = os.environ.get('THOUGHTGRAPH_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Experiment outputs

RESULTS_DIR = Path(os.environ.get('THOUGHTGRAPH_RESULTS_DIR', BASE_DIR / 'results'))

# config
THOUGHTGRAPH = {
    # generator endpoint, OpenAI-compatible
    'ENDPOINT': os.environ.get('THOUGHTGRAPH_ENDPOINT', 'http://localhost:30000/v1'),
    'MODEL': os.environ.get('THOUGHTGRAPH_MODEL', 'meta-llama/Llama-3.1-405B-Instruct'),
    'API_KEY': os.environ.get('THOUGHTGRAPH_API_KEY', ''),
    'TEMPERATURE': 1.0,
    'REASONING_MAX_TOKENS': 1024,
    'POLICY_MAX_TOKENS': 2048,
    'HTTP_TIMEOUT': 120.0,
    'HTTP_RETRIES': 3,
    'HTTP_BACKOFF_FACTOR': 0.5,
    'HTTP_WORKERS': 8,
    # default per-phase query cap for experiment configs, None means unlimited
    'QUERY_BUDGET': None,

    # graph state serialization
    'CONTENT_TRUNCATION': 200,

    # mdp
    'ENSEMBLE_SIZE': 5,
    'POLICY_MULTIPLICITY': 1,
    'EPSILON_FACTOR': 3,
    'AGGREGATE_COMBINATION_CAP': 32,

    # search
    'TPE_GAMMA': 0.25,
    'TPE_STARTUP_TRIALS': 10,
    'TPE_PRIOR_WEIGHT': 1.0,
    'CONVERGENCE_WINDOW': 20,
    'EVALUATION_BATCH': 20,
    'CALIBRATION_SAMPLES': 30,
    'MIN_SEARCH_BUDGET': 40,
}
