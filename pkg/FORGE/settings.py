"""
This file holds all the general setting information for the
forge pipeline: Django plumbing, logging and the FORGE defaults
that every subcommand resolves its PipelineConfig from.
"""

import os

# Root Project Directory
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(PROJECT_ROOT)

# Only used by Django internals, nothing here is signed or served
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'forge-local-only')

# Default Set of DEBUG is False
DEBUG = False

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'CPTFORGE',
]

# No database: every stage streams records from and to files
DATABASES = {}

# REST_framework libraries, used here for serializers and the JSON renderer only
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'COMPACT_JSON': True,
    'UNICODE_JSON': True,
    # Training logs carry NaN/Infinity losses and the monitor echoes them back
    'STRICT_JSON': False,
}

# Internationalization
LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

FORGE_LOG_LEVEL = os.environ.get('FORGE_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'diagnostic': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        # Diagnostics stream, kept apart from the record stream on stdout
        'diagnostics': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'diagnostic',
        },
        'file': {
            'level': 'DEBUG',
            'class': 'logging.FileHandler',
            'filename': os.environ.get('FORGE_DEBUG_LOG', 'debug.log'),
            'delay': True,
        },
    },
    'loggers': {
        'django': {
            'handlers': ['file'],
            'level': 'WARNING',
            'propagate': True,
        },
        'CPTFORGE': {
            'handlers': ['diagnostics'],
            'level': FORGE_LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Pipeline defaults. A FORGE_CONFIG JSON document with the same shape is merged
# over these, and command-line flags override both (see CPTFORGE/conf.py).
FORGE = {
    'INPUT_ROOT': os.path.join(BASE_DIR, 'data', 'raw'),
    'OUTPUT_ROOT': os.path.join(BASE_DIR, 'data', 'out'),
    'CACHE_DIR': os.path.join(BASE_DIR, 'data', 'cache'),
    'WORKER_COUNT': 1,
    'SHARD_SIZE_RECORDS': 100000,
    'TOKEN_COUNTER': {
        'strategy': 'char',
        'chars_per_token': 4.0,
        'count_file': None,
    },
    'INGEST': {
        'delimiter_char': '=',
        'delimiter_len': 82,
        'marker_prefix': '// File:',
        'retain_marker': True,
        'manifest': None,
    },
    'SPLIT_POLICY': {
        'max_chars': 7500,
        'min_chars': 50,
        'hierarchy': ['file_marker', 'function', 'statement'],
    },
    'CLEAN_POLICY': {
        'separator_min_run': 10,
        'separator_chars': '-=*_',
        'repeat_min_run': 10,
        'repeat_reduce_to': 3,
        'tab_width': 4,
        'garbage_reject_threshold': 0.70,
        'min_nl_words': 20,
        'code_indicators': [
            '#include', '#define', 'void', 'int', 'struct', 'typedef',
            'if', 'for', 'while', 'switch', 'return',
        ],
    },
    'ASSEMBLY_POLICY': {
        'max_tokens': 2048,
        'eot_token': '<|endoftext|>',
        'boundary_chars': ['\n', '.', ';'],
    },
    'MONITOR': {
        'loss_window': 20,
        'grad_window': 20,
        'throughput_window': 20,
        'loss_spike_factor': 1.5,
        'grad_spike_factor': 2.0,
        'emergency_nan_run': 3,
        'summary_anchor_step': 10,
    },
}

FORGE_CONFIG = os.environ.get('FORGE_CONFIG')

# Import settings specific to this machine
try:
    from .settings_local import *
except ImportError:
    pass
