import os
from pathlib import Path
from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent

env_path = BASE_DIR / ".env"
if env_path.exists():
    load_dotenv(env_path)

SECRET_KEY = os.getenv("RFM_SECRET_KEY", "rfm-local-only-not-served")

DEBUG = os.getenv("RFM_DEBUG", "false").lower() == "true"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'fingerprints',
    'experiments',
]

# Nothing is persisted in a database; datasets, RFM containers and reports are files.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOG_LEVEL = os.getenv("RFM_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "fingerprints": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "experiments": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
    },
}


# Run configuration defaults
#
# Flat SECTION_FIELD keys. Every key can be overridden from the environment with the
# RFM_ prefix (e.g. RFM_KERNEL_REG=0.5), then by a --config file, then by --set flags.

ENV_PREFIX = "RFM_"

_BUILTIN_DEFAULTS = {
    "SEED": "0",
    "WORKERS": "1",

    # world model (kernel smoothing)
    "KERNEL_LENGTH_SCALE": "1.0",
    "KERNEL_AMPLITUDE": "1.0",
    "KERNEL_REG": "1.0",
    "KERNEL_PRIOR_MEAN": "-110.0",
    "KERNEL_LITERAL_NORMAL_EQUATIONS": "false",
    "QUERY_SCALE": "5.0",
    "GRID_SPACING": "0.5",

    # fingerprint matching
    "POSITIONING_K": "3",
    "POSITIONING_DISSIMILARITY": "cdm",
    "POSITIONING_LAMBDA_CDM": "3.0",
    "POSITIONING_MISSING_VALUE": "-110.0",
    "POSITIONING_WEIGHTED": "false",

    # resampling and candidate identification
    "RESAMPLE_N": "200",
    "RESAMPLE_ALPHA": "0.55",
    "RESAMPLE_MIN_FEATURES": "3",
    "CANDIDATE_LAMBDA_MJI": "0.97",
    "CANDIDATE_LAMBDA_RES": "10.0",

    # change detection
    "DETECTION_THRESHOLD": "0.95",
    "DETECTION_SLOPE": "0.01",
    "DETECTION_INTERCEPT": "2.5",
    "DETECTION_SIGMA_FLOOR": "0.5",

    # synthetic scenario
    "SCENARIO_N_APS": "60",
    "SCENARIO_WIDTH": "30.0",
    "SCENARIO_HEIGHT": "20.0",
    "SCENARIO_EXPONENT": "3.0",
    "SCENARIO_REF_POWER": "-40.0",
    "SCENARIO_SHADOWING": "2.0",
    "SCENARIO_SPACING": "1.0",
    "SCENARIO_SENSITIVITY": "-80.0",
    "SCENARIO_TRAIN_FRACTION": "0.75",

    # simulated changes
    "CHANGE_MISSING_RATIO": "0.5",
    "CHANGE_SHIFT_RATIO": "0.0",
    "CHANGE_SHIFT_DBM": "-15",
    "CHANGE_REDRAW_PER_SAMPLE": "true",

    # sampling-ratio sweep
    "SWEEP_RATIO_START": "0.05",
    "SWEEP_RATIO_STOP": "0.95",
    "SWEEP_RATIO_STEP": "0.05",

    # metrics
    "EVALUATION_RADIUS": "2.0",
    "EVALUATION_ELLIPSE_SCALE": "1.0",
}

RFM_DEFAULTS = {
    key: os.getenv(f"{ENV_PREFIX}{key}", value)
    for key, value in _BUILTIN_DEFAULTS.items()
}
