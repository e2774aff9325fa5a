"""
Django settings for the difashion project.

The project has no web surface: Django provides the settings layer, the
management-command CLI and the test runner. Nothing is stored in a database.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""
import os
from pathlib import Path

from dotenv import load_dotenv

# Loading env variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "difashion-offline")

DEBUG = os.environ.get("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "engine",
    "wardrobe",
    "diffusion",
    "evaluation",
]

# Experiments persist to files only (PNG directories, tensor containers,
# structured text), so no database is configured.
DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

TEST_RUNNER = "difashion.test_runner.DiFashionTestRunner"

REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
    "COERCE_DECIMAL_TO_STRING": False,
}

DIFASHION = {
    "DATA_DIR": Path(os.environ.get("DIFASHION_DATA_DIR", BASE_DIR / "data")),
    "RUNS_DIR": Path(os.environ.get("DIFASHION_RUNS_DIR", BASE_DIR / "runs")),
    "SEED": int(os.environ.get("DIFASHION_SEED", "0")),
    "PROGRESS": os.environ.get("DIFASHION_PROGRESS", "1") == "1",
}

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        name: {
            "handlers": ["console"],
            "level": os.environ.get("DIFASHION_LOG_LEVEL", "INFO"),
            "propagate": False,
        }
        for name in ("engine", "wardrobe", "diffusion", "evaluation", "difashion")
    },
}
