import ast
import os
import logging
from .base import *

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = ast.literal_eval(os.getenv("DEBUG", "True"))

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv("SECRET_KEY", "django-insecure-crcfp-dev-only-3m1x9q7w0p")

ALLOWED_HOSTS = ast.literal_eval(os.getenv("ALLOWED_HOSTS", "['*']"))

LOGGING['loggers']['segmentation']['level'] = os.getenv("CRCFP_LOG_LEVEL", "DEBUG")

if CRCFP_DEVICE != "cpu":
    logger.info(f"Using training device setting: {CRCFP_DEVICE}")

try:
    from .local import *
except ImportError:
    pass
