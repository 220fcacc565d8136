from .base import *
import os
import ast

# SECURITY WARNING: never run production with DEBUG enabled!
DEBUG = ast.literal_eval(os.getenv("DEBUG", "False"))

SECRET_KEY = os.getenv("SECRET_KEY")
if not SECRET_KEY:
    logger.error("SECRET_KEY was not found in the environment")
    raise ImportError("SECRET_KEY is required for production settings")

ALLOWED_HOSTS = ast.literal_eval(os.getenv("ALLOWED_HOSTS", "[]"))

# Long runs write to a mounted volume; keep logs quieter there.
LOGGING['loggers']['segmentation']['level'] = os.getenv("CRCFP_LOG_LEVEL", "INFO")

try:
    from .local import *
except ImportError:
    pass
