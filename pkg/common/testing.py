import unittest

import pytest
from django.conf import settings


def slow(test):
    """Desk-scale experiments; collected always, run only with CRCFP_RUN_SLOW=1."""
    skip = unittest.skipUnless(settings.CRCFP_RUN_SLOW, "set CRCFP_RUN_SLOW=1 to run training experiments")
    return pytest.mark.slow(skip(test))
