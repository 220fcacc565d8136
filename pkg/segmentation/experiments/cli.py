import logging
import os
import sys

from django.core.management import execute_from_command_line


logger = logging.getLogger(__name__)


def cli(argv=None):
    """
    Run a management command (``train``, ``evaluate``, ``analyze``,
    ``gen_toy``, ``ablate``) and return its exit status instead of exiting.
    """
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "application.settings.dev")
    argv = list(sys.argv if argv is None else argv)
    try:
        execute_from_command_line(argv)
    except SystemExit as e:
        if e.code is None:
            return 0
        if isinstance(e.code, int):
            return e.code
        print(e.code, file=sys.stderr)
        return 1
    return 0
