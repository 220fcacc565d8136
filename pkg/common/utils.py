import os

from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from common.settings import RASTER_EXTENSIONS


def validate_file_extension(path, allowed_extensions=None):
    """
    Make sure a corpus file has one of the allowed raster extensions.

    Args:
        path (str): path of the file to validate.
        allowed_extensions (list, optional): allowed extensions, defaults to
                                             the lossless raster formats.
    """
    if allowed_extensions is None:
        allowed_extensions = RASTER_EXTENSIONS

    name = os.path.basename(str(path))
    if '.' not in name:
        raise ValidationError(
            _('The file %(name)s does not have a valid extension. Please provide a file with one of the following '
              'extensions: %(allowed)s.'),
            params={'name': name, 'allowed': ", ".join(allowed_extensions)})
    ext = name.split('.')[-1].lower()
    if f'.{ext}' not in allowed_extensions:
        raise ValidationError(
            _('Unsupported file extension in %(name)s. Allowed extensions are: %(allowed)s.'),
            params={'name': name, 'allowed': ", ".join(allowed_extensions)})


def validate_file_exists(path, role="file"):
    if not os.path.isfile(path):
        raise ValidationError(
            _('Missing %(role)s: %(path)s'), params={'role': role, 'path': str(path)})
