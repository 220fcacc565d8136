from django.utils.translation import gettext_lazy as _

# Mask value excluded from losses and metrics unless a manifest says otherwise.
DEFAULT_IGNORE_INDEX = 255

RASTER_EXTENSIONS = ['.png', '.tif', '.tiff', '.bmp']

DEVICE_CHOICES = [
    ('auto', _('Automatic')),
    ('cpu', _('CPU')),
    ('cuda', _('CUDA')),
]
