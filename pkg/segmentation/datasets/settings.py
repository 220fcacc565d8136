from fractions import Fraction

from django.utils.translation import gettext_lazy as _

SPLIT_MODE_CHOICES = [
    ('by_center', _('By acquisition centre')),
    ('by_image', _('By image')),
]

SPLIT_ROUNDING_CHOICES = [
    ('floor', _('Round down')),
    ('ceil', _('Round up')),
]

# by_center follows the centre counts of the BCSS protocol (14 -> 1 at 1/8),
# by_image keeps at least the rounded-up share of images.
DEFAULT_SPLIT_ROUNDING = {
    'by_center': 'floor',
    'by_image': 'ceil',
}

SUPPORTED_FRACTIONS = [Fraction(1, 2 ** i) for i in range(6)]

CORPUS_SPLIT_CHOICES = [
    ('train', _('Training')),
    ('test', _('Held-out test')),
]

DEFAULT_MANIFEST = 'manifest.yaml'

CROP_MAX_TRIES = 100
