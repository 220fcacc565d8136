from django.utils.translation import gettext_lazy as _

DEFAULT_CAPACITY = 1200

# Most entries a single push may add, drawn uniformly from the candidates.
DEFAULT_SAMPLE_CAP = 256

NEGATIVE_DRAW_CHOICES = [
    ('shared', _('One draw per direction and batch')),
    ('per_pixel', _('One draw per pixel')),
]
