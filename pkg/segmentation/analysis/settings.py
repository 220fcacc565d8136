from django.utils.translation import gettext_lazy as _

DEFAULT_PATCH = 21
DEFAULT_SUBSAMPLE = 1000
DENSITY_COLORMAP = 'Blues'

# axis neighbours of a patch centre, in units of the neighbour offset
NEIGHBOR_DIRECTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))

# which network output feature-space analyses read, upsampled to image size
FEATURE_SOURCE_CHOICES = [
    ('decoder', _('Decoder features')),
    ('encoder', _('Encoder embeddings')),
]
DEFAULT_FEATURE_SOURCE = 'decoder'
