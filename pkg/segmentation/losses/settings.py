from django.utils.translation import gettext_lazy as _

CONTRASTIVE_DIVISOR_CHOICES = [
    ('positives', _('Gated positive pixels of the pair')),
    ('pixels', _('All overlap pixels of the pair')),
]

LOSS_PART_CHOICES = [
    ('l_sup', _('Supervised cross-entropy')),
    ('l_cont', _('Directional contrastive')),
    ('l_cross', _('Cross-consistency')),
    ('l_ent', _('Entropy')),
]

LOSS_PARTS = [key for key, _label in LOSS_PART_CHOICES]

DEFAULT_THRESHOLD = 0.75
DEFAULT_TEMPERATURE = 0.1
