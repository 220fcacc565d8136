from django.utils.translation import gettext_lazy as _

PERTURBATION_CHOICES = [
    ('noise', _('Feature noise')),
    ('feature_dropout', _('Feature dropout')),
    ('dropout', _('Spatial dropout')),
]

PERTURBATION_TYPES = [key for key, _label in PERTURBATION_CHOICES]

PERTURBATION_TARGET_CHOICES = [
    ('features', _('Decoder output (shared feature map)')),
    ('encoder', _('Encoder output, decoded again')),
]
