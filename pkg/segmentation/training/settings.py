from django.utils.translation import gettext_lazy as _

SCHEME_CHOICES = [
    ('supervised', _('Supervised only')),
    ('scheme1', _('Supervised + contrastive')),
    ('scheme2', _('Supervised + contrastive + entropy')),
    ('scheme3', _('Supervised + contrastive + entropy + cross-consistency')),
]

# Loss parts each scheme trains with; the others get weight 0.
SCHEME_PARTS = {
    'supervised': ('w_sup',),
    'scheme1': ('w_sup', 'w_cont'),
    'scheme2': ('w_sup', 'w_cont', 'w_ent'),
    'scheme3': ('w_sup', 'w_cont', 'w_ent', 'w_cross'),
}

METRICS_LOG = 'metrics.log'
CHECKPOINTS_DIR = 'checkpoints'
REPORTS_DIR = 'reports'
