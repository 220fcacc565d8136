from django.utils.translation import gettext_lazy as _

ACCURACY_MODE_CHOICES = [
    ('overall', _('Overall pixel accuracy')),
    ('class_mean', _('Mean of per-class accuracies')),
]

REPORT_HEADERS = ('class', 'iou', 'dice', 'present')
DEFAULT_REPORT_NAME = 'metrics'
