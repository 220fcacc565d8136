from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class PerturbationsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'segmentation.perturbations'
    verbose_name = _('Feature perturbations')
