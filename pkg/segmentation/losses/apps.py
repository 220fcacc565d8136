from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class LossesConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'segmentation.losses'
    verbose_name = _('Losses')
