from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class CommonBaseConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'common.base'
    verbose_name = _('Runtime helpers')
