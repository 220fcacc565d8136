from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class MemoryBankConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'segmentation.memory_bank'
    verbose_name = _('Memory bank')
