import logging
import random

import numpy as np
import torch
from django.conf import settings
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from common.settings import DEVICE_CHOICES


logger = logging.getLogger(__name__)


def seed_everything(seed, deterministic=True):
    """
    Seed python, numpy and torch so that two runs with the same seed produce
    the same loss trajectory on the same device.
    """
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)
    if deterministic:
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False
        torch.use_deterministic_algorithms(True, warn_only=True)
    logger.debug("seed_everything(%s, deterministic=%s)", seed, deterministic)


def resolve_device(name=None):
    name = name or getattr(settings, 'CRCFP_DEVICE', 'auto')
    if name.split(':')[0] not in dict(DEVICE_CHOICES):
        raise ValidationError(_('Unknown device "%(name)s", choose one of %(choices)s'),
                              params={'name': name, 'choices': [key for key, _label in DEVICE_CHOICES]})
    if name == 'auto':
        name = 'cuda' if torch.cuda.is_available() else 'cpu'
    if name.startswith('cuda') and not torch.cuda.is_available():
        logger.warning("CUDA requested but not available, falling back to cpu")
        name = 'cpu'
    threads = getattr(settings, 'CRCFP_NUM_THREADS', 0)
    if threads:
        torch.set_num_threads(threads)
    return torch.device(name)


def make_generator(seed, device="cpu"):
    generator = torch.Generator(device=device)
    generator.manual_seed(int(seed))
    return generator


def item_rng(seed, epoch, index):
    """
    numpy generator for one dataset item; (seed, epoch, index) fully
    determine every draw regardless of worker scheduling.
    """
    return np.random.default_rng([int(seed), int(epoch), int(index)])

