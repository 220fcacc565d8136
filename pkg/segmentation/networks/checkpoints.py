"""
Checkpoint archive.

One ``torch.save`` file holding::

    {
        'schema': CHECKPOINT_SCHEMA,
        'epoch': int,
        'model': {'backbone': ..., 'projector': ..., 'classifier': ..., 'aux_classifiers': ...},
        'optimizer': optimizer state or None,
        'config': merged run configuration,
        'bank': memory bank state or None,
        'metrics': evaluation metrics or None,
    }
"""
import logging
import os

import torch
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import CHECKPOINT_SCHEMA
from .settings import PARAMETER_GROUPS


logger = logging.getLogger(__name__)


def save_checkpoint(path, model, optimizer=None, epoch=0, config=None, bank=None, metrics=None):
    archive = {
        'schema': CHECKPOINT_SCHEMA,
        'epoch': int(epoch),
        'model': {name: module.state_dict() for name, module in model.parameter_groups().items()},
        'optimizer': optimizer.state_dict() if optimizer is not None else None,
        'config': config,
        'bank': bank.state_dict() if bank is not None else None,
        'metrics': metrics,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save(archive, path)
    logger.info("Saved checkpoint %s (epoch %s)", path, epoch)
    return path


def read_checkpoint(path, map_location='cpu'):
    if not os.path.isfile(path):
        raise ValidationError(_('Checkpoint "%(path)s" does not exist'), params={'path': path})
    archive = torch.load(path, map_location=map_location, weights_only=False)
    schema = archive.get('schema') if isinstance(archive, dict) else None
    if schema != CHECKPOINT_SCHEMA:
        raise ValidationError(_('Checkpoint "%(path)s" has schema %(found)s, expected %(expected)s'),
                              params={'path': path, 'found': schema, 'expected': CHECKPOINT_SCHEMA})
    missing = [name for name in PARAMETER_GROUPS if name not in archive['model']]
    if missing:
        raise ValidationError(_('Checkpoint "%(path)s" lacks parameter groups %(missing)s'),
                              params={'path': path, 'missing': missing})
    return archive


def load_checkpoint(path, model, optimizer=None, bank=None, map_location='cpu'):
    """Restore state into the given objects and return the raw archive."""
    archive = read_checkpoint(path, map_location=map_location)
    for name, module in model.parameter_groups().items():
        module.load_state_dict(archive['model'][name])
    if optimizer is not None and archive.get('optimizer') is not None:
        optimizer.load_state_dict(archive['optimizer'])
    if bank is not None and archive.get('bank') is not None:
        bank.load_state_dict(archive['bank'])
    logger.info("Loaded checkpoint %s (epoch %s)", path, archive['epoch'])
    return archive
