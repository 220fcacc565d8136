import logging
import os

import yaml
from django.conf import settings
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import CONFIG_ECHO
from .settings import get_default_config
from .settings import merge_config


logger = logging.getLogger(__name__)


def valid_keys(config, prefix=''):
    """Dotted names of every leaf of a nested config."""
    keys = []
    for key, value in config.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            keys.extend(valid_keys(value, f"{name}."))
        else:
            keys.append(name)
    return keys


def unknown_key_error(key, config):
    return ValidationError(
        _('Unknown config key "%(key)s". Valid keys: %(valid)s'),
        params={'key': key, 'valid': ", ".join(valid_keys(config))})


def check_keys(overrides, reference, prefix=''):
    for key, value in overrides.items():
        name = f"{prefix}{key}"
        if key not in reference:
            raise unknown_key_error(name, get_default_config())
        if isinstance(reference[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(_('Config section "%(key)s" must be a mapping'), params={'key': name})
            check_keys(value, reference[key], f"{name}.")


def parse_override(item):
    """``section.key=value`` -> (['section', 'key'], value parsed as a YAML scalar)."""
    if '=' not in item:
        raise ValidationError(_('Override "%(item)s" is not of the form key=value'), params={'item': item})
    key, raw = item.split('=', 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return key.strip().split('.'), value


def apply_overrides(config, items):
    for item in items or ():
        path, value = parse_override(item)
        section = config
        for depth, part in enumerate(path):
            if not isinstance(section, dict) or part not in section:
                raise unknown_key_error('.'.join(path), config)
            if depth == len(path) - 1:
                if isinstance(section[part], dict):
                    raise ValidationError(_('"%(key)s" is a section, set one of its keys'),
                                          params={'key': '.'.join(path)})
                section[part] = value
            else:
                section = section[part]
    return config


def load_config(path=None, overrides=()):
    """Defaults, then the YAML file at ``path``, then the dotted overrides."""
    config = get_default_config()
    if path:
        if not os.path.exists(path):
            raise ValidationError(_('Config file %(path)s does not exist'), params={'path': str(path)})
        try:
            with open(path) as handle:
                from_file = yaml.safe_load(handle) or {}
        except yaml.YAMLError as e:
            raise ValidationError(_('Config file %(path)s is not valid YAML: %(error)s'),
                                  params={'path': str(path), 'error': e})
        if not isinstance(from_file, dict):
            raise ValidationError(_('Config file %(path)s must hold a mapping'), params={'path': str(path)})
        check_keys(from_file, config)
        config = merge_config(config, from_file)
    return apply_overrides(config, overrides)


def resolve_run_dir(config, run_dir=None):
    run_dir = run_dir or config['run'].get('dir')
    if not run_dir:
        run_dir = os.path.join(settings.CRCFP_RUNS_DIR, config['run']['name'])
    config['run']['dir'] = str(run_dir)
    return str(run_dir)


def write_config(config, run_dir):
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, CONFIG_ECHO)
    with open(path, 'w') as handle:
        yaml.safe_dump(config, handle, sort_keys=False)
    logger.info("Run configuration written to %s", path)
    return path
