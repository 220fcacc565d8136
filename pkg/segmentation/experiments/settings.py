import copy

from django.conf import settings
from django.utils.translation import gettext_lazy as _

# Defaults of every run. Sections mirror the YAML run files; any key can be
# overridden from a file, from ``--set section.key=value`` or project-wide
# through ``settings.CRCFP_CONFIG``.
DEFAULT_CRCFP_CONFIG = {
    'run': {
        'name': 'crcfp',
        'dir': None,
        'device': None,
    },
    'data': {
        'root': None,
        'manifest': 'manifest.yaml',
        'split_mode': 'by_center',
        'fraction': '1/8',
        'split_rounding': None,
        'split_seed': 0,
        # share of train images held out when the manifest marks no test split
        'test_fraction': 0.25,
        'ignore_classes': [],
        'input_size': 320,
        'crop_scale': [0.5, 1.0],
        'overlap': [0.1, 1.0],
        'num_workers': 0,
    },
    'augment': {
        'hflip': 0.5,
        'vflip': 0.5,
        'blur': 0.2,
        'blur_sigma': [0.1, 2.0],
        'color': 0.8,
        'brightness': 0.2,
        'contrast': 0.2,
        'saturation': 0.2,
        'hue': 0.05,
        'grey': 0.2,
    },
    'model': {
        'backbone': 'reference',
        'width': 256,
        'stride': 8,
        'projection_dim': 128,
        'num_classes': None,
        'weights_path': None,
    },
    'perturb': {
        'noise': [-0.3, 0.3],
        'feature_dropout': [0.75, 0.9],
        'dropout': 0.5,
        'K': 4,
        'dropout_keep': True,
        'fdrop_literal': False,
        'fdrop_drop_low': False,
        'target': 'features',
        'types': ['noise', 'feature_dropout', 'dropout'],
    },
    'contrastive': {
        'threshold': 0.75,
        'temperature': 0.1,
        'divisor': 'positives',
        'detach_target': True,
    },
    'consistency': {
        'detach_target': True,
    },
    'bank': {
        'capacity': 1200,
        'negatives': 1200,
        'sample_cap': 256,
        'push_confident_only': True,
        'draws': 'shared',
        'save_in_checkpoint': False,
    },
    'loss': {
        'scheme': 'scheme3',
        'w_sup': 1.0,
        'w_cont': 0.1,
        'w_cross': 0.01,
        'w_ent': 0.01,
    },
    'train': {
        'epochs': 80,
        'warmup_epochs': 5,
        'batch_size': 8,
        'unlabeled_batch_size': 8,
        'base_lr': 0.001,
        'lr_power': 0.9,
        'momentum': 0.9,
        'weight_decay': 0.0001,
        'seeds': [0, 1, 2],
        'steps_per_epoch': None,
        'checkpoint_every': 10,
        'eval_every': 0,
        'float64': False,
        'deterministic': True,
    },
    'eval': {
        'tile_size': None,
        'batch_size': 8,
        'accuracy_mode': 'overall',
        # share of the labeled images used to pick best.pt; 0 keeps the last epoch
        'val_fraction': 0.0,
    },
    'analysis': {
        'patch': 21,
        'neighbor_offset': None,
        'subsample': 1000,
        'seed': 0,
        'feature_source': 'decoder',
    },
}


def merge_config(base, overrides):
    """Recursive dict merge; ``overrides`` wins, ``base`` is left untouched."""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def get_default_config():
    return merge_config(DEFAULT_CRCFP_CONFIG, getattr(settings, 'CRCFP_CONFIG', {}))


# Toy corpus: background pink then haematoxylin/eosin-like purples
TOY_PALETTE = [
    (0.95, 0.85, 0.90),
    (0.55, 0.35, 0.70),
    (0.85, 0.45, 0.60),
    (0.40, 0.25, 0.55),
    (0.75, 0.60, 0.85),
    (0.60, 0.20, 0.40),
]

TOY_CENTER_SHIFT = 0.15

CONFIG_ECHO = 'config.yaml'

ANALYSIS_MODE_CHOICES = [
    ('density', _('Neighbourhood density maps')),
    ('embed', _('Feature embedding export')),
]

DENSITY_SPACE_CHOICES = [
    ('image', _('RGB input space')),
    ('feature', _('Upsampled feature space')),
]
