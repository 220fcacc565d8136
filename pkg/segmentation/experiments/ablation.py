import logging
import os
import re

import tablib
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _
from tqdm import tqdm

from common.settings import DEFAULT_IGNORE_INDEX
from segmentation.training.experiment import run_experiment
from segmentation.training.settings import SCHEME_PARTS
from .config import write_config
from .settings import merge_config


logger = logging.getLogger(__name__)

ABLATION_HEADERS = ('variant', 'miou', 'miou_std', 'mean_dice', 'mean_dice_std', 'accuracy', 'accuracy_std')


def parse_list(value, cast=str):
    if not value:
        return []
    return [cast(item.strip()) for item in value.split(',') if item.strip()]


def ablation_variants(negatives=(), aux_classifiers=(), schemes=()):
    """(name, config overrides) of every swept setting, one axis at a time."""
    variants = [(f"negatives_{count}", {'bank': {'negatives': count}}) for count in negatives]
    variants += [(f"K_{count}", {'perturb': {'K': count}}) for count in aux_classifiers]
    for scheme in schemes:
        if scheme not in SCHEME_PARTS:
            raise ValidationError(_('Unknown scheme "%(scheme)s"'), params={'scheme': scheme})
        variants.append((scheme, {'loss': {'scheme': scheme}}))
    if not variants:
        raise ValidationError(_('Nothing to sweep: give --negatives, --aux-classifiers or --schemes'))
    return variants


def run_ablation(config, samples, run_dir, variants, class_names=(), ignore_index=DEFAULT_IGNORE_INDEX):
    """Run every variant into ``run_dir/<variant>`` and write ``reports/ablation.{csv,json}``."""
    rows = []
    for name, overrides in tqdm(variants, desc="ablation", unit="variant"):
        variant_config = merge_config(config, overrides)
        variant_dir = os.path.join(run_dir, re.sub(r'[^\w.-]', '_', name))
        variant_config['run']['dir'] = variant_dir
        write_config(variant_config, variant_dir)
        logger.info("Ablation variant %s", name)
        report = run_experiment(variant_config, samples, variant_dir, class_names=class_names,
                                ignore_index=ignore_index)
        mean, std = report.mean, report.std
        rows.append((name, mean['miou'], std['miou'], mean['mean_dice'], std['mean_dice'],
                     mean['accuracy'], std['accuracy']))

    dataset = tablib.Dataset(*rows, headers=ABLATION_HEADERS)
    reports = os.path.join(run_dir, 'reports')
    os.makedirs(reports, exist_ok=True)
    with open(os.path.join(reports, 'ablation.csv'), 'w', newline='') as handle:
        handle.write(dataset.csv)
    with open(os.path.join(reports, 'ablation.json'), 'w') as handle:
        handle.write(dataset.json)
    return dataset


def format_ablation(dataset):
    lines = [f"{'variant':<16}{'mIoU':>18}{'Dice':>18}{'accuracy':>18}"]
    for row in dataset.dict:
        cells = "".join(f"{row[name]:>10.4f} ± {row[name + '_std']:.4f}" for name in ('miou', 'mean_dice', 'accuracy'))
        lines.append(f"{row['variant']:<16}{cells}")
    return "\n".join(lines)
