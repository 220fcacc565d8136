import json
import logging
import os
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import tablib
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from common.base.utils import resolve_device
from common.base.utils import seed_everything
from common.settings import DEFAULT_IGNORE_INDEX
from segmentation.datasets.augment import AugmentPolicy
from segmentation.datasets.corpus import train_test_partition
from segmentation.datasets.loaders import LabeledDataset
from segmentation.datasets.loaders import UnlabeledDataset
from segmentation.datasets.loaders import build_loader
from segmentation.datasets.splits import SplitSpec
from segmentation.datasets.splits import holdout_split
from segmentation.datasets.splits import split_labeled
from segmentation.evaluation.evaluate import evaluate_model
from segmentation.evaluation.reports import write_report
from segmentation.networks.bundle import build_model_from_config
from segmentation.networks.checkpoints import load_checkpoint
from .settings import CHECKPOINTS_DIR
from .settings import REPORTS_DIR
from .trainer import Trainer


logger = logging.getLogger(__name__)

SUMMARY_METRICS = ('miou', 'mean_dice', 'accuracy')


@dataclass
class ExperimentReport:
    """One row of metrics per seed, their mean and population std."""
    rows: list = field(default_factory=list)

    def add(self, seed, result):
        self.rows.append({'seed': seed} | {name: getattr(result, name) for name in SUMMARY_METRICS})

    def _column(self, name):
        return np.asarray([row[name] for row in self.rows], dtype=np.float64)

    @property
    def mean(self):
        return {name: float(self._column(name).mean()) for name in SUMMARY_METRICS}

    @property
    def std(self):
        return {name: float(self._column(name).std(ddof=0)) for name in SUMMARY_METRICS}

    def dataset(self):
        headers = ('seed', *SUMMARY_METRICS)
        data = [tuple(row[name] for name in headers) for row in self.rows]
        data.append(('mean', *(self.mean[name] for name in SUMMARY_METRICS)))
        data.append(('std', *(self.std[name] for name in SUMMARY_METRICS)))
        return tablib.Dataset(*data, headers=headers)

    def write(self, out_dir, name='summary'):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{name}.csv"), 'w', newline='') as handle:
            handle.write(self.dataset().csv)
        with open(os.path.join(out_dir, f"{name}.json"), 'w') as handle:
            json.dump({'rows': self.rows, 'mean': self.mean, 'std': self.std}, handle, indent=2)

    def formatted(self, name):
        return f"{self.mean[name]:.4f} ± {self.std[name]:.4f}"


def partition_corpus(config, samples):
    """(labeled, unlabeled, test) samples of a corpus under ``config['data']``."""
    data = config['data']
    train, test = train_test_partition(samples)
    if not test:
        logger.info("No test entries in the manifest, holding out %s of the images", data['test_fraction'])
        train, test = holdout_split(train, float(data['test_fraction']), seed=int(data['split_seed']))
    if not train:
        raise ValidationError(_('The corpus has no training images'))
    spec = SplitSpec(
        mode=data['split_mode'],
        fraction=data['fraction'],
        seed=int(data['split_seed']),
        rounding=data.get('split_rounding'),
    )
    labeled, unlabeled = split_labeled(train, spec)
    maskless = [sample for sample in labeled if not sample.is_labeled]
    if maskless:
        logger.warning("Skipping %s labeled-split samples without a mask: %s",
                       len(maskless), [sample.source_id for sample in maskless[:10]])
        labeled = [sample for sample in labeled if sample.is_labeled]
    if not labeled:
        raise ValidationError(_('The labeled split has no masks'))
    logger.info("Split: %s labeled, %s unlabeled, %s test", len(labeled), len(unlabeled), len(test))
    return labeled, unlabeled, test


def validation_split(config, labeled):
    """
    (labeled, validation): ``eval.val_fraction`` of the labeled images are
    set aside for checkpoint selection. With a zero fraction there is no
    validation set and the last epoch is kept.
    """
    fraction = float(config['eval'].get('val_fraction') or 0)
    if fraction <= 0:
        return labeled, []
    labeled, validation = holdout_split(labeled, fraction, seed=int(config['data']['split_seed']))
    logger.info("Validation: %s of the labeled images", len(validation))
    return labeled, validation


def build_loaders(config, labeled, unlabeled, seed):
    data, train = config['data'], config['train']
    size = (int(data['input_size']),) * 2
    policy = AugmentPolicy.from_config(config['augment'])
    workers = int(data['num_workers'])
    labeled_loader = build_loader(
        LabeledDataset(labeled, size, policy, seed=seed, scale_range=tuple(data['crop_scale'])),
        batch_size=int(train['batch_size']), shuffle=True, seed=seed, num_workers=workers)
    unlabeled_loader = None
    if unlabeled:
        unlabeled_loader = build_loader(
            UnlabeledDataset(unlabeled, size, policy, tuple(data['overlap']),
                             crop_scale=tuple(data['crop_scale']), seed=seed),
            batch_size=int(train['unlabeled_batch_size']), shuffle=True, seed=seed, num_workers=workers)
    return labeled_loader, unlabeled_loader


def run_experiment(config, samples, run_dir, num_classes=None, class_names=(), ignore_index=DEFAULT_IGNORE_INDEX):
    """
    Train and evaluate one model per seed of ``train.seeds`` on the same
    split and write ``reports/summary.{csv,json}`` under ``run_dir``.

    The test images are scored once per seed, on ``best.pt`` (chosen on the
    validation images) when ``eval.val_fraction`` is set and on the final
    weights (``last.pt``) otherwise.
    """
    labeled, unlabeled, test = partition_corpus(config, samples)
    labeled, validation = validation_split(config, labeled)
    device = resolve_device(config['run'].get('device'))
    eval_section = config['eval']
    tile_size = int(eval_section.get('tile_size') or config['data']['input_size'])
    report = ExperimentReport()

    for seed in config['train']['seeds']:
        seed = int(seed)
        seed_everything(seed, deterministic=bool(config['train']['deterministic']))
        model = build_model_from_config(config, num_classes=num_classes)
        seed_dir = os.path.join(run_dir, f"seed_{seed}")
        trainer = Trainer(model, config, seed=seed, run_dir=seed_dir, device=device, ignore_index=ignore_index)
        labeled_loader, unlabeled_loader = build_loaders(config, labeled, unlabeled, seed)

        def evaluate(trained, images):
            return evaluate_model(
                trained, images, model.num_classes, tile_size=tile_size,
                batch_size=int(eval_section['batch_size']), device=device,
                accuracy_mode=eval_section['accuracy_mode'], ignore_index=ignore_index)

        select = (lambda trained: evaluate(trained, validation).as_dict()) if validation else None
        trainer.fit(labeled_loader, unlabeled_loader, evaluate=select)
        kept = 'best.pt' if validation else 'last.pt'
        if validation:
            load_checkpoint(os.path.join(seed_dir, CHECKPOINTS_DIR, kept), trainer.model)
        result = evaluate(trainer.model, test)
        write_report(result, os.path.join(seed_dir, REPORTS_DIR), class_names=class_names)
        report.add(seed, result)
        logger.info("Seed %s: mIoU %.4f (%s)", seed, result.miou, kept)

    report.write(os.path.join(run_dir, REPORTS_DIR))
    logger.info("mIoU over %s seeds: %s", len(report.rows), report.formatted('miou'))
    return report
