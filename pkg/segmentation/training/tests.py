import json
import os
import tempfile

import torch
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from common.base.utils import seed_everything
from segmentation.datasets.corpus import Sample
from segmentation.evaluation.metrics import SegmentationMetrics
from segmentation.experiments.settings import DEFAULT_CRCFP_CONFIG
from segmentation.experiments.settings import merge_config
from segmentation.networks.bundle import build_model_from_config
from segmentation.networks.checkpoints import read_checkpoint
from .experiment import ExperimentReport
from .experiment import partition_corpus
from .experiment import run_experiment
from .schedules import PolyLR
from .schedules import poly_lr
from .trainer import NonFiniteLossError
from .trainer import TrainConfig
from .trainer import Trainer
from .trainer import scheme_weights


def tiny_config(**sections):
    base = merge_config(DEFAULT_CRCFP_CONFIG, {
        'data': {'input_size': 32, 'split_mode': 'by_image', 'fraction': '1/2'},
        'model': {'width': 8, 'projection_dim': 8, 'num_classes': 2},
        'perturb': {'K': 2},
        'contrastive': {'threshold': 0.5},
        'bank': {'negatives': 50},
        'train': {'epochs': 2, 'warmup_epochs': 1, 'batch_size': 2, 'unlabeled_batch_size': 2,
                  'seeds': [0], 'steps_per_epoch': 2, 'checkpoint_every': 1},
        'eval': {'batch_size': 4},
    })
    return merge_config(base, sections)


def make_trainer(config=None, seed=0, run_dir=None):
    config = config or tiny_config()
    seed_everything(seed)
    return Trainer(build_model_from_config(config), config, seed=seed, run_dir=run_dir)


def labeled_batch():
    images = torch.zeros(2, 3, 32, 32)
    images[:, 0, :, :16] = 1.0
    images[:, 2, :, 16:] = 1.0
    masks = torch.zeros(2, 32, 32, dtype=torch.long)
    masks[:, :, 16:] = 1
    return images, masks


def unlabeled_batch():
    generator = torch.Generator().manual_seed(5)
    crop1 = torch.rand(2, 3, 32, 32, generator=generator)
    full = torch.tensor([0.0, 0.0, 32.0, 32.0]).repeat(2, 1)
    return {
        'image': torch.rand(2, 3, 32, 32, generator=generator),
        'crop1': crop1,
        'crop2': (crop1 + 0.1 * torch.rand(2, 3, 32, 32, generator=generator)).clamp(0, 1),
        'rect1': full,
        'rect2': full.clone(),
        'overlap': torch.ones(2),
    }


def snapshot(module):
    return [parameter.detach().clone() for parameter in module.parameters()]


def changed(module, before):
    return any(not torch.equal(now, then) for now, then in zip(module.parameters(), before))


class ScheduleTests(SimpleTestCase):
    def test_endpoints_and_midpoint(self):
        self.assertEqual(poly_lr(0, 100, 0.001), 0.001)
        self.assertEqual(poly_lr(100, 100, 0.001), 0.0)
        self.assertAlmostEqual(poly_lr(50, 100, 0.001), 5.359e-4, places=6)

    def test_steps_past_the_end_stay_at_zero(self):
        self.assertEqual(poly_lr(150, 100, 0.001), 0.0)
        with self.assertRaises(ValueError):
            poly_lr(0, 0, 0.001)

    def test_scheduler_sets_every_group(self):
        optimizer = torch.optim.SGD([torch.nn.Parameter(torch.zeros(1))], lr=1.0)
        PolyLR(optimizer, 10, 0.01).step(5)
        self.assertAlmostEqual(optimizer.param_groups[0]['lr'], 0.01 * 0.5 ** 0.9)


class ConfigTests(SimpleTestCase):
    def test_schemes(self):
        loss = DEFAULT_CRCFP_CONFIG['loss']
        supervised = scheme_weights(loss | {'scheme': 'supervised'})
        self.assertEqual((supervised.w_sup, supervised.w_cont, supervised.w_cross, supervised.w_ent),
                         (1.0, 0.0, 0.0, 0.0))
        scheme2 = scheme_weights(loss | {'scheme': 'scheme2'})
        self.assertEqual((scheme2.w_cont, scheme2.w_cross, scheme2.w_ent), (0.1, 0.0, 0.01))
        full = scheme_weights(loss)
        self.assertEqual((full.w_cont, full.w_cross, full.w_ent), (0.1, 0.01, 0.01))

    def test_unknown_scheme(self):
        with self.assertRaises(ValidationError):
            scheme_weights(DEFAULT_CRCFP_CONFIG['loss'] | {'scheme': 'scheme9'})

    def test_warmup_must_be_shorter_than_training(self):
        with self.assertRaises(ValidationError):
            TrainConfig(epochs=5, warmup_epochs=5)


class TrainStepTests(SimpleTestCase):
    def test_warmup_updates_only_the_supervised_path(self):
        trainer = make_trainer()
        model = trainer.model
        projector, aux = snapshot(model.projector), snapshot(model.aux_classifiers)
        classifier = snapshot(model.classifier)
        record = trainer.train_step(labeled_batch(), unlabeled_batch(), step=0, warmup=True)
        self.assertFalse(changed(model.projector, projector))
        self.assertFalse(changed(model.aux_classifiers, aux))
        self.assertTrue(changed(model.classifier, classifier))
        self.assertEqual((record['l_cont'], record['l_cross'], record['l_ent']), (0.0, 0.0, 0.0))
        self.assertEqual(len(trainer.bank), 0)

    def test_every_part_trains_after_warmup(self):
        trainer = make_trainer()
        model = trainer.model
        trainer.bank.push(torch.randn(20, 8), torch.arange(20) % 2, torch.ones(20), step=-1)
        projector, aux = snapshot(model.projector), snapshot(model.aux_classifiers)
        record = trainer.train_step(labeled_batch(), unlabeled_batch(), step=0)
        self.assertGreater(record['l_cont'], 0.0)
        self.assertGreater(record['l_cross'], 0.0)
        self.assertGreater(record['l_ent'], 0.0)
        self.assertTrue(changed(model.projector, projector))
        self.assertTrue(changed(model.aux_classifiers, aux))
        self.assertGreater(len(trainer.bank), 20)

    def test_same_seed_same_trajectory(self):
        totals = []
        for _run in range(2):
            trainer = make_trainer(seed=3)
            totals.append([trainer.train_step(labeled_batch(), unlabeled_batch(), step)['total']
                           for step in range(10)])
        self.assertEqual(totals[0], totals[1])

    def test_overfits_one_batch(self):
        config = tiny_config(loss={'scheme': 'supervised'}, train={'base_lr': 0.05})
        trainer = make_trainer(config)
        batch = labeled_batch()
        losses = [trainer.train_step(batch, None, step)['l_sup'] for step in range(50)]
        self.assertLess(losses[-1], 0.5 * losses[0])

    def test_non_finite_loss_aborts(self):
        trainer = make_trainer()
        images, masks = labeled_batch()
        with self.assertRaises(NonFiniteLossError) as raised:
            trainer.train_step((images * float('nan'), masks), None, step=0, warmup=True)
        self.assertIn('l_sup', raised.exception.breakdown)

    def test_metrics_log_lines(self):
        with tempfile.TemporaryDirectory() as run_dir:
            trainer = make_trainer(run_dir=run_dir)
            trainer.train_step(labeled_batch(), unlabeled_batch(), step=0, warmup=True)
            trainer.train_step(labeled_batch(), unlabeled_batch(), step=1)
            with open(os.path.join(run_dir, 'metrics.log')) as handle:
                records = [json.loads(line) for line in handle]
        self.assertEqual([record['step'] for record in records], [0, 1])
        self.assertEqual([record['warmup'] for record in records], [True, False])
        self.assertTrue({'l_sup', 'l_cont', 'l_cross', 'l_ent', 'total', 'lr', 'skipped_pairs'} <= set(records[0]))


class FitTests(SimpleTestCase):
    def test_warmup_then_full_loss_with_checkpoints(self):
        labeled = [labeled_batch()] * 2
        unlabeled = [unlabeled_batch()] * 2
        scores = iter([0.3, 0.6])
        with tempfile.TemporaryDirectory() as run_dir:
            trainer = make_trainer(run_dir=run_dir)
            history = trainer.fit(labeled, unlabeled, evaluate=lambda model: {'miou': next(scores)})
            self.assertTrue(os.path.exists(os.path.join(run_dir, 'checkpoints', 'last.pt')))
            self.assertTrue(os.path.exists(os.path.join(run_dir, 'checkpoints', 'best.pt')))
        self.assertEqual([record['warmup'] for record in history], [True, True, False, False])
        self.assertEqual(history[0]['lr'], 0.001)
        self.assertLess(history[-1]['lr'], history[0]['lr'])


class ExperimentReportTests(SimpleTestCase):
    def test_single_seed_has_zero_std(self):
        report = ExperimentReport()
        report.add(0, SegmentationMetrics(miou=0.6, mean_dice=0.7, accuracy=0.8, defined=True))
        self.assertEqual(report.std['miou'], 0.0)
        self.assertEqual(report.mean['accuracy'], 0.8)

    def test_population_std(self):
        report = ExperimentReport()
        for seed, miou in enumerate((0.5, 0.7)):
            report.add(seed, SegmentationMetrics(miou=miou, mean_dice=miou, accuracy=miou, defined=True))
        self.assertAlmostEqual(report.mean['miou'], 0.6)
        self.assertAlmostEqual(report.std['miou'], 0.1)
        self.assertEqual(report.formatted('miou'), "0.6000 ± 0.1000")

    def test_run_experiment_writes_summary(self):
        images, masks = labeled_batch()
        samples = [
            Sample(image=images[0], mask=masks[0], source_id=f"img{index}", center_id=f"c{index % 2}",
                   split='test' if index >= 6 else 'train')
            for index in range(8)
        ]
        config = tiny_config(train={'epochs': 1, 'warmup_epochs': 0, 'steps_per_epoch': 1})
        with tempfile.TemporaryDirectory() as run_dir:
            report = run_experiment(config, samples, run_dir)
            self.assertTrue(os.path.exists(os.path.join(run_dir, 'reports', 'summary.csv')))
            self.assertTrue(os.path.exists(os.path.join(run_dir, 'seed_0', 'reports', 'metrics.json')))
        self.assertEqual([row['seed'] for row in report.rows], [0])

    def corpus(self, mask=None):
        images, masks = labeled_batch()
        mask = masks[0] if mask is None else mask
        return [
            Sample(image=images[0], mask=mask, source_id=f"img{index}", center_id=f"c{index % 2}",
                   split='test' if index >= 6 else 'train')
            for index in range(8)
        ]

    def test_manifest_ignore_index_reaches_training_and_evaluation(self):
        mask = labeled_batch()[1][0].clone()
        mask[:4] = 9
        config = tiny_config(train={'epochs': 1, 'warmup_epochs': 0, 'steps_per_epoch': 1})
        with tempfile.TemporaryDirectory() as run_dir:
            run_experiment(config, self.corpus(mask), run_dir, ignore_index=9)
            with open(os.path.join(run_dir, 'seed_0', 'reports', 'metrics.json')) as handle:
                result = json.load(handle)
        self.assertEqual(result['pixels'], 2 * (32 - 4) * 32)
        self.assertEqual(result['ignored'], 2 * 4 * 32)

    def test_without_validation_the_last_epoch_is_scored_once(self):
        config = tiny_config(train={'epochs': 1, 'warmup_epochs': 0, 'steps_per_epoch': 1})
        with tempfile.TemporaryDirectory() as run_dir:
            with self.assertLogs('segmentation.evaluation.evaluate', level='INFO') as logs:
                run_experiment(config, self.corpus(), run_dir)
            checkpoints = os.listdir(os.path.join(run_dir, 'seed_0', 'checkpoints'))
        self.assertEqual(checkpoints, ['last.pt'])
        self.assertEqual(sum('Evaluated' in line for line in logs.output), 1)

    def test_validation_images_pick_the_kept_checkpoint(self):
        config = tiny_config(train={'epochs': 1, 'warmup_epochs': 0, 'steps_per_epoch': 1},
                             eval={'val_fraction': 0.5})
        with tempfile.TemporaryDirectory() as run_dir:
            with self.assertLogs('segmentation.evaluation.evaluate', level='INFO') as logs:
                run_experiment(config, self.corpus(), run_dir)
            archive = read_checkpoint(os.path.join(run_dir, 'seed_0', 'checkpoints', 'best.pt'))
        self.assertIn('miou', archive['metrics'])
        # one pass on the validation images inside fit, one on the test images
        self.assertEqual(sum('Evaluated' in line for line in logs.output), 2)

    def test_maskless_labeled_samples_are_skipped_with_a_warning(self):
        samples = self.corpus()
        samples[0] = samples[0].unlabeled()
        config = tiny_config(data={'split_mode': 'by_image', 'fraction': '1'})
        with self.assertLogs('segmentation.training.experiment', level='WARNING') as logs:
            labeled, _unlabeled, _test = partition_corpus(config, samples)
        self.assertNotIn('img0', [sample.source_id for sample in labeled])
        self.assertEqual(len(labeled), 5)
        self.assertIn('Skipping 1', logs.output[0])
