import json
import math
import os
import tempfile

import numpy as np
import torch
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from segmentation.datasets.corpus import Sample
from segmentation.networks.bundle import build_model
from .evaluate import evaluate_model
from .metrics import ConfusionMatrix
from .metrics import accumulate
from .metrics import metrics
from .reports import format_report
from .reports import write_report


def loop_counts(pred, gt, num_classes, ignore_index=255):
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
        if g != ignore_index:
            counts[g, p] += 1
    return counts


class AccumulateTests(SimpleTestCase):
    def test_all_ignored_leaves_matrix_unchanged(self):
        cm = ConfusionMatrix(3)
        accumulate(cm, torch.zeros(4, 4), torch.full((4, 4), 255))
        self.assertEqual(cm.total, 0)
        self.assertEqual(cm.ignored, 16)

    def test_perfect_prediction_is_diagonal(self):
        labels = torch.tensor([[0, 1], [2, 2]])
        cm = accumulate(ConfusionMatrix(3), labels, labels)
        self.assertTrue(np.array_equal(cm.counts, np.diag([1, 1, 2])))

    def test_matches_loop_count(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            pred = rng.integers(0, 4, (8, 8))
            gt = rng.integers(0, 4, (8, 8))
            gt[rng.random((8, 8)) < 0.2] = 255
            cm = accumulate(ConfusionMatrix(4), pred, gt)
            self.assertTrue(np.array_equal(cm.counts, loop_counts(pred, gt, 4)))

    def test_merge_by_addition(self):
        rng = np.random.default_rng(1)
        pred, gt = rng.integers(0, 3, (2, 6, 6)), rng.integers(0, 3, (2, 6, 6))
        whole = accumulate(ConfusionMatrix(3), pred, gt)
        merged = accumulate(ConfusionMatrix(3), pred[0], gt[0]) + accumulate(ConfusionMatrix(3), pred[1], gt[1])
        self.assertTrue(np.array_equal(whole.counts, merged.counts))

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            accumulate(ConfusionMatrix(2), torch.zeros(3), torch.zeros(4))


class MetricsTests(SimpleTestCase):
    def test_hand_computed_matrix(self):
        result = metrics(ConfusionMatrix(2, counts=[[3, 1], [2, 4]]))
        self.assertAlmostEqual(result.iou[0], 0.5)
        self.assertAlmostEqual(result.iou[1], 4 / 7)
        self.assertAlmostEqual(result.accuracy, 0.7)
        self.assertAlmostEqual(result.dice[0], 6 / 9)
        self.assertAlmostEqual(result.miou, (0.5 + 4 / 7) / 2)

    def test_class_mean_accuracy(self):
        result = metrics(ConfusionMatrix(2, counts=[[3, 1], [2, 4]]), accuracy_mode='class_mean')
        self.assertAlmostEqual(result.accuracy, (3 / 4 + 4 / 6) / 2)
        with self.assertRaises(ValidationError):
            metrics(ConfusionMatrix(2), accuracy_mode='median')

    def test_perfect_prediction(self):
        result = metrics(ConfusionMatrix(3, counts=np.diag([5, 0, 2])))
        self.assertEqual(result.absent_classes, [1])
        self.assertEqual(result.miou, 1.0)
        self.assertEqual(result.mean_dice, 1.0)
        self.assertEqual(result.accuracy, 1.0)

    def test_disjoint_class_scores_zero(self):
        result = metrics(ConfusionMatrix(2, counts=[[0, 4], [0, 3]]))
        self.assertEqual(result.iou[0], 0.0)
        self.assertEqual(result.dice[0], 0.0)

    def test_dice_iou_identity(self):
        rng = np.random.default_rng(2)
        result = metrics(ConfusionMatrix(5, counts=rng.integers(0, 50, (5, 5))))
        for iou, dice in zip(result.iou, result.dice):
            self.assertAlmostEqual(dice, 2 * iou / (1 + iou))

    def test_class_permutation(self):
        rng = np.random.default_rng(3)
        counts = rng.integers(0, 30, (4, 4))
        order = [2, 0, 3, 1]
        base = metrics(ConfusionMatrix(4, counts=counts))
        permuted = metrics(ConfusionMatrix(4, counts=counts[np.ix_(order, order)]))
        self.assertTrue(np.allclose(permuted.iou, np.asarray(base.iou)[order]))
        self.assertAlmostEqual(permuted.miou, base.miou)

    def test_empty_matrix_is_undefined(self):
        result = metrics(ConfusionMatrix(3))
        self.assertFalse(result.defined)
        self.assertTrue(math.isnan(result.miou))
        self.assertIn("undefined", format_report(result))


class EvaluateModelTests(SimpleTestCase):
    def test_tiles_count_every_pixel_once(self):
        torch.manual_seed(0)
        model = build_model(num_classes=3, width=8)
        samples = [
            Sample(image=torch.rand(3, 20, 20), mask=torch.randint(0, 3, (20, 20)), source_id=str(index))
            for index in range(2)
        ]
        samples.append(Sample(image=torch.rand(3, 20, 20), source_id='unlabeled'))
        result = evaluate_model(model, samples, num_classes=3, tile_size=16, batch_size=3)
        self.assertTrue(result.defined)
        self.assertEqual(result.pixels, 800)
        self.assertTrue(model.training)

    def test_report_files(self):
        result = metrics(ConfusionMatrix(2, counts=[[3, 1], [2, 4]]))
        with tempfile.TemporaryDirectory() as root:
            csv_path, json_path = write_report(result, root, class_names=('tumor', 'stroma'))
            with open(csv_path) as handle:
                lines = handle.read().strip().splitlines()
            self.assertEqual(lines[0].strip(), "class,iou,dice,present")
            self.assertTrue(lines[1].startswith("tumor,0.5"))
            with open(json_path) as handle:
                self.assertAlmostEqual(json.load(handle)['accuracy'], 0.7)
            self.assertTrue(os.path.exists(csv_path))
        self.assertIn("stroma", format_report(result, class_names=('tumor', 'stroma')))
