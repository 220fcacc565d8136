import math

import torch
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from segmentation.networks.bundle import PredictionMap
from .alignment import align_overlap
from .consistency import cross_consistency
from .contrastive import ContrastiveConfig
from .contrastive import ContrastiveContext
from .contrastive import build_contexts
from .contrastive import directional_contrastive
from .contrastive import directional_contrastive_pair
from .entropy import entropy_loss
from .oracles import cross_consistency_oracle
from .oracles import directional_contrastive_pair_oracle
from .oracles import entropy_oracle
from .oracles import supervised_ce_oracle
from .supervised import supervised_ce
from .total import LossParts
from .total import LossWeights
from .total import total_loss
from .utils import loss_counters


def prediction(logits, upsampled=False):
    return PredictionMap(logits=logits, probs=logits.softmax(dim=1), upsampled=upsampled)


def prediction_from_probs(probs):
    return PredictionMap(logits=probs.log(), probs=probs)


def assert_close(test, value, expected, rel=1e-5):
    test.assertLessEqual(abs(float(value) - expected), rel * max(1.0, abs(expected)))


def random_context(generator, size=64, dim=16, classes=4, bank=32, dtype=torch.float64, **kwargs):
    options = {'generator': generator, 'dtype': dtype}
    return ContrastiveContext(
        phi1=torch.randn(size, dim, **options),
        phi2=torch.randn(size, dim, **options),
        conf1=0.5 + 0.5 * torch.rand(size, **options),
        conf2=0.5 + 0.5 * torch.rand(size, **options),
        pl1=torch.randint(0, classes, (size,), generator=generator),
        pl2=torch.randint(0, classes, (size,), generator=generator),
        negatives=torch.randn(bank, dim, **options),
        negative_labels=torch.randint(0, classes, (bank,), generator=generator),
        **kwargs,
    )


def oracle_of(ctx):
    return directional_contrastive_pair_oracle(
        ctx.phi1, ctx.phi2, ctx.conf1, ctx.conf2, ctx.pl1, ctx.pl2, ctx.negatives, ctx.negative_labels,
        ctx.threshold, ctx.temperature, ctx.divisor)


class SupervisedCrossEntropyTests(SimpleTestCase):
    def test_perfect_prediction(self):
        target = torch.randint(0, 3, (2, 4, 4))
        logits = 50.0 * F.one_hot(target, 3).permute(0, 3, 1, 2).double()
        self.assertAlmostEqual(float(supervised_ce(prediction(logits, True), target)), 0.0, places=6)

    def test_uniform_prediction(self):
        loss = supervised_ce(prediction(torch.zeros(1, 5, 4, 4), True), torch.randint(0, 5, (1, 4, 4)))
        self.assertAlmostEqual(float(loss), math.log(5), places=5)

    def test_matches_oracle(self):
        generator = torch.Generator().manual_seed(0)
        for _instance in range(100):
            logits = torch.randn(2, 3, 4, 4, generator=generator, dtype=torch.float64)
            target = torch.randint(0, 3, (2, 4, 4), generator=generator)
            target[torch.rand(2, 4, 4, generator=generator) < 0.2] = 255
            if bool((target == 255).all()):
                continue
            pred = prediction(logits, True)
            assert_close(self, supervised_ce(pred, target), supervised_ce_oracle(pred.probs, target, 255))

    def test_all_ignored_is_zero_and_counted(self):
        before = loss_counters['all_ignore_targets']
        logits = torch.randn(1, 3, 4, 4, requires_grad=True)
        with self.assertLogs('segmentation.losses', level='WARNING'):
            loss = supervised_ce(prediction(logits, True), torch.full((1, 4, 4), 255))
        self.assertEqual(float(loss), 0.0)
        self.assertEqual(loss_counters['all_ignore_targets'], before + 1)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            supervised_ce(prediction(torch.zeros(1, 3, 4, 4), True), torch.zeros(1, 8, 8, dtype=torch.long))

    def test_gradient(self):
        target = torch.randint(0, 3, (1, 3, 3))
        logits = torch.randn(1, 3, 3, 3, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda x: supervised_ce(prediction(x, True), target), (logits,)))


class AlignOverlapTests(SimpleTestCase):
    def test_full_overlap_is_identity(self):
        values = torch.randn(6, 5, 7, dtype=torch.float64)
        aligned1, aligned2 = align_overlap(values, values, (0, 0, 56, 40), (0, 0, 56, 40), stride=8)
        expected = values.flatten(1).t()
        self.assertTrue(torch.allclose(aligned1, expected, atol=1e-10))
        self.assertTrue(torch.allclose(aligned2, expected, atol=1e-10))

    def test_grid_follows_the_first_rectangle(self):
        values = torch.randn(3, 10, 10)
        aligned1, aligned2 = align_overlap(values, values, (0, 0, 32, 16), (0, 0, 64, 32), stride=8)
        self.assertEqual(tuple(aligned1.shape), (8, 3))
        self.assertEqual(tuple(aligned2.shape), (8, 3))

    def test_coordinates_agree_within_half_a_cell(self):
        stride, out, cells = 8, 64, 8
        boxes = [(10, 20, 96), (50, 40, 96)]
        overlap = (50, 40, 106, 116)

        def coordinate_map(box):
            x, y, side = box
            centers = (torch.arange(cells, dtype=torch.float64) + 0.5) * stride * side / out
            xs = (x + centers).view(1, cells).expand(cells, cells)
            ys = (y + centers).view(cells, 1).expand(cells, cells)
            return torch.stack([xs, ys])

        def to_crop(box):
            x, y, side = box
            scale = out / side
            return ((overlap[0] - x) * scale, (overlap[1] - y) * scale,
                    (overlap[2] - x) * scale, (overlap[3] - y) * scale)

        aligned1, aligned2 = align_overlap(coordinate_map(boxes[0]), coordinate_map(boxes[1]),
                                           to_crop(boxes[0]), to_crop(boxes[1]), stride)
        cell = stride * 96 / out
        self.assertLessEqual(float((aligned1 - aligned2).abs().max()), 0.5 * cell)

    def test_tiny_overlap_is_skipped(self):
        before = loss_counters['skipped_pairs']
        values = torch.randn(2, 4, 4)
        with self.assertLogs('segmentation.losses', level='WARNING'):
            self.assertIsNone(align_overlap(values, values, (0, 0, 3, 32), (0, 0, 3, 32), stride=8))
        self.assertEqual(loss_counters['skipped_pairs'], before + 1)


class DirectionalContrastiveTests(SimpleTestCase):
    def test_no_confident_pixel_gives_exact_zero(self):
        generator = torch.Generator().manual_seed(0)
        ctx = random_context(generator)
        ctx.conf1.clamp_(max=0.75)
        self.assertEqual(float(directional_contrastive_pair(ctx)), 0.0)

    def test_identical_positive_without_negatives(self):
        phi = torch.randn(1, 8, dtype=torch.float64)
        ctx = ContrastiveContext(phi1=phi, phi2=phi.clone(), conf1=torch.tensor([0.8]), conf2=torch.tensor([0.9]),
                                 pl1=torch.tensor([1]), pl2=torch.tensor([1]))
        self.assertAlmostEqual(float(directional_contrastive_pair(ctx)), 0.0, places=10)

    def test_matches_oracle(self):
        generator = torch.Generator().manual_seed(1)
        for instance in range(100):
            ctx = random_context(generator, classes=3 + instance % 3, bank=instance % 33)
            assert_close(self, directional_contrastive_pair(ctx), oracle_of(ctx))

    def test_small_grid_with_four_negatives(self):
        generator = torch.Generator().manual_seed(2)
        ctx = random_context(generator, size=4, classes=3, bank=4, temperature=0.1)
        assert_close(self, directional_contrastive_pair(ctx), oracle_of(ctx))

    def test_pixel_divisor(self):
        generator = torch.Generator().manual_seed(3)
        ctx = random_context(generator, divisor='pixels')
        assert_close(self, directional_contrastive_pair(ctx), oracle_of(ctx))

    def test_symmetric_inputs_give_zero(self):
        phi = torch.randn(16, 8, dtype=torch.float64)
        conf = torch.full((16,), 0.9, dtype=torch.float64)
        labels = torch.randint(0, 3, (16,))
        ctx = ContrastiveContext(phi1=phi, phi2=phi, conf1=conf, conf2=conf, pl1=labels, pl2=labels)
        self.assertEqual(float(directional_contrastive(ctx, ctx.swapped())), 0.0)

    def test_both_directions_add_up(self):
        generator = torch.Generator().manual_seed(4)
        ctx12 = random_context(generator)
        ctx21 = ctx12.swapped(negatives=ctx12.negatives, negative_labels=ctx12.negative_labels)
        assert_close(self, directional_contrastive(ctx12, ctx21), oracle_of(ctx12) + oracle_of(ctx21))

    def test_lower_target_confidence_gates_the_pixel(self):
        generator = torch.Generator().manual_seed(5)
        ctx = random_context(generator, size=8, bank=0)
        ctx.conf1.fill_(0.9)
        ctx.conf2.fill_(0.95)
        ctx.conf2[3] = 0.85
        phi1 = ctx.phi1.clone().requires_grad_()
        ctx.phi1 = phi1
        directional_contrastive_pair(ctx).backward()
        self.assertTrue(bool((phi1.grad[3] == 0).all()))
        self.assertTrue(bool((phi1.grad[0] != 0).any()))

    def test_target_and_bank_receive_no_gradient(self):
        generator = torch.Generator().manual_seed(6)
        ctx = random_context(generator)
        ctx.phi1.requires_grad_()
        ctx.phi2.requires_grad_()
        ctx.negatives.requires_grad_()
        grads = torch.autograd.grad(directional_contrastive_pair(ctx), [ctx.phi1, ctx.phi2, ctx.negatives],
                                    allow_unused=True)
        self.assertTrue(bool((grads[0] != 0).any()))
        for grad in grads[1:]:
            self.assertTrue(grad is None or bool((grad == 0).all()))

    def test_full_gradient_flow_variant(self):
        generator = torch.Generator().manual_seed(7)
        ctx = random_context(generator, detach_target=False)
        ctx.phi2.requires_grad_()
        (grad,) = torch.autograd.grad(directional_contrastive_pair(ctx), [ctx.phi2])
        self.assertTrue(bool((grad != 0).any()))

    def test_cosine_scale_invariance(self):
        generator = torch.Generator().manual_seed(8)
        ctx = random_context(generator)
        reference = float(directional_contrastive_pair(ctx))
        scales = 0.1 + 10 * torch.rand(ctx.size, 1, generator=generator, dtype=torch.float64)
        ctx.phi1 = ctx.phi1 * scales
        ctx.phi2 = ctx.phi2 * 3.0
        ctx.negatives = ctx.negatives * 0.2
        self.assertLessEqual(abs(float(directional_contrastive_pair(ctx)) - reference), 1e-6)

    def test_gradient(self):
        generator = torch.Generator().manual_seed(9)
        for _instance in range(20):
            ctx = random_context(generator, size=6, dim=4, bank=5)
            phi1 = ctx.phi1.clone().requires_grad_()

            def loss_of(x, ctx=ctx):
                ctx.phi1 = x
                return directional_contrastive_pair(ctx)

            self.assertTrue(torch.autograd.gradcheck(loss_of, (phi1,), rtol=1e-3))

    def test_build_contexts_detaches_confidences(self):
        probs1 = torch.rand(10, 4).softmax(dim=1).requires_grad_()
        probs2 = torch.rand(10, 4).softmax(dim=1)
        bank = (torch.randn(3, 8), torch.tensor([0, 1, 2]))
        ctx12, ctx21 = build_contexts(torch.randn(10, 8), torch.randn(10, 8), probs1, probs2,
                                      ContrastiveConfig(), negatives12=bank)
        self.assertFalse(ctx12.conf1.requires_grad)
        self.assertTrue(torch.equal(ctx12.pl1, probs1.argmax(dim=1)))
        self.assertTrue(torch.equal(ctx21.phi1, ctx12.phi2))
        self.assertIsNone(ctx21.negatives)

    def test_mismatched_lengths(self):
        with self.assertRaises(ValueError):
            ContrastiveContext(phi1=torch.randn(3, 4), phi2=torch.randn(2, 4), conf1=torch.rand(3),
                               conf2=torch.rand(3), pl1=torch.zeros(3), pl2=torch.zeros(3))

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            ContrastiveConfig(threshold=1.5)
        with self.assertRaises(ValidationError):
            ContrastiveConfig(divisor='batch')


class CrossConsistencyTests(SimpleTestCase):
    def test_identical_predictions(self):
        main = prediction(torch.randn(2, 4, 3, 3))
        self.assertEqual(float(cross_consistency(main, [main, main])), 0.0)

    def test_disagreeing_one_hot_predictions(self):
        classes = 5
        main = prediction_from_probs(F.one_hot(torch.zeros(1, 3, 3, dtype=torch.long), classes)
                                     .permute(0, 3, 1, 2).double())
        aux = prediction_from_probs(F.one_hot(torch.ones(1, 3, 3, dtype=torch.long), classes)
                                    .permute(0, 3, 1, 2).double())
        self.assertAlmostEqual(float(cross_consistency(main, [aux])), 2 / classes)

    def test_matches_oracle(self):
        generator = torch.Generator().manual_seed(0)
        for _instance in range(100):
            main = prediction(torch.randn(1, 3, 4, 4, generator=generator, dtype=torch.float64))
            aux = [prediction(torch.randn(1, 3, 4, 4, generator=generator, dtype=torch.float64)) for _k in range(12)]
            assert_close(self, cross_consistency(main, aux),
                         cross_consistency_oracle(main.probs, [p.probs for p in aux]), rel=1e-6)

    def test_main_prediction_is_a_constant_target(self):
        main_logits = torch.randn(1, 3, 2, 2, requires_grad=True)
        aux_logits = torch.randn(1, 3, 2, 2, requires_grad=True)
        cross_consistency(prediction(main_logits), [prediction(aux_logits)]).backward()
        self.assertIsNone(main_logits.grad)
        self.assertIsNotNone(aux_logits.grad)

    def test_empty_auxiliary_list(self):
        with self.assertRaises(ValueError):
            cross_consistency(prediction(torch.randn(1, 3, 2, 2)), [])

    def test_gradient(self):
        main = prediction(torch.randn(1, 3, 3, 3, dtype=torch.float64))
        logits = torch.randn(1, 3, 3, 3, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda x: cross_consistency(main, [prediction(x)]), (logits,)))


class EntropyTests(SimpleTestCase):
    def test_one_hot_has_no_entropy(self):
        probs = F.one_hot(torch.randint(0, 4, (2, 3, 3)), 4).permute(0, 3, 1, 2).double()
        self.assertEqual(float(entropy_loss(prediction_from_probs(probs))), 0.0)

    def test_uniform(self):
        self.assertAlmostEqual(float(entropy_loss(prediction(torch.zeros(1, 5, 4, 4)))), math.log(5), places=5)

    def test_two_class_value(self):
        probs = torch.tensor([0.75, 0.25], dtype=torch.float64).view(1, 2, 1, 1)
        self.assertAlmostEqual(float(entropy_loss(prediction_from_probs(probs))), 0.5623, places=4)

    def test_matches_oracle(self):
        generator = torch.Generator().manual_seed(0)
        for _instance in range(100):
            pred = prediction(torch.randn(2, 4, 3, 3, generator=generator, dtype=torch.float64))
            assert_close(self, entropy_loss(pred), entropy_oracle(pred.probs))

    def test_sharpening_never_increases_entropy(self):
        generator = torch.Generator().manual_seed(1)
        for _instance in range(50):
            logits = torch.randn(1, 5, 4, 4, generator=generator, dtype=torch.float64)
            sharpened = prediction(2.0 * logits)
            self.assertLessEqual(float(entropy_loss(sharpened)), float(entropy_loss(prediction(logits))) + 1e-12)

    def test_gradient(self):
        logits = torch.randn(1, 4, 3, 3, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda x: entropy_loss(prediction(x)), (logits,)))


class TotalLossTests(SimpleTestCase):
    def test_supervised_only_weights(self):
        parts = LossParts(torch.tensor(0.7), torch.tensor(2.0), torch.tensor(3.0), torch.tensor(4.0))
        total, breakdown = total_loss(parts, LossWeights.supervised_only())
        self.assertAlmostEqual(float(total), 0.7, places=6)
        self.assertAlmostEqual(breakdown['l_cont'], 2.0)

    def test_all_zero(self):
        parts = LossParts(torch.tensor(0.0), torch.tensor(0.0), torch.tensor(0.0), torch.tensor(0.0))
        self.assertEqual(float(total_loss(parts, LossWeights())[0]), 0.0)

    def test_default_weights(self):
        ones = LossParts(*[torch.tensor(1.0, dtype=torch.float64) for _part in range(4)])
        total, breakdown = total_loss(ones, LossWeights())
        self.assertAlmostEqual(float(total), 1.12, places=12)
        self.assertAlmostEqual(breakdown['total'], 1.12, places=12)

    def test_missing_parts_count_as_zero(self):
        total, breakdown = total_loss(LossParts(torch.tensor(1.5)), LossWeights())
        self.assertAlmostEqual(float(total), 1.5)
        self.assertEqual(breakdown['l_ent'], 0.0)

    def test_weight_validation(self):
        with self.assertRaises(ValidationError):
            LossWeights(w_sup=0.0)
        with self.assertRaises(ValidationError):
            LossWeights(w_cont=-0.1)
