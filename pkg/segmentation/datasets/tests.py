import os
import tempfile
from collections import Counter
from dataclasses import replace
from fractions import Fraction

import numpy as np
import torch
import yaml
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from PIL import Image

from .augment import AugmentPolicy
from .augment import augment
from .corpus import Sample
from .corpus import load_corpus
from .crops import rect_to_source
from .crops import sample_crop_pair
from .loaders import EvaluationDataset
from .loaders import UnlabeledDataset
from .splits import SplitSpec
from .splits import split_labeled


def write_corpus(root, masks, classes=3, size=16, extra_entries=()):
    """``masks`` maps image name -> mask array or None."""
    rng = np.random.default_rng(0)
    entries = []
    for name, mask in masks.items():
        pixels = (rng.random((size, size, 3)) * 255).astype(np.uint8)
        Image.fromarray(pixels).save(os.path.join(root, f"{name}.png"))
        entry = {'path': f"{name}.png", 'center_id': name[0]}
        if mask is not None:
            Image.fromarray(mask.astype(np.uint8)).save(os.path.join(root, f"{name}_mask.png"))
            entry['mask_path'] = f"{name}_mask.png"
        entries.append(entry)
    entries.extend(extra_entries)
    with open(os.path.join(root, 'manifest.yaml'), 'w') as handle:
        yaml.safe_dump({'classes': classes, 'ignore_index': 255, 'entries': entries}, handle)


def make_samples(center_count, per_center=2, size=8):
    samples = []
    for center in range(center_count):
        for index in range(per_center):
            samples.append(Sample(
                image=torch.rand(3, size, size),
                mask=torch.zeros(size, size, dtype=torch.long),
                source_id=f"c{center:02d}_{index}",
                center_id=f"c{center:02d}",
            ))
    return samples


class LoadCorpusTests(SimpleTestCase):
    def test_empty_directory_is_empty_corpus(self):
        with tempfile.TemporaryDirectory() as root:
            self.assertEqual(load_corpus(root), [])

    def test_labeled_and_unlabeled_counts(self):
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:, :] = 2
        with tempfile.TemporaryDirectory() as root:
            write_corpus(root, {'b_img': mask, 'a_img': mask, 'c_img': None})
            samples = load_corpus(root)

        self.assertEqual([sample.source_id for sample in samples], ['a_img', 'b_img', 'c_img'])
        self.assertEqual(sum(sample.is_labeled for sample in samples), 2)
        self.assertEqual(tuple(samples[0].image.shape), (3, 16, 16))
        self.assertEqual(samples[0].mask.dtype, torch.int64)
        self.assertTrue(float(samples[0].image.max()) <= 1.0)

    def test_mask_value_outside_classes_is_rejected(self):
        mask = np.full((16, 16), 3, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as root:
            write_corpus(root, {'img': mask}, classes=3)
            with self.assertRaises(ValidationError) as raised:
                load_corpus(root)
        self.assertIn('img_mask.png', str(raised.exception))

    def test_ignore_value_is_accepted_and_classes_remapped(self):
        mask = np.full((16, 16), 255, dtype=np.uint8)
        mask[:8] = 2
        with tempfile.TemporaryDirectory() as root:
            write_corpus(root, {'img': mask}, classes=3)
            samples = load_corpus(root, ignore_classes=(2,))
        self.assertTrue(bool((samples[0].mask == 255).all()))

    def test_missing_mask_file_is_an_error(self):
        with tempfile.TemporaryDirectory() as root:
            write_corpus(root, {'img': None}, extra_entries=[{'path': 'img.png', 'mask_path': 'gone.png'}])
            with self.assertRaises(ValidationError):
                load_corpus(root)

    def test_directory_without_manifest(self):
        with tempfile.TemporaryDirectory() as root:
            Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(os.path.join(root, 'stray.png'))
            with self.assertRaises(ValidationError):
                load_corpus(root)


class SplitLabeledTests(SimpleTestCase):
    def test_one_eighth_of_fourteen_centers_is_one_center(self):
        samples = make_samples(14)
        labeled, unlabeled = split_labeled(samples, SplitSpec('by_center', Fraction(1, 8), seed=3))
        self.assertEqual(len({sample.center_id for sample in labeled}), 1)
        self.assertEqual(len(labeled) + len(unlabeled), len(samples))
        self.assertTrue(all(sample.mask is None for sample in unlabeled))

    def test_center_counts_per_fraction(self):
        samples = make_samples(14)
        for fraction, expected in [(Fraction(1, 4), 3), (Fraction(1, 2), 7)]:
            labeled, _unlabeled = split_labeled(samples, SplitSpec('by_center', fraction))
            self.assertEqual(len({sample.center_id for sample in labeled}), expected)

    def test_full_fraction_leaves_nothing_unlabeled(self):
        labeled, unlabeled = split_labeled(make_samples(5), SplitSpec('by_image', 1))
        self.assertEqual(len(labeled), 10)
        self.assertEqual(unlabeled, [])

    def test_by_image_rounds_up(self):
        labeled, unlabeled = split_labeled(make_samples(5, per_center=3), SplitSpec('by_image', '1/8'))
        self.assertEqual(len(labeled), 2)
        self.assertEqual(len(unlabeled), 13)

    def test_split_is_deterministic(self):
        samples = make_samples(14)
        spec = SplitSpec('by_center', '1/4', seed=11)
        first = [sample.source_id for sample in split_labeled(samples, spec)[0]]
        second = [sample.source_id for sample in split_labeled(list(reversed(samples)), spec)[0]]
        self.assertEqual(sorted(first), sorted(second))

    def test_zero_labeled_is_an_error(self):
        with self.assertRaises(ValidationError):
            split_labeled(make_samples(14), SplitSpec('by_center', '1/32'))

    def test_unsupported_fraction(self):
        with self.assertRaises(ValidationError):
            SplitSpec('by_image', '1/3')


class CropPairTests(SimpleTestCase):
    def test_full_overlap_gives_identical_crops(self):
        image = torch.rand(3, 48, 48)
        pair = sample_crop_pair(image, (1.0, 1.0), (32, 32), np.random.default_rng(0))
        self.assertTrue(torch.equal(pair.crop1, pair.crop2))
        self.assertEqual(pair.rect1, pair.rect2)
        for value, expected in zip(pair.rect1, (0.0, 0.0, 32.0, 32.0)):
            self.assertAlmostEqual(value, expected, places=6)

    def test_overlap_fraction_stays_in_range(self):
        image = torch.rand(3, 64, 64)
        rng = np.random.default_rng(1)
        for _draw in range(1000):
            pair = sample_crop_pair(image, (0.1, 1.0), (16, 16), rng)
            (x1, y1, side), (x2, y2, _side) = pair.box1, pair.box2
            width = side - abs(x1 - x2)
            height = side - abs(y1 - y2)
            measured = width * height / float(side * side)
            self.assertGreaterEqual(measured, 0.1)
            self.assertLessEqual(measured, 1.0)
            self.assertAlmostEqual(measured, pair.overlap_fraction)

    def test_rectangles_map_to_the_same_source_region(self):
        image = torch.rand(3, 80, 60)
        rng = np.random.default_rng(2)
        for _draw in range(100):
            pair = sample_crop_pair(image, (0.1, 1.0), (24, 24), rng)
            source1 = rect_to_source(pair.rect1, pair.box1, (24, 24))
            source2 = rect_to_source(pair.rect2, pair.box2, (24, 24))
            for a, b in zip(source1, source2):
                self.assertLessEqual(abs(a - b), 1.0)
            self.assertLess(pair.rect1[0], pair.rect1[2])
            self.assertLess(pair.rect1[1], pair.rect1[3])

    def test_small_images_are_rescaled(self):
        pair = sample_crop_pair(torch.rand(3, 10, 12), (0.5, 1.0), (32, 32), np.random.default_rng(0))
        self.assertEqual(tuple(pair.crop1.shape), (3, 32, 32))
        self.assertGreater(pair.source_scale, 1.0)

    def test_invalid_range_raises(self):
        with self.assertRaises(ValidationError):
            sample_crop_pair(torch.rand(3, 8, 8), (0.0, 0.5), (8, 8), np.random.default_rng(0))


class AugmentTests(SimpleTestCase):
    def setUp(self):
        self.sample = Sample(
            image=torch.rand(3, 12, 12),
            mask=torch.randint(0, 3, (12, 12)),
            source_id='x',
        )

    def test_disabled_policy_is_identity(self):
        out = augment(self.sample, AugmentPolicy.disabled(), np.random.default_rng(0))
        self.assertTrue(torch.equal(out.image, self.sample.image))
        self.assertTrue(torch.equal(out.mask, self.sample.mask))

    def test_double_horizontal_flip_is_identity(self):
        policy = replace(AugmentPolicy.disabled(), hflip=1.0)
        once = augment(self.sample, policy, np.random.default_rng(0))
        twice = augment(once, policy, np.random.default_rng(0))
        self.assertFalse(torch.equal(once.mask, self.sample.mask))
        self.assertTrue(torch.equal(twice.image, self.sample.image))
        self.assertTrue(torch.equal(twice.mask, self.sample.mask))

    def test_grey_scaling_equalises_channels(self):
        policy = replace(AugmentPolicy.disabled(), grey=1.0)
        out = augment(self.sample, policy, np.random.default_rng(0))
        self.assertTrue(torch.allclose(out.image[0], out.image[1]))
        self.assertTrue(torch.allclose(out.image[1], out.image[2]))

    def test_photometric_steps_keep_the_mask(self):
        policy = AugmentPolicy(hflip=0.0, vflip=0.0, blur=1.0, color=1.0, grey=1.0)
        out = augment(self.sample, policy, np.random.default_rng(5))
        self.assertEqual(Counter(out.mask.flatten().tolist()), Counter(self.sample.mask.flatten().tolist()))
        self.assertEqual(out.image.shape, self.sample.image.shape)


class LoaderTests(SimpleTestCase):
    def test_unlabeled_items_depend_on_seed_epoch_and_index(self):
        samples = [Sample(image=torch.rand(3, 40, 40), source_id=str(i)) for i in range(3)]
        dataset = UnlabeledDataset(samples, (16, 16), AugmentPolicy(), overlap_range=(0.1, 1.0), seed=7)
        first = dataset[1]
        again = dataset[1]
        self.assertTrue(torch.equal(first['crop1'], again['crop1']))
        self.assertTrue(torch.equal(first['rect1'], again['rect1']))
        dataset.set_epoch(1)
        self.assertFalse(torch.equal(first['crop1'], dataset[1]['crop1']))

    def test_evaluation_tiles_pad_with_ignore(self):
        sample = Sample(image=torch.rand(3, 20, 30), mask=torch.zeros(20, 30, dtype=torch.long), source_id='t')
        dataset = EvaluationDataset([sample], tile_size=16, ignore_index=255)
        self.assertEqual(len(dataset), 4)
        _image, mask = dataset[3]
        self.assertEqual(int((mask != 255).sum()), 4 * 14)
        counted = sum(int((dataset[i][1] != 255).sum()) for i in range(len(dataset)))
        self.assertEqual(counted, 20 * 30)
