import csv
import os
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase
from scipy import ndimage

from common.testing import slow
from segmentation.datasets.corpus import Sample
from segmentation.datasets.corpus import load_corpus
from segmentation.experiments.settings import DEFAULT_CRCFP_CONFIG
from segmentation.experiments.settings import merge_config
from segmentation.experiments.toy import gen_toy_corpus
from segmentation.networks.bundle import build_model
from segmentation.training.experiment import build_loaders
from segmentation.training.trainer import Trainer
from .density import density_map
from .density import feature_density_map
from .density import image_density_map
from .density import save_density_map
from .density import upsampled_features
from .embeddings import export_embeddings


def loop_density(values, patch, offset):
    values = np.asarray(values, dtype=np.float64)
    depth, height, width = values.shape
    half = patch // 2
    result = np.full((height, width), np.nan)

    def window(y, x):
        return values[:, y - half:y + half + 1, x - half:x + half + 1].ravel()

    for y in range(height):
        for x in range(width):
            neighbours = [(y - offset, x), (y + offset, x), (y, x - offset), (y, x + offset)]
            if all(half <= ny < height - half and half <= nx < width - half for ny, nx in neighbours):
                centre = window(y, x)
                result[y, x] = np.mean([np.linalg.norm(centre - window(ny, nx)) for ny, nx in neighbours])
    return result


class DensityMapTests(SimpleTestCase):
    def test_matches_nested_loops(self):
        values = np.random.default_rng(0).random((4, 64, 64))
        for patch, offset in ((5, None), (7, 3)):
            expected = loop_density(values, patch, offset or patch)
            result = density_map(values, patch=patch, neighbor_offset=offset)
            self.assertTrue(np.array_equal(np.isnan(result), np.isnan(expected)))
            valid = ~np.isnan(expected)
            self.assertTrue(np.allclose(result[valid], expected[valid], atol=1e-5, rtol=0))

    def test_constant_input_is_zero(self):
        result = image_density_map(torch.full((3, 64, 64), 0.3), patch=5)
        self.assertEqual(float(np.nanmax(result)), 0.0)
        self.assertFalse(np.isnan(result[32, 32]))
        self.assertTrue(np.isnan(result[0, 0]))

    def test_x_ramp(self):
        ramp = np.tile(np.arange(64, dtype=np.float64), (64, 1))[None]
        result = density_map(ramp, patch=5)
        valid = result[~np.isnan(result)]
        # horizontal neighbours sit 5 * 5 apart, vertical ones 0
        self.assertTrue(np.allclose(valid, 12.5, atol=1e-9))
        self.assertTrue(np.allclose(density_map(ramp, patch=21)[31:33, 31:33], 21 * 21 / 2))

    def test_invalid_input(self):
        with self.assertRaises(ValueError):
            density_map(np.zeros((1, 64, 64)), patch=4)
        with self.assertRaises(ValueError):
            density_map(np.zeros((1, 40, 40)), patch=21)

    def test_saved_files(self):
        result = density_map(np.random.default_rng(1).random((2, 32, 32)), patch=3)
        with tempfile.TemporaryDirectory() as root:
            npy_path, png_path = save_density_map(result, os.path.join(root, 'maps', 'sample'), title='sample')
            self.assertTrue(os.path.exists(png_path))
            restored = np.load(npy_path)
        self.assertTrue(np.array_equal(np.isnan(restored), np.isnan(result)))

    def test_feature_map_has_image_size(self):
        torch.manual_seed(0)
        model = build_model(3, width=8)
        result = feature_density_map(model, torch.rand(3, 48, 48), patch=5)
        self.assertEqual(result.shape, (48, 48))
        self.assertTrue(model.training)

    def test_encoder_source_upsamples_the_encoder_embedding(self):
        torch.manual_seed(0)
        model = build_model(3, width=8)
        image = torch.rand(3, 48, 48)
        features = upsampled_features(model, image, source='encoder')
        self.assertEqual(tuple(features.shape), (model.backbone.encoder_channels, 48, 48))
        result = feature_density_map(model, image, patch=5, source='encoder')
        self.assertEqual(result.shape, (48, 48))
        self.assertFalse(np.allclose(np.nan_to_num(result), np.nan_to_num(feature_density_map(model, image, patch=5))))
        with self.assertRaises(ValueError):
            upsampled_features(model, image, source='projector')


class ExportEmbeddingsTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.model = build_model(3, width=8)
        self.sample = Sample(image=torch.rand(3, 24, 24), mask=torch.randint(0, 3, (24, 24)), source_id='a')

    def read(self, path):
        with open(path, newline='') as handle:
            return list(csv.reader(handle))

    def test_rows_columns_and_labels(self):
        with tempfile.TemporaryDirectory() as root:
            path = os.path.join(root, 'embeddings.csv')
            coords = export_embeddings(self.model, [self.sample], path, subsample=100, seed=0)
            rows = self.read(path)
        header, body = rows[0], rows[1:]
        self.assertEqual(len(body), 100)
        self.assertEqual(len(header), 8 + 2)
        self.assertEqual(header[:3], ['sample_id', 'label', 'f0'])
        for row, (sample_id, y, x) in zip(body, coords):
            self.assertEqual(row[0], sample_id)
            self.assertEqual(int(row[1]), int(self.sample.mask[y, x]))

    def test_deterministic_given_seed(self):
        with tempfile.TemporaryDirectory() as root:
            first = export_embeddings(self.model, [self.sample], os.path.join(root, 'a.csv'), subsample=50, seed=4)
            second = export_embeddings(self.model, [self.sample], os.path.join(root, 'b.csv'), subsample=50, seed=4)
            self.assertEqual(first, second)
            self.assertEqual(self.read(os.path.join(root, 'a.csv')), self.read(os.path.join(root, 'b.csv')))

    def test_ignored_pixels_are_not_exported(self):
        mask = torch.full((24, 24), 255)
        mask[:2, :2] = 1
        sample = Sample(image=torch.rand(3, 24, 24), mask=mask, source_id='b')
        with tempfile.TemporaryDirectory() as root:
            coords = export_embeddings(self.model, [sample], os.path.join(root, 'e.csv'), subsample=100)
        self.assertEqual(len(coords), 4)

    def test_manifest_ignore_index_is_honoured(self):
        mask = torch.full((24, 24), 9)
        mask[:3, :3] = 1
        sample = Sample(image=torch.rand(3, 24, 24), mask=mask, source_id='c')
        with tempfile.TemporaryDirectory() as root:
            coords = export_embeddings(self.model, [sample], os.path.join(root, 'e.csv'), subsample=100,
                                       ignore_index=9)
        self.assertEqual(len(coords), 9)

    def test_encoder_source_columns(self):
        with tempfile.TemporaryDirectory() as root:
            path = os.path.join(root, 'encoder.csv')
            export_embeddings(self.model, [self.sample], path, subsample=10, source='encoder')
            header = self.read(path)[0]
        self.assertEqual(len(header), self.model.backbone.encoder_channels + 2)


class TrainedDensityTests(SimpleTestCase):
    @slow
    def test_feature_density_peaks_on_class_boundaries(self):
        config = merge_config(DEFAULT_CRCFP_CONFIG, {
            'data': {'input_size': 96},
            'model': {'width': 32},
            'train': {'batch_size': 8, 'base_lr': 0.01},
            'loss': {'scheme': 'supervised'},
        })
        with tempfile.TemporaryDirectory() as root:
            gen_toy_corpus(root, n_images=40, size=96, n_classes=4, seed=0)
            samples = load_corpus(root)
        train = [sample for sample in samples if sample.split == 'train']
        test = [sample for sample in samples if sample.split == 'test']
        torch.manual_seed(0)
        trainer = Trainer(build_model(4, width=32), config)
        labeled, _unlabeled = build_loaders(config, train, [], seed=0)
        batches = iter(labeled)
        for step in range(300):
            try:
                batch = next(batches)
            except StopIteration:
                batches = iter(labeled)
                batch = next(batches)
            trainer.train_step(batch, None, step)

        boundary_means, interior_means = [], []
        for sample in test:
            density = feature_density_map(trainer.model, sample.image, patch=5)
            mask = sample.mask.numpy()
            edges = ndimage.morphological_gradient(mask, size=3) > 0
            boundary = ndimage.binary_dilation(edges, iterations=2)
            interior = ~ndimage.binary_dilation(edges, iterations=8)
            valid = ~np.isnan(density)
            boundary_means.append(density[boundary & valid].mean())
            interior_means.append(density[interior & valid].mean())
        self.assertGreater(np.mean(boundary_means), np.mean(interior_means))
