import os
import tempfile

import numpy as np
import torch
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from django.test import override_settings

from common.utils import validate_file_exists
from common.utils import validate_file_extension
from .utils import item_rng
from .utils import make_generator
from .utils import resolve_device
from .utils import seed_everything


class SeedTests(SimpleTestCase):
    def test_seed_everything_repeats_draws(self):
        seed_everything(7)
        first = (torch.rand(3), np.random.rand(3))
        seed_everything(7)
        second = (torch.rand(3), np.random.rand(3))
        self.assertTrue(torch.equal(first[0], second[0]))
        self.assertTrue(np.array_equal(first[1], second[1]))

    def test_item_streams_depend_on_every_part_of_the_key(self):
        base = item_rng(0, 0, 0).random()
        self.assertEqual(base, item_rng(0, 0, 0).random())
        self.assertNotEqual(base, item_rng(1, 0, 0).random())
        self.assertNotEqual(base, item_rng(0, 1, 0).random())
        self.assertNotEqual(base, item_rng(0, 0, 1).random())

    def test_make_generator(self):
        self.assertTrue(torch.equal(torch.rand(2, generator=make_generator(5)),
                                    torch.rand(2, generator=make_generator(5))))


class DeviceTests(SimpleTestCase):
    @override_settings(CRCFP_DEVICE='cpu')
    def test_setting_is_the_default(self):
        self.assertEqual(resolve_device().type, 'cpu')

    def test_explicit_cpu(self):
        self.assertEqual(resolve_device('cpu'), torch.device('cpu'))

    def test_unknown_device_is_rejected(self):
        with self.assertRaises(ValidationError):
            resolve_device('tpu')
        self.assertIn(resolve_device('cuda:0').type, ('cuda', 'cpu'))


class FileValidationTests(SimpleTestCase):
    def test_extensions(self):
        validate_file_extension('slide_01.PNG')
        with self.assertRaises(ValidationError):
            validate_file_extension('slide_01.jpg')
        with self.assertRaises(ValidationError):
            validate_file_extension('slide_01')

    def test_missing_file(self):
        with tempfile.TemporaryDirectory() as root:
            path = os.path.join(root, 'mask.png')
            with self.assertRaises(ValidationError) as raised:
                validate_file_exists(path, role='mask')
            self.assertIn('mask', raised.exception.messages[0])
            open(path, 'w').close()
            validate_file_exists(path, role='mask')
