import torch
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from common.base.utils import make_generator
from .bank import BankConfig
from .bank import MemoryBank


def batch(count, dim=4, labels=None, start=0):
    vectors = torch.arange(start, start + count, dtype=torch.float32)[:, None].expand(count, dim).clone()
    if labels is None:
        labels = torch.arange(count) % 3
    return vectors, torch.as_tensor(labels), torch.ones(count)


class PushTests(SimpleTestCase):
    def test_fifo_keeps_the_newest(self):
        bank = MemoryBank(capacity=4)
        bank.push(*batch(6), step=0, sample_cap=None)
        self.assertEqual(len(bank), 4)
        self.assertEqual([int(entry.vector[0]) for entry in bank.entries], [2, 3, 4, 5])

    def test_pushed_vectors_are_retrievable(self):
        bank = MemoryBank(capacity=10)
        vectors, labels, confidences = batch(3, labels=[1, 1, 1])
        bank.push(vectors, labels, confidences, step=7)
        found = bank.sample_negatives(positive_label=0, count=10)
        self.assertEqual(len(found), 3)
        self.assertTrue(all(entry.step == 7 and entry.pseudo_label == 1 for entry in found))
        self.assertTrue(torch.equal(torch.stack([entry.vector for entry in found]), vectors))

    def test_ten_pushes_keep_the_six_most_recent(self):
        bank = MemoryBank(capacity=1200)
        generator = make_generator(0)
        for step in range(10):
            bank.push(*batch(300, start=step * 1000), step=step, sample_cap=200, generator=generator)
        self.assertEqual(len(bank), 1200)
        self.assertEqual(sorted({entry.step for entry in bank.entries}), [4, 5, 6, 7, 8, 9])
        self.assertEqual(bank.steps.tolist(), sorted(bank.steps.tolist()))

    def test_confidence_threshold(self):
        bank = MemoryBank(capacity=10)
        vectors, labels, _confidences = batch(4)
        bank.push(vectors, labels, torch.tensor([0.9, 0.5, 0.76, 0.75]), step=0, threshold=0.75)
        self.assertEqual([int(entry.vector[0]) for entry in bank.entries], [0, 2])

    def test_stored_vectors_are_detached_snapshots(self):
        bank = MemoryBank(capacity=10)
        vectors = torch.randn(3, 4, requires_grad=True)
        bank.push(vectors, torch.zeros(3), torch.ones(3), step=0)
        before = bank.vectors.clone()
        (vectors * 2).sum().backward()
        with torch.no_grad():
            vectors.add_(1.0)
        self.assertFalse(bank.vectors.requires_grad)
        self.assertTrue(torch.equal(bank.vectors, before))

    def test_length_mismatch(self):
        with self.assertRaises(ValueError):
            MemoryBank().push(torch.randn(3, 4), torch.zeros(2), torch.ones(3), step=0)

    def test_invalid_capacity(self):
        with self.assertRaises(ValidationError):
            MemoryBank(capacity=0)
        with self.assertRaises(ValidationError):
            BankConfig(draws='sometimes')


class SampleNegativesTests(SimpleTestCase):
    def test_single_label_bank_has_no_negatives(self):
        bank = MemoryBank(capacity=10)
        bank.push(*batch(5, labels=[2] * 5), step=0)
        self.assertEqual(bank.sample_negatives(2, 5), [])

    def test_zero_count(self):
        bank = MemoryBank(capacity=10)
        bank.push(*batch(5), step=0)
        self.assertEqual(bank.sample_negatives(0, 0), [])

    def test_insufficient_entries_returns_all_differing(self):
        bank = MemoryBank(capacity=1200)
        labels = torch.randint(0, 4, (1000,), generator=make_generator(1))
        bank.push(*batch(1000, labels=labels), step=0, sample_cap=None)
        found = bank.sample_negatives(1, 1200, generator=make_generator(2))
        expected = {index for index, label in enumerate(labels.tolist()) if label != 1}
        self.assertEqual({int(entry.vector[0]) for entry in found}, expected)

    def test_never_returns_the_positive_label(self):
        bank = MemoryBank(capacity=500)
        bank.push(*batch(500, labels=torch.randint(0, 3, (500,))), step=0, sample_cap=None)
        generator = make_generator(3)
        for label in range(3):
            found = bank.sample_negatives(label, 50, generator=generator)
            self.assertEqual(len(found), 50)
            self.assertTrue(all(entry.pseudo_label != label for entry in found))
            self.assertEqual(len({int(entry.vector[0]) for entry in found}), 50)


class DrawTests(SimpleTestCase):
    def test_shared_draw(self):
        bank = MemoryBank(capacity=100)
        self.assertIsNone(bank.draw(10))
        bank.push(*batch(40), step=0)
        vectors, labels = bank.draw(10, generator=make_generator(0))
        self.assertEqual(tuple(vectors.shape), (10, 4))
        self.assertEqual(labels.shape[0], 10)

    def test_per_pixel_draw_respects_labels(self):
        bank = MemoryBank(capacity=100)
        bank.push(*batch(30), step=0)
        pixel_labels = torch.tensor([0, 1, 2, 0])
        _vectors, labels, mask = bank.draw_per_pixel(pixel_labels, 5, generator=make_generator(0))
        self.assertEqual(tuple(mask.shape), (4, 30))
        self.assertTrue(bool((mask.sum(dim=1) == 5).all()))
        self.assertFalse(bool((mask & (pixel_labels[:, None] == labels[None, :])).any()))

    def test_state_round_trip(self):
        bank = MemoryBank(capacity=8)
        bank.push(*batch(5), step=3)
        restored = MemoryBank(capacity=1)
        restored.load_state_dict(bank.state_dict())
        self.assertEqual(restored.capacity, 8)
        self.assertTrue(torch.equal(restored.vectors, bank.vectors))
        self.assertEqual(restored.steps.tolist(), [3] * 5)
