import logging
import math
from dataclasses import replace

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader
from torch.utils.data import Dataset

from common.base.utils import item_rng
from common.base.utils import make_generator
from common.settings import DEFAULT_IGNORE_INDEX
from .augment import augment_pair
from .crops import rescale_to_fit
from .crops import sample_crop_pair


logger = logging.getLogger(__name__)


def resize_image(image, size):
    if tuple(image.shape[-2:]) == tuple(size):
        return image
    return F.interpolate(image[None], size=tuple(size), mode='bilinear', align_corners=False, antialias=True)[0]


def resize_mask(mask, size):
    if tuple(mask.shape[-2:]) == tuple(size):
        return mask
    return F.interpolate(mask[None, None].float(), size=tuple(size), mode='nearest')[0, 0].long()


class EpochDataset(Dataset):
    """Base for datasets whose random draws depend on (seed, epoch, index)."""

    def __init__(self, samples, seed=0):
        self.samples = list(samples)
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch):
        self.epoch = epoch

    def __len__(self):
        return len(self.samples)

    def rng(self, index):
        return item_rng(self.seed, self.epoch, index)


class LabeledDataset(EpochDataset):
    """Random resized square crop at input size, augmented jointly with its mask."""

    def __init__(self, samples, input_size, policy, seed=0, scale_range=(0.5, 1.0)):
        super().__init__(samples, seed)
        missing = [sample.source_id for sample in self.samples if not sample.is_labeled]
        if missing:
            raise ValueError(f"LabeledDataset got samples without masks: {missing[:5]}")
        self.input_size = tuple(input_size)
        self.policy = policy
        self.scale_range = scale_range

    def __getitem__(self, index):
        rng = self.rng(index)
        sample = self.samples[index]
        image, scale = rescale_to_fit(sample.image, self.input_size)
        mask = sample.mask if scale == 1.0 else resize_mask(sample.mask, image.shape[-2:])
        height, width = image.shape[-2:]
        short = min(height, width)
        side = min(short, max(1, int(round(rng.uniform(*self.scale_range) * short))))
        y = int(rng.integers(0, height - side + 1))
        x = int(rng.integers(0, width - side + 1))
        image = resize_image(image[:, y:y + side, x:x + side], self.input_size)
        mask = resize_mask(mask[y:y + side, x:x + side], self.input_size)
        image, mask = augment_pair(image, mask, self.policy, rng)
        return image, mask


class UnlabeledDataset(EpochDataset):
    """
    Full view x_u at input size plus an overlapping crop pair (x_u1, x_u2)
    drawn from the same image.
    """

    def __init__(self, samples, input_size, policy, overlap_range, crop_scale=(0.5, 1.0), seed=0):
        super().__init__(samples, seed)
        self.input_size = tuple(input_size)
        self.policy = policy
        # crops keep their geometry so the overlap rectangles stay valid
        self.crop_policy = replace(policy, hflip=0.0, vflip=0.0)
        self.overlap_range = tuple(overlap_range)
        self.crop_scale = tuple(crop_scale)

    def __getitem__(self, index):
        rng = self.rng(index)
        sample = self.samples[index]
        full, _mask = augment_pair(resize_image(sample.image, self.input_size), None, self.policy, rng)
        pair = sample_crop_pair(sample.image, self.overlap_range, self.input_size, rng, scale_range=self.crop_scale)
        crop1, _mask = augment_pair(pair.crop1, None, self.crop_policy, rng)
        crop2, _mask = augment_pair(pair.crop2, None, self.crop_policy, rng)
        return {
            'image': full,
            'crop1': crop1,
            'crop2': crop2,
            'rect1': torch.tensor(pair.rect1, dtype=torch.float32),
            'rect2': torch.tensor(pair.rect2, dtype=torch.float32),
            'overlap': torch.tensor(pair.overlap_fraction, dtype=torch.float32),
        }


def tile_grid(height, width, tile):
    rows = max(1, math.ceil(height / tile))
    cols = max(1, math.ceil(width / tile))
    return [(row * tile, col * tile) for row in range(rows) for col in range(cols)]


class EvaluationDataset(Dataset):
    """
    Non-overlapping tiles at input size; the image border is padded with
    zeros and the mask with the ignore value so every pixel is counted once.
    """

    def __init__(self, samples, tile_size, ignore_index=DEFAULT_IGNORE_INDEX):
        self.samples = [sample for sample in samples if sample.is_labeled]
        self.tile = int(tile_size)
        self.ignore_index = ignore_index
        self.index = []
        for sample_index, sample in enumerate(self.samples):
            height, width = sample.image.shape[-2:]
            for y, x in tile_grid(height, width, self.tile):
                self.index.append((sample_index, y, x))

    def __len__(self):
        return len(self.index)

    def __getitem__(self, index):
        sample_index, y, x = self.index[index]
        sample = self.samples[sample_index]
        image = sample.image[:, y:y + self.tile, x:x + self.tile]
        mask = sample.mask[y:y + self.tile, x:x + self.tile]
        pad_h = self.tile - image.shape[-2]
        pad_w = self.tile - image.shape[-1]
        if pad_h or pad_w:
            image = F.pad(image, (0, pad_w, 0, pad_h), value=0.0)
            mask = F.pad(mask, (0, pad_w, 0, pad_h), value=self.ignore_index)
        return image, mask


def build_loader(dataset, batch_size, shuffle, seed, drop_last=False, num_workers=0):
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        drop_last=drop_last,
        num_workers=num_workers,
        generator=make_generator(seed),
        persistent_workers=False,
    )


def cycle(loader):
    """Endless iteration; the dataset epoch advances on every pass."""
    epoch = 0
    dataset = getattr(loader, 'dataset', None)
    while True:
        if hasattr(dataset, 'set_epoch'):
            dataset.set_epoch(epoch)
        for batch in loader:
            yield batch
        epoch += 1
