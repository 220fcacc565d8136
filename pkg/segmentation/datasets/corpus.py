import logging
import os
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace

import numpy as np
import torch
import yaml
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _
from PIL import Image
from PIL import UnidentifiedImageError

from common.settings import DEFAULT_IGNORE_INDEX
from common.utils import validate_file_exists
from common.utils import validate_file_extension
from .settings import CORPUS_SPLIT_CHOICES
from .settings import DEFAULT_MANIFEST


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    mask_path: str | None = None
    center_id: str | None = None
    split: str = 'train'
    source_id: str | None = None

    @property
    def sample_id(self):
        if self.source_id:
            return str(self.source_id)
        return os.path.splitext(os.path.basename(self.path))[0]


@dataclass(frozen=True)
class Manifest:
    classes: int
    ignore_index: int = DEFAULT_IGNORE_INDEX
    class_names: tuple = ()
    entries: tuple = ()


@dataclass
class Sample:
    """
    One corpus image. ``image`` is a 3xHxW float tensor in [0, 1]; ``mask``
    an HxW int64 tensor of class indices or the ignore value.
    """
    image: torch.Tensor
    mask: torch.Tensor | None = None
    source_id: str = ''
    center_id: str | None = None
    split: str = 'train'
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"Sample {self.source_id}: image must be 3xHxW, got {tuple(self.image.shape)}")
        if self.mask is not None and tuple(self.mask.shape) != tuple(self.image.shape[1:]):
            raise ValueError(
                f"Sample {self.source_id}: mask shape {tuple(self.mask.shape)} "
                f"does not match image {tuple(self.image.shape[1:])}")

    @property
    def is_labeled(self):
        return self.mask is not None

    def unlabeled(self):
        return replace(self, mask=None)


def read_manifest(root_path, layout=DEFAULT_MANIFEST):
    manifest_path = os.path.join(root_path, layout)
    validate_file_exists(manifest_path, role="manifest")
    try:
        with open(manifest_path) as handle:
            raw = yaml.safe_load(handle) or {}
    except yaml.YAMLError as e:
        raise ValidationError(_('Manifest %(path)s is not valid YAML: %(error)s'),
                              params={'path': manifest_path, 'error': e})

    if 'classes' not in raw:
        raise ValidationError(_('Manifest %(path)s does not declare "classes"'), params={'path': manifest_path})

    valid_splits = [key for key, _label in CORPUS_SPLIT_CHOICES]
    entries = []
    for index, item in enumerate(raw.get('entries') or []):
        if isinstance(item, str):
            item = {'path': item}
        if 'path' not in item:
            raise ValidationError(_('Manifest entry %(index)s has no "path"'), params={'index': index})
        split = item.get('split', 'train')
        if split not in valid_splits:
            raise ValidationError(_('Manifest entry %(path)s has unknown split "%(split)s"'),
                                  params={'path': item['path'], 'split': split})
        entries.append(ManifestEntry(
            path=item['path'],
            mask_path=item.get('mask_path'),
            center_id=None if item.get('center_id') is None else str(item['center_id']),
            split=split,
            source_id=item.get('id'),
        ))

    return Manifest(
        classes=int(raw['classes']),
        ignore_index=int(raw.get('ignore_index', DEFAULT_IGNORE_INDEX)),
        class_names=tuple(raw.get('class_names') or ()),
        entries=tuple(entries),
    )


def read_image(path):
    validate_file_exists(path, role="image")
    validate_file_extension(path)
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert('RGB'), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise ValidationError(_('Unreadable image %(path)s: %(error)s'), params={'path': str(path), 'error': e})
    return torch.from_numpy(array.copy()).permute(2, 0, 1).contiguous()


def read_mask(path):
    validate_file_exists(path, role="mask")
    validate_file_extension(path)
    try:
        with Image.open(path) as img:
            array = np.asarray(img)
    except (UnidentifiedImageError, OSError) as e:
        raise ValidationError(_('Unreadable mask %(path)s: %(error)s'), params={'path': str(path), 'error': e})
    if array.ndim != 2:
        raise ValidationError(_('Mask %(path)s must be a single-channel raster'), params={'path': str(path)})
    return torch.from_numpy(array.astype(np.int64))


def validate_mask(mask, classes, ignore_index, name=''):
    invalid = (mask >= classes) | (mask < 0)
    invalid &= mask != ignore_index
    if bool(invalid.any()):
        bad = sorted(set(mask[invalid].unique().tolist()))
        raise ValidationError(
            _('Mask %(name)s contains values %(values)s outside 0..%(last)s and ignore value %(ignore)s'),
            params={'name': name, 'values': bad, 'last': classes - 1, 'ignore': ignore_index})


def remap_classes(mask, ignore_classes, ignore_index):
    if not ignore_classes:
        return mask
    mask = mask.clone()
    for value in ignore_classes:
        mask[mask == value] = ignore_index
    return mask


def load_corpus(root_path, layout=DEFAULT_MANIFEST, ignore_classes=()):
    """
    Read every image (and mask, when the manifest lists one) of a corpus
    directory, ordered by source id.

    An empty directory without a manifest is an empty corpus.
    """
    if not os.path.isdir(root_path):
        raise ValidationError(_('Corpus directory %(path)s does not exist'), params={'path': str(root_path)})
    if not os.path.exists(os.path.join(root_path, layout)):
        if not os.listdir(root_path):
            return []
        raise ValidationError(_('Corpus directory %(path)s has no %(layout)s'),
                              params={'path': str(root_path), 'layout': layout})

    manifest = read_manifest(root_path, layout)
    samples = []
    for entry in manifest.entries:
        image_path = os.path.join(root_path, entry.path)
        image = read_image(image_path)
        mask = None
        if entry.mask_path:
            mask_path = os.path.join(root_path, entry.mask_path)
            mask = read_mask(mask_path)
            validate_mask(mask, manifest.classes, manifest.ignore_index, name=mask_path)
            mask = remap_classes(mask, ignore_classes, manifest.ignore_index)
        samples.append(Sample(
            image=image,
            mask=mask,
            source_id=entry.sample_id,
            center_id=entry.center_id,
            split=entry.split,
        ))

    samples.sort(key=lambda sample: sample.source_id)
    logger.info(
        "Loaded %s samples from %s (%s labeled)",
        len(samples), root_path, sum(sample.is_labeled for sample in samples))
    return samples


def train_test_partition(samples):
    train = [sample for sample in samples if sample.split == 'train']
    test = [sample for sample in samples if sample.split == 'test']
    return train, test
