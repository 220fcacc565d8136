"""
Synthetic histology-like corpus.

Every image is a background texture with one textured blob per tissue class
laid out on a grid of cells. When there are at least four classes the last
one is a context class: it has exactly the colour and texture of class 1 but
only ever appears inside a class-2 host, so only its surroundings tell it
apart. Images are grouped into centers, each with its own global colour
shift, which gives by_center splits a domain gap.
"""
import logging
import math
import os

import numpy as np
import yaml
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _
from PIL import Image
from tqdm import tqdm

from common.settings import DEFAULT_IGNORE_INDEX
from segmentation.datasets.settings import DEFAULT_MANIFEST
from .settings import TOY_CENTER_SHIFT
from .settings import TOY_PALETTE


logger = logging.getLogger(__name__)

HOST_CLASS = 2
TWIN_CLASS = 1


def class_layout(n_classes):
    """(blob classes, context class or None)."""
    if n_classes < 2:
        raise ValidationError(_('The toy corpus needs at least 2 classes, got %(n)s'), params={'n': n_classes})
    if n_classes >= 4:
        return list(range(1, n_classes - 1)), n_classes - 1
    return list(range(1, n_classes)), None


def class_names(n_classes):
    blobs, context = class_layout(n_classes)
    names = ['background'] + [f"tissue_{index}" for index in blobs]
    if context is not None:
        names.append('context')
    return names


def center_shifts(n_centers):
    # centers sit on a loop in colour space so each one is linearly separable from the rest
    angles = 2 * math.pi * np.arange(n_centers) / n_centers
    return TOY_CENTER_SHIFT * np.stack([np.cos(angles), np.sin(angles), 0.5 * np.cos(2 * angles)], axis=1)


def texture(kind, n_classes, yy, xx, rng):
    if kind == 0:
        return 0.5 + 0.1 * rng.standard_normal(yy.shape)
    angle = math.pi * kind / n_classes
    frequency = 0.35 + 0.25 * (kind - 1)
    phase = rng.uniform(0, 2 * math.pi)
    return 0.5 + 0.5 * np.sin(frequency * (xx * math.cos(angle) + yy * math.sin(angle)) + phase)


def colour(kind, pattern):
    base = np.asarray(TOY_PALETTE[kind % len(TOY_PALETTE)], dtype=np.float64)
    return base[None, None, :] * (0.7 + 0.3 * pattern[..., None])


def blob_mask(yy, xx, cy, cx, radius, rng):
    angles = np.arctan2(yy - cy, xx - cx)
    wobble = 1 + 0.2 * np.sin(3 * angles + rng.uniform(0, 2 * math.pi)) \
        + 0.1 * np.sin(5 * angles + rng.uniform(0, 2 * math.pi))
    return np.hypot(yy - cy, xx - cx) < radius * wobble


def toy_image(size, n_classes, shift, rng):
    """One (H x W x 3 float image, H x W int mask) pair."""
    blobs, context = class_layout(n_classes)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    image = colour(0, texture(0, n_classes, yy, xx, rng))
    mask = np.zeros((size, size), dtype=np.uint8)

    kinds = list(blobs) + [int(kind) for kind in rng.choice(blobs, size=rng.integers(0, 3))]
    grid = math.ceil(math.sqrt(len(kinds)))
    cell = size / grid
    cells = rng.permutation(grid * grid)[:len(kinds)]
    hosts = []
    for kind, index in zip(kinds, cells):
        row, col = divmod(int(index), grid)
        cy = (row + 0.5 + rng.uniform(-0.1, 0.1)) * cell
        cx = (col + 0.5 + rng.uniform(-0.1, 0.1)) * cell
        radius = cell * rng.uniform(0.28, 0.42)
        inside = blob_mask(yy, xx, cy, cx, radius, rng)
        image[inside] = colour(kind, texture(kind, n_classes, yy, xx, rng))[inside]
        mask[inside] = kind
        if kind == HOST_CLASS:
            hosts.append((cy, cx, radius))

    if context is not None:
        for cy, cx, radius in hosts:
            inside = blob_mask(yy, xx, cy, cx, 0.4 * radius, rng)
            image[inside] = colour(TWIN_CLASS, texture(TWIN_CLASS, n_classes, yy, xx, rng))[inside]
            mask[inside] = context

    image = image + shift[None, None, :] + 0.03 * rng.standard_normal(image.shape)
    return np.clip(image, 0.0, 1.0), mask


def gen_toy_corpus(out_dir, n_images, size, n_classes, seed, n_centers=8, test_fraction=0.25):
    """
    Write ``n_images`` PNG image/mask pairs under ``out_dir`` together with
    their manifest; returns the manifest path.
    """
    if n_images < 1 or size < 8:
        raise ValidationError(_('The toy corpus needs at least one image of size 8 or more'))
    rng = np.random.default_rng(seed)
    shifts = center_shifts(n_centers)
    os.makedirs(os.path.join(out_dir, 'images'), exist_ok=True)
    os.makedirs(os.path.join(out_dir, 'masks'), exist_ok=True)
    test_count = int(round(test_fraction * n_images))
    test_index = set(rng.permutation(n_images)[:test_count].tolist()) if n_images > 1 else set()

    entries = []
    for index in tqdm(range(n_images), desc="toy corpus", unit='image'):
        center = index % n_centers
        image, mask = toy_image(size, n_classes, shifts[center], rng)
        name = f"toy_{index:04d}"
        Image.fromarray((image * 255).round().astype(np.uint8)).save(os.path.join(out_dir, 'images', f"{name}.png"))
        Image.fromarray(mask).save(os.path.join(out_dir, 'masks', f"{name}.png"))
        entries.append({
            'id': name,
            'path': f"images/{name}.png",
            'mask_path': f"masks/{name}.png",
            'center_id': f"center_{center}",
            'split': 'test' if index in test_index else 'train',
        })

    manifest_path = os.path.join(out_dir, DEFAULT_MANIFEST)
    with open(manifest_path, 'w') as handle:
        yaml.safe_dump({
            'classes': n_classes,
            'ignore_index': DEFAULT_IGNORE_INDEX,
            'class_names': class_names(n_classes),
            'entries': entries,
        }, handle, sort_keys=False)
    logger.info("Toy corpus: %s images (%s test) in %s", n_images, len(test_index), out_dir)
    return manifest_path
