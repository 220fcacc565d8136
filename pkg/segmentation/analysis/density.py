"""
Neighbourhood density maps.

The value at a centre position is the mean L2 distance between the flattened
patch around it and the four patches one offset away along the axes. Low
values mark dense regions of the input (or feature) space, high values the
sparse ones, which should fall on class boundaries.
"""
import logging
import os

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F

from .settings import DEFAULT_FEATURE_SOURCE
from .settings import DEFAULT_PATCH
from .settings import DENSITY_COLORMAP
from .settings import FEATURE_SOURCE_CHOICES
from .settings import NEIGHBOR_DIRECTIONS

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402


logger = logging.getLogger(__name__)


def density_map(values, patch=DEFAULT_PATCH, neighbor_offset=None):
    """
    ``values`` is D x H x W. Returns an H x W float64 array, NaN where a
    centre lacks one of its four neighbour patches.
    """
    values = torch.as_tensor(values, dtype=torch.float64)
    if values.dim() == 2:
        values = values[None]
    if values.dim() != 3:
        raise ValueError(f"density_map needs a D x H x W input, got {tuple(values.shape)}")
    if patch < 1 or patch % 2 == 0:
        raise ValueError(f"Patch size must be odd, got {patch}")
    offset = patch if neighbor_offset is None else int(neighbor_offset)
    if offset < 1:
        raise ValueError(f"Neighbour offset must be positive, got {offset}")
    height, width = values.shape[-2:]
    margin = offset + patch // 2
    if height - 2 * margin < 1 or width - 2 * margin < 1:
        raise ValueError(f"Input {height}x{width} is too small for patch {patch} with offset {offset}")

    centre = values[:, offset:height - offset, offset:width - offset]
    distances = []
    for dy, dx in NEIGHBOR_DIRECTIONS:
        dy, dx = dy * offset, dx * offset
        neighbour = values[:, offset + dy:height - offset + dy, offset + dx:width - offset + dx]
        squared = ((centre - neighbour) ** 2).sum(dim=0)
        patch_sum = F.avg_pool2d(squared[None, None], patch, stride=1)[0, 0] * patch * patch
        distances.append(patch_sum.clamp_min(0.0).sqrt())

    result = np.full((height, width), np.nan)
    result[margin:height - margin, margin:width - margin] = torch.stack(distances).mean(dim=0).numpy()
    return result


def image_density_map(image, patch=DEFAULT_PATCH, neighbor_offset=None):
    return density_map(image, patch=patch, neighbor_offset=neighbor_offset)


@torch.no_grad()
def upsampled_features(model, image, source=DEFAULT_FEATURE_SOURCE):
    """
    Decoder features (or, with ``source='encoder'``, the encoder embedding)
    of a 3 x H x W image, bilinearly upsampled to H x W.
    """
    if source not in dict(FEATURE_SOURCE_CHOICES):
        choices = [key for key, _label in FEATURE_SOURCE_CHOICES]
        raise ValueError(f"Unknown feature source {source!r}, choose one of {choices}")
    was_training = model.training
    model.eval()
    parameter = next(model.parameters())
    batch = image[None].to(device=parameter.device, dtype=parameter.dtype)
    if source == 'encoder':
        values = model.encode(batch)
    else:
        values = model.extract_features(batch).values
    model.train(was_training)
    return F.interpolate(values, size=tuple(image.shape[-2:]), mode='bilinear', align_corners=False)[0]


def feature_density_map(model, image, patch=DEFAULT_PATCH, neighbor_offset=None, source=DEFAULT_FEATURE_SOURCE):
    features = upsampled_features(model, image, source=source).cpu()
    return density_map(features, patch=patch, neighbor_offset=neighbor_offset)


def save_density_map(density, out_stem, title=None):
    """Write ``<out_stem>.npy`` and a ``<out_stem>.png`` rendering; returns both paths."""
    os.makedirs(os.path.dirname(os.path.abspath(out_stem)), exist_ok=True)
    npy_path, png_path = f"{out_stem}.npy", f"{out_stem}.png"
    np.save(npy_path, density)
    fig, ax = plt.subplots()
    image = ax.imshow(np.ma.masked_invalid(density), cmap=DENSITY_COLORMAP)
    fig.colorbar(image, ax=ax)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.savefig(png_path, bbox_inches='tight')
    plt.close(fig)
    logger.info("Density map written to %s", png_path)
    return npy_path, png_path
