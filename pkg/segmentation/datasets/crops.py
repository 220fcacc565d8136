import logging
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import CROP_MAX_TRIES


logger = logging.getLogger(__name__)


@dataclass
class CropPair:
    """
    Two equally sized square views of one image that share a region.

    ``rect1``/``rect2`` are the shared region as (x0, y0, x1, y1) in each
    resized crop; ``box1``/``box2`` are the crops as (x, y, side) in the
    source image after ``source_scale`` was applied to it.
    """
    crop1: torch.Tensor
    crop2: torch.Tensor
    rect1: tuple
    rect2: tuple
    overlap_fraction: float
    box1: tuple = (0, 0, 0)
    box2: tuple = (0, 0, 0)
    source_scale: float = 1.0


def validate_overlap_range(overlap_range):
    lo, hi = overlap_range
    if not 0 < lo <= hi <= 1:
        raise ValidationError(
            _('Overlap range must satisfy 0 < lo <= hi <= 1, got %(lo)s, %(hi)s'), params={'lo': lo, 'hi': hi})
    return float(lo), float(hi)


def rescale_to_fit(image, out_size):
    """Upscale just enough for the shorter side to cover the crop size."""
    height, width = image.shape[-2:]
    needed = max(out_size)
    if min(height, width) >= needed:
        return image, 1.0
    scale = needed / min(height, width)
    size = (max(needed, round(height * scale)), max(needed, round(width * scale)))
    resized = F.interpolate(image[None], size=size, mode='bilinear', align_corners=False)[0]
    return resized, scale


def resize_crop(image, box, out_size):
    x, y, side = box
    crop = image[:, y:y + side, x:x + side]
    return F.interpolate(crop[None], size=tuple(out_size), mode='bilinear', align_corners=False, antialias=True)[0]


def rect_to_source(rect, box, out_size):
    """Invert the crop and resize of one view: rect in crop pixels -> source pixels."""
    x, y, side = box
    out_h, out_w = out_size
    x0, y0, x1, y1 = rect
    return (
        x + x0 * side / out_w,
        y + y0 * side / out_h,
        x + x1 * side / out_w,
        y + y1 * side / out_h,
    )


def _draw_geometry(rng, height, width, overlap_range, scale_range):
    lo, hi = overlap_range
    short = min(height, width)
    side = int(round(rng.uniform(*scale_range) * short))
    side = min(max(side, 1), short)
    target = rng.uniform(lo, hi)
    # overlap width a and height b with a * b = target * side^2, both <= side
    overlap_w = rng.uniform(target * side, side)
    overlap_h = target * side * side / overlap_w
    overlap_w = min(int(round(overlap_w)), side)
    overlap_h = min(int(round(overlap_h)), side)
    if overlap_w < 1 or overlap_h < 1:
        return None
    dx, dy = side - overlap_w, side - overlap_h
    if side + dx > width or side + dy > height:
        return None
    fraction = overlap_w * overlap_h / float(side * side)
    if not lo <= fraction <= hi:
        return None
    return side, dx, dy, fraction


def sample_crop_pair(image, overlap_range, out_size, rng, scale_range=(0.5, 1.0), max_tries=CROP_MAX_TRIES):
    """
    Cut two square crops of the same side from ``image`` so that their
    intersection covers a fraction of each crop within ``overlap_range``,
    and resize both to ``out_size`` (H, W).
    """
    overlap_range = validate_overlap_range(overlap_range)
    out_size = tuple(int(v) for v in out_size)
    image, scale = rescale_to_fit(image, out_size)
    height, width = image.shape[-2:]

    geometry = None
    for _attempt in range(max_tries):
        geometry = _draw_geometry(rng, height, width, overlap_range, scale_range)
        if geometry is not None:
            break
    if geometry is None:
        raise ValidationError(
            _('Could not place two crops with overlap in %(range)s on a %(h)sx%(w)s image after %(tries)s tries'),
            params={'range': overlap_range, 'h': height, 'w': width, 'tries': max_tries})

    side, dx, dy, fraction = geometry
    union_x = int(rng.integers(0, width - (side + dx) + 1))
    union_y = int(rng.integers(0, height - (side + dy) + 1))
    if rng.random() < 0.5:
        x1, x2 = union_x, union_x + dx
    else:
        x1, x2 = union_x + dx, union_x
    if rng.random() < 0.5:
        y1, y2 = union_y, union_y + dy
    else:
        y1, y2 = union_y + dy, union_y

    inter_x0, inter_y0 = max(x1, x2), max(y1, y2)
    inter_x1, inter_y1 = min(x1, x2) + side, min(y1, y2) + side
    out_h, out_w = out_size
    sx, sy = out_w / side, out_h / side

    def to_crop(origin_x, origin_y):
        return (
            (inter_x0 - origin_x) * sx,
            (inter_y0 - origin_y) * sy,
            (inter_x1 - origin_x) * sx,
            (inter_y1 - origin_y) * sy,
        )

    box1, box2 = (x1, y1, side), (x2, y2, side)
    return CropPair(
        crop1=resize_crop(image, box1, out_size),
        crop2=resize_crop(image, box2, out_size),
        rect1=to_crop(x1, y1),
        rect2=to_crop(x2, y2),
        overlap_fraction=fraction,
        box1=box1,
        box2=box2,
        source_scale=scale,
    )
