import logging

import torch
import torch.nn.functional as F

from .utils import count_event


logger = logging.getLogger(__name__)


def _rect(rect):
    return [float(value) for value in rect]


def overlap_grid(rect, stride):
    """Grid size (rows, cols) of an overlap rectangle in feature cells."""
    x0, y0, x1, y1 = _rect(rect)
    return int(round((y1 - y0) / stride)), int(round((x1 - x0) / stride))


def sample_rect(values, rect, grid, stride):
    """
    Bilinearly sample a ``C x h x w`` map at the centres of a ``grid`` laid
    over ``rect`` (crop pixel coordinates). Feature cell j covers crop
    pixels [j * stride, (j + 1) * stride). Returns ``rows * cols x C``.
    """
    rows, cols = grid
    x0, y0, x1, y1 = _rect(rect)
    height, width = values.shape[-2:]
    options = {'dtype': values.dtype, 'device': values.device}
    xs = x0 + (torch.arange(cols, **options) + 0.5) * (x1 - x0) / cols
    ys = y0 + (torch.arange(rows, **options) + 0.5) * (y1 - y0) / rows
    gx = 2.0 * xs / (stride * width) - 1.0
    gy = 2.0 * ys / (stride * height) - 1.0
    grid_y, grid_x = torch.meshgrid(gy, gx, indexing='ij')
    points = torch.stack([grid_x, grid_y], dim=-1)[None]
    sampled = F.grid_sample(values[None], points, mode='bilinear', padding_mode='border', align_corners=False)
    return sampled[0].flatten(1).t()


def align_overlap(map1, map2, rect1, rect2, stride):
    """
    Resample the overlap of two ``C x h x w`` maps onto a common grid sized
    to rect1's feature extent. Row i of both outputs describes the same
    source location. Returns None when the overlap is under one cell.
    """
    if map1.dim() != 3 or map2.dim() != 3 or map1.shape[0] != map2.shape[0]:
        raise ValueError(f"align_overlap needs two C x h x w maps, got {tuple(map1.shape)} and {tuple(map2.shape)}")
    grid = overlap_grid(rect1, stride)
    if grid[0] < 1 or grid[1] < 1:
        count_event('skipped_pairs', "Overlap %s is smaller than one feature cell, pair skipped", _rect(rect1))
        return None
    return sample_rect(map1, rect1, grid, stride), sample_rect(map2, rect2, grid, stride)
