import logging
import os

import numpy as np
import tablib

from common.settings import DEFAULT_IGNORE_INDEX
from .density import upsampled_features
from .settings import DEFAULT_FEATURE_SOURCE
from .settings import DEFAULT_SUBSAMPLE


logger = logging.getLogger(__name__)


def export_embeddings(model, samples, out_path, subsample=DEFAULT_SUBSAMPLE, seed=0,
                      ignore_index=DEFAULT_IGNORE_INDEX, source=DEFAULT_FEATURE_SOURCE):
    """
    Write up to ``subsample`` upsampled feature vectors per sample as CSV
    rows ``sample_id, label, f0 .. f{D-1}``. Unlabeled samples get the
    ignore value as label. Returns the exported (sample_id, y, x).
    """
    rng = np.random.default_rng(seed)
    rows, coords, dim = [], [], None
    for sample in samples:
        features = upsampled_features(model, sample.image, source=source).cpu().numpy()
        dim = features.shape[0]
        height, width = features.shape[-2:]
        if sample.is_labeled:
            labels = sample.mask.cpu().numpy()
            candidates = np.flatnonzero(labels.ravel() != ignore_index)
        else:
            labels = np.full((height, width), ignore_index)
            candidates = np.arange(height * width)
        if candidates.size > subsample:
            candidates = np.sort(rng.choice(candidates, size=subsample, replace=False))
        for flat in candidates:
            y, x = divmod(int(flat), width)
            rows.append((sample.source_id, int(labels[y, x]), *features[:, y, x].tolist()))
            coords.append((sample.source_id, y, x))

    headers = ('sample_id', 'label', *(f"f{index}" for index in range(dim or 0)))
    dataset = tablib.Dataset(*rows, headers=headers)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, 'w', newline='') as handle:
        handle.write(dataset.csv)
    logger.info("Exported %s embeddings of dimension %s to %s", len(rows), dim, out_path)
    return coords
