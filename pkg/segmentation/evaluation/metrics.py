import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import torch
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from common.settings import DEFAULT_IGNORE_INDEX
from .settings import ACCURACY_MODE_CHOICES


logger = logging.getLogger(__name__)


def _as_numpy(values):
    if isinstance(values, torch.Tensor):
        return values.detach().cpu().numpy()
    return np.asarray(values)


class ConfusionMatrix:
    """
    C x C pixel counts, rows are ground truth and columns predictions.
    Pixels whose ground truth is the ignore value are only counted in
    ``ignored``.
    """

    def __init__(self, num_classes, ignore_index=DEFAULT_IGNORE_INDEX, counts=None, ignored=0):
        self.num_classes = int(num_classes)
        self.ignore_index = ignore_index
        if counts is None:
            counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (self.num_classes, self.num_classes):
            raise ValueError(f"counts must be {self.num_classes}x{self.num_classes}, got {self.counts.shape}")
        self.ignored = int(ignored)

    @property
    def total(self):
        return int(self.counts.sum())

    def accumulate(self, pred_labels, gt_labels):
        pred = _as_numpy(pred_labels).astype(np.int64).ravel()
        gt = _as_numpy(gt_labels).astype(np.int64).ravel()
        if pred.shape != gt.shape:
            raise ValueError(f"Prediction and ground truth differ in size: {pred.shape} vs {gt.shape}")
        keep = gt != self.ignore_index
        self.ignored += int((~keep).sum())
        pred, gt = pred[keep], gt[keep]
        if gt.size and (gt.min() < 0 or gt.max() >= self.num_classes or pred.min() < 0
                        or pred.max() >= self.num_classes):
            raise ValueError(f"Labels outside [0, {self.num_classes})")
        self.counts += np.bincount(
            gt * self.num_classes + pred, minlength=self.num_classes ** 2
        ).reshape(self.num_classes, self.num_classes)
        return self

    def __add__(self, other):
        if other.num_classes != self.num_classes:
            raise ValueError("Cannot merge confusion matrices of different class counts")
        return ConfusionMatrix(self.num_classes, self.ignore_index, self.counts + other.counts,
                               self.ignored + other.ignored)


def accumulate(cm, pred_labels, gt_labels):
    return cm.accumulate(pred_labels, gt_labels)


@dataclass
class SegmentationMetrics:
    iou: list = field(default_factory=list)
    dice: list = field(default_factory=list)
    miou: float = float('nan')
    mean_dice: float = float('nan')
    accuracy: float = float('nan')
    absent_classes: list = field(default_factory=list)
    pixels: int = 0
    ignored: int = 0
    accuracy_mode: str = 'overall'
    defined: bool = False

    def as_dict(self):
        return {
            'miou': self.miou,
            'mean_dice': self.mean_dice,
            'accuracy': self.accuracy,
            'iou': list(self.iou),
            'dice': list(self.dice),
            'absent_classes': list(self.absent_classes),
            'pixels': self.pixels,
            'ignored': self.ignored,
            'accuracy_mode': self.accuracy_mode,
            'defined': self.defined,
        }


def metrics(cm, accuracy_mode='overall'):
    """
    Per-class IoU and Dice with their means over the classes that occur in
    the prediction or the ground truth; absent classes are reported and
    left out of the means. An empty matrix gives undefined (NaN) metrics.
    """
    if accuracy_mode not in dict(ACCURACY_MODE_CHOICES):
        raise ValidationError(_('Unknown accuracy mode "%(mode)s"'), params={'mode': accuracy_mode})
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    present = union > 0
    absent = [int(c) for c in np.flatnonzero(~present)]

    if cm.total == 0:
        logger.warning("Empty confusion matrix, metrics are undefined")
        nan = [float('nan')] * cm.num_classes
        return SegmentationMetrics(iou=nan, dice=list(nan), absent_classes=absent, ignored=cm.ignored,
                                   accuracy_mode=accuracy_mode)

    with np.errstate(divide='ignore', invalid='ignore'):
        iou = np.where(present, tp / union, np.nan)
        dice = np.where(present, 2 * tp / (2 * tp + fp + fn), np.nan)
        if accuracy_mode == 'overall':
            accuracy = tp.sum() / counts.sum()
        else:
            rows = counts.sum(axis=1)
            accuracy = np.mean(tp[rows > 0] / rows[rows > 0])

    return SegmentationMetrics(
        iou=[float(value) for value in iou],
        dice=[float(value) for value in dice],
        miou=float(iou[present].mean()),
        mean_dice=float(dice[present].mean()),
        accuracy=float(accuracy),
        absent_classes=absent,
        pixels=cm.total,
        ignored=cm.ignored,
        accuracy_mode=accuracy_mode,
        defined=True,
    )
