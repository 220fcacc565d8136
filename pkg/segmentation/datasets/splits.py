import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import DEFAULT_SPLIT_ROUNDING
from .settings import SPLIT_MODE_CHOICES
from .settings import SPLIT_ROUNDING_CHOICES
from .settings import SUPPORTED_FRACTIONS


logger = logging.getLogger(__name__)


def parse_fraction(value):
    if isinstance(value, Fraction):
        return value
    try:
        if isinstance(value, float):
            return Fraction(value).limit_denominator(64)
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ValidationError(_('Invalid label fraction "%(value)s"'), params={'value': value})


@dataclass(frozen=True)
class SplitSpec:
    mode: str = 'by_center'
    fraction: Fraction = Fraction(1, 8)
    seed: int = 0
    rounding: str | None = None

    def __post_init__(self):
        object.__setattr__(self, 'fraction', parse_fraction(self.fraction))
        if self.mode not in dict(SPLIT_MODE_CHOICES):
            raise ValidationError(_('Unknown split mode "%(mode)s"'), params={'mode': self.mode})
        if self.fraction not in SUPPORTED_FRACTIONS:
            raise ValidationError(
                _('Label fraction %(fraction)s is not one of %(supported)s'),
                params={'fraction': self.fraction, 'supported': ", ".join(str(f) for f in SUPPORTED_FRACTIONS)})
        if self.rounding is not None and self.rounding not in dict(SPLIT_ROUNDING_CHOICES):
            raise ValidationError(_('Unknown rounding "%(rounding)s"'), params={'rounding': self.rounding})

    @property
    def effective_rounding(self):
        return self.rounding or DEFAULT_SPLIT_ROUNDING[self.mode]

    def count(self, total):
        scaled = self.fraction * total
        if self.effective_rounding == 'ceil':
            return math.ceil(scaled)
        return math.floor(scaled)


def split_labeled(samples, spec):
    """
    Partition samples into a labeled part and an unlabeled part whose masks
    are stripped. The partition only depends on (samples, spec).
    """
    samples = list(samples)
    rng = np.random.default_rng(spec.seed)

    if spec.mode == 'by_center':
        missing = [sample.source_id for sample in samples if sample.center_id is None]
        if missing:
            raise ValidationError(
                _('by_center split needs a center id on every sample, missing on %(ids)s'),
                params={'ids': ", ".join(missing[:10])})
        centers = sorted({sample.center_id for sample in samples})
        chosen = spec.count(len(centers))
        if chosen == 0:
            raise ValidationError(
                _('Fraction %(fraction)s of %(total)s centers selects no labeled data'),
                params={'fraction': spec.fraction, 'total': len(centers)})
        order = rng.permutation(len(centers))
        labeled_centers = {centers[i] for i in order[:chosen]}
        is_labeled = [sample.center_id in labeled_centers for sample in samples]
        logger.info("Labeled centers (%s of %s): %s", chosen, len(centers), sorted(labeled_centers))
    else:
        ids = sorted(sample.source_id for sample in samples)
        chosen = spec.count(len(ids))
        if chosen == 0:
            raise ValidationError(
                _('Fraction %(fraction)s of %(total)s images selects no labeled data'),
                params={'fraction': spec.fraction, 'total': len(ids)})
        order = rng.permutation(len(ids))
        labeled_ids = {ids[i] for i in order[:chosen]}
        is_labeled = [sample.source_id in labeled_ids for sample in samples]

    labeled = [sample for sample, flag in zip(samples, is_labeled) if flag]
    unlabeled = [sample.unlabeled() for sample, flag in zip(samples, is_labeled) if not flag]
    return labeled, unlabeled


def holdout_split(samples, fraction, seed=0):
    """
    Held-out evaluation images for corpora whose manifest marks no test
    entries; selection is by image and seeded.
    """
    samples = sorted(samples, key=lambda sample: sample.source_id)
    count = int(round(fraction * len(samples)))
    if count <= 0 or count >= len(samples):
        raise ValidationError(
            _('Hold-out fraction %(fraction)s leaves no train or no test images out of %(total)s'),
            params={'fraction': fraction, 'total': len(samples)})
    order = np.random.default_rng(seed).permutation(len(samples))
    test_index = set(order[:count].tolist())
    train = [sample for i, sample in enumerate(samples) if i not in test_index]
    test = [sample for i, sample in enumerate(samples) if i in test_index]
    return train, test
