"""
Directional pixel contrastive loss over the aligned overlap of two crops.

In the u1 -> u2 direction pixel i of crop 1 is pulled towards the same
location in crop 2 when it is confident (conf1 > threshold) and crop 2 is
more confident there (conf1 < conf2). Negatives are the crop-2 pixels and
bank entries whose pseudo-label differs from pl1[i].
"""
import logging
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import CONTRASTIVE_DIVISOR_CHOICES
from .settings import DEFAULT_TEMPERATURE
from .settings import DEFAULT_THRESHOLD
from .utils import zero_loss


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContrastiveConfig:
    threshold: float = DEFAULT_THRESHOLD
    temperature: float = DEFAULT_TEMPERATURE
    divisor: str = 'positives'
    detach_target: bool = True

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValidationError(_('Confidence threshold must be in (0, 1), got %(value)s'),
                                  params={'value': self.threshold})
        if self.temperature <= 0:
            raise ValidationError(_('Temperature must be positive, got %(value)s'),
                                  params={'value': self.temperature})
        if self.divisor not in dict(CONTRASTIVE_DIVISOR_CHOICES):
            raise ValidationError(_('Unknown contrastive divisor "%(value)s"'), params={'value': self.divisor})

    @classmethod
    def from_config(cls, section):
        return cls(
            threshold=float(section['threshold']),
            temperature=float(section['temperature']),
            divisor=section['divisor'],
            detach_target=bool(section['detach_target']),
        )


@dataclass
class ContrastiveContext:
    """
    One direction of an aligned pair: ``phi1``/``phi2`` are N x P,
    ``conf``/``pl`` length N, ``negatives`` M x P with ``negative_labels``
    of length M. ``negative_mask`` (N x M) restricts the bank negatives
    per pixel when each pixel draws its own.
    """
    phi1: torch.Tensor
    phi2: torch.Tensor
    conf1: torch.Tensor
    conf2: torch.Tensor
    pl1: torch.Tensor
    pl2: torch.Tensor
    negatives: torch.Tensor | None = None
    negative_labels: torch.Tensor | None = None
    negative_mask: torch.Tensor | None = None
    threshold: float = DEFAULT_THRESHOLD
    temperature: float = DEFAULT_TEMPERATURE
    divisor: str = 'positives'
    detach_target: bool = True

    def __post_init__(self):
        count = self.phi1.shape[0]
        lengths = [self.phi2.shape[0], self.conf1.shape[0], self.conf2.shape[0], self.pl1.shape[0], self.pl2.shape[0]]
        if any(length != count for length in lengths):
            raise ValueError(f"ContrastiveContext fields disagree on N: {[count] + lengths}")
        if self.negatives is not None:
            if self.negative_labels is None or self.negative_labels.shape[0] != self.negatives.shape[0]:
                raise ValueError("Bank negatives need one label each")
            if self.negative_mask is not None and tuple(self.negative_mask.shape) != (count, self.negatives.shape[0]):
                raise ValueError(f"negative_mask must be {count} x {self.negatives.shape[0]}")
        if not 0 < self.threshold < 1 or self.temperature <= 0:
            raise ValueError(f"Invalid threshold/temperature {self.threshold}, {self.temperature}")

    @property
    def size(self):
        return self.phi1.shape[0]

    def positive_mask(self):
        return (self.conf1 > self.threshold) & (self.conf1 < self.conf2)

    def swapped(self, negatives=None, negative_labels=None, negative_mask=None):
        return ContrastiveContext(
            phi1=self.phi2, phi2=self.phi1, conf1=self.conf2, conf2=self.conf1, pl1=self.pl2, pl2=self.pl1,
            negatives=negatives, negative_labels=negative_labels, negative_mask=negative_mask,
            threshold=self.threshold, temperature=self.temperature,
            divisor=self.divisor, detach_target=self.detach_target,
        )


def directional_contrastive_pair(ctx):
    if ctx.size == 0:
        return zero_loss(ctx.phi1)
    positive = ctx.positive_mask()
    if not bool(positive.any()):
        return zero_loss(ctx.phi1)

    anchor = F.normalize(ctx.phi1, dim=1)
    target = ctx.phi2.detach() if ctx.detach_target else ctx.phi2
    target = F.normalize(target, dim=1)

    positive_logit = (anchor * target).sum(dim=1) / ctx.temperature
    pair_logits = anchor @ target.t() / ctx.temperature
    pair_logits = pair_logits.masked_fill(ctx.pl1[:, None] == ctx.pl2[None, :], float('-inf'))
    logits = [positive_logit[:, None], pair_logits]

    if ctx.negatives is not None and ctx.negatives.shape[0]:
        bank = ctx.negatives.detach() if ctx.detach_target else ctx.negatives
        bank = F.normalize(bank.to(anchor.dtype), dim=1)
        bank_logits = anchor @ bank.t() / ctx.temperature
        usable = ctx.pl1[:, None] != ctx.negative_labels[None, :].to(ctx.pl1.device)
        if ctx.negative_mask is not None:
            usable = usable & ctx.negative_mask
        logits.append(bank_logits.masked_fill(~usable, float('-inf')))

    # -log(e^pos / (e^pos + sum e^neg)) per pixel
    per_pixel = torch.logsumexp(torch.cat(logits, dim=1), dim=1) - positive_logit
    weight = positive.to(per_pixel.dtype)
    divisor = weight.sum() if ctx.divisor == 'positives' else float(ctx.size)
    return (per_pixel * weight).sum() / divisor


def directional_contrastive(ctx12, ctx21):
    """Sum of both directions of a crop pair."""
    return directional_contrastive_pair(ctx12) + directional_contrastive_pair(ctx21)


def _unpack(draw):
    if draw is None:
        return None, None, None
    if len(draw) == 2:
        return draw[0], draw[1], None
    return tuple(draw)


def build_contexts(phi1, phi2, probs1, probs2, config, negatives12=None, negatives21=None):
    """
    Contexts for both directions of an aligned pair. ``probs`` are N x C;
    confidences and pseudo-labels are taken without gradient.
    ``negatives12``/``negatives21`` are bank draws: (vectors, labels) or
    (vectors, labels, per-pixel mask).
    """
    with torch.no_grad():
        conf1, pl1 = probs1.max(dim=1)
        conf2, pl2 = probs2.max(dim=1)
    vectors12, labels12, mask12 = _unpack(negatives12)
    vectors21, labels21, mask21 = _unpack(negatives21)
    ctx12 = ContrastiveContext(
        phi1=phi1, phi2=phi2, conf1=conf1, conf2=conf2, pl1=pl1, pl2=pl2,
        negatives=vectors12, negative_labels=labels12, negative_mask=mask12,
        threshold=config.threshold, temperature=config.temperature,
        divisor=config.divisor, detach_target=config.detach_target,
    )
    return ctx12, ctx12.swapped(negatives=vectors21, negative_labels=labels21, negative_mask=mask21)
