"""
Stochastic feature perturbations for cross-consistency training.

Every operator takes a ``B x D x h x w`` feature tensor and an optional
``torch.Generator`` and redraws its noise or mask on each call. Given the
drawn noise/mask the output is differentiable with respect to the
features.
"""
import logging
from dataclasses import dataclass

import torch
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import PERTURBATION_TARGET_CHOICES
from .settings import PERTURBATION_TYPES


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PerturbConfig:
    noise_lo: float = -0.3
    noise_hi: float = 0.3
    fdrop_lo: float = 0.75
    fdrop_hi: float = 0.9
    dropout_p: float = 0.5
    K: int = 4
    dropout_keep: bool = True
    fdrop_literal: bool = False
    fdrop_drop_low: bool = False
    target: str = 'features'
    types: tuple = tuple(PERTURBATION_TYPES)

    def __post_init__(self):
        if self.noise_lo > self.noise_hi:
            raise ValidationError(_('Feature noise needs lo <= hi, got %(lo)s > %(hi)s'),
                                  params={'lo': self.noise_lo, 'hi': self.noise_hi})
        if not 0 < self.fdrop_lo <= self.fdrop_hi < 1:
            raise ValidationError(_('Feature dropout needs 0 < lo <= hi < 1, got %(lo)s, %(hi)s'),
                                  params={'lo': self.fdrop_lo, 'hi': self.fdrop_hi})
        if not 0 < self.dropout_p < 1:
            raise ValidationError(_('Dropout probability must be in (0, 1), got %(p)s'), params={'p': self.dropout_p})
        if self.K < 1:
            raise ValidationError(_('K must be at least 1, got %(k)s'), params={'k': self.K})
        unknown = [kind for kind in self.types if kind not in PERTURBATION_TYPES]
        if unknown:
            raise ValidationError(_('Unknown perturbation types %(types)s'), params={'types': unknown})
        if self.target not in dict(PERTURBATION_TARGET_CHOICES):
            raise ValidationError(_('Unknown perturbation target "%(target)s"'), params={'target': self.target})

    @classmethod
    def from_config(cls, section):
        return cls(
            noise_lo=float(section['noise'][0]),
            noise_hi=float(section['noise'][1]),
            fdrop_lo=float(section['feature_dropout'][0]),
            fdrop_hi=float(section['feature_dropout'][1]),
            dropout_p=float(section['dropout']),
            K=int(section['K']),
            dropout_keep=bool(section['dropout_keep']),
            fdrop_literal=bool(section['fdrop_literal']),
            fdrop_drop_low=bool(section['fdrop_drop_low']),
            target=section['target'],
            types=tuple(section['types']),
        )


def _uniform(shape, lo, hi, generator, like):
    device = generator.device if generator is not None else like.device
    draw = torch.rand(shape, generator=generator, device=device, dtype=like.dtype)
    return (draw * (hi - lo) + lo).to(like.device)


def feature_noise(f, alpha, beta, generator=None):
    """f + f * omega with omega ~ U(alpha, beta) element-wise."""
    if alpha > beta:
        raise ValueError(f"feature_noise needs alpha <= beta, got {alpha} > {beta}")
    omega = _uniform(f.shape, alpha, beta, generator, f)
    return f * omega + f


def normalized_activation(f):
    """Channel-sum map min-max normalised per sample to [0, 1]; B x 1 x h x w."""
    attention = f.sum(dim=1, keepdim=True)
    flat = attention.flatten(1)
    low = flat.min(dim=1).values.view(-1, 1, 1, 1)
    high = flat.max(dim=1).values.view(-1, 1, 1, 1)
    span = high - low
    safe = torch.where(span > 0, span, torch.ones_like(span))
    normalized = torch.where(span > 0, (attention - low) / safe, torch.zeros_like(attention))
    return normalized, span > 0


def feature_dropout(f, lo, hi, generator=None, literal=False, drop_low=False):
    """
    Zero every spatial position whose normalised channel-sum reaches the
    drawn threshold gamma ~ U(lo, hi) (all channels at once).

    A spatially constant channel-sum leaves the features untouched.
    ``drop_low`` keeps positions at or above gamma instead; ``literal``
    multiplies the mask with the normalised map rather than with ``f``.
    """
    if not 0 < lo <= hi < 1:
        raise ValueError(f"feature_dropout needs 0 < lo <= hi < 1, got {lo}, {hi}")
    gamma = _uniform((1,), lo, hi, generator, f)
    with torch.no_grad():
        normalized, varies = normalized_activation(f)
        keep = normalized >= gamma if drop_low else normalized < gamma
        keep = keep | ~varies
        mask = keep.to(f.dtype)
    if literal:
        normalized, _varies = normalized_activation(f)
        return (mask * normalized).expand_as(f)
    return f * mask


def spatial_dropout(f, delta, generator=None, keep_probability=True):
    """
    Bernoulli mask per spatial position shared by all channels, no
    rescaling. ``delta`` is the keep probability unless
    ``keep_probability`` is false.
    """
    if not 0 < delta < 1:
        raise ValueError(f"spatial_dropout needs 0 < delta < 1, got {delta}")
    keep = delta if keep_probability else 1.0 - delta
    batch, _channels, height, width = f.shape
    draw = _uniform((batch, 1, height, width), 0.0, 1.0, generator, f)
    mask = (draw < keep).to(f.dtype)
    return f * mask


def apply_perturbation(f, kind, config, generator=None):
    if kind == 'noise':
        return feature_noise(f, config.noise_lo, config.noise_hi, generator)
    if kind == 'feature_dropout':
        return feature_dropout(f, config.fdrop_lo, config.fdrop_hi, generator,
                               literal=config.fdrop_literal, drop_low=config.fdrop_drop_low)
    if kind == 'dropout':
        return spatial_dropout(f, config.dropout_p, generator, keep_probability=config.dropout_keep)
    raise KeyError(f"Unknown perturbation type {kind!r}")
