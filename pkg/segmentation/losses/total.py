import logging
from dataclasses import dataclass

import torch
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import LOSS_PARTS


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    w_sup: float = 1.0
    w_cont: float = 0.1
    w_cross: float = 0.01
    w_ent: float = 0.01

    def __post_init__(self):
        if self.w_sup <= 0:
            raise ValidationError(_('w_sup must be positive, got %(value)s'), params={'value': self.w_sup})
        for name in ('w_cont', 'w_cross', 'w_ent'):
            if getattr(self, name) < 0:
                raise ValidationError(_('%(name)s must be non-negative, got %(value)s'),
                                      params={'name': name, 'value': getattr(self, name)})

    @classmethod
    def from_config(cls, section):
        return cls(**{name: float(section[name]) for name in ('w_sup', 'w_cont', 'w_cross', 'w_ent')})

    @classmethod
    def supervised_only(cls, w_sup=1.0):
        return cls(w_sup=w_sup, w_cont=0.0, w_cross=0.0, w_ent=0.0)


@dataclass
class LossParts:
    """Loss components of one step; None means the part was not computed."""
    l_sup: torch.Tensor
    l_cont: torch.Tensor | None = None
    l_cross: torch.Tensor | None = None
    l_ent: torch.Tensor | None = None

    def items(self):
        return [(name, getattr(self, name)) for name in LOSS_PARTS]


def _as_float(value):
    if value is None:
        return 0.0
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def total_loss(parts, weights):
    """
    Weighted sum of the loss parts and a float breakdown (parts and total).
    Parts with zero weight or that were not computed add nothing.
    """
    factors = {name: getattr(weights, name.replace('l_', 'w_', 1)) for name in LOSS_PARTS}
    total = None
    for name, value in parts.items():
        if value is None or factors[name] == 0:
            continue
        term = factors[name] * value
        total = term if total is None else total + term
    if total is None:
        total = torch.zeros(())
    breakdown = {name: _as_float(value) for name, value in parts.items()}
    breakdown['total'] = _as_float(total)
    return total, breakdown
