import logging
from dataclasses import dataclass

import torch
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from .settings import DEFAULT_CAPACITY
from .settings import DEFAULT_SAMPLE_CAP
from .settings import NEGATIVE_DRAW_CHOICES


logger = logging.getLogger(__name__)


@dataclass
class BankEntry:
    vector: torch.Tensor
    pseudo_label: int
    confidence: float
    step: int


@dataclass(frozen=True)
class BankConfig:
    capacity: int = DEFAULT_CAPACITY
    sample_cap: int = DEFAULT_SAMPLE_CAP
    push_confident_only: bool = True
    draws: str = 'shared'
    save_in_checkpoint: bool = False

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError(_('Bank capacity must be at least 1, got %(value)s'), params={'value': self.capacity})
        if self.sample_cap < 0:
            raise ValidationError(_('sample_cap must be non-negative, got %(value)s'),
                                  params={'value': self.sample_cap})
        if self.draws not in dict(NEGATIVE_DRAW_CHOICES):
            raise ValidationError(_('Unknown negative draw mode "%(value)s"'), params={'value': self.draws})

    @classmethod
    def from_config(cls, section):
        return cls(
            capacity=int(section['capacity']),
            sample_cap=int(section['sample_cap']),
            push_confident_only=bool(section['push_confident_only']),
            draws=section['draws'],
            save_in_checkpoint=bool(section['save_in_checkpoint']),
        )


def _choose(count, total, generator, device):
    """Indices of ``count`` of ``total`` items, uniform without replacement, in original order."""
    if count >= total:
        return torch.arange(total, device=device)
    picked = torch.randperm(total, generator=generator)[:count]
    return picked.sort().values.to(device)


class MemoryBank:
    """
    FIFO store of projection vectors with their pseudo-labels, oldest
    evicted first. Stored vectors are detached copies.
    """

    def __init__(self, capacity=DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValidationError(_('Bank capacity must be at least 1, got %(value)s'), params={'value': capacity})
        self.capacity = int(capacity)
        self.vectors = None
        self.labels = torch.zeros(0, dtype=torch.long)
        self.confidences = torch.zeros(0)
        self.steps = torch.zeros(0, dtype=torch.long)

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def entries(self):
        if self.vectors is None:
            return []
        return [
            BankEntry(vector, int(label), float(confidence), int(step))
            for vector, label, confidence, step in zip(self.vectors, self.labels, self.confidences, self.steps)
        ]

    def push(self, projections, pseudo_labels, confidences, step, sample_cap=DEFAULT_SAMPLE_CAP,
             generator=None, threshold=None):
        """
        Append up to ``sample_cap`` of the given rows (only those with
        confidence above ``threshold`` when one is given).
        """
        count = projections.shape[0]
        if pseudo_labels.shape[0] != count or confidences.shape[0] != count:
            raise ValueError(
                f"push needs equal lengths, got {count}, {pseudo_labels.shape[0]}, {confidences.shape[0]}")
        projections = projections.detach()
        pseudo_labels = pseudo_labels.detach().long()
        confidences = confidences.detach()
        if threshold is not None:
            keep = confidences > threshold
            projections, pseudo_labels, confidences = projections[keep], pseudo_labels[keep], confidences[keep]
        if sample_cap is not None:
            chosen = _choose(sample_cap, projections.shape[0], generator, projections.device)
            projections, pseudo_labels, confidences = projections[chosen], pseudo_labels[chosen], confidences[chosen]
        if projections.shape[0] == 0:
            return self

        if self.vectors is None:
            self.vectors = projections.new_zeros((0, projections.shape[1]))
            device = projections.device
            self.labels = self.labels.to(device)
            self.confidences = self.confidences.to(device=device, dtype=projections.dtype)
            self.steps = self.steps.to(device)
        steps = torch.full((projections.shape[0],), int(step), dtype=torch.long, device=self.steps.device)
        self.vectors = torch.cat([self.vectors, projections.clone()])[-self.capacity:]
        self.labels = torch.cat([self.labels, pseudo_labels])[-self.capacity:]
        self.confidences = torch.cat([self.confidences, confidences.to(self.confidences.dtype)])[-self.capacity:]
        self.steps = torch.cat([self.steps, steps])[-self.capacity:]
        return self

    def sample_negatives(self, positive_label, count, generator=None):
        """Up to ``count`` entries whose pseudo-label differs from ``positive_label``."""
        if count <= 0 or not len(self):
            return []
        candidates = torch.nonzero(self.labels != positive_label).flatten()
        chosen = candidates[_choose(count, candidates.shape[0], generator, candidates.device)]
        entries = self.entries
        return [entries[int(index)] for index in chosen]

    def draw(self, count, generator=None):
        """
        Shared draw of up to ``count`` entries regardless of label, as
        (vectors, labels); the loss filters them per pixel.
        """
        if count <= 0 or not len(self):
            return None
        chosen = _choose(count, len(self), generator, self.labels.device)
        return self.vectors[chosen], self.labels[chosen]

    def draw_per_pixel(self, pseudo_labels, count, generator=None):
        """
        Independent draw of up to ``count`` differently labelled entries for
        every pixel. Returns (vectors, labels, mask) with mask N x len(bank).
        """
        if count <= 0 or not len(self):
            return None
        scores = torch.rand((pseudo_labels.shape[0], len(self)), generator=generator).to(self.labels.device)
        differs = pseudo_labels[:, None].to(self.labels.device) != self.labels[None, :]
        scores = scores.masked_fill(~differs, -1.0)
        top = scores.topk(min(count, len(self)), dim=1).indices
        mask = torch.zeros_like(differs)
        mask.scatter_(1, top, True)
        return self.vectors, self.labels, mask & differs

    def state_dict(self):
        return {
            'capacity': self.capacity,
            'vectors': self.vectors,
            'labels': self.labels,
            'confidences': self.confidences,
            'steps': self.steps,
        }

    def load_state_dict(self, state):
        self.capacity = int(state['capacity'])
        self.vectors = state['vectors']
        self.labels = state['labels']
        self.confidences = state['confidences']
        self.steps = state['steps']
