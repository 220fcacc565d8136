import logging
from dataclasses import dataclass
from dataclasses import replace

import torch
import torch.nn as nn
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _

from segmentation.perturbations.ops import apply_perturbation
from segmentation.perturbations.settings import PERTURBATION_TYPES
from .backbones import build_backbone
from .heads import PixelClassifier
from .heads import ProjectionHead


logger = logging.getLogger(__name__)


@dataclass
class FeatureMap:
    """Shared features ``B x D x ceil(H/stride) x ceil(W/stride)``."""
    values: torch.Tensor
    stride: int
    input_size: tuple

    def with_values(self, values):
        return replace(self, values=values)


@dataclass
class ProjectionMap:
    values: torch.Tensor


@dataclass
class PredictionMap:
    logits: torch.Tensor
    probs: torch.Tensor
    upsampled: bool = False

    @property
    def labels(self):
        return self.probs.argmax(dim=1)

    @property
    def confidence(self):
        return self.probs.max(dim=1).values


class SegmentationModel(nn.Module):
    """
    Backbone, projector, main pixel classifier and K auxiliary classifiers
    for each perturbation type. Auxiliary heads share the classifier's
    architecture but own their parameters.
    """

    def __init__(self, backbone, num_classes, projection_dim=128, K=4, perturbation_types=None):
        super().__init__()
        if num_classes < 2:
            raise ValidationError(_('A segmentation model needs at least 2 classes, got %(n)s'),
                                  params={'n': num_classes})
        self.backbone = backbone
        self.num_classes = num_classes
        self.K = K
        self.perturbation_types = list(perturbation_types or PERTURBATION_TYPES)
        width = backbone.out_channels
        self.projector = ProjectionHead(width, projection_dim)
        self.classifier = PixelClassifier(width, num_classes)
        self.aux_classifiers = nn.ModuleDict({
            kind: nn.ModuleList(PixelClassifier(width, num_classes) for _k in range(K))
            for kind in self.perturbation_types
        })

    @property
    def stride(self):
        return self.backbone.stride

    def parameter_groups(self):
        return {
            'backbone': self.backbone,
            'projector': self.projector,
            'classifier': self.classifier,
            'aux_classifiers': self.aux_classifiers,
        }

    def _check_input(self, x):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ValueError(f"Expected a B x 3 x H x W image batch, got shape {tuple(x.shape)}")

    def encode(self, x):
        self._check_input(x)
        return self.backbone.encode(x)

    def decode(self, z, input_size):
        return FeatureMap(self.backbone.decode(z), self.stride, tuple(input_size))

    def extract_features(self, x):
        z = self.encode(x)
        return self.decode(z, x.shape[-2:])

    def project(self, f):
        return ProjectionMap(self.projector(f.values))

    def _predict(self, head, f, upsample):
        logits = head(f.values)
        if upsample:
            logits = F.interpolate(logits, size=f.input_size, mode='bilinear', align_corners=False)
        return PredictionMap(logits=logits, probs=logits.softmax(dim=1), upsampled=upsample)

    def classify(self, f, upsample=False):
        return self._predict(self.classifier, f, upsample)

    def aux_classify(self, f, k, kind):
        """Prediction of auxiliary head ``k`` (1-based) of perturbation ``kind``."""
        if kind not in self.aux_classifiers or not 1 <= k <= self.K:
            raise KeyError(f"No auxiliary classifier ({k}, {kind!r}); K={self.K}, types={self.perturbation_types}")
        return self._predict(self.aux_classifiers[kind][k - 1], f, upsample=False)

    def perturbed_predictions(self, f, config, generator=None, latent=None):
        """
        One fresh perturbation per auxiliary head. With ``config.target ==
        'encoder'`` the encoder ``latent`` is perturbed and decoded again.
        """
        if config.target == 'encoder' and latent is None:
            raise ValueError("Perturbing the encoder output needs the encoder latent")
        predictions = []
        for kind in config.types:
            for k in range(1, config.K + 1):
                if config.target == 'encoder':
                    perturbed = self.decode(apply_perturbation(latent, kind, config, generator), f.input_size)
                else:
                    perturbed = f.with_values(apply_perturbation(f.values, kind, config, generator))
                predictions.append(self.aux_classify(perturbed, k, kind))
        return predictions

    def forward(self, x):
        return self.classify(self.extract_features(x), upsample=True)


def build_model(num_classes, backbone='reference', width=256, stride=8, projection_dim=128, K=4,
                perturbation_types=None, weights_path=None):
    model = SegmentationModel(
        build_backbone(backbone, width=width, stride=stride, weights_path=weights_path),
        num_classes=num_classes,
        projection_dim=projection_dim,
        K=K,
        perturbation_types=perturbation_types,
    )
    logger.info("Built %s model: %s classes, width %s, %s aux heads",
                backbone, num_classes, width, K * len(model.perturbation_types))
    return model


def build_model_from_config(config, num_classes=None):
    model_section = config['model']
    num_classes = num_classes or model_section.get('num_classes')
    if not num_classes:
        raise ValidationError(_('model.num_classes is not set and no corpus was given'))
    return build_model(
        num_classes=int(num_classes),
        backbone=model_section['backbone'],
        width=int(model_section['width']),
        stride=int(model_section['stride']),
        projection_dim=int(model_section['projection_dim']),
        K=int(config['perturb']['K']),
        perturbation_types=list(config['perturb']['types']),
        weights_path=model_section.get('weights_path') or None,
    )
