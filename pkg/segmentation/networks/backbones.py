import logging
import math

import torch
import torch.nn as nn
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _
from torchvision.models import resnet101
from torchvision.models import resnet50
from torchvision.models.segmentation.deeplabv3 import ASPP

from .settings import ASPP_POOL_GROUPS
from .settings import BACKBONE_CHOICES


logger = logging.getLogger(__name__)


class ConvBnAct(nn.Sequential):
    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, dilation=1):
        super().__init__()
        padding = dilation * (kernel_size // 2)
        self.add_module('conv', nn.Conv2d(
            in_channels=in_channels,
            out_channels=out_channels,
            kernel_size=kernel_size,
            stride=stride,
            padding=padding,
            dilation=dilation,
            bias=False,
        ))
        self.add_module('bn', nn.BatchNorm2d(out_channels))
        self.add_module('act', nn.ReLU(inplace=True))


class Backbone(nn.Module):
    """
    Encoder-decoder feature extractor: ``decode(encode(x))`` maps a
    B x 3 x H x W batch to B x out_channels x ceil(H/stride) x ceil(W/stride).
    """
    stride = 8
    out_channels = 256

    def encode(self, x):
        raise NotImplementedError

    def decode(self, z):
        raise NotImplementedError

    def forward(self, x):
        return self.decode(self.encode(x))


class ReferenceBackbone(Backbone):
    """Small convolutional encoder-decoder for desk-scale runs and tests."""

    def __init__(self, width=256, stride=8, base_channels=32):
        super().__init__()
        stages = int(round(math.log2(stride)))
        if 2 ** stages != stride or stages < 1:
            raise ValidationError(_('Reference backbone stride must be a power of two, got %(stride)s'),
                                  params={'stride': stride})
        self.stride = stride
        self.out_channels = width

        layers = [ConvBnAct(3, base_channels)]
        channels = base_channels
        for _stage in range(stages):
            next_channels = min(channels * 2, 4 * base_channels)
            layers.append(ConvBnAct(channels, next_channels, stride=2))
            layers.append(ConvBnAct(next_channels, next_channels))
            channels = next_channels
        self.encoder = nn.Sequential(*layers)
        self.encoder_channels = channels
        self.decoder = nn.Sequential(
            ConvBnAct(channels, width, dilation=2),
            ConvBnAct(width, width, kernel_size=1),
        )

    def encode(self, x):
        return self.encoder(x)

    def decode(self, z):
        return self.decoder(z)


class ResNetBackbone(Backbone):
    """Dilated ResNet (output stride 8) with an ASPP decoder."""

    def __init__(self, depth=50, width=256, weights_path=None):
        super().__init__()
        factory = {50: resnet50, 101: resnet101}[depth]
        resnet = factory(weights=None, replace_stride_with_dilation=[False, True, True])
        if weights_path:
            state = torch.load(weights_path, map_location='cpu', weights_only=True)
            missing, unexpected = resnet.load_state_dict(state, strict=False)
            logger.info("Loaded encoder weights from %s (missing=%s, unexpected=%s)",
                        weights_path, len(missing), len(unexpected))
        self.stride = 8
        self.out_channels = width
        self.encoder = nn.Sequential(
            resnet.conv1, resnet.bn1, resnet.relu, resnet.maxpool,
            resnet.layer1, resnet.layer2, resnet.layer3, resnet.layer4,
        )
        self.decoder = ASPP(2048, [12, 24, 36], out_channels=width)
        # BatchNorm over a 1x1 pooled map fails on single-image batches
        pooling = self.decoder.convs[-1]
        # at least two channels per group
        pooling[2] = nn.GroupNorm(math.gcd(ASPP_POOL_GROUPS, max(1, width // 2)), width)

    def encode(self, x):
        return self.encoder(x)

    def decode(self, z):
        return self.decoder(z)


def build_backbone(name='reference', width=256, stride=8, weights_path=None):
    if name not in dict(BACKBONE_CHOICES):
        raise ValidationError(_('Unknown backbone "%(name)s", choose one of %(choices)s'),
                              params={'name': name, 'choices': [key for key, _label in BACKBONE_CHOICES]})
    if name == 'reference':
        backbone = ReferenceBackbone(width=width, stride=stride)
        if weights_path:
            backbone.load_state_dict(torch.load(weights_path, map_location='cpu', weights_only=True))
        return backbone
    if stride != 8:
        raise ValidationError(_('ResNet backbones only support stride 8'))
    return ResNetBackbone(depth=int(name[len('resnet'):]), width=width, weights_path=weights_path)
