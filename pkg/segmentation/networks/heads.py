import torch.nn as nn


class ProjectionHead(nn.Sequential):
    """
    Two pixel-wise fully connected layers (1x1 convolutions) with a ReLU in
    between. The output is not normalised; the contrastive loss does that.
    """

    def __init__(self, in_channels=256, projection_dim=128):
        super().__init__()
        self.add_module('fc1', nn.Conv2d(in_channels, projection_dim, kernel_size=1))
        self.add_module('act', nn.ReLU(inplace=False))
        self.add_module('fc2', nn.Conv2d(projection_dim, projection_dim, kernel_size=1))
        self.projection_dim = projection_dim


class PixelClassifier(nn.Conv2d):
    """1x1 convolution from D feature channels to class logits."""

    def __init__(self, in_channels, num_classes):
        super().__init__(in_channels, num_classes, kernel_size=1)
        self.num_classes = num_classes
