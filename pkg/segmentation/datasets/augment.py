import math
from dataclasses import dataclass
from dataclasses import fields
from dataclasses import replace

import torch
import torchvision.transforms.v2.functional as TF


@dataclass(frozen=True)
class AugmentPolicy:
    """Probabilities and ranges of the training augmentations."""
    hflip: float = 0.5
    vflip: float = 0.5
    blur: float = 0.2
    blur_sigma: tuple = (0.1, 2.0)
    color: float = 0.8
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.05
    grey: float = 0.2

    @classmethod
    def from_config(cls, config):
        names = {f.name for f in fields(cls)}
        values = {key: tuple(value) if isinstance(value, list) else value
                  for key, value in config.items() if key in names}
        return cls(**values)

    @classmethod
    def disabled(cls):
        return cls(hflip=0.0, vflip=0.0, blur=0.0, color=0.0, grey=0.0)


def _jitter(rng, amount):
    return float(rng.uniform(max(0.0, 1.0 - amount), 1.0 + amount))


def augment_pair(image, mask, policy, rng):
    """
    Apply the policy to an image and (optionally) its mask. Geometric steps
    touch both, photometric steps only the image.
    """
    if rng.random() < policy.hflip:
        image = TF.horizontal_flip(image)
        if mask is not None:
            mask = torch.flip(mask, dims=[-1])
    if rng.random() < policy.vflip:
        image = TF.vertical_flip(image)
        if mask is not None:
            mask = torch.flip(mask, dims=[-2])

    if rng.random() < policy.color:
        image = TF.adjust_brightness(image, _jitter(rng, policy.brightness))
        image = TF.adjust_contrast(image, _jitter(rng, policy.contrast))
        image = TF.adjust_saturation(image, _jitter(rng, policy.saturation))
        if policy.hue:
            image = TF.adjust_hue(image, float(rng.uniform(-policy.hue, policy.hue)))
    if rng.random() < policy.grey:
        image = TF.rgb_to_grayscale(image, num_output_channels=3)
    if rng.random() < policy.blur:
        sigma = float(rng.uniform(*policy.blur_sigma))
        kernel = 2 * math.ceil(2 * sigma) + 1
        image = TF.gaussian_blur(image, kernel_size=[kernel, kernel], sigma=[sigma, sigma])

    return image.clamp(0.0, 1.0), mask


def augment(sample, policy, rng):
    image, mask = augment_pair(sample.image, sample.mask, policy, rng)
    return replace(sample, image=image, mask=mask)
