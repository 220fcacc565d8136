__title__ = 'crcfp'
__version__ = '0.1.0'
__description__ = (
    'Semi-supervised semantic segmentation of histology images with '
    'context-aware directional contrastive learning, cross-consistency '
    'training over perturbed features and entropy minimisation.'
)
VERSION = __version__
