import torch.nn.functional as F

from common.settings import DEFAULT_IGNORE_INDEX
from .utils import count_event
from .utils import zero_loss


def supervised_ce(pred, target, ignore_index=DEFAULT_IGNORE_INDEX):
    """
    Mean cross-entropy over non-ignored pixels of an upsampled prediction.
    All-ignored targets give 0.
    """
    logits = pred.logits
    if logits.dim() != 4 or target.shape != (logits.shape[0], *logits.shape[-2:]):
        raise ValueError(
            f"supervised_ce needs B x C x H x W logits and a B x H x W target, "
            f"got {tuple(logits.shape)} and {tuple(target.shape)}")
    if bool((target == ignore_index).all()):
        count_event('all_ignore_targets', "Supervised batch has no labeled pixels")
        return zero_loss(logits)
    return F.cross_entropy(logits, target, ignore_index=ignore_index)
