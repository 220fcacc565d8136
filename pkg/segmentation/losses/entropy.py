import torch.nn.functional as F


def entropy_loss(pred):
    """
    Mean over pixels (and batch) of -sum_c p log p, with 0 log 0 = 0.
    """
    log_probs = F.log_softmax(pred.logits, dim=1)
    plogp = pred.probs * log_probs.masked_fill(pred.probs == 0, 0.0)
    return -plogp.sum(dim=1).mean()
