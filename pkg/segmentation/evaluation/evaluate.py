import logging

import torch
from tqdm import tqdm

from common.settings import DEFAULT_IGNORE_INDEX
from segmentation.datasets.loaders import EvaluationDataset
from segmentation.datasets.loaders import build_loader
from .metrics import ConfusionMatrix
from .metrics import metrics


logger = logging.getLogger(__name__)


@torch.no_grad()
def confusion_for_model(model, samples, num_classes, tile_size, batch_size=8, device=None,
                        ignore_index=DEFAULT_IGNORE_INDEX, progress=False):
    """
    Confusion matrix of ``model`` over the labeled samples, predicted tile by
    tile at full input resolution.
    """
    was_training = model.training
    model.eval()
    parameter = next(model.parameters())
    device = device or parameter.device
    dataset = EvaluationDataset(samples, tile_size, ignore_index=ignore_index)
    loader = build_loader(dataset, batch_size=batch_size, shuffle=False, seed=0)
    cm = ConfusionMatrix(num_classes, ignore_index=ignore_index)
    for images, masks in tqdm(loader, desc="evaluate", unit='batch', disable=not progress):
        pred = model(images.to(device=device, dtype=parameter.dtype))
        cm.accumulate(pred.labels.cpu(), masks)
    model.train(was_training)
    return cm


def evaluate_model(model, samples, num_classes, tile_size=320, batch_size=8, device=None,
                   accuracy_mode='overall', ignore_index=DEFAULT_IGNORE_INDEX, progress=False):
    cm = confusion_for_model(model, samples, num_classes, tile_size, batch_size=batch_size, device=device,
                             ignore_index=ignore_index, progress=progress)
    result = metrics(cm, accuracy_mode=accuracy_mode)
    logger.info("Evaluated %s pixels: mIoU %.4f, Dice %.4f, accuracy %.4f",
                result.pixels, result.miou, result.mean_dice, result.accuracy)
    return result
