import json
import logging
import math
import os
from dataclasses import dataclass

import torch
from django.core.exceptions import ValidationError
from django.utils.translation import gettext_lazy as _
from tqdm import tqdm

from common.base.utils import make_generator
from common.settings import DEFAULT_IGNORE_INDEX
from segmentation.datasets.loaders import cycle
from segmentation.losses.alignment import align_overlap
from segmentation.losses.consistency import cross_consistency
from segmentation.losses.contrastive import ContrastiveConfig
from segmentation.losses.contrastive import build_contexts
from segmentation.losses.contrastive import directional_contrastive
from segmentation.losses.entropy import entropy_loss
from segmentation.losses.supervised import supervised_ce
from segmentation.losses.total import LossParts
from segmentation.losses.total import LossWeights
from segmentation.losses.total import total_loss
from segmentation.losses.utils import zero_loss
from segmentation.memory_bank.bank import BankConfig
from segmentation.memory_bank.bank import MemoryBank
from segmentation.networks.checkpoints import save_checkpoint
from segmentation.perturbations.ops import PerturbConfig
from .schedules import PolyLR
from .settings import CHECKPOINTS_DIR
from .settings import METRICS_LOG
from .settings import SCHEME_CHOICES
from .settings import SCHEME_PARTS


logger = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    def __init__(self, breakdown):
        self.breakdown = breakdown
        parts = ", ".join(f"{name}={value}" for name, value in breakdown.items())
        super().__init__(f"Non-finite training loss: {parts}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    warmup_epochs: int = 5
    batch_size: int = 8
    unlabeled_batch_size: int = 8
    base_lr: float = 0.001
    lr_power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 0.0001
    seeds: tuple = (0, 1, 2)
    steps_per_epoch: int | None = None
    checkpoint_every: int = 10
    eval_every: int = 0
    float64: bool = False
    deterministic: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(_('train.epochs must be at least 1, got %(value)s'), params={'value': self.epochs})
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValidationError(_('train.warmup_epochs must be below train.epochs, got %(warmup)s >= %(epochs)s'),
                                  params={'warmup': self.warmup_epochs, 'epochs': self.epochs})
        if self.base_lr <= 0:
            raise ValidationError(_('train.base_lr must be positive, got %(value)s'), params={'value': self.base_lr})
        if self.batch_size < 1 or self.unlabeled_batch_size < 1:
            raise ValidationError(_('Batch sizes must be at least 1'))
        if not self.seeds:
            raise ValidationError(_('train.seeds must list at least one seed'))

    @classmethod
    def from_config(cls, section):
        steps = section.get('steps_per_epoch')
        return cls(
            epochs=int(section['epochs']),
            warmup_epochs=int(section['warmup_epochs']),
            batch_size=int(section['batch_size']),
            unlabeled_batch_size=int(section['unlabeled_batch_size']),
            base_lr=float(section['base_lr']),
            lr_power=float(section['lr_power']),
            momentum=float(section['momentum']),
            weight_decay=float(section['weight_decay']),
            seeds=tuple(int(seed) for seed in section['seeds']),
            steps_per_epoch=int(steps) if steps else None,
            checkpoint_every=int(section['checkpoint_every']),
            eval_every=int(section['eval_every']),
            float64=bool(section['float64']),
            deterministic=bool(section['deterministic']),
        )

    @property
    def dtype(self):
        return torch.float64 if self.float64 else torch.float32


def scheme_weights(section):
    """LossWeights of the ``loss`` section with the parts its scheme leaves out set to 0."""
    weights = LossWeights.from_config(section)
    scheme = section.get('scheme')
    if not scheme:
        return weights
    if scheme not in SCHEME_PARTS:
        raise ValidationError(_('Unknown scheme "%(scheme)s", choose one of %(choices)s'),
                              params={'scheme': scheme, 'choices': [key for key, _label in SCHEME_CHOICES]})
    kept = SCHEME_PARTS[scheme]
    return LossWeights(**{name: (getattr(weights, name) if name in kept else 0.0)
                          for name in ('w_sup', 'w_cont', 'w_cross', 'w_ent')})


class Trainer:
    """
    Owns the model, its optimizer, the memory bank and the random generator
    of one training run. Only the training thread mutates them.
    """

    def __init__(self, model, config, seed=0, run_dir=None, device=None, ignore_index=DEFAULT_IGNORE_INDEX):
        self.config = config
        self.train_config = TrainConfig.from_config(config['train'])
        self.weights = scheme_weights(config['loss'])
        self.perturb = PerturbConfig.from_config(config['perturb'])
        self.contrastive = ContrastiveConfig.from_config(config['contrastive'])
        self.detach_consistency = bool(config['consistency']['detach_target'])
        self.bank_config = BankConfig.from_config(config['bank'])
        self.negatives = int(config['bank']['negatives'])
        self.ignore_index = ignore_index
        self.device = torch.device(device or 'cpu')
        self.dtype = self.train_config.dtype
        self.model = model.to(device=self.device, dtype=self.dtype)
        self.bank = MemoryBank(self.bank_config.capacity)
        self.generator = make_generator(seed)
        self.seed = seed
        self.optimizer = torch.optim.SGD(
            self.model.parameters(),
            lr=self.train_config.base_lr,
            momentum=self.train_config.momentum,
            weight_decay=self.train_config.weight_decay,
        )
        self.scheduler = None
        self.run_dir = run_dir
        self.metrics_path = os.path.join(run_dir, METRICS_LOG) if run_dir else None
        if run_dir:
            os.makedirs(run_dir, exist_ok=True)

    def _to_device(self, tensor):
        if tensor.is_floating_point():
            return tensor.to(device=self.device, dtype=self.dtype)
        return tensor.to(self.device)

    def contrastive_loss(self, batch_u, step):
        """Directional contrastive loss of every crop pair; returns (loss, skipped pairs)."""
        model = self.model
        crop1 = self._to_device(batch_u['crop1'])
        crop2 = self._to_device(batch_u['crop2'])
        f1 = model.extract_features(crop1)
        f2 = model.extract_features(crop2)
        phi1 = model.project(f1).values
        phi2 = model.project(f2).values
        with torch.no_grad():
            probs1 = model.classify(f1).probs
            probs2 = model.classify(f2).probs

        shared = self.bank_config.draws == 'shared'
        if shared:
            draw12 = self.bank.draw(self.negatives, self.generator)
            draw21 = self.bank.draw(self.negatives, self.generator)

        dim = phi1.shape[1]
        losses, pushed, skipped = [], [], 0
        for index in range(phi1.shape[0]):
            aligned = align_overlap(
                torch.cat([phi1[index], probs1[index]]),
                torch.cat([phi2[index], probs2[index]]),
                batch_u['rect1'][index], batch_u['rect2'][index], model.stride)
            if aligned is None:
                skipped += 1
                continue
            a1, a2 = aligned
            if not shared:
                draw12 = self.bank.draw_per_pixel(a1[:, dim:].argmax(dim=1), self.negatives, self.generator)
                draw21 = self.bank.draw_per_pixel(a2[:, dim:].argmax(dim=1), self.negatives, self.generator)
            ctx12, ctx21 = build_contexts(a1[:, :dim], a2[:, :dim], a1[:, dim:], a2[:, dim:], self.contrastive,
                                          negatives12=draw12, negatives21=draw21)
            losses.append(directional_contrastive(ctx12, ctx21))
            pushed.append((ctx12.phi1, ctx12.pl1, ctx12.conf1))
            pushed.append((ctx21.phi1, ctx21.pl1, ctx21.conf1))

        if pushed:
            threshold = self.contrastive.threshold if self.bank_config.push_confident_only else None
            self.bank.push(
                torch.cat([vectors for vectors, _labels, _conf in pushed]),
                torch.cat([labels for _vectors, labels, _conf in pushed]),
                torch.cat([conf for _vectors, _labels, conf in pushed]),
                step=step,
                sample_cap=self.bank_config.sample_cap,
                generator=self.generator,
                threshold=threshold,
            )
        if not losses:
            return zero_loss(phi1), skipped
        return torch.stack(losses).mean(), skipped

    def train_step(self, batch_l, batch_u, step, epoch=0, warmup=False):
        """
        One optimizer step on the weighted loss. During warm-up only the
        supervised path runs.
        """
        model = self.model
        model.train()
        lr = self.scheduler.step(step) if self.scheduler else self.train_config.base_lr

        images, masks = batch_l
        pred_l = model(self._to_device(images))
        parts = LossParts(l_sup=supervised_ce(pred_l, masks.to(self.device), self.ignore_index))
        weights = LossWeights.supervised_only(self.weights.w_sup) if warmup else self.weights
        skipped = 0

        if not warmup and batch_u is not None:
            if weights.w_cross > 0 or weights.w_ent > 0:
                x_u = self._to_device(batch_u['image'])
                latent = model.encode(x_u)
                f_u = model.decode(latent, x_u.shape[-2:])
                main = model.classify(f_u)
                if weights.w_cross > 0:
                    aux = model.perturbed_predictions(f_u, self.perturb, self.generator, latent=latent)
                    parts.l_cross = cross_consistency(main, aux, detach_target=self.detach_consistency)
                if weights.w_ent > 0:
                    parts.l_ent = entropy_loss(main)
            if weights.w_cont > 0:
                parts.l_cont, skipped = self.contrastive_loss(batch_u, step)

        total, breakdown = total_loss(parts, weights)
        if not all(math.isfinite(value) for value in breakdown.values()):
            logger.error("Aborting at step %s: %s", step, breakdown)
            raise NonFiniteLossError(breakdown)

        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        self.optimizer.step()

        breakdown.update({'step': step, 'epoch': epoch, 'lr': lr, 'warmup': warmup, 'skipped_pairs': skipped})
        self.log_metrics(breakdown)
        return breakdown

    def log_metrics(self, record):
        if not self.metrics_path:
            return
        with open(self.metrics_path, 'a') as handle:
            handle.write(json.dumps(record) + "\n")

    def checkpoint(self, name, epoch, metrics=None):
        if not self.run_dir:
            return None
        bank = self.bank if self.bank_config.save_in_checkpoint else None
        return save_checkpoint(
            os.path.join(self.run_dir, CHECKPOINTS_DIR, name), self.model, self.optimizer,
            epoch=epoch, config=self.config, bank=bank, metrics=metrics)

    def fit(self, labeled_loader, unlabeled_loader=None, evaluate=None):
        """
        Train for ``train.epochs`` epochs. An epoch is a pass over the
        unlabeled loader (the labeled one when there is none); both loaders
        cycle independently. ``evaluate(model)`` returns a metrics dict with
        ``miou`` and drives the best checkpoint.
        """
        cfg = self.train_config
        if unlabeled_loader is None and self.weights.w_cont + self.weights.w_cross + self.weights.w_ent > 0:
            logger.warning("No unlabeled data, training with the supervised loss only")
        steps_per_epoch = cfg.steps_per_epoch or len(unlabeled_loader or labeled_loader)
        max_steps = cfg.epochs * steps_per_epoch
        self.scheduler = PolyLR(self.optimizer, max_steps, cfg.base_lr, cfg.lr_power)
        labeled = cycle(labeled_loader)
        unlabeled = cycle(unlabeled_loader) if unlabeled_loader is not None else None

        history, best, step = [], None, 0
        progress = tqdm(range(cfg.epochs), desc=f"seed {self.seed}", unit='epoch')
        for epoch in progress:
            warmup = epoch < cfg.warmup_epochs
            for _index in range(steps_per_epoch):
                batch_u = next(unlabeled) if unlabeled is not None else None
                record = self.train_step(next(labeled), batch_u, step, epoch=epoch, warmup=warmup)
                history.append(record)
                step += 1
            progress.set_postfix(total=f"{record['total']:.4f}", lr=f"{record['lr']:.2e}")

            last = epoch + 1 == cfg.epochs
            metrics = None
            if evaluate is not None and ((cfg.eval_every and (epoch + 1) % cfg.eval_every == 0) or last):
                metrics = evaluate(self.model)
                logger.info("Epoch %s: mIoU %.4f", epoch + 1, metrics['miou'])
                if best is None or metrics['miou'] > best:
                    best = metrics['miou']
                    self.checkpoint('best.pt', epoch + 1, metrics)
            if (cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0) or last:
                self.checkpoint('last.pt', epoch + 1, metrics)
        return history
