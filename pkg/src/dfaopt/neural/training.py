"""Teacher-forced training with Adam, early stopping and seeded determinism."""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch

from .data import Batch, Example, collate
from .masking import masked_cross_entropy
from .model import Seq2Seq

log = logging.getLogger(__name__)

OPTIMIZER_NAME = "adam(beta1=0.9,beta2=0.999,eps=1e-8)"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 200
    max_seconds: float = 900.0
    patience: int = 10
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    epochs: int = 0
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stop_reason: str = ""
    seconds: float = 0.0
    history: list = field(default_factory=list)


def make_optimizer(model: Seq2Seq) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=model.cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)


def batch_loss(model: Seq2Seq, batch: Batch) -> torch.Tensor:
    logits = model(batch.cat, batch.cont, batch.pad, batch.tokens)
    return masked_cross_entropy(logits, batch.targets, batch.masks, model.cfg.mask_in_training)


def train_step(model: Seq2Seq, batch: Batch, optimizer: torch.optim.Optimizer) -> float:
    model.train()
    optimizer.zero_grad()
    loss = batch_loss(model, batch)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value} on a batch of {len(batch)}")
    loss.backward()
    optimizer.step()
    return value


@torch.no_grad()
def evaluate_loss(model: Seq2Seq, examples: Sequence[Example], batch_size: int = 256) -> float:
    model.eval()
    total = 0.0
    for i in range(0, len(examples), batch_size):
        chunk = examples[i : i + batch_size]
        batch = collate(chunk, model.schema, model.vocab)
        total += float(batch_loss(model, batch)) * len(chunk)
    return total / max(len(examples), 1)


def fit(model: Seq2Seq, train: Sequence[Example], val: Sequence[Example], cfg: TrainConfig) -> TrainResult:
    """Train until the epoch cap, the wall-clock cap, or ``patience`` epochs without a better validation loss.

    The parameters with the best validation loss are restored at the end.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(model)
    res = TrainResult()
    best_state = copy.deepcopy(model.state_dict())
    start = time.monotonic()
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            batch = collate([train[k] for k in order[i : i + cfg.batch_size]], model.schema, model.vocab)
            losses.append(train_step(model, batch, opt))
        val_loss = evaluate_loss(model, val) if val else float(np.mean(losses))
        res.history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss})
        res.epochs = epoch
        log.info("epoch %d train %.4f val %.4f", epoch, np.mean(losses), val_loss)
        if val_loss < res.best_val_loss:
            res.best_val_loss, res.best_epoch, stale = val_loss, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
        if stale >= cfg.patience:
            res.stop_reason = "patience"
            break
        if time.monotonic() - start > cfg.max_seconds:
            res.stop_reason = "time"
            break
    else:
        res.stop_reason = "epochs"
    model.load_state_dict(best_state)
    res.seconds = time.monotonic() - start
    return res
