"""Mini-batch training for :class:`ScpnModel` (paraphraser and parse generator)."""
from __future__ import annotations

import json
import logging
import math
import random
from typing import Callable, Optional, Sequence

import torch

from .errors import ScpnError
from .model import Instance, ScpnConfig, ScpnModel, collate

log = logging.getLogger(__name__)


class DivergedLoss(ScpnError):
    pass


def make_batches(instances: Sequence[Instance], batch_size: int, rng: random.Random) -> list[list[int]]:
    """Shuffled batches of indices; examples of similar target length share a
    batch (sorted within pools of 50 batches) to limit padding."""
    idx = list(range(len(instances)))
    rng.shuffle(idx)
    pool = batch_size * 50
    batches = []
    for start in range(0, len(idx), pool):
        chunk = sorted(idx[start : start + pool], key=lambda i: (len(instances[i].tgt_ids), len(instances[i].parse_ids)))
        batches += [chunk[k : k + batch_size] for k in range(0, len(chunk), batch_size)]
    rng.shuffle(batches)
    return batches


def make_optimizer(model: ScpnModel, config: ScpnConfig):
    if config.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=config.lr)
    if config.optimizer == "sgd":
        return torch.optim.SGD(model.parameters(), lr=config.lr)
    raise ValueError(f"unknown optimizer {config.optimizer!r}")


def train_model(
    model: ScpnModel,
    instances: Sequence[Instance],
    config: Optional[ScpnConfig] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> list[dict]:
    """Train in place; returns one record per epoch: {epoch, step, loss}.

    The epoch loss is the mean of the batch losses seen during that epoch.
    Training stops after ``config.epochs`` epochs or ``config.max_steps``
    updates, whichever comes first.
    """
    config = config or model.config
    if not instances:
        raise ScpnError("empty training set")
    rng = random.Random(config.seed)
    opt = make_optimizer(model, config)
    history = []
    step = 0
    model.train()
    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch_idx in make_batches(instances, config.batch_size, rng):
            batch = collate([instances[i] for i in batch_idx])
            loss = model.batch_loss(batch)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergedLoss(f"loss became {value} at step {step}")
            opt.zero_grad()
            loss.backward()
            if config.clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip)
            opt.step()
            losses.append(value)
            step += 1
            if config.max_steps and step >= config.max_steps:
                break
        record = {"epoch": epoch, "step": step, "loss": sum(losses) / len(losses)}
        history.append(record)
        log.info(json.dumps({"event": "epoch", "kind": config.kind, **record}))
        if on_epoch:
            on_epoch(record)
        if config.max_steps and step >= config.max_steps:
            break
    model.eval()
    return history


@torch.no_grad()
def mean_loss(model: ScpnModel, instances: Sequence[Instance], batch_size: int = 64) -> float:
    total = 0.0
    for k in range(0, len(instances), batch_size):
        chunk = instances[k : k + batch_size]
        total += model.batch_loss(collate(chunk)).item() * len(chunk)
    return total / len(instances)
