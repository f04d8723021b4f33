"""Deterministic SGD training loop over synthetic volumes.

One run: build a fixed synthetic train/validation split from the seed,
iterate batches with optional deformation augmentation, optimize the
weighted three-head loss, log per-iteration values to CSV and write a
checkpoint in the manifest container format.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from ..losses import LOSS_FUNCTIONS
from ..metrics import dice_coefficient
from ..net.checkpoint import save_checkpoint
from ..net.model import NetConfig, SegNet, fuse_outputs
from .optim import OptimizerState, sgd_step
from .augment import deform_augment
from .synth import SynthSpec, gen_synthetic_case

LOG_HEADER = ["iter", "loss_main", "loss_stage2", "loss_stage3",
              "loss_total", "lr"]


class TrainingAborted(RuntimeError):
    def __init__(self, iteration, message):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    net: NetConfig = field(default_factory=NetConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    loss: str = "dsc"
    iterations: int = 2000
    batch_size: int = 2
    seed: int = 0
    n_train: int = 12
    n_val: int = 4
    augment: bool = True
    val_interval: int = 200
    lr: float = 1e-3
    momentum: float = 0.99
    weight_decay: float = 5e-3
    lr_decay_period: int = 2000
    lr_decay_factor: float = 0.2

    def __post_init__(self):
        if self.loss not in LOSS_FUNCTIONS:
            raise ValueError(f"unknown loss {self.loss!r}; "
                             f"choose from {sorted(LOSS_FUNCTIONS)}")


@dataclass
class TrainResult:
    log_rows: list
    val_history: list  # (iteration, dice)
    final_val_dice: float
    checkpoint: dict
    config: TrainConfig


def build_dataset(cfg):
    train = [gen_synthetic_case(cfg.synth, cfg.seed * 10000 + i)
             for i in range(cfg.n_train)]
    val = [gen_synthetic_case(cfg.synth, cfg.seed * 10000 + 5000 + i)
           for i in range(cfg.n_val)]
    return train, val


def validation_dice(net, val_cases, fusion_mask, threshold=0.5):
    net.set_training(False)
    scores = []
    for img, mask in val_cases:
        x = img.data[None, None].astype(np.float32)
        heads = net.forward(x)
        fused = fuse_outputs([heads["main"].data[0, 0],
                              heads["stage2"].data[0, 0],
                              heads["stage3"].data[0, 0]], fusion_mask)
        pred = (fused >= threshold).astype(np.float32)
        scores.append(dice_coefficient(pred, mask.data))
    net.set_training(True)
    return float(np.mean(scores))


def train_run(cfg: TrainConfig, out_dir=None):
    """Run one training; deterministic for a fixed config and seed."""
    rng = np.random.default_rng(cfg.seed)
    train_cases, val_cases = build_dataset(cfg)
    net = SegNet(cfg.net, seed=cfg.seed)
    net.set_training(True)
    loss_fn = LOSS_FUNCTIONS[cfg.loss]
    w = cfg.net.supervision
    state = OptimizerState(lr=cfg.lr, momentum=cfg.momentum,
                           weight_decay=cfg.weight_decay,
                           decay_period=cfg.lr_decay_period,
                           decay_factor=cfg.lr_decay_factor)
    params = net.parameters()
    log_rows = []
    val_history = []
    for it in range(cfg.iterations):
        idx = rng.integers(0, len(train_cases), cfg.batch_size)
        batch = []
        for j in idx:
            img, mask = train_cases[j]
            if cfg.augment:
                img, mask = deform_augment(
                    img, mask, cfg.synth,
                    seed=int(cfg.seed * 1_000_003 + it * 17 + int(j)))
            batch.append((img, mask))
        x = np.stack([b[0].data for b in batch])[:, None].astype(np.float32)
        heads = net.forward(x)
        head_losses = {}
        seed_grads = {}
        for key in ("main", "stage2", "stage3"):
            pred = heads[key].data[:, 0]
            evals = [loss_fn(pred[b], batch[b][1].data)
                     for b in range(cfg.batch_size)]
            value = float(np.mean([e.value for e in evals]))
            grad = np.stack([e.grad for e in evals])[:, None] / cfg.batch_size
            head_losses[key] = value
            weight = {"main": w.alpha, "stage2": w.beta,
                      "stage3": w.gamma}[key]
            seed_grads[key] = (weight * grad).astype(np.float32)
        total = (w.alpha * head_losses["main"]
                 + w.beta * head_losses["stage2"]
                 + w.gamma * head_losses["stage3"])
        if not np.isfinite(total):
            raise TrainingAborted(it, f"non-finite loss {total}")
        net.zero_grad()
        net.backward_heads(heads, seed_grads)
        sgd_step(params, state)
        log_rows.append([it, head_losses["main"], head_losses["stage2"],
                         head_losses["stage3"], total, state.lr])
        if cfg.val_interval and (it + 1) % cfg.val_interval == 0:
            val_history.append(
                (it + 1, validation_dice(net, val_cases,
                                         cfg.net.fusion_mask)))
    final = (val_history[-1][1] if val_history and
             val_history[-1][0] == cfg.iterations
             else validation_dice(net, val_cases, cfg.net.fusion_mask))
    if not val_history or val_history[-1][0] != cfg.iterations:
        val_history.append((cfg.iterations, final))
    result = TrainResult(log_rows=log_rows, val_history=val_history,
                         final_val_dice=final, checkpoint=net.state(),
                         config=cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_log_csv(os.path.join(out_dir, "train_log.csv"), log_rows)
        save_checkpoint(result.checkpoint,
                        os.path.join(out_dir, "checkpoint.vsc"))
    return result


def write_log_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_HEADER)
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.8g}" for v in row[1:]])
