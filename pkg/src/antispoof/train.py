"""Training loop: deterministic batches, multi-stage losses, loss log,
periodic checkpoints, and best-by-dev-EER tracking.
"""

from __future__ import annotations

import os

import numpy as np

from . import nn
from .checkpoint import save_checkpoint
from .config import Config, config_to_yaml
from .data import TrainLoader, read_manifest
from .errors import TrainingAbort
from .evaluate import evaluate_records
from .losses import combine_losses, oc_softmax
from .model import HmConformer
from .optim import Adam
from .rng import RngHub
from .tensor import Tensor


def format_log_line(step: int, losses: list[float], total: float) -> str:
    cols = "\t".join(f"{v:.6f}" for v in losses)
    return f"{step}\t{cols}\t{total:.6f}"


class Trainer:
    def __init__(self, cfg: Config, run_dir: str | None = None):
        self.cfg = cfg
        self.run_dir = run_dir if run_dir is not None else cfg.io.run_dir
        self.hub = RngHub(cfg.train.seed)
        self.model = HmConformer(cfg, self.hub.stream("init"))
        nn.set_dropout_rng(self.hub.stream("dropout"))
        self.opt = Adam(self.model.parameters(), lr=cfg.train.lr)
        self.weights = list(cfg.mca.weights) if cfg.mca.enabled else [1.0] * cfg.n_slots
        self.loader: TrainLoader | None = None
        self.dev_records = None
        if cfg.data.train_manifest:
            records = read_manifest(cfg.data.train_manifest)
            self.loader = TrainLoader(records, cfg.train.batch_size, self.hub, cfg.data.augment)
        if cfg.data.dev_manifest:
            self.dev_records = read_manifest(cfg.data.dev_manifest)

    # ---- single optimization step ---------------------------------------------

    def step_on_batch(self, step: int, feats: np.ndarray, labels: np.ndarray) -> tuple[list[float], float]:
        """One forward/backward/update; returns (per-slot losses, total)."""
        self.model.train()
        scores, _ = self.model(Tensor(feats))
        losses = [
            oc_softmax(s, labels, self.model.slot_scale(i), self.cfg.oc) if s is not None else None
            for i, s in enumerate(scores)
        ]
        total = combine_losses(losses, self.weights)
        self.opt.zero_grad()
        total.backward()
        total_value = float(total.data)
        if not np.isfinite(total_value):
            for name, p in self.model.named_parameters():
                if p.grad is not None and not np.all(np.isfinite(p.grad)):
                    raise TrainingAbort(f"non-finite loss at step {step}; first bad gradient in {name}")
            raise TrainingAbort(f"non-finite loss at step {step}")
        self.opt.step()
        per_slot = [float(l.data) if l is not None else 0.0 for l in losses]
        return per_slot, total_value

    # ---- full run ----------------------------------------------------------------

    def run(self) -> dict:
        cfg = self.cfg
        os.makedirs(self.run_dir, exist_ok=True)
        with open(os.path.join(self.run_dir, "config.yaml"), "w") as f:
            f.write(config_to_yaml(cfg))
        log_path = os.path.join(self.run_dir, "loss.log")
        history = {"log_lines": [], "dev_eer": [], "best_dev_eer": None}
        best = np.inf
        with open(log_path, "w") as log:
            for step in range(1, cfg.train.steps + 1):
                feats, labels = self.loader.next_batch(step)
                per_slot, total = self.step_on_batch(step, feats, labels)
                line = format_log_line(step, per_slot, total)
                log.write(line + "\n")
                history["log_lines"].append(line)
                if cfg.train.checkpoint_every and step % cfg.train.checkpoint_every == 0:
                    self.save(os.path.join(self.run_dir, f"step_{step:06d}.ckpt"))
                if self.dev_records is not None and cfg.train.eval_every and step % cfg.train.eval_every == 0:
                    rate, _, _ = evaluate_records(
                        self.model, self.dev_records, cfg.train.batch_size, cfg.data.cache_dir
                    )
                    history["dev_eer"].append((step, rate))
                    if rate < best:
                        best = rate
                        history["best_dev_eer"] = rate
                        self.save(os.path.join(self.run_dir, "best.ckpt"))
        self.save(os.path.join(self.run_dir, "final.ckpt"))
        return history

    def save(self, path):
        save_checkpoint(path, config_to_yaml(self.cfg), self.model.state_dict())
