"""AdamW training with stepped learning-rate decay and resumable state.

Every source of randomness in an epoch — segment crops, noise crops, batch
order — is keyed by ``(seed, epoch)`` or ``(utterance id, epoch)``, never by
a generator carried across epochs.  Together with the optimizer state living
in the checkpoint, that makes training a pure function of (corpus, config,
seed, epoch range): rerunning reproduces checkpoints byte for byte, and a
resumed run continues exactly where the interrupted one would have gone.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Manifest, crop_seed, load_pair, segment_offsets
from .loss import LossConfig, loss_total


class TrainingDivergedError(RuntimeError):
    """Loss or a gradient went non-finite; the message names the culprit."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    lr0: float = 5e-4
    decay_factor: float = 0.95
    decay_every: int = 4
    weight_decay: float = 1e-2
    batch_size: int = 2
    seed: int = 0
    grad_clip: float | None = None
    segment_seconds: float = 4.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.segment_seconds <= 0:
            raise ValueError("segment_seconds must be positive")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Stepped decay: multiply by ``decay_factor`` every ``decay_every`` epochs."""
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


class AdamW:
    """Adam with decoupled weight decay, applied uniformly to all parameters."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, named_params, weight_decay=0.0):
        self.params = list(named_params)
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self, lr: float) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.BETA1 ** t
        bc2 = 1.0 - self.BETA2 ** t
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            g = g.astype(p.data.dtype, copy=False)
            m = self.m[name] = self.BETA1 * self.m[name] + (1 - self.BETA1) * g
            v = self.v[name] = self.BETA2 * self.v[name] + (1 - self.BETA2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.EPS)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = p.data - lr * update

    def state_dict(self) -> dict:
        state = {"step": np.asarray(self.step_count, dtype=np.int64)}
        for name, _ in self.params:
            state[f"m.{name}"] = self.m[name]
            state[f"v.{name}"] = self.v[name]
        return state

    def load_state(self, state: dict) -> None:
        self.step_count = int(state["step"])
        for name, p in self.params:
            for slot, store in (("m", self.m), ("v", self.v)):
                arr = np.asarray(state[f"{slot}.{name}"])
                if arr.shape != p.data.shape:
                    raise ValueError(f"optimizer state shape mismatch for {name}")
                store[name] = arr.astype(p.data.dtype, copy=True)


def clip_gradients(named_params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    grads = [(p, p.grad) for _, p in named_params if p.grad is not None]
    for _, g in grads:
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p, g in grads:
            p.grad = g * scale
    return norm


def _check_finite(loss_value: float, model) -> None:
    if not np.isfinite(loss_value):
        raise TrainingDivergedError(f"loss is not finite: {loss_value}")
    for name, p in model.named_parameters():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise TrainingDivergedError(f"non-finite gradient in {name}")


def train_step(model, batch, optimizer: AdamW, lr: float,
               loss_cfg: LossConfig, grad_clip: float | None = None) -> float:
    """One optimizer update over a batch of (mixture, clean, noise) triples."""
    model.zero_grad()
    total = None
    for mix, clean, noise in batch:
        speech_est, noise_est, _ = model.forward(mix)
        item = loss_total(clean, noise, speech_est, noise_est, loss_cfg)
        total = item if total is None else total + item
    loss = total * (1.0 / len(batch))
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDivergedError(f"loss is not finite: {value}")
    loss.backward()
    _check_finite(value, model)
    if grad_clip is not None:
        clip_gradients(model.named_parameters(), grad_clip)
    optimizer.step(lr)
    return value


# -- epoch data ---------------------------------------------------------------

def epoch_segments(manifest: Manifest, epoch: int, segment_seconds: float,
                   sample_rate: int = 16000):
    """Jointly sliced (mixture, clean, noise) crops for one epoch.

    The same offsets cut all three signals, so the triples stay aligned;
    offsets and noise crops are keyed by (utterance id, epoch).
    """
    seg_len = int(round(segment_seconds * sample_rate))
    triples = []
    for rec in manifest.records:
        mixture, clean, noise = load_pair(manifest, rec, epoch)
        n = len(mixture.samples)
        if n < seg_len:
            def pad(x):
                out = np.zeros(seg_len, dtype=x.dtype)
                out[:n] = x
                return out
            triples.append((pad(mixture.samples), pad(clean.samples),
                            pad(noise.samples)))
            continue
        for off in segment_offsets(n, seg_len, crop_seed(rec.id + "#slice", epoch)):
            sl = slice(off, off + seg_len)
            triples.append((mixture.samples[sl], clean.samples[sl],
                            noise.samples[sl]))
    return triples


def validation_loss(model, manifest: Manifest, loss_cfg: LossConfig,
                    segment_seconds: float) -> float:
    """Mean loss over the validation corpus, sliced the same way every call."""
    segments = epoch_segments(manifest, 0, segment_seconds)
    total = 0.0
    with ad.no_grad():
        for mix, clean, noise in segments:
            speech_est, noise_est, _ = model.forward(mix)
            total += float(loss_total(clean, noise, speech_est, noise_est,
                                      loss_cfg).data)
    return total / len(segments)


# -- checkpoint plumbing ------------------------------------------------------

def save_training_state(path, model, optimizer: AdamW, epoch: int,
                        val_loss: float, best_val: float,
                        extra_meta: dict | None = None) -> None:
    arrays = {f"model.{k}": v for k, v in model.state_dict().items()}
    arrays.update({f"opt.{k}": v for k, v in optimizer.state_dict().items()})
    meta = {"epoch": epoch, "val_loss": val_loss, "best_val": best_val}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, arrays, meta)


def load_training_state(path, model, optimizer: AdamW | None = None) -> dict:
    """Restore model (and optionally optimizer) state; returns the meta dict."""
    arrays, meta = load_checkpoint(path)
    model.load_state({k[len("model."):]: v for k, v in arrays.items()
                      if k.startswith("model.")})
    if optimizer is not None:
        opt_state = {k[len("opt."):]: v for k, v in arrays.items()
                     if k.startswith("opt.")}
        if not opt_state:
            raise ValueError(f"{path}: checkpoint has no optimizer state")
        optimizer.load_state(opt_state)
    return meta


# -- the loop -------------------------------------------------------------------

def train(model, train_manifest: Manifest, val_manifest: Manifest,
          cfg: TrainConfig, loss_cfg: LossConfig, out_dir,
          resume=None, extra_meta: dict | None = None,
          progress=None) -> dict:
    """Run the full loop; returns a history dict of per-epoch val losses.

    Writes ``epoch_NNN.ckpt`` after every epoch, tracks the best validation
    loss in ``best.ckpt``, and appends JSONL rows (step loss, learning rate,
    wall time) to ``train_log.jsonl``.  ``resume`` continues numbering from
    a previous epoch checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    optimizer = AdamW(model.named_parameters(), cfg.weight_decay)

    start_epoch = 0
    best_val = float("inf")
    if resume is not None:
        meta = load_training_state(resume, model, optimizer)
        start_epoch = int(meta["epoch"]) + 1
        best_val = float(meta.get("best_val", float("inf")))

    history = {"val_loss": [], "epochs": []}
    global_step = optimizer.step_count
    t0 = time.perf_counter()
    with open(log_path, "a") as log:
        def emit(row):
            log.write(json.dumps(row, sort_keys=True) + "\n")
            log.flush()

        for epoch in range(start_epoch, cfg.epochs):
            lr = lr_at(epoch, cfg)
            segments = epoch_segments(train_manifest, epoch, cfg.segment_seconds)
            order = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, epoch])).permutation(len(segments))
            shuffled = [segments[i] for i in order]
            for i in range(0, len(shuffled), cfg.batch_size):
                batch = shuffled[i:i + cfg.batch_size]
                loss = train_step(model, batch, optimizer, lr, loss_cfg,
                                  cfg.grad_clip)
                global_step += 1
                emit({"epoch": epoch, "step": global_step, "lr": lr,
                      "loss": loss, "wall": time.perf_counter() - t0})
            vloss = validation_loss(model, val_manifest, loss_cfg,
                                    cfg.segment_seconds)
            emit({"epoch": epoch, "val_loss": vloss,
                  "wall": time.perf_counter() - t0})
            best_val = min(best_val, vloss)
            save_training_state(out_dir / f"epoch_{epoch:03d}.ckpt", model,
                                optimizer, epoch, vloss, best_val, extra_meta)
            if vloss == best_val:
                save_training_state(out_dir / "best.ckpt", model, optimizer,
                                    epoch, vloss, best_val, extra_meta)
            history["val_loss"].append(vloss)
            history["epochs"].append(epoch)
            if progress is not None:
                progress(epoch, vloss)
    return history
