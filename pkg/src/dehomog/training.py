"""Two-step training of the generator on the synthetic dataset.

Phase 1 (dot + spectral + TV) starts from Kaiming-initialized weights;
phase 2 (dot + TV + branching) continues from the phase-1 weights.  Data
loading is deterministic given the seed: patches are bucketed by shape
(batches must be homogeneous) and shuffled with a per-epoch derived seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import losses
from .encoding import EncoderConfig, encode_angle, pad_angles
from .fields import read_field
from .network import Generator, crop_padding, make_generator, save_checkpoint
from .synth import read_manifest


@dataclass(frozen=True)
class TrainConfig:
    epochs_phase1: int = 10
    epochs_phase2: int = 5
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.99
    batch_size: int = 16
    epsilon_i: float = 10.0
    band_width: float = 4.0
    num_channels: int = 24
    pad_width: int = 2
    # weights: (lambda_omega, lambda_tau, lambda_b) per phase
    phase1_weights: tuple[float, float, float] = (1.0, 1.0, 0.0)
    phase2_weights: tuple[float, float, float] = (0.0, 1.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        if self.epochs_phase1 < 1 or self.epochs_phase2 < 0:
            raise ValueError("epoch counts must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    def loss_weights(self, phase: int) -> losses.LossWeights:
        lo, lt, lb = self.phase1_weights if phase == 1 else self.phase2_weights
        return losses.LossWeights(lambda_omega=lo, lambda_tau=lt, lambda_b=lb,
                                  epsilon_i=self.epsilon_i, band_width=self.band_width)


def _load_patches(manifest_path, cfg: TrainConfig):
    """Encode every patch once up front; returns (encoded, theta) pairs."""
    enc_cfg = EncoderConfig(num_channels=cfg.num_channels, pad_width=cfg.pad_width)
    data = []
    for entry in read_manifest(manifest_path):
        orient = read_field(entry["path"])
        theta = orient.theta.astype(np.float32)
        padded = pad_angles(theta, cfg.pad_width)
        enc = encode_angle(padded, enc_cfg).astype(np.float32)
        data.append((enc.transpose(2, 0, 1), theta))
    if not data:
        raise ValueError(f"empty manifest: {manifest_path}")
    return data


def _batches(data, batch_size, rng):
    """Shape-homogeneous shuffled batches of (encoded, theta) tensors."""
    buckets: dict[tuple[int, int], list[int]] = {}
    for k, (_, theta) in enumerate(data):
        buckets.setdefault(theta.shape, []).append(k)
    order = []
    for shape in sorted(buckets):
        idx = np.array(buckets[shape])
        rng.shuffle(idx)
        for s in range(0, len(idx), batch_size):
            order.append(idx[s:s + batch_size])
    perm = rng.permutation(len(order))
    for b in perm:
        idx = order[b]
        enc = torch.from_numpy(np.stack([data[i][0] for i in idx]))
        theta = torch.from_numpy(np.stack([data[i][1] for i in idx]))
        yield enc, theta


def _run_phase(net, phase, epochs, data, cfg: TrainConfig, log_rows, step0):
    weights = cfg.loss_weights(phase)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate,
                           betas=(cfg.beta1, cfg.beta2))
    step = step0
    for epoch in range(epochs):
        rng = np.random.default_rng((cfg.seed, phase, epoch))
        for enc, theta in _batches(data, cfg.batch_size, rng):
            rho = net(enc)
            rho = crop_padding(rho, cfg.pad_width)
            total, bd = losses.combined_loss(phase, rho[:, 0], theta, weights)
            if not torch.isfinite(total):
                raise FloatingPointError(
                    f"loss diverged at phase {phase} step {step}: {bd}")
            opt.zero_grad()
            total.backward()
            opt.step()
            step += 1
            row = {"step": step, "phase": phase, "epoch": epoch,
                   "lr": cfg.learning_rate, "total": float(total.detach()), **bd}
            log_rows.append(row)
    return step


def train(cfg: TrainConfig, manifest_path, out_path, log_path=None) -> Generator:
    """Run both training phases; checkpoints after each phase.

    Writes <out_path> after phase 2 and <out_path>.phase1 after phase 1,
    plus a CSV metrics log (streamed, one line per step) when log_path is
    given.
    """
    torch.manual_seed(cfg.seed)
    data = _load_patches(manifest_path, cfg)
    net = make_generator(cfg.num_channels, seed=cfg.seed)
    net.train()
    log_rows = _StreamingLog(log_path)
    try:
        step = _run_phase(net, 1, cfg.epochs_phase1, data, cfg, log_rows, 0)
        save_checkpoint(net, str(out_path) + ".phase1", meta=_ckpt_meta(cfg, phase=1))
        _run_phase(net, 2, cfg.epochs_phase2, data, cfg, log_rows, step)
        save_checkpoint(net, out_path, meta=_ckpt_meta(cfg, phase=2))
    finally:
        log_rows.close()
    net.eval()
    return net


class _StreamingLog(list):
    """Collects metric rows and mirrors them to a CSV file as they arrive."""

    def __init__(self, path=None):
        super().__init__()
        self._fh = open(path, "w", newline="") if path else None
        self._writer = None

    def append(self, row):
        super().append(row)
        if self._fh is not None:
            if self._writer is None:
                self._writer = csv.DictWriter(self._fh, fieldnames=list(row))
                self._writer.writeheader()
            self._writer.writerow(row)
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _ckpt_meta(cfg: TrainConfig, phase: int) -> dict:
    return {"epsilon_i": cfg.epsilon_i, "phase": phase, "seed": cfg.seed,
            "pad_width": cfg.pad_width}


def evaluate(net: Generator, manifest_path, cfg: TrainConfig) -> dict:
    """Held-out metrics in inference mode: mean |dot|, mean E_w, mean TV ratio."""
    data = _load_patches(manifest_path, cfg)
    weights = losses.LossWeights(epsilon_i=cfg.epsilon_i, band_width=cfg.band_width)
    net.eval()
    dots, ews, tvs = [], [], []
    with torch.no_grad():
        for enc_np, theta_np in data:
            enc = torch.from_numpy(enc_np[None])
            theta = torch.from_numpy(theta_np[None])
            rho = crop_padding(net(enc), cfg.pad_width)[:, 0]
            ex, ey, valid = losses.image_gradient_orientations(rho)
            ld, _ = losses.dot_loss(ex, ey, losses.upsample_angles(theta, 8), valid)
            dots.append(float(ld))
            ews.append(float(losses.spectral_energy(rho, weights)))
            tvs.append(float(losses.total_variation(rho)) / weights.tau)
    return {"mean_dot": float(np.mean(dots)), "mean_spectral": float(np.mean(ews)),
            "mean_tv_ratio": float(np.mean(tvs)), "count": len(dots)}
