#!/usr/bin/env python3
"""Regenerate the desk-scale datasets and train the wave-length-10 generator.

Writes artifacts/data/{train,heldout} and artifacts/checkpoints/gen_eps10.ckpt.
Takes several hours on a single CPU core.  Pass --epsilon 20 for the
large-wave-length network.
"""

import argparse
import time
from pathlib import Path

import torch

from dehomog.synth import DatasetConfig, generate_dataset
from dehomog.training import TrainConfig, evaluate, train

ROOT = Path(__file__).resolve().parents[1] / "artifacts"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epsilon", type=float, default=10.0)
    ap.add_argument("--num-patches", type=int, default=2000)
    ap.add_argument("--heldout-patches", type=int, default=200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    torch.set_num_threads(args.threads)
    train_dir = ROOT / "data" / "train"
    held_dir = ROOT / "data" / "heldout"
    t0 = time.perf_counter()
    man_train = train_dir / "manifest.txt"
    if not man_train.exists():
        man_train = generate_dataset(
            DatasetConfig(num_patches=args.num_patches, rng_seed=args.seed), train_dir)
    man_held = held_dir / "manifest.txt"
    if not man_held.exists():
        man_held = generate_dataset(
            DatasetConfig(num_patches=args.heldout_patches, rng_seed=args.seed + 1), held_dir)
    print(f"datasets ready ({time.perf_counter() - t0:.1f} s)", flush=True)

    cfg = TrainConfig(epsilon_i=args.epsilon, seed=args.seed)
    ckpt = ROOT / "checkpoints" / f"gen_eps{int(args.epsilon)}.ckpt"
    log = ROOT / "checkpoints" / f"train_eps{int(args.epsilon)}.csv"
    t0 = time.perf_counter()
    net = train(cfg, man_train, ckpt, log)
    print(f"training done in {time.perf_counter() - t0:.1f} s -> {ckpt}", flush=True)

    metrics = evaluate(net, man_held, cfg)
    print("held-out:", metrics, flush=True)


if __name__ == "__main__":
    main()
