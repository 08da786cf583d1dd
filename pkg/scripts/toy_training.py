"""Desk-scale training run on a synthetic corpus.

Writes 200 speech-like clips and white/babble noise, holds out 20 clips (and
two noise files) for validation, trains a tiny S-DCCRN and prints the final
validation SI-SNR improvement and the spread of the learned compression
exponents.

    python3 scripts/toy_training.py --out runs/toy
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

import torch

from sdccrn.checkpoint import load_state_into
from sdccrn.data import write_manifest, write_synthetic_corpus
from sdccrn.dccrn import DccrnSpec
from sdccrn.model import ModelSpec, build_model, parameter_count
from sdccrn.train import RunConfig, read_log, train


def toy_model_spec() -> ModelSpec:
    """Under 0.2 M parameters and cheap enough to train on one CPU core.

    The codec keeps four complex channels: with two, its per-frame LayerNorms
    leave too little room to carry frame level and reconstruction stalls.
    Training runs one clip per step, so batch-norm statistics of a single
    mixture would dominate a fast running average; a slow one tracks the
    population instead.
    """
    narrow = (8, 16, 16, 32, 32, 32)
    return ModelSpec(
        codec_channels=8,
        dense_kernel=(1, 2),
        sub=DccrnSpec(enc_channels=narrow, groups=2, lstm_hidden=64, bn_momentum=0.01),
        full=DccrnSpec(enc_channels=narrow, lstm_hidden=64, bn_momentum=0.01),
    )


def prepare_corpus(root: Path, seed: int = 0) -> tuple[Path, Path]:
    entries = write_synthetic_corpus(root, n_speech=200, n_noise=8, duration=2.0, noise_duration=6.0, seed=seed)
    speech = [e for e in entries if e.kind == "speech"]
    noise = [e for e in entries if e.kind == "noise"]
    # validation: last 20 utterances and one white + one babble noise never seen in training
    train_m, val_m = root / "train.jsonl", root / "val.jsonl"
    write_manifest(speech[:180] + noise[:6], train_m)
    write_manifest(speech[180:] + noise[6:], val_m)
    return train_m, val_m


def toy_run_config(root: Path, out: Path, epochs: int = 30, seed: int = 0, batch_size: int = 1,
                   lr: float = 2e-3, crop: float = 0.5) -> RunConfig:
    # many short single-clip steps: with the epoch count capped, progress is bound by step count
    train_m, val_m = prepare_corpus(root, seed)
    return RunConfig(
        model=toy_model_spec(),
        train_manifest=str(train_m),
        val_manifest=str(val_m),
        chunk_len=2.0,
        train_crop=crop,
        remix_each_epoch=False,
        batch_size=batch_size,
        epochs=epochs,
        schedule="plateau-halving",
        # validation wobbles by a dB or two between epochs; only a sustained stall should halve the rate
        plateau_patience=3,
        main_lr=lr,
        seed=seed,
        checkpoint_dir=str(out),
    )


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--batch-size", type=int, default=1)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--crop", type=float, default=0.5, help="training crop length in seconds")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(max(1, torch.get_num_threads()))

    out = Path(args.out)
    cfg = toy_run_config(out / "corpus", out, args.epochs, args.seed, args.batch_size, args.lr, args.crop)
    t0 = time.perf_counter()
    train(cfg)
    elapsed = time.perf_counter() - t0

    model = build_model(cfg.model, cfg.analysis)
    load_state_into(out / "best", model)
    alpha = model.lsc.alpha.detach()
    val = read_log(out / "val_log.csv")
    best = max(val, key=lambda r: -float(r["val_total"]))
    report = {
        "parameters": parameter_count(model),
        "minutes": elapsed / 60,
        "epochs": len(val),
        "best_epoch": int(best["epoch"]),
        "val_si_snri_db": float(best["val_si_snri_db"]),
        "alpha_min": float(alpha.min()),
        "alpha_max": float(alpha.max()),
        "alpha_max_shift": float((alpha - 0.5).abs().max()),
    }
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
