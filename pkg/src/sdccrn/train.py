"""Training loop, learning-rate schedules and run configuration."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_optimizer_into, load_state_into, read_json, restore_rng, save_checkpoint
from .data import DataConfig, batch_iterator, read_manifest
from .frontend import AnalysisConfig
from .model import ModelSpec, SDCCRN, build_model
from .objectives import si_snr, total_loss

log = logging.getLogger(__name__)

SCHEDULES = ("warmup-fixed", "plateau-halving")
STEP_FIELDS = ["step", "si_snr_db", "cmse", "kl", "total", "lr"]
VAL_FIELDS = ["epoch", "step", "lr", "val_total", "val_si_snr_db", "val_si_snr_noisy_db", "val_si_snri_db", "seconds"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    train_manifest: str = ""
    val_manifest: str = ""
    chunk_len: float = 8.0
    snr_range: tuple[float, float] = (-5.0, 20.0)
    # random crop (seconds) applied to each training chunk; None trains on whole chunks
    train_crop: float | None = None
    # draw new noise/SNR pairings every epoch instead of revisiting a fixed set
    remix_each_epoch: bool = True
    batch_size: int = 4
    epochs: int = 100
    schedule: str = "warmup-fixed"
    warmup_lr: float = 2.5e-5
    main_lr: float = 1e-3
    warmup_epochs: int = 10
    # epochs without validation improvement before plateau-halving halves the rate
    plateau_patience: int = 1
    grad_clip: float = 5.0
    seed: int = 0
    checkpoint_dir: str = "runs/default"
    resume: bool = False
    max_steps: int | None = None

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelSpec.from_dict(self.model)
        if isinstance(self.analysis, dict):
            self.analysis = AnalysisConfig(**self.analysis)
        self.snr_range = tuple(self.snr_range)
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        for name in ("batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("chunk_len", "warmup_lr", "main_lr", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be at least 1")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")
        if self.train_crop is not None and not 0 < self.train_crop <= self.chunk_len:
            raise ValueError("train_crop must lie in (0, chunk_len]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["analysis"] = self.analysis.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown RunConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def data_config(self) -> DataConfig:
        return DataConfig(
            chunk_len=self.chunk_len,
            snr_range=self.snr_range,
            batch_size=self.batch_size,
            sample_rate=self.analysis.sample_rate,
        )


def epoch_lr(cfg: RunConfig, epoch: int, plateau_lr: float) -> float:
    """Learning rate for 1-based ``epoch``."""
    if cfg.schedule == "warmup-fixed":
        return cfg.warmup_lr if epoch <= cfg.warmup_epochs else cfg.main_lr
    return plateau_lr


def plateau_update(lr: float, best: float, val_loss: float, stale: int = 0,
                   patience: int = 1) -> tuple[float, float, int]:
    """Halve ``lr`` once ``val_loss`` has failed to improve on ``best`` for
    ``patience`` epochs in a row; returns (lr, best, stale epochs)."""
    if val_loss < best:
        return lr, val_loss, 0
    stale += 1
    if stale >= patience:
        return lr / 2, best, 0
    return lr, best, stale


def _epoch_seed(seed: int, epoch: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, stream]).generate_state(1)[0])


def _crop(noisy: np.ndarray, clean: np.ndarray, length: int, rng: np.random.Generator):
    if length >= noisy.shape[-1]:
        return noisy, clean
    starts = rng.integers(0, noisy.shape[-1] - length + 1, size=noisy.shape[0])
    idx = starts[:, None] + np.arange(length)[None, :]
    return np.take_along_axis(noisy, idx, -1), np.take_along_axis(clean, idx, -1)


@torch.no_grad()
def validate(model: SDCCRN, batches, cfg: AnalysisConfig) -> dict:
    model.eval()
    totals, enh, base = [], [], []
    for noisy, clean in batches:
        est = model(noisy)
        loss, _ = total_loss(est, clean, cfg)
        totals.append(float(loss) * len(noisy))
        enh.append(si_snr(est, clean))
        base.append(si_snr(noisy, clean))
    n = sum(len(b[0]) for b in batches)
    enh, base = torch.cat(enh), torch.cat(base)
    return {
        "val_total": sum(totals) / n,
        "val_si_snr_db": float(enh.mean()),
        "val_si_snr_noisy_db": float(base.mean()),
        "val_si_snri_db": float((enh - base).mean()),
    }


class _CsvLog:
    def __init__(self, path: Path, fields: list[str], keep: callable | None = None):
        self.path, self.fields = path, fields
        rows = []
        if keep is not None and path.exists():
            with open(path) as fh:
                rows = [r for r in csv.DictReader(fh) if keep(r)]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fields)
            w.writeheader()
            w.writerows(rows)

    def append(self, row: dict) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.DictWriter(fh, self.fields).writerow(row)


def read_log(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def train(cfg: RunConfig) -> dict:
    """Run (or resume) training; returns a summary of the final state."""
    out = Path(cfg.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(json.dumps(cfg.to_dict(), indent=2))

    train_entries = read_manifest(cfg.train_manifest)
    val_entries = read_manifest(cfg.val_manifest)
    dcfg = cfg.data_config()

    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model, cfg.analysis)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.main_lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0)

    state = {"epoch": 0, "step": 0, "plateau_lr": cfg.main_lr, "best_val": math.inf, "stale": 0}
    last = out / "last"
    if cfg.resume and (last / "trainer.json").exists():
        load_state_into(last, model)
        load_optimizer_into(last, model, opt)
        saved = read_json(last, "trainer.json")
        restore_rng(saved)
        state.update({k: saved.get(k, v) for k, v in state.items()})
        log.info("resumed from %s at epoch %d step %d", last, state["epoch"], state["step"])

    done_step, done_epoch = state["step"], state["epoch"]
    step_log = _CsvLog(out / "train_log.csv", STEP_FIELDS, keep=lambda r: int(r["step"]) <= done_step)
    val_log = _CsvLog(out / "val_log.csv", VAL_FIELDS, keep=lambda r: int(r["epoch"]) <= done_epoch)

    val_batches = [
        (torch.from_numpy(n), torch.from_numpy(c))
        for n, c in batch_iterator(val_entries, dcfg, seed=_epoch_seed(cfg.seed, 0, 7))
    ]
    crop = None if cfg.train_crop is None else int(round(cfg.train_crop * cfg.analysis.sample_rate))
    params = [p for p in model.parameters() if p.requires_grad]
    step = state["step"]
    stopped = False

    for epoch in range(state["epoch"] + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        lr = epoch_lr(cfg, epoch, state["plateau_lr"])
        for g in opt.param_groups:
            g["lr"] = lr
        mix_seed = _epoch_seed(cfg.seed, epoch if cfg.remix_each_epoch else 0, 1)
        crop_rng = np.random.default_rng(_epoch_seed(cfg.seed, epoch, 2))
        model.train()
        for noisy, clean in batch_iterator(
            train_entries, dcfg, seed=mix_seed, order_seed=_epoch_seed(cfg.seed, epoch, 3)
        ):
            if crop is not None:
                noisy, clean = _crop(noisy, clean, crop, crop_rng)
            est = model(torch.from_numpy(noisy))
            loss, rep = total_loss(est, torch.from_numpy(clean), cfg.analysis)
            if not math.isfinite(rep.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step + 1}: "
                    f"si_snr={rep.si_snr_db} cmse={rep.cmse} kl={rep.kl}"
                )
            opt.zero_grad(set_to_none=True)
            loss.backward()
            gnorm = torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            if not torch.isfinite(gnorm):
                raise TrainingDiverged(f"non-finite gradient norm at epoch {epoch} step {step + 1}")
            opt.step()
            step += 1
            step_log.append({"step": step, **rep.as_dict(), "lr": lr})
            if cfg.max_steps is not None and step >= cfg.max_steps:
                stopped = True
                break

        metrics = validate(model, val_batches, cfg.analysis)
        if cfg.schedule == "plateau-halving":
            state["plateau_lr"], _, state["stale"] = plateau_update(
                state["plateau_lr"], state["best_val"], metrics["val_total"], state["stale"], cfg.plateau_patience
            )
        improved = metrics["val_total"] < state["best_val"]
        if improved:
            state["best_val"] = metrics["val_total"]
        state.update(epoch=epoch, step=step)
        val_log.append({"epoch": epoch, "step": step, "lr": lr, **metrics, "seconds": time.perf_counter() - t0})
        log.info(
            "epoch %d lr %.3g val_total %.4f si-snri %.2f dB (%.1fs)",
            epoch, lr, metrics["val_total"], metrics["val_si_snri_db"], time.perf_counter() - t0,
        )
        snapshot = cfg.to_dict()
        save_checkpoint(last, model, snapshot, opt, state)
        if improved:
            save_checkpoint(out / "best", model, snapshot, opt, state)
        if stopped:
            break

    return {"epoch": state["epoch"], "step": step, "best_val": state["best_val"], "checkpoint_dir": str(out)}
