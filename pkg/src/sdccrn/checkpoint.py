"""Checkpoint container: a plain directory readable without Python pickles.

Layout::

    DIR/
      index.json      {"format": ..., "tensors": {name: {shape, dtype, offset, file}}}
      params.bin      model parameters and buffers, concatenated
      optimizer.bin   optimizer moment tensors, concatenated
      config.json     run configuration snapshot (includes model and analysis specs)
      trainer.json    epoch/step counters, schedule state, RNG state

Tensors are raw little-endian arrays at the given byte offset. Floating tensors
are stored as float32; integer counters (batch-norm step counts) as int64.
Optimizer entries are named ``optim/<param name>/<slot>``.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

FORMAT = "sdccrn-ckpt/1"
_DTYPES = {"float32": "<f4", "int64": "<i8"}


def _as_numpy(t: torch.Tensor) -> tuple[np.ndarray, str]:
    t = t.detach().cpu()
    if t.is_floating_point():
        return t.to(torch.float32).numpy().astype("<f4"), "float32"
    return t.to(torch.int64).numpy().astype("<i8"), "int64"


def _write_blob(path: Path, tensors: dict[str, torch.Tensor], index: dict) -> None:
    offset = 0
    with open(path, "wb") as fh:
        for name, t in tensors.items():
            arr, dtype = _as_numpy(t)
            data = arr.tobytes(order="C")
            fh.write(data)
            index[name] = {"shape": list(arr.shape), "dtype": dtype, "offset": offset, "file": path.name}
            offset += len(data)


def read_tensors(ckpt_dir, prefix: str = "") -> dict[str, torch.Tensor]:
    """Every tensor in ``index.json`` whose name starts with ``prefix``."""
    ckpt_dir = Path(ckpt_dir)
    index = json.loads((ckpt_dir / "index.json").read_text())
    if index.get("format") != FORMAT:
        raise ValueError(f"{ckpt_dir}: unknown checkpoint format {index.get('format')!r}")
    blobs: dict[str, bytes] = {}
    out = {}
    for name, meta in index["tensors"].items():
        if not name.startswith(prefix):
            continue
        if meta["file"] not in blobs:
            blobs[meta["file"]] = (ckpt_dir / meta["file"]).read_bytes()
        dt = np.dtype(_DTYPES[meta["dtype"]])
        count = int(np.prod(meta["shape"], dtype=np.int64))
        arr = np.frombuffer(blobs[meta["file"]], dtype=dt, count=count, offset=meta["offset"])
        out[name] = torch.from_numpy(arr.reshape(meta["shape"]).astype(dt.newbyteorder("=")))
    return out


def save_checkpoint(
    ckpt_dir,
    model: nn.Module,
    config: dict,
    optimizer: torch.optim.Optimizer | None = None,
    trainer_state: dict | None = None,
) -> Path:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    tensors: dict = {}
    _write_blob(ckpt_dir / "params.bin", dict(model.state_dict()), tensors)

    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        slots = {}
        for p, st in optimizer.state.items():
            for slot, v in st.items():
                v = v if torch.is_tensor(v) else torch.tensor(v)
                slots[f"optim/{names[id(p)]}/{slot}"] = v
        _write_blob(ckpt_dir / "optimizer.bin", slots, tensors)

    index = {"format": FORMAT, "tensors": tensors}
    (ckpt_dir / "index.json").write_text(json.dumps(index, indent=1))
    (ckpt_dir / "config.json").write_text(json.dumps(config, indent=2))
    state = dict(trainer_state or {})
    state["torch_rng"] = base64.b64encode(torch.get_rng_state().numpy().tobytes()).decode()
    (ckpt_dir / "trainer.json").write_text(json.dumps(state, indent=2))
    return ckpt_dir


def load_state_into(ckpt_dir, model: nn.Module) -> None:
    """Copy stored parameters and buffers into ``model``; names must match exactly."""
    stored = read_tensors(ckpt_dir)
    stored = {k: v for k, v in stored.items() if not k.startswith("optim/")}
    expected = model.state_dict()
    missing = set(expected) - set(stored)
    extra = set(stored) - set(expected)
    if missing or extra:
        raise ValueError(f"checkpoint/model mismatch: missing={sorted(missing)[:5]} unexpected={sorted(extra)[:5]}")
    for name, ref in expected.items():
        if tuple(stored[name].shape) != tuple(ref.shape):
            raise ValueError(f"{name}: stored shape {tuple(stored[name].shape)} != model {tuple(ref.shape)}")
    model.load_state_dict({k: v.to(expected[k].dtype) for k, v in stored.items()})


def load_optimizer_into(ckpt_dir, model: nn.Module, optimizer: torch.optim.Optimizer) -> None:
    stored = read_tensors(ckpt_dir, prefix="optim/")
    params = dict(model.named_parameters())
    for key, v in stored.items():
        head, slot = key.rsplit("/", 1)
        p = params[head[len("optim/") :]]
        # Adam keeps its step counter as a float32 scalar tensor
        optimizer.state[p][slot] = v.to(torch.float32) if slot == "step" else v.to(p.dtype)


def read_json(ckpt_dir, name: str) -> dict:
    return json.loads((Path(ckpt_dir) / name).read_text())


def restore_rng(trainer_state: dict) -> None:
    raw = base64.b64decode(trainer_state["torch_rng"])
    torch.set_rng_state(torch.from_numpy(np.frombuffer(raw, dtype=np.uint8).copy()))


def load_model(ckpt_dir):
    """Rebuild the model described by ``config.json`` and fill in its weights (eval mode)."""
    from .frontend import AnalysisConfig
    from .model import ModelSpec, build_model

    cfg = read_json(ckpt_dir, "config.json")
    model = build_model(ModelSpec.from_dict(cfg["model"]), AnalysisConfig(**cfg.get("analysis", {})))
    load_state_into(ckpt_dir, model)
    return model.eval()
