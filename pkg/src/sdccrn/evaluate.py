"""Objective metrics over paired (noisy, clean) files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .frontend import AnalysisConfig, stft
from .objectives import si_snr

LSD_EPS = 1e-8
FIELDS = ["id", "noisy", "clean", "si_snr_db", "si_snr_noisy_db", "si_snri_db", "lsd_db", "error"]


def log_spectral_distance(est, ref, cfg: AnalysisConfig = AnalysisConfig(), eps: float = LSD_EPS) -> float:
    """Mean over frames of the RMS (over bins) dB difference of STFT magnitudes."""
    est = torch.as_tensor(np.asarray(est, dtype=np.float64))
    ref = torch.as_tensor(np.asarray(ref, dtype=np.float64))
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {tuple(est.shape)} vs {tuple(ref.shape)}")
    a, b = stft(est, cfg).abs(), stft(ref, cfg).abs()
    d = 20 * torch.log10((a + eps) / (b + eps))
    return float(d.pow(2).mean(-1).sqrt().mean())


def pair_metrics(est, noisy, clean, cfg: AnalysisConfig = AnalysisConfig()) -> dict:
    est, noisy, clean = (torch.as_tensor(np.asarray(x, dtype=np.float64)) for x in (est, noisy, clean))
    if not est.shape == noisy.shape == clean.shape:
        raise ValueError(
            f"length mismatch: est {est.shape[-1]}, noisy {noisy.shape[-1]}, clean {clean.shape[-1]}"
        )
    s_est = float(si_snr(est, clean))
    s_noisy = float(si_snr(noisy, clean))
    return {
        "si_snr_db": s_est,
        "si_snr_noisy_db": s_noisy,
        "si_snri_db": s_est - s_noisy,
        "lsd_db": log_spectral_distance(est, clean, cfg),
    }


@dataclass
class PairEntry:
    noisy: str
    clean: str
    id: str = ""


def read_pairs(path) -> list[PairEntry]:
    """JSON lines with ``noisy`` and ``clean`` paths and an optional ``id``."""
    out = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            if line.strip():
                d = json.loads(line)
                out.append(PairEntry(d["noisy"], d["clean"], str(d.get("id", i))))
    return out


def evaluate_pairs(enhance, pairs: list[PairEntry], out_csv, cfg: AnalysisConfig = AnalysisConfig()) -> list[dict]:
    """Score ``enhance(noisy_wave) -> wave`` on every pair and write a CSV.

    A failing pair (unreadable file, length mismatch, too short) becomes an
    error row and evaluation continues. The last row holds the means over the
    successful pairs.
    """
    from .data import load_wav

    rows = []
    for p in pairs:
        row = {"id": p.id, "noisy": p.noisy, "clean": p.clean, "error": ""}
        try:
            noisy = load_wav(p.noisy, cfg.sample_rate)
            clean = load_wav(p.clean, cfg.sample_rate)
            if len(noisy) != len(clean):
                raise ValueError(f"length mismatch: noisy {len(noisy)} vs clean {len(clean)}")
            est = enhance(noisy)
            row.update(pair_metrics(est, noisy, clean, cfg))
        except Exception as exc:  # noqa: BLE001 - recorded per file
            row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        rows.append(row)

    ok = [r for r in rows if not r["error"]]
    mean = {"id": "mean", "noisy": "", "clean": "", "error": "" if ok else "no successful pairs"}
    for k in ("si_snr_db", "si_snr_noisy_db", "si_snri_db", "lsd_db"):
        mean[k] = float(np.mean([r[k] for r in ok])) if ok else math.nan
    rows.append(mean)

    Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, FIELDS)
        w.writeheader()
        w.writerows(rows)
    return rows
