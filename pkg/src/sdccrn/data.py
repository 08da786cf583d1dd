"""WAV I/O, manifests, on-the-fly mixture synthesis and chunked batch iteration."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 32000
AUDIO_SUFFIXES = (".wav",)


class AudioFormatError(ValueError):
    pass


def load_wav(path, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read a PCM16/float32 WAV as float32 in [-1, 1]; multichannel files keep channel 0."""
    try:
        sr, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise AudioFormatError(f"{path}: malformed WAV ({exc})") from exc
    if sr != sample_rate:
        raise AudioFormatError(f"{path}: expected {sample_rate} Hz, got {sr} Hz")
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        return data.astype(np.float32) / 32768.0
    if data.dtype == np.float32:
        return data
    if data.dtype == np.int32:
        return (data.astype(np.float64) / 2**31).astype(np.float32)
    if data.dtype == np.float64:
        return data.astype(np.float32)
    raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")


def save_wav(path, wave, sample_rate: int = SAMPLE_RATE) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, sample_rate, np.asarray(wave, dtype=np.float32))


@dataclass
class ManifestEntry:
    path: str
    kind: str  # "speech" | "noise"
    duration: float
    sample_rate: int = SAMPLE_RATE


def write_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(json.dumps(asdict(e)) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    with open(path) as fh:
        return [ManifestEntry(**json.loads(line)) for line in fh if line.strip()]


def scan_directory(root, kind: str | None = None) -> list[ManifestEntry]:
    """Index every WAV under ``root``.

    Without an explicit ``kind``, files with a path component containing
    "noise" are noise and everything else is speech. Files at the wrong sample
    rate are rejected.
    """
    root = Path(root)
    entries = []
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() not in AUDIO_SUFFIXES:
            continue
        sr, data = wavfile.read(path, mmap=True)
        if sr != SAMPLE_RATE:
            raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {sr} Hz")
        k = kind or ("noise" if any("noise" in part.lower() for part in path.relative_to(root).parts) else "speech")
        entries.append(ManifestEntry(str(path), k, len(data) / sr, sr))
    return entries


def mean_power(x: np.ndarray) -> float:
    return float(np.mean(np.asarray(x, dtype=np.float64) ** 2))


def fit_length(x: np.ndarray, length: int, offset: int = 0) -> np.ndarray:
    """Loop or crop ``x`` (starting at ``offset``) to exactly ``length`` samples."""
    reps = -(-(offset + length) // len(x))
    return np.tile(x, reps)[offset : offset + length]


def noise_gain(speech_power: float, noise_power: float, snr_db: float) -> float:
    return float(np.sqrt(speech_power / (noise_power * 10 ** (snr_db / 10))))


def synthesize_mixture(speech, noise, snr_db: float, peak: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """Scale ``noise`` to ``snr_db`` below ``speech`` and add; returns (noisy, clean).

    Noise is looped or cropped to the speech length. If the mixture would
    exceed ``peak``, noisy and clean are rescaled by the same factor.
    """
    speech = np.asarray(speech, dtype=np.float64)
    noise = fit_length(np.asarray(noise, dtype=np.float64), len(speech))
    p_s, p_n = mean_power(speech), mean_power(noise)
    if p_s == 0:
        raise ValueError("speech is all zeros")
    if p_n == 0:
        raise ValueError("noise is all zeros")
    noisy = speech + noise_gain(p_s, p_n, snr_db) * noise
    top = np.max(np.abs(noisy))
    if top > peak:
        scale = peak / top
        noisy, speech = noisy * scale, speech * scale
    return noisy.astype(np.float32), speech.astype(np.float32)


@dataclass
class MixtureSpec:
    speech_id: int
    noise_id: int
    snr: float
    chunk_len: float
    seed: int
    speech_offset: int = 0
    noise_offset: int = 0


@dataclass
class DataConfig:
    chunk_len: float = 8.0
    snr_range: tuple[float, float] = (-5.0, 20.0)
    batch_size: int = 4
    drop_remainder: bool = True
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.snr_range = tuple(self.snr_range)
        if self.chunk_len <= 0:
            raise ValueError("chunk_len must be positive")
        if self.snr_range[0] > self.snr_range[1]:
            raise ValueError("snr_range is reversed")


def _split(entries: Sequence[ManifestEntry]):
    speech = [e for e in entries if e.kind == "speech"]
    noise = [e for e in entries if e.kind == "noise"]
    if not speech or not noise:
        raise ValueError("manifest needs at least one speech and one noise entry")
    for e in entries:
        if e.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"{e.path}: expected {SAMPLE_RATE} Hz, got {e.sample_rate} Hz")
    return speech, noise


def chunk_offsets(n_samples: int, chunk: int, drop_remainder: bool = True) -> list[int]:
    """Start offsets of non-overlapping chunks; a short utterance yields one (padded) chunk."""
    if n_samples <= chunk:
        return [0]
    n = n_samples // chunk if drop_remainder else -(-n_samples // chunk)
    return [i * chunk for i in range(n)]


def mixture_plan(entries: Sequence[ManifestEntry], cfg: DataConfig, seed: int) -> list[MixtureSpec]:
    """Deterministic list of mixtures covering every speech chunk once, in shuffled order."""
    speech, noise = _split(entries)
    rng = np.random.default_rng(seed)
    chunk = int(round(cfg.chunk_len * cfg.sample_rate))
    items = [
        (i, off)
        for i, e in enumerate(speech)
        for off in chunk_offsets(int(round(e.duration * e.sample_rate)), chunk, cfg.drop_remainder)
    ]
    order = rng.permutation(len(items))
    plan = []
    for k in order:
        sid, off = items[k]
        nid = int(rng.integers(len(noise)))
        n_len = int(round(noise[nid].duration * noise[nid].sample_rate))
        plan.append(
            MixtureSpec(
                speech_id=sid,
                noise_id=nid,
                snr=float(rng.uniform(*cfg.snr_range)),
                chunk_len=cfg.chunk_len,
                seed=seed,
                speech_offset=off,
                noise_offset=int(rng.integers(max(n_len, 1))),
            )
        )
    return plan


@lru_cache(maxsize=4096)
def _cached_wav(path: str) -> np.ndarray:
    return load_wav(path)


def render_mixture(spec: MixtureSpec, entries: Sequence[ManifestEntry], sample_rate: int = SAMPLE_RATE):
    speech, noise = _split(entries)
    chunk = int(round(spec.chunk_len * sample_rate))
    s = _cached_wav(speech[spec.speech_id].path)[spec.speech_offset : spec.speech_offset + chunk]
    if len(s) < chunk:
        s = np.pad(s, (0, chunk - len(s)))
    n = _cached_wav(noise[spec.noise_id].path)
    n = fit_length(n, chunk, spec.noise_offset % len(n))
    return synthesize_mixture(s, n, spec.snr)


def batch_iterator(
    entries: Sequence[ManifestEntry],
    cfg: DataConfig,
    seed: int,
    worker_id: int = 0,
    num_workers: int = 1,
    order_seed: int | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (noisy, clean) float32 batches of shape [B, chunk].

    ``seed`` fixes the mixtures (pairing, SNR, offsets). ``order_seed``, if
    given, reshuffles their order, so a fixed mixture set can be revisited in
    a new order every epoch. Worker ``w`` of ``k`` takes every k-th batch of
    the plan, so the union over workers is a fixed function of the seeds and k.
    """
    plan = mixture_plan(entries, cfg, seed)
    if order_seed is not None:
        plan = [plan[i] for i in np.random.default_rng(order_seed).permutation(len(plan))]
    batches = [plan[i : i + cfg.batch_size] for i in range(0, len(plan), cfg.batch_size)]
    for bi in range(worker_id, len(batches), num_workers):
        pairs = [render_mixture(spec, entries, cfg.sample_rate) for spec in batches[bi]]
        yield np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


# Synthetic material for desk-scale experiments


def speech_like(duration: float, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Harmonic tone complex with a gliding pitch, formant-like peaks and syllabic gating."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0_base = rng.uniform(90, 250)
    f0 = f0_base * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t + rng.uniform(0, 2 * np.pi)))
    f0 *= 1 + 0.1 * (t / max(duration, 1e-9) - 0.5) * rng.choice([-1, 1])
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    n_harm = int(12000 // (f0_base * 1.2))
    formants = rng.uniform([300, 900, 2200], [900, 2200, 3500])
    out = np.zeros(n)
    for k in range(1, n_harm + 1):
        fk = k * f0_base
        gain = (1 / k) * sum(np.exp(-(((fk - fm) / 300.0) ** 2)) for fm in formants) + 0.02 / k
        out += gain * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    rate = rng.uniform(3, 6)
    env = np.clip(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0, None) ** 0.5
    out *= env
    return (0.1 * out / (np.sqrt(np.mean(out**2)) + 1e-12)).astype(np.float32)


def noise_like(duration: float, kind: str, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE,
               talkers: int = 16) -> np.ndarray:
    """White noise, or babble summed from ``talkers`` speech-like voices plus a little white noise."""
    n = int(round(duration * sample_rate))
    if kind == "white":
        out = rng.standard_normal(n)
    elif kind == "babble":
        out = sum(speech_like(duration, rng, sample_rate).astype(np.float64) for _ in range(talkers))
        out = out + 0.05 * rng.standard_normal(n) * np.std(out)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return (0.1 * out / (np.sqrt(np.mean(out**2)) + 1e-12)).astype(np.float32)


def write_synthetic_corpus(
    root,
    n_speech: int = 200,
    n_noise: int = 8,
    duration: float = 2.0,
    noise_duration: float = 6.0,
    seed: int = 0,
) -> list[ManifestEntry]:
    """Write speech-like and white/babble noise clips under ``root``; returns their manifest."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_speech):
        p = root / "speech" / f"s{i:04d}.wav"
        save_wav(p, speech_like(duration, rng))
        entries.append(ManifestEntry(str(p), "speech", duration))
    for i in range(n_noise):
        kind = "white" if i % 2 == 0 else "babble"
        p = root / "noise" / f"{kind}{i:03d}.wav"
        save_wav(p, noise_like(noise_duration, kind, rng))
        entries.append(ManifestEntry(str(p), "noise", noise_duration))
    write_manifest(entries, os.path.join(root, "manifest.jsonl"))
    return entries
