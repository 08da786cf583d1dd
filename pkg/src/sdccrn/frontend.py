"""Causal STFT analysis/synthesis and learnable power-law spectrum compression.

Frames are left aligned (no centre padding): frame ``t`` covers samples
``[t*hop, t*hop + win_len)``. A 512-point real FFT has 257 bins, of which DC
and Nyquist are purely real. They share bin 0 (DC in the real part, Nyquist in
the imaginary part), which leaves exactly 256 complex bins and keeps the
transform invertible.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .complex_ops import ComplexTensor

EPS = 1e-8


@dataclass(frozen=True)
class AnalysisConfig:
    sample_rate: int = 32000
    win_len: int = 480
    hop: int = 160
    fft_size: int = 512
    window: str = "sqrt-hann"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.win_len > self.fft_size:
            raise ValueError("win_len must not exceed fft_size")
        if self.win_len % self.hop:
            raise ValueError("hop must divide win_len")
        if self.window != "sqrt-hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_freq(self) -> int:
        return self.fft_size // 2

    def num_frames(self, n_samples: int) -> int:
        return (n_samples - self.win_len) // self.hop + 1

    def window_tensor(self, dtype=torch.float32, device=None) -> Tensor:
        return torch.hann_window(self.win_len, periodic=True, dtype=dtype, device=device).sqrt()

    @property
    def ola_gain(self) -> float:
        # Sum of analysis*synthesis windows over all hop shifts; 1.5 for the default.
        w2 = np.hanning(self.win_len + 1)[:-1]
        return float(w2.reshape(-1, self.hop).sum(0).mean())

    def to_dict(self) -> dict:
        return asdict(self)


def _as_tensor(wave) -> Tensor:
    if not isinstance(wave, Tensor):
        wave = torch.as_tensor(np.asarray(wave, dtype=np.float32))
    return wave


def stft(wave, cfg: AnalysisConfig = AnalysisConfig()) -> ComplexTensor:
    """Waveform ``[..., L]`` -> spectrogram ``[..., T, F]`` with F = fft_size/2."""
    wave = _as_tensor(wave)
    if wave.shape[-1] < cfg.win_len:
        raise ValueError(f"input too short: {wave.shape[-1]} samples < window {cfg.win_len}")
    if not torch.isfinite(wave).all():
        raise ValueError("input contains non-finite samples")
    frames = wave.unfold(-1, cfg.win_len, cfg.hop) * cfg.window_tensor(wave.dtype, wave.device)
    spec = torch.fft.rfft(frames, n=cfg.fft_size)
    nyq = spec[..., -1].real
    real = torch.cat([spec[..., :1].real, spec[..., 1:-1].real], -1)
    imag = torch.cat([nyq.unsqueeze(-1), spec[..., 1:-1].imag], -1)
    return ComplexTensor(real, imag)


def istft(spec: ComplexTensor, cfg: AnalysisConfig = AnalysisConfig(), out_len: int | None = None) -> Tensor:
    """Weighted overlap-add inverse of :func:`stft`; output is cut or zero-padded to ``out_len``."""
    if spec.real.shape != spec.imag.shape:
        raise ValueError("real/imag shape mismatch")
    if spec.shape[-1] != cfg.n_freq:
        raise ValueError(f"expected {cfg.n_freq} bins, got {spec.shape[-1]}")
    n_frames = spec.shape[-2]
    full_len = (n_frames - 1) * cfg.hop + cfg.win_len
    if out_len is None:
        out_len = full_len
    if out_len > n_frames * cfg.hop + cfg.win_len:
        raise ValueError(f"out_len {out_len} exceeds what {n_frames} frames can cover")
    zero = torch.zeros_like(spec.real[..., :1])
    full = torch.complex(
        torch.cat([spec.real[..., :1], spec.real[..., 1:], spec.imag[..., :1]], -1),
        torch.cat([zero, spec.imag[..., 1:], zero], -1),
    )
    frames = torch.fft.irfft(full, n=cfg.fft_size)[..., : cfg.win_len]
    frames = frames * cfg.window_tensor(frames.dtype, frames.device)
    lead = frames.shape[:-2]
    frames = frames.reshape(-1, n_frames, cfg.win_len).transpose(1, 2)
    wave = F.fold(frames, (1, full_len), (1, cfg.win_len), stride=(1, cfg.hop))
    wave = wave.reshape(*lead, full_len) / cfg.ola_gain
    if out_len < full_len:
        wave = wave[..., :out_len]
    elif out_len > full_len:
        wave = F.pad(wave, (0, out_len - full_len))
    return wave


def _power_law(spec: ComplexTensor, exponent: Tensor) -> ComplexTensor:
    if exponent.shape[-1] != spec.shape[-1]:
        raise ValueError(f"exponent length {exponent.shape[-1]} != F={spec.shape[-1]}")
    # |Y|^e * e^{j phase} = Y * (|Y|^2)^((e-1)/2); clamping keeps 0 -> 0 and finite gradients
    mag2 = (spec.real**2 + spec.imag**2).clamp_min(EPS**2)
    scale = mag2 ** ((exponent - 1) / 2)
    return ComplexTensor(spec.real * scale, spec.imag * scale)


def compress(spec: ComplexTensor, alpha: Tensor) -> ComplexTensor:
    """Per-bin magnitude compression ``|Y|^alpha(f)``, phase untouched."""
    return _power_law(spec, alpha)


def decompress(spec: ComplexTensor, alpha: Tensor) -> ComplexTensor:
    return _power_law(spec, 1.0 / alpha.clamp_min(EPS))


class LearnableCompression(nn.Module):
    """Per-frequency compression exponents alpha = sigmoid(raw) in (0, 1).

    ``fixed_alpha`` pins every exponent to a constant (plain spectrum
    compression); the raw logits are then not trained.
    """

    def __init__(self, n_freq: int = 256, fixed_alpha: float | None = None):
        super().__init__()
        self.n_freq = n_freq
        self.fixed_alpha = fixed_alpha
        if fixed_alpha is None:
            self.raw = nn.Parameter(torch.zeros(n_freq))
        else:
            if not 0 < fixed_alpha <= 1:
                raise ValueError("fixed_alpha must lie in (0, 1]")
            self.register_buffer("raw", torch.full((n_freq,), float(fixed_alpha)))

    @property
    def alpha(self) -> Tensor:
        if self.fixed_alpha is not None:
            return self.raw
        return torch.sigmoid(self.raw)

    def compress(self, spec: ComplexTensor) -> ComplexTensor:
        return compress(spec, self.alpha)

    def decompress(self, spec: ComplexTensor) -> ComplexTensor:
        return decompress(spec, self.alpha)
