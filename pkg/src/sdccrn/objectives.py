"""Training objectives: SI-SNR, complex mean absolute error, and magnitude KL divergence."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import Tensor

from .complex_ops import ComplexTensor
from .frontend import AnalysisConfig, stft

EPS = 1e-8


def _safe_abs(real: Tensor, imag: Tensor) -> Tensor:
    # sqrt with a zero (not NaN) gradient at the origin
    mag2 = real**2 + imag**2
    nz = mag2 > 0
    return torch.where(nz, torch.sqrt(torch.where(nz, mag2, torch.ones_like(mag2))), torch.zeros_like(mag2))


def si_snr(est: Tensor, ref: Tensor, eps: float = EPS) -> Tensor:
    """Scale-invariant SNR in dB over the last axis."""
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {tuple(est.shape)} vs {tuple(ref.shape)}")
    if (ref == 0).all(dim=-1).any():
        raise ValueError("undefined reference: all-zero signal")
    est = est - est.mean(-1, keepdim=True)
    ref = ref - ref.mean(-1, keepdim=True)
    proj = (est * ref).sum(-1, keepdim=True) / (ref * ref).sum(-1, keepdim=True) * ref
    noise = est - proj
    return 10 * torch.log10((proj.pow(2).sum(-1) + eps) / (noise.pow(2).sum(-1) + eps))


def cmse(est: ComplexTensor, ref: ComplexTensor) -> Tensor:
    """Mean over (T, F) of |X - X_hat|; batch axes are kept.

    Despite the name this is the mean *absolute* complex difference.
    """
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {list(est.shape)} vs {list(ref.shape)}")
    return _safe_abs(ref.real - est.real, ref.imag - est.imag).mean(dim=(-2, -1))


def kl_div(est: ComplexTensor, ref: ComplexTensor, eps: float = EPS) -> Tensor:
    """KL(p_est || p_ref) between magnitude spectra normalised to sum 1 over (T, F)."""
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {list(est.shape)} vs {list(ref.shape)}")
    p_est = _safe_abs(est.real, est.imag) + eps
    p_ref = _safe_abs(ref.real, ref.imag) + eps
    p_est = p_est / p_est.sum(dim=(-2, -1), keepdim=True)
    p_ref = p_ref / p_ref.sum(dim=(-2, -1), keepdim=True)
    return (p_est * (p_est.log() - p_ref.log())).sum(dim=(-2, -1))


@dataclass
class LossReport:
    si_snr_db: float
    cmse: float
    kl: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossWeights:
    si_snr: float = 1.0
    cmse: float = 1.0
    kl: float = 1.0


def total_loss(
    est_wave: Tensor,
    ref_wave: Tensor,
    cfg: AnalysisConfig = AnalysisConfig(),
    weights: LossWeights = LossWeights(),
) -> tuple[Tensor, LossReport]:
    """total = -SI-SNR + cMSE + KL, averaged over the batch; spectra are linear-domain STFTs."""
    if est_wave.shape != ref_wave.shape:
        raise ValueError(f"length mismatch: {tuple(est_wave.shape)} vs {tuple(ref_wave.shape)}")
    est_spec = stft(est_wave, cfg)
    ref_spec = stft(ref_wave, cfg)
    snr = si_snr(est_wave, ref_wave).mean()
    c = cmse(est_spec, ref_spec).mean()
    k = kl_div(est_spec, ref_spec).mean()
    total = -weights.si_snr * snr + weights.cmse * c + weights.kl * k
    report = LossReport(*(float(v.detach()) for v in (snr, c, k, total)))
    return total, report
