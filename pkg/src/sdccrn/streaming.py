"""Hop-by-hop enhancement reproducing the offline model output.

Each call consumes one hop of input. Once a full analysis window has arrived,
one STFT frame goes through the network with per-layer caches (past frames of
every causal convolution, LSTM state), and the windowed synthesis frame is
overlap-added into a buffer. The first ``win_len // hop - 1`` calls only prime
the input buffer and return silence, so the stream is the offline output
delayed by ``win_len - hop`` samples.
"""

from __future__ import annotations

import time

import torch
from torch import Tensor

from .frontend import AnalysisConfig, istft, stft
from .model import SDCCRN


def algorithmic_latency(cfg: AnalysisConfig = AnalysisConfig()) -> float:
    """Seconds: one analysis window of buffering plus one hop to process it."""
    return (cfg.win_len + cfg.hop) / cfg.sample_rate


class StreamingEnhancer:
    def __init__(self, model: SDCCRN, batch: int = 1):
        self.model = model.eval()
        self.cfg: AnalysisConfig = model.cfg
        self.batch = batch
        self.block_times: list[float] = []
        self.reset()

    def reset(self) -> None:
        p = next(self.model.parameters())
        self.cache: dict = {}
        self.inbuf = p.new_zeros(self.batch, 0)
        self.ola = p.new_zeros(self.batch, self.cfg.win_len)
        self.block_times = []

    @property
    def delay(self) -> int:
        """Samples by which the stream lags the offline output."""
        return self.cfg.win_len - self.cfg.hop

    @torch.no_grad()
    def step(self, block: Tensor) -> Tensor:
        cfg = self.cfg
        squeeze = block.dim() == 1
        if squeeze:
            block = block.unsqueeze(0)
        if block.shape != (self.batch, cfg.hop):
            raise ValueError(f"block must hold exactly hop={cfg.hop} samples per stream, got {tuple(block.shape)}")
        t0 = time.perf_counter()
        self.inbuf = torch.cat([self.inbuf, block.to(self.inbuf)], -1)[:, -cfg.win_len :]
        if self.inbuf.shape[-1] < cfg.win_len:
            out = torch.zeros_like(block, dtype=self.inbuf.dtype)
        else:
            spec = stft(self.inbuf, cfg)
            frame = istft(self.model.enhance_spectrum(spec, self.cache), cfg, cfg.win_len)
            self.ola = self.ola + frame
            out = self.ola[:, : cfg.hop].clone()
            self.ola = torch.cat([self.ola[:, cfg.hop :], torch.zeros_like(out)], -1)
        self.block_times.append(time.perf_counter() - t0)
        return out.squeeze(0) if squeeze else out

    @torch.no_grad()
    def flush(self) -> Tensor:
        """Release the samples still held in the overlap-add buffer."""
        out = self.ola[:, : self.delay].clone()
        self.ola.zero_()
        return out.squeeze(0) if self.batch == 1 else out

    def process(self, wave: Tensor) -> Tensor:
        """Stream a whole signal; returns output aligned with the offline result."""
        hop = self.cfg.hop
        if wave.shape[-1] % hop:
            raise ValueError(f"length must be a multiple of hop={hop}")
        blocks = [self.step(b) for b in wave.split(hop, dim=-1)]
        blocks.append(self.flush())
        return torch.cat(blocks, -1)[..., self.delay :]

    @property
    def real_time_factor(self) -> float:
        if not self.block_times:
            return 0.0
        return sum(self.block_times) / (len(self.block_times) * self.cfg.hop / self.cfg.sample_rate)
