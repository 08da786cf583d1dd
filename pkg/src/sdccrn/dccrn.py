"""DCCRN encoder/LSTM/decoder with convolution pathways, and complex ratio masking.

Channel counts in :class:`DccrnSpec` follow the DCCRN convention of counting
real and imaginary feature maps together, so ``128`` means 64 complex channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .complex_ops import (
    ComplexBatchNorm,
    ComplexConv2d,
    ComplexConvTranspose2d,
    ComplexGroupConv2d,
    ComplexLSTM,
    ComplexPReLU,
    ComplexTensor,
    ccat,
    cmul,
)


@dataclass
class DccrnSpec:
    enc_channels: tuple[int, ...] = (32, 64, 64, 64, 128, 128)
    kernel: tuple[int, int] = (5, 2)
    stride: tuple[int, int] = (2, 1)
    groups: int = 1
    lstm_hidden: int = 256
    lstm_layers: int = 1
    pathway: bool = True
    # running-statistics update rate; small batches want a slower average
    bn_momentum: float = 0.1

    def __post_init__(self):
        self.enc_channels = tuple(self.enc_channels)
        self.kernel = tuple(self.kernel)
        self.stride = tuple(self.stride)
        if any(c % 2 for c in self.enc_channels):
            raise ValueError("channel counts include real and imag parts and must be even")
        if not 0 < self.bn_momentum <= 1:
            raise ValueError("bn_momentum must lie in (0, 1]")


class Dccrn(nn.Module):
    """Encoder -> stacked-LSTM bottleneck -> mirrored decoder, all causal in time.

    ``in_channels`` / ``out_channels`` are real+imag totals, like the entries
    of ``spec.enc_channels``. With ``spec.groups > 1`` every encoder and decoder layer is a
    sub-band convolution. Decoder layer i consumes its predecessor's output
    concatenated with the (pathway-transformed) matching encoder output.
    """

    def __init__(self, in_channels: int, out_channels: int, n_freq: int, spec: DccrnSpec):
        super().__init__()
        self.spec = spec
        chans = [in_channels // 2] + [c // 2 for c in spec.enc_channels]
        out_c = out_channels // 2
        g = spec.groups
        s_f = spec.stride[0]

        freqs = [n_freq]
        for _ in spec.enc_channels:
            if freqs[-1] % (s_f * g):
                raise ValueError(f"frequency {freqs[-1]} cannot be split into {g} bands and strided by {s_f}")
            freqs.append(freqs[-1] // s_f)
        self.freq_trace = tuple(freqs[1:])
        self.channel_trace = tuple(chans[1:])

        def channel_groups(c_in, c_out):
            # falls back to full channel mixing when the counts do not split
            return g if c_in % g == 0 and c_out % g == 0 else 1

        self.encoders = nn.ModuleList()
        self.pathways = nn.ModuleList()
        for c_in, c_out in zip(chans[:-1], chans[1:]):
            if g > 1:
                conv = ComplexGroupConv2d(c_in, c_out, spec.kernel, spec.stride, groups=g,
                                          channel_groups=channel_groups(c_in, c_out))
            else:
                conv = ComplexConv2d(c_in, c_out, spec.kernel, spec.stride)
            self.encoders.append(
                nn.ModuleDict(
                    {
                        "conv": conv,
                        "norm": ComplexBatchNorm(c_out, spec.bn_momentum),
                        "act": ComplexPReLU(c_out),
                    }
                )
            )
            if spec.pathway:
                self.pathways.append(
                    nn.ModuleDict({"conv": ComplexConv2d(c_out, c_out, (1, 1)), "norm": ComplexBatchNorm(c_out, spec.bn_momentum)})
                )

        self.bottleneck_freq = freqs[-1]
        feat = chans[-1] * freqs[-1]
        self.rnn = ComplexLSTM(feat, spec.lstm_hidden, spec.lstm_layers)
        self.bottleneck_dim = 2 * feat

        self.decoders = nn.ModuleList()
        dec_out = list(reversed(chans[:-1]))
        dec_out[-1] = out_c
        for i, (c_skip, c_out) in enumerate(zip(reversed(chans[1:]), dec_out)):
            last = i == len(dec_out) - 1
            convt = ComplexConvTranspose2d(2 * c_skip, c_out, spec.kernel, spec.stride, groups=g,
                                           channel_groups=channel_groups(2 * c_skip, c_out))
            layer = {"conv": convt}
            if not last:
                layer["norm"] = ComplexBatchNorm(c_out, spec.bn_momentum)
                layer["act"] = ComplexPReLU(c_out)
            self.decoders.append(nn.ModuleDict(layer))

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        skips = []
        for layer in self.encoders:
            x = layer["act"](layer["norm"](layer["conv"](x, cache)))
            skips.append(x)

        n, c, t, f = x.shape
        flat = x.map(lambda a: a.permute(0, 2, 1, 3).reshape(n, t, c * f))
        state = None if cache is None else cache.get(self.rnn)
        y, state = self.rnn(flat, state)
        if cache is not None:
            cache[self.rnn] = tuple(s.detach() for s in state)
        x = y.map(lambda a: a.reshape(n, t, c, f).permute(0, 2, 1, 3))

        for i, layer in enumerate(self.decoders):
            skip = skips[-1 - i]
            if self.spec.pathway:
                pw = self.pathways[-1 - i]
                skip = pw["norm"](pw["conv"](skip, cache))
            x = layer["conv"](ccat([x, skip]), cache)
            if "norm" in layer:
                x = layer["act"](layer["norm"](x))
        return x


def bounded_mask(mask: ComplexTensor) -> ComplexTensor:
    """tanh(|m|) * e^{j angle(m)}, with 0 -> 0."""
    mag = torch.sqrt((mask.real**2 + mask.imag**2).clamp_min(1e-24))
    scale = torch.tanh(mag) / mag
    return ComplexTensor(mask.real * scale, mask.imag * scale)


def apply_crm(feature: ComplexTensor, mask: ComplexTensor) -> ComplexTensor:
    if feature.shape != mask.shape:
        raise ValueError(f"feature {list(feature.shape)} and mask {list(mask.shape)} differ")
    return cmul(feature, bounded_mask(mask))
