"""Complex feature encoder/decoder between the STFT domain and a half-frequency latent."""

from __future__ import annotations

from torch import nn

from .complex_ops import (
    ComplexConv2d,
    ComplexLayerNorm,
    ComplexPixelConv,
    ComplexPReLU,
    ComplexTensor,
    DilatedDenseBlock,
)


class ComplexFeatureEncoder(nn.Module):
    """[N, 1, T, F] -> [N, C, T, F/2].

    Pointwise lift to ``channels``, a dilated dense block for temporal context,
    then a frequency-stride-2 convolution for local features. Each conv is
    followed by LayerNorm and PReLU.
    """

    def __init__(
        self,
        channels: int = 16,
        n_freq: int = 256,
        depth: int = 5,
        dense_kernel=(3, 2),
        dilations=(1, 2, 4, 8, 16),
        out_kernel=(3, 2),
    ):
        super().__init__()
        self.n_freq = n_freq
        self.channels = channels
        self.inp = ComplexConv2d(1, channels, (1, 1))
        self.inp_norm = ComplexLayerNorm(channels)
        self.inp_act = ComplexPReLU(channels)
        self.dense = DilatedDenseBlock(channels, depth, dense_kernel, dilations)
        self.out = ComplexConv2d(channels, channels, out_kernel, stride=(2, 1))
        self.out_norm = ComplexLayerNorm(channels)
        self.out_act = ComplexPReLU(channels)

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        if x.shape[1] != 1 or x.shape[-1] != self.n_freq:
            raise ValueError(f"expected [N, 1, T, {self.n_freq}], got {list(x.shape)}")
        x = self.inp_act(self.inp_norm(self.inp(x, cache)))
        x = self.dense(x, cache)
        return self.out_act(self.out_norm(self.out(x, cache)))


class ComplexFeatureDecoder(nn.Module):
    """[N, C, T, F/2] -> [N, 1, T, F]; the final pointwise projection is left linear."""

    def __init__(
        self,
        channels: int = 16,
        n_freq: int = 256,
        depth: int = 5,
        dense_kernel=(3, 2),
        dilations=(1, 2, 4, 8, 16),
        pixel_kernel=(3, 2),
    ):
        super().__init__()
        self.n_freq = n_freq
        self.channels = channels
        self.dense = DilatedDenseBlock(channels, depth, dense_kernel, dilations)
        self.up = ComplexPixelConv(channels, channels, upscale=2, kernel=pixel_kernel)
        self.up_norm = ComplexLayerNorm(channels)
        self.up_act = ComplexPReLU(channels)
        self.out = ComplexConv2d(channels, 1, (1, 1))

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        if x.shape[1] != self.channels or x.shape[-1] * 2 != self.n_freq:
            raise ValueError(f"expected [N, {self.channels}, T, {self.n_freq // 2}], got {list(x.shape)}")
        x = self.dense(x, cache)
        x = self.up_act(self.up_norm(self.up(x, cache)))
        return self.out(x, cache)
