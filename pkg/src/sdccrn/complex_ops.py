"""Complex-valued layers operating on (real, imag) tensor pairs.

All feature maps are laid out as ``[N, C, T, F]`` (batch, complex channels,
frames, frequency bins). Every layer that looks across frames is causal:
output frame ``t`` only sees input frames ``<= t``. Layers that carry temporal
context accept an optional ``cache`` dict; when one is given, the past frames
come from the cache instead of zero padding, which is what makes frame-by-frame
streaming reproduce the offline result.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn


class ComplexTensor(NamedTuple):
    real: Tensor
    imag: Tensor

    @property
    def shape(self) -> torch.Size:
        return self.real.shape

    def map(self, fn) -> "ComplexTensor":
        return ComplexTensor(fn(self.real), fn(self.imag))

    def abs(self) -> Tensor:
        return torch.sqrt(self.real**2 + self.imag**2)

    def to_complex(self) -> Tensor:
        return torch.complex(self.real, self.imag)

    @classmethod
    def from_complex(cls, z: Tensor) -> "ComplexTensor":
        return cls(z.real, z.imag)


def ccat(xs: Sequence[ComplexTensor], dim: int = 1) -> ComplexTensor:
    return ComplexTensor(torch.cat([x.real for x in xs], dim), torch.cat([x.imag for x in xs], dim))


def cmul(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    return ComplexTensor(a.real * b.real - a.imag * b.imag, a.real * b.imag + a.imag * b.real)


def _time_context(x: ComplexTensor, frames: int, cache: dict | None, key) -> ComplexTensor:
    """Prepend ``frames`` past frames (zeros, or cached) along the time axis."""
    if frames == 0:
        return x
    if cache is None:
        return x.map(lambda t: F.pad(t, (0, 0, frames, 0)))
    past = cache.get(key)
    if past is None:
        past = x.map(lambda t: t.new_zeros(t.shape[0], t.shape[1], frames, t.shape[3]))
    full = ccat([past, x], dim=2)
    cache[key] = full.map(lambda t: t[:, :, -frames:].detach())
    return full


def _interleave(x: ComplexTensor, groups: int) -> Tensor:
    # [N, C, ...] pair -> [N, 2C, ...] laid out per channel group as [re_g, im_g]
    n, c = x.real.shape[:2]
    rest = x.real.shape[2:]
    both = torch.stack([x.real, x.imag], 1).reshape(n, 2, groups, c // groups, *rest)
    return both.transpose(1, 2).reshape(n, 2 * c, *rest)


def _deinterleave(y: Tensor, groups: int) -> ComplexTensor:
    n, c2 = y.shape[:2]
    rest = y.shape[2:]
    c = c2 // 2
    y = y.reshape(n, groups, 2, c // groups, *rest).transpose(1, 2).reshape(n, 2, c, *rest)
    return ComplexTensor(y[:, 0], y[:, 1])


def _block_weight(w_real: Tensor, w_imag: Tensor, groups: int, transposed: bool = False) -> Tensor:
    """Real weight acting on interleaved [re, im] channels as one complex product."""
    a, b = w_real.shape[:2]
    k = w_real.shape[2:]
    wr = w_real.reshape(groups, a // groups, b, *k)
    wi = w_imag.reshape(groups, a // groups, b, *k)
    if transposed:
        # rows index input channels: re rows -> (re out, im out), im rows -> (-im out, re out)
        block = torch.cat([torch.cat([wr, wi], 2), torch.cat([-wi, wr], 2)], 1)
    else:
        block = torch.cat([torch.cat([wr, -wi], 2), torch.cat([wi, wr], 2)], 1)
    return block.reshape(2 * a, 2 * b, *k)


def complex_conv2d(
    x: ComplexTensor,
    w_real: Tensor,
    w_imag: Tensor,
    b_real: Tensor | None = None,
    b_imag: Tensor | None = None,
    stride=1,
    dilation=1,
    groups: int = 1,
) -> ComplexTensor:
    """(W_r + jW_i) * (x_r + jx_i) with an optional complex bias. No padding.

    Evaluated as a single real convolution over interleaved real/imag channels.
    """
    y = F.conv2d(_interleave(x, groups), _block_weight(w_real, w_imag, groups), None, stride, 0, dilation, groups)
    y = _deinterleave(y, groups)
    if b_real is not None:
        y = ComplexTensor(y.real + b_real.view(1, -1, 1, 1), y.imag + b_imag.view(1, -1, 1, 1))
    return y


def _fold_bands(t: Tensor, groups: int) -> Tensor:
    # [N, C, T, F] -> [N, G*C, T, F/G], band-major channels
    n, c, tt, f = t.shape
    return t.reshape(n, c, tt, groups, f // groups).permute(0, 3, 1, 2, 4).reshape(n, groups * c, tt, f // groups)


def _unfold_bands(t: Tensor, groups: int) -> Tensor:
    n, gc, tt, fb = t.shape
    c = gc // groups
    return t.reshape(n, groups, c, tt, fb).permute(0, 2, 3, 1, 4).reshape(n, c, tt, groups * fb)


class ComplexConv2d(nn.Module):
    """Complex 2-D convolution, causal in time.

    ``kernel`` and ``stride`` are given as (frequency, time). Frequency is padded
    symmetrically so that stride 2 maps an even F to exactly F/2; time is padded
    with ``(k_t - 1) * dilation`` past frames only.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: tuple[int, int] = (1, 1),
        stride: tuple[int, int] = (1, 1),
        dilation: int = 1,
        groups: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        if in_channels % groups or out_channels % groups:
            raise ValueError(f"channels ({in_channels}, {out_channels}) not divisible by groups={groups}")
        if stride[1] != 1:
            raise ValueError("time stride must be 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.dilation = dilation
        self.groups = groups
        k_f, k_t = self.kernel
        self.pad_f = ((k_f - 1) // 2, k_f - 1 - (k_f - 1) // 2)
        self.context = (k_t - 1) * dilation
        shape = self._weight_shape()
        self.weight_real = nn.Parameter(torch.empty(shape))
        self.weight_imag = nn.Parameter(torch.empty(shape))
        if bias:
            n_bias = shape[0]
            self.bias_real = nn.Parameter(torch.zeros(n_bias))
            self.bias_imag = nn.Parameter(torch.zeros(n_bias))
        else:
            self.register_parameter("bias_real", None)
            self.register_parameter("bias_imag", None)
        self.reset_parameters()

    def _weight_shape(self):
        k_f, k_t = self.kernel
        return (self.out_channels, self.in_channels // self.groups, k_t, k_f)

    def _fan_in(self) -> int:
        k_f, k_t = self.kernel
        return self.in_channels // self.groups * k_f * k_t

    def reset_parameters(self):
        bound = 1.0 / math.sqrt(2 * self._fan_in())
        nn.init.uniform_(self.weight_real, -bound, bound)
        nn.init.uniform_(self.weight_imag, -bound, bound)

    def _pad(self, x: ComplexTensor, cache) -> ComplexTensor:
        x = _time_context(x, self.context, cache, self)
        if self.pad_f != (0, 0):
            x = x.map(lambda t: F.pad(t, self.pad_f))
        return x

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        x = self._pad(x, cache)
        return complex_conv2d(
            x,
            self.weight_real,
            self.weight_imag,
            self.bias_real,
            self.bias_imag,
            stride=(self.stride[1], self.stride[0]),
            dilation=(self.dilation, 1),
            groups=self.groups,
        )


class ComplexGroupConv2d(ComplexConv2d):
    """Sub-band complex convolution.

    The frequency axis is cut into ``groups`` contiguous bands and every band
    gets its own weights; nothing flows between bands. Within a band the
    channels are split into ``channel_groups`` groups (default ``groups``), so
    with the default the layer holds as many weights as an ordinary convolution
    with the same channel counts.
    """

    def __init__(self, in_channels, out_channels, kernel=(1, 1), stride=(1, 1), dilation=1, groups=1,
                 channel_groups=None, bias=True):
        self.bands = groups
        channel_groups = groups if channel_groups is None else channel_groups
        super().__init__(in_channels, out_channels, kernel, stride, dilation, channel_groups, bias)

    def _weight_shape(self):
        k_f, k_t = self.kernel
        return (self.bands * self.out_channels, self.in_channels // self.groups, k_t, k_f)

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        g = self.bands
        if g == 1:
            return super().forward(x, cache)
        if x.shape[-1] % g:
            raise ValueError(f"F={x.shape[-1]} not divisible by groups={g}")
        x = _time_context(x, self.context, cache, self)
        x = x.map(lambda t: _fold_bands(t, g))
        if self.pad_f != (0, 0):
            x = x.map(lambda t: F.pad(t, self.pad_f))
        y = complex_conv2d(
            x,
            self.weight_real,
            self.weight_imag,
            self.bias_real,
            self.bias_imag,
            stride=(1, self.stride[0]),
            dilation=(self.dilation, 1),
            groups=g * self.groups,
        )
        return y.map(lambda t: _unfold_bands(t, g))


class ComplexConvTranspose2d(nn.Module):
    """Causal complex transposed convolution upsampling frequency by ``stride[0]``.

    With ``groups > 1`` the same sub-band split as :class:`ComplexGroupConv2d`
    is used. Output frame t depends on input frames t-k_t+1 .. t.
    """

    def __init__(self, in_channels, out_channels, kernel=(5, 2), stride=(2, 1), groups: int = 1,
                 channel_groups: int | None = None, bias: bool = True):
        super().__init__()
        cg = groups if channel_groups is None else channel_groups
        if in_channels % cg or out_channels % cg:
            raise ValueError(f"channels ({in_channels}, {out_channels}) not divisible by groups={cg}")
        self.channel_groups = cg
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = tuple(kernel)
        self.stride = tuple(stride)
        self.groups = groups
        k_f, k_t = self.kernel
        s_f = self.stride[0]
        self.pad_f = (k_f - 1) // 2
        self.out_pad_f = s_f - k_f + 2 * self.pad_f
        if not 0 <= self.out_pad_f < s_f:
            raise ValueError(f"kernel {k_f} incompatible with stride {s_f}")
        self.context = k_t - 1
        shape = (groups * in_channels, out_channels // cg, k_t, k_f)
        self.weight_real = nn.Parameter(torch.empty(shape))
        self.weight_imag = nn.Parameter(torch.empty(shape))
        if bias:
            self.bias_real = nn.Parameter(torch.zeros(groups * out_channels))
            self.bias_imag = nn.Parameter(torch.zeros(groups * out_channels))
        else:
            self.register_parameter("bias_real", None)
            self.register_parameter("bias_imag", None)
        fan_in = in_channels // cg * k_f * k_t
        bound = 1.0 / math.sqrt(2 * fan_in)
        nn.init.uniform_(self.weight_real, -bound, bound)
        nn.init.uniform_(self.weight_imag, -bound, bound)

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        g = self.groups
        if x.shape[-1] % g:
            raise ValueError(f"F={x.shape[-1]} not divisible by groups={g}")
        frames = x.shape[2]
        x = _time_context(x, self.context, cache, self)
        if g > 1:
            x = x.map(lambda t: _fold_bands(t, g))
        groups = g * self.channel_groups
        w = _block_weight(self.weight_real, self.weight_imag, groups, transposed=True)
        y = F.conv_transpose2d(
            _interleave(x, groups), w, None, stride=(1, self.stride[0]), padding=(0, self.pad_f),
            output_padding=(0, self.out_pad_f), groups=groups,
        )
        real, imag = _deinterleave(y, groups)
        if self.bias_real is not None:
            real = real + self.bias_real.view(1, -1, 1, 1)
            imag = imag + self.bias_imag.view(1, -1, 1, 1)
        sl = slice(self.context, self.context + frames)
        y = ComplexTensor(real[:, :, sl], imag[:, :, sl])
        if g > 1:
            y = y.map(lambda t: _unfold_bands(t, g))
        return y


def pixel_shuffle_freq(x: Tensor, r: int) -> Tensor:
    """[N, C*r, T, F] -> [N, C, T, F*r] with out[c, f*r + k] = in[c*r + k, f]."""
    n, cr, t, f = x.shape
    if cr % r:
        raise ValueError(f"channel count {cr} not divisible by upscale {r}")
    c = cr // r
    return x.reshape(n, c, r, t, f).permute(0, 1, 3, 4, 2).reshape(n, c, t, f * r)


class ComplexPixelConv(nn.Module):
    """Complex convolution to ``r * out`` channels followed by a frequency sub-pixel shuffle.

    The convolution is ICNR-initialised (the r sub-kernels of each output
    channel start identical), so the untrained layer behaves like
    nearest-neighbour upsampling instead of producing a period-r pattern.
    """

    def __init__(self, in_channels: int, out_channels: int, upscale: int = 2, kernel=(3, 2)):
        super().__init__()
        self.upscale = upscale
        self.conv = ComplexConv2d(in_channels, out_channels * upscale, kernel)
        with torch.no_grad():
            for w in (self.conv.weight_real, self.conv.weight_imag):
                base = w[::upscale].clone()
                w.copy_(base.repeat_interleave(upscale, dim=0))

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        return self.conv(x, cache).map(lambda t: pixel_shuffle_freq(t, self.upscale))


class ComplexLayerNorm(nn.Module):
    """Per-frame normalisation over (channels, frequency), real and imag separately."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(2, channels))
        self.bias = nn.Parameter(torch.zeros(2, channels))

    def _norm(self, t: Tensor, i: int) -> Tensor:
        c, f = t.shape[1], t.shape[3]
        w = self.weight[i].view(c, 1).expand(c, f)
        b = self.bias[i].view(c, 1).expand(c, f)
        return F.layer_norm(t.transpose(1, 2), (c, f), w, b, self.eps).transpose(1, 2)

    def forward(self, x: ComplexTensor) -> ComplexTensor:
        return ComplexTensor(self._norm(x.real, 0), self._norm(x.imag, 1))


class ComplexBatchNorm(nn.Module):
    def __init__(self, channels: int, momentum: float = 0.1):
        super().__init__()
        self.bn_real = nn.BatchNorm2d(channels, momentum=momentum)
        self.bn_imag = nn.BatchNorm2d(channels, momentum=momentum)

    def forward(self, x: ComplexTensor) -> ComplexTensor:
        return ComplexTensor(self.bn_real(x.real), self.bn_imag(x.imag))


class ComplexPReLU(nn.Module):
    """PReLU with one learned slope per channel, separately for real and imag."""

    def __init__(self, channels: int, init: float = 0.25):
        super().__init__()
        self.weight = nn.Parameter(torch.full((2, channels), init))

    def forward(self, x: ComplexTensor) -> ComplexTensor:
        return ComplexTensor(F.prelu(x.real, self.weight[0]), F.prelu(x.imag, self.weight[1]))


class ComplexLSTM(nn.Module):
    """Recurrent bottleneck on stacked real/imag features.

    Input ``[N, T, D]`` complex is stacked to ``[N, T, 2D]``, run through a real
    LSTM, and projected back to ``2D`` by a fully connected layer. The final
    LSTM state is returned so a sequence can be processed in chunks.
    """

    def __init__(self, input_size: int, hidden_size: int = 256, num_layers: int = 1):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.lstm = nn.LSTM(2 * input_size, hidden_size, num_layers, batch_first=True)
        self.fc = nn.Linear(hidden_size, 2 * input_size)
        for name, p in self.lstm.named_parameters():
            if name.startswith("bias"):
                nn.init.zeros_(p)
        nn.init.zeros_(self.fc.bias)

    def forward(self, x: ComplexTensor, state: tuple[Tensor, Tensor] | None = None):
        if x.shape[-1] != self.input_size:
            raise ValueError(f"expected feature size {self.input_size}, got {x.shape[-1]}")
        if state is not None:
            expect = (self.num_layers, x.shape[0], self.hidden_size)
            if tuple(state[0].shape) != expect or tuple(state[1].shape) != expect:
                raise ValueError(f"state shape mismatch, expected {expect}")
        h, state = self.lstm(torch.cat([x.real, x.imag], -1), state)
        y = self.fc(h)
        return ComplexTensor(y[..., : self.input_size], y[..., self.input_size :]), state


class DilatedDenseBlock(nn.Module):
    """Densely connected stack of causal, time-dilated complex convolutions.

    Layer i sees the block input concatenated with all earlier layer outputs;
    each layer is conv -> LayerNorm -> PReLU and emits ``channels`` channels.
    """

    def __init__(self, channels: int, depth: int = 5, kernel=(3, 2), dilations: Sequence[int] = (1, 2, 4, 8, 16)):
        super().__init__()
        if len(dilations) != depth:
            raise ValueError("need one dilation per layer")
        if any(d <= 0 for d in dilations):
            raise ValueError("dilations must be positive")
        self.channels = channels
        self.kernel = tuple(kernel)
        self.dilations = tuple(dilations)
        self.convs = nn.ModuleList(
            ComplexConv2d(channels * (i + 1), channels, kernel, dilation=d) for i, d in enumerate(dilations)
        )
        self.norms = nn.ModuleList(ComplexLayerNorm(channels) for _ in dilations)
        self.acts = nn.ModuleList(ComplexPReLU(channels) for _ in dilations)

    @property
    def receptive_field(self) -> int:
        return 1 + sum(d * (self.kernel[1] - 1) for d in self.dilations)

    def forward(self, x: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        feats = [x]
        for conv, norm, act in zip(self.convs, self.norms, self.acts):
            y = act(norm(conv(ccat(feats), cache)))
            feats.append(y)
        return feats[-1]
