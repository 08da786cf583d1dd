import copy

import pytest
import torch

from oracles import impulse_probe
from sdccrn.codec import ComplexFeatureDecoder, ComplexFeatureEncoder
from sdccrn.complex_ops import ComplexConvTranspose2d, ComplexTensor


def cx(*shape, dtype=torch.float32):
    return ComplexTensor(torch.randn(*shape, dtype=dtype), torch.randn(*shape, dtype=dtype))


def zeros(*shape):
    return ComplexTensor(torch.zeros(*shape), torch.zeros(*shape))


def flat(y: ComplexTensor) -> torch.Tensor:
    return torch.stack([y.real, y.imag])


@pytest.fixture(scope="module")
def codec():
    # 16 complex channels = 32 real+imag feature maps
    return ComplexFeatureEncoder(16).eval(), ComplexFeatureDecoder(16).eval()


def test_shapes(codec):
    enc, dec = codec
    with torch.no_grad():
        z = enc(cx(1, 1, 198, 256))
        assert z.shape == (1, 16, 198, 128)
        assert dec(z).shape == (1, 1, 198, 256)


def test_round_trip_shape_small():
    enc, dec = ComplexFeatureEncoder(2, 16, 2, (3, 2), (1, 2)), ComplexFeatureDecoder(2, 16, 2, (3, 2), (1, 2))
    x = cx(3, 1, 7, 16)
    assert dec(enc(x)).shape == x.shape


def test_zero_in_zero_out(codec):
    enc, dec = codec
    with torch.no_grad():
        z = enc(zeros(1, 1, 20, 256))
        assert not z.real.any() and not z.imag.any()
        y = dec(zeros(1, 16, 20, 128))
        assert not y.real.any() and not y.imag.any()


def test_input_errors(codec):
    enc, dec = codec
    with pytest.raises(ValueError):
        enc(cx(1, 1, 4, 128))
    with pytest.raises(ValueError):
        enc(cx(1, 2, 4, 256))
    with pytest.raises(ValueError):
        dec(cx(1, 8, 4, 128))


@pytest.mark.parametrize("t", [0, 7, 30])
def test_causal(codec, t):
    enc, dec = codec
    with torch.no_grad():
        assert impulse_probe(lambda a: flat(enc(ComplexTensor(a[0], a[1]))), flat(cx(1, 1, 40, 256)), t, time_dim=3)
        assert impulse_probe(lambda a: flat(dec(ComplexTensor(a[0], a[1]))), flat(cx(1, 16, 40, 128)), t, time_dim=3)


def _period2_level(y: ComplexTensor) -> float:
    """Share of energy in the alternating (period-2) component along frequency, per frame."""
    z = torch.complex(y.real, y.imag).squeeze(1)
    spec = torch.fft.fft(z, dim=-1).abs() ** 2
    return (spec[..., z.shape[-1] // 2] / spec.sum(-1)).mean().item()


def _transposed_reference(dec: ComplexFeatureDecoder) -> ComplexFeatureDecoder:
    ref = copy.deepcopy(dec)
    ref.up = ComplexConvTranspose2d(dec.channels, dec.channels, (3, 2), (2, 1))
    return ref


def test_no_checkerboard_vs_transposed_reference():
    torch.manual_seed(0)
    ours, theirs = [], []
    for _ in range(4):
        dec = ComplexFeatureDecoder(8, 64, 2, (3, 2), (1, 2)).eval()
        ref = _transposed_reference(dec).eval()
        x = cx(4, 8, 10, 32)
        with torch.no_grad():
            ours.append(_period2_level(dec(x)))
            theirs.append(_period2_level(ref(x)))
    assert sum(ours) <= 3 * sum(theirs)
