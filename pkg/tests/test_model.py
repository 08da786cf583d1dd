import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from gradient_cases import TINY_ANALYSIS, tiny_model_spec
from oracles import impulse_probe
from sdccrn.complex_ops import ComplexConv2d, ComplexGroupConv2d, ComplexTensor
from sdccrn.dccrn import Dccrn, DccrnSpec, apply_crm, bounded_mask
from sdccrn.model import ModelSpec, build_model, parameter_breakdown, parameter_count


def cx(*shape, dtype=torch.float32):
    return ComplexTensor(torch.randn(*shape, dtype=dtype), torch.randn(*shape, dtype=dtype))


def flat(y):
    return torch.stack([y.real, y.imag])


@pytest.fixture(scope="module")
def default_model():
    torch.manual_seed(0)
    return build_model().eval()


@pytest.fixture(scope="module")
def baseline_model():
    torch.manual_seed(0)
    return build_model(ModelSpec.dccrn_baseline()).eval()


def test_default_parameter_count(default_model):
    n = parameter_count(default_model)
    assert abs(n - 2.34e6) <= 0.15 * 2.34e6
    assert sum(parameter_breakdown(default_model).values()) == n


def test_baseline_parameter_count(baseline_model):
    n = parameter_count(baseline_model)
    assert abs(n - 3.7e6) <= 0.15 * 3.7e6


def test_single_conv_parameter_count():
    assert parameter_count(ComplexConv2d(1, 1, (1, 1))) == 4


def test_default_bottleneck_sizes(default_model):
    for dccrn in (default_model.sub, default_model.full):
        assert dccrn.rnn.lstm.input_size == 256
        assert dccrn.rnn.lstm.hidden_size == 256
        assert tuple(dccrn.rnn.fc.weight.shape) == (256, 256)
        assert dccrn.freq_trace == (64, 32, 16, 8, 4, 2)
        assert dccrn.channel_trace == (16, 32, 32, 32, 64, 64)


def test_baseline_bottleneck_sizes(baseline_model):
    rnn = baseline_model.full.rnn
    assert rnn.lstm.input_size == 1024
    assert tuple(rnn.fc.weight.shape) == (1024, 256)
    assert baseline_model.full.freq_trace == (128, 64, 32, 16, 8, 4)


def test_subband_uses_two_groups(default_model):
    convs = [layer["conv"] for layer in default_model.sub.encoders]
    assert all(isinstance(c, ComplexGroupConv2d) and c.groups == 2 for c in convs)
    assert not any(isinstance(layer["conv"], ComplexGroupConv2d) for layer in default_model.full.encoders)


def test_dccrn_shapes(default_model):
    with torch.no_grad():
        y = default_model.sub(cx(1, 16, 198, 128))
        assert y.shape == (1, 16, 198, 128)
        m = default_model.full(cx(1, 32, 198, 128))
        assert m.shape == (1, 16, 198, 128)


def test_dccrn_zero_parameters_give_zero_mask():
    d = Dccrn(8, 4, 16, DccrnSpec(enc_channels=(4, 8), lstm_hidden=8)).eval()
    with torch.no_grad():
        for p in d.parameters():
            p.zero_()
        m = d(cx(2, 4, 5, 16))
    assert not m.real.any() and not m.imag.any()


@pytest.mark.parametrize("groups", [1, 2])
@pytest.mark.parametrize("t", [0, 4, 9])
def test_dccrn_causal(groups, t):
    d = Dccrn(4, 4, 16, DccrnSpec(enc_channels=(4, 8), groups=groups, lstm_hidden=8)).eval()
    with torch.no_grad():
        assert impulse_probe(lambda a: flat(d(ComplexTensor(a[0], a[1]))), flat(cx(2, 2, 12, 16)), t, time_dim=3)


def test_subband_encoder_group_isolation():
    d = Dccrn(4, 4, 16, DccrnSpec(enc_channels=(4, 8), groups=2, lstm_hidden=8)).eval()
    x = cx(1, 2, 6, 16)
    with torch.no_grad():
        for layer in d.encoders:
            conv = layer["conv"]
            y = conv(x)
            half_in, half_out = x.shape[-1] // 2, y.shape[-1] // 2
            z = ComplexTensor(x.real.clone(), x.imag.clone())
            z.real[..., half_in:] += torch.randn_like(z.real[..., half_in:])
            y2 = conv(z)
            assert torch.equal(y.real[..., :half_out], y2.real[..., :half_out])
            assert torch.equal(y.imag[..., :half_out], y2.imag[..., :half_out])
            x = layer["act"](layer["norm"](y))


def test_bad_frequency_split():
    with pytest.raises(ValueError):
        Dccrn(4, 4, 12, DccrnSpec(enc_channels=(4, 8, 8), groups=2))


def test_crm_examples():
    f = ComplexTensor(torch.tensor([1.0], dtype=torch.float64), torch.tensor([1.0], dtype=torch.float64))
    y = apply_crm(f, ComplexTensor(torch.tensor([1.0], dtype=torch.float64), torch.zeros(1, dtype=torch.float64)))
    assert (y.real.item(), y.imag.item()) == pytest.approx((0.761594, 0.761594), abs=1e-6)
    y = apply_crm(f, ComplexTensor(torch.zeros(1), torch.zeros(1)).map(lambda t: t.double()))
    assert y.real.item() == 0 and y.imag.item() == 0


def test_crm_saturates_to_identity():
    f = cx(3, 7, dtype=torch.float64)
    m = ComplexTensor(torch.full((3, 7), 20.0, dtype=torch.float64), torch.zeros(3, 7, dtype=torch.float64))
    y = apply_crm(f, m)
    err = ((y.real - f.real) ** 2 + (y.imag - f.imag) ** 2).sqrt()
    assert (err <= 1e-8 * (f.real**2 + f.imag**2).sqrt()).all()


@given(re=st.floats(-50, 50), im=st.floats(-50, 50))
def test_crm_magnitude_bounded(re, im):
    m = bounded_mask(ComplexTensor(torch.tensor([re], dtype=torch.float64), torch.tensor([im], dtype=torch.float64)))
    assert (m.real**2 + m.imag**2).sqrt().item() < 1 + 1e-12


def test_crm_shape_mismatch():
    with pytest.raises(ValueError):
        apply_crm(cx(2, 3), cx(2, 4))


def test_output_length_matches_input(default_model):
    x = 0.1 * torch.randn(32000)
    with torch.no_grad():
        assert default_model(x).shape == x.shape
        assert default_model(x[None].repeat(2, 1)).shape == (2, 32000)


def test_zeroed_projection_gives_silence():
    torch.manual_seed(0)
    model = build_model(ModelSpec.tiny()).eval()
    with torch.no_grad():
        for p in model.cfd.out.parameters():
            p.zero_()
        y = model(0.1 * torch.randn(16000))
    assert y.abs().max().item() == 0


def test_fresh_model_output_is_small():
    torch.manual_seed(0)
    model = build_model(ModelSpec.tiny()).eval()
    x = 0.1 * torch.randn(16000)
    with torch.no_grad():
        y = model(x)
    assert torch.isfinite(y).all()
    assert y.pow(2).mean() < x.pow(2).mean()


@pytest.mark.parametrize("spec", [tiny_model_spec(), tiny_model_spec(codec=False),
                                  ModelSpec(arch="dccrn", n_freq=16, compression="none", codec=False,
                                            full=DccrnSpec(enc_channels=(4, 4), lstm_hidden=4))])
def test_variants_are_causal(spec):
    model = build_model(spec, TINY_ANALYSIS).eval()
    x = torch.randn(1, 200, dtype=torch.float32)
    with torch.no_grad():
        for t in (0, 10, 19):
            # first sample that frames 0..t never read
            cut = t * TINY_ANALYSIS.hop + TINY_ANALYSIS.win_len
            y = x.clone()
            y[:, cut:] += torch.randn_like(y[:, cut:])
            a, b = model(x), model(y)
            # frame t is the last one whose overlap-add covers samples before t*hop + hop
            done = t * TINY_ANALYSIS.hop + TINY_ANALYSIS.hop
            assert torch.equal(a[:, :done], b[:, :done])


def test_ablation_variants_build():
    for spec in (ModelSpec(codec=False), ModelSpec(compression="fixed"), ModelSpec(compression="none")):
        model = build_model(spec)
        assert parameter_count(model) > 0
    with pytest.raises(ValueError):
        ModelSpec(arch="unet")
    with pytest.raises(ValueError):
        ModelSpec(compression="log")


def test_spec_dict_round_trip():
    spec = ModelSpec.tiny()
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_seeded_construction_is_deterministic():
    torch.manual_seed(3)
    a = build_model(ModelSpec.tiny())
    torch.manual_seed(3)
    b = build_model(ModelSpec.tiny())
    for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb and torch.equal(pa, pb)


def test_batchnorm_momentum_reaches_every_norm():
    spec = DccrnSpec(enc_channels=(8, 8, 16, 16, 16, 16), lstm_hidden=16, bn_momentum=0.01)
    net = Dccrn(2, 2, 64, spec)
    norms = [m for m in net.modules() if isinstance(m, torch.nn.BatchNorm2d)]
    assert norms and all(m.momentum == 0.01 for m in norms)
    assert DccrnSpec().bn_momentum == 0.1
    with pytest.raises(ValueError):
        DccrnSpec(bn_momentum=0.0)
