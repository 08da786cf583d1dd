"""Model assembly: S-DCCRN (and its ablations) and the baseline DCCRN."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from torch import Tensor, nn

from .codec import ComplexFeatureDecoder, ComplexFeatureEncoder
from .complex_ops import ComplexTensor, ccat
from .dccrn import Dccrn, DccrnSpec, apply_crm
from .frontend import AnalysisConfig, LearnableCompression, istft, stft


@dataclass
class ModelSpec:
    """Architecture description.

    ``arch="sdccrn"`` is the cascaded sub-band/full-band model; switching off
    ``codec`` or setting ``compression`` to ``"fixed"``/``"none"`` gives the
    ablation variants. ``arch="dccrn"`` is a single full-band DCCRN masking the
    raw STFT, built from ``full``.
    """

    arch: str = "sdccrn"
    n_freq: int = 256
    compression: str = "learnable"
    fixed_alpha: float = 0.5
    codec: bool = True
    codec_channels: int = 32
    dense_depth: int = 5
    dense_kernel: tuple[int, int] = (3, 2)
    dense_dilations: tuple[int, ...] = (1, 2, 4, 8, 16)
    cfe_kernel: tuple[int, int] = (3, 2)
    pixel_kernel: tuple[int, int] = (3, 2)
    sub: DccrnSpec = field(default_factory=lambda: DccrnSpec(groups=2))
    full: DccrnSpec = field(default_factory=DccrnSpec)

    def __post_init__(self):
        if isinstance(self.sub, dict):
            self.sub = DccrnSpec(**self.sub)
        if isinstance(self.full, dict):
            self.full = DccrnSpec(**self.full)
        self.dense_kernel = tuple(self.dense_kernel)
        self.dense_dilations = tuple(self.dense_dilations)
        self.cfe_kernel = tuple(self.cfe_kernel)
        self.pixel_kernel = tuple(self.pixel_kernel)
        if self.arch not in ("sdccrn", "dccrn"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.compression not in ("learnable", "fixed", "none"):
            raise ValueError(f"unknown compression {self.compression!r}")

    @classmethod
    def dccrn_baseline(cls) -> "ModelSpec":
        return cls(
            arch="dccrn",
            compression="none",
            codec=False,
            full=DccrnSpec(enc_channels=(16, 32, 64, 128, 256, 256), lstm_layers=2, pathway=False),
        )

    @classmethod
    def tiny(cls, n_freq: int = 256) -> "ModelSpec":
        """Desk-scale S-DCCRN used for smoke and toy training runs."""
        return cls(
            n_freq=n_freq,
            codec_channels=8,
            sub=DccrnSpec(enc_channels=(16, 16, 32, 32, 32, 32), groups=2, lstm_hidden=64),
            full=DccrnSpec(enc_channels=(16, 16, 32, 32, 32, 32), lstm_hidden=64),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class SDCCRN(nn.Module):
    """noisy waveform -> enhanced waveform.

    STFT -> compression -> encoder -> sub-band DCCRN -> concat with encoded
    feature -> full-band DCCRN (mask) -> masked feature -> decoder ->
    decompression -> iSTFT.
    """

    def __init__(self, spec: ModelSpec = ModelSpec(), cfg: AnalysisConfig = AnalysisConfig()):
        super().__init__()
        if spec.n_freq != cfg.n_freq:
            raise ValueError(f"model expects {spec.n_freq} bins but analysis gives {cfg.n_freq}")
        self.spec = spec
        self.cfg = cfg
        n_freq = spec.n_freq
        if spec.compression == "learnable":
            self.lsc = LearnableCompression(n_freq)
        elif spec.compression == "fixed":
            self.lsc = LearnableCompression(n_freq, fixed_alpha=spec.fixed_alpha)
        else:
            self.lsc = None

        if spec.arch == "dccrn":
            self.cfe = self.cfd = self.sub = None
            self.full = Dccrn(2, 2, n_freq, spec.full)
            return

        if spec.codec:
            cc = spec.codec_channels // 2
            kw = dict(depth=spec.dense_depth, dense_kernel=spec.dense_kernel, dilations=spec.dense_dilations)
            self.cfe = ComplexFeatureEncoder(cc, n_freq, out_kernel=spec.cfe_kernel, **kw)
            self.cfd = ComplexFeatureDecoder(cc, n_freq, pixel_kernel=spec.pixel_kernel, **kw)
            latent_ch, latent_freq = spec.codec_channels, n_freq // 2
        else:
            self.cfe = self.cfd = None
            latent_ch, latent_freq = 2, n_freq
        self.sub = Dccrn(latent_ch, latent_ch, latent_freq, spec.sub)
        self.full = Dccrn(2 * latent_ch, latent_ch, latent_freq, spec.full)

    def enhance_spectrum(self, spec: ComplexTensor, cache: dict | None = None) -> ComplexTensor:
        """[N, T, F] noisy spectrum -> [N, T, F] enhanced (linear domain)."""
        x = spec.map(lambda t: t.unsqueeze(1))
        if self.lsc is not None:
            x = self.lsc.compress(x)
        if self.spec.arch == "dccrn":
            y = apply_crm(x, self.full(x, cache))
        else:
            feat = self.cfe(x, cache) if self.cfe is not None else x
            sub = self.sub(feat, cache)
            mask = self.full(ccat([sub, feat]), cache)
            y = apply_crm(feat, mask)
            if self.cfd is not None:
                y = self.cfd(y, cache)
        if self.lsc is not None:
            y = self.lsc.decompress(y)
        return y.map(lambda t: t.squeeze(1))

    def forward(self, wave: Tensor) -> Tensor:
        squeeze = wave.dim() == 1
        if squeeze:
            wave = wave.unsqueeze(0)
        spec = stft(wave, self.cfg)
        out = istft(self.enhance_spectrum(spec), self.cfg, wave.shape[-1])
        return out.squeeze(0) if squeeze else out


def build_model(spec: ModelSpec = ModelSpec(), cfg: AnalysisConfig = AnalysisConfig()) -> SDCCRN:
    return SDCCRN(spec, cfg)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_breakdown(model: nn.Module) -> dict[str, int]:
    out: dict[str, int] = {}
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        out[top] = out.get(top, 0) + p.numel()
    return out
