"""Surrogate architectures (FNO, PFNO, ForwardNet) and input assembly.

Inputs are channel-first ``[C, n_z, n_x]`` stacks of velocity, x and z
coordinate planes, optionally followed by a one-hot source plane and a
constant frequency plane. Outputs have two channels, real and imaginary
parts of the frequency-domain wavefield.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, as_tensor, no_grad
from .autodiff import ops
from .autodiff.ops import BatchNormState
from .fdtd import SourceSpec
from .velocity import VelocityModel

WIDTH_BANDS = ((1, 15, 32), (16, 25, 64), (26, 30, 96))

# channel layout of assembled inputs
CH_V, CH_X, CH_Z, CH_SRC, CH_FREQ = range(5)


def width_for_frequency(f: float) -> int:
    """PFNO width rule: 32 up to 15 Hz, 64 up to 25 Hz, 96 up to 30 Hz."""
    for lo, hi, w in WIDTH_BANDS:
        if lo <= f <= hi:
            return w
    if 15 < f < 16:
        return 32
    if 25 < f < 26:
        return 64
    raise ValueError(f"frequency {f} Hz outside the width rule's 1-30 Hz bands")


# -- input assembly --------------------------------------------------------

@dataclass
class Normalization:
    """Affine per-channel maps ``(c - offset) / scale`` plus a label scale."""

    offset: list = field(default_factory=lambda: [0.0] * 5)
    scale: list = field(default_factory=lambda: [1.0] * 5)
    label_scale: float = 1.0

    @classmethod
    def fit(cls, raw_inputs: np.ndarray, labels: np.ndarray | None = None) -> "Normalization":
        """Zero-mean / unit-range statistics from raw ``[N, C, H, W]`` inputs."""
        C = raw_inputs.shape[1]
        offset, scale = [0.0] * 5, [1.0] * 5
        for c in range(C):
            if c == CH_SRC:
                continue
            vals = raw_inputs[:, c]
            offset[c] = float(vals.mean())
            span = float(vals.max() - vals.min())
            scale[c] = span if span > 0 else 1.0
        label_scale = 1.0
        if labels is not None:
            s = float(np.sqrt(np.mean(np.square(labels, dtype=np.float64))))
            label_scale = s if s > 0 else 1.0
        return cls(offset, scale, label_scale)

    def apply(self, raw: np.ndarray, channels: list[int] | None = None) -> np.ndarray:
        C = raw.shape[-3]
        channels = channels or list(range(C))
        out = np.empty_like(raw)
        for i, c in enumerate(channels):
            out[..., i, :, :] = (raw[..., i, :, :] - self.offset[c]) / self.scale[c]
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def assemble_input(v: VelocityModel, src: SourceSpec | None = None, freq: float | None = None,
                   normalization: Normalization | None = None, include_source: bool | None = None,
                   dtype=np.float32) -> np.ndarray:
    """Stack ``(v, x, z[, source, frequency])`` planes, channel-first.

    Both ``src`` and ``freq`` give the 5-channel layout; neither gives 3.
    ``include_source=True`` with ``freq=None`` gives the 4-channel PFNO layout.
    """
    if include_source is None:
        if (src is None) != (freq is None):
            raise ValueError("give both source and frequency, or neither")
        include_source = src is not None
    grid = v.grid
    xx, zz = grid.coordinates()
    planes = [v.values, xx, zz]
    if include_source:
        if src is None:
            raise ValueError("source plane requested without a source")
        iz, ix = src.node(grid)
        ind = np.zeros(grid.shape)
        ind[iz, ix] = 1.0
        planes.append(ind)
    if freq is not None:
        planes.append(np.full(grid.shape, float(freq)))
    raw = np.stack(planes).astype(dtype)
    if normalization is not None:
        raw = normalization.apply(raw).astype(dtype)
    return raw


# -- FNO -------------------------------------------------------------------

@dataclass
class FnoConfig:
    width: int = 32
    modes: int = 12
    layers: int = 4
    in_channels: int = 3
    out_channels: int = 2
    head_width: int = 128
    activation: str = "gelu"
    dtype: str = "float32"
    spectral: str = "dft"  # "dft": matmul on retained modes, "fft": full rfft2 route

    def __post_init__(self):
        if self.spectral not in ("dft", "fft"):
            raise ValueError(f"unknown spectral route {self.spectral!r}")
        if self.width <= 0 or self.modes <= 0 or self.layers <= 0:
            raise ValueError("width, modes and layers must be positive")
        if self.in_channels not in (3, 4, 5):
            raise ValueError(f"unsupported input channel count {self.in_channels}")


_ACTIVATIONS = {
    "gelu": ops.gelu,
    "identity": ops.identity,
    "leaky_relu": lambda t: ops.leaky_relu(t, 0.2),
}


def _uniform(rng, shape, bound, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class FNO:
    arch = "fno"

    def __init__(self, config: FnoConfig, seed: int = 0, prefix: str = ""):
        self.config = config
        self.prefix = prefix
        c = config
        dt = np.dtype(c.dtype)
        rng = np.random.default_rng([seed, 0x1A17])
        self.params: dict[str, Parameter] = {}

        def dense(name, n_in, n_out):
            b = 1.0 / np.sqrt(n_in)
            self._add(f"{name}.W", _uniform(rng, (n_in, n_out), b, dt))
            self._add(f"{name}.b", _uniform(rng, (n_out,), b, dt))

        dense("lift", c.in_channels, c.width)
        scale = 1.0 / (c.width * c.width)
        for i in range(c.layers):
            for part in ("R_pos", "R_neg"):
                w = scale * rng.uniform(0, 1, size=(c.modes, c.modes, c.width, c.width, 2))
                self._add(f"layer{i}.{part}", w.astype(dt))
            dense(f"layer{i}", c.width, c.width)
        dense("head1", c.width, c.head_width)
        dense("head2", c.head_width, c.out_channels)

    def _add(self, name, data):
        full = self.prefix + name
        self.params[full] = Parameter(data, full)

    def p(self, name) -> Parameter:
        return self.params[self.prefix + name]

    def parameters(self) -> dict[str, Parameter]:
        return self.params

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def fourier_layer(self, h: Tensor, i: int, activate: bool = True) -> Tensor:
        """``act(W h + b + irfft2(R . rfft2(h)))``."""
        spectral = self.spectral_branch(h, i)
        bypass = ops.channel_mix(h, self.p(f"layer{i}.W"), self.p(f"layer{i}.b"))
        out = ops.add(bypass, spectral)
        return _ACTIVATIONS[self.config.activation](out) if activate else out

    def spectral_branch(self, h: Tensor, i: int) -> Tensor:
        H, W = h.shape[-2:]
        R_pos, R_neg = self.p(f"layer{i}.R_pos"), self.p(f"layer{i}.R_neg")
        m = self.config.modes
        if m > (H + 1) // 2 or m > W // 2 + 1:
            raise ValueError(f"{m} modes exceed a {H}x{W} input")
        if self.config.spectral == "fft":
            return ops.irfft2(ops.mode_multiply(ops.rfft2(h), R_pos, R_neg), (H, W))
        spec = ops.mode_multiply(ops.dft_modes(h, m, m), R_pos, R_neg)
        return ops.idft_modes(spec, (H, W))

    def forward(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[1] != self.config.in_channels:
            raise ValueError(f"FNO expects {self.config.in_channels} channels, got {x.shape[1]}")
        act = _ACTIVATIONS[self.config.activation]
        h = ops.channel_mix(x, self.p("lift.W"), self.p("lift.b"))
        for i in range(self.config.layers):
            h = self.fourier_layer(h, i, activate=i < self.config.layers - 1)
        h = act(ops.channel_mix(h, self.p("head1.W"), self.p("head1.b")))
        return ops.channel_mix(h, self.p("head2.W"), self.p("head2.b"))

    __call__ = forward


def fno_parameter_count(cfg: FnoConfig) -> int:
    """Closed-form count of real scalars in an FNO (complex weights count twice)."""
    w, m = cfg.width, cfg.modes
    lift = cfg.in_channels * w + w
    per_layer = 2 * (2 * m * m * w * w) + (w * w + w)
    head = (w * cfg.head_width + cfg.head_width) + (cfg.head_width * cfg.out_channels + cfg.out_channels)
    return lift + cfg.layers * per_layer + head


# -- PFNO ------------------------------------------------------------------

@dataclass
class PfnoConfig:
    frequencies: list
    modes: int = 12
    layers: int = 4
    include_frequency_channel: bool = False
    head_width: int = 128
    activation: str = "gelu"
    dtype: str = "float32"
    widths: dict | None = None  # overrides the width rule, keyed by frequency

    def __post_init__(self):
        fs = [float(f) for f in self.frequencies]
        if len(set(fs)) != len(fs):
            raise ValueError("PFNO frequencies must be distinct")
        self.frequencies = fs
        if self.widths is not None:
            self.widths = {str(float(k)): int(v) for k, v in self.widths.items()}
        for f in fs:
            self.width_for(f)

    def width_for(self, f: float) -> int:
        if self.widths is None:
            return width_for_frequency(f)
        try:
            return self.widths[str(float(f))]
        except KeyError:
            raise ValueError(f"no width given for {f} Hz") from None

    def sub_config(self, f: float) -> FnoConfig:
        return FnoConfig(width=self.width_for(f), modes=self.modes, layers=self.layers,
                         in_channels=5 if self.include_frequency_channel else 4,
                         head_width=self.head_width, activation=self.activation, dtype=self.dtype)


def freq_key(f: float) -> str:
    return f"f{float(f):g}Hz"


class PFNO:
    """One FNO per frequency; samples are routed by their frequency."""

    arch = "pfno"

    def __init__(self, config: PfnoConfig, seed: int = 0):
        self.config = config
        self.subs: dict[float, FNO] = {}
        for j, f in enumerate(config.frequencies):
            self.subs[f] = FNO(config.sub_config(f), seed=seed + 7919 * (j + 1),
                               prefix=freq_key(f) + ".")

    def sub(self, f: float) -> FNO:
        try:
            return self.subs[float(f)]
        except KeyError:
            raise KeyError(f"PFNO has no sub-model for {f} Hz") from None

    def parameters(self) -> dict[str, Parameter]:
        out = {}
        for m in self.subs.values():
            out.update(m.parameters())
        return out

    def n_parameters(self) -> int:
        return sum(m.n_parameters() for m in self.subs.values())

    def forward_grouped(self, x: np.ndarray, freqs) -> np.ndarray:
        """Inference on a mixed batch: group by frequency, restore input order."""
        freqs = np.asarray(freqs, dtype=np.float64)
        out = None
        with no_grad():
            for f in np.unique(freqs):
                sel = np.nonzero(freqs == f)[0]
                y = self.sub(f).forward(Tensor(x[sel])).data
                if out is None:
                    out = np.empty((len(freqs),) + y.shape[1:], dtype=y.dtype)
                out[sel] = y
        return out


# -- ForwardNet ------------------------------------------------------------

ENCODER_TABLE = [
    # in, out, stride, padding, in_size, out_size
    (3, 32, 2, 1, 70, 35), (32, 32, 1, 1, 35, 35),
    (32, 64, 2, 1, 35, 18), (64, 64, 1, 1, 18, 18),
    (64, 128, 2, 1, 18, 9), (128, 128, 1, 1, 9, 9),
    (128, 256, 2, 1, 9, 5), (256, 256, 1, 1, 5, 5),
    (256, 512, 2, 1, 5, 3), (512, 512, 1, 1, 3, 3),
    (512, 512, 2, 0, 3, 1),
]

DECODER_TABLE = [
    # layer, in, out, scale, in_size, out_size
    ("up_conv", 512, 512, 5, 1, 5), ("conv", 512, 512, None, 5, 5),
    ("up_conv", 512, 256, 2, 5, 10), ("conv", 256, 256, None, 10, 10),
    ("up_conv", 256, 128, 2, 10, 20), ("conv", 128, 128, None, 20, 20),
    ("up_conv", 128, 64, 2, 20, 40), ("conv", 64, 64, None, 40, 40),
    ("up_conv", 64, 32, 2, 40, 80), ("conv", 32, 32, None, 80, 80),
    ("crop", None, None, None, 80, 70), ("conv", 32, 2, None, 70, 70),
]


@dataclass
class ForwardNetConfig:
    in_channels: int = 3
    out_channels: int = 2
    size: int = 70
    slope: float = 0.2
    dtype: str = "float32"


class ForwardNet:
    """Conv encoder to a 512x1x1 latent, nearest-upsampling decoder back to 70x70."""

    arch = "forwardnet"

    def __init__(self, config: ForwardNetConfig = ForwardNetConfig(), seed: int = 0):
        self.config = config
        self.training = True
        dt = np.dtype(config.dtype)
        rng = np.random.default_rng([seed, 0xF0D])
        self.params: dict[str, Parameter] = {}
        self.bn: dict[str, BatchNormState] = {}
        enc = [(config.in_channels if i == 0 else ci, co, s, p)
               for i, (ci, co, s, p, _, _) in enumerate(ENCODER_TABLE)]
        self.encoder = []
        for i, (ci, co, s, p) in enumerate(enc):
            name = f"enc{i}"
            self._conv(rng, name, ci, co, dt, bn=True)
            self.encoder.append((name, s, p))
        self.decoder = []
        for i, (kind, ci, co, scale, _, _) in enumerate(DECODER_TABLE):
            name = f"dec{i}"
            if kind == "crop":
                self.decoder.append((kind, name, None))
                continue
            last = i == len(DECODER_TABLE) - 1
            if last:
                co = config.out_channels
            self._conv(rng, name, ci, co, dt, bn=not last)
            self.decoder.append((kind, name, scale))

    def _conv(self, rng, name, ci, co, dt, bn):
        bound = 1.0 / np.sqrt(ci * 9)
        self.params[f"{name}.w"] = Parameter(_uniform(rng, (co, ci, 3, 3), bound, dt), f"{name}.w")
        self.params[f"{name}.b"] = Parameter(_uniform(rng, (co,), bound, dt), f"{name}.b")
        if bn:
            self.params[f"{name}.gamma"] = Parameter(np.ones(co, dtype=dt), f"{name}.gamma")
            self.params[f"{name}.beta"] = Parameter(np.zeros(co, dtype=dt), f"{name}.beta")
            self.bn[name] = BatchNormState(co, dtype=dt)

    def parameters(self):
        return self.params

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def _block(self, h, name, stride=1, padding=1):
        P = self.params
        h = ops.conv2d(h, P[f"{name}.w"], P[f"{name}.b"], stride, padding)
        if name in self.bn:
            h = ops.batchnorm2d(h, P[f"{name}.gamma"], P[f"{name}.beta"], self.bn[name], self.training)
            h = ops.leaky_relu(h, self.config.slope)
        return h

    def encode(self, x) -> Tensor:
        h = as_tensor(x)
        for name, s, p in self.encoder:
            h = self._block(h, name, s, p)
        return h

    def forward(self, x, trace: list | None = None) -> Tensor:
        h = as_tensor(x)
        if h.shape[1:] != (self.config.in_channels, self.config.size, self.config.size):
            raise ValueError(f"ForwardNet is fixed to {self.config.in_channels}x"
                             f"{self.config.size}x{self.config.size} inputs, got {h.shape[1:]}")
        for name, s, p in self.encoder:
            before = h.shape
            h = self._block(h, name, s, p)
            if trace is not None:
                trace.append(("conv", before[1], h.shape[1], s, p, before[2:], h.shape[2:]))
        for kind, name, scale in self.decoder:
            before = h.shape
            if kind == "crop":
                h = ops.crop_center(h, self.config.size, self.config.size)
            else:
                if kind == "up_conv":
                    h = ops.upsample_nearest(h, scale)
                h = self._block(h, name)
            if trace is not None:
                trace.append((kind, before[1], h.shape[1], scale, before[2:], h.shape[2:]))
        return h

    __call__ = forward


@dataclass
class ModelHandle:
    """A network together with the input/label normalization it was trained with."""

    arch: str
    net: object
    norm: Normalization = field(default_factory=Normalization)
    meta: dict = field(default_factory=dict)

    def parameters(self) -> dict[str, Parameter]:
        return self.net.parameters()

    def config_dict(self) -> dict:
        return model_config(self.net)

    def channels(self) -> list[int]:
        """Input channel ids (``CH_*``) this network consumes, in order."""
        if self.arch == "pfno":
            base = [CH_V, CH_X, CH_Z, CH_SRC]
            return base + [CH_FREQ] if self.net.config.include_frequency_channel else base
        n = self.net.config.in_channels
        return [CH_V, CH_X, CH_Z, CH_SRC, CH_FREQ][:n] if n != 4 else [CH_V, CH_X, CH_Z, CH_SRC]


def build_model(arch: str, config: dict, seed: int = 0):
    if arch == "fno":
        return FNO(FnoConfig(**config), seed=seed)
    if arch == "pfno":
        return PFNO(PfnoConfig(**config), seed=seed)
    if arch == "forwardnet":
        return ForwardNet(ForwardNetConfig(**config), seed=seed)
    raise ValueError(f"unknown architecture {arch!r}")


def model_config(model) -> dict:
    cfg = asdict(model.config)
    if isinstance(model, PFNO):
        # freeze the width rule's outcome so reloading never depends on the rule
        cfg["widths"] = {str(f): m.config.width for f, m in model.subs.items()}
    return cfg


def new_handle(arch: str, config: dict, seed: int = 0) -> ModelHandle:
    return ModelHandle(arch, build_model(arch, config, seed), meta={"init_seed": seed})
