"""Generator and discriminator for multi-channel daily load profiles.

Both networks are 1-D convolutional stacks. The generator maps a
unit-norm latent vector through a dense layer onto ``base_len`` time-steps
of ``channels`` features, refines them with a conv/batch-norm block, then
doubles the temporal resolution ``n_blocks`` times (nearest-neighbour
upsampling followed by two length-preserving convolutions with batch norm),
and projects onto one output channel per appliance with a kernel-1
convolution. The discriminator mirrors this: kernel-1 input convolution,
``n_blocks`` stages of two convolutions followed by average-pool
downsampling, two final convolutions, and a dense layer to a single
unbounded score. The discriminator carries no batch norm.

All convolutions use symmetric zero padding of ``(kernel_len - 1) / 2`` so
temporal lengths change only at the explicit up/down-sampling steps:
``base_len * 2**i`` on the way up and the reverse on the way down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

OUTPUT_ACTIVATIONS = ("relu", "tanh")


class ShapeAuditError(RuntimeError):
    """A parameter tensor does not have the shape the architecture implies."""


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters; defaults are the full-scale settings."""

    n_blocks: int = 4
    latent_dim: int = 128
    base_len: int = 45
    channels: int = 512
    kernel_len: int = 15
    n_app: int = 2
    leaky_slope: float = 0.2
    output_activation: str = "relu"

    def __post_init__(self):
        if self.n_blocks < 1 or self.latent_dim < 1 or self.base_len < 1:
            raise ValueError("n_blocks, latent_dim and base_len must be >= 1")
        if self.channels < 1 or self.n_app < 1:
            raise ValueError("channels and n_app must be >= 1")
        if self.kernel_len % 2 != 1:
            raise ValueError("kernel_len must be odd for length-preserving padding")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def seq_len(self) -> int:
        return self.base_len * 2**self.n_blocks


def generator_lengths(cfg: ArchConfig) -> list[int]:
    """Temporal length after each generator stage, dense output first."""
    return [cfg.base_len * 2**i for i in range(cfg.n_blocks + 1)]


def discriminator_lengths(cfg: ArchConfig) -> list[int]:
    """Temporal length entering each discriminator stage, input first."""
    return [cfg.seq_len // 2**i for i in range(cfg.n_blocks + 1)]


def _conv(cfg: ArchConfig, in_channels: int, out_channels: int, kernel_len: int) -> nn.Conv1d:
    return nn.Conv1d(in_channels, out_channels, kernel_len, padding=(kernel_len - 1) // 2)


def _bn(cfg: ArchConfig) -> nn.BatchNorm1d:
    # momentum 0.1 means running <- 0.9 * running + 0.1 * batch per update;
    # eps small enough that normalized variance stays 1 within 1e-3 even for
    # the low-variance activations right after the dense layer
    return nn.BatchNorm1d(cfg.channels, eps=1e-8, momentum=0.1)


class GeneratorBase(nn.Module):
    """First generator block: batch norm and two convolutions at base_len."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.act = nn.LeakyReLU(cfg.leaky_slope)
        self.bn1 = _bn(cfg)
        self.conv1 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.bn2 = _bn(cfg)
        self.conv2 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.bn3 = _bn(cfg)

    def forward(self, x):
        x = self.act(self.bn1(x))
        x = self.act(self.bn2(self.conv1(x)))
        x = self.act(self.bn3(self.conv2(x)))
        return x


class GeneratorUp(nn.Module):
    """Upsampling block: nearest-neighbour x2, then two conv/bn stages."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.act = nn.LeakyReLU(cfg.leaky_slope)
        self.conv1 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.bn1 = _bn(cfg)
        self.conv2 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.bn2 = _bn(cfg)

    def forward(self, x):
        x = torch.repeat_interleave(x, 2, dim=-1)
        x = self.act(self.bn1(self.conv1(x)))
        x = self.act(self.bn2(self.conv2(x)))
        return x


class Generator(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.fc = nn.Linear(cfg.latent_dim, cfg.base_len * cfg.channels)
        self.base = GeneratorBase(cfg)
        self.up_blocks = nn.ModuleList(GeneratorUp(cfg) for _ in range(cfg.n_blocks))
        self.out_conv = nn.Conv1d(cfg.channels, cfg.n_app, 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise ShapeAuditError(
                f"latent batch must be [B, {self.cfg.latent_dim}], got {tuple(z.shape)}"
            )
        norms = z.double().norm(dim=1)
        if not bool(torch.all((norms - 1.0).abs() <= 1e-5)):
            raise ValueError("latent vectors entering the generator must be unit-norm")
        x = self.fc(z).view(z.shape[0], self.cfg.channels, self.cfg.base_len)
        x = self.base(x)
        for block in self.up_blocks:
            x = block(x)
        x = self.out_conv(x)
        if self.cfg.output_activation == "relu":
            return torch.relu(x)
        return torch.tanh(x)


class DiscriminatorDown(nn.Module):
    """Two convolutions followed by average-pool downsampling (x1/2)."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.act = nn.LeakyReLU(cfg.leaky_slope)
        self.conv1 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.conv2 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)

    def forward(self, x):
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        return nn.functional.avg_pool1d(x, 2)


class Discriminator(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.act = nn.LeakyReLU(cfg.leaky_slope)
        self.in_conv = nn.Conv1d(cfg.n_app, cfg.channels, 1)
        self.down_blocks = nn.ModuleList(DiscriminatorDown(cfg) for _ in range(cfg.n_blocks))
        self.final_conv1 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.final_conv2 = _conv(cfg, cfg.channels, cfg.channels, cfg.kernel_len)
        self.fc = nn.Linear(cfg.base_len * cfg.channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        expected = (self.cfg.n_app, self.cfg.seq_len)
        if x.ndim != 3 or tuple(x.shape[1:]) != expected:
            raise ShapeAuditError(
                f"input batch must be [B, {expected[0]}, {expected[1]}], got {tuple(x.shape)}"
            )
        x = self.act(self.in_conv(x))
        for block in self.down_blocks:
            x = block(x)
        x = self.act(self.final_conv1(x))
        x = self.act(self.final_conv2(x))
        return self.fc(x.flatten(1)).squeeze(-1)


class GanModel:
    """Generator/discriminator pair with its architecture descriptor."""

    def __init__(self, cfg: ArchConfig, dtype: torch.dtype = torch.float32, device=None):
        self.config = cfg
        if device == "meta":
            with torch.device("meta"):
                self.generator = Generator(cfg)
                self.discriminator = Discriminator(cfg)
        else:
            self.generator = Generator(cfg).to(dtype=dtype)
            self.discriminator = Discriminator(cfg).to(dtype=dtype)

    def named_tensors(self):
        for name, t in module_tensors(self.generator):
            yield "gen." + name, t
        for name, t in module_tensors(self.discriminator):
            yield "disc." + name, t


def module_tensors(module: nn.Module):
    """Named parameters plus float buffers (batch-norm counters excluded)."""
    yield from module.named_parameters()
    for name, buf in module.named_buffers():
        if not name.endswith("num_batches_tracked"):
            yield name, buf


def expected_shapes(cfg: ArchConfig) -> dict[str, tuple[int, ...]]:
    """Tensor shapes implied by the architecture, derived without a model."""
    c, k = cfg.channels, cfg.kernel_len
    shapes: dict[str, tuple[int, ...]] = {}

    def bn(prefix: str):
        for suffix in ("weight", "bias", "running_mean", "running_var"):
            shapes[f"{prefix}.{suffix}"] = (c,)

    def conv(prefix: str, in_ch: int, out_ch: int, kernel: int):
        shapes[f"{prefix}.weight"] = (out_ch, in_ch, kernel)
        shapes[f"{prefix}.bias"] = (out_ch,)

    shapes["gen.fc.weight"] = (cfg.base_len * c, cfg.latent_dim)
    shapes["gen.fc.bias"] = (cfg.base_len * c,)
    bn("gen.base.bn1")
    conv("gen.base.conv1", c, c, k)
    bn("gen.base.bn2")
    conv("gen.base.conv2", c, c, k)
    bn("gen.base.bn3")
    for i in range(cfg.n_blocks):
        conv(f"gen.up_blocks.{i}.conv1", c, c, k)
        bn(f"gen.up_blocks.{i}.bn1")
        conv(f"gen.up_blocks.{i}.conv2", c, c, k)
        bn(f"gen.up_blocks.{i}.bn2")
    conv("gen.out_conv", c, cfg.n_app, 1)

    conv("disc.in_conv", cfg.n_app, c, 1)
    for i in range(cfg.n_blocks):
        conv(f"disc.down_blocks.{i}.conv1", c, c, k)
        conv(f"disc.down_blocks.{i}.conv2", c, c, k)
    conv("disc.final_conv1", c, c, k)
    conv("disc.final_conv2", c, c, k)
    shapes["disc.fc.weight"] = (1, cfg.base_len * c)
    shapes["disc.fc.bias"] = (1,)
    return shapes


def shape_audit(model: GanModel) -> int:
    """Check every named tensor against :func:`expected_shapes`.

    Returns the number of audited tensors; raises :class:`ShapeAuditError`
    on any missing, extra, or mis-shaped tensor.
    """
    expected = expected_shapes(model.config)
    actual = {name: tuple(t.shape) for name, t in model.named_tensors()}
    missing = sorted(set(expected) - set(actual))
    extra = sorted(set(actual) - set(expected))
    if missing or extra:
        raise ShapeAuditError(f"tensor name mismatch: missing={missing} extra={extra}")
    bad = {n: (actual[n], expected[n]) for n in expected if actual[n] != expected[n]}
    if bad:
        raise ShapeAuditError(f"shape mismatch: {bad}")
    return len(expected)


def _glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_module(module: nn.Module, rng: np.random.Generator) -> None:
    """Glorot-uniform weights, zero biases, identity batch norm, in-place."""
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Conv1d):
                k = m.kernel_size[0]
                w = _glorot_uniform(tuple(m.weight.shape), m.in_channels * k, m.out_channels * k, rng)
                m.weight.copy_(torch.from_numpy(w))
                m.bias.zero_()
            elif isinstance(m, nn.Linear):
                w = _glorot_uniform(tuple(m.weight.shape), m.in_features, m.out_features, rng)
                m.weight.copy_(torch.from_numpy(w))
                m.bias.zero_()
            elif isinstance(m, nn.BatchNorm1d):
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.running_mean.zero_()
                m.running_var.fill_(1.0)
                m.num_batches_tracked.zero_()


def init_params(cfg: ArchConfig, seed: int, dtype: torch.dtype = torch.float32) -> GanModel:
    """Build a generator/discriminator pair, deterministically initialized.

    The generator's tensors are drawn first, then the discriminator's, both
    from one PCG64 stream seeded with ``seed``.
    """
    model = GanModel(cfg, dtype=dtype)
    rng = np.random.default_rng(seed)
    init_module(model.generator, rng)
    init_module(model.discriminator, rng)
    shape_audit(model)
    return model


def hypersphere_normalize(z: np.ndarray) -> np.ndarray:
    """Project latent vectors (rows) onto the unit sphere, in float64."""
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero latent vector")
    return z / norms


def generator_forward(gen: Generator, z: torch.Tensor, mode: str = "eval") -> torch.Tensor:
    """Run the generator in the given mode ('train' uses batch statistics)."""
    _set_mode(gen, mode)
    return gen(z)


def discriminator_forward(disc: Discriminator, x: torch.Tensor, mode: str = "eval") -> torch.Tensor:
    _set_mode(disc, mode)
    return disc(x)


def _set_mode(module: nn.Module, mode: str) -> None:
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    module.train(mode == "train")


class EmaState:
    """Exponential moving average of the generator's weights.

    Tracks parameters only; batch-norm running statistics stay with the
    live generator and are copied over when the averaged generator is
    materialized. Initialized to the live weights. The update realizes
    ``shadow <- decay * shadow + (1 - decay) * live`` in the delta form
    ``shadow += (1 - decay) * (live - shadow)`` so that an unchanged
    generator leaves the shadow bit-identical.
    """

    def __init__(self, generator: Generator, decay: float):
        if not 0.0 <= decay <= 1.0:
            raise ValueError("ema decay must lie in [0, 1]")
        self.decay = decay
        self.shadow = {
            name: p.detach().clone() for name, p in generator.named_parameters()
        }

    def update(self, generator: Generator) -> None:
        with torch.no_grad():
            for name, live in generator.named_parameters():
                shadow = self.shadow.get(name)
                if shadow is None or shadow.shape != live.shape:
                    raise ShapeAuditError(f"EMA shadow mismatch for {name}")
                if self.decay == 0.0:
                    shadow.copy_(live)
                elif self.decay < 1.0:
                    shadow.add_(live - shadow, alpha=1.0 - self.decay)

    def build_generator(self, cfg: ArchConfig, source: Generator) -> Generator:
        """Fresh eval-mode generator: averaged weights, ``source``'s buffers."""
        gen = Generator(cfg).to(dtype=next(iter(self.shadow.values())).dtype)
        with torch.no_grad():
            for name, p in gen.named_parameters():
                p.copy_(self.shadow[name])
            source_buffers = dict(source.named_buffers())
            for name, b in gen.named_buffers():
                b.copy_(source_buffers[name])
        gen.eval()
        return gen
