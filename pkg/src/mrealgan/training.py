"""Adversarial training: objective, optimizer, train step, checkpointing.

The discriminator maximizes the score gap between real and generated
minibatches (an empirical Wasserstein-1 surrogate) subject to two
penalties: a one-sided gradient penalty on interpolated samples, scaled by
the positive part of the current score gap, and a drift penalty on the
squared sum of the mean real and fake scores. The generator minimizes the
mean discriminator score of its (augmented) output. Updates use RMSProp
with the accumulator form ``a <- s*a + (1-s)*g^2; p <- p - lr*g/sqrt(a+eps)``.

One train step runs ``n_dstep`` discriminator updates followed by one
generator update and one EMA update. All samples scored by the
discriminator, real and generated alike, are augmented with one
step-shared circular time-shift and per-sample noise (see ``augment``).

Randomness is organized as named, separately seeded streams, each consumed
in a fixed per-step order regardless of how the arithmetic is batched:

* ``shift``: one time-shift draw per step;
* ``data``: epoch reshuffles of the real-sample ordering;
* ``latent``: one standard-normal batch per generator call;
* ``noise_scale``: per sample, one draw for each augmented batch it is in
  (real and fake per discriminator update, fake in the generator update);
* ``epsilon``: one interpolation weight per sample per discriminator update;
* ``noise``: one standard-normal batch per augmented batch.

Streams live on the train state and can be swapped for instrumented
stand-ins by tests. Checkpoints capture parameters, optimizer
accumulators, the EMA shadow, normalization stats, every RNG stream state,
and the sampler position, so a resumed run reproduces the uninterrupted
trajectory bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from . import augment
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import LoadDataset, NormStats, compute_stats, normalize
from .model import (
    ArchConfig,
    EmaState,
    GanModel,
    hypersphere_normalize,
    init_params,
    shape_audit,
)

STREAM_NAMES = ("shift", "noise_scale", "noise", "epsilon", "latent", "data")

# Hyperparameters that determine the training trajectory; a resumed run
# must agree with the checkpoint on all of them.
_TRAJECTORY_FIELDS = (
    "lambda_gp",
    "beta_drift",
    "learning_rate",
    "minibatch",
    "n_dstep",
    "aug_rho",
    "aug_eta",
    "ema_decay",
    "rmsprop_smoothing",
    "rmsprop_epsilon",
    "seed",
)


class TrainingError(RuntimeError):
    pass


class TrainingDivergedError(TrainingError):
    """A loss or gradient went non-finite; the last checkpoint is kept."""


@dataclass(frozen=True)
class TrainConfig:
    lambda_gp: float = 10.0
    beta_drift: float = 1e-3
    learning_rate: float = 1e-5
    minibatch: int = 64
    n_dstep: int = 5
    total_steps: int = 100_000
    aug_rho: float = 1024.0
    aug_eta: float = 200.0
    ema_decay: float = 0.999
    rmsprop_smoothing: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if self.minibatch < 2:
            raise ValueError("minibatch must be >= 2")
        if self.n_dstep < 1 or self.total_steps < 0 or self.checkpoint_interval < 1:
            raise ValueError("n_dstep, total_steps, checkpoint_interval out of range")
        if self.lambda_gp < 0 or self.beta_drift < 0 or self.learning_rate < 0:
            raise ValueError("penalty weights and learning rate must be >= 0")
        if self.aug_rho <= 0 or self.aug_eta <= 0:
            raise ValueError("aug_rho and aug_eta must be > 0")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")
        if not 0.0 <= self.rmsprop_smoothing < 1.0 or self.rmsprop_epsilon <= 0:
            raise ValueError("invalid RMSProp settings")


@dataclass
class StepReport:
    w_tilde: float
    grad_penalty: float
    drift_penalty: float
    gen_loss: float
    step: int


def _check_scores(d_real: torch.Tensor, d_fake: torch.Tensor) -> None:
    if d_real.numel() == 0 or d_fake.numel() == 0:
        raise ValueError("score batches must be nonempty")
    if d_real.shape != d_fake.shape:
        raise ValueError("real and fake score batches must have equal size")


def w_distance(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Mean real score minus mean fake score."""
    _check_scores(d_real, d_fake)
    return d_real.mean() - d_fake.mean()


def drift_penalty(d_real: torch.Tensor, d_fake: torch.Tensor, beta_drift: float) -> torch.Tensor:
    """``beta * (mean(d_real) + mean(d_fake))^2``."""
    _check_scores(d_real, d_fake)
    return beta_drift * (d_real.mean() + d_fake.mean()) ** 2


def interpolate(x_real: torch.Tensor, x_fake: torch.Tensor, epsilon) -> torch.Tensor:
    """Per-sample convex combination ``eps*x_real + (1-eps)*x_fake``."""
    if x_real.shape != x_fake.shape:
        raise ValueError("interpolation endpoints must have equal shapes")
    if torch.is_tensor(epsilon):
        if epsilon.numel() != x_real.shape[0]:
            raise ValueError("need one epsilon per sample")
        if bool((epsilon < 0).any()) or bool((epsilon > 1).any()):
            raise ValueError("epsilon must lie in [0, 1]")
        eps = epsilon.view(-1, *([1] * (x_real.ndim - 1))).to(x_real.dtype)
    else:
        if not 0.0 <= float(epsilon) <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        eps = float(epsilon)
    return eps * x_real + (1 - eps) * x_fake


def gradient_penalty(disc, x_hat: torch.Tensor, w_tilde, lambda_gp: float) -> torch.Tensor:
    """One-sided gradient penalty scaled by the positive part of the gap.

    The gradient norm is taken over all input coordinates of one sample.
    Zero whenever ``w_tilde <= 0``.
    """
    if not x_hat.requires_grad:
        x_hat = x_hat.detach().requires_grad_(True)
    scores = disc(x_hat)
    grads = torch.autograd.grad(scores.sum(), x_hat, create_graph=True)[0]
    if not bool(torch.isfinite(grads.detach()).all()):
        raise TrainingDivergedError("non-finite discriminator input gradient")
    norms = grads.flatten(1).norm(2, dim=1)
    excess = (norms - 1.0).clamp(min=0.0)
    scale = w_tilde.clamp(min=0.0) if torch.is_tensor(w_tilde) else max(0.0, float(w_tilde))
    return lambda_gp * scale * (excess**2).mean()


def rmsprop_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    accumulator: torch.Tensor,
    lr: float,
    smoothing: float,
    eps: float,
) -> None:
    """In-place RMSProp step with the epsilon inside the square root."""
    if grad.shape != param.shape or accumulator.shape != param.shape:
        raise ValueError("parameter, gradient and accumulator shapes must match")
    accumulator.mul_(smoothing).addcmul_(grad, grad, value=1.0 - smoothing)
    param.sub_(lr * grad / torch.sqrt(accumulator + eps))


class RmsProp:
    """Name-keyed RMSProp over a module's parameters."""

    def __init__(self, named_params: dict[str, torch.Tensor], lr: float, smoothing: float, eps: float):
        self.params = dict(named_params)
        self.lr = lr
        self.smoothing = smoothing
        self.eps = eps
        self.acc = {name: torch.zeros_like(p) for name, p in self.params.items()}

    def step(self, grads: dict[str, torch.Tensor]) -> None:
        with torch.no_grad():
            for name, param in self.params.items():
                rmsprop_update(param, grads[name], self.acc[name], self.lr, self.smoothing, self.eps)


@dataclass
class RngStreams:
    shift: np.random.Generator
    noise_scale: np.random.Generator
    noise: np.random.Generator
    epsilon: np.random.Generator
    latent: np.random.Generator
    data: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
        return cls(*(np.random.Generator(np.random.PCG64(c)) for c in children))

    def state(self) -> dict:
        return {name: getattr(self, name).bit_generator.state for name in STREAM_NAMES}

    @classmethod
    def from_state(cls, state: dict) -> "RngStreams":
        streams = []
        for name in STREAM_NAMES:
            bg = np.random.PCG64()
            bg.state = state[name]
            streams.append(np.random.Generator(bg))
        return cls(*streams)


class EpochSampler:
    """Sequential minibatches over a shuffled epoch ordering.

    Reshuffles whenever the permutation is exhausted; a minibatch may span
    the epoch boundary so no sample is dropped.
    """

    def __init__(self, n_samples: int, rng: np.random.Generator, state: dict | None = None):
        if n_samples < 1:
            raise ValueError("need at least one sample")
        self.n_samples = n_samples
        self.rng = rng
        if state is None:
            self.perm = rng.permutation(n_samples)
            self.pos = 0
        else:
            self.restore(state)

    def next_batch(self, size: int) -> np.ndarray:
        out = np.empty(size, dtype=np.int64)
        filled = 0
        while filled < size:
            if self.pos == self.n_samples:
                self.perm = self.rng.permutation(self.n_samples)
                self.pos = 0
            take = min(size - filled, self.n_samples - self.pos)
            out[filled : filled + take] = self.perm[self.pos : self.pos + take]
            self.pos += take
            filled += take
        return out

    def state(self) -> dict:
        return {"perm": self.perm.tolist(), "pos": self.pos}

    def restore(self, state: dict) -> None:
        self.perm = np.asarray(state["perm"], dtype=np.int64)
        self.pos = int(state["pos"])
        if self.perm.shape[0] != self.n_samples:
            raise CheckpointError("sampler permutation does not match the dataset size")


@dataclass
class TrainState:
    config: TrainConfig
    arch: ArchConfig
    model: GanModel
    ema: EmaState
    opt_g: RmsProp
    opt_d: RmsProp
    rngs: RngStreams
    sampler: EpochSampler
    data: torch.Tensor
    stats: NormStats
    step: int = 0


def _prepare_dataset(ds: LoadDataset) -> LoadDataset:
    if ds.normalized:
        if ds.stats is None:
            raise TrainingError("normalized dataset is missing its stats")
        return ds
    return normalize(ds, compute_stats(ds))


def init_train_state(
    config: TrainConfig,
    ds: LoadDataset,
    arch: ArchConfig | None = None,
    dtype: torch.dtype = torch.float32,
) -> TrainState:
    """Fresh training state on a dataset (normalized here if raw)."""
    arch = arch or ArchConfig()
    ds = _prepare_dataset(ds)
    if ds.n_app != arch.n_app:
        raise TrainingError(f"dataset has {ds.n_app} appliances, architecture expects {arch.n_app}")
    if ds.n_steps != arch.seq_len:
        raise TrainingError(f"dataset day length {ds.n_steps} != architecture length {arch.seq_len}")
    model = init_params(arch, config.seed, dtype=dtype)
    rngs = RngStreams.from_seed(config.seed)
    return TrainState(
        config=config,
        arch=arch,
        model=model,
        ema=EmaState(model.generator, config.ema_decay),
        opt_g=RmsProp(
            dict(model.generator.named_parameters()),
            config.learning_rate,
            config.rmsprop_smoothing,
            config.rmsprop_epsilon,
        ),
        opt_d=RmsProp(
            dict(model.discriminator.named_parameters()),
            config.learning_rate,
            config.rmsprop_smoothing,
            config.rmsprop_epsilon,
        ),
        rngs=rngs,
        sampler=EpochSampler(len(ds), rngs.data),
        data=torch.from_numpy(ds.stack()).to(dtype),
        stats=ds.stats,
        step=0,
    )


def _draw_latents(state: TrainState, count: int) -> torch.Tensor:
    z = state.rngs.latent.standard_normal((count, state.arch.latent_dim))
    return torch.from_numpy(hypersphere_normalize(z)).to(state.data.dtype)


def _draw_scales(state: TrainState, count: int) -> torch.Tensor:
    draws = [
        augment.sample_noise_scale(state.config.aug_eta, state.rngs.noise_scale)
        for _ in range(count)
    ]
    return torch.tensor(draws, dtype=state.data.dtype)


def _draw_noise(state: TrainState, count: int) -> torch.Tensor:
    q = state.rngs.noise.standard_normal((count, state.arch.n_app, state.arch.seq_len))
    return torch.from_numpy(q).to(state.data.dtype)


def _augmented_fake(state: TrainState, delta: int, count: int) -> torch.Tensor:
    """Generate, then shift/noise, a fake batch; differentiable through G."""
    z = _draw_latents(state, count)
    fake = state.model.generator(z)
    scales = _draw_scales(state, count)
    return augment.augment_batch(fake, delta, scales, _draw_noise(state, count))


def _require_finite(value: torch.Tensor, what: str, step: int) -> None:
    if not bool(torch.isfinite(value.detach()).all()):
        raise TrainingDivergedError(f"{what} became non-finite at step {step}")


def train_step(state: TrainState) -> StepReport:
    """One full step: n_dstep discriminator updates, one generator update,
    one EMA update."""
    cfg = state.config
    gen, disc = state.model.generator, state.model.discriminator
    gen.train()
    disc.train()
    m = cfg.minibatch
    delta = augment.sample_shift(cfg.aug_rho, state.rngs.shift)

    w_val = gp_val = drift_val = 0.0
    for _ in range(cfg.n_dstep):
        idx = state.sampler.next_batch(m)
        real = state.data[torch.from_numpy(idx)]
        with torch.no_grad():
            fake = state.model.generator(_draw_latents(state, m))
        real_aug = augment.augment_batch(real, delta, _draw_scales(state, m), _draw_noise(state, m))
        fake_aug = augment.augment_batch(fake, delta, _draw_scales(state, m), _draw_noise(state, m))
        eps = torch.tensor([state.rngs.epsilon.random() for _ in range(m)], dtype=real.dtype)
        x_hat = interpolate(real_aug, fake_aug, eps).detach().requires_grad_(True)

        d_real = disc(real_aug)
        d_fake = disc(fake_aug)
        w = w_distance(d_real, d_fake)
        gp = gradient_penalty(disc, x_hat, w, cfg.lambda_gp)
        drift = drift_penalty(d_real, d_fake, cfg.beta_drift)
        loss_d = -w + gp + drift
        _require_finite(loss_d, "discriminator loss", state.step)
        grads = torch.autograd.grad(loss_d, list(state.opt_d.params.values()))
        state.opt_d.step(dict(zip(state.opt_d.params, grads)))
        w_val, gp_val, drift_val = w.item(), gp.item(), drift.item()

    fake_aug = _augmented_fake(state, delta, m)
    loss_g = -disc(fake_aug).mean()
    _require_finite(loss_g, "generator loss", state.step)
    grads = torch.autograd.grad(loss_g, list(state.opt_g.params.values()))
    state.opt_g.step(dict(zip(state.opt_g.params, grads)))

    state.ema.update(gen)
    state.step += 1
    return StepReport(
        w_tilde=w_val,
        grad_penalty=gp_val,
        drift_penalty=drift_val,
        gen_loss=loss_g.item(),
        step=state.step,
    )


# --- checkpoint plumbing -------------------------------------------------


def save_train_state(state: TrainState, path) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name, t in state.model.named_tensors():
        tensors[name] = t.detach().cpu().numpy()
    for name, t in state.ema.shadow.items():
        tensors["ema." + name] = t.cpu().numpy()
    for name, t in state.opt_g.acc.items():
        tensors["opt_g." + name] = t.cpu().numpy()
    for name, t in state.opt_d.acc.items():
        tensors["opt_d." + name] = t.cpu().numpy()
    meta = {
        "format": 1,
        "step": state.step,
        "arch": asdict(state.arch),
        "train_config": asdict(state.config),
        "norm_stats": {
            "scheme": state.stats.scheme,
            "per_appliance_sigma": [float(s) for s in state.stats.per_appliance_sigma],
        },
        "rng": state.rngs.state(),
        "sampler": state.sampler.state(),
        "ema_decay": state.ema.decay,
    }
    save_checkpoint(path, tensors, meta)


def _copy_group(tensors: dict[str, np.ndarray], prefix: str, targets) -> None:
    with torch.no_grad():
        for name, t in targets:
            key = prefix + name
            if key not in tensors:
                raise CheckpointError(f"checkpoint is missing tensor {key}")
            arr = tensors[key]
            if tuple(arr.shape) != tuple(t.shape):
                raise CheckpointError(f"checkpoint tensor {key} has shape {arr.shape}")
            t.copy_(torch.from_numpy(arr.copy()))


def load_train_state(path, ds: LoadDataset) -> TrainState:
    """Rebuild a full training state from a checkpoint plus the dataset."""
    tensors, meta = load_checkpoint(path)
    if meta.get("format") != 1:
        raise CheckpointError("unsupported checkpoint format")
    arch = ArchConfig(**meta["arch"])
    config = TrainConfig(**meta["train_config"])
    ds = _prepare_dataset(ds)
    stored = np.asarray(meta["norm_stats"]["per_appliance_sigma"], dtype=np.float64)
    if ds.stats.scheme != meta["norm_stats"]["scheme"] or not np.array_equal(
        stored, ds.stats.per_appliance_sigma
    ):
        raise CheckpointError("dataset normalization stats do not match the checkpoint")

    state = init_train_state(config, ds, arch=arch)
    _copy_group(tensors, "", state.model.named_tensors())
    _copy_group(tensors, "ema.", state.ema.shadow.items())
    _copy_group(tensors, "opt_g.", state.opt_g.acc.items())
    _copy_group(tensors, "opt_d.", state.opt_d.acc.items())
    state.rngs = RngStreams.from_state(meta["rng"])
    state.sampler = EpochSampler(len(ds), state.rngs.data, state=meta["sampler"])
    state.step = int(meta["step"])
    return state


def _check_resume_config(config: TrainConfig, stored: TrainConfig) -> None:
    for name in _TRAJECTORY_FIELDS:
        if getattr(config, name) != getattr(stored, name):
            raise TrainingError(
                f"resume config disagrees with checkpoint on {name}: "
                f"{getattr(config, name)} != {getattr(stored, name)}"
            )


def train(
    config: TrainConfig,
    ds: LoadDataset,
    out_dir,
    arch: ArchConfig | None = None,
    resume=None,
    log_name: str = "training_log.csv",
) -> Path:
    """Run ``total_steps`` train steps, checkpointing periodically.

    Returns the path of the final checkpoint, whose EMA tensors are the
    evaluation generator. With ``resume``, continues a stored run; the
    subsequent trajectory is identical to an uninterrupted one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / log_name

    if resume is not None:
        state = load_train_state(resume, ds)
        _check_resume_config(config, state.config)
        # run control (total steps, checkpoint cadence) follows the caller
        state.config = config
        if not log_path.exists():
            _write_log_header(log_path)
    else:
        state = init_train_state(config, ds, arch=arch)
        _write_log_header(log_path)

    shape_audit(state.model)
    final = out_dir / f"ckpt_{config.total_steps:08d}"
    if state.step >= config.total_steps:
        save_train_state(state, final)
        return final

    with open(log_path, "a", encoding="utf-8", newline="") as log_fh:
        writer = csv.writer(log_fh)
        while state.step < config.total_steps:
            report = train_step(state)
            writer.writerow(
                [
                    report.step,
                    repr(report.w_tilde),
                    repr(report.grad_penalty),
                    repr(report.drift_penalty),
                    repr(report.gen_loss),
                ]
            )
            if report.step % config.checkpoint_interval == 0 or report.step == config.total_steps:
                log_fh.flush()
                save_train_state(state, out_dir / f"ckpt_{report.step:08d}")
    return final


def _write_log_header(log_path: Path) -> None:
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("step,w_tilde,grad_penalty,drift_penalty,gen_loss\n")


def load_eval_generator(path):
    """EMA generator, architecture and stats from a checkpoint directory.

    Averaged weights come from the ``ema.`` tensor group; batch-norm
    running statistics come from the live generator snapshot.
    """
    tensors, meta = load_checkpoint(path)
    if meta.get("format") != 1:
        raise CheckpointError("unsupported checkpoint format")
    arch = ArchConfig(**meta["arch"])
    if not any(name.startswith("ema.") for name in tensors):
        raise CheckpointError("checkpoint has no EMA generator tensors")
    from .model import Generator

    gen = Generator(arch)
    _copy_group(tensors, "ema.", gen.named_parameters())
    buffers = [
        (name, b) for name, b in gen.named_buffers() if not name.endswith("num_batches_tracked")
    ]
    _copy_group(tensors, "gen.", buffers)
    gen.eval()
    stats = NormStats(
        per_appliance_sigma=np.asarray(meta["norm_stats"]["per_appliance_sigma"], dtype=np.float64),
        scheme=meta["norm_stats"]["scheme"],
    )
    return gen, arch, stats
