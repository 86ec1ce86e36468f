import numpy as np
import pytest
import torch
from torch import nn

from mrealgan.model import (
    ArchConfig,
    EmaState,
    GanModel,
    ShapeAuditError,
    discriminator_lengths,
    expected_shapes,
    generator_lengths,
    hypersphere_normalize,
    init_module,
    init_params,
    shape_audit,
)

TINY = ArchConfig(n_blocks=4, base_len=45, channels=8, latent_dim=16)


def unit_latents(count, dim, seed=0):
    z = hypersphere_normalize(np.random.default_rng(seed).standard_normal((count, dim)))
    return torch.from_numpy(z).float()


def test_paper_scale_shape_audit():
    cfg = ArchConfig()  # n=4, latent 128, channels 512, kernel 15
    shapes = expected_shapes(cfg)
    assert shapes["gen.fc.weight"] == (45 * 512, 128)
    assert shapes["gen.out_conv.weight"] == (2, 512, 1)
    assert shapes["disc.fc.weight"] == (1, 45 * 512)
    audited = shape_audit(GanModel(cfg, device="meta"))
    assert audited == len(shapes)
    assert generator_lengths(cfg) == [45, 90, 180, 360, 720]
    assert discriminator_lengths(cfg) == [720, 360, 180, 90, 45]


def test_shape_audit_catches_mismatch():
    model = GanModel(TINY)
    model.generator.fc = nn.Linear(TINY.latent_dim, 17)
    with pytest.raises(ShapeAuditError):
        shape_audit(model)


def test_arch_config_validation():
    with pytest.raises(ValueError):
        ArchConfig(kernel_len=14)  # even kernel cannot preserve length
    with pytest.raises(ValueError):
        ArchConfig(output_activation="sigmoid")
    assert ArchConfig().seq_len == 720


def test_init_biases_zero_and_bn_identity():
    model = init_params(TINY, seed=0)
    for module in (model.generator, model.discriminator):
        for name, p in module.named_parameters():
            if name.endswith("bias") and "bn" not in name:
                assert not p.detach().any(), name
        for m in module.modules():
            if isinstance(m, nn.BatchNorm1d):
                assert torch.all(m.weight.detach() == 1.0)
                assert not m.bias.detach().any()
                assert not m.running_mean.any()
                assert torch.all(m.running_var == 1.0)


def test_init_deterministic_per_seed():
    a = init_params(TINY, seed=42)
    b = init_params(TINY, seed=42)
    c = init_params(TINY, seed=43)
    names = [n for n, _ in a.named_tensors()]
    assert all(torch.equal(dict(a.named_tensors())[n], dict(b.named_tensors())[n]) for n in names)
    assert any(
        not torch.equal(dict(a.named_tensors())[n], dict(c.named_tensors())[n]) for n in names
    )


def test_glorot_variance_full_width_kernel():
    conv = nn.Conv1d(512, 512, 15)
    init_module(conv, np.random.default_rng(5))
    fan = 512 * 15
    expected = 2.0 / (fan + fan)
    observed = conv.weight.detach().numpy().var()
    assert abs(observed - expected) / expected < 0.10


def test_generator_output_shape_and_range():
    model = init_params(TINY, seed=1)
    z = unit_latents(8, TINY.latent_dim)
    out = model.generator(z)
    assert out.shape == (8, 2, 720)
    assert out.detach().min() >= 0.0  # relu output


def test_generator_batch64_default_appliances():
    cfg = ArchConfig(channels=64)
    model = init_params(cfg, seed=2)
    model.generator.eval()
    with torch.no_grad():
        out = model.generator(unit_latents(64, cfg.latent_dim))
    assert out.shape == (64, 2, 720)
    with torch.no_grad():
        scores = model.discriminator(out)
    assert scores.shape == (64,)


def test_tanh_output_range():
    cfg = ArchConfig(n_blocks=4, base_len=45, channels=8, latent_dim=16, output_activation="tanh")
    model = init_params(cfg, seed=3)
    out = model.generator(unit_latents(4, cfg.latent_dim)).detach()
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_intermediate_temporal_lengths():
    model = init_params(TINY, seed=4)
    gen, disc = model.generator, model.discriminator
    lengths = []

    def record(_m, _inp, out):
        lengths.append(out.shape[-1])

    hooks = [gen.base.register_forward_hook(record)]
    hooks += [b.register_forward_hook(record) for b in gen.up_blocks]
    gen.eval()
    with torch.no_grad():
        gen(unit_latents(2, TINY.latent_dim))
    assert lengths == [45, 90, 180, 360, 720]
    for h in hooks:
        h.remove()

    lengths.clear()
    hooks = [b.register_forward_hook(record) for b in disc.down_blocks]
    with torch.no_grad():
        disc(torch.zeros(2, 2, 720))
    assert lengths == [360, 180, 90, 45]  # after each halving
    for h in hooks:
        h.remove()


def test_generator_eval_deterministic():
    model = init_params(TINY, seed=5)
    model.generator.eval()
    z = unit_latents(4, TINY.latent_dim, seed=9)
    with torch.no_grad():
        a = model.generator(z)
        b = model.generator(z)
    assert torch.equal(a, b)


def test_generator_rejects_unnormalized_latents():
    model = init_params(TINY, seed=6)
    with pytest.raises(ValueError, match="unit-norm"):
        model.generator(torch.full((2, TINY.latent_dim), 0.5))
    with pytest.raises(ShapeAuditError):
        model.generator(torch.zeros(2, TINY.latent_dim + 1))


def test_discriminator_rejects_bad_shapes():
    model = init_params(TINY, seed=7)
    with pytest.raises(ShapeAuditError):
        model.discriminator(torch.zeros(2, 2, 719))


def test_final_layer_linearity():
    # biases are zero at init, so doubling the dense weights doubles scores
    model = init_params(TINY, seed=8)
    x = torch.from_numpy(np.random.default_rng(0).uniform(0, 1, (4, 2, 720))).float()
    with torch.no_grad():
        base = model.discriminator(x)
        model.discriminator.fc.weight.mul_(2.0)
        doubled = model.discriminator(x)
    torch.testing.assert_close(doubled, 2.0 * base, rtol=1e-6, atol=1e-6)


def test_batch_norm_train_mode_statistics():
    model = init_params(TINY, seed=9)
    gen = model.generator
    captured = []

    def record(module, _inp, out):
        if isinstance(module, nn.BatchNorm1d):
            captured.append(out.detach())

    hooks = [m.register_forward_hook(record) for m in gen.modules() if isinstance(m, nn.BatchNorm1d)]
    gen.train()
    gen(unit_latents(32, TINY.latent_dim, seed=1))
    assert captured
    for out in captured:
        # affine is identity at init, so outputs are the normalized values
        per_channel = out.transpose(0, 1).reshape(out.shape[1], -1)
        assert per_channel.mean(dim=1).abs().max() < 1e-3
        assert (per_channel.var(dim=1, unbiased=False) - 1.0).abs().max() < 1e-3
    for h in hooks:
        h.remove()


def test_batch_norm_running_stats_update_only_in_train_mode():
    model = init_params(TINY, seed=10)
    gen = model.generator
    gen.eval()
    before = gen.base.bn1.running_mean.clone()
    gen(unit_latents(8, TINY.latent_dim))
    assert torch.equal(gen.base.bn1.running_mean, before)
    gen.train()
    gen(unit_latents(8, TINY.latent_dim))
    assert not torch.equal(gen.base.bn1.running_mean, before)


def test_ema_trivial_decays():
    model = init_params(TINY, seed=11)
    gen = model.generator
    live = {n: p.detach().clone() for n, p in gen.named_parameters()}

    ema = EmaState(gen, decay=0.0)
    with torch.no_grad():
        for p in gen.parameters():
            p.add_(1.0)
    ema.update(gen)
    assert all(torch.equal(ema.shadow[n], p.detach()) for n, p in gen.named_parameters())

    ema_frozen = EmaState(gen, decay=1.0)
    with torch.no_grad():
        for p in gen.parameters():
            p.add_(1.0)
    snapshot = {n: t.clone() for n, t in ema_frozen.shadow.items()}
    ema_frozen.update(gen)
    assert all(torch.equal(ema_frozen.shadow[n], snapshot[n]) for n in snapshot)
    del live


def test_ema_geometric_closed_form():
    model = init_params(TINY, seed=12)
    gen = model.generator
    decay = 0.9
    ema = EmaState(gen, decay=decay)
    s0 = {n: t.double().clone() for n, t in ema.shadow.items()}
    with torch.no_grad():
        for p in gen.parameters():
            p.copy_(torch.full_like(p, 0.25))
    k = 7
    for _ in range(k):
        ema.update(gen)
    for n, shadow in ema.shadow.items():
        expected = 0.25 + (decay**k) * (s0[n] - 0.25)
        torch.testing.assert_close(shadow.double(), expected, rtol=1e-5, atol=1e-7)


def test_ema_build_generator_copies_buffers():
    model = init_params(TINY, seed=13)
    gen = model.generator
    ema = EmaState(gen, decay=0.5)
    gen.train()
    gen(unit_latents(8, TINY.latent_dim))  # move running stats
    ema.update(gen)
    eval_gen = ema.build_generator(TINY, gen)
    assert not eval_gen.training
    assert torch.equal(eval_gen.base.bn1.running_mean, gen.base.bn1.running_mean)
    for n, p in eval_gen.named_parameters():
        assert torch.equal(p.detach(), ema.shadow[n])


def test_hypersphere_normalize():
    z = np.random.default_rng(14).standard_normal((16, 128))
    unit = hypersphere_normalize(z)
    np.testing.assert_allclose(np.linalg.norm(unit, axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        hypersphere_normalize(np.zeros((1, 4)))


def test_discriminator_input_gradient_matches_finite_differences():
    cfg = ArchConfig(n_blocks=2, base_len=45, channels=8, latent_dim=16)
    model = init_params(cfg, seed=15, dtype=torch.float64)
    disc = model.discriminator
    disc.eval()
    rng = np.random.default_rng(16)
    for trial in range(8):
        x = torch.from_numpy(rng.uniform(0, 0.5, (1, 2, cfg.seq_len)))
        x.requires_grad_(True)
        grad = torch.autograd.grad(disc(x).sum(), x)[0]
        h = 1e-6
        for _ in range(6):
            j = rng.integers(0, 2)
            t = rng.integers(0, cfg.seq_len)
            plus = x.detach().clone()
            minus = x.detach().clone()
            plus[0, j, t] += h
            minus[0, j, t] -= h
            with torch.no_grad():
                fd = (disc(plus).item() - disc(minus).item()) / (2 * h)
            assert fd == pytest.approx(grad[0, j, t].item(), rel=1e-5, abs=1e-9)
