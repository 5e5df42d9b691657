import numpy as np
import pytest

from touchauth.errors import NonFiniteLoss
from touchauth.gan import (
    GanPair,
    GanTrainConfig,
    discriminator_loss,
    gan_quality_report,
    generate_samples,
    generator_loss,
    train_gan,
    train_gan_pair,
    tune_synth_count,
)
from touchauth.nn import Adam, DenseNet, bce


def mixture(seed, n=512):
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, 2, n)
    mu = np.array([[0.3, 0.3], [0.7, 0.6]])
    return np.clip(mu[comp] + rng.normal(0, 0.06, (n, 2)), 0, 1)


def numeric_grad(f, flat, h=1e-5):
    g = np.zeros_like(flat)
    for i in range(len(flat)):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_loss_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    dim, noise = int(rng.integers(2, 6)), int(rng.integers(2, 5))
    hidden = [int(rng.integers(3, 17))] * int(rng.integers(1, 3))
    gen = DenseNet.init([noise, *hidden, dim], rng)
    disc = DenseNet.init([dim, *hidden, 1], rng)
    real = rng.random((7, dim))
    z = rng.standard_normal((5, noise))

    _, (gd,) = discriminator_loss(gen, disc, real, z)
    nd = numeric_grad(lambda: discriminator_loss(gen, disc, real, z)[0], disc.flat)
    assert rel_err(gd, nd) < 1e-4

    _, (gg,) = generator_loss(gen, disc, z)
    ng = numeric_grad(lambda: generator_loss(gen, disc, z)[0], gen.flat)
    assert rel_err(gg, ng) < 1e-4


def test_untrained_discriminator_in_open_interval():
    rng = np.random.default_rng(0)
    disc = DenseNet.init([4, 8, 1], rng)
    p = disc.forward(rng.normal(0, 10, (100, 4)))
    assert np.all((p > 0) & (p < 1))


def test_dense_net_serialization_roundtrip():
    net = DenseNet.init([3, 5, 2], np.random.default_rng(0))
    back = DenseNet.from_dict(net.to_dict())
    x = np.random.default_rng(1).random((4, 3))
    assert np.array_equal(back.forward(x), net.forward(x))
    # views stay tied to the flat buffer
    back.flat[:] = 0
    assert np.all(back.weights[0] == 0)


def test_adam_minimizes_quadratic():
    p = np.array([3.0, -2.0])
    opt = Adam(lr=0.1)
    for _ in range(500):
        opt.step([p], [2 * p])
    assert np.allclose(p, 0, atol=1e-2)


def test_mixture_moments_match():
    hits = 0
    for seed in range(4):
        real = mixture(seed)
        g = train_gan(real, GanTrainConfig(epochs=100, seed=seed))
        fake = generate_samples(g.generator, 4000, seed).values
        dm = np.abs(fake.mean(0) - real.mean(0)).max()
        dc = np.linalg.norm(np.cov(fake.T) - np.cov(real.T))
        hits += dm <= 0.1 and dc <= 0.3
    assert hits >= 3


def test_constant_target_is_learned():
    c = np.array([0.2, 0.8, 0.5])
    hits = 0
    for seed in range(4):
        g = train_gan(np.tile(c, (200, 1)), GanTrainConfig(epochs=200, seed=seed))
        fake = generate_samples(g.generator, 1000, seed).values
        hits += np.abs(fake.mean(0) - c).max() <= 0.1
    assert hits >= 3


def test_discriminator_learns_with_frozen_generator():
    rng = np.random.default_rng(0)
    real = rng.uniform(0.8, 1.0, (64, 3))
    gen = DenseNet.init([4, 8, 3], rng)
    disc = DenseNet.init([3, 8, 1], rng)
    opt = Adam(2e-4, 0.5)
    z = rng.standard_normal((64, 4))
    losses = []
    for _ in range(40):
        loss, grads = discriminator_loss(gen, disc, real, z)
        opt.step(disc.params, grads)
        losses.append(loss)
    drops = sum(b < a for a, b in zip(losses, losses[1:]))
    assert drops >= 0.8 * (len(losses) - 1)


def test_training_is_deterministic_and_bounded():
    real = mixture(0, 256)
    cfg = GanTrainConfig(epochs=5, seed=3)
    a, b = train_gan(real, cfg), train_gan(real, cfg)
    assert np.array_equal(a.generator.flat, b.generator.flat)
    assert a.d_losses == b.d_losses
    s1 = generate_samples(a.generator, 250, 9)
    s2 = generate_samples(a.generator, 250, 9)
    assert s1.values.shape == (250, 2)
    assert np.array_equal(s1.values, s2.values)
    assert np.all((s1.values >= 0) & (s1.values <= 1))
    assert set(s1.labels) == {"synthetic_genuine"}
    assert len(generate_samples(a.generator, 0, 1)) == 0


def test_max_steps_cap():
    g = train_gan(mixture(0, 256), GanTrainConfig(epochs=50, batch_size=64, max_steps=8))
    assert len(g.d_losses) == 2


def test_train_preconditions():
    with pytest.raises(ValueError):
        train_gan(np.full((100, 2), 0.5), GanTrainConfig(batch_size=64))
    with pytest.raises(ValueError):
        train_gan(np.full((200, 2), 1.5), GanTrainConfig(batch_size=64))
    with pytest.raises(ValueError):
        GanTrainConfig(epochs=0)


def test_non_finite_loss_raises(monkeypatch):
    import touchauth.gan as gan_mod

    monkeypatch.setattr(gan_mod, "generator_loss", lambda gen, disc, z: (float("nan"), [np.zeros_like(gen.flat)]))
    with pytest.raises(NonFiniteLoss) as exc:
        train_gan(mixture(0, 256), GanTrainConfig(epochs=3))
    assert exc.value.epoch == 0


def test_pair_roundtrip_and_labels():
    cfg = GanTrainConfig(epochs=2, batch_size=16)
    pair = train_gan_pair(mixture(1, 64), mixture(2, 64), cfg)
    back = GanPair.from_dict(pair.to_dict())
    assert back.input_dim == 2 and back.noise_dim == 32
    assert np.array_equal(back.genuine_gen.flat, pair.genuine_gen.flat)
    assert not np.array_equal(pair.genuine_gen.flat, pair.impostor_gen.flat)
    imp = generate_samples(pair.impostor_gen, 3, 0, "synthetic_impostor")
    assert imp.labels == ["synthetic_impostor"] * 3


def test_tune_synth_count():
    assert tune_synth_count(lambda c: 1 / 0, [250]) == (250, {})
    best, scores = tune_synth_count(lambda c: 0.1, [500, 100, 250])
    assert best == 100 and len(scores) == 3
    best, _ = tune_synth_count(lambda c: abs(c - 250) / 1000)
    assert best == 250
    with pytest.raises(ValueError):
        tune_synth_count(lambda c: 0, [])


def test_quality_report_identity_and_disjoint():
    real = mixture(0, 300)
    rep = gan_quality_report(real, real.copy(), [0, 1])
    assert [len(r.grid) for r in rep] == [256, 256]
    assert all(abs(r.overlap - 1.0) < 1e-6 for r in rep)
    far = gan_quality_report(np.full((50, 1), 0.1), np.full((50, 1), 0.9), [0], bandwidth=0.02)
    assert far[0].overlap < 0.1
    with pytest.raises(ValueError):
        gan_quality_report(np.zeros((0, 1)), real, [0])


def test_bce_clamps():
    assert np.isfinite(bce(np.array([0.0, 1.0]), np.array([1.0, 0.0])))
