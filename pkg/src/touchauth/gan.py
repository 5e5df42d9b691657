"""Genuine-GAN / Impostor-GAN training on normalized window vectors."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteLoss
from .evaluation import kde_evaluate, silverman_bandwidth
from .features import WindowSet
from .nn import Adam, DenseNet, bce

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_SYNTH_COUNTS = (100, 250, 500, 750, 1000)


@dataclass(frozen=True)
class GanTrainConfig:
    epochs: int = 300
    batch_size: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    d_steps: int = 1
    noise_dim: int = 32
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    # optional cap on generator updates; training stops at the first epoch boundary past it
    max_steps: int | None = None

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr", "d_steps", "noise_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"GanTrainConfig.{name} must be positive")
        object.__setattr__(self, "hidden", tuple(self.hidden))


@dataclass
class TrainedGan:
    generator: DenseNet
    discriminator: DenseNet
    d_losses: list[float] = field(default_factory=list)
    g_losses: list[float] = field(default_factory=list)

    @property
    def noise_dim(self) -> int:
        return self.generator.sizes[0]


@dataclass
class GanPair:
    genuine_gen: DenseNet
    impostor_gen: DenseNet
    noise_dim: int
    input_dim: int
    train_log: dict
    config: GanTrainConfig

    def to_dict(self) -> dict:
        return {
            "format": "touchauth.gan_pair",
            "version": FORMAT_VERSION,
            "noise_dim": self.noise_dim,
            "input_dim": self.input_dim,
            "config": asdict(self.config),
            "genuine_gen": self.genuine_gen.to_dict(),
            "impostor_gen": self.impostor_gen.to_dict(),
            "train_log": self.train_log,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GanPair":
        if d.get("format") != "touchauth.gan_pair" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 GAN pair container")
        return cls(
            DenseNet.from_dict(d["genuine_gen"]),
            DenseNet.from_dict(d["impostor_gen"]),
            d["noise_dim"],
            d["input_dim"],
            d["train_log"],
            GanTrainConfig(**d["config"]),
        )


def discriminator_loss(gen: DenseNet, disc: DenseNet, real: np.ndarray, z: np.ndarray):
    """``-(E[log D(x)] + E[log(1 - D(G(z)))])`` and its gradient w.r.t. the discriminator."""
    n_real = len(real)
    both = np.vstack([real, gen.forward(z)])
    p, cache = disc.forward(both, cache=True)
    p_real, p_fake = p[:n_real], p[n_real:]
    loss = bce(p_real, np.ones_like(p_real)) + bce(p_fake, np.zeros_like(p_fake))
    grad = np.vstack([(p_real - 1.0) / n_real, p_fake / len(z)])
    grads, _ = disc.backward(cache, grad)
    return loss, grads


def generator_loss(gen: DenseNet, disc: DenseNet, z: np.ndarray):
    """Non-saturating ``-E[log D(G(z))]`` and its gradient w.r.t. the generator."""
    fake, g_cache = gen.forward(z, cache=True)
    p_fake, f_cache = disc.forward(fake, cache=True)
    loss = bce(p_fake, np.ones_like(p_fake))
    _, dx = disc.backward(f_cache, (p_fake - 1.0) / len(z))
    grads, _ = gen.backward(g_cache, dx * fake * (1.0 - fake))
    return loss, grads


def train_gan(real, cfg: GanTrainConfig) -> TrainedGan:
    """Alternate discriminator ascent and generator (non-saturating) updates."""
    real = real.values if isinstance(real, WindowSet) else np.asarray(real, dtype=float)
    m, dim = real.shape
    if m < 2 * cfg.batch_size:
        raise ValueError(f"need at least {2 * cfg.batch_size} real samples, got {m}")
    if real.min() < 0 or real.max() > 1:
        raise ValueError("real samples must lie in [0, 1]")
    rng = np.random.default_rng(cfg.seed)
    gen = DenseNet.init([cfg.noise_dim, *cfg.hidden, dim], rng)
    disc = DenseNet.init([dim, *cfg.hidden, 1], rng)
    d_opt = Adam(cfg.lr, cfg.beta1, cfg.beta2)
    g_opt = Adam(cfg.lr, cfg.beta1, cfg.beta2)
    out = TrainedGan(gen, disc)
    bs = cfg.batch_size
    steps = 0
    for epoch in range(cfg.epochs):
        if cfg.max_steps is not None and steps >= cfg.max_steps:
            break
        order = rng.permutation(m)
        d_sum = g_sum = 0.0
        nb = 0
        for start in range(0, m - bs + 1, bs):
            batch = real[order[start : start + bs]]
            for _ in range(cfg.d_steps):
                z = rng.standard_normal((bs, cfg.noise_dim))
                d_loss, d_grads = discriminator_loss(gen, disc, batch, z)
                d_opt.step(disc.params, d_grads)
            z = rng.standard_normal((bs, cfg.noise_dim))
            g_loss, g_grads = generator_loss(gen, disc, z)
            g_opt.step(gen.params, g_grads)
            steps += 1
            d_sum += d_loss
            g_sum += g_loss
            nb += 1
        d_mean, g_mean = d_sum / nb, g_sum / nb
        if not (np.isfinite(d_mean) and np.isfinite(g_mean)):
            raise NonFiniteLoss(epoch)
        out.d_losses.append(d_mean)
        out.g_losses.append(g_mean)
    return out


def generate_samples(gen: DenseNet, count: int, seed: int, label: str = "synthetic_genuine") -> WindowSet:
    dim = gen.sizes[-1]
    if count == 0:
        return WindowSet.empty(dim)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, gen.sizes[0]))
    values = gen.forward(z)
    return WindowSet(values, [None] * count, np.arange(count), [label] * count)


def train_gan_pair(genuine, impostor, cfg: GanTrainConfig) -> GanPair:
    """Train both GANs; the impostor GAN uses a seed offset so the two streams differ."""
    gen_g = train_gan(genuine, cfg)
    imp_cfg = GanTrainConfig(**{**asdict(cfg), "seed": cfg.seed + 1})
    gen_i = train_gan(impostor, imp_cfg)
    dim = gen_g.generator.sizes[-1]
    return GanPair(
        gen_g.generator,
        gen_i.generator,
        cfg.noise_dim,
        dim,
        {
            "genuine": {"d_loss": gen_g.d_losses, "g_loss": gen_g.g_losses},
            "impostor": {"d_loss": gen_i.d_losses, "g_loss": gen_i.g_losses},
        },
        cfg,
    )


def tune_synth_count(evaluate: Callable[[int], float], candidates: Sequence[int] = DEFAULT_SYNTH_COUNTS):
    """Pick the candidate count with the lowest mean validation HTER; ties go to the smaller count.

    Returns ``(best, scores)``.
    """
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ValueError("no synthetic-count candidates")
    if len(candidates) == 1:
        return candidates[0], {}
    scores = {c: float(evaluate(c)) for c in candidates}
    return min(candidates, key=lambda c: (scores[c], c)), scores


@dataclass
class DimensionQuality:
    dim: int
    grid: np.ndarray
    real_density: np.ndarray
    generated_density: np.ndarray
    overlap: float


def gan_quality_report(real, generated, dims, grid_size: int = 256, bandwidth: float | None = None):
    """KDE curves of real vs generated values on [0, 1] and their overlap.

    Each curve is renormalized to unit mass on the grid, so overlap is 1 for
    identical samples and near 0 for disjoint supports.
    """
    real = real.values if isinstance(real, WindowSet) else np.asarray(real, dtype=float)
    generated = generated.values if isinstance(generated, WindowSet) else np.asarray(generated, dtype=float)
    if len(real) == 0 or len(generated) == 0:
        raise ValueError("both sample sets must be non-empty")
    grid = np.linspace(0.0, 1.0, grid_size)
    out = []
    for d in dims:
        curves = []
        for sample in (real[:, d], generated[:, d]):
            h = bandwidth if bandwidth is not None else silverman_bandwidth(sample)
            f = kde_evaluate(sample, grid, h)
            mass = np.trapezoid(f, grid)
            curves.append(f / mass if mass > 0 else f)
        overlap = float(np.trapezoid(np.minimum(*curves), grid))
        out.append(DimensionQuality(int(d), grid, curves[0], curves[1], overlap))
    return out
