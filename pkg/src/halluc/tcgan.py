"""Text-conditional GAN training: base-class pretraining and n-shot finetuning.

Pretraining runs the adversarial losses alone on base-class batches.
Finetuning copies the pretrained nets, re-initializes the class head for the
episode's novel classes, and alternates the compound losses (adversarial
plus weighted class term) on the n-shot support set. One discriminator step
and one generator step per iteration; neither half-step writes the other
player's parameters.
"""

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import Dataset, Episode, SplitConfig, stack_embeddings, stack_images, stack_labels
from .errors import ConfigError, DataError, DivergenceError
from .losses import CLASS_OBJECTIVES, loss_d, loss_g
from .models import Discriminator, GanArch, Generator, to_nchw, to_nhwc
from .seeding import derive_seed


@dataclass(frozen=True)
class GanHyper:
    d_z: int = 16
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    batch_size: int = 64
    steps_pretrain: int = 3000
    steps_finetune: int = 500
    class_weight: float = 1.0
    seed: int = 0
    gen_width: int = 32
    disc_width: int = 32
    cond_dim: int = 16
    class_objective: str = "log_prob"

    def __post_init__(self):
        if min(self.d_z, self.batch_size, self.gen_width, self.disc_width, self.cond_dim) <= 0:
            raise ConfigError("d_z, batch_size and widths must be positive")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be positive")
        if self.steps_pretrain < 0 or self.steps_finetune < 0:
            raise ConfigError("step counts must be >= 0")
        if self.class_weight < 0:
            raise ConfigError("class_weight must be >= 0")
        if self.class_objective not in CLASS_OBJECTIVES:
            raise ConfigError(f"class_objective must be one of {CLASS_OBJECTIVES}")


@dataclass
class GanModel:
    """Immutable snapshot of a trained (or freshly seeded) generator pair.

    ``class_ids`` maps class-head index -> dataset label. ``history`` holds
    the per-step loss traces of the phase that produced this snapshot.
    """

    generator: Generator
    discriminator: Discriminator
    arch: GanArch
    class_ids: tuple[int, ...]
    phase: str  # "pretrained" | "finetuned"
    history: dict[str, list[float]] = field(default_factory=dict, repr=False)

    def label_index(self, label: int) -> int:
        try:
            return self.class_ids.index(label)
        except ValueError:
            raise ConfigError(f"label {label} not covered by the class head {self.class_ids}") from None


def _head_labels(labels: np.ndarray, class_ids: list[int]) -> torch.Tensor:
    lut = {c: i for i, c in enumerate(class_ids)}
    return torch.tensor([lut[int(y)] for y in labels], dtype=torch.long)


def _run_adversarial_steps(gen: Generator, disc: Discriminator, images: torch.Tensor,
                           embeds: torch.Tensor, head_labels: torch.Tensor,
                           hyper: GanHyper, steps: int, class_weight: float,
                           stream_seed: int) -> dict[str, list[float]]:
    opt_d = torch.optim.Adam(disc.parameters(), lr=hyper.lr_d, betas=(0.5, 0.999))
    opt_g = torch.optim.Adam(gen.parameters(), lr=hyper.lr_g, betas=(0.5, 0.999))
    rng = torch.Generator().manual_seed(stream_seed)
    n = images.shape[0]
    b = hyper.batch_size
    history: dict[str, list[float]] = {"d_loss": [], "g_loss": []}
    gen.train()
    disc.train()
    for step in range(steps):
        # Discriminator half-step: fakes are detached, G is read-only here.
        idx = torch.randint(n, (b,), generator=rng)
        z = torch.randn(b, hyper.d_z, generator=rng)
        cond = embeds[idx]
        fake = gen(cond, z)
        d_val = loss_d(disc, images[idx], cond, head_labels[idx], fake.detach(), cond,
                       class_weight, hyper.class_objective)
        opt_d.zero_grad()
        d_val.backward()
        opt_d.step()

        # Generator half-step on a fresh conditioning batch.
        idx_g = torch.randint(n, (b,), generator=rng)
        z_g = torch.randn(b, hyper.d_z, generator=rng)
        cond_g = embeds[idx_g]
        fake_g = gen(cond_g, z_g)
        g_val = loss_g(disc, fake_g, cond_g, head_labels[idx_g],
                       class_weight, hyper.class_objective)
        opt_g.zero_grad()
        g_val.backward()
        opt_g.step()

        d_f, g_f = float(d_val.detach()), float(g_val.detach())
        if not (np.isfinite(d_f) and np.isfinite(g_f)):
            raise DivergenceError(
                f"non-finite loss at step {step}: d_loss={d_f}, g_loss={g_f}"
            )
        history["d_loss"].append(d_f)
        history["g_loss"].append(g_f)
    gen.eval()
    disc.eval()
    return history


def pretrain_base(dataset: Dataset, split: SplitConfig, hyper: GanHyper) -> GanModel:
    """Adversarial-only training on the base classes; class weight forced to 0."""
    base = sorted(split.base_classes)
    if not base:
        raise DataError("split has no base classes")
    missing = [c for c in base if len(dataset.indices_of(c)) == 0]
    if missing:
        raise DataError(f"dataset holds no samples for base classes {missing}")

    torch.manual_seed(derive_seed(hyper.seed, "gan-init"))
    arch = GanArch(
        d_z=hyper.d_z,
        embed_dim=dataset.embed_dim,
        image_shape=dataset.image_shape,
        gen_width=hyper.gen_width,
        disc_width=hyper.disc_width,
        cond_dim=hyper.cond_dim,
    )
    gen = Generator(arch)
    disc = Discriminator(arch, num_classes=len(base))

    sel = np.flatnonzero(np.isin(dataset.labels, base))
    images = to_nchw(dataset.images[sel])
    embeds = torch.as_tensor(dataset.embeddings[sel])
    head_labels = _head_labels(dataset.labels[sel], base)

    history = _run_adversarial_steps(
        gen, disc, images, embeds, head_labels, hyper,
        steps=hyper.steps_pretrain, class_weight=0.0,
        stream_seed=derive_seed(hyper.seed, "pretrain-stream"),
    )
    return GanModel(gen, disc, arch, tuple(base), "pretrained", history)


def finetune_novel(model: GanModel, episode: Episode, hyper: GanHyper) -> GanModel:
    """Compound-loss finetuning on the episode support; returns (G*, D*).

    The trunk is warm-started from ``model``; the class head is re-built to
    cover exactly the episode's novel classes.
    """
    if not episode.support:
        raise DataError("episode support is empty")
    novel = sorted(set(episode.novel_classes))
    gen = copy.deepcopy(model.generator)
    disc = copy.deepcopy(model.discriminator)
    torch.manual_seed(derive_seed(hyper.seed, "finetune-init"))
    disc.reset_class_head(len(novel))

    images = to_nchw(stack_images(episode.support))
    embeds = torch.as_tensor(stack_embeddings(episode.support))
    if embeds.shape[1] != model.arch.embed_dim:
        raise ConfigError(
            f"episode embed_dim {embeds.shape[1]} != model embed_dim {model.arch.embed_dim}"
        )
    head_labels = _head_labels(stack_labels(episode.support), novel)

    history = _run_adversarial_steps(
        gen, disc, images, embeds, head_labels, hyper,
        steps=hyper.steps_finetune, class_weight=hyper.class_weight,
        stream_seed=derive_seed(hyper.seed, "finetune-stream"),
    )
    return GanModel(gen, disc, model.arch, tuple(novel), "finetuned", history)


def generate(model: GanModel, text_embedding, z):
    """Deterministic image synthesis from (embedding, noise).

    Accepts a single (embed_dim,) / (d_z,) pair or batches of matching
    length; returns (H, W, C) or (N, H, W, C) float32 in [-1, 1].
    """
    e = np.asarray(text_embedding, dtype=np.float32)
    zz = np.asarray(z, dtype=np.float32)
    single = e.ndim == 1
    if single:
        e = e[None]
        zz = zz[None]
    if e.shape[1] != model.arch.embed_dim:
        raise ConfigError(f"embedding dim {e.shape[1]} != model embed_dim {model.arch.embed_dim}")
    if zz.shape[1] != model.arch.d_z:
        raise ConfigError(f"noise dim {zz.shape[1]} != model d_z {model.arch.d_z}")
    if e.shape[0] != zz.shape[0]:
        raise ConfigError("embedding and noise batch sizes differ")
    model.generator.eval()
    with torch.no_grad():
        imgs = to_nhwc(model.generator(torch.as_tensor(e), torch.as_tensor(zz)))
    return imgs[0] if single else imgs


def discriminator_scores(model: GanModel, images, embeds):
    """Realism logits and class logits from one D forward pass (eval mode)."""
    model.discriminator.eval()
    with torch.no_grad():
        realism, cls = model.discriminator(to_nchw(images), torch.as_tensor(np.asarray(embeds, dtype=np.float32)))
    return realism.numpy(), cls.numpy()
