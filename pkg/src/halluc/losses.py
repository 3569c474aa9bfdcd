"""Adversarial and class-discriminative losses for the conditional GAN.

Sign conventions (all losses are minimized):
  adv_loss_d  = mean softplus(-real_logits) + mean softplus(fake_logits)
                (binary cross-entropy with targets 1 for real, 0 for fake)
  adv_loss_g  = mean softplus(-fake_logits)
                (non-saturating generator loss)
  class_loss  = mean negative log-softmax of the true label
                (cross-entropy; the stable surrogate for maximizing the
                expected class posterior, same argmax)

The compound discriminator loss adds the class term on real samples; the
compound generator loss adds it on fakes with their intended labels, so
minimizing pushes the generator toward class-discriminative output.
"""

import torch
import torch.nn.functional as F

from .errors import ConfigError, NumericsError

CLASS_OBJECTIVES = ("log_prob", "raw_prob")


def _as_float_tensor(x, name: str) -> torch.Tensor:
    t = torch.as_tensor(x)
    if t.numel() == 0:
        raise NumericsError(f"{name} is empty")
    if not t.is_floating_point():
        t = t.double()
    if not torch.isfinite(t.detach()).all():
        raise NumericsError(f"{name} contains NaN or Inf")
    return t


def adv_loss_d(real_logits, fake_logits) -> torch.Tensor:
    """Discriminator realism loss; >= 0, -> 0 as D becomes perfect."""
    real = _as_float_tensor(real_logits, "real_logits")
    fake = _as_float_tensor(fake_logits, "fake_logits")
    return F.softplus(-real).mean() + F.softplus(fake).mean()


def adv_loss_g(fake_logits) -> torch.Tensor:
    """Generator realism loss; decreases as D rates fakes as real."""
    fake = _as_float_tensor(fake_logits, "fake_logits")
    return F.softplus(-fake).mean()


def class_loss(class_logits, labels, objective: str = "log_prob") -> torch.Tensor:
    """Class-discriminative loss over an (N, K) logit matrix.

    "log_prob" (default) is cross-entropy: ln K at uniform logits, >= 0.
    "raw_prob" minimizes 1 - mean softmax probability of the true label,
    the literal expected-posterior objective, kept for ablation.
    """
    logits = _as_float_tensor(class_logits, "class_logits")
    if logits.ndim != 2:
        raise ConfigError(f"class_logits must be (N, K), got shape {tuple(logits.shape)}")
    y = torch.as_tensor(labels, dtype=torch.long)
    k = logits.shape[1]
    if y.numel() != logits.shape[0]:
        raise ConfigError("labels length does not match logits rows")
    if (y < 0).any() or (y >= k).any():
        raise ConfigError(f"labels must lie in [0, {k}), got {y.tolist()}")
    if objective == "log_prob":
        return F.cross_entropy(logits, y)
    if objective == "raw_prob":
        probs = F.softmax(logits, dim=1)
        return 1.0 - probs[torch.arange(len(y)), y].mean()
    raise ConfigError(f"unknown class objective {objective!r}")


def loss_d(disc, real_images, real_embeds, real_labels,
           fake_images, fake_embeds, class_weight: float = 1.0,
           class_objective: str = "log_prob") -> torch.Tensor:
    """Compound discriminator loss: realism BCE plus weighted class term on reals."""
    if class_weight < 0:
        raise ConfigError("class_weight must be >= 0")
    real_logit, real_cls = disc(real_images, real_embeds)
    fake_logit, _ = disc(fake_images, fake_embeds)
    total = adv_loss_d(real_logit, fake_logit)
    if class_weight > 0:
        total = total + class_weight * class_loss(real_cls, real_labels, class_objective)
    return total


def loss_g(disc, fake_images, fake_embeds, intended_labels,
           class_weight: float = 1.0, class_objective: str = "log_prob") -> torch.Tensor:
    """Compound generator loss: realism term plus weighted class term on fakes.

    The class term uses the labels the fakes were conditioned on, so
    minimizing it maximizes the discriminator's posterior for the intended
    class of each generated image.
    """
    if class_weight < 0:
        raise ConfigError("class_weight must be >= 0")
    fake_logit, fake_cls = disc(fake_images, fake_embeds)
    total = adv_loss_g(fake_logit)
    if class_weight > 0:
        total = total + class_weight * class_loss(fake_cls, intended_labels, class_objective)
    return total
