"""Closed-form values and algebraic identities for the five loss operations.

Reference values below are frozen from the analytic forms:
  softplus(0)  = ln 2           = 0.6931471805599453
  softplus(-1) = ln(1 + e^-1)   = 0.31326168751822286
  softplus(-2) = ln(1 + e^-2)   = 0.12692801104297263
  sigmoid(-2)  = 1/(1 + e^2)    = 0.11920292202211755
"""

import math

import numpy as np
import pytest
import torch

from halluc.errors import ConfigError, NumericsError
from halluc.losses import adv_loss_d, adv_loss_g, class_loss, loss_d, loss_g

LN2 = 0.6931471805599453
SP_M1 = 0.31326168751822286
SP_M2 = 0.12692801104297263
SIG_M2 = 0.11920292202211755


def test_adv_loss_closed_forms():
    # all-zero logits: both softplus terms hit ln 2
    assert abs(adv_loss_d(torch.zeros(4), torch.zeros(4)).item() - 2 * LN2) < 1e-6
    assert abs(adv_loss_g(torch.zeros(4)).item() - LN2) < 1e-6
    # a confident correct discriminator: softplus(-1) twice
    assert abs(adv_loss_d(torch.ones(3), -torch.ones(3)).item() - 2 * SP_M1) < 1e-6
    assert abs(adv_loss_g(torch.ones(5)).item() - SP_M1) < 1e-6
    # mixed batch averages the per-element softplus values
    val = adv_loss_d(torch.tensor([0.0, 1.0]), torch.tensor([0.0, -1.0])).item()
    assert abs(val - (LN2 + SP_M1)) < 1e-6


def test_class_loss_closed_forms():
    for k in (2, 5, 10):
        logits = torch.zeros(3, k)
        labels = torch.arange(3) % k
        assert abs(class_loss(logits, labels).item() - math.log(k)) < 1e-6
    # two-way logits (2, 0), true label 0: CE = softplus(-2)
    assert abs(class_loss(torch.tensor([[2.0, 0.0]]), [0]).item() - SP_M2) < 1e-6
    # raw_prob variant: 1 - softmax prob = sigmoid(-2)
    val = class_loss(torch.tensor([[2.0, 0.0]]), [0], objective="raw_prob").item()
    assert abs(val - SIG_M2) < 1e-6


def test_class_loss_batch_mean():
    logits = torch.tensor([[2.0, 0.0], [0.0, 0.0]])
    expect = 0.5 * (SP_M2 + LN2)
    assert abs(class_loss(logits, [0, 1]).item() - expect) < 1e-6


def test_loss_validation():
    with pytest.raises(NumericsError):
        adv_loss_g(torch.tensor([]))
    with pytest.raises(NumericsError):
        adv_loss_d(torch.tensor([float("nan")]), torch.zeros(1))
    with pytest.raises(ConfigError):
        class_loss(torch.zeros(2, 3), [0, 3])
    with pytest.raises(ConfigError):
        class_loss(torch.zeros(2, 3), [-1, 0])
    with pytest.raises(ConfigError):
        class_loss(torch.zeros(3), [0])
    with pytest.raises(ConfigError):
        class_loss(torch.zeros(2, 3), [0, 1], objective="nope")


class _StubDisc:
    """Fixed linear maps so compound losses are analytic in their inputs."""

    def __init__(self, k=3):
        torch.manual_seed(0)
        self.w_r = torch.randn(8, dtype=torch.float64)
        self.w_c = torch.randn(8, k, dtype=torch.float64)

    def __call__(self, images, embeds):
        flat = images.reshape(len(images), -1)[:, :4].double()
        x = torch.cat([flat, embeds.double()[:, :4]], dim=1)
        return x @ self.w_r, x @ self.w_c


def test_compound_identity_random():
    # mini version of the identity suite: loss_d/loss_g equal their parts
    disc = _StubDisc()
    gen = torch.Generator().manual_seed(42)
    for _ in range(50):
        b = int(torch.randint(1, 6, (1,), generator=gen))
        real = torch.randn(b, 2, 2, 2, generator=gen, dtype=torch.float64)
        fake = torch.randn(b, 2, 2, 2, generator=gen, dtype=torch.float64)
        emb = torch.randn(b, 4, generator=gen, dtype=torch.float64)
        y = torch.randint(0, 3, (b,), generator=gen)
        lam = float(torch.rand(1, generator=gen)) * 2
        rl, rc = disc(real, emb)
        fl, fc = disc(fake, emb)
        want_d = adv_loss_d(rl, fl) + lam * class_loss(rc, y)
        got_d = loss_d(disc, real, emb, y, fake, emb, class_weight=lam)
        assert abs(got_d.item() - want_d.item()) <= 1e-6 * max(1.0, abs(want_d.item()))
        want_g = adv_loss_g(fl) + lam * class_loss(fc, y)
        got_g = loss_g(disc, fake, emb, y, class_weight=lam)
        assert abs(got_g.item() - want_g.item()) <= 1e-6 * max(1.0, abs(want_g.item()))


def test_compound_lambda_zero_reduces_to_adversarial():
    disc = _StubDisc()
    real = torch.full((3, 2, 2, 2), 0.25, dtype=torch.float64)
    fake = torch.full((3, 2, 2, 2), -0.5, dtype=torch.float64)
    emb = torch.zeros(3, 4, dtype=torch.float64)
    rl, _ = disc(real, emb)
    fl, _ = disc(fake, emb)
    assert loss_d(disc, real, emb, [0, 1, 2], fake, emb, class_weight=0.0).item() \
        == adv_loss_d(rl, fl).item()
    assert loss_g(disc, fake, emb, [0, 1, 2], class_weight=0.0).item() \
        == adv_loss_g(fl).item()
    with pytest.raises(ConfigError):
        loss_d(disc, real, emb, [0, 1, 2], fake, emb, class_weight=-0.5)


def test_losses_accept_numpy_inputs():
    val = adv_loss_g(np.zeros(3, dtype=np.float32)).item()
    assert abs(val - LN2) < 1e-6
    assert abs(class_loss(np.zeros((2, 4)), np.array([1, 2])).item() - math.log(4)) < 1e-6


def test_adv_losses_monotone_in_logits():
    # D loss falls as real logits rise; G loss falls as fake logits rise
    lo = adv_loss_d(torch.tensor([0.0]), torch.tensor([0.0])).item()
    hi = adv_loss_d(torch.tensor([3.0]), torch.tensor([-3.0])).item()
    assert hi < lo
    assert adv_loss_g(torch.tensor([3.0])).item() < adv_loss_g(torch.tensor([0.0])).item()
