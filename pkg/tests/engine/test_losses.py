import math

import pytest
import torch

from app.config import DiscriminatorConfig
from app.engine import (
    adversarial_loss,
    discriminator_loss,
    inner_loss,
    logistic_discriminator_loss,
    mask_regularizer,
    masked_l1,
    outer_loss,
    weighted_objective,
)
from app.errors import ShapeMismatchError
from app.grad import ParamSet, as_tensor, backward
from app.nets import init_discriminator, init_srnet, srnet_forward
from gradcheck_utils import check_params

PAPER_WEIGHTS = (1.0, 0.5, 0.1, 0.002)


class TestMaskedL1:
    def test_zero_residual_for_any_mask(self):
        pred = torch.rand(2, 3, 4, 4, dtype=torch.float64)
        m = torch.rand(2, 1, 4, 4, dtype=torch.float64) * 3
        assert float(masked_l1(pred, pred.clone(), m)) == 0.0

    def test_constant_l1(self):
        pred = torch.full((1, 3, 4, 4), 0.5, dtype=torch.float64)
        target = torch.full((1, 3, 4, 4), 0.25, dtype=torch.float64)
        assert float(masked_l1(pred, target, torch.ones(1, 1, 4, 4, dtype=torch.float64))) == 0.25

    def test_weighted_mean(self):
        pred = as_tensor([[[[1.0, 0.0]]]])
        target = as_tensor([[[[0.0, 0.0]]]])
        m = as_tensor([[[[0.5, 2.0]]]])
        assert float(masked_l1(pred, target, m)) == pytest.approx(0.25, abs=1e-15)

    def test_none_mask_equals_ones(self):
        pred, target = torch.rand(1, 3, 4, 4, dtype=torch.float64), torch.rand(1, 3, 4, 4, dtype=torch.float64)
        ones = torch.ones(1, 1, 4, 4, dtype=torch.float64)
        assert torch.equal(masked_l1(pred, target), masked_l1(pred, target, ones))

    def test_mask_shape_mismatch(self):
        pred = torch.rand(1, 3, 4, 4, dtype=torch.float64)
        with pytest.raises(ShapeMismatchError):
            masked_l1(pred, pred, torch.ones(1, 3, 4, 4, dtype=torch.float64))
        with pytest.raises(ShapeMismatchError):
            masked_l1(pred, torch.rand(1, 3, 4, 5, dtype=torch.float64))


def test_inner_loss_is_srnet_l1(tiny_config):
    theta = init_srnet(tiny_config.srnet, 0)
    face_lr = torch.rand(2, 3, 4, 4, dtype=torch.float64)
    face_bfr = torch.rand(2, 3, 8, 8, dtype=torch.float64)
    expected = (srnet_forward(theta, face_lr, tiny_config.srnet) - face_bfr).abs().mean()
    assert float(inner_loss(theta, face_lr, face_bfr, None, tiny_config.srnet)) == pytest.approx(float(expected), abs=1e-15)


def test_weighted_objective_with_default_weights():
    components = {"l1": 0.1, "perceptual": 0.2, "adv": 0.3, "reg": 0.4}
    assert abs(float(weighted_objective(components, PAPER_WEIGHTS)) - 0.2308) <= 1e-12


def test_zero_logits():
    logits = torch.zeros(2, 1, 4, 4, dtype=torch.float64)
    assert abs(float(adversarial_loss(logits)) - math.log(2.0)) <= 1e-12
    assert abs(float(logistic_discriminator_loss(logits, logits)) - 2.0 * math.log(2.0)) <= 1e-12


def test_separating_discriminator_saturates():
    real = torch.full((1, 1, 2, 2), 20.0, dtype=torch.float64)
    assert float(logistic_discriminator_loss(real, -real)) < 1e-8


def test_mask_regularizer_has_zero_gradient_at_one():
    m = torch.ones(1, 1, 4, 4, dtype=torch.float64, requires_grad=True)
    assert float(mask_regularizer(m)) == 0.0
    grads = backward(mask_regularizer(m), ParamSet({"m": m})).grads
    assert torch.equal(grads["m"], torch.zeros_like(m))


def test_mask_regularizer_value():
    m = as_tensor([[[[0.0, 1.0, 3.0, 1.0]]]])
    assert float(mask_regularizer(m)) == pytest.approx(math.sqrt(5.0 / 4.0), abs=1e-15)


def test_outer_loss_identity_leaves_only_adversarial_term(tiny_config):
    theta = init_srnet(tiny_config.srnet, 1)
    disc = init_discriminator(tiny_config.discriminator, 2)
    image_lr = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    image = srnet_forward(theta, image_lr, tiny_config.srnet).detach()
    m = torch.ones(1, 1, 12, 12, dtype=torch.float64)
    loss, components, sr = outer_loss(theta, image_lr, image, disc, m, tiny_config)
    assert float(components["l1"]) == 0.0
    assert float(components["perceptual"]) == 0.0
    assert float(components["reg"]) == 0.0
    assert abs(float(components["adv"]) - math.log(2.0)) <= 1e-12
    assert abs(float(loss) - tiny_config.train.lambda_adv * math.log(2.0)) <= 1e-12
    assert sr.shape == image.shape


def test_outer_loss_size_mismatch(tiny_config):
    theta = init_srnet(tiny_config.srnet, 1)
    disc = init_discriminator(tiny_config.discriminator, 2)
    with pytest.raises(ShapeMismatchError):
        outer_loss(
            theta,
            torch.rand(1, 3, 8, 8, dtype=torch.float64),
            torch.rand(1, 3, 8, 8, dtype=torch.float64),
            disc,
            torch.ones(1, 1, 4, 4, dtype=torch.float64),
            tiny_config,
        )


def test_discriminator_loss_detaches_sr(tiny_config):
    disc = init_discriminator(tiny_config.discriminator, 3)
    theta = init_srnet(tiny_config.srnet, 4)
    sr = srnet_forward(theta, torch.rand(1, 3, 8, 8, dtype=torch.float64), tiny_config.srnet)
    loss = discriminator_loss(disc, torch.rand(1, 3, 16, 16, dtype=torch.float64), sr, tiny_config)
    result = backward(loss, theta)
    assert set(result.unreachable) == set(theta.keys())
    assert abs(float(loss) - 2.0 * math.log(2.0)) <= 1e-12


def test_discriminator_loss_gradient_audit(tiny_config):
    config = tiny_config.model_copy(update={"discriminator": DiscriminatorConfig(width=3, depth=1)})
    gen = torch.Generator().manual_seed(5)
    params = dict(init_discriminator(config.discriminator, 0).items())
    params["head.weight"] = torch.randn(params["head.weight"].shape, generator=gen, dtype=torch.float64)
    real = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    fake = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    check_params(lambda p: discriminator_loss(p, real, fake, config), ParamSet(params))
