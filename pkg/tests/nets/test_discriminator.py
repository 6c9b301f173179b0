import pytest
import torch

from app.config import DiscriminatorConfig
from app.errors import ShapeMismatchError
from app.grad import ParamSet
from app.grad import ops
from app.nets import discriminator_forward, init_discriminator
from app.nets.discriminator import stride_product
from gradcheck_utils import check_params


def test_zero_head_gives_zero_logits():
    config = DiscriminatorConfig()
    logits = discriminator_forward(init_discriminator(config, 0), torch.rand(2, 3, 32, 32, dtype=torch.float64), config)
    assert torch.equal(logits, torch.zeros_like(logits))
    assert torch.equal(torch.sigmoid(logits), torch.full_like(logits, 0.5))


@pytest.mark.parametrize("depth", [0, 1, 2, 3])
def test_logit_map_shrinks_by_stride_product(depth):
    config = DiscriminatorConfig(width=4, depth=depth)
    logits = discriminator_forward(init_discriminator(config, 0), torch.rand(3, 32, 24, dtype=torch.float64), config)
    factor = stride_product(config)
    assert logits.shape == (1, 1, 32 // factor, 24 // factor)


def test_width_is_capped():
    config = DiscriminatorConfig(width=2, depth=5)
    params = init_discriminator(config, 0)
    assert params["down.4.weight"].shape[0] == 16


def test_rejects_non_image():
    config = DiscriminatorConfig(width=4, depth=1)
    with pytest.raises(ShapeMismatchError):
        discriminator_forward(init_discriminator(config, 0), torch.rand(32, 32, dtype=torch.float64), config)


def test_gradient_audit():
    config = DiscriminatorConfig(width=3, depth=1)
    gen = torch.Generator().manual_seed(2)
    params = dict(init_discriminator(config, 1).items())
    params["head.weight"] = torch.randn(params["head.weight"].shape, generator=gen, dtype=torch.float64)
    image = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
    check_params(lambda p: ops.reduce_sum(ops.square(discriminator_forward(p, image, config))), ParamSet(params))
