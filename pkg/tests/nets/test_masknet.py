import math

import pytest
import torch

from app.config import MaskNetConfig
from app.errors import MaskInputError, ShapeMismatchError
from app.grad import ops
from app.nets import init_masknet, masknet_forward
from app.nets.masknet import C0, mask_head
from gradcheck_utils import check_params


def _faces(seed, n=None, side=4, scale=2):
    gen = torch.Generator().manual_seed(seed)
    lead = () if n is None else (n,)
    lr = torch.rand(*lead, 3, side, side, generator=gen, dtype=torch.float64)
    bfr = torch.rand(*lead, 3, side * scale, side * scale, generator=gen, dtype=torch.float64)
    return lr, bfr


def test_offset_constant():
    assert C0 == pytest.approx(0.5413248546129181, abs=1e-15)
    assert math.log1p(math.exp(C0)) == pytest.approx(1.0, abs=1e-15)


def test_zero_head_gives_exactly_one():
    config = MaskNetConfig(width=8, layers=8)
    lr, bfr = _faces(0)
    m = masknet_forward(init_masknet(config, 0), lr, bfr, config)
    assert m.shape == (1, 8, 8)
    assert torch.equal(m, torch.ones_like(m))


def test_head_of_zero_raw_is_one():
    raw = torch.zeros(2, 1, 3, 3, dtype=torch.float64)
    assert torch.equal(mask_head(raw), torch.ones_like(raw))


def test_mask_is_nonnegative_and_sized_like_bfr():
    config = MaskNetConfig(width=6, layers=4, zero_head=False)
    params = init_masknet(config, 1)
    for seed in range(5):
        lr, bfr = _faces(seed, n=2, side=5, scale=3)
        m = masknet_forward(params, lr, bfr, config)
        assert m.shape == (2, 1, 15, 15)
        assert bool((m >= 0).all())


def test_degraded_reference_requires_lr():
    config = MaskNetConfig(width=4, layers=3)
    _, bfr = _faces(0)
    with pytest.raises(MaskInputError):
        masknet_forward(init_masknet(config, 0), None, bfr, config)


def test_non_integer_factor_rejected():
    config = MaskNetConfig(width=4, layers=3)
    gen = torch.Generator().manual_seed(0)
    lr = torch.rand(3, 3, 3, generator=gen, dtype=torch.float64)
    bfr = torch.rand(3, 8, 8, generator=gen, dtype=torch.float64)
    with pytest.raises(ShapeMismatchError):
        masknet_forward(init_masknet(config, 0), lr, bfr, config)


def test_no_reference_ignores_lr():
    config = MaskNetConfig(mode="no-reference", width=4, layers=3, zero_head=False)
    params = init_masknet(config, 2)
    lr, bfr = _faces(3)
    first = masknet_forward(params, lr, bfr, config)
    assert torch.equal(first, masknet_forward(params, torch.rand_like(lr), bfr, config))
    assert torch.equal(first, masknet_forward(params, None, bfr, config))
    assert params["conv.0.weight"].shape[1] == 3


def test_none_mode_has_no_parameters():
    config = MaskNetConfig(mode="none")
    params = init_masknet(config, 0)
    assert len(params) == 0
    _, bfr = _faces(0, n=3)
    assert torch.equal(masknet_forward(params, None, bfr, config), torch.ones(3, 1, 8, 8, dtype=torch.float64))


def test_gradient_audit():
    config = MaskNetConfig(width=3, layers=3, zero_head=False)
    lr, bfr = _faces(4, n=1)
    weights = torch.randn(1, 1, 8, 8, generator=torch.Generator().manual_seed(9), dtype=torch.float64)
    check_params(lambda p: ops.reduce_sum(ops.mul(masknet_forward(p, lr, bfr, config), weights)), init_masknet(config, 5))
