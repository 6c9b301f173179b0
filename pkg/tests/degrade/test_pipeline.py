import numpy as np
import pytest
import torch

from app import degrade
from app.errors import DegradationError, QualityRangeError
from app.imageio import png_bytes
from app.metrics import psnr
from app.models import (
    BlurKind,
    BlurSpec,
    CompressionSpec,
    DegradationSpec,
    NoiseKind,
    NoiseSpec,
    ResampleFilter,
    ResampleSpec,
    StageSpec,
)


def _single_stage(blur=None, noise=None, compression=None, factor=0.25, filter=ResampleFilter.BICUBIC):
    stage = StageSpec(blur=blur, resample=ResampleSpec(factor, filter), noise=noise, compression=compression)
    return DegradationSpec(stages=(stage,), scale=4, seed=0)


def test_output_size(bundled_image):
    for seed in range(10):
        lr = degrade.apply(degrade.sample_spec(degrade.preset("iid"), seed), bundled_image)
        assert lr.shape == (3, 16, 16)
        assert float(lr.min()) >= 0.0 and float(lr.max()) <= 1.0


def test_identity_spec_equals_bicubic(bundled_image):
    delta = BlurSpec(kind=BlurKind.GAUSSIAN_ISO, size=1, sigma_x=1.0, sigma_y=1.0)
    lr = degrade.apply(_single_stage(blur=delta), bundled_image)
    assert torch.equal(lr, torch.clamp(degrade.bicubic_downscale(bundled_image, 4), 0.0, 1.0))


def test_identity_spec_with_zero_noise_and_quality_100(bundled_image):
    spec = _single_stage(
        noise=NoiseSpec(kind=NoiseKind.GAUSSIAN, strength=0.0), compression=CompressionSpec(100)
    )
    reference = torch.clamp(degrade.bicubic_downscale(bundled_image, 4), 0.0, 1.0)
    assert psnr(degrade.apply(spec, bundled_image), reference) > 45.0


def test_constant_image_stays_constant():
    image = torch.full((3, 32, 32), 0.4, dtype=torch.float64)
    blur = BlurSpec(kind=BlurKind.GAUSSIAN_ANISO, size=7, sigma_x=2.0, sigma_y=0.7, angle=0.4)
    lr = degrade.apply(_single_stage(blur=blur, filter=ResampleFilter.BILINEAR), image)
    assert torch.allclose(lr, torch.full_like(lr, 0.4), atol=1e-12)


def test_seed_determinism(bundled_image):
    spec = degrade.sample_spec(degrade.preset("iid"), 42)
    assert torch.equal(degrade.apply(spec, bundled_image), degrade.apply(spec, bundled_image))


def test_noise_key_gives_independent_noise(bundled_image):
    spec = _single_stage(noise=NoiseSpec(kind=NoiseKind.GAUSSIAN, strength=10.0))
    assert not torch.equal(degrade.apply(spec, bundled_image, noise_key=0), degrade.apply(spec, bundled_image, noise_key=1))


def test_golden_lr(bundled_image, golden):
    spec = degrade.sample_spec(degrade.preset("iid"), 42)
    golden("degrade_seed42_lr.png", png_bytes(degrade.apply(spec, bundled_image)))


def test_interior_crop_commutes(bundled_image):
    stage1 = StageSpec(
        blur=BlurSpec(kind=BlurKind.GAUSSIAN_ISO, size=7, sigma_x=1.3, sigma_y=1.3),
        resample=ResampleSpec(0.5, ResampleFilter.BILINEAR),
    )
    stage2 = StageSpec(
        blur=BlurSpec(kind=BlurKind.GAUSSIAN_ANISO, size=5, sigma_x=1.0, sigma_y=0.6, angle=0.3),
        resample=ResampleSpec(0.5, ResampleFilter.BILINEAR),
    )
    spec = DegradationSpec(stages=(stage1, stage2), scale=4, seed=3)
    full = degrade.apply(spec, bundled_image)
    part = degrade.apply(spec, bundled_image[:, 8:56, 8:56])
    interior_full = full[:, 6:10, 6:10]
    interior_part = part[:, 4:8, 4:8]
    assert float((interior_full - interior_part).abs().max()) < 1e-6


def test_dims_not_divisible():
    with pytest.raises(DegradationError):
        degrade.apply(_single_stage(), torch.zeros(3, 30, 32, dtype=torch.float64))


def test_kernel_larger_than_image():
    blur = BlurSpec(kind=BlurKind.GAUSSIAN_ISO, size=21, sigma_x=2.0, sigma_y=2.0)
    with pytest.raises(DegradationError):
        degrade.apply(_single_stage(blur=blur), torch.zeros(3, 16, 16, dtype=torch.float64))


class TestCompression:
    def test_quality_range(self, bundled_image):
        for quality in (9, 101):
            with pytest.raises(QualityRangeError):
                degrade.compress(bundled_image, quality)

    def test_quality_100_is_near_lossless(self, bundled_image):
        assert psnr(degrade.compress(bundled_image, 100), bundled_image) > 45.0

    def test_error_monotone_in_quality(self, bundled_image):
        errors = [float((degrade.compress(bundled_image, q) - bundled_image).abs().mean()) for q in (10, 50, 90)]
        assert errors[0] >= errors[1] >= errors[2]

    @pytest.mark.parametrize("quality", [10, 37, 100])
    def test_constant_image_is_fixed_point(self, quality):
        image = torch.full((3, 20, 20), 0.7, dtype=torch.float64)
        assert torch.allclose(degrade.compress(image, quality), image, atol=1e-12)

    def test_output_range(self):
        image = torch.as_tensor(np.random.default_rng(0).random((3, 16, 16)), dtype=torch.float64)
        out = degrade.compress(image, 10)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0
