"""三个可训练网络（SR 网络、MaskNet、判别器）与冻结的感知特征提取器"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .discriminator import discriminator_forward, init_discriminator
from .masknet import init_masknet, masknet_forward
from .perceptual import perceptual_distance, perceptual_features
from .srnet import export_image, init_srnet, srnet_forward

__all__ = [
    "Checkpoint",
    "discriminator_forward",
    "export_image",
    "init_discriminator",
    "init_masknet",
    "init_srnet",
    "load_checkpoint",
    "masknet_forward",
    "perceptual_distance",
    "perceptual_features",
    "save_checkpoint",
    "srnet_forward",
]
