"""任务构建：同一 DegradationSpec 作用于自然图像与人脸，切出内外循环所需的图像对。"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from .. import degrade
from ..config import RunConfig
from ..degrade.profiles import DistributionProfile
from ..errors import NoAdaptationSignalError, ShapeMismatchError
from ..models import DegradationSpec, FaceRect, SceneSample, TaskSample
from ..oracle import restore

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class FacePatches:
    """内循环人脸块批次（所有块同尺寸，可拼成一个批）"""
    lr: torch.Tensor  # (P, 3, p, p)
    bfr: torch.Tensor  # (P, 3, p·s, p·s)
    hr: Optional[torch.Tensor] = None  # 真值人脸块（若已知）
    support: Optional[torch.Tensor] = None  # (P, p·s, p·s) bool


def task_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def align_rect(rect: FaceRect, scale: int) -> Optional[FaceRect]:
    """向内收缩到 s 的整数倍；收缩后为空时返回 None"""
    left = -(-rect.x // scale) * scale
    top = -(-rect.y // scale) * scale
    right = ((rect.x + rect.w) // scale) * scale
    bottom = ((rect.y + rect.h) // scale) * scale
    if right <= left or bottom <= top:
        return None
    return FaceRect(left, top, right - left, bottom - top)


def _crop(image: torch.Tensor, rect: FaceRect) -> torch.Tensor:
    return image[:, rect.y:rect.y + rect.h, rect.x:rect.x + rect.w]


def _counts(faces: int, count: int, budget: str) -> List[int]:
    if budget == "per-face":
        return [count] * faces
    return [count // faces + (1 if i < count % faces else 0) for i in range(faces)]


def face_patches(
    faces_lr: Sequence[torch.Tensor],
    faces_bfr: Sequence[torch.Tensor],
    *,
    scale: int,
    mode: str,
    patch: int,
    count: int,
    budget: str,
    rng: np.random.Generator,
    faces_hr: Optional[Sequence[torch.Tensor]] = None,
    supports: Optional[Sequence[torch.Tensor]] = None,
) -> FacePatches:
    """从若干张人脸切出同尺寸的块并拼成一个内循环批次

    full 模式每张人脸取一个居中正方形（边长为所有人脸最短边）；
    patches 模式每张人脸随机取块（边长不超过 patch），
    数量按 per-face（每脸 count 块）或 total（共 count 块）分配。
    """
    if not faces_lr:
        raise NoAdaptationSignalError("没有可用于内循环的人脸")
    shortest = min(min(face.shape[-2:]) for face in faces_lr)
    if mode == "full":
        side, counts = shortest, [1] * len(faces_lr)
    else:
        side, counts = min(patch, shortest), _counts(len(faces_lr), count, budget)

    lr, bfr, hr, sup = [], [], [], []
    for index, face_lr in enumerate(faces_lr):
        height, width = face_lr.shape[-2:]
        big = faces_bfr[index]
        if tuple(big.shape[-2:]) != (height * scale, width * scale):
            raise ShapeMismatchError(f"第 {index} 张复原人脸尺寸 {tuple(big.shape)} 与 LR 人脸 ×{scale} 不符")
        for _ in range(counts[index]):
            if mode == "full":
                top, left = (height - side) // 2, (width - side) // 2
            else:
                top = int(rng.integers(0, height - side + 1))
                left = int(rng.integers(0, width - side + 1))
            lr.append(face_lr[:, top:top + side, left:left + side])
            hs = slice(top * scale, (top + side) * scale)
            ws = slice(left * scale, (left + side) * scale)
            bfr.append(big[:, hs, ws])
            if faces_hr is not None:
                hr.append(faces_hr[index][:, hs, ws])
            if supports is not None:
                sup.append(supports[index][hs, ws])
    return FacePatches(
        lr=torch.stack(lr),
        bfr=torch.stack(bfr),
        hr=torch.stack(hr) if hr else None,
        support=torch.stack(sup) if sup else None,
    )


def scene_faces(scene: SceneSample, scale: int) -> List[FaceRect]:
    rects = [align_rect(rect, scale) for rect in scene.faces]
    return [rect for rect in rects if rect is not None]


def make_task(
    scene: SceneSample,
    spec: DegradationSpec,
    config: RunConfig,
    rng: np.random.Generator,
    *,
    face_scene: Optional[SceneSample] = None,
) -> TaskSample:
    """构建一个训练任务

    Args:
        scene: 自然图像场景（外循环）
        spec: 本任务的退化参数，同时用于人脸
        config: 运行配置
        rng: 决定裁剪位置、人脸选择与复原器种子
        face_scene: 人脸来源为 separate 时使用的独立人脸图像
    """
    s = config.scale
    train = config.train
    image_lr_full = degrade.apply(spec, scene.image, noise_key=0)

    _, height, width = scene.image.shape
    side = (min(train.outer_patch, height, width) // s) * s
    top = int(rng.integers(0, (height - side) // s + 1)) * s
    left = int(rng.integers(0, (width - side) // s + 1)) * s
    image = scene.image[:, top:top + side, left:left + side]
    image_lr = image_lr_full[:, top // s:(top + side) // s, left // s:(left + side) // s]

    if train.face_source == "separate" and face_scene is not None:
        source, source_lr = face_scene, degrade.apply(spec, face_scene.image, noise_key=1)
    else:
        source, source_lr = scene, image_lr_full
    rects = scene_faces(source, s)
    if not rects:
        raise NoAdaptationSignalError(f"场景 {source.name} 中没有人脸")
    chosen = rng.permutation(len(rects))[: train.faces_per_task]

    faces_lr, faces_hr, faces_bfr, supports = [], [], [], []
    for index in sorted(int(i) for i in chosen):
        rect = rects[index]
        face_hr = _crop(source.image, rect)
        face_lr = _crop(source_lr, rect.scaled(1.0 / s))
        restorer = config.restorer.spec(seed=int(rng.integers(0, 2 ** 31 - 1)), max_side=min(rect.w, rect.h))
        bfr, support = restore(restorer, face_lr, face_hr)
        faces_lr.append(face_lr)
        faces_hr.append(face_hr)
        faces_bfr.append(bfr)
        supports.append(support)

    patches = face_patches(
        faces_lr,
        faces_bfr,
        scale=s,
        mode=train.patch_mode,
        patch=train.inner_patch,
        count=train.patches_per_face,
        budget=train.patch_budget,
        rng=rng,
        faces_hr=faces_hr,
        supports=supports,
    )
    return TaskSample(
        spec=spec,
        image=image,
        image_lr=image_lr,
        face=patches.hr,
        face_lr=patches.lr,
        face_bfr=patches.bfr,
        support=patches.support,
    )


class TaskSampler:
    """按 (seed, step, index) 确定性地采样任务批"""

    def __init__(
        self,
        config: RunConfig,
        scenes: Sequence[SceneSample],
        profile: DistributionProfile,
        *,
        face_bank: Sequence[SceneSample] = (),
    ) -> None:
        self.config = config
        self.scenes = [scene for scene in scenes if scene_faces(scene, config.scale)]
        if not self.scenes:
            raise NoAdaptationSignalError("训练场景中没有任何人脸")
        self.profile = profile
        self.face_bank = list(face_bank)

    def sample(self, step: int, index: int) -> TaskSample:
        seed = task_seed(self.config.seed, step, index)
        rng = np.random.default_rng(seed)
        scene = self.scenes[int(rng.integers(len(self.scenes)))]
        face_scene = self.face_bank[int(rng.integers(len(self.face_bank)))] if self.face_bank else None
        spec = degrade.sample_spec(self.profile, seed, scale=self.config.scale)
        return make_task(scene, spec, self.config, rng, face_scene=face_scene)

    def batch(self, step: int) -> List[TaskSample]:
        return [self.sample(step, index) for index in range(self.config.train.tasks_per_step)]


def split_face_pair(image_lr: torch.Tensor, rects: Sequence[FaceRect]) -> Tuple[List[torch.Tensor], List[FaceRect]]:
    """按 LR 坐标矩形切出人脸；矩形须位于图像内部"""
    _, height, width = image_lr.shape
    faces = []
    for rect in rects:
        if not rect.inside(height, width):
            raise ShapeMismatchError(f"人脸矩形 {rect.to_dict()} 超出图像 {height}×{width}")
        faces.append(_crop(image_lr, rect))
    return faces, list(rects)
