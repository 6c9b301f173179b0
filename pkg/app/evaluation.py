from __future__ import annotations

import logging
from dataclasses import dataclass, field
from statistics import fmean
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from . import degrade
from .config import RunConfig
from .degrade.profiles import DistributionProfile
from .engine.adapt import adapt_and_superresolve
from .engine.meta import TrainState
from .engine.tasks import scene_faces, task_seed
from .metrics import l1_distance, pearson, psnr, sharpness_score
from .models import DegradationSpec, FaceRect, SceneSample
from .nets import export_image, masknet_forward
from .oracle import error_map, restore
from .scenes import gen_scenes
from .utils.pool import ordered_map

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class EvalTask:
    """留出评估任务：场景、退化结果与人脸（真值与伪复原）"""
    index: int
    seed: int
    scene: SceneSample
    spec: DegradationSpec
    image_lr: torch.Tensor  # 整幅 LR 图像
    rects_lr: List[FaceRect]  # LR 坐标人脸矩形
    faces_lr: List[torch.Tensor]
    faces_hr: List[torch.Tensor]
    faces_bfr: List[torch.Tensor]
    supports: List[torch.Tensor]


@dataclass(slots=True)
class TaskEvaluation:
    index: int
    l1: Dict[int, float]
    psnr: Dict[int, float]
    sharpness: Dict[int, float]


@dataclass(slots=True)
class AdaptationReport:
    steps: Tuple[int, ...]
    tasks: List[TaskEvaluation]
    images: Dict[Tuple[int, int], torch.Tensor] = field(default_factory=dict)

    def mean_psnr(self, n: int) -> float:
        return fmean(task.psnr[n] for task in self.tasks)

    def mean_l1(self, n: int) -> float:
        return fmean(task.l1[n] for task in self.tasks)

    def improved_fraction(self, n: int) -> float:
        """n 步自适应后整图 L1 低于不自适应的任务比例"""
        return fmean(1.0 if task.l1[n] < task.l1[0] else 0.0 for task in self.tasks)

    def psnr_gain(self, n: int) -> float:
        return self.mean_psnr(n) - self.mean_psnr(0)

    @property
    def overall_ok(self) -> bool:
        if 0 not in self.steps or 1 not in self.steps:
            return False
        ok = self.improved_fraction(1) >= 0.8 and self.psnr_gain(1) >= 0.3
        if 10 in self.steps:
            ok = ok and self.mean_psnr(10) >= self.mean_psnr(1) - 0.05
        return ok

    def summary_rows(self) -> List[Dict[str, float]]:
        rows = []
        for n in self.steps:
            rows.append(
                {
                    "steps": n,
                    "mean_l1": self.mean_l1(n),
                    "mean_psnr": self.mean_psnr(n),
                    "mean_sharpness": fmean(task.sharpness[n] for task in self.tasks),
                    "improved_fraction": self.improved_fraction(n) if n else 0.0,
                }
            )
        return rows

    def to_dict(self) -> Dict:
        return {
            "steps": list(self.steps),
            "summary": self.summary_rows(),
            "overall_ok": self.overall_ok,
            "tasks": [
                {"index": t.index, "l1": t.l1, "psnr": t.psnr, "sharpness": t.sharpness} for t in self.tasks
            ],
        }


@dataclass(slots=True)
class MaskCorrelationReport:
    correlations: List[float]
    inside_means: List[float]
    outside_means: List[float]

    @property
    def mean_correlation(self) -> float:
        return fmean(self.correlations) if self.correlations else 0.0

    @property
    def inside_mean(self) -> float:
        return fmean(self.inside_means) if self.inside_means else 0.0

    @property
    def outside_mean(self) -> float:
        return fmean(self.outside_means) if self.outside_means else 0.0

    @property
    def overall_ok(self) -> bool:
        return self.mean_correlation > 0.3 and self.inside_mean < self.outside_mean

    def to_dict(self) -> Dict:
        return {
            "faces": len(self.correlations),
            "mean_correlation": self.mean_correlation,
            "mask_inside_support": self.inside_mean,
            "mask_outside_support": self.outside_mean,
            "overall_ok": self.overall_ok,
        }


def build_eval_task(
    scene: SceneSample,
    index: int,
    config: RunConfig,
    profile: DistributionProfile,
    *,
    strength: Optional[float] = None,
) -> EvalTask:
    s = config.scale
    seed = task_seed(config.seed + config.eval.seed_offset, index)
    spec = degrade.sample_spec(profile, seed, scale=s)
    image_lr = degrade.apply(spec, scene.image)
    rng = np.random.default_rng(seed)
    rects = scene_faces(scene, s)
    rects_lr, faces_lr, faces_hr, faces_bfr, supports = [], [], [], [], []
    for rect in rects:
        rect_lr = rect.scaled(1.0 / s)
        face_hr = scene.image[:, rect.y:rect.y + rect.h, rect.x:rect.x + rect.w]
        face_lr = image_lr[:, rect_lr.y:rect_lr.y + rect_lr.h, rect_lr.x:rect_lr.x + rect_lr.w]
        restorer = config.restorer.spec(
            seed=int(rng.integers(0, 2 ** 31 - 1)), strength=strength, max_side=min(rect.w, rect.h)
        )
        bfr, support = restore(restorer, face_lr, face_hr)
        rects_lr.append(rect_lr)
        faces_lr.append(face_lr)
        faces_hr.append(face_hr)
        faces_bfr.append(bfr)
        supports.append(support)
    return EvalTask(index, seed, scene, spec, image_lr, rects_lr, faces_lr, faces_hr, faces_bfr, supports)


def build_eval_tasks(
    config: RunConfig,
    profile: DistributionProfile,
    count: int,
    *,
    strength: Optional[float] = None,
) -> List[EvalTask]:
    """生成留出任务（场景种子与训练错开 eval.seed_offset），按 config.workers 跨场景并行"""
    seed = config.seed + config.eval.seed_offset
    scenes = gen_scenes(count, seed, config.scenes, scale=config.scale, workers=config.workers)
    return ordered_map(
        lambda item: build_eval_task(item[1], item[0], config, profile, strength=strength),
        list(enumerate(scenes)),
        workers=config.workers,
    )


def evaluate_adaptation(
    state: TrainState,
    config: RunConfig,
    tasks: Sequence[EvalTask],
    steps: Sequence[int],
    *,
    keep_images: bool = False,
    progress: bool = False,
) -> AdaptationReport:
    """同一基础检查点上比较不同自适应步数"""
    steps = tuple(sorted(set(steps)))
    bar = tqdm(total=len(tasks), desc="eval", disable=not progress)

    def one(task: EvalTask) -> Tuple[TaskEvaluation, Dict[Tuple[int, int], torch.Tensor]]:
        l1, quality, sharp, kept = {}, {}, {}, {}
        for n in steps:
            result = adapt_and_superresolve(
                state.srnet,
                state.masknet,
                task.image_lr,
                task.rects_lr,
                n,
                config.adapt_lr,
                bfr_faces=task.faces_bfr,
                config=config,
                seed=task.seed,
            )
            sr = export_image(result.image)
            l1[n] = l1_distance(sr, task.scene.image)
            quality[n] = psnr(sr, task.scene.image)
            sharp[n] = sharpness_score(sr)
            if keep_images:
                kept[(task.index, n)] = sr
        bar.update(1)
        return TaskEvaluation(task.index, l1, quality, sharp), kept

    with bar:
        outcomes = ordered_map(one, tasks, workers=config.workers)
    images: Dict[Tuple[int, int], torch.Tensor] = {}
    for _, kept in outcomes:
        images.update(kept)
    report = AdaptationReport(steps=steps, tasks=[result for result, _ in outcomes], images=images)
    for n in steps:
        logger.info(f"n={n}: PSNR {report.mean_psnr(n):.3f} dB, L1 {report.mean_l1(n):.5f}")
    return report


def evaluate_masks(state: TrainState, config: RunConfig, tasks: Sequence[EvalTask], *, faces: int) -> MaskCorrelationReport:
    """m 与 1 − EM 的 Pearson 相关，以及支撑内外的 m 均值"""
    correlations, inside, outside = [], [], []
    with torch.no_grad():
        for task in tasks:
            for face_lr, face_hr, bfr, support in zip(task.faces_lr, task.faces_hr, task.faces_bfr, task.supports):
                if len(correlations) >= faces:
                    break
                if not bool(support.any()):
                    continue
                m = masknet_forward(state.masknet.detached(), face_lr, bfr, config.masknet)[0]
                em = error_map(face_hr, bfr)
                correlations.append(pearson(m.numpy(), (1.0 - em).numpy()))
                inside.append(float(m[support].mean()))
                if bool((~support).any()):
                    outside.append(float(m[~support].mean()))
    report = MaskCorrelationReport(correlations, inside, outside)
    logger.info(f"掩码相关性 r={report.mean_correlation:.3f}（{len(correlations)} 张人脸）")
    return report
