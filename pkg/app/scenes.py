"""场景数据：程序化合成场景、人脸库、目录读取与写出。

合成场景 = 程序化纹理背景 + 若干参数化人脸（椭圆脸形 + 眼/眉/鼻/口等
高频“关键点”标记）。人脸矩形与缩放倍数 s 对齐，总面积约为目标占比。
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy import ndimage

from .config import SceneConfig
from .errors import ShapeMismatchError
from .grad import DTYPE
from .imageio import load_png, save_png
from .metrics import sharpness_score
from .models import FaceRect, Provenance, SceneSample
from .utils.pool import ordered_map

logger = logging.getLogger(__name__)

SKIN_TONES = np.array(
    [[0.96, 0.80, 0.69], [0.87, 0.67, 0.53], [0.76, 0.57, 0.42], [0.55, 0.38, 0.26], [0.36, 0.24, 0.16]]
)
BUNDLED_SEED = 20240617


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    image = np.empty((3, height, width))
    image[:] = rng.uniform(0.25, 0.75, size=3)[:, None, None]
    for _ in range(4):
        angle = rng.uniform(0.0, math.pi)
        period = rng.uniform(3.0, 24.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        grating = np.sin(2.0 * math.pi * (xx * math.cos(angle) + yy * math.sin(angle)) / period + phase)
        image += rng.uniform(0.02, 0.12, size=3)[:, None, None] * grating[None]
    grain = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=rng.uniform(0.7, 2.0))
    image += rng.uniform(0.05, 0.2) * grain[None] / max(grain.std(), 1e-12) * 0.3
    for _ in range(int(rng.integers(2, 6))):
        h = int(rng.integers(4, max(5, height // 3)))
        w = int(rng.integers(4, max(5, width // 3)))
        top = int(rng.integers(0, height - h + 1))
        left = int(rng.integers(0, width - w + 1))
        image[:, top:top + h, left:left + w] = rng.uniform(0.0, 1.0, size=3)[:, None, None]
    return np.clip(image, 0.0, 1.0)


def _alpha(distance: np.ndarray, softness: float) -> np.ndarray:
    # distance < 0 在形状内部
    return np.clip(0.5 - distance / softness, 0.0, 1.0)


def _paint(canvas: np.ndarray, alpha: np.ndarray, color: np.ndarray) -> None:
    canvas *= 1.0 - alpha[None]
    canvas += alpha[None] * np.asarray(color, dtype=np.float64)[:, None, None]


def _draw_face(canvas: np.ndarray, rect: FaceRect, rng: np.random.Generator) -> None:
    region = canvas[:, rect.y:rect.y + rect.h, rect.x:rect.x + rect.w]
    yy, xx = np.mgrid[0:rect.h, 0:rect.w].astype(np.float64)
    u = (xx + 0.5 - rect.w / 2.0) / (rect.w / 2.0)
    v = (yy + 0.5 - rect.h / 2.0) / (rect.h / 2.0)
    soft = 4.0 / min(rect.w, rect.h)

    skin = np.clip(SKIN_TONES[int(rng.integers(len(SKIN_TONES)))] + rng.uniform(-0.04, 0.04, 3), 0, 1)
    hair = rng.uniform(0.02, 0.45, size=3) * rng.uniform(0.3, 1.0)
    hair_freq = rng.uniform(25.0, 45.0)

    head = np.sqrt((u / 0.98) ** 2 + (v / 1.0) ** 2) - 1.0
    stripes = 0.5 + 0.5 * np.sin(hair_freq * u + 6.0 * v)
    hair_alpha = _alpha(head, soft) * (v < -0.05)
    _paint(region, hair_alpha * (0.7 + 0.3 * stripes), hair)

    face = np.sqrt((u / 0.78) ** 2 + ((v - 0.08) / 0.88) ** 2) - 1.0
    _paint(region, _alpha(face, soft), skin)

    for side in (-1.0, 1.0):
        cx, cy = 0.33 * side, -0.12
        sclera = np.sqrt(((u - cx) / 0.17) ** 2 + ((v - cy) / 0.09) ** 2) - 1.0
        _paint(region, _alpha(sclera, soft), np.array([0.95, 0.95, 0.95]))
        iris = np.sqrt((u - cx) ** 2 + (v - cy) ** 2) / 0.07 - 1.0
        _paint(region, _alpha(iris, soft), rng.uniform(0.05, 0.35, size=3))
        brow = np.abs(v - (cy - 0.17 + 0.05 * (u - cx) ** 2 / 0.04)) / 0.025 - 1.0
        brow_alpha = _alpha(brow, soft * 2.0) * (np.abs(u - cx) < 0.2)
        _paint(region, brow_alpha, hair)
        # 睫毛：细密短线
        lashes = (np.sin(60.0 * u) > 0.3) & (np.abs(v - (cy - 0.1)) < 0.025) & (np.abs(u - cx) < 0.15)
        _paint(region, lashes.astype(np.float64) * 0.8, np.array([0.05, 0.05, 0.05]))

    nose = np.abs(u) / 0.025 - 1.0
    _paint(region, _alpha(nose, soft) * ((v > -0.02) & (v < 0.3)) * 0.5, skin * 0.6)
    mouth = np.abs(v - (0.47 + 0.6 * u ** 2)) / 0.035 - 1.0
    _paint(region, _alpha(mouth, soft) * (np.abs(u) < 0.3), np.array([0.62, 0.18, 0.2]))
    for _ in range(int(rng.integers(3, 9))):
        fx, fy = rng.uniform(-0.5, 0.5), rng.uniform(0.0, 0.4)
        mark = np.sqrt((u - fx) ** 2 + (v - fy) ** 2) / 0.02 - 1.0
        _paint(region, _alpha(mark, soft) * 0.6, skin * 0.5)


def _overlaps(rect: FaceRect, others: Sequence[FaceRect]) -> bool:
    return any(
        rect.x < o.x + o.w and o.x < rect.x + rect.w and rect.y < o.y + o.h and o.y < rect.y + rect.h
        for o in others
    )


def _place_faces(rng: np.random.Generator, config: SceneConfig, scale: int) -> List[FaceRect]:
    height, width = config.size
    count = int(rng.integers(1, config.max_faces + 1))
    total = config.face_fraction * height * width
    rects: List[FaceRect] = []
    for _ in range(count):
        area = total / count * rng.uniform(0.85, 1.15)
        side = int(round(math.sqrt(area) / scale)) * scale
        side = min(max(side, 4 * scale), (min(height, width) // scale) * scale)
        for _attempt in range(200):
            x = int(rng.integers(0, (width - side) // scale + 1)) * scale
            y = int(rng.integers(0, (height - side) // scale + 1)) * scale
            candidate = FaceRect(x, y, side, side)
            if not _overlaps(candidate, rects):
                rects.append(candidate)
                break
    return rects


def _render(rng: np.random.Generator, size: Tuple[int, int], faces: Sequence[FaceRect]) -> torch.Tensor:
    canvas = _background(rng, *size)
    for rect in faces:
        _draw_face(canvas, rect, rng)
    return torch.as_tensor(np.clip(canvas, 0.0, 1.0), dtype=DTYPE)


def gen_scenes(
    count: int,
    seed: int,
    config: SceneConfig = SceneConfig(),
    *,
    scale: int = 4,
    workers: int = 1,
) -> List[SceneSample]:
    """生成 count 个合成场景，对 seed 完全确定

    Args:
        count: 场景数量（> 0）
        seed: 随机种子
        config: 尺寸与人脸占比
        scale: 缩放倍数 s，图像尺寸与人脸矩形都按 s 对齐
        workers: 并行线程数；每个场景只依赖 (seed, index)，结果与线程数无关
    """
    if count <= 0:
        raise ValueError(f"场景数量必须为正，实际 {count}")
    height, width = config.size
    if height % scale or width % scale:
        raise ShapeMismatchError(f"场景尺寸 {config.size} 不能被 {scale} 整除")

    def one(index: int) -> SceneSample:
        rng = np.random.default_rng([seed, index])
        faces = _place_faces(rng, config, scale)
        return SceneSample(
            name=f"scene_{index:04d}",
            image=_render(rng, config.size, faces),
            faces=faces,
            provenance=Provenance.SYNTHETIC,
            metadata={"seed": seed, "index": index},
        )

    return ordered_map(one, range(count), workers=workers)


def gen_face_bank(count: int, seed: int, side: int, *, scale: int = 4) -> List[SceneSample]:
    """仅包含一张人脸（铺满整幅图）的样本，用于与自然图像分离的人脸来源"""
    side = max(scale, (side // scale) * scale)
    bank = []
    for index in range(count):
        rng = np.random.default_rng([seed, index, 1])
        rect = FaceRect(0, 0, side, side)
        bank.append(
            SceneSample(
                name=f"face_{index:04d}",
                image=_render(rng, (side, side), [rect]),
                faces=[rect],
                metadata={"seed": seed, "index": index},
            )
        )
    return bank


def bundled_test_scene() -> SceneSample:
    """固定的 64×64 测试场景（一张人脸 + 纹理背景）"""
    rng = np.random.default_rng(BUNDLED_SEED)
    face = FaceRect(20, 16, 24, 24)
    return SceneSample(name="bundled", image=_render(rng, (64, 64), [face]), faces=[face])


def bundled_test_image() -> torch.Tensor:
    return bundled_test_scene().image


def scene_set_hash(scenes: Sequence[SceneSample]) -> str:
    digest = hashlib.sha256()
    for scene in scenes:
        digest.update(scene.name.encode("utf-8"))
        digest.update(scene.image.detach().cpu().numpy().tobytes())
        digest.update(json.dumps([f.to_dict() for f in scene.faces]).encode("utf-8"))
    return digest.hexdigest()


# ------------------------------ 磁盘读写 ------------------------------

def write_scenes(scenes: Sequence[SceneSample], out_dir: Path) -> Path:
    """每个场景写 PNG + 同名 JSON 旁注，并写出汇总 metadata.json"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for scene in scenes:
        image_name = f"{scene.name}.png"
        save_png(out_dir / image_name, scene.image)
        entry = {
            "image": image_name,
            "faces": [f.to_dict() for f in scene.faces],
            "provenance": scene.provenance.value,
            "metadata": scene.metadata,
        }
        (out_dir / f"{scene.name}.json").write_text(json.dumps(entry, ensure_ascii=False, indent=2), encoding="utf-8")
        entries.append(entry)
    metadata_path = out_dir / "metadata.json"
    metadata_path.write_text(json.dumps({"scenes": entries}, ensure_ascii=False, indent=2), encoding="utf-8")
    logger.info(f"已写出 {len(entries)} 个场景到 {out_dir}")
    return metadata_path


def read_faces(path: Path) -> List[FaceRect]:
    """读取 {"faces": [{x, y, w, h}, ...]} 形式的人脸矩形文件"""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [FaceRect(int(f["x"]), int(f["y"]), int(f["w"]), int(f["h"])) for f in payload.get("faces", [])]


def load_folder(directory: Path, *, scale: int = 4, min_sharpness: Optional[float] = None) -> List[SceneSample]:
    """读取目录中的 PNG 及其 JSON 旁注；图像裁剪到能被 s 整除

    Args:
        directory: 图像目录
        scale: 缩放倍数 s
        min_sharpness: 若给定，丢弃拉普拉斯方差低于该阈值的图像
    """
    scenes = []
    for png in sorted(Path(directory).glob("*.png")):
        image = load_png(png)
        _, height, width = image.shape
        height, width = height - height % scale, width - width % scale
        image = image[:, :height, :width]
        if min_sharpness is not None and sharpness_score(image) < min_sharpness:
            logger.info(f"{png.name} 清晰度低于阈值 {min_sharpness}，已跳过")
            continue
        sidecar = png.with_suffix(".json")
        faces = read_faces(sidecar) if sidecar.exists() else []
        inside = [f for f in faces if f.inside(height, width)]
        if len(inside) < len(faces):
            logger.warning(f"{png.name}: {len(faces) - len(inside)} 个人脸矩形超出图像，已忽略")
        scenes.append(SceneSample(name=png.stem, image=image, faces=inside, provenance=Provenance.FOLDER))
    return scenes
