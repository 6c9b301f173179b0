from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from statistics import fmean
from typing import Any, Dict, List

from app import degrade
from app.config import RunConfig, load_environment, load_run_config, parse_run_config
from app.engine import TaskSampler, TrainState, adapt_and_superresolve, fit
from app.engine.tasks import task_seed
from app.errors import AppError
from app.evaluation import build_eval_task, build_eval_tasks, evaluate_adaptation, evaluate_masks
from app.imageio import load_png, save_png
from app.nets import export_image, load_checkpoint
from app.report import render_run_report, save_grid
from app.scenes import gen_face_bank, gen_scenes, load_folder, read_faces, scene_set_hash, write_scenes
from app.storage import RunStorage, write_csv
from app.utils.log import setup_logging

logger = logging.getLogger("main")

FACE_BANK_SIDE = 64


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="face-guided-sr",
        description="以人脸为引导的元学习盲超分命令行工具",
    )
    parser.add_argument("--log-level", default=None, help="日志级别（默认读取 FSR_LOG_LEVEL，否则 INFO）")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen_parser = subparsers.add_parser("gen-data", help="生成合成场景或整理目录中的图像")
    gen_parser.add_argument("--config", type=Path, default=None, help="TOML 配置文件")
    gen_parser.add_argument("--out", type=Path, required=True, help="输出目录")
    gen_parser.add_argument("--count", type=int, default=None, help="场景数量（默认 scenes.pool）")
    gen_parser.add_argument("--seed", type=int, default=None, help="随机种子（默认配置中的 seed）")
    gen_parser.add_argument("--from-folder", type=Path, default=None, help="从目录读取 PNG（及 JSON 人脸旁注）")
    gen_parser.add_argument("--min-sharpness", type=float, default=None, help="拉普拉斯方差阈值，低于该值的图像被丢弃")
    gen_parser.add_argument("--workers", type=int, default=None, help="并行线程数（默认配置中的 workers）")

    degrade_parser = subparsers.add_parser("degrade", help="按退化分布为场景生成 LR 图像")
    degrade_parser.add_argument("--config", type=Path, default=None, help="TOML 配置文件")
    degrade_parser.add_argument("--scenes", type=Path, required=True, help="gen-data 输出目录")
    degrade_parser.add_argument("--out", type=Path, required=True, help="输出目录")
    degrade_parser.add_argument("--profile", choices=("iid", "ood"), default=None, help="退化预设")
    degrade_parser.add_argument("--seed", type=int, default=None, help="随机种子")

    train_parser = subparsers.add_parser("train", help="元训练（写出检查点与 CSV 日志）")
    train_parser.add_argument("--config", type=Path, default=None, help="TOML 配置文件")
    train_parser.add_argument("--out", type=Path, default=None, help="运行目录（默认 output_dir）")
    train_parser.add_argument("--steps", type=int, default=None, help="覆盖 train.steps")
    train_parser.add_argument("--progress", action="store_true", help="显示进度条")

    adapt_parser = subparsers.add_parser("adapt", help="在图像人脸上自适应后超分")
    adapt_parser.add_argument("--checkpoint", type=Path, required=True, help="检查点文件")
    adapt_parser.add_argument("--out", type=Path, required=True, help="输出 PNG 路径")
    adapt_parser.add_argument("--steps", type=int, default=None, help="内循环步数 n（≥ 0）")
    adapt_parser.add_argument("--alpha", type=float, default=None, help="内循环学习率（默认沿用训练 α）")
    adapt_parser.add_argument("--image", type=Path, default=None, help="LR 输入图像")
    adapt_parser.add_argument("--faces", type=Path, default=None, help="LR 坐标人脸矩形 JSON")
    adapt_parser.add_argument("--bfr", type=Path, default=None, help="每张人脸的复原结果目录（按文件名排序对应）")
    adapt_parser.add_argument("--self-test", type=int, default=None, metavar="INDEX", help="使用第 INDEX 个留出合成任务")
    adapt_parser.add_argument("--profile", choices=("iid", "ood"), default=None, help="自测任务的退化预设")

    eval_parser = subparsers.add_parser("eval", help="在留出任务上评估 PSNR / 清晰度 / 掩码相关性")
    eval_parser.add_argument("--checkpoint", type=Path, required=True, help="检查点文件")
    eval_parser.add_argument("--out", type=Path, required=True, help="输出目录")
    eval_parser.add_argument("--tasks", type=int, default=None, help="留出任务数（默认 eval.tasks）")
    eval_parser.add_argument("--steps", type=int, nargs="+", default=None, help="比较的自适应步数")
    eval_parser.add_argument("--profile", choices=("iid", "ood"), default=None, help="退化预设")
    eval_parser.add_argument("--save-images", action="store_true", help="写出每个任务的超分结果")
    eval_parser.add_argument("--progress", action="store_true", help="显示进度条")
    eval_parser.add_argument("--workers", type=int, default=None, help="跨任务并行线程数")

    report_parser = subparsers.add_parser("report", help="渲染运行目录的汇总 CSV 与拼图")
    report_parser.add_argument("--run", type=Path, required=True, help="运行目录")
    report_parser.add_argument("--tasks", type=int, default=4, help="拼图中的留出任务数")

    return parser


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _with_workers(config: RunConfig, workers: int | None) -> RunConfig:
    if workers is None:
        return config
    if workers < 1:
        raise ValueError(f"--workers 必须 ≥ 1，实际 {workers}")
    return config.model_copy(update={"workers": workers})


def _checkpoint_config(path: Path) -> tuple[RunConfig, TrainState]:
    checkpoint = load_checkpoint(path)
    return parse_run_config(checkpoint.config), TrainState.from_checkpoint(checkpoint)


def handle_gen_data(args: argparse.Namespace) -> int:
    config = _with_workers(load_run_config(args.config), args.workers)
    if args.from_folder is not None:
        scenes = load_folder(args.from_folder, scale=config.scale, min_sharpness=args.min_sharpness)
    else:
        count = args.count if args.count is not None else config.scenes.pool
        seed = args.seed if args.seed is not None else config.seed
        scenes = gen_scenes(count, seed, config.scenes, scale=config.scale, workers=config.workers)
    metadata = write_scenes(scenes, args.out)
    _emit(
        {
            "scenes": len(scenes),
            "metadata": str(metadata),
            "hash": scene_set_hash(scenes),
            "face_fraction": fmean(s.face_area_fraction() for s in scenes) if scenes else 0.0,
        }
    )
    return 0


def handle_degrade(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    profile = config.degradation.profile(args.profile)
    seed = args.seed if args.seed is not None else config.seed
    scenes = load_folder(args.scenes, scale=config.scale)
    args.out.mkdir(parents=True, exist_ok=True)
    written: List[str] = []
    for index, scene in enumerate(scenes):
        spec = degrade.sample_spec(profile, task_seed(seed, index), scale=config.scale)
        lr = degrade.apply(spec, scene.image)
        name = f"{scene.name}_lr"
        save_png(args.out / f"{name}.png", lr)
        sidecar = {
            "image": f"{name}.png",
            "hr_image": f"{scene.name}.png",
            "profile": profile.name,
            "faces": [face.scaled(1.0 / config.scale).to_dict() for face in scene.faces],
            "spec": spec.to_dict(),
        }
        (args.out / f"{name}.json").write_text(json.dumps(sidecar, ensure_ascii=False, indent=2), encoding="utf-8")
        written.append(name)
    _emit({"profile": profile.name, "pairs": len(written), "out": str(args.out)})
    return 0


def handle_train(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    if args.steps is not None:
        config = config.model_copy(update={"train": config.train.model_copy(update={"steps": args.steps})})
    run_dir = args.out or Path(config.output_dir)
    profile = config.degradation.profile()

    if config.scenes.data_dir:
        scenes = load_folder(Path(config.scenes.data_dir), scale=config.scale)
    else:
        scenes = gen_scenes(config.scenes.pool, config.seed, config.scenes, scale=config.scale)
    face_bank = []
    if config.train.face_source == "separate":
        face_bank = gen_face_bank(config.scenes.pool, config.seed + 7, FACE_BANK_SIDE, scale=config.scale)
    sampler = TaskSampler(config, scenes, profile, face_bank=face_bank)

    with RunStorage(run_dir) as storage:
        storage.write_config(config.echo())
        storage.start_log()
        state = TrainState.initialize(config)
        logger.info(f"开始训练：{config.train.steps} 步，运行目录 {run_dir}")
        state = fit(
            state,
            sampler.batch,
            config,
            steps=config.train.steps,
            on_step=lambda metrics, _state: storage.append_log(metrics.as_row()),
            progress=args.progress,
        )
        checkpoint = storage.save_checkpoint(state.groups(), config=config.echo(), meta=state.meta())
        summary = render_run_report(storage.log_path, storage.report_dir)

    _emit(
        {
            "run_dir": str(run_dir),
            "steps": state.step,
            "checkpoint": str(checkpoint),
            "checkpoint_sha256": _file_sha256(checkpoint),
            "train_log": str(run_dir / RunStorage.LOG_FILE),
            "summary": str(summary) if summary else None,
        }
    )
    return 0


def handle_adapt(args: argparse.Namespace) -> int:
    config, state = _checkpoint_config(args.checkpoint)
    steps = args.steps if args.steps is not None else config.adapt.steps
    alpha = args.alpha if args.alpha is not None else config.adapt_lr

    if args.self_test is not None:
        index = args.self_test
        profile = config.degradation.profile(args.profile)
        scene = gen_scenes(index + 1, config.seed + config.eval.seed_offset, config.scenes, scale=config.scale)[index]
        task = build_eval_task(scene, index, config, profile)
        image_lr, rects, bfr_faces, seed = task.image_lr, task.rects_lr, task.faces_bfr, task.seed
    else:
        if args.image is None:
            logger.error("需要 --image 或 --self-test")
            return 2
        image_lr = load_png(args.image)
        rects = read_faces(args.faces) if args.faces is not None else []
        bfr_faces = [load_png(p) for p in sorted(args.bfr.glob("*.png"))] if args.bfr is not None else []
        if steps > 0 and rects and not bfr_faces:
            logger.error("自适应需要 --bfr 提供每张人脸的复原结果")
            return 2
        seed = config.seed

    result = adapt_and_superresolve(
        state.srnet, state.masknet, image_lr, rects, steps, alpha, bfr_faces=bfr_faces, config=config, seed=seed
    )
    output = save_png(args.out, export_image(result.image))
    _emit({"output": str(output), "steps": steps, "alpha": alpha, "inner_losses": result.inner_losses})
    return 0


def handle_eval(args: argparse.Namespace) -> int:
    config, state = _checkpoint_config(args.checkpoint)
    config = _with_workers(config, args.workers)
    profile = config.degradation.profile(args.profile)
    count = args.tasks if args.tasks is not None else config.eval.tasks
    steps = tuple(args.steps) if args.steps else config.eval.steps

    tasks = build_eval_tasks(config, profile, count)
    adaptation = evaluate_adaptation(state, config, tasks, steps, keep_images=args.save_images, progress=args.progress)
    mask_tasks = build_eval_tasks(config, profile, config.eval.mask_faces, strength=config.eval.mask_strength)
    masks = evaluate_masks(state, config, mask_tasks, faces=config.eval.mask_faces)

    args.out.mkdir(parents=True, exist_ok=True)
    for (index, n), image in adaptation.images.items():
        save_png(args.out / f"task_{index:03d}_n{n}.png", image)
    summary = write_csv(
        args.out / "eval_summary.csv",
        ("steps", "mean_l1", "mean_psnr", "mean_sharpness", "improved_fraction"),
        adaptation.summary_rows(),
        schema="# schema: eval-summary v1",
    )
    payload = {"profile": profile.name, "adaptation": adaptation.to_dict(), "mask": masks.to_dict()}
    (args.out / "eval.json").write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    _emit(
        {
            "profile": profile.name,
            "summary": adaptation.summary_rows(),
            "mask": masks.to_dict(),
            "eval_summary": str(summary),
        }
    )
    return 0


def handle_report(args: argparse.Namespace) -> int:
    storage = RunStorage(args.run)
    outputs: Dict[str, Any] = {"summary": None, "grid": None}
    if storage.log_path.exists():
        summary = render_run_report(storage.log_path, storage.report_dir)
        outputs["summary"] = str(summary) if summary else None
    if storage.checkpoint_path.exists():
        try:
            config, state = _checkpoint_config(storage.checkpoint_path)
            tasks = build_eval_tasks(config, config.degradation.profile(), args.tasks)
            report = evaluate_adaptation(state, config, tasks, (0, 1), keep_images=True)
            rows = [
                [task.image_lr, report.images[(task.index, 0)], report.images[(task.index, 1)], task.scene.image]
                for task in tasks
            ]
            grid = save_grid(storage.report_dir / "adaptation_grid.png", rows)
            outputs["grid"] = str(grid) if grid else None
        except AppError as exc:
            logger.warning(f"拼图生成失败: {exc}")
    _emit(outputs)
    return 0


HANDLERS = {
    "gen-data": handle_gen_data,
    "degrade": handle_degrade,
    "train": handle_train,
    "adapt": handle_adapt,
    "eval": handle_eval,
    "report": handle_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    load_environment()
    setup_logging(args.log_level)
    handler = HANDLERS.get(args.command)
    if handler is None:
        parser.error("未知命令")
        return 2
    try:
        return handler(args)
    except (AppError, ValueError, OSError) as exc:
        logger.error(f"{args.command} 失败: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
