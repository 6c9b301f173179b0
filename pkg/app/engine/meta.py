"""元训练：函数式内循环更新、穿过内循环的元梯度与三个 Adam 优化器。

一个训练步（对一批任务 T_i）：

1. MaskNet 由 (I_face_LR, I_face_BFR) 预测 m；
2. 加权 L1 内循环损失，单步 θ_n = θ − α∇θ L_in（create_graph）；
3. 在 θ_n 上计算外循环损失 L（L1 + 感知 + 对抗 + 正则）；
4. ΣL 同时对 θ 与 θ_m 反传（θ_m 的梯度经内循环更新与 L_reg 两条路径）；
5. ΣL_D 更新判别器；三组参数分别做 Adam。
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from ..config import RunConfig
from ..errors import NonFiniteError
from ..grad import AdamState, GradientTape, ParamSet, adam_step, backward
from ..grad import ops
from ..models import TaskSample
from ..nets import Checkpoint, init_discriminator, init_masknet, init_srnet, masknet_forward
from .losses import COMPONENTS, discriminator_loss, inner_loss, outer_loss

logger = logging.getLogger(__name__)

NETWORKS = ("srnet", "masknet", "disc")


def inner_update(
    theta: ParamSet,
    loss: torch.Tensor,
    alpha: float,
    *,
    create_graph: bool = False,
    tape: Optional[GradientTape] = None,
) -> ParamSet:
    """θ_n = θ − α∇θ L_in，函数式求值，不修改 θ

    create_graph 为 True 时 θ_n 保留到 θ 的图边（含二阶项）；
    否则梯度视为常数，即一阶近似。给定 tape 时由 tape 的模式决定，create_graph 被忽略。
    """
    if tape is None:
        tape = GradientTape(create_graph=create_graph)
    grads = tape.gradient(loss, theta, retain_graph=True).grads
    return theta.shifted(grads, alpha)


def meta_gradient(
    theta: ParamSet,
    inner_fn: Callable[[ParamSet], torch.Tensor],
    outer_fn: Callable[[ParamSet], torch.Tensor],
    alpha: float,
    *,
    first_order: bool = False,
) -> ParamSet:
    """d L_out(θ − α∇L_in(θ)) / dθ"""
    theta_n = inner_update(theta, inner_fn(theta), alpha, create_graph=not first_order)
    return backward(outer_fn(theta_n), theta).grads


@dataclass(slots=True)
class TrainState:
    """三组网络参数及其 Adam 状态"""
    step: int
    srnet: ParamSet
    masknet: ParamSet
    disc: ParamSet
    adam_srnet: AdamState
    adam_masknet: AdamState
    adam_disc: AdamState

    @classmethod
    def initialize(cls, config: RunConfig) -> "TrainState":
        srnet = init_srnet(config.srnet, config.seed)
        masknet = init_masknet(config.masknet, config.seed + 1)
        disc = init_discriminator(config.discriminator, config.seed + 2)
        return cls(
            step=0,
            srnet=srnet,
            masknet=masknet,
            disc=disc,
            adam_srnet=AdamState.zeros(srnet),
            adam_masknet=AdamState.zeros(masknet),
            adam_disc=AdamState.zeros(disc),
        )

    def groups(self) -> Dict[str, ParamSet]:
        """检查点中的张量分组（网络参数 + 优化器矩估计）"""
        groups: Dict[str, ParamSet] = {"srnet": self.srnet, "masknet": self.masknet, "disc": self.disc}
        for network, adam in zip(NETWORKS, (self.adam_srnet, self.adam_masknet, self.adam_disc)):
            groups[f"adam/{network}/exp_avg"] = adam.exp_avg
            groups[f"adam/{network}/exp_avg_sq"] = adam.exp_avg_sq
        return groups

    def meta(self) -> Dict[str, int]:
        return {
            "step": self.step,
            "adam_step_srnet": self.adam_srnet.step,
            "adam_step_masknet": self.adam_masknet.step,
            "adam_step_disc": self.adam_disc.step,
        }

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "TrainState":
        meta = checkpoint.meta

        def adam(network: str) -> AdamState:
            return AdamState(
                step=int(meta.get(f"adam_step_{network}", 0)),
                exp_avg=checkpoint.group(f"adam/{network}/exp_avg"),
                exp_avg_sq=checkpoint.group(f"adam/{network}/exp_avg_sq"),
            )

        return cls(
            step=int(meta.get("step", 0)),
            srnet=checkpoint.group("srnet").leaves(),
            masknet=checkpoint.group("masknet").leaves(),
            disc=checkpoint.group("disc").leaves(),
            adam_srnet=adam("srnet"),
            adam_masknet=adam("masknet"),
            adam_disc=adam("disc"),
        )


@dataclass(slots=True)
class StepMetrics:
    """一个训练步的日志行（各损失分量为批内任务之和）"""
    step: int
    loss: float
    l1: float
    perceptual: float
    adv: float
    reg: float
    inner_loss: float
    disc_loss: float
    mask_mean: float
    grad_norm_sr: float
    grad_norm_mask: float
    grad_norm_disc: float

    def as_row(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(slots=True)
class MetaGradients:
    srnet: ParamSet
    masknet: ParamSet
    disc: Optional[ParamSet]
    totals: Dict[str, float]


def uses_masknet(config: RunConfig) -> bool:
    return config.train.inner_supervision != "gt" and config.masknet.mode != "none"


def task_mask(masknet: ParamSet, task: TaskSample, config: RunConfig) -> torch.Tensor:
    """任务的权重图 m；不使用 MaskNet 时为全 1"""
    if not uses_masknet(config):
        bfr = task.face_bfr
        return torch.ones((bfr.shape[0], 1, *bfr.shape[2:]), dtype=bfr.dtype)
    return masknet_forward(masknet, task.face_lr, task.face_bfr, config.masknet)


def compute_meta_gradients(state: TrainState, tasks: Sequence[TaskSample], config: RunConfig) -> MetaGradients:
    """对一批任务求 ∂ΣL/∂θ、∂ΣL/∂θ_m 与 ∂ΣL_D/∂θ_D（按任务顺序累加）"""
    train = config.train
    totals = {key: 0.0 for key in ("loss", *COMPONENTS, "inner_loss", "disc_loss", "mask_mean")}
    use_disc = train.lambda_adv > 0
    outer_total: Optional[torch.Tensor] = None
    disc_total: Optional[torch.Tensor] = None

    with GradientTape() as outer_tape:
        for index, task in enumerate(tasks):
            target = task.face if train.inner_supervision == "gt" else task.face_bfr
            with GradientTape(create_graph=not train.first_order) as inner_tape:
                m = task_mask(state.masknet, task, config)
                m_inner = m if train.mask_inner_path else m.detach()
                loss_in = inner_loss(state.srnet, task.face_lr, target, m_inner, config.srnet)
            theta_n = inner_update(state.srnet, loss_in, train.inner_lr, tape=inner_tape)
            loss, components, sr = outer_loss(theta_n, task.image_lr, task.image, state.disc, m, config)
            outer_total = loss if outer_total is None else ops.add(outer_total, loss)

            totals["loss"] += float(loss.detach())
            totals["inner_loss"] += float(loss_in.detach())
            totals["mask_mean"] += float(m.detach().mean()) / len(tasks)
            for key in COMPONENTS:
                totals[key] += float(components[key].detach())
            if use_disc:
                loss_d = discriminator_loss(state.disc, task.image, sr, config)
                disc_total = loss_d if disc_total is None else ops.add(disc_total, loss_d)
                totals["disc_loss"] += float(loss_d.detach())
            logger.debug(
                f"任务 {index}: 内循环记录 {len(inner_tape.records)} 个算子（{inner_tape.mode}），"
                f"L={float(loss.detach()):.6f} L_in={float(loss_in.detach()):.6f}"
            )

    groups = {"srnet": state.srnet}
    if uses_masknet(config):
        groups["masknet"] = state.masknet
    wrt = ParamSet.combine(groups)
    grads = outer_tape.gradient(outer_total, wrt).grads.split()
    disc_grads = outer_tape.gradient(disc_total, state.disc).grads if disc_total is not None else None
    logger.debug(f"外循环记录 {len(outer_tape.records)} 个算子")
    return MetaGradients(
        srnet=grads.get("srnet", ParamSet()),
        masknet=grads.get("masknet", ParamSet()),
        disc=disc_grads,
        totals=totals,
    )


def train_step(state: TrainState, tasks: Sequence[TaskSample], config: RunConfig) -> Tuple[TrainState, StepMetrics]:
    """执行一个元训练步，返回新状态与日志行；任何非有限值都会中止该步"""
    train = config.train
    step = state.step + 1
    try:
        meta = compute_meta_gradients(state, tasks, config)
        adam = dict(beta1=train.beta1, beta2=train.beta2, eps=train.eps)
        srnet, adam_srnet = adam_step(state.srnet, meta.srnet, state.adam_srnet, lr=train.outer_lr, **adam)
        masknet, adam_masknet = state.masknet, state.adam_masknet
        if len(state.masknet) and uses_masknet(config):
            masknet, adam_masknet = adam_step(state.masknet, meta.masknet, state.adam_masknet, lr=train.mask_lr, **adam)
        disc, adam_disc = state.disc, state.adam_disc
        if meta.disc is not None:
            disc, adam_disc = adam_step(state.disc, meta.disc, state.adam_disc, lr=train.disc_lr, **adam)
    except NonFiniteError as exc:
        logger.error(f"训练步 {step} 中止：分量 {exc.op} 张量 {exc.name}：{exc}")
        raise

    totals = meta.totals
    metrics = StepMetrics(
        step=step,
        loss=totals["loss"],
        l1=totals["l1"],
        perceptual=totals["perceptual"],
        adv=totals["adv"],
        reg=totals["reg"],
        inner_loss=totals["inner_loss"],
        disc_loss=totals["disc_loss"],
        mask_mean=totals["mask_mean"],
        grad_norm_sr=meta.srnet.norm(),
        grad_norm_mask=meta.masknet.norm(),
        grad_norm_disc=meta.disc.norm() if meta.disc is not None else 0.0,
    )
    new_state = TrainState(
        step=step,
        srnet=srnet,
        masknet=masknet,
        disc=disc,
        adam_srnet=adam_srnet,
        adam_masknet=adam_masknet,
        adam_disc=adam_disc,
    )
    return new_state, metrics


def fit(
    state: TrainState,
    sample_batch: Callable[[int], List[TaskSample]],
    config: RunConfig,
    *,
    steps: int,
    on_step: Optional[Callable[[StepMetrics, TrainState], None]] = None,
    progress: bool = False,
) -> TrainState:
    """顺序执行 steps 个训练步；sample_batch(step) 给出该步的任务批"""
    for _ in tqdm(range(steps), desc="train", disable=not progress):
        tasks = sample_batch(state.step + 1)
        state, metrics = train_step(state, tasks, config)
        if on_step is not None:
            on_step(metrics, state)
        if metrics.step % config.train.log_every == 0:
            logger.info(
                f"step {metrics.step}: L={metrics.loss:.5f} l1={metrics.l1:.5f} "
                f"L_in={metrics.inner_loss:.5f} L_D={metrics.disc_loss:.5f} m̄={metrics.mask_mean:.4f}"
            )
    return state
