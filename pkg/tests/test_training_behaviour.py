"""完整训练后的行为检查（需要 --runslow）

fixtures/tiny.toml 检查步数与可复现性；fixtures/acceptance.toml 检查自适应收益与 MaskNet。
"""

from pathlib import Path

import pytest

from app.config import load_run_config
from app.engine.meta import TrainState
from app.evaluation import build_eval_tasks, evaluate_adaptation, evaluate_masks
from app.nets import load_checkpoint
from app.storage import RunStorage
from main import main

ROOT = Path(__file__).resolve().parents[1]
TINY = ROOT / "fixtures" / "tiny.toml"
ACCEPTANCE = ROOT / "fixtures" / "acceptance.toml"

pytestmark = pytest.mark.slow


def _train(config_path: Path, run: Path):
    assert main(["train", "--config", str(config_path), "--out", str(run)]) == 0
    checkpoint = load_checkpoint(run / RunStorage.CHECKPOINT_FILE)
    return run, load_run_config(config_path), TrainState.from_checkpoint(checkpoint)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    return _train(TINY, tmp_path_factory.mktemp("tiny") / "run")


@pytest.fixture(scope="module")
def accepted(tmp_path_factory):
    return _train(ACCEPTANCE, tmp_path_factory.mktemp("acceptance") / "run")


def test_fifty_logged_steps(trained):
    run, config, state = trained
    rows = RunStorage(run).read_log()
    assert [row["step"] for row in rows] == list(range(1, 51))
    assert state.step == 50
    assert len(state.masknet) == 2 * config.masknet.layers


def test_same_seed_reproduces_run(tmp_path, trained):
    run, _, _ = trained
    again = tmp_path / "again"
    assert main(["train", "--config", str(TINY), "--out", str(again)]) == 0
    for name in (RunStorage.LOG_FILE, RunStorage.CHECKPOINT_FILE):
        assert (again / name).read_bytes() == (run / name).read_bytes()


def test_one_step_adaptation_helps(accepted):
    _, config, state = accepted
    tasks = build_eval_tasks(config, config.degradation.profile(), config.eval.tasks)
    report = evaluate_adaptation(state, config, tasks, (0, 1, 10))
    assert report.improved_fraction(1) >= 0.8
    assert report.psnr_gain(1) >= 0.3
    assert report.mean_psnr(10) >= report.mean_psnr(1) - 0.05


def test_mask_follows_restoration_gaps(accepted):
    _, config, state = accepted
    tasks = build_eval_tasks(
        config, config.degradation.profile(), config.eval.mask_faces, strength=config.eval.mask_strength
    )
    report = evaluate_masks(state, config, tasks, faces=config.eval.mask_faces)
    assert len(report.correlations) == config.eval.mask_faces
    assert report.mean_correlation > 0.3
    assert report.inside_mean < report.outside_mean
