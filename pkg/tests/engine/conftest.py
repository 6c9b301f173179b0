import pytest

from app.engine import TaskSampler
from app.scenes import gen_scenes


@pytest.fixture
def scenes(tiny_config):
    return gen_scenes(tiny_config.scenes.pool, tiny_config.seed, tiny_config.scenes, scale=tiny_config.scale)


@pytest.fixture
def sampler(tiny_config, scenes):
    return TaskSampler(tiny_config, scenes, tiny_config.degradation.profile())


@pytest.fixture
def tasks(sampler):
    return sampler.batch(1)


@pytest.fixture
def with_train():
    """绕过校验替换训练超参数（用于 α = 0 等退化情形）"""

    def build(config, **update):
        return config.model_copy(update={"train": config.train.model_copy(update=update)})

    return build
