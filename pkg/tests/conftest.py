# -*- coding: utf-8 -*-
import pytest
import torch

from src.models.Codec import CodecNetConfig, build_model
from src.models.rsvq import IvqStageConfig, QuantizerConfig, SqStageConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="need --runslow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def low_cfg():
    return QuantizerConfig(
        32,
        (SqStageConfig((4, 4, 4, 4, 4)),),
        (IvqStageConfig(32, 1024), IvqStageConfig(32, 1024)),
        name="low",
    )


@pytest.fixture
def high_cfg():
    return QuantizerConfig(
        32,
        (SqStageConfig((11, 11, 10, 10, 10, 9)),),
        (IvqStageConfig(32, 1024), IvqStageConfig(32, 1024)),
        name="high",
    )


@pytest.fixture
def small_net_cfg():
    return CodecNetConfig(hidden=8, num_blocks=2)


@pytest.fixture
def small_model(small_net_cfg, low_cfg):
    model = build_model(small_net_cfg, low_cfg, seed=0)
    model.eval()
    return model


@pytest.fixture
def noise():
    generator = torch.Generator().manual_seed(0)
    return 0.1 * torch.randn(16000, generator=generator, dtype=torch.float64)
