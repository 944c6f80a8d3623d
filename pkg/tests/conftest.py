import numpy as np
import pytest

from sketchloom.augment import AugmentParams
from sketchloom.config import ConfigFile, EvalConfig, ModelConfig, TrainConfig
from sketchloom.dataset import generate_synthetic_corpus


def tiny_config(**train) -> ConfigFile:
    """32-pixel, narrow-width config that trains in well under a second per step."""
    defaults = dict(total_g_steps=6, eval_every=3, lr_step_size=4)
    defaults.update(train)
    return ConfigFile(
        augment=AugmentParams(resize_to=36, crop_to=32),
        model=ModelConfig(image_size=32, g_base_width=4, g_depth=5, d_base_width=4, d_depth=2),
        train=TrainConfig(**defaults),
        eval=EvalConfig(feature_dim=8),
    )


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    return generate_synthetic_corpus(12, 32, 3, tmp_path_factory.mktemp("tiny_corpus"), split_ratio=0.75)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record and assert one acceptance criterion; the lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
