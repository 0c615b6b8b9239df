import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from rtmv.model import ModelConfig, build_model


@pytest.fixture
def tiny_config():
    return ModelConfig(patch_size=4, embed_dim=16, num_blocks=2, num_heads=2)


@pytest.fixture
def desk_config():
    return ModelConfig(patch_size=8, embed_dim=32, num_blocks=4, num_heads=4)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config, seed=0)


def random_frames(rng: np.random.Generator, n: int, hw: int = 16, thermal_every: int = 2):
    """(images, modalities): alternating RGB (H,W,3) and thermal (H,W) frames."""
    images, modalities = [], []
    for i in range(n):
        if thermal_every and i % thermal_every == 1:
            images.append(rng.random((hw, hw)).astype(np.float32))
            modalities.append("thermal")
        else:
            images.append(rng.random((hw, hw, 3)).astype(np.float32))
            modalities.append("rgb")
    return images, modalities


@pytest.fixture
def frame_factory():
    return random_frames
