import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import concepts
from realize import RealizeConfig
from render import RenderConfig

SMALL_TASKS = ("eq_triangle", "radii", "lll")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_render():
    """64 px, hard edges, 2.5 px strokes."""
    return RenderConfig(pixels=64, stroke_width=10.0, antialias=False)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Three-concept dataset rendered at 64 px without antialiasing."""
    out = tmp_path_factory.mktemp("dataset")
    tasks = [concepts.get_task(c) for c in SMALL_TASKS]
    manifest = concepts.generate_dataset(1, out, RealizeConfig(), RenderConfig(pixels=64, antialias=False),
                                         jobs=2, tasks=tasks)
    return out, manifest
