import numpy as np
import pytest

from mug.body_template import build_synthetic_template, build_template_bank
from mug.synthetic_data import generate_scene


@pytest.fixture(scope="session")
def toy_template():
    return build_synthetic_template("h36m17", target_v=40, ring_size=4)


@pytest.fixture(scope="session")
def toy_bank(toy_template):
    return build_template_bank(toy_template, seed=0)


@pytest.fixture(scope="session")
def full_template():
    return build_synthetic_template("h36m17")


@pytest.fixture(scope="session")
def full_bank(full_template):
    return build_template_bank(full_template, seed=0)


@pytest.fixture(scope="session")
def toy_scenes(toy_bank):
    return [generate_scene(seed=100 + i, K=2 + i % 2, bank=toy_bank) for i in range(6)]
