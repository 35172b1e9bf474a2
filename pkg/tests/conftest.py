import numpy as np
import pytest

from motionflow.model import Tokenizer
from motionflow.skeleton import load_default_skeleton
from motionflow.synth import all_training_captions


@pytest.fixture(scope="session")
def skeleton():
    return load_default_skeleton()


@pytest.fixture(scope="session")
def tokenizer():
    return Tokenizer.from_texts(all_training_captions())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
