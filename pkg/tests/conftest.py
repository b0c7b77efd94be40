from pathlib import Path

import numpy as np
import pytest

from morphparse import synthetic
from morphparse.config import ModelConfig
from morphparse.data import build_vocab
from morphparse.numerics import autodiff as ad

DATA = Path(__file__).parent / "data"


def tiny_config(**kw) -> ModelConfig:
    """Small widths for fast unit tests."""
    base = dict(word_dim=6, pos_dim=3, unit_dim=4, subword_hidden=3, cnn_char_dim=3, cnn_widths=(1, 2, 3),
                cnn_filters_per_width=2, lstm_hidden=4, lstm_layers=2, mlp_hidden=5, case_hidden=4)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def f64():
    with ad.default_dtype(np.float64):
        ad.reset_tape()
        yield
    ad.reset_tape()


@pytest.fixture(scope="session")
def toy():
    return synthetic.generate(12, seed=4)


@pytest.fixture(scope="session")
def toy_vocab(toy):
    return build_vocab(toy)
