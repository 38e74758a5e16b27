import numpy as np
import pytest
import torch

# Small-model tests gain nothing from thread parallelism and determinism
# across processes is simpler with one thread.
torch.set_num_threads(max(1, min(4, torch.get_num_threads())))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def torch_gen():
    g = torch.Generator()
    g.manual_seed(1234)
    return g
