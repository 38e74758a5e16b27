"""Deterministic random-stream derivation.

Every stochastic component draws from an explicit stream derived from
``(run_seed, task_index)``, so independent workers can simulate batches
concurrently without sharing state and a run is reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np
import torch


def derive_stream(run_seed: int, task_index: int = 0) -> np.random.Generator:
    """Independent numpy generator for one task of a run."""
    return np.random.default_rng(np.random.SeedSequence([run_seed, task_index]))


def derive_torch_generator(run_seed: int, task_index: int = 0) -> torch.Generator:
    """Independent torch generator, derived through the same seed tree."""
    seed = int(np.random.SeedSequence([run_seed, task_index]).generate_state(1)[0])
    g = torch.Generator()
    g.manual_seed(seed)
    return g
