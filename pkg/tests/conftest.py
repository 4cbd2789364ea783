import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from socialagenda import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # One-time JIT (or cache load) so individual tests do not pay for it.
    kernels.warmup()


@pytest.fixture(scope="session")
def tiny_pipeline():
    """A small trained pipeline on synthetic data, shared across tests that
    only need a working model."""
    from socialagenda import synth
    from socialagenda.ingest import SplitSpec, split
    from socialagenda.pipeline import TrainConfig, train_pipeline
    from socialagenda.trees import HyperParams

    records = synth.generate(synth.SynthSpec(n_situations=240, seed=99))
    train, test = split(records, SplitSpec(seed=99))
    config = TrainConfig(
        grid=[HyperParams(n_trees=30, max_depth=8, min_samples_leaf=2,
                          features_per_split="sqrt", seed=99)],
        tune=False, seed=99,
    )
    model = train_pipeline(train, config)
    return model, train, test
