import logging

import numpy as np
import pytest

from backdoor_purifier.models.representation import CleanReference, RepresentationMatrix
from backdoor_purifier.models.synthetic import SubspaceModelConfig
from backdoor_purifier.services import repr_store, synthetic
from backdoor_purifier.utils.logging_config import _HANDLER_TAG

# Small infected dataset that the whole pipeline separates cleanly:
# six classes, one of them with a third of its samples poisoned.
SMALL_CONFIG = SubspaceModelConfig(
    n=32, T=6, d=3, m_per_class=60, infected_class=0, m_poison=30,
    noise_sigma=0.01, subspace_angle=0.2, trigger_strength=0.2, seed=1,
)


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root.removeHandler(handler)
            handler.close()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def zero_reference():
    def make(n: int) -> CleanReference:
        return CleanReference(mean=np.zeros(n), count=1)
    return make


@pytest.fixture
def preprocessed(zero_reference):
    """Unit-normalize raw rows against a zero clean mean."""
    def make(rows: np.ndarray, class_id: str = '0'):
        return repr_store.preprocess(
            RepresentationMatrix(rows), zero_reference(rows.shape[1]), class_id=class_id
        )
    return make


@pytest.fixture(scope='session')
def small_synthetic():
    return synthetic.generate(SMALL_CONFIG)


@pytest.fixture
def small_files(tmp_path, small_synthetic):
    """The small synthetic dataset written as CSV files."""
    return synthetic.save_synthetic(small_synthetic, str(tmp_path / 'data'), 'csv')
