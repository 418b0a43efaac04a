from dataclasses import replace

import numpy as np
import pytest

from backdoor_purifier.errors import InfeasibleConfig
from backdoor_purifier.models.synthetic import GroundTruth
from backdoor_purifier.services import repr_store, synthetic
from tests.conftest import SMALL_CONFIG


def test_principal_angles_of_identical_and_orthogonal_spans():
    basis = np.eye(5)[:, :2]
    assert np.allclose(synthetic.principal_angles(basis, basis), 0.0, atol=1e-7)
    angles = synthetic.principal_angles(np.eye(4)[:, :1], np.eye(4)[:, 1:2])
    assert angles == pytest.approx([np.pi / 2])


def test_principal_angles_match_singular_values(rng):
    for _ in range(20):
        B1, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        B2, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        cosines = np.clip(np.linalg.svd(B1.T @ B2, compute_uv=False), -1, 1)
        expected = np.sort(np.arccos(cosines))
        assert np.allclose(synthetic.principal_angles(B1, B2), expected, atol=1e-8)


def test_principal_angles_reject_mismatched_spaces():
    with pytest.raises(ValueError):
        synthetic.principal_angles(np.eye(3), np.eye(4))


def test_generated_layout(small_synthetic):
    ds = small_synthetic.dataset
    cfg = SMALL_CONFIG
    assert ds.m == cfg.T * cfg.m_per_class + cfg.m_poison
    assert ds.matrix.n == cfg.n
    assert ds.class_ids == [str(c) for c in range(cfg.T)]
    assert ds.labels.count('0') == cfg.m_per_class + cfg.m_poison
    assert ds.sample_ids[:3] == ('0', '1', '2')

    truth = small_synthetic.ground_truth
    assert truth.infected_classes == ['0']
    assert truth.poisoned_indices['0'] == list(range(60, 90))
    assert all(truth.poisoned_indices[c] == [] for c in ds.class_ids if c != '0')
    assert truth.class_spans['0'] == (0, 90)
    assert truth.class_spans['1'] == (90, 150)

    assert small_synthetic.clean.m == cfg.T * cfg.clean_per_class
    assert small_synthetic.reference.mean.shape == (cfg.n,)


def test_generation_is_deterministic(small_synthetic):
    again = synthetic.generate(SMALL_CONFIG)
    assert np.array_equal(again.dataset.matrix.data, small_synthetic.dataset.matrix.data)
    assert np.array_equal(again.clean.data, small_synthetic.clean.data)
    other = synthetic.generate(replace(SMALL_CONFIG, seed=8))
    assert not np.array_equal(other.dataset.matrix.data, small_synthetic.dataset.matrix.data)


def test_poison_subspace_sits_at_the_requested_angle(small_synthetic):
    truth = small_synthetic.ground_truth
    angles = truth.principal_angles['0'][0]
    assert angles == pytest.approx([SMALL_CONFIG.subspace_angle] * SMALL_CONFIG.d, abs=1e-9)
    basis = truth.bases['0']
    assert np.allclose(basis.T @ basis, np.eye(SMALL_CONFIG.d), atol=1e-12)


def test_poisoned_rows_leave_the_authentic_subspace(small_synthetic):
    data = small_synthetic.dataset.matrix.data
    basis = small_synthetic.ground_truth.bases['0']
    residual = data[:90] - (data[:90] @ basis) @ basis.T
    energy = np.sum(residual ** 2, axis=1)
    assert energy[60:].mean() > 5 * energy[:60].mean()


def test_clean_rate_sets_reference_size():
    assert replace(SMALL_CONFIG, clean_rate=0.5).clean_per_class == 30
    assert replace(SMALL_CONFIG, clean_rate=0.01).clean_per_class == 5


def test_unpoisoned_configuration():
    cfg = replace(SMALL_CONFIG, m_poison=0)
    generated = synthetic.generate(cfg)
    assert generated.dataset.m == cfg.T * cfg.m_per_class
    assert generated.ground_truth.infected_classes == []
    assert generated.ground_truth.principal_angles == {}


def test_several_poison_sources(small_synthetic):
    cfg = replace(SMALL_CONFIG, poison_sources=3)
    generated = synthetic.generate(cfg)
    assert len(generated.ground_truth.poison_bases['0']) == 3
    assert len(generated.ground_truth.poisoned_indices['0']) == cfg.m_poison


def test_latent_codes_stay_off_the_class_center():
    def shortest_code(cfg):
        generated = synthetic.generate(cfg)
        data = generated.dataset.matrix.data
        truth = generated.ground_truth
        return min(
            np.linalg.norm(data[start:stop] @ truth.bases[c], axis=1).min()
            for c, (start, stop) in truth.class_spans.items() if c != '0'
        )

    # Noise adds about 0.02 to a projected norm at n = 32, d = 3.
    assert shortest_code(SMALL_CONFIG) > 0.44
    assert shortest_code(replace(SMALL_CONFIG, min_latent_norm=0.0)) < 0.3


@pytest.mark.parametrize('changes', [
    {'n': 4, 'd': 3},
    {'subspace_angle': 0.0},
    {'poison_sources': 10},
    {'infected_class': 6},
    {'clean_rate': 0.0},
    {'variance_ratio': -1.0},
    {'min_latent_norm': 1.0},
])
def test_infeasible_configurations(changes):
    with pytest.raises(InfeasibleConfig):
        synthetic.generate(replace(SMALL_CONFIG, **changes))


def test_written_files_reload(small_files, small_synthetic):
    dataset = repr_store.load_dataset(small_files['train'], small_files['labels'])
    assert dataset.labels == small_synthetic.dataset.labels
    assert np.allclose(dataset.matrix.data, small_synthetic.dataset.matrix.data, rtol=0, atol=0)
    truth = synthetic.load_ground_truth(small_files['ground_truth'])
    assert truth.infected_classes == ['0']
    assert truth.poisoned_indices == small_synthetic.ground_truth.poisoned_indices
    assert truth.class_spans == small_synthetic.ground_truth.class_spans


def test_ground_truth_dict_keeps_planted_rows():
    truth = GroundTruth(poisoned_indices={'10': [4, 5], '2': [1], '3': []})
    payload = truth.to_dict()
    assert payload['infected_classes'] == ['2', '10']
    assert GroundTruth.from_dict(payload).poisoned_indices == truth.poisoned_indices
