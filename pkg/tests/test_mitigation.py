import numpy as np
import pytest

from backdoor_purifier.config import KMeansSettings
from backdoor_purifier.errors import DegenerateInput, IndexOutOfRange, TooFewSamples
from backdoor_purifier.models.quarantine import ManifestEntry, QuarantineResult
from backdoor_purifier.models.representation import LabeledDataset, RepresentationMatrix
from backdoor_purifier.services import mitigation


def _brute_force_inertia(a):
    values = np.sort(a)
    best = np.inf
    for split in range(1, values.size):
        left, right = values[:split], values[split:]
        best = min(best, np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2))
    return best


def test_kmeans_reaches_the_contiguous_split_optimum(rng):
    for trial in range(1000):
        a = rng.standard_normal(int(rng.integers(2, 40)))
        if trial % 3 == 0:
            a = np.round(a, 1)
        if np.ptp(a) <= 1e-15:
            continue
        assignment = mitigation.kmeans_1d(a)
        assert assignment.inertia == pytest.approx(_brute_force_inertia(a), rel=1e-12, abs=1e-12)


def test_kmeans_labels_lower_cluster_zero_and_trace_decreases(rng):
    a = np.concatenate([rng.normal(0, 0.1, 50), rng.normal(1, 0.1, 20)])
    assignment = mitigation.kmeans_1d(a, KMeansSettings(max_iter=50))
    assert assignment.centers[0] < assignment.centers[1]
    assert assignment.sizes == (50, 20)
    assert np.all(np.diff(assignment.inertia_trace) <= 1e-12)


def test_kmeans_adopts_the_optimal_split_when_lloyd_stalls():
    # A single Lloyd pass from the quartiles stops well short of the optimum.
    a = np.array([0.0, 0.0, 0.0, 10.0, 11.0, 100.0])
    assignment = mitigation.kmeans_1d(a, KMeansSettings(max_iter=1))
    assert assignment.refined
    assert assignment.inertia == pytest.approx(_brute_force_inertia(a))


def test_kmeans_rejects_constant_and_tiny_inputs():
    with pytest.raises(DegenerateInput):
        mitigation.kmeans_1d([0.3] * 10)
    with pytest.raises(TooFewSamples):
        mitigation.kmeans_1d([1.0])


def test_smaller_cluster_is_poisoned(rng):
    a = np.concatenate([rng.normal(0.01, 0.005, 8), rng.normal(0.3, 0.01, 3)])
    row_map = [100 + i for i in range(11)]
    result = mitigation.identify_poisoned(mitigation.kmeans_1d(a), row_map, '4')
    assert result.poisoned_indices == (108, 109, 110)
    assert set(result.clean_indices) == set(range(100, 108))
    assert result.cluster_size_ratio == pytest.approx(3 / 11)
    assert result.flags == ()


def test_size_tie_goes_to_larger_magnitude_center():
    result = mitigation.identify_poisoned(
        mitigation.kmeans_1d([-1.0, -1.1, 2.0, 2.1]), [0, 1, 2, 3], '0'
    )
    assert result.poisoned_indices == (2, 3)
    assert result.tie_broken


def test_singleton_cluster_is_marked_suspicious():
    result = mitigation.identify_poisoned(
        mitigation.kmeans_1d([0.0, 0.01, 0.02, 0.015, 5.0]), [0, 1, 2, 3, 4], '0'
    )
    assert result.poisoned_indices == (4,)
    assert 'suspicious_singleton' in result.flags


def test_quarantine_ignores_weight_sign(rng):
    a = np.concatenate([rng.normal(0.0, 0.01, 40), rng.normal(0.2, 0.01, 15)])
    rows = list(range(55))
    forward = mitigation.identify_poisoned(mitigation.kmeans_1d(a), rows)
    mirrored = mitigation.identify_poisoned(mitigation.kmeans_1d(-a), rows)
    assert forward.poisoned_indices == mirrored.poisoned_indices


def _dataset(rng):
    return LabeledDataset(
        matrix=RepresentationMatrix(rng.standard_normal((6, 2))),
        labels=('0', '0', '1', '1', '0', '1'),
        sample_ids=('a', 'b', 'c', 'd', 'e', 'f'),
    )


def test_emit_cleaned_drops_quarantined_rows(rng):
    dataset = _dataset(rng)
    quarantine = QuarantineResult(
        class_id='0', poisoned_indices=(4, 1), clean_indices=(0,), cluster_size_ratio=2 / 3,
        poisoned_cluster=1, poisoned_weights=(0.5, 0.4),
    )
    cleaned, manifest = mitigation.emit_cleaned(dataset, [quarantine])
    assert cleaned.sample_ids == ('a', 'c', 'd', 'f')
    assert np.array_equal(cleaned.matrix.data, dataset.matrix.data[[0, 2, 3, 5]])
    assert [entry.sample_id for entry in manifest] == ['b', 'e']
    assert [entry.weight for entry in manifest] == [0.4, 0.5]


def test_emit_cleaned_without_quarantine_is_identity(rng):
    dataset = _dataset(rng)
    cleaned, manifest = mitigation.emit_cleaned(dataset, [])
    assert cleaned is dataset
    assert manifest == []


def test_emit_cleaned_rejects_unknown_rows(rng):
    quarantine = QuarantineResult('0', (9,), (), 0.1, 1)
    with pytest.raises(IndexOutOfRange):
        mitigation.emit_cleaned(_dataset(rng), [quarantine])


def test_manifest_round_trip(tmp_path):
    entries = [
        ManifestEntry('b', '0', 0.123456789012345, 1),
        ManifestEntry('e', '0', -2.5e-7, 1, 'tie_broken'),
    ]
    path = str(tmp_path / 'out' / 'manifest.csv')
    mitigation.write_manifest(path, entries)
    assert mitigation.read_manifest(path) == entries
    assert open(path).readline().strip() == 'sample_id,class_id,weight,cluster,flag'
