import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodt import Dataset, InvalidParamsError
from hodt.geometry import augment
from hodt.synthetic import (
    GroundTruthSpec,
    NoiseSpec,
    add_feature_noise,
    add_label_noise,
    gen_ground_truth,
    make_experiment,
    sample_dataset,
)


class TestGroundTruth:
    @given(st.integers(0, 10_000), st.integers(0, 4), st.integers(1, 4))
    def test_shape_and_labels(self, seed, k, dim):
        truth = gen_ground_truth(GroundTruthSpec(k, dim, seed))
        tree = truth.tree
        assert tree.size == k
        assert len(tree.leaves()) == k + 1
        assert sorted(tree.label[i] for i in tree.leaves()) == list(range(k + 1))
        # preorder: children come after their parent
        for i in range(tree.n_nodes):
            if not tree.is_leaf(i):
                assert tree.pos[i] == i + 1 and tree.neg[i] > tree.pos[i]

    def test_every_leaf_is_populated(self):
        truth = gen_ground_truth(GroundTruthSpec(3, 2, 7))
        pts = np.random.default_rng(0).random((20_000, 2))
        reached = truth.tree.apply(augment(pts))
        assert set(reached) == set(truth.tree.leaves())

    def test_deterministic(self):
        a = gen_ground_truth(GroundTruthSpec(3, 2, 11))
        b = gen_ground_truth(GroundTruthSpec(3, 2, 11))
        assert a.tree.rule == b.tree.rule
        for r in a.tree.hyperplanes:
            np.testing.assert_array_equal(a.tree.hyperplanes[r].normal, b.tree.hyperplanes[r].normal)

    def test_test_size(self):
        truth = gen_ground_truth(GroundTruthSpec(2, 3, 0))
        assert truth.test_size() == 2**truth.depth * 2 * 500
        assert gen_ground_truth(GroundTruthSpec(0, 1, 0)).test_size() == 500

    def test_invalid_spec(self):
        with pytest.raises(InvalidParamsError):
            gen_ground_truth(GroundTruthSpec(-1, 2))
        with pytest.raises(InvalidParamsError):
            gen_ground_truth(GroundTruthSpec(1, 0))


class TestNoise:
    def _data(self, n=200, classes=3):
        rng = np.random.default_rng(0)
        return Dataset(rng.random((n, 2)), rng.integers(0, classes, n), classes)

    @pytest.mark.parametrize("pct", [0, 5, 12.5, 100])
    def test_label_noise_flips_exact_count(self, pct):
        data = self._data()
        noisy = add_label_noise(data, pct, np.random.default_rng(1))
        changed = noisy.labels != data.labels
        assert changed.sum() == int(pct * data.n // 100)
        np.testing.assert_array_equal(noisy.labels[changed], (data.labels[changed] + 1) % 3)

    def test_feature_noise_scale(self):
        data = self._data(20_000)
        noisy = add_feature_noise(data, 0.1, np.random.default_rng(2))
        spread = data.points.max(axis=0) - data.points.min(axis=0)
        std = (noisy.points - data.points).std(axis=0)
        np.testing.assert_allclose(std, 0.1 * spread, rtol=0.05)
        np.testing.assert_array_equal(noisy.labels, data.labels)

    def test_zero_noise_is_identity(self):
        data = self._data()
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(add_feature_noise(data, 0, rng).points, data.points)

    def test_invalid(self):
        with pytest.raises(InvalidParamsError):
            NoiseSpec(label_pct=101).validate()
        with pytest.raises(InvalidParamsError):
            add_feature_noise(self._data(), -1, np.random.default_rng(0))


class TestExperiment:
    def test_clean_training_labels_follow_truth(self):
        truth, train, test = make_experiment(2, 2, 300, 4)
        np.testing.assert_array_equal(truth.labels(train.points), train.labels)
        np.testing.assert_array_equal(truth.labels(test.points), test.labels)
        assert test.n == truth.test_size()

    def test_seeded(self):
        a = make_experiment(2, 2, 50, 3, NoiseSpec(10, 0.01))
        b = make_experiment(2, 2, 50, 3, NoiseSpec(10, 0.01))
        np.testing.assert_array_equal(a[1].points, b[1].points)
        np.testing.assert_array_equal(a[1].labels, b[1].labels)

    def test_sample_dataset(self):
        truth = gen_ground_truth(GroundTruthSpec(1, 2, 0))
        data = sample_dataset(truth, 10, np.random.default_rng(0))
        assert data.n == 10 and data.n_classes == 2
        assert ((data.points >= 0) & (data.points <= 1)).all()
