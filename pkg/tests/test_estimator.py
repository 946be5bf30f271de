import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from pvtsim.data import synth_gaussian
from pvtsim.estimator import FederatedPVTClassifier


def blobs(seed=0, per_class=80, classes=3, features=8, separation=5.0):
    data = synth_gaussian(classes, features, per_class, separation, seed=seed)
    return data.features, data.labels


@pytest.fixture
def small_estimator():
    return FederatedPVTClassifier(
        hidden_dims=(12,),
        num_clients=8,
        clients_per_round=4,
        local_steps=2,
        batch_size=8,
        client_lr=0.2,
        rounds=40,
        freeze_fraction=0.5,
        random_state=0,
    )


class TestSklearnContract:
    def test_get_set_params_roundtrip(self, small_estimator):
        params = small_estimator.get_params()
        assert params["freeze_fraction"] == 0.5
        small_estimator.set_params(freeze_fraction=0.9, rounds=10)
        assert small_estimator.freeze_fraction == 0.9
        assert small_estimator.rounds == 10

    def test_clone(self, small_estimator):
        X, y = blobs()
        small_estimator.fit(X, y)
        fresh = clone(small_estimator)
        assert fresh.get_params() == small_estimator.get_params()
        assert not hasattr(fresh, "model_")

    def test_fit_returns_self(self, small_estimator):
        X, y = blobs()
        assert small_estimator.fit(X, y) is small_estimator

    def test_predict_before_fit_raises(self, small_estimator):
        with pytest.raises(NotFittedError):
            small_estimator.predict(np.zeros((2, 8)))

    def test_feature_mismatch_rejected(self, small_estimator):
        X, y = blobs()
        small_estimator.fit(X, y)
        with pytest.raises(ValueError, match="features"):
            small_estimator.predict(np.zeros((2, 5)))

    def test_cross_val_integration(self, small_estimator):
        X, y = blobs(per_class=40)
        small_estimator.set_params(rounds=15, num_clients=6, clients_per_round=3)
        scores = cross_val_score(small_estimator, X, y, cv=2)
        assert scores.shape == (2,)


class TestTraining:
    def test_learns_separable_blobs(self, small_estimator):
        X, y = blobs(seed=1)
        Xt, yt = blobs(seed=2)
        small_estimator.fit(X, y)
        assert small_estimator.score(Xt, yt) >= 0.95

    def test_deterministic_in_random_state(self, small_estimator):
        X, y = blobs()
        a = clone(small_estimator).fit(X, y)
        b = clone(small_estimator).fit(X, y)
        assert np.array_equal(a.predict(X), b.predict(X))
        for var_id in range(a.model_.num_variables):
            assert np.array_equal(
                a.model_.get_variable(var_id), b.model_.get_variable(var_id)
            )

    def test_seed_changes_model(self, small_estimator):
        X, y = blobs()
        a = clone(small_estimator).fit(X, y)
        b = clone(small_estimator).set_params(random_state=1).fit(X, y)
        assert any(
            not np.array_equal(a.model_.get_variable(v), b.model_.get_variable(v))
            for v in range(a.model_.num_variables)
        )

    def test_history_collected(self, small_estimator):
        X, y = blobs()
        small_estimator.fit(X, y)
        assert len(small_estimator.history_) == small_estimator.rounds
        assert small_estimator.history_[0].ctos_bytes_mean > 0

    def test_classes_preserved_with_offset_labels(self, small_estimator):
        X, y = blobs()
        shifted = y * 3 + 5  # labels {5, 8, 11}
        small_estimator.fit(X, shifted)
        assert small_estimator.classes_.tolist() == [5, 8, 11]
        assert set(small_estimator.predict(X)) <= {5, 8, 11}

    def test_predict_proba_normalized(self, small_estimator):
        X, y = blobs()
        small_estimator.fit(X, y)
        probabilities = small_estimator.predict_proba(X[:10])
        assert probabilities.shape == (10, 3)
        np.testing.assert_allclose(probabilities.sum(axis=1), 1.0, rtol=1e-12)

    def test_dirichlet_partition_mode(self, small_estimator):
        X, y = blobs()
        small_estimator.set_params(partition="dirichlet", alpha=0.5, rounds=20)
        small_estimator.fit(X, y)
        assert hasattr(small_estimator, "model_")

    def test_bias_only_regime_runs(self, small_estimator):
        X, y = blobs()
        small_estimator.set_params(freeze_fraction=1.0, rounds=10)
        small_estimator.fit(X, y)
        # uploads shrink to biases plus framing
        assert small_estimator.history_[0].ctos_bytes_mean < 200

    def test_single_class_rejected(self, small_estimator):
        X = np.zeros((10, 8))
        y = np.zeros(10, dtype=int)
        with pytest.raises(ValueError, match="classes"):
            small_estimator.fit(X, y)
