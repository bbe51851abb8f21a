import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gradprune import RecurrentClassifier, RecurrentRegressor, sparse_forward
from gradprune.errors import ConfigError, ShapeError


def adding_data(n=240, t_len=8, seed=0):
    rng = np.random.default_rng(seed)
    X = np.zeros((n, t_len, 2), dtype=np.float32)
    X[:, :, 0] = rng.uniform(-1, 1, (n, t_len))
    marks = np.stack([rng.permutation(t_len)[:2] for _ in range(n)])
    rows = np.arange(n)
    X[rows, marks[:, 0], 1] = 1.0
    X[rows, marks[:, 1], 1] = 1.0
    y = X[rows, marks[:, 0], 0] + X[rows, marks[:, 1], 0]
    return X, y.astype(np.float32)


def class_data(n=200, t_len=6, seed=1):
    # class = sign of the mean of channel 0
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, t_len, 3)).astype(np.float32)
    y = (X[:, :, 0].mean(axis=1) > 0).astype(int)
    return X, y


class TestRegressor:
    def test_fit_predict_shapes(self):
        X, y = adding_data()
        est = RecurrentRegressor(hidden_size=8, epochs=3, random_state=0)
        assert est.fit(X, y) is est
        pred = est.predict(X[:7])
        assert pred.shape == (7,)

    def test_2d_targets_round_trip(self):
        X, y = adding_data()
        est = RecurrentRegressor(hidden_size=8, epochs=2, random_state=0)
        est.fit(X, np.stack([y, -y], axis=1))
        assert est.predict(X[:5]).shape == (5, 2)

    def test_learns_the_task(self):
        X, y = adding_data(n=320)
        est = RecurrentRegressor(hidden_size=16, epochs=15, learning_rate=0.05,
                                 batch_size=16, random_state=2)
        est.fit(X, y)
        baseline = float(np.mean((y - y.mean()) ** 2))
        mse = float(np.mean((est.predict(X) - y) ** 2))
        assert mse < 0.5 * baseline

    def test_deterministic_given_random_state(self):
        X, y = adding_data()
        a = RecurrentRegressor(hidden_size=8, epochs=2, random_state=7).fit(X, y)
        b = RecurrentRegressor(hidden_size=8, epochs=2, random_state=7).fit(X, y)
        np.testing.assert_array_equal(a.predict(X[:20]), b.predict(X[:20]))

    def test_gradual_pruning_produces_sparsity(self):
        X, y = adding_data()
        est = RecurrentRegressor(hidden_size=16, epochs=8, pruning="gradual",
                                 target_sparsity=0.8, prune_freq=5, random_state=0)
        est.fit(X, y)
        assert 0.4 < est.sparsity_ < 0.95
        assert est.schedule_  # threshold updates were logged
        assert set(est.sparsity_per_layer_) == {"rnn0", "out"}

    def test_hard_pruning_hits_target_exactly(self):
        X, y = adding_data()
        est = RecurrentRegressor(hidden_size=16, epochs=4, pruning="hard",
                                 target_sparsity=0.75, hard_prune_epoch=1,
                                 random_state=0)
        est.fit(X, y)
        model_params = est.model_.params()
        prunable = sum(
            v.size for k, v in model_params.items() if not k.endswith("bias")
        )
        nonzero = sum(
            int(np.count_nonzero(v)) for k, v in model_params.items()
            if not k.endswith("bias")
        )
        assert nonzero <= round(0.25 * prunable)

    def test_to_sparse_matches_predict(self):
        X, y = adding_data()
        est = RecurrentRegressor(hidden_size=12, epochs=6, pruning="gradual",
                                 target_sparsity=0.7, prune_freq=5, random_state=3)
        est.fit(X, y)
        sm = est.to_sparse()
        direct = est.predict(X[:4])
        via_sparse = np.array([sparse_forward(sm, X[i])[0] for i in range(4)])
        np.testing.assert_allclose(direct, via_sparse, atol=1e-5)


class TestClassifier:
    def test_fit_predict(self):
        X, y = class_data()
        est = RecurrentClassifier(hidden_size=12, epochs=12, learning_rate=0.1,
                                  random_state=0)
        est.fit(X, y)
        assert est.predict(X).shape == (200,)
        assert (est.predict(X) == y).mean() > 0.8

    def test_classes_preserved(self):
        X, y = class_data()
        labels = np.array(["neg", "pos"])[y]
        est = RecurrentClassifier(hidden_size=8, epochs=2, random_state=0)
        est.fit(X, labels)
        np.testing.assert_array_equal(est.classes_, ["neg", "pos"])
        assert set(est.predict(X[:10])) <= {"neg", "pos"}

    def test_predict_proba_normalized(self):
        X, y = class_data()
        est = RecurrentClassifier(hidden_size=8, epochs=2, random_state=0).fit(X, y)
        proba = est.predict_proba(X[:9])
        assert proba.shape == (9, 2)
        np.testing.assert_allclose(proba.sum(axis=1), np.ones(9), atol=1e-9)

    def test_single_class_rejected(self):
        X, _ = class_data()
        with pytest.raises(ShapeError):
            RecurrentClassifier(epochs=1).fit(X, np.zeros(len(X), dtype=int))


class TestSklearnProtocol:
    def test_get_set_params_and_clone(self):
        est = RecurrentRegressor(hidden_size=32, pruning="gradual")
        params = est.get_params()
        assert params["hidden_size"] == 32 and params["pruning"] == "gradual"
        est.set_params(hidden_size=8)
        assert est.hidden_size == 8
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            RecurrentRegressor().predict(np.zeros((2, 3, 1), dtype=np.float32))

    def test_input_validation(self):
        est = RecurrentRegressor(epochs=1)
        with pytest.raises(ShapeError):
            est.fit(np.zeros((4, 3)), np.zeros(4))  # not 3-D
        X, y = adding_data(n=20)
        with pytest.raises(ShapeError):
            est.fit(X, y[:-1])  # length mismatch
        est.fit(X, y)
        with pytest.raises(ShapeError):
            est.predict(np.zeros((2, 8, 5), dtype=np.float32))  # wrong feature dim

    def test_bad_hyperparameters_raise_value_error(self):
        X, y = adding_data(n=20)
        with pytest.raises(ConfigError):
            RecurrentRegressor(pruning="soft", epochs=1).fit(X, y)
        with pytest.raises(ConfigError):
            RecurrentRegressor(pruning="gradual", target_sparsity=1.2, epochs=6).fit(X, y)
        with pytest.raises(ConfigError):
            RecurrentRegressor(pruning="gradual", epochs=2).fit(X, y)

    def test_regressor_score(self):
        X, y = adding_data(n=260)
        est = RecurrentRegressor(hidden_size=16, epochs=15, learning_rate=0.05,
                                 batch_size=16, random_state=1).fit(X, y)
        assert est.score(X, y) > 0.3
