import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from t2vstock import TransformerRegressor
from t2vstock.model import params_equal

SMALL = dict(d_model=8, heads=2, blocks=1, ffn_width=16, head_width=8)


def data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(n, 8, 5)), rng.uniform(size=n)


def test_get_params_and_clone():
    est = TransformerRegressor(d_model=16, epochs=3)
    params = est.get_params()
    assert params["d_model"] == 16 and params["epochs"] == 3 and params["heads"] == 2
    twin = clone(est)
    assert twin.get_params() == params and twin is not est


def test_fit_predict_shapes():
    X, y = data()
    est = TransformerRegressor(epochs=2, **SMALL).fit(X, y, validation_data=(X[:5], y[:5]))
    assert est.predict(X).shape == (40,)
    assert len(est.history_) == 2 and est.n_features_in_ == 5
    assert np.isfinite(est.score(X, y))


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        TransformerRegressor().predict(np.zeros((1, 8, 5)))


def test_rejects_flat_input():
    with pytest.raises(ValueError):
        TransformerRegressor(epochs=1).fit(np.zeros((10, 40)), np.zeros(10))


def test_wrong_feature_count_on_predict():
    X, y = data()
    est = TransformerRegressor(epochs=1, **SMALL).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 8, 4)))


def test_random_state_reproducible():
    X, y = data()
    a = TransformerRegressor(epochs=2, random_state=3, **SMALL).fit(X, y)
    b = TransformerRegressor(epochs=2, random_state=3, **SMALL).fit(X, y)
    assert params_equal(a.params_, b.params_)


def test_save_load(tmp_path):
    X, y = data()
    est = TransformerRegressor(epochs=2, **SMALL).fit(X, y)
    est.save(tmp_path / "m.t2vt")
    back = TransformerRegressor(**SMALL).load(tmp_path / "m.t2vt")
    np.testing.assert_array_equal(back.predict(X), est.predict(X))
    with pytest.raises(ValueError):
        TransformerRegressor(d_model=16).load(tmp_path / "m.t2vt")
