import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cmtpan import CMTPansharpener
from cmtpan.data import synth_dataset
from cmtpan.validation import check_image, check_pair, check_samples

TOY = dict(channels=8, heads=2, cmab_blocks=1, resnet_blocks_extract=1, resnet_blocks_aggregate=1,
           epochs=2, batch_size=2)


@pytest.fixture(scope="module")
def data():
    return synth_dataset(2, 16, 4, 4, seed=0)


def test_get_params_and_clone():
    est = CMTPansharpener(**TOY, random_state=3)
    params = est.get_params()
    assert params["channels"] == 8 and params["random_state"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(lr=0.01)
    assert est.lr == 0.01


def test_fit_predict_score(data):
    est = CMTPansharpener(**TOY).fit(data.samples)
    assert len(est.history_) == 2 and est.n_bands_ == 4
    out = est.predict(data.samples)
    assert out.shape == (2, 16, 16, 4)
    score = est.score(data.samples)
    assert -1.0 <= score <= 1.0


def test_fit_accepts_tuples_with_targets(data):
    X = [(s.pan, s.lrms) for s in data.samples]
    y = [s.gt for s in data.samples]
    a = CMTPansharpener(**TOY).fit(X, y).predict(X)
    b = CMTPansharpener(**TOY).fit(data.samples).predict(data.samples)
    assert np.array_equal(a, b)


def test_unfitted_and_missing_targets(data):
    with pytest.raises(NotFittedError):
        CMTPansharpener().predict(data.samples)
    X = [(s.pan, s.lrms) for s in data.samples]
    with pytest.raises(ValueError):
        CMTPansharpener(**TOY).fit(X)


def test_validation_helpers():
    assert check_image(np.ones((4, 4)), "pan").shape == (4, 4, 1)
    with pytest.raises(ValueError):
        check_image(np.ones(4), "pan")
    with pytest.raises(ValueError):
        check_image(np.full((2, 2, 1), np.nan), "pan")
    with pytest.raises(ValueError):
        check_pair(np.ones((8, 8)), np.ones((3, 3, 4)), 4)
    with pytest.raises(ValueError):
        check_pair(np.ones((8, 8)), np.ones((2, 2, 4)), 4, gt=np.ones((8, 8, 3)))
    with pytest.raises(ValueError):
        check_samples([(np.ones((8, 8)), np.ones((2, 2, 4))), (np.ones((8, 8)), np.ones((2, 2, 3)))])
    with pytest.raises(ValueError):
        check_samples([(np.ones((8, 8)), np.ones((2, 2, 4)))], y=[])
