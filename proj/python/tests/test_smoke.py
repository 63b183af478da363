import math

import numpy as np
import pytest

import crossnet as cn


def test_closed_form_divergences():
    i2 = np.eye(2)
    assert cn.bregman(2 * i2, i2, "logdet") == pytest.approx(2 - 2 * math.log(2), abs=1e-12)
    assert cn.bregman(2 * i2, i2, "vonneumann") == pytest.approx(0.772589, abs=5e-7)
    with pytest.raises(cn.InvalidArgument):
        cn.bregman(i2, np.eye(3))


def test_correntropy():
    assert cn.rbf_kernel(1.0, 0.0, 1.0) == pytest.approx(math.exp(-0.5))
    c = cn.centered_correntropy(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    assert c == pytest.approx((1 - math.exp(-0.5)) / 2)
    z = np.random.default_rng(0).normal(size=(20, 3))
    m = cn.correntropy_matrix(z, sigma=1.0, jitter=0.0)
    assert m.shape == (3, 3)
    np.testing.assert_array_equal(m, m.T)


def test_cond_divergence_zero_on_identical_groups():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(32, 4))
    y = rng.normal(size=32)
    assert abs(cn.cond_divergence(phi, y, phi, y)) < 1e-10
    assert cn.cond_divergence(phi, y, phi, y + 1.0) > 0.0


def test_simulate_and_train():
    data = cn.simulate("S2", n=300, seed=3)
    assert data["x"].shape == (300, 25)
    np.testing.assert_array_equal(data["cate"], data["mu1"] - data["mu0"])
    opts = {"max_epochs": 5, "rep_layers": "8,4", "head_layers": "8", "seed": 1}
    model = cn.train(data["x"], data["t"], data["y"], "CrossNet", opts)
    tau = model.predict_cate(data["x"])
    assert tau.shape == (300,)
    assert np.all(np.isfinite(tau))
    assert cn.pehe(tau, data["cate"]) > 0.0
    again = cn.train(data["x"], data["t"], data["y"], "CrossNet", opts)
    np.testing.assert_array_equal(model.params, again.params)
    with pytest.raises(cn.ConfigError):
        cn.train(data["x"], data["t"], data["y"], "CrossNet", {"no_such_key": 1})


def test_metrics():
    assert cn.abs_ate_error(np.array([1.0, 3.0]), np.zeros(2)) == 2.0
    risk = cn.policy_risk(
        np.array([1.0, 1.0, -1.0, -1.0]),
        np.array([1.0, 0.0, 1.0, 0.0]),
        np.array([1, 1, 0, 0], dtype=np.int32),
        np.ones(4, dtype=np.int32),
    )
    assert risk == pytest.approx(0.5)
    with pytest.raises(cn.UndefinedCell):
        cn.policy_risk(np.ones(2), np.ones(2), np.zeros(2, dtype=np.int32), np.ones(2, dtype=np.int32))


def test_gradcheck():
    report = cn.gradcheck()
    assert report["passed"]
    assert report["max_rel_err"] <= 1e-4


def test_missing_data(tmp_path):
    with pytest.raises(cn.NotFound):
        cn.load_ihdp(str(tmp_path), 1)
