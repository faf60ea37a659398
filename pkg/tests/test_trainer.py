import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drivershare.gp import Dataset, HyperParams, NumericalError, nlml, nlml_grad
from drivershare.trainer import GRAD_CLIP, TrainingConfig, TrainingError, sample_minibatch, sgd_local

from oracles import all_batches


def gp_draw(n, seed=0):
    r = np.random.default_rng(seed)
    X = np.sort(r.uniform(0, 10, n))
    K = 2.0 * np.exp(-((X[:, None] - X[None, :]) ** 2) / (2 * 1.5**2)) + 1e-8 * np.eye(n)
    y = np.linalg.cholesky(K) @ r.standard_normal(n) + 0.1 * r.standard_normal(n)
    return Dataset(X, y)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(local_updates=0)
    with pytest.raises(ValueError):
        TrainingConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        TrainingConfig(lr_decay=1.5)
    with pytest.raises(ValueError):
        TrainingConfig(lr_decay=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=0)


def test_full_batch_sample_is_a_permutation():
    d = Dataset(np.arange(5.0), np.zeros(5))
    idx = sample_minibatch(d, 5, np.random.default_rng(0))
    assert sorted(idx.tolist()) == [0, 1, 2, 3, 4]
    idx = sample_minibatch(d, 64, np.random.default_rng(0))
    assert sorted(idx.tolist()) == [0, 1, 2, 3, 4]


def test_minibatch_deterministic():
    d = Dataset(np.arange(197.0), np.zeros(197))
    a = [sample_minibatch(d, 32, np.random.default_rng(7)) for _ in range(2)]
    np.testing.assert_array_equal(*a)


@given(st.integers(1, 60), st.integers(1, 80), st.integers(0, 2**32))
def test_minibatch_distinct_and_in_range(n, b, seed):
    d = Dataset(np.arange(float(n)), np.zeros(n))
    idx = sample_minibatch(d, b, np.random.default_rng(seed))
    assert len(idx) == min(n, b)
    assert len(set(idx.tolist())) == len(idx)
    assert idx.min() >= 0 and idx.max() < n


def test_minibatch_frequencies_uniform():
    d = Dataset(np.arange(10.0), np.zeros(10))
    rng = np.random.default_rng(11)
    counts = np.zeros(10)
    draws = 10_000
    for _ in range(draws):
        counts[sample_minibatch(d, 2, rng)] += 1
    expected = draws * 2 / 10
    assert np.all(np.abs(counts - expected) <= 0.05 * expected)


def test_zero_learning_rate_is_identity():
    d = gp_draw(12)
    start = HyperParams(1.3, 0.7, 0.2)
    out = sgd_local(start, d, TrainingConfig(local_updates=1, learning_rate=0.0, batch_size=4))
    assert out == start


def test_sgd_is_deterministic():
    d = gp_draw(40)
    cfg = TrainingConfig(local_updates=30, learning_rate=0.05, batch_size=8, seed=5)
    a = sgd_local(HyperParams(1, 1, 1), d, cfg)
    b = sgd_local(HyperParams(1, 1, 1), d, cfg)
    assert np.array_equal(a.to_log(), b.to_log())
    c = sgd_local(HyperParams(1, 1, 1), d, TrainingConfig(local_updates=30, learning_rate=0.05, batch_size=8, seed=6))
    assert c != a


def test_full_batch_descent_improves_nlml():
    d = gp_draw(30)
    start = HyperParams(1.0, 1.0, 1.0)
    cfg = TrainingConfig(local_updates=500, learning_rate=0.05, lr_decay=0.995, batch_size=30)
    out = sgd_local(start, d, cfg)
    assert nlml(out, d) <= nlml(start, d)


def test_huge_prox_stays_at_anchor():
    d = gp_draw(30)
    start = HyperParams(1.0, 1.0, 1.0)
    cfg = TrainingConfig(local_updates=200, learning_rate=0.05, batch_size=10)
    out = sgd_local(start, d, cfg, prox=(1e6, start))
    assert np.max(np.abs(out.to_log() - start.to_log())) < 1e-3


def test_zero_prox_equals_plain_sgd_bitwise():
    d = gp_draw(30)
    start = HyperParams(0.5, 2.0, 0.3)
    cfg = TrainingConfig(local_updates=50, learning_rate=0.05, batch_size=10, seed=2)
    assert np.array_equal(
        sgd_local(start, d, cfg).to_log(), sgd_local(start, d, cfg, prox=(0.0, HyperParams(9, 9, 9))).to_log()
    )


def test_single_step_matches_hand_update():
    d = gp_draw(8)
    start = HyperParams(1.0, 1.0, 0.5)
    cfg = TrainingConfig(local_updates=1, learning_rate=0.01, batch_size=8)
    g = nlml_grad(start, d)
    assert np.linalg.norm(g) < GRAD_CLIP
    np.testing.assert_allclose(sgd_local(start, d, cfg).to_log(), start.to_log() - 0.01 * g, rtol=0, atol=1e-15)


def test_gradient_clipping_bounds_the_step():
    X = np.linspace(0, 1, 10)
    d = Dataset(X, 1e4 * np.sin(X))
    start = HyperParams(1e-2, 1.0, 1e-2)
    assert np.linalg.norm(nlml_grad(start, d)) > GRAD_CLIP
    out = sgd_local(start, d, TrainingConfig(local_updates=1, learning_rate=0.1, batch_size=10))
    assert np.linalg.norm(out.to_log() - start.to_log()) == pytest.approx(0.1 * GRAD_CLIP, rel=1e-12)


def test_minibatch_gradients_average_to_full_batch_pairs():
    # Over all pairs, the mean of the pair NLML gradients is the average of
    # 2-point marginal likelihood gradients; for the 1/|batch| scaled loss with
    # a diagonal (independent) model it reproduces the full-batch gradient.
    X = np.array([0.0, 100.0, 200.0, 300.0, 400.0, 500.0])
    d = Dataset(X, np.array([0.3, -1.2, 0.8, 2.0, -0.4, 1.1]))
    p = HyperParams(1.4, 0.9, 0.6)
    full = nlml_grad(p, d)
    mean = np.mean([nlml_grad(p, d.subset(b)) for b in all_batches(len(d), 2)], axis=0)
    np.testing.assert_allclose(mean, full, atol=1e-8)


def test_numerical_failure_reports_step(monkeypatch):
    from drivershare import trainer

    calls = {"n": 0}
    real = trainer.nlml_and_grad

    def flaky(params, data, with_grad=True):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericalError("boom", jitter=0.01)
        return real(params, data, with_grad)

    monkeypatch.setattr(trainer, "nlml_and_grad", flaky)
    with pytest.raises(TrainingError) as info:
        sgd_local(HyperParams(1, 1, 1), gp_draw(10, 1), TrainingConfig(local_updates=5, batch_size=4))
    assert info.value.step == 2
    assert isinstance(info.value.__cause__, NumericalError)


def test_nan_gradient_aborts(monkeypatch):
    from drivershare import trainer

    monkeypatch.setattr(trainer, "nlml_and_grad", lambda p, d, with_grad=True: (0.0, np.array([np.nan, 0, 0])))
    with pytest.raises(TrainingError, match="non-finite gradient"):
        sgd_local(HyperParams(1, 1, 1), gp_draw(10), TrainingConfig(local_updates=3, batch_size=4))
