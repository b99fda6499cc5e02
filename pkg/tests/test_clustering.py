import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsidec import clustering as C
from tsidec.clustering import ClusteringResult
from tsidec.dcae import build_dcae, pretrain
from tsidec.evaluation import adjusted_rand_index
from tsidec.nn import OptimizerState


def toy_model(seed=0):
    return build_dcae(10, 10, latent_dim=4, seed=seed, filters=(2, 2, 2, 3), dense_widths=(6, 5))


def random_stochastic(rng, n, k):
    q = rng.random((n, k)) + 0.05
    return q / q.sum(1, keepdims=True)


# ---------------------------------------------------------------- k-means


def test_kmeans_four_points():
    res = C.kmeans(np.array([[0.0], [0.2], [10.0], [10.2]]), 2, seed=0)
    assert sorted(res.centroids.ravel().round(12)) == [0.1, 10.1]
    assert res.inertia == pytest.approx(0.04)


def test_kmeans_k_equals_n():
    x = np.random.default_rng(0).standard_normal((6, 2))
    res = C.kmeans(x, 6, seed=1)
    assert res.inertia == pytest.approx(0.0, abs=1e-24)
    assert sorted(res.labels) == list(range(6))


def test_kmeans_duplicated_points():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]])
    a = C.kmeans(x, 2, seed=0)
    b = C.kmeans(np.vstack([x, x]), 2, seed=0)
    order = lambda c: c[np.lexsort(c.T[::-1])]
    np.testing.assert_allclose(order(a.centroids), order(b.centroids))


def test_kmeans_identical_points_and_errors():
    res = C.kmeans(np.ones((5, 3)), 3, seed=0)
    assert np.bincount(res.labels, minlength=3).min() >= 1
    assert res.inertia == 0.0
    with pytest.raises(C.InvalidParameterError):
        C.kmeans(np.zeros((2, 2)), 3)


def test_kmeans_deterministic():
    x = np.random.default_rng(4).standard_normal((40, 3))
    a, b = C.kmeans(x, 4, seed=7), C.kmeans(x, 4, seed=7)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def _partitions(n, k):
    for labels in itertools.product(range(k), repeat=n):
        if labels[0] == 0 and len(set(labels)) == k:
            yield np.array(labels)


def _sse(x, labels, k):
    return sum(((x[labels == j] - x[labels == j].mean(0)) ** 2).sum() for j in range(k))


def test_hard_cluster_blobs_brute_force():
    rng = np.random.default_rng(11)
    centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
    truth = np.repeat(np.arange(3), 3)
    z = centers[truth] + rng.normal(0, 0.3, (9, 2))
    best = min(_partitions(9, 3), key=lambda lab: _sse(z, lab, 3))
    res = C.hard_cluster(z, 3, seed=0)
    assert adjusted_rand_index(res.labels, best) == 1.0
    assert adjusted_rand_index(res.labels, truth) == 1.0
    assert res.mode == C.HARD
    with pytest.raises(C.InvalidParameterError):
        C.hard_cluster(z, 1)


# ---------------------------------------------------------------- soft assignment


def test_soft_assign_examples():
    mu = np.array([[0.0, 0.0], [2.0, 0.0]])
    np.testing.assert_allclose(C.soft_assign([[1.0, 0.0]], mu), [[0.5, 0.5]])
    mu = np.array([[0.0], [1.0]])
    np.testing.assert_allclose(C.soft_assign([[0.0]], mu, 1.0), [[2 / 3, 1 / 3]], rtol=1e-14)
    with pytest.raises(C.InvalidParameterError):
        C.soft_assign(np.zeros((2, 3)), np.zeros((2, 2)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.2, 5.0))
def test_soft_assign_rows_and_translation(seed, alpha):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((7, 3)) * 3
    mu = rng.standard_normal((4, 3)) * 3
    q = C.soft_assign(z, mu, alpha)
    np.testing.assert_allclose(q.sum(1), 1.0, atol=1e-9)
    assert np.all((q > 0) & (q < 1))
    shift = rng.standard_normal(3) * 10
    np.testing.assert_allclose(C.soft_assign(z + shift, mu + shift, alpha), q, atol=1e-12)


def test_target_distribution_examples():
    p = C.target_distribution(np.array([[0.8, 0.2], [0.4, 0.6]]))
    np.testing.assert_allclose(p, [[0.9143, 0.0857], [0.2286, 0.7714]], atol=5e-5)
    onehot = np.eye(3)[[0, 1, 2, 1]]
    np.testing.assert_array_equal(C.target_distribution(onehot), onehot)
    np.testing.assert_allclose(C.target_distribution(np.full((5, 4), 0.25)), 0.25)
    with pytest.raises(C.DegenerateClusterError):
        C.target_distribution(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_kl_examples():
    assert C.kl_divergence([[1.0, 0.0]], [[0.5, 0.5]]) == pytest.approx(np.log(2))
    q = random_stochastic(np.random.default_rng(0), 5, 3)
    assert C.kl_divergence(q, q) == 0.0
    with pytest.raises(C.DivergenceUndefinedError):
        C.kl_divergence([[0.5, 0.5]], [[1.0, 0.0]])


def test_kl_nonnegative_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p, q = random_stochastic(rng, 4, 3), random_stochastic(rng, 4, 3)
        assert C.kl_divergence(p, q) >= 0.0


# ---------------------------------------------------------------- gradients


def _fd_grads(z, mu, p, alpha, h=1e-6):
    def loss(z_, mu_):
        return C.kl_divergence(p, C.soft_assign(z_, mu_, alpha))

    gz = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        gz[idx] = (loss(zp, mu) - loss(zm, mu)) / (2 * h)
    gmu = np.zeros_like(mu)
    for idx in np.ndindex(mu.shape):
        mp, mm = mu.copy(), mu.copy()
        mp[idx] += h
        mm[idx] -= h
        gmu[idx] = (loss(z, mp) - loss(z, mm)) / (2 * h)
    return gz, gmu


def _rel(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-300)


@pytest.mark.parametrize("seed", range(10))
def test_cluster_gradients_finite_difference(seed):
    rng = np.random.default_rng(seed)
    z, mu = rng.standard_normal((5, 2)), rng.standard_normal((3, 2))
    alpha = [1.0, 0.5, 2.0][seed % 3]
    p = random_stochastic(rng, 5, 3)
    q = C.soft_assign(z, mu, alpha)
    gz, gmu = C.clustering_grad_z(z, mu, p, q, alpha), C.clustering_grad_mu(z, mu, p, q, alpha)
    fz, fmu = _fd_grads(z, mu, p, alpha)
    assert _rel(gz, fz) < 1e-4
    assert _rel(gmu, fmu) < 1e-4
    # the loss only sees differences z - mu
    np.testing.assert_allclose(gz.sum(0) + gmu.sum(0), 0.0, atol=1e-12)


def test_gradients_vanish_when_p_equals_q():
    rng = np.random.default_rng(2)
    z, mu = rng.standard_normal((6, 3)), rng.standard_normal((2, 3))
    q = C.soft_assign(z, mu)
    assert np.all(C.clustering_grad_z(z, mu, q, q) == 0.0)
    assert np.all(C.clustering_grad_mu(z, mu, q, q) == 0.0)
    with pytest.raises(C.InvalidParameterError):
        C.clustering_grad_z(z, mu, q[:3], q[:3])


# ---------------------------------------------------------------- joint training


def test_gamma_zero_matches_reconstruction_training():
    x = np.random.default_rng(0).random((10, 1, 10, 10))
    a, b = toy_model(3), toy_model(3)
    sa, sb = OptimizerState.like(a.params, lr=0.005), OptimizerState.like(b.params, lr=0.005)
    pretrain(a, x, epochs=4, lr=0.005, batch_size=4, seed=9, optimizer=sa)
    res = C.joint_train(b, x, 2, gamma=0.0, lr=0.005, batch_size=4, epochs=4, seed=9, tol=-1.0, optimizer=sb)
    assert len(res.history) == 4
    np.testing.assert_array_equal(a.params, b.params)
    init = C.kmeans(C.encode(toy_model(3), x), 2, seed=9).centroids
    np.testing.assert_array_equal(res.centroids, init)


def test_joint_train_deterministic_and_valid():
    x = np.random.default_rng(1).random((12, 1, 10, 10))
    runs = [C.joint_train(toy_model(0), x, 3, epochs=5, batch_size=4, lr=0.01, seed=2) for _ in range(2)]
    np.testing.assert_array_equal(runs[0].c1.labels, runs[1].c1.labels)
    np.testing.assert_array_equal(runs[0].centroids, runs[1].centroids)
    assert runs[0].c1.mode == C.SOFT and runs[0].c1.labels.max() < 3
    h = runs[0].history[0]
    assert set(h) == {"epoch", "rec_loss", "cl_loss", "total_loss", "label_change"}
    with pytest.raises(C.InvalidParameterError):
        C.joint_train(toy_model(0), x[:2], 3)


def test_joint_train_reports_divergence():
    x = np.random.default_rng(1).random((6, 1, 10, 10))
    model = toy_model(0)
    model.params[:] = 1e200
    with pytest.raises(C.TrainingDivergedError, match="epoch"):
        C.joint_train(model, x, 2, epochs=2, batch_size=3)


# ---------------------------------------------------------------- selection


def result(labels, k, mode):
    return ClusteringResult(np.asarray(labels), k, mode, np.zeros((k, 1)))


def test_qualitative_check_examples():
    assert "single cluster" in C.qualitative_check(result([0] * 10, 2, C.SOFT))
    assert C.qualitative_check(result(np.repeat(np.arange(4), 25), 4, C.SOFT)) == []
    labels = np.r_[np.zeros(995, int), np.ones(5, int)]
    v = C.qualitative_check(result(labels, 2, C.SOFT), 1000)
    assert any(s.startswith("small cluster") for s in v)
    v = C.qualitative_check(result([0, 0, 1, 1], 3, C.SOFT))
    assert v == ["empty cluster 2"]


def test_select_best_stage_one():
    x = np.r_[np.zeros(5), np.ones(5) * 10.0][:, None]
    c1 = result([0] * 10, 2, C.SOFT)
    c2 = result([0] * 5 + [1] * 5, 2, C.HARD)
    best = C.select_best(c1, c2, x)
    assert best.mode == C.SELECTED and best.provenance["source"] == C.HARD
    assert best.provenance["selection"]["stage"] == 1
    np.testing.assert_array_equal(best.labels, c2.labels)


def test_select_best_both_fail_flags_degenerate():
    x = np.arange(10.0)[:, None]
    c1 = result([0] * 10, 3, C.SOFT)  # single cluster + 2 empty
    c2 = result([0] * 9 + [1], 3, C.HARD)  # one empty
    best = C.select_best(c1, c2, x, min_frac=0.01)
    sel = best.provenance["selection"]
    assert sel["degenerate"] and sel["stage"] == 1 and best.provenance["source"] == C.HARD


def test_select_best_stage_two_majority():
    rng = np.random.default_rng(0)
    x = np.r_[rng.normal(0, 0.1, (10, 2)), rng.normal(5, 0.1, (10, 2))]
    good = np.repeat([0, 1], 10)
    bad = good.copy()
    bad[[0, 1, 10, 11]] = 1 - bad[[0, 1, 10, 11]]
    best = C.select_best(result(bad, 2, C.SOFT), result(good, 2, C.HARD), x)
    sel = best.provenance["selection"]
    assert sel["stage"] == 2 and best.provenance["source"] == C.HARD
    assert sel["scores"][C.HARD]["s_eva"] == 1.0
    # and the soft output wins when it is the better one
    best = C.select_best(result(good, 2, C.SOFT), result(bad, 2, C.HARD), x)
    assert best.provenance["source"] == C.SOFT


def test_select_best_tie_goes_to_hard():
    x = np.random.default_rng(3).standard_normal((12, 2))
    labels = np.repeat([0, 1, 2], 4)
    best = C.select_best(result(labels, 3, C.SOFT), result(labels, 3, C.HARD), x)
    assert best.provenance["source"] == C.HARD
    assert best.provenance["selection"]["stage"] == 2


def test_joint_train_latent_reuse():
    x = np.random.default_rng(5).random((12, 1, 10, 10))
    a = C.joint_train(toy_model(4), x, 3, epochs=4, batch_size=4, lr=0.01, seed=1)
    np.testing.assert_array_equal(a.latent, C.encode(a.model, x))
    z0 = C.encode(toy_model(4), x)
    b = C.joint_train(toy_model(4), x, 3, epochs=4, batch_size=4, lr=0.01, seed=1, latent=z0)
    np.testing.assert_array_equal(a.model.params, b.model.params)
    np.testing.assert_array_equal(a.c1.labels, b.c1.labels)
    with pytest.raises(C.InvalidParameterError):
        C.joint_train(toy_model(4), x, 3, epochs=1, latent=z0[:5])
