"""Two-level model: cluster-resolved E-step, M-step, reduction to flat."""

import numpy as np
import pytest

from pairmix import (
    ClassMixture,
    Dataset,
    EmptyClusterError,
    FitConfig,
    HierModel,
    InvariantViolationError,
    KTooLargeError,
    RelationSet,
    fit_flat,
    fit_hier,
    hier_estep,
    hier_mixing_counts,
    hier_update,
    log_likelihood,
    log_likelihood_hier,
    predict_hier,
    predict_hier_batch,
)
from pairmix.hier import hier_resp_cannotlink, hier_resp_mustlink, hier_resp_unsupervised
from pairmix.initialize import init_flat, init_hier, make_rng

from oracles import enum_hier_cannot, enum_hier_must, enum_hier_unsup


def random_hier_model(rng, m, cluster_counts, d):
    alpha = rng.dirichlet(np.ones(m) * 3.0)
    classes = []
    for k_count in cluster_counts:
        pi = rng.dirichlet(np.ones(k_count) * 3.0)
        means = rng.normal(size=(k_count, d)) * 2.0
        covs = np.empty((k_count, d, d))
        for k in range(k_count):
            a = rng.normal(size=(d, d))
            covs[k] = a @ a.T + 0.4 * np.eye(d)
        classes.append(ClassMixture(pi=pi, means=means, covs=covs))
    return HierModel(alpha=alpha, classes=tuple(classes))


def two_arcs_dataset(rng, n_per_class=40):
    """Two separated curved strips; each class needs two clusters to hug one."""
    t = np.linspace(0.0, np.pi, n_per_class)
    upper = np.column_stack([np.cos(t), np.sin(t)]) + 0.05 * rng.normal(
        size=(n_per_class, 2)
    )
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)]) + 0.05 * rng.normal(
        size=(n_per_class, 2)
    )
    labels = np.repeat([0, 1], n_per_class)
    return Dataset(np.vstack([upper, lower]), labels=labels)


# ---------------------------------------------------------------------------
# E-step vs enumeration over all (class, cluster) assignments


def test_hier_unsup_matches_enumeration():
    rng = np.random.default_rng(501)
    for _ in range(400):
        m = int(rng.integers(2, 4))
        counts = tuple(int(rng.integers(1, 4)) for _ in range(m))
        d = int(rng.integers(1, 3))
        model = random_hier_model(rng, m, counts, d)
        x = rng.normal(size=d) * 2.0
        joint, class_marg = hier_resp_unsupervised(model, x)
        want = enum_hier_unsup(model, x)
        assert np.max(np.abs(np.concatenate(joint) - want)) < 1e-12
        offs = model.cluster_offsets
        want_class = np.add.reduceat(want, offs[:-1])
        assert np.max(np.abs(class_marg - want_class)) < 1e-12


def test_hier_must_matches_enumeration():
    rng = np.random.default_rng(502)
    for _ in range(400):
        m = int(rng.integers(2, 4))
        counts = tuple(int(rng.integers(1, 4)) for _ in range(m))
        d = int(rng.integers(1, 3))
        model = random_hier_model(rng, m, counts, d)
        x_i = rng.normal(size=d) * 2.0
        x_j = rng.normal(size=d) * 2.0
        joint_i, joint_j, class_marg = hier_resp_mustlink(model, x_i, x_j)
        want_i, want_j, want_class = enum_hier_must(model, x_i, x_j)
        assert np.max(np.abs(np.concatenate(joint_i) - want_i)) < 1e-12
        assert np.max(np.abs(np.concatenate(joint_j) - want_j)) < 1e-12
        assert np.max(np.abs(class_marg - want_class)) < 1e-12


def test_hier_cannot_matches_enumeration():
    rng = np.random.default_rng(503)
    for _ in range(400):
        m = int(rng.integers(2, 4))
        counts = tuple(int(rng.integers(1, 4)) for _ in range(m))
        d = int(rng.integers(1, 3))
        model = random_hier_model(rng, m, counts, d)
        x_a = rng.normal(size=d) * 2.0
        x_b = rng.normal(size=d) * 2.0
        joint_a, joint_b, d_a, d_b, class_joint = hier_resp_cannotlink(
            model, x_a, x_b
        )
        want_a, want_b, want_joint = enum_hier_cannot(model, x_a, x_b)
        assert np.max(np.abs(np.concatenate(joint_a) - want_a)) < 1e-12
        assert np.max(np.abs(np.concatenate(joint_b) - want_b)) < 1e-12
        assert np.max(np.abs(class_joint - want_joint)) < 1e-12
        assert np.max(np.abs(d_a - want_joint.sum(axis=1))) < 1e-12
        assert np.max(np.abs(d_b - want_joint.sum(axis=0))) < 1e-12
        assert np.all(np.diag(class_joint) == 0.0)


def test_hier_estep_tables_match_per_point_ops():
    rng = np.random.default_rng(504)
    for _ in range(40):
        m = int(rng.integers(2, 4))
        counts = tuple(int(rng.integers(1, 4)) for _ in range(m))
        model = random_hier_model(rng, m, counts, 2)
        pts = rng.normal(size=(12, 2)) * 2.0
        ds = Dataset(pts)
        rel = RelationSet(must=[(0, 5)], cannot=[(2, 7)])
        resp = hier_estep(model, ds, rel)
        assert set(resp.unsup_indices) == set(range(12)) - {0, 5, 2, 7}
        for row, i in enumerate(resp.unsup_indices):
            joint, _ = hier_resp_unsupervised(model, pts[i])
            np.testing.assert_allclose(
                resp.unsup[row], np.concatenate(joint), atol=1e-12
            )
        for row, (i, j) in enumerate(resp.must_pairs):
            mi, mj, mc = hier_resp_mustlink(model, pts[i], pts[j])
            np.testing.assert_allclose(
                resp.must_i[row], np.concatenate(mi), atol=1e-12
            )
            np.testing.assert_allclose(
                resp.must_j[row], np.concatenate(mj), atol=1e-12
            )
            np.testing.assert_allclose(resp.must_class[row], mc, atol=1e-12)
        for row, (a, b) in enumerate(resp.cannot_pairs):
            ja, jb, da, db, cj = hier_resp_cannotlink(model, pts[a], pts[b])
            np.testing.assert_allclose(
                resp.cannot_a[row], np.concatenate(ja), atol=1e-12
            )
            np.testing.assert_allclose(
                resp.cannot_b[row], np.concatenate(jb), atol=1e-12
            )
            np.testing.assert_allclose(resp.cannot_a_class[row], da, atol=1e-12)
            np.testing.assert_allclose(resp.cannot_b_class[row], db, atol=1e-12)
            np.testing.assert_allclose(resp.cannot_class_joint[row], cj, atol=1e-12)


# ---------------------------------------------------------------------------
# Reduction: one cluster per class must reproduce the flat model exactly


def test_single_cluster_fit_matches_flat_fit():
    rng = np.random.default_rng(505)
    ds = two_arcs_dataset(rng)
    rel = RelationSet(must=[(0, 10), (40, 50)], cannot=[(0, 45), (20, 60)])
    seeds = make_rng(17)
    init_f = init_flat(ds, 2, seeds)
    init_h = init_f.to_hier()
    for n_iters in (1, 3, 8):
        cfg = FitConfig(max_iters=n_iters, tol=1e-300)
        mf, tf = fit_flat(ds, rel, 2, cfg, init=init_f)
        mh, th = fit_hier(ds, rel, 2, 1, cfg, init=init_h)
        back = mh.to_flat()
        assert np.max(np.abs(back.alpha - mf.alpha)) < 1e-10
        assert np.max(np.abs(back.means - mf.means)) < 1e-10
        assert np.max(np.abs(back.covs - mf.covs)) < 1e-10
        assert len(tf.log_likelihoods) == len(th.log_likelihoods)
        for a, b in zip(tf.log_likelihoods, th.log_likelihoods):
            assert abs(a - b) < 1e-10


def test_hier_log_likelihood_reduces_to_flat():
    rng = np.random.default_rng(506)
    ds = Dataset(rng.normal(size=(15, 2)))
    rel = RelationSet(must=[(0, 1)], cannot=[(2, 3)])
    from test_flat import random_flat_model

    model = random_flat_model(rng, 3, 2)
    assert (
        abs(
            log_likelihood(model, ds, rel)
            - log_likelihood_hier(model.to_hier(), ds, rel)
        )
        < 1e-10
    )


# ---------------------------------------------------------------------------
# M-step and mixing counts


def test_hier_update_weights_are_consistent():
    # every point contributes total weight 1 to the flattened cluster axis,
    # every pair weight 2 split across its endpoints
    rng = np.random.default_rng(507)
    model = random_hier_model(rng, 2, (2, 2), 2)
    pts = rng.normal(size=(10, 2)) * 2.0
    ds = Dataset(pts)
    rel = RelationSet(must=[(0, 5)], cannot=[(2, 7)])
    resp = hier_estep(model, ds, rel)
    counts = hier_mixing_counts(resp)
    # class-level counts: 6 unsupervised + 1 shared must + 2 cannot marginals
    assert abs(counts.sum() - (6 + 1 + 2)) < 1e-9

    means, covs, pi = hier_update(ds, rel, resp)
    for m in range(2):
        assert means[m].shape == (2, 2)
        assert covs[m].shape == (2, 2, 2)
        assert abs(pi[m].sum() - 1.0) < 1e-12
        for k in range(2):
            np.linalg.cholesky(covs[m][k])


def test_hier_update_empty_cluster_raises():
    rng = np.random.default_rng(508)
    pts = rng.normal(size=(6, 2))
    ds = Dataset(pts)
    # craft responsibilities that give one cluster zero weight
    model = random_hier_model(rng, 2, (2, 1), 2)
    resp = hier_estep(model, ds, RelationSet())
    zeroed = np.array(resp.unsup)
    zeroed[:, 1] = 0.0
    zeroed /= zeroed.sum(axis=1, keepdims=True)
    from pairmix import HierResponsibilities

    broken = HierResponsibilities(
        offsets=resp.offsets,
        unsup_indices=resp.unsup_indices,
        unsup=zeroed,
        must_pairs=resp.must_pairs,
        must_i=resp.must_i,
        must_j=resp.must_j,
        must_class=resp.must_class,
        cannot_pairs=resp.cannot_pairs,
        cannot_a=resp.cannot_a,
        cannot_b=resp.cannot_b,
        cannot_a_class=resp.cannot_a_class,
        cannot_b_class=resp.cannot_b_class,
        cannot_class_joint=resp.cannot_class_joint,
    )
    with pytest.raises(EmptyClusterError) as err:
        hier_update(ds, RelationSet(), broken)
    assert err.value.class_index == 0 and err.value.cluster_index == 1


# ---------------------------------------------------------------------------
# Full EM loop


def test_fit_hier_monotone_and_deterministic():
    rng = np.random.default_rng(509)
    ds = two_arcs_dataset(rng)
    rel = RelationSet(must=[(0, 39), (40, 79)], cannot=[(0, 60), (20, 40)])
    m1, t1 = fit_hier(ds, rel, 2, (2, 2), FitConfig(seed=5))
    lls = np.array(t1.log_likelihoods)
    assert np.all(np.diff(lls) >= -1e-8)
    assert abs(lls[-1] - log_likelihood_hier(m1, ds, rel)) < 1e-9
    m2, t2 = fit_hier(ds, rel, 2, (2, 2), FitConfig(seed=5))
    assert t1.log_likelihoods == t2.log_likelihoods
    np.testing.assert_array_equal(m1.alpha, m2.alpha)
    for c1, c2 in zip(m1.classes, m2.classes):
        np.testing.assert_array_equal(c1.means, c2.means)


def test_fit_hier_mixed_cluster_counts():
    rng = np.random.default_rng(510)
    ds = two_arcs_dataset(rng)
    model, trace = fit_hier(ds, RelationSet(), 2, (1, 3), FitConfig(seed=2))
    assert model.cluster_counts == (1, 3)
    lls = np.array(trace.log_likelihoods)
    assert np.all(np.diff(lls) >= -1e-8)


def test_fit_hier_rejects_too_many_clusters():
    ds = Dataset(np.random.default_rng(0).normal(size=(3, 2)))
    with pytest.raises(KTooLargeError):
        fit_hier(ds, RelationSet(), 2, (2, 2))


def test_fit_hier_cluster_count_validation():
    from pairmix import LengthMismatchError

    ds = Dataset(np.random.default_rng(0).normal(size=(10, 2)))
    with pytest.raises(LengthMismatchError):
        fit_hier(ds, RelationSet(), 2, (2, 2, 2))
    with pytest.raises(InvariantViolationError):
        fit_hier(ds, RelationSet(), 2, 0)


def test_predict_hier_consistency():
    rng = np.random.default_rng(511)
    model = random_hier_model(rng, 3, (2, 1, 3), 2)
    x = rng.normal(size=2)
    single = predict_hier(model, x)
    _, class_marg = hier_resp_unsupervised(model, x)
    np.testing.assert_allclose(single, class_marg, atol=1e-12)
    pts = rng.normal(size=(15, 2))
    batch = predict_hier_batch(model, pts)
    assert batch.shape == (15, 3)
    np.testing.assert_allclose(batch.sum(axis=1), 1.0, atol=1e-12)
    for i in range(15):
        np.testing.assert_allclose(batch[i], predict_hier(model, pts[i]), atol=1e-12)
