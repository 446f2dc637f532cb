"""EM for the two-level model: every class is its own Gaussian mixture.

A class ``m`` carries sub-clusters ``k = 1..K_m`` with weights ``π_{m_k}``,
so one class can cover a curved, manifold-shaped region.  The pairwise
relations continue to act at the *class* level: a must-link pair shares a
single class label (each member keeps its own sub-cluster label), and a
cannot-link pair uses the zero-diagonal class-pair prior.  Everything
reduces exactly to the flat model when every class has one cluster.

Internally the cluster axis is flattened over ``(class, cluster)`` with
offsets (see :class:`~pairmix.types.HierResponsibilities`); the quantity
``B[n, m] = log Σ_k π_{m_k} N_{m_k}(x_n)`` — the within-class mixture
log-likelihood — plays the role the single log-density has in the flat
E-step, and the sub-cluster posterior ``r[n, (m,k)]`` factors every joint
table as ``(class table) × r``.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateNormalizerError,
    DimensionMismatchError,
    EmptyClusterError,
    InvariantViolationError,
    KTooLargeError,
    LengthMismatchError,
    NotFiniteError,
)
from .flat import (
    FitConfig,
    FitTrace,
    _pooled_covariance,
    _safeguarded_mixing,
    cannotlink_prior,
)
from .gaussian import (
    log_density_stack,
    log_sum_exp,
    regularize_covariance,
    regularize_covariance_eps,
    scaled_ridge,
)
from .types import (
    ClassMixture,
    Dataset,
    HierModel,
    HierResponsibilities,
    RelationSet,
    validate_relations,
)

Z_EPS = 1e-12


def _flatten_params(model: HierModel):
    """Stack per-class parameters along one cluster axis."""
    means = np.concatenate([c.means for c in model.classes])
    chols = np.concatenate([c.chols for c in model.classes])
    log_dets = np.concatenate([c.log_dets for c in model.classes])
    with np.errstate(divide="ignore"):
        log_pi = np.concatenate([np.log(c.pi) for c in model.classes])
        log_alpha = np.log(model.alpha)
    return means, chols, log_dets, log_pi, log_alpha


def _cluster_tables(model: HierModel, points: np.ndarray):
    """Per-point log cluster densities, within-class log-likelihoods B, and
    sub-cluster posteriors r (flattened cluster axis)."""
    means, chols, log_dets, log_pi, log_alpha = _flatten_params(model)
    log_dens = log_density_stack(points, means, chols, log_dets)
    weighted = log_pi + log_dens
    offsets = model.cluster_offsets
    n = points.shape[0]
    b = np.empty((n, model.n_classes))
    for m in range(model.n_classes):
        b[:, m] = log_sum_exp(weighted[:, offsets[m] : offsets[m + 1]], axis=1)
    class_of = np.repeat(np.arange(model.n_classes), model.cluster_counts)
    r = np.exp(weighted - b[:, class_of])
    return weighted, b, r, log_alpha, class_of


def _check_point(model: HierModel, x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DimensionMismatchError(
            f"{name} has shape {x.shape}, expected ({model.dim},)"
        )
    if not np.all(np.isfinite(x)):
        raise NotFiniteError(f"{name} contains non-finite entries")
    return x


def _split(model: HierModel, flat_row: np.ndarray) -> list[np.ndarray]:
    offsets = model.cluster_offsets
    return [flat_row[offsets[m] : offsets[m + 1]] for m in range(model.n_classes)]


def hier_resp_unsupervised(model: HierModel, x):
    """Joint class/cluster posterior of an independent point.

    Returns ``(joint, marginal)``: ``joint[m]`` is the length-``K_m`` table
    ``p(z^m, y^{m_k} | x) ∝ α_m π_{m_k} N_{m_k}(x)`` and ``marginal`` its
    per-class sums.
    """
    x = _check_point(model, x)
    _, b, r, log_alpha, class_of = _cluster_tables(model, x[None, :])
    w = log_alpha + b[0]
    marginal = np.exp(w - log_sum_exp(w))
    joint = marginal[class_of] * r[0]
    return _split(model, joint), marginal


def hier_resp_mustlink(model: HierModel, x_i, x_j):
    """Posteriors of a must-link pair sharing one class label.

    Returns ``(joint_i, joint_j, class_marginal)`` where the shared class
    posterior weighs ``α_m`` by both members' within-class mixture
    likelihoods, and each member's sub-cluster label is conditionally
    independent given the class.
    """
    x_i = _check_point(model, x_i, "x_i")
    x_j = _check_point(model, x_j, "x_j")
    _, b, r, log_alpha, class_of = _cluster_tables(model, np.stack([x_i, x_j]))
    w = log_alpha + b[0] + b[1]
    shared = np.exp(w - log_sum_exp(w))
    joint_i = shared[class_of] * r[0]
    joint_j = shared[class_of] * r[1]
    return _split(model, joint_i), _split(model, joint_j), shared


def hier_resp_cannotlink(model: HierModel, x_a, x_b):
    """Posteriors of a cannot-link pair under the zero-diagonal class prior.

    Returns ``(joint_a, joint_b, d_a, d_b, class_joint)``: per-member joint
    class/cluster tables, their class marginals, and the M×M class-pair
    posterior.
    """
    x_a = _check_point(model, x_a, "x_a")
    x_b = _check_point(model, x_b, "x_b")
    prior = cannotlink_prior(model.alpha)
    _, b, r, _, class_of = _cluster_tables(model, np.stack([x_a, x_b]))
    with np.errstate(divide="ignore"):
        w = np.log(prior.table) + b[0][:, None] + b[1][None, :]
    class_joint = np.exp(w - log_sum_exp(w.reshape(-1)))
    d_a = class_joint.sum(axis=1)
    d_b = class_joint.sum(axis=0)
    joint_a = d_a[class_of] * r[0]
    joint_b = d_b[class_of] * r[1]
    return _split(model, joint_a), _split(model, joint_b), d_a, d_b, class_joint


def hier_estep(
    model: HierModel,
    dataset: Dataset,
    relations: RelationSet,
    *,
    count_linked_as_unsupervised: bool = False,
) -> HierResponsibilities:
    """Vectorized hierarchical E-step over the whole dataset."""
    x = dataset.points
    n = x.shape[0]
    n_classes = model.n_classes
    total = model.total_clusters
    _, b, r, log_alpha, class_of = _cluster_tables(model, x)

    if count_linked_as_unsupervised or relations.is_empty():
        unsup_idx = np.arange(n, dtype=np.int64)
    else:
        unsup_idx = np.setdiff1d(
            np.arange(n, dtype=np.int64), relations.linked_indices()
        )
    if unsup_idx.size:
        w = log_alpha + b[unsup_idx]
        marg = np.exp(w - log_sum_exp(w, axis=1)[:, None])
        unsup = marg[:, class_of] * r[unsup_idx]
    else:
        unsup = np.zeros((0, total))

    must_pairs = np.asarray(relations.must, dtype=np.int64).reshape(-1, 2)
    if must_pairs.size:
        i, j = must_pairs[:, 0], must_pairs[:, 1]
        w = log_alpha + b[i] + b[j]
        must_class = np.exp(w - log_sum_exp(w, axis=1)[:, None])
        must_i = must_class[:, class_of] * r[i]
        must_j = must_class[:, class_of] * r[j]
    else:
        must_class = np.zeros((0, n_classes))
        must_i = np.zeros((0, total))
        must_j = np.zeros((0, total))

    cannot_pairs = np.asarray(relations.cannot, dtype=np.int64).reshape(-1, 2)
    if cannot_pairs.size:
        prior = cannotlink_prior(model.alpha)
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior.table)
        a_idx, b_idx = cannot_pairs[:, 0], cannot_pairs[:, 1]
        w = log_prior[None, :, :] + b[a_idx][:, :, None] + b[b_idx][:, None, :]
        class_joint = np.exp(
            w - log_sum_exp(w.reshape(len(cannot_pairs), -1), axis=1)[:, None, None]
        )
        d_a_class = class_joint.sum(axis=2)
        d_b_class = class_joint.sum(axis=1)
        cannot_a = d_a_class[:, class_of] * r[a_idx]
        cannot_b = d_b_class[:, class_of] * r[b_idx]
    else:
        class_joint = np.zeros((0, n_classes, n_classes))
        d_a_class = np.zeros((0, n_classes))
        d_b_class = np.zeros((0, n_classes))
        cannot_a = np.zeros((0, total))
        cannot_b = np.zeros((0, total))

    return HierResponsibilities(
        offsets=model.cluster_offsets,
        unsup_indices=unsup_idx,
        unsup=unsup,
        must_pairs=must_pairs,
        must_i=must_i,
        must_j=must_j,
        must_class=must_class,
        cannot_pairs=cannot_pairs,
        cannot_a=cannot_a,
        cannot_b=cannot_b,
        cannot_a_class=d_a_class,
        cannot_b_class=d_b_class,
        cannot_class_joint=class_joint,
    )


# ---------------------------------------------------------------------------
# M-step


def hier_mixing_counts(resp: HierResponsibilities) -> np.ndarray:
    """Class-marginal counts ``c_m`` for the mixing-weight update."""
    return (
        _class_sums(resp.unsup, resp.offsets)
        + resp.must_class.sum(axis=0)
        + resp.cannot_a_class.sum(axis=0)
        + resp.cannot_b_class.sum(axis=0)
    )


def _class_sums(table: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    out = np.zeros(offsets.size - 1)
    if table.size:
        flat = table.sum(axis=0)
        out = np.add.reduceat(flat, offsets[:-1])
    return out


def _cluster_moments(dataset: Dataset, resp: HierResponsibilities):
    """Per-cluster weights, first moments, and a scatter evaluator.

    Unlike the flat normalizer there is no factor two on must-link pairs:
    each member carries its own cluster-level weight.
    """
    x = dataset.points
    xu = x[resp.unsup_indices]
    xi = x[resp.must_pairs[:, 0]] if resp.must_pairs.size else x[:0]
    xj = x[resp.must_pairs[:, 1]] if resp.must_pairs.size else x[:0]
    xa = x[resp.cannot_pairs[:, 0]] if resp.cannot_pairs.size else x[:0]
    xb = x[resp.cannot_pairs[:, 1]] if resp.cannot_pairs.size else x[:0]

    terms = (
        (xu, resp.unsup),
        (xi, resp.must_i),
        (xj, resp.must_j),
        (xa, resp.cannot_a),
        (xb, resp.cannot_b),
    )
    total = resp.offsets[-1]
    weight = np.zeros(total)
    first = np.zeros((total, x.shape[1]))
    for pts, wts in terms:
        if pts.shape[0]:
            weight += wts.sum(axis=0)
            first += wts.T @ pts

    def scatter(c: int, center: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[1], x.shape[1]))
        for pts, wts in terms:
            if pts.shape[0]:
                dev = pts - center
                out += (dev * wts[:, c : c + 1]).T @ dev
        return out

    return weight, first, scatter


def hier_update(
    dataset: Dataset,
    relations: RelationSet,
    resp: HierResponsibilities,
    *,
    ridge_floor: float = 1e-6,
) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Closed-form M-step for cluster means, covariances, and π.

    Returns per-class lists aligned with the model's classes.  Raises
    :class:`EmptyClusterError` when a cluster's weight is ≤ 1e-12.
    """
    if len(resp.must_pairs) != len(relations.must) or len(resp.cannot_pairs) != len(
        relations.cannot
    ):
        raise LengthMismatchError("responsibilities do not align with the relation set")
    weight, first, scatter = _cluster_moments(dataset, resp)
    offsets = resp.offsets
    d = dataset.dim
    means_out: list[np.ndarray] = []
    covs_out: list[np.ndarray] = []
    pi_out: list[np.ndarray] = []
    for m in range(offsets.size - 1):
        lo, hi = offsets[m], offsets[m + 1]
        k_m = hi - lo
        means = np.empty((k_m, d))
        covs = np.empty((k_m, d, d))
        for k in range(k_m):
            c = lo + k
            if weight[c] <= Z_EPS:
                raise EmptyClusterError(m, k)
            means[k] = first[c] / weight[c]
            raw = scatter(c, means[k]) / weight[c]
            covs[k] = regularize_covariance(raw, scaled_ridge(raw, ridge_floor))
        means_out.append(means)
        covs_out.append(covs)
        pi_out.append(weight[lo:hi] / weight[lo:hi].sum())
    return means_out, covs_out, pi_out


# ---------------------------------------------------------------------------
# observed-data log-likelihood


def log_likelihood_hier(
    model: HierModel,
    dataset: Dataset,
    relations: RelationSet,
    *,
    count_linked_as_unsupervised: bool = False,
) -> float:
    """Hierarchical analog of :func:`pairmix.flat.log_likelihood` with the
    within-class mixture likelihood in place of the single density."""
    relations = validate_relations(relations, dataset.n)
    if relations.cannot and model.n_classes < 2:
        raise DegenerateNormalizerError("cannot-links require at least two classes")
    _, b, _, log_alpha, _ = _cluster_tables(model, dataset.points)

    total = 0.0
    if count_linked_as_unsupervised or relations.is_empty():
        unsup_idx = np.arange(dataset.n)
    else:
        unsup_idx = np.setdiff1d(np.arange(dataset.n), relations.linked_indices())
    if unsup_idx.size:
        total += float(np.sum(log_sum_exp(log_alpha + b[unsup_idx], axis=1)))

    if relations.must:
        pairs = np.asarray(relations.must, dtype=np.int64)
        w = log_alpha + b[pairs[:, 0]] + b[pairs[:, 1]]
        total += float(np.sum(log_sum_exp(w, axis=1)))

    if relations.cannot:
        prior = cannotlink_prior(model.alpha)
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior.table)
        pairs = np.asarray(relations.cannot, dtype=np.int64)
        w = log_prior[None, :, :] + b[pairs[:, 0]][:, :, None] + b[pairs[:, 1]][:, None, :]
        total += float(np.sum(log_sum_exp(w.reshape(len(pairs), -1), axis=1)))
    return total


# ---------------------------------------------------------------------------
# fit loop


def _normalize_cluster_counts(n_classes: int, clusters_per_class) -> tuple[int, ...]:
    if np.isscalar(clusters_per_class):
        k = int(clusters_per_class)
        counts = (k,) * n_classes
    else:
        counts = tuple(int(k) for k in clusters_per_class)
        if len(counts) != n_classes:
            raise LengthMismatchError(
                f"got {len(counts)} cluster counts for {n_classes} classes"
            )
    if any(k < 1 for k in counts):
        raise InvariantViolationError("every class needs at least one cluster")
    return counts


def fit_hier(
    dataset: Dataset,
    relations: RelationSet,
    n_classes: int,
    clusters_per_class,
    config: FitConfig | None = None,
    *,
    init: HierModel | None = None,
) -> tuple[HierModel, FitTrace]:
    """EM loop for the two-level model; mirrors :func:`pairmix.flat.fit_flat`.

    ``clusters_per_class`` is an int applied to every class or a per-class
    sequence.  Class mixing weights are re-optimized each iteration from
    the class-marginal counts; cluster weights π use the closed-form ratio.
    """
    from .initialize import init_hier, make_rng

    config = config or FitConfig()
    if n_classes < 1:
        raise InvariantViolationError("need at least one class")
    counts_per_class = _normalize_cluster_counts(n_classes, clusters_per_class)
    if dataset.n < sum(counts_per_class):
        raise KTooLargeError(
            f"cannot fit {sum(counts_per_class)} clusters to {dataset.n} points"
        )
    relations = validate_relations(relations, dataset.n)
    if relations.cannot and n_classes < 2:
        raise DegenerateNormalizerError("cannot-links require at least two classes")
    if init is None:
        model = init_hier(
            dataset, n_classes, counts_per_class, make_rng(config.seed),
            config.ridge_floor,
        )
    else:
        if init.n_classes != n_classes or init.cluster_counts != counts_per_class:
            raise InvariantViolationError(
                "init does not match the requested class/cluster structure"
            )
        if init.dim != dataset.dim:
            raise DimensionMismatchError(
                f"init dimension {init.dim} does not match data dimension {dataset.dim}"
            )
        model = init

    warnings: list[str] = []
    kw = {"count_linked_as_unsupervised": config.count_linked_as_unsupervised}
    ll_prev = log_likelihood_hier(model, dataset, relations, **kw)
    trace = [ll_prev]
    converged = False
    n_iters = 0

    for iteration in range(1, config.max_iters + 1):
        resp = hier_estep(model, dataset, relations, **kw)
        weight, first, scatter = _cluster_moments(dataset, resp)
        class_counts = hier_mixing_counts(resp)
        offsets = resp.offsets
        d = dataset.dim

        empty = np.flatnonzero(weight <= Z_EPS)
        reseed_targets: list[int] = []
        if empty.size:
            _, b, r, log_alpha, class_of = _cluster_tables(model, dataset.points)
            w_all = log_alpha + b
            marg = np.exp(w_all - log_sum_exp(w_all, axis=1)[:, None])
            joint = marg[:, class_of] * r
            claimed = joint.max(axis=1)
            reseed_targets = [int(i) for i in np.argsort(claimed)]
            pooled = _pooled_covariance(dataset, config.ridge_floor)

        classes = []
        for m in range(n_classes):
            lo, hi = offsets[m], offsets[m + 1]
            k_m = hi - lo
            means = np.empty((k_m, d))
            covs = np.empty((k_m, d, d))
            w_cluster = weight[lo:hi].copy()
            for k in range(k_m):
                c = lo + k
                if c in empty:
                    target = reseed_targets[int(np.where(empty == c)[0][0]) % len(reseed_targets)]
                    means[k] = dataset.points[target]
                    covs[k] = pooled
                    w_cluster[k] = 1.0
                    warnings.append(
                        f"iteration {iteration}: cluster {k} of class {m} lost all "
                        f"responsibility mass; reseeded at point {target}"
                    )
                else:
                    means[k] = first[c] / weight[c]
                    raw = scatter(c, means[k]) / weight[c]
                    covs[k], ridge_eps = regularize_covariance_eps(
                        raw, scaled_ridge(raw, config.ridge_floor)
                    )
                    if ridge_eps > 0.0:
                        warnings.append(
                            f"iteration {iteration}: covariance of cluster {k} "
                            f"of class {m} was degenerate; ridged by "
                            f"{ridge_eps:.2e}"
                        )
            if class_counts[m] <= Z_EPS:
                class_counts[m] = 1.0
            classes.append(
                ClassMixture(pi=w_cluster / w_cluster.sum(), means=means, covs=covs)
            )

        alpha = _safeguarded_mixing(
            class_counts, relations.n_cannot, model.alpha,
            config.mixing_iters * 10, warnings, iteration,
        )
        model = HierModel(alpha=alpha, classes=tuple(classes))

        ll = log_likelihood_hier(model, dataset, relations, **kw)
        trace.append(ll)
        n_iters = iteration
        if abs(ll - ll_prev) <= config.tol * (1.0 + abs(ll_prev)):
            converged = True
            break
        ll_prev = ll

    return model, FitTrace(
        log_likelihoods=tuple(trace),
        n_iters=n_iters,
        converged=converged,
        warnings=tuple(warnings),
    )


def predict_hier(model: HierModel, x) -> np.ndarray:
    """Soft class label of a point: the class-marginal posterior."""
    _, marginal = hier_resp_unsupervised(model, x)
    return marginal


def predict_hier_batch(model: HierModel, points) -> np.ndarray:
    """Row-wise class-marginal posteriors → (N, M) table."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"points have shape {points.shape}, expected (N, {model.dim})"
        )
    if not np.all(np.isfinite(points)):
        raise NotFiniteError("points contain non-finite entries")
    _, b, _, log_alpha, _ = _cluster_tables(model, points)
    w = log_alpha + b
    return np.exp(w - log_sum_exp(w, axis=1)[:, None])
