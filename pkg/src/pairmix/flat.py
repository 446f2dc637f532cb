"""EM for a Gaussian mixture with pairwise must-link / cannot-link relations.

The model couples three data factors: independent points, must-link pairs
(the two members share a single latent class variable), and cannot-link
pairs (a joint prior over the two class labels with zero same-class mass).
The E-step computes the corresponding posterior tables; the M-step updates
means and covariances in closed form and the mixing weights through
:func:`pairmix.mixing.optimize_mixing`.

By default a point that appears in any relation is *not* additionally
counted as an independent point: relation membership is treated as
exhaustive for that point, keeping the three factors disjoint.  Set
``FitConfig.count_linked_as_unsupervised`` to also duplicate relation
members into the independent factor (ablation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateNormalizerError,
    DimensionMismatchError,
    EmptyClassError,
    InvariantViolationError,
    KTooLargeError,
    LengthMismatchError,
    NoConvergenceError,
    NotFiniteError,
)
from .gaussian import (
    log_density_stack,
    log_sum_exp,
    regularize_covariance,
    regularize_covariance_eps,
    scaled_ridge,
)
from .mixing import mixing_objective, optimize_mixing
from .types import Dataset, FlatModel, RelationSet, Responsibilities, validate_relations

Z_EPS = 1e-12


@dataclass(frozen=True)
class CannotLinkPrior:
    """Joint prior over the class labels of a cannot-link pair.

    ``table[m, m'] = α_m α_{m'} / norm`` off the diagonal, exactly zero on
    it, with ``norm = 1 − Σ_m α_m²`` so the table sums to one.
    """

    table: np.ndarray
    norm: float

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


def cannotlink_prior(alpha) -> CannotLinkPrior:
    """Build the zero-diagonal pair prior for mixing weights ``alpha``.

    Raises :class:`DegenerateNormalizerError` when fewer than two classes
    exist or the weights are concentrated on one class (norm ≤ 1e-12).
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1:
        raise InvariantViolationError("alpha must be a 1-D vector")
    if alpha.size < 2:
        raise DegenerateNormalizerError(
            "cannot-link prior needs at least two classes"
        )
    if not np.all(np.isfinite(alpha)):
        raise NotFiniteError("alpha contains non-finite entries")
    norm = 1.0 - float(alpha @ alpha)
    if norm <= 1e-12:
        raise DegenerateNormalizerError(
            f"cannot-link prior normalizer {norm!r} is not positive; "
            "mixing weights are concentrated on a single class"
        )
    table = np.outer(alpha, alpha) / norm
    np.fill_diagonal(table, 0.0)
    return CannotLinkPrior(table=table, norm=norm)


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the EM loop.

    ``tol`` is the relative log-likelihood change that counts as converged;
    ``ridge_floor`` the relative covariance ridge (scaled by mean variance);
    ``mixing_iters`` the nominal Newton budget for the mixing-weight solver
    (hard cap ``10 × mixing_iters``); ``seed`` drives initialization when no
    explicit starting model is supplied.
    """

    max_iters: int = 500
    tol: float = 1e-8
    ridge_floor: float = 1e-6
    mixing_iters: int = 20
    seed: int = 0
    count_linked_as_unsupervised: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvariantViolationError("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvariantViolationError("tol must be > 0")
        if not self.ridge_floor > 0:
            raise InvariantViolationError("ridge_floor must be > 0")
        if self.mixing_iters < 1:
            raise InvariantViolationError("mixing_iters must be >= 1")


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration observed-data log-likelihood trail.

    ``log_likelihoods[0]`` is the value at initialization, followed by one
    entry per EM iteration.  The sequence is nondecreasing except on
    iterations that needed an empty-class recovery or covariance ridge
    (recorded in ``warnings``).
    """

    log_likelihoods: tuple[float, ...]
    n_iters: int
    converged: bool
    warnings: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# E-step


def _class_log_weights(model: FlatModel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(model.alpha)


def _check_point(model: FlatModel, x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DimensionMismatchError(
            f"{name} has shape {x.shape}, expected ({model.dim},)"
        )
    if not np.all(np.isfinite(x)):
        raise NotFiniteError(f"{name} contains non-finite entries")
    return x


def resp_unsupervised(model: FlatModel, x) -> np.ndarray:
    """Class posterior of an independent point: ``ℓ^m ∝ α_m N_m(x)``."""
    x = _check_point(model, x)
    w = _class_log_weights(model) + log_density_stack(
        x[None, :], model.means, model.chols, model.log_dets
    )[0]
    return np.exp(w - log_sum_exp(w))


def resp_mustlink(model: FlatModel, x_i, x_j) -> np.ndarray:
    """Shared class posterior of a must-link pair: ``s^m ∝ α_m N_m(x_i) N_m(x_j)``."""
    x_i = _check_point(model, x_i, "x_i")
    x_j = _check_point(model, x_j, "x_j")
    dens = log_density_stack(
        np.stack([x_i, x_j]), model.means, model.chols, model.log_dets
    )
    w = _class_log_weights(model) + dens[0] + dens[1]
    return np.exp(w - log_sum_exp(w))


def resp_cannotlink(model: FlatModel, x_a, x_b):
    """Posteriors of a cannot-link pair.

    Returns ``(d_a, d_b, joint)`` where ``joint[m, m']`` is the posterior of
    the label pair under the zero-diagonal prior and ``d_a`` / ``d_b`` are
    its row / column marginals.
    """
    x_a = _check_point(model, x_a, "x_a")
    x_b = _check_point(model, x_b, "x_b")
    prior = cannotlink_prior(model.alpha)
    dens = log_density_stack(
        np.stack([x_a, x_b]), model.means, model.chols, model.log_dets
    )
    with np.errstate(divide="ignore"):
        w = np.log(prior.table) + dens[0][:, None] + dens[1][None, :]
    joint = np.exp(w - log_sum_exp(w.reshape(-1)))
    return joint.sum(axis=1), joint.sum(axis=0), joint


def estep(
    model: FlatModel,
    dataset: Dataset,
    relations: RelationSet,
    *,
    count_linked_as_unsupervised: bool = False,
) -> Responsibilities:
    """Vectorized E-step over the whole dataset; see the per-pair ops."""
    x = dataset.points
    n, m = x.shape[0], model.n_classes
    log_alpha = _class_log_weights(model)
    log_dens = log_density_stack(x, model.means, model.chols, model.log_dets)

    if count_linked_as_unsupervised or relations.is_empty():
        unsup_idx = np.arange(n, dtype=np.int64)
    else:
        linked = relations.linked_indices()
        unsup_idx = np.setdiff1d(np.arange(n, dtype=np.int64), linked)

    w = log_alpha + log_dens[unsup_idx]
    if unsup_idx.size:
        unsup = np.exp(w - log_sum_exp(w, axis=1)[:, None])
    else:
        unsup = np.zeros((0, m))

    must_pairs = np.asarray(relations.must, dtype=np.int64).reshape(-1, 2)
    if must_pairs.size:
        wm = log_alpha + log_dens[must_pairs[:, 0]] + log_dens[must_pairs[:, 1]]
        must = np.exp(wm - log_sum_exp(wm, axis=1)[:, None])
    else:
        must = np.zeros((0, m))

    cannot_pairs = np.asarray(relations.cannot, dtype=np.int64).reshape(-1, 2)
    if cannot_pairs.size:
        prior = cannotlink_prior(model.alpha)
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior.table)
        wc = (
            log_prior[None, :, :]
            + log_dens[cannot_pairs[:, 0]][:, :, None]
            + log_dens[cannot_pairs[:, 1]][:, None, :]
        )
        lse = log_sum_exp(wc.reshape(len(cannot_pairs), -1), axis=1)
        joint = np.exp(wc - lse[:, None, None])
        cannot_a = joint.sum(axis=2)
        cannot_b = joint.sum(axis=1)
    else:
        joint = np.zeros((0, m, m))
        cannot_a = np.zeros((0, m))
        cannot_b = np.zeros((0, m))

    return Responsibilities(
        unsup_indices=unsup_idx,
        unsup=unsup,
        must_pairs=must_pairs,
        must=must,
        cannot_pairs=cannot_pairs,
        cannot_a=cannot_a,
        cannot_b=cannot_b,
        cannot_joint=joint,
    )


# ---------------------------------------------------------------------------
# M-step


def mixing_counts(resp: Responsibilities) -> np.ndarray:
    """Per-class responsibility mass ``c_m`` for the mixing-weight update.

    Each must-link pair contributes its shared weight once; each
    cannot-link pair contributes both marginals.
    """
    return (
        resp.unsup.sum(axis=0)
        + resp.must.sum(axis=0)
        + resp.cannot_a.sum(axis=0)
        + resp.cannot_b.sum(axis=0)
    )


def _moments(dataset: Dataset, resp: Responsibilities):
    """Normalizers Z_m, weighted first moments, and a scatter evaluator.

    ``Z_m`` counts each must-link pair twice (two points, one shared
    weight).  The returned closure computes the class-m scatter matrix
    around a given center, summing terms in a fixed order so results are
    bit-reproducible.
    """
    x = dataset.points
    m = resp.unsup.shape[1] if resp.unsup.ndim == 2 else resp.must.shape[1]
    xu = x[resp.unsup_indices]
    xi = x[resp.must_pairs[:, 0]] if resp.must_pairs.size else x[:0]
    xj = x[resp.must_pairs[:, 1]] if resp.must_pairs.size else x[:0]
    xa = x[resp.cannot_pairs[:, 0]] if resp.cannot_pairs.size else x[:0]
    xb = x[resp.cannot_pairs[:, 1]] if resp.cannot_pairs.size else x[:0]

    z = (
        resp.unsup.sum(axis=0)
        + 2.0 * resp.must.sum(axis=0)
        + resp.cannot_a.sum(axis=0)
        + resp.cannot_b.sum(axis=0)
    )
    first = (
        resp.unsup.T @ xu
        + resp.must.T @ (xi + xj)
        + resp.cannot_a.T @ xa
        + resp.cannot_b.T @ xb
    )

    def scatter(k: int, center: np.ndarray) -> np.ndarray:
        total = np.zeros((x.shape[1], x.shape[1]))
        for pts, wts in ((xu, resp.unsup), (xi, resp.must), (xj, resp.must),
                         (xa, resp.cannot_a), (xb, resp.cannot_b)):
            if pts.shape[0]:
                dev = pts - center
                total += (dev * wts[:, k : k + 1]).T @ dev
        return total

    return z, first, scatter


def update_mean_cov(
    dataset: Dataset,
    relations: RelationSet,
    resp: Responsibilities,
    *,
    ridge_floor: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form M-step for means and covariances.

    The covariance uses the scatter around the *new* mean and passes
    through :func:`regularize_covariance`.  Raises
    :class:`EmptyClassError` when a class's normalizer ``Z_m`` is ≤ 1e-12.
    """
    if len(resp.must_pairs) != len(relations.must) or len(resp.cannot_pairs) != len(
        relations.cannot
    ):
        raise LengthMismatchError(
            "responsibilities do not align with the relation set"
        )
    z, first, scatter = _moments(dataset, resp)
    m, d = first.shape
    means = np.empty((m, d))
    covs = np.empty((m, d, d))
    for k in range(m):
        if z[k] <= Z_EPS:
            raise EmptyClassError(k)
        means[k] = first[k] / z[k]
        raw = scatter(k, means[k]) / z[k]
        covs[k] = regularize_covariance(raw, scaled_ridge(raw, ridge_floor))
    return means, covs


# ---------------------------------------------------------------------------
# observed-data log-likelihood


def log_likelihood(
    model: FlatModel,
    dataset: Dataset,
    relations: RelationSet,
    *,
    count_linked_as_unsupervised: bool = False,
) -> float:
    """Log-likelihood with all latent class variables marginalized.

    Sum of three parts: independent points ``log Σ_m α_m N_m(x_n)``,
    must-link pairs ``log Σ_m α_m N_m(x_i) N_m(x_j)``, and cannot-link
    pairs ``log Σ_{m≠m'} p(m, m') N_m(x_a) N_{m'}(x_b)``.  Points belonging
    to a relation enter the first sum only when
    ``count_linked_as_unsupervised`` is set.
    """
    relations = validate_relations(relations, dataset.n)
    if relations.cannot and model.n_classes < 2:
        raise DegenerateNormalizerError(
            "cannot-links require at least two classes"
        )
    x = dataset.points
    log_alpha = _class_log_weights(model)
    log_dens = log_density_stack(x, model.means, model.chols, model.log_dets)

    total = 0.0
    if count_linked_as_unsupervised or relations.is_empty():
        unsup_idx = np.arange(dataset.n)
    else:
        unsup_idx = np.setdiff1d(np.arange(dataset.n), relations.linked_indices())
    if unsup_idx.size:
        total += float(np.sum(log_sum_exp(log_alpha + log_dens[unsup_idx], axis=1)))

    if relations.must:
        pairs = np.asarray(relations.must, dtype=np.int64)
        w = log_alpha + log_dens[pairs[:, 0]] + log_dens[pairs[:, 1]]
        total += float(np.sum(log_sum_exp(w, axis=1)))

    if relations.cannot:
        prior = cannotlink_prior(model.alpha)
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior.table)
        pairs = np.asarray(relations.cannot, dtype=np.int64)
        w = (
            log_prior[None, :, :]
            + log_dens[pairs[:, 0]][:, :, None]
            + log_dens[pairs[:, 1]][:, None, :]
        )
        total += float(np.sum(log_sum_exp(w.reshape(len(pairs), -1), axis=1)))
    return total


# ---------------------------------------------------------------------------
# fit loop


def _pooled_covariance(dataset: Dataset, ridge_floor: float) -> np.ndarray:
    dev = dataset.points - dataset.points.mean(axis=0)
    raw = dev.T @ dev / dataset.n
    return regularize_covariance(raw, scaled_ridge(raw, ridge_floor))


def _safeguarded_mixing(
    counts: np.ndarray,
    n_cannot: int,
    alpha_old: np.ndarray,
    max_steps: int,
    warnings: list[str],
    iteration: int,
) -> np.ndarray:
    """Mixing update that never decreases the concentrated objective."""
    try:
        alpha_new = optimize_mixing(counts, n_cannot, None, max_steps=max_steps)
    except NoConvergenceError:
        alpha_new = None
    if n_cannot == 0 and alpha_new is not None:
        return alpha_new
    f_old = mixing_objective(alpha_old, counts, n_cannot)
    if alpha_new is not None and mixing_objective(alpha_new, counts, n_cannot) >= f_old:
        return alpha_new
    try:
        retry = optimize_mixing(counts, n_cannot, alpha_old, max_steps=max_steps)
        if mixing_objective(retry, counts, n_cannot) >= f_old:
            return retry
    except NoConvergenceError:
        pass
    warnings.append(
        f"iteration {iteration}: mixing update made no progress; kept previous weights"
    )
    return alpha_old


def fit_flat(
    dataset: Dataset,
    relations: RelationSet,
    n_classes: int,
    config: FitConfig | None = None,
    *,
    init: FlatModel | None = None,
) -> tuple[FlatModel, FitTrace]:
    """Run EM to convergence; returns the model and its likelihood trace.

    Initialization draws seed means via k-means++ unless ``init`` supplies
    a starting model.  An empty class encountered mid-run is reseeded at
    the point the current model claims least, with the pooled data
    covariance (recorded as a warning rather than an error).
    """
    from .initialize import init_flat, make_rng

    config = config or FitConfig()
    if n_classes < 1:
        raise InvariantViolationError("need at least one class")
    if dataset.n < n_classes:
        raise KTooLargeError(
            f"cannot fit {n_classes} classes to {dataset.n} points"
        )
    relations = validate_relations(relations, dataset.n)
    if relations.cannot and n_classes < 2:
        raise DegenerateNormalizerError(
            "cannot-links require at least two classes"
        )
    if init is None:
        model = init_flat(dataset, n_classes, make_rng(config.seed), config.ridge_floor)
    else:
        if init.n_classes != n_classes:
            raise InvariantViolationError(
                f"init has {init.n_classes} classes, expected {n_classes}"
            )
        if init.dim != dataset.dim:
            raise DimensionMismatchError(
                f"init dimension {init.dim} does not match data dimension {dataset.dim}"
            )
        model = init

    warnings: list[str] = []
    ll_prev = log_likelihood(
        model, dataset, relations,
        count_linked_as_unsupervised=config.count_linked_as_unsupervised,
    )
    trace = [ll_prev]
    converged = False
    n_iters = 0

    for iteration in range(1, config.max_iters + 1):
        resp = estep(
            model, dataset, relations,
            count_linked_as_unsupervised=config.count_linked_as_unsupervised,
        )
        z, first, scatter = _moments(dataset, resp)
        counts = mixing_counts(resp)
        m, d = first.shape
        means = np.empty((m, d))
        covs = np.empty((m, d, d))
        empty = np.flatnonzero(z <= Z_EPS)
        for k in range(m):
            if k in empty:
                continue
            means[k] = first[k] / z[k]
            raw = scatter(k, means[k]) / z[k]
            covs[k], ridge_eps = regularize_covariance_eps(
                raw, scaled_ridge(raw, config.ridge_floor)
            )
            if ridge_eps > 0.0:
                warnings.append(
                    f"iteration {iteration}: covariance of class {k} was "
                    f"degenerate; ridged by {ridge_eps:.2e}"
                )
        if empty.size:
            # reseed each dead class at the point the model currently
            # claims least, with the pooled covariance, and give it one
            # unit of mixing mass so it can compete again
            w_all = _class_log_weights(model) + log_density_stack(
                dataset.points, model.means, model.chols, model.log_dets
            )
            posteriors = np.exp(w_all - log_sum_exp(w_all, axis=1)[:, None])
            claimed = posteriors.max(axis=1)
            pooled = _pooled_covariance(dataset, config.ridge_floor)
            order = np.argsort(claimed)
            for rank, k in enumerate(empty):
                target = int(order[rank % order.size])
                means[k] = dataset.points[target]
                covs[k] = pooled
                counts[k] = max(counts[k], 1.0)
                warnings.append(
                    f"iteration {iteration}: class {k} lost all responsibility "
                    f"mass; reseeded at point {target}"
                )

        alpha = _safeguarded_mixing(
            counts, relations.n_cannot, model.alpha,
            config.mixing_iters * 10, warnings, iteration,
        )
        model = FlatModel(alpha=alpha, means=means, covs=covs)

        ll = log_likelihood(
            model, dataset, relations,
            count_linked_as_unsupervised=config.count_linked_as_unsupervised,
        )
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


def predict_flat(model: FlatModel, x) -> np.ndarray:
    """Soft class label of a (possibly unseen) point: Bayes posterior."""
    return resp_unsupervised(model, x)


def predict_flat_batch(model: FlatModel, points) -> np.ndarray:
    """Row-wise :func:`predict_flat` → (N, M) posterior table."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"points have shape {points.shape}, expected (N, {model.dim})"
        )
    if not np.all(np.isfinite(points)):
        raise NotFiniteError("points contain non-finite entries")
    w = _class_log_weights(model) + log_density_stack(
        points, model.means, model.chols, model.log_dets
    )
    return np.exp(w - log_sum_exp(w, axis=1)[:, None])
