"""Constrained optimization of the class mixing weights.

With cannot-links present, the expected complete-data log-likelihood is no
longer linear in ``log α``: every cannot-link pair contributes a
``−log(1 − Σ_m α_m²)`` normalizer.  Collecting the α-dependent terms gives
the concentrated objective

    f(α) = Σ_m c_m · log α_m  −  n_cannot · log(1 − Σ_m α_m²)

over the probability simplex, where ``c_m`` is the total responsibility
mass of class ``m`` (unsupervised points + one shared weight per must-link
pair + both marginals of each cannot-link pair).  Without cannot-links the
maximizer is the classical closed form ``c / Σc``; otherwise we run a
safeguarded projected-Newton method on the simplex:

* Newton step from the equality-constrained KKT system, with a projected-
  gradient fallback whenever the step is not an ascent direction;
* Armijo backtracking so every accepted step increases ``f``;
* a fraction-to-boundary cap plus a hard floor (``ALPHA_FLOOR``) keeping
  all weights strictly positive.

The objective is unbounded exactly when some class's complement mass
``Σ_{m'≠m} c_{m'}`` is smaller than ``n_cannot`` (the supremum is +∞ at the
vertex ``e_m``).  Responsibility tables produced by an E-step always give
``Σ_{m'≠m} c_{m'} ≥ n_cannot``, but the solver stays graceful off that
regime: it rails toward the vertex until the floored point satisfies the
projected optimality test and returns it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateNormalizerError,
    InvariantViolationError,
    NoConvergenceError,
    NotFiniteError,
)

ALPHA_FLOOR = 1e-10
_ACTIVE_THRESH = 10.0 * ALPHA_FLOOR


def _check_counts(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size == 0:
        raise InvariantViolationError("counts must be a non-empty 1-D vector")
    if not np.all(np.isfinite(counts)):
        raise NotFiniteError("counts contain non-finite entries")
    if np.any(counts < 0):
        raise InvariantViolationError("counts must be nonnegative")
    if counts.sum() <= 0:
        raise InvariantViolationError("counts must have positive total mass")
    return counts


def mixing_objective(alpha, counts, n_cannot: int) -> float:
    """Evaluate f(α); defined for any positive vector with ``Σα² < 1``.

    Entries with ``c_m = 0`` contribute nothing even at ``α_m = 0``
    (the ``0·log 0 = 0`` convention).
    """
    alpha = np.asarray(alpha, dtype=float)
    counts = np.asarray(counts, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(counts > 0, counts * np.log(alpha), 0.0)
    value = float(np.sum(logs))
    if n_cannot:
        norm = 1.0 - float(alpha @ alpha)
        if norm <= 0.0:
            return -np.inf if np.any((counts > 0) & (alpha <= 0)) else np.inf
        value -= n_cannot * np.log(norm)
    return value


def mixing_gradient(alpha, counts, n_cannot: int) -> np.ndarray:
    """∂f/∂α_m = c_m/α_m + 2·n_cannot·α_m / (1 − Σα²)."""
    alpha = np.asarray(alpha, dtype=float)
    counts = np.asarray(counts, dtype=float)
    grad = counts / alpha
    if n_cannot:
        norm = 1.0 - float(alpha @ alpha)
        grad = grad + 2.0 * n_cannot * alpha / norm
    return grad


def _hessian(alpha: np.ndarray, counts: np.ndarray, n_cannot: int) -> np.ndarray:
    h = np.diag(-counts / alpha**2)
    if n_cannot:
        norm = 1.0 - float(alpha @ alpha)
        h += (2.0 * n_cannot / norm) * np.eye(alpha.size)
        h += (4.0 * n_cannot / norm**2) * np.outer(alpha, alpha)
    return h


@dataclass(frozen=True)
class MixingInfo:
    """Diagnostics from one :func:`optimize_mixing` run."""

    n_steps: int
    kkt_residual: float
    objective: float
    railed: bool


def _kkt_residual(alpha: np.ndarray, grad: np.ndarray) -> float:
    """Scaled projected-optimality residual on the simplex.

    Coordinates at the floor are allowed gradient below the multiplier
    (they would leave the simplex by shrinking further); free coordinates
    must share a common multiplier ν.
    """
    free = alpha > _ACTIVE_THRESH
    if not np.any(free):
        free = np.ones_like(alpha, dtype=bool)
    g_free = grad[free]
    nu = 0.5 * (g_free.max() + g_free.min())
    resid = float(np.abs(g_free - nu).max())
    pinned = ~free
    if np.any(pinned):
        resid = max(resid, float(np.maximum(grad[pinned] - nu, 0.0).max()))
    return resid / max(1.0, abs(nu))


def optimize_mixing_info(
    counts,
    n_cannot: int,
    alpha_init=None,
    *,
    tol: float = 1e-8,
    max_steps: int = 200,
) -> tuple[np.ndarray, MixingInfo]:
    """Maximize f(α) on the simplex; returns ``(alpha, diagnostics)``.

    ``alpha_init`` defaults to the linear-part closed form ``c / Σc``.
    Classes with ``c_m = 0`` are pinned to weight 0.  Raises
    :class:`DegenerateNormalizerError` when cannot-links are present but
    fewer than two classes carry mass, and :class:`NoConvergenceError` if
    the safeguarded iteration exhausts ``max_steps``.
    """
    counts = _check_counts(counts)
    m = counts.size
    n_cannot = int(n_cannot)
    if n_cannot < 0:
        raise InvariantViolationError("n_cannot must be nonnegative")

    if n_cannot == 0:
        return counts / counts.sum(), MixingInfo(0, 0.0, mixing_objective(counts / counts.sum(), counts, 0), False)

    support = counts > 0
    if support.sum() < 2:
        raise DegenerateNormalizerError(
            "cannot-links require at least two classes with responsibility mass"
        )

    c = counts[support]
    k = c.size
    if alpha_init is None:
        a = c / c.sum()
    else:
        alpha_init = np.asarray(alpha_init, dtype=float)
        if alpha_init.shape != (m,):
            raise InvariantViolationError(
                f"alpha_init has shape {alpha_init.shape}, expected ({m},)"
            )
        if not np.all(np.isfinite(alpha_init)) or np.any(alpha_init < 0):
            raise InvariantViolationError("alpha_init must be finite and nonnegative")
        a = np.maximum(alpha_init[support], 1e-12)
        a = a / a.sum()

    f_cur = mixing_objective(a, c, n_cannot)
    steps = 0
    resid = np.inf
    for steps in range(1, max_steps + 1):
        grad = mixing_gradient(a, c, n_cannot)
        resid = _kkt_residual(a, grad)
        if resid <= tol:
            steps -= 1
            break

        # Newton direction from the equality-constrained KKT system
        h = _hessian(a, c, n_cannot)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = h
        kkt[:k, k] = -1.0
        kkt[k, :k] = 1.0
        rhs = np.concatenate([-grad, [0.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
            delta = sol[:k]
        except np.linalg.LinAlgError:
            delta = None
        if delta is None or not np.all(np.isfinite(delta)) or grad @ delta <= 0.0:
            delta = grad - grad.mean()  # projected gradient, always ascent
            if float(np.abs(delta).max()) == 0.0:
                break

        # keep every weight strictly positive: step at most 99% of the way
        # to the nearest zero, and keep Σα² < 1 automatically on the simplex
        shrink = delta < 0
        t_max = 1.0
        if np.any(shrink):
            t_max = min(1.0, float(np.min(0.99 * a[shrink] / -delta[shrink])))

        slope = float(grad @ delta)
        t = t_max
        accepted = False
        for _ in range(60):
            cand = np.maximum(a + t * delta, ALPHA_FLOOR)
            cand /= cand.sum()
            f_cand = mixing_objective(cand, c, n_cannot)
            if np.isfinite(f_cand) and f_cand >= f_cur + 1e-4 * t * slope:
                a, f_cur = cand, f_cand
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no admissible ascent step: either at the floor against the
            # boundary or at numerical stationarity — the residual test
            # below decides which
            break

    grad = mixing_gradient(a, c, n_cannot)
    resid = _kkt_residual(a, grad)
    railed = bool(np.any(a <= _ACTIVE_THRESH))
    if resid > tol and not railed:
        # allow a near-converged return when progress is machine-limited
        if resid > 1e-6:
            raise NoConvergenceError(
                f"mixing optimization stalled at KKT residual {resid:.3e} "
                f"after {steps} steps"
            )
    alpha = np.zeros(m)
    alpha[support] = a / a.sum()
    return alpha, MixingInfo(steps, resid, f_cur, railed)


def optimize_mixing(counts, n_cannot: int, alpha_init=None, *, tol: float = 1e-8,
                    max_steps: int = 200) -> np.ndarray:
    """Maximizer of the concentrated mixing objective (see module docstring)."""
    alpha, _ = optimize_mixing_info(
        counts, n_cannot, alpha_init, tol=tol, max_steps=max_steps
    )
    return alpha
