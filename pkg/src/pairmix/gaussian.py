"""Stable multivariate-Gaussian log-densities and log-space reductions.

Everything here works in log space; densities are exponentiated only after
normalization by the callers.  Covariances are handled through Cholesky
factors and triangular solves — the inverse is never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    InvariantViolationError,
    NotFiniteError,
)

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class CholeskyGaussian:
    """A Gaussian stored as mean + lower Cholesky factor of its covariance.

    ``log_det`` is ``log|Σ| = 2 Σ_k log L_kk``, fixed at construction.
    """

    mean: np.ndarray
    chol: np.ndarray
    log_det: float = field(init=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        chol = np.asarray(self.chol, dtype=float)
        if mean.ndim != 1:
            raise InvariantViolationError("mean must be a 1-D vector")
        d = mean.size
        if chol.shape != (d, d):
            raise DimensionMismatchError(
                f"chol has shape {chol.shape}, expected ({d}, {d})"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(chol))):
            raise NotFiniteError("CholeskyGaussian parameters are non-finite")
        if np.any(np.triu(chol, k=1) != 0.0):
            raise InvariantViolationError("chol must be lower-triangular")
        diag = np.diag(chol)
        if np.any(diag <= 0.0):
            raise InvariantViolationError("chol must have positive diagonal")
        mean = mean.copy()
        chol = chol.copy()
        mean.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "log_det", 2.0 * float(np.log(diag).sum()))

    @classmethod
    def from_covariance(cls, mean, cov) -> "CholeskyGaussian":
        """Factor ``cov`` once; raises if it is not positive definite."""
        cov = np.asarray(cov, dtype=float)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvariantViolationError(
                f"covariance is not positive definite: {exc}"
            ) from exc
        return cls(mean=mean, chol=chol)

    @property
    def dim(self) -> int:
        return self.mean.size


def log_density(g: CholeskyGaussian, x) -> float:
    """Gaussian log-density via triangular solve.

    Returns ``-d/2 log(2π) - 1/2 log|Σ| - 1/2 (x-μ)ᵀ Σ⁻¹ (x-μ)`` where the
    quadratic form is ``‖L⁻¹(x-μ)‖²`` for the stored factor ``L``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (g.dim,):
        raise DimensionMismatchError(f"x has shape {x.shape}, expected ({g.dim},)")
    if not np.all(np.isfinite(x)):
        raise NotFiniteError("x contains non-finite entries")
    z = solve_triangular(g.chol, x - g.mean, lower=True, check_finite=False)
    quad = float(z @ z)
    return -0.5 * (g.dim * LOG_2PI + g.log_det + quad)


def log_density_batch(g: CholeskyGaussian, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`log_density` over the rows of ``points`` (N, d)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != g.dim:
        raise DimensionMismatchError(
            f"points have shape {points.shape}, expected (N, {g.dim})"
        )
    z = solve_triangular(g.chol, (points - g.mean).T, lower=True, check_finite=False)
    quad = np.einsum("dn,dn->n", z, z)
    return -0.5 * (g.dim * LOG_2PI + g.log_det + quad)


def log_density_stack(
    points: np.ndarray,
    means: np.ndarray,
    chols: np.ndarray,
    log_dets: np.ndarray,
) -> np.ndarray:
    """Log-densities of N points under a stack of C Gaussians → (N, C).

    ``means`` is (C, d), ``chols`` (C, d, d) lower factors, ``log_dets`` (C,).
    """
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    c = means.shape[0]
    out = np.empty((n, c))
    for m in range(c):
        z = solve_triangular(
            chols[m], (points - means[m]).T, lower=True, check_finite=False
        )
        out[:, m] = -0.5 * (d * LOG_2PI + log_dets[m] + np.einsum("dn,dn->n", z, z))
    return out


def log_sum_exp(v, axis=None):
    """``log Σ exp(v)`` with shift-by-max; ``-inf`` entries are absorbed.

    Raises :class:`EmptyInputError` if the reduction has no elements.
    A summand of ``+inf`` or NaN raises :class:`NotFiniteError`.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0 or (axis is not None and v.shape[axis] == 0):
        raise EmptyInputError("log_sum_exp over an empty set")
    if np.any(np.isnan(v)) or np.any(v == np.inf):
        raise NotFiniteError("log_sum_exp input contains NaN or +inf")
    hi = np.max(v, axis=axis, keepdims=True)
    # an all -inf slice stays -inf; the shifted exp would produce nan there
    safe_hi = np.where(np.isfinite(hi), hi, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(v - safe_hi), axis=axis, keepdims=True)) + safe_hi
    out = np.where(np.isfinite(hi), s, -np.inf)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def scaled_ridge(s: np.ndarray, rel_floor: float = DEFAULT_RIDGE) -> float:
    """Scale-aware ridge: ``rel_floor · trace(S)/d``, or ``rel_floor`` itself
    when the trace is not positive (e.g. a zero scatter matrix)."""
    s = np.asarray(s, dtype=float)
    tr = float(np.trace(s))
    d = s.shape[0]
    if tr > 0.0:
        return rel_floor * tr / d
    return rel_floor


def regularize_covariance(s, floor: float | None = None) -> np.ndarray:
    """Symmetrize ``S`` and add the smallest ridge that makes it SPD.

    Tries ``ε ∈ {0, floor, 10·floor, 100·floor, ...}`` until a Cholesky
    factorization succeeds *at the working scale* — every pivot must clear
    ``floor/2``, so a rank-deficient matrix that sneaks through a raw
    factorization on rounding noise is still repaired (a mixture component
    collapsed onto too few points would otherwise alternate between spiked
    and ridged states from one M-step to the next).  Returns
    ``(S + Sᵀ)/2 + εI``.  When ``floor`` is omitted it defaults to the
    scale-aware value ``1e-6 · trace(S)/d`` (plain ``1e-6`` for a traceless
    matrix).
    """
    cov, _ = regularize_covariance_eps(s, floor)
    return cov


def regularize_covariance_eps(
    s, floor: float | None = None
) -> tuple[np.ndarray, float]:
    """:func:`regularize_covariance` plus the ridge ε it applied (0 if none)."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NotFiniteError("covariance contains non-finite entries")
    if floor is None:
        floor = scaled_ridge(s)
    floor = float(floor)
    if floor <= 0.0:
        raise InvariantViolationError(f"floor must be positive, got {floor!r}")
    sym = 0.5 * (s + s.T)
    eye = np.eye(s.shape[0])
    pivot_floor = 0.5 * floor
    eps = 0.0
    for _ in range(64):
        candidate = sym + eps * eye
        try:
            chol = np.linalg.cholesky(candidate)
            if np.all(np.diag(chol) ** 2 >= pivot_floor):
                return candidate, eps
        except np.linalg.LinAlgError:
            pass
        eps = floor if eps == 0.0 else eps * 10.0
    raise InvariantViolationError(
        "could not regularize covariance: ridge ladder exhausted"
    )
