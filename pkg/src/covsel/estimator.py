"""Empirical covariance, per-model projection fits, and the Kronecker-free
fourth-moment trace that drives the data-driven penalty.

The process is assumed centred, so the empirical covariance is
S = (1/n) sum_i x_i x_i^T with no mean subtraction. A `center=True` escape
hatch exists but sits outside the model the selection theory assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import DEFAULT_SIZE_GUARD, frob_norm_sq, require_finite


@dataclass(frozen=True, eq=False)
class SampleSet:
    """n replications observed on a fixed, strictly increasing grid of p points."""

    grid: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = require_finite(np.asarray(self.grid, dtype=float), "grid")
        data = require_finite(np.asarray(self.data, dtype=float), "data")
        if grid.ndim != 1:
            raise ValueError("grid must be 1-d")
        if data.ndim != 2:
            raise ValueError("data must be an n x p matrix")
        if data.shape[1] != grid.size:
            raise ValueError(f"data has {data.shape[1]} columns but grid has {grid.size} points")
        if data.shape[0] < 2:
            raise ValueError("need at least n = 2 replications")
        if grid.size < 1:
            raise ValueError("need at least p = 1 grid point")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]


def empirical_cov(samples, center=False):
    """Empirical covariance S = (1/n) sum_i x_i x_i^T (no mean subtraction).

    `center=True` subtracts the sample mean first; that estimator is outside
    the centred-process model and is provided for exploration only.
    """
    x = samples.data
    if center:
        x = x - x.mean(axis=0, keepdims=True)
    s = x.T @ x / samples.n
    return 0.5 * (s + s.T)


@dataclass(frozen=True, eq=False)
class ModelFit:
    """Per-model estimate with its empirical loss and penalty ingredients.

    * sigma_hat = P S P, the projected sample covariance
    * loss = (1/n) sum_i ||x_i x_i^T - sigma_hat||^2
    * fourth_moment_trace = (1/n) sum_i ||P x_i||^4 - ||P S P||^2,
      the projected trace of the empirical fourth-moment covariance
    * variance_factor = fourth_moment_trace / dim
    """

    model: object
    sigma_hat: np.ndarray = field(repr=False)
    loss: float
    fourth_moment_trace: float
    variance_factor: float


def _check_grid(samples, model):
    if samples.grid.shape != model.grid.shape or not np.array_equal(samples.grid, model.grid):
        raise ValueError("model grid does not match sample grid")


def fourth_moment_trace(samples, s, model):
    """Projected trace of the empirical fourth-moment covariance.

    Computes Tr((P kron P) F) for F the empirical covariance of vec(x x^T),
    without forming any p^2 x p^2 matrix, via

        (1/n) sum_i ||P x_i||^4  -  ||P S P||^2.

    Cost O(n p^2); the dense route in :func:`fourth_moment_cov_dense` exists
    only as a small-scale oracle for this identity.
    """
    _check_grid(samples, model)
    proj = model.projector
    xp = samples.data @ proj
    row_sq = np.einsum("ij,ij->i", xp, xp)
    mean4 = float(np.mean(row_sq ** 2))
    shat = proj @ s @ proj
    return mean4 - frob_norm_sq(shat)


def fit_model(samples, s, model):
    """Fit one model: project S, evaluate the loss, and the penalty trace.

    The loss uses the expansion (1/n) sum ||x_i x_i^T||^2 - ||sigma_hat||^2,
    valid because the projector is orthogonal; the direct residual sum is
    kept as a test oracle.
    """
    _check_grid(samples, model)
    proj = model.projector
    shat = proj @ s @ proj
    shat = 0.5 * (shat + shat.T)

    row_sq = np.einsum("ij,ij->i", samples.data, samples.data)
    const = float(np.mean(row_sq ** 2))
    fit_sq = frob_norm_sq(shat)
    loss = const - fit_sq

    xp = samples.data @ proj
    proj_sq = np.einsum("ij,ij->i", xp, xp)
    trace = float(np.mean(proj_sq ** 2)) - fit_sq

    return ModelFit(
        model=model,
        sigma_hat=shat,
        loss=loss,
        fourth_moment_trace=trace,
        variance_factor=trace / model.dim,
    )


def fit_all(samples, s, collection):
    """Fit every model in the collection (independent fits, safe to parallelise)."""
    return [fit_model(samples, s, model) for model in collection]


def fourth_moment_cov_dense(samples, size_guard=DEFAULT_SIZE_GUARD):
    """Dense p^2 x p^2 empirical covariance of vec(x x^T). Test/diagnostic only.

    Returns (1/n) sum_i y_i y_i^T - m m^T with y_i = vec(x_i x_i^T) and m the
    mean of the y_i; symmetric and non-negative definite.
    """
    p = samples.p
    if p ** 4 > size_guard:
        raise ValueError(f"dense fourth-moment covariance needs {p ** 4} entries (guard {size_guard})")
    y = np.stack([np.outer(x, x).ravel(order="F") for x in samples.data])
    mean = y.mean(axis=0)
    phi = y.T @ y / samples.n - np.outer(mean, mean)
    return 0.5 * (phi + phi.T)
