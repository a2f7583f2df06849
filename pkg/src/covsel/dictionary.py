"""Basis-function families, design matrices on the observation grid, and
finite model collections.

Three families ship: "fourier" (constant/cosine/sine ladder), "polynomial"
(Legendre polynomials shifted to the domain), and "histogram" (indicators of
an equal-width partition). They respectively exercise full-rank,
rank-deficient, and exactly-sparse projectors.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

from .linalg import RANK_RTOL, projector_from_design, require_finite

FAMILY_KINDS = ("fourier", "polynomial", "histogram")


class DegenerateCollectionError(ValueError):
    """Raised when a model collection ends up empty after dropping
    rank-zero designs."""


@dataclass(frozen=True)
class BasisFamily:
    """A family of real functions g_0, ..., g_max_index on [t_min, t_max]."""

    kind: str
    t_min: float
    t_max: float
    max_index: int

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {FAMILY_KINDS}")
        if not self.t_min < self.t_max:
            raise ValueError("domain requires t_min < t_max")
        if self.max_index < 0:
            raise ValueError("max_index must be >= 0")


def _check_in_domain(family, t):
    t = require_finite(np.asarray(t, dtype=float), "evaluation point")
    lo, hi = family.t_min, family.t_max
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(t < lo - slack) or np.any(t > hi + slack):
        raise ValueError(f"point(s) outside domain [{lo}, {hi}]")
    return t


def eval_basis(family, index, t):
    """Evaluate basis function `index` of `family` at point(s) `t`.

    Vectorised over `t`; raises for an out-of-range index or points outside
    the domain.
    """
    if index < 0 or index > family.max_index:
        raise ValueError(f"basis index {index} out of range 0..{family.max_index}")
    t = _check_in_domain(family, t)
    u = (t - family.t_min) / (family.t_max - family.t_min)

    if family.kind == "fourier":
        if index == 0:
            return np.ones_like(u)
        freq = (index + 1) // 2
        if index % 2 == 1:
            return np.sqrt(2.0) * np.cos(2.0 * np.pi * freq * u)
        return np.sqrt(2.0) * np.sin(2.0 * np.pi * freq * u)

    if family.kind == "polynomial":
        coeffs = np.zeros(index + 1)
        coeffs[index] = 1.0
        return legendre.legval(2.0 * u - 1.0, coeffs)

    # histogram: indicator of cell `index` among max_index+1 equal cells,
    # right-closed in the last cell so t_max belongs to the partition
    n_cells = family.max_index + 1
    cell = np.minimum(np.floor(u * n_cells).astype(int), n_cells - 1)
    return (cell == index).astype(float)


def build_design(family, indices, grid):
    """Design matrix with entry (j, k) = g_{indices[k]}(grid[j])."""
    indices = tuple(int(i) for i in indices)
    if len(indices) == 0:
        raise ValueError("model index set is empty")
    grid = require_finite(grid, "grid")
    cols = [eval_basis(family, lam, grid) for lam in indices]
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """An index set with its design matrix, projector, rank and dimension.

    `dim` is the squared design rank: the dimension of the space of matrices
    G Psi G^T with Psi symmetric.
    """

    indices: tuple
    design: np.ndarray
    projector: np.ndarray
    rank: int
    dim: float
    grid: np.ndarray

    def __repr__(self):
        return f"ModelSpec(indices={self.indices}, rank={self.rank}, dim={self.dim:g})"


def make_model(family, indices, grid, rtol=RANK_RTOL):
    """Build a ModelSpec; returns None when the design has numerical rank 0."""
    grid = np.asarray(grid, dtype=float)
    design = build_design(family, indices, grid)
    proj, rank = projector_from_design(design, rtol=rtol)
    if rank == 0:
        return None
    return ModelSpec(
        indices=tuple(int(i) for i in indices),
        design=design,
        projector=proj,
        rank=rank,
        dim=float(rank * rank),
        grid=grid,
    )


@dataclass(frozen=True, eq=False)
class ModelCollection:
    models: tuple
    family: BasisFamily
    grid: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)


def build_collection(family, grid, scheme="nested", d_max=None, k=2, max_models=10_000):
    """Build a finite model collection over `family` on `grid`.

    Parameters
    ----------
    scheme : "nested" or "all_subsets"
        nested yields {0}, {0,1}, ..., {0..d_max-1}; all_subsets yields every
        nonempty subset of 0..max_index of size <= k (k small by default so
        the collection stays small).
    d_max : int, nested scheme depth; defaults to max_index + 1.
    k : int, all_subsets size cap.

    Candidate models whose design is numerically rank 0 are dropped with a
    warning; an empty resulting collection is an error.
    """
    grid = require_finite(np.asarray(grid, dtype=float), "grid")
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a nonempty 1-d array")
    _check_in_domain(family, grid)

    if scheme == "nested":
        if d_max is None:
            d_max = family.max_index + 1
        if d_max < 1 or d_max > family.max_index + 1:
            raise ValueError(f"nested scheme needs 1 <= d_max <= {family.max_index + 1}")
        index_sets = [tuple(range(d)) for d in range(1, d_max + 1)]
    elif scheme == "all_subsets":
        if k < 1:
            raise ValueError("all_subsets scheme needs k >= 1")
        pool = range(family.max_index + 1)
        index_sets = [
            combo
            for size in range(1, k + 1)
            for combo in itertools.combinations(pool, size)
        ]
    else:
        raise ValueError(f"unknown collection scheme {scheme!r}")

    if len(index_sets) > max_models:
        raise ValueError(f"collection would contain {len(index_sets)} models (cap {max_models})")

    models = []
    for indices in index_sets:
        model = make_model(family, indices, grid)
        if model is None:
            warnings.warn(f"dropping model {indices}: design has numerical rank 0")
            continue
        models.append(model)
    if not models:
        raise DegenerateCollectionError(
            "model collection is empty after dropping degenerate designs"
        )
    return ModelCollection(models=tuple(models), family=family, grid=grid)
