"""Gaussian process sampling on a grid from named covariance kernels, and the
Monte Carlo experiment driver tying estimation, selection, and the oracle
together.

Replication r of an experiment draws from a generator keyed by the
experiment seed and r, so reports are identical for any chunking or thread
count; aggregation happens serially in a fixed order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, oracle
from ._mc import draw_batch, iter_chunks
from .dictionary import BasisFamily, build_collection, build_design
from .estimator import SampleSet
from .linalg import psd_factor, require_finite
from .selection import TIE_RTOL, tie_break_key

KERNEL_KINDS = ("brownian", "ornstein_uhlenbeck", "finite_rank")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A named covariance kernel.

    * brownian: cov(s, t) = min(s, t)
    * ornstein_uhlenbeck: cov(s, t) = exp(-|s - t| / length_scale)
    * finite_rank: sigma = G Psi G^T for the design G of (family, indices)
      and a user-chosen symmetric PSD Psi
    """

    kind: str
    length_scale: float = 1.0
    family: BasisFamily = None
    indices: tuple = None
    psi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "ornstein_uhlenbeck" and not self.length_scale > 0:
            raise ValueError("length_scale must be > 0")
        if self.kind == "finite_rank":
            if self.family is None or self.indices is None:
                raise ValueError("finite_rank kernel needs family and indices")
            k = len(self.indices)
            psi = np.eye(k) if self.psi is None else np.asarray(self.psi, dtype=float)
            if psi.shape != (k, k):
                raise ValueError(f"psi must be {k} x {k}")
            if np.max(np.abs(psi - psi.T)) > 1e-10 * max(1.0, np.max(np.abs(psi))):
                raise ValueError("psi must be symmetric")
            if np.linalg.eigvalsh(psi).min() < -1e-10 * max(1.0, np.max(np.abs(psi))):
                raise ValueError("psi must be non-negative definite")
            object.__setattr__(self, "psi", psi)
            object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


def kernel_to_sigma(kernel, grid):
    """Evaluate the kernel pointwise on the grid; the result is symmetric PSD."""
    grid = require_finite(np.asarray(grid, dtype=float), "grid")
    if kernel.kind == "brownian":
        sigma = np.minimum(grid[:, None], grid[None, :])
    elif kernel.kind == "ornstein_uhlenbeck":
        sigma = np.exp(-np.abs(grid[:, None] - grid[None, :]) / kernel.length_scale)
    else:
        design = build_design(kernel.family, kernel.indices, grid)
        sigma = design @ kernel.psi @ design.T
    sigma = 0.5 * (sigma + sigma.T)
    eigs = np.linalg.eigvalsh(sigma)
    if eigs.size and eigs.min() < -1e-10 * max(1.0, abs(eigs).max()):
        raise ValueError(f"kernel produced a non-PSD covariance (min eigenvalue {eigs.min():.3e})")
    return sigma


def sample_paths(sigma, n, seed, grid=None):
    """Draw n independent centred Gaussian paths with covariance sigma.

    Uses the symmetric eigenfactorisation; if that reports a non-PSD input,
    one retry happens with diagonal jitter 1e-12 * trace / p, and failure
    after the jitter raises. Deterministic given the seed.
    """
    sigma = require_finite(np.asarray(sigma, dtype=float), "sigma")
    p = sigma.shape[0]
    if grid is None:
        grid = np.arange(p, dtype=float)
    try:
        factor = psd_factor(sigma)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(sigma) / p
        factor = psd_factor(sigma + jitter * np.eye(p))
    z = np.random.default_rng(seed).standard_normal((n, p))
    return SampleSet(grid=np.asarray(grid, dtype=float), data=z @ factor.T)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything one Monte Carlo experiment needs, seed included."""

    kernel: KernelSpec
    family: BasisFamily
    grid: np.ndarray = field(repr=False)
    n: int = 100
    theta: float = 1.0
    scheme: str = "nested"
    d_max: int = None
    k: int = 2
    reps: int = 100
    seed: int = 0
    n_grid: tuple = None
    alpha: float = 0.5
    diagnostics: bool = False
    diagnostics_reps: int = 1000
    threads: int = 1
    keep_replications: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.n_grid is not None:
            ns = tuple(int(v) for v in self.n_grid)
            if any(v < 2 for v in ns):
                raise ValueError("every n in n_grid must be >= 2")
            object.__setattr__(self, "n_grid", ns)
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))


def uniform_grid(p, t_min=0.0, t_max=1.0):
    """Midpoints of p equal cells of [t_min, t_max]; avoids domain endpoints."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return t_min + (np.arange(p) + 0.5) * (t_max - t_min) / p


def _argmin_tiebreak(criteria):
    """Row-wise argmin over columns already sorted in tie-break order."""
    best = criteria.min(axis=1, keepdims=True)
    tol = TIE_RTOL * np.maximum(1.0, np.abs(best))
    return np.argmax(criteria <= best + tol, axis=1)


def _run_block(truth, models, cfg, n, seed_key):
    """Monte Carlo block for one sample size; models pre-sorted for tie-breaks.

    Returns per-replication arrays (selected index, selected squared error,
    selected dim) for the data-driven and the known-factor penalties.
    """
    reps = cfg.reps
    projs = np.stack([m.projector for m in models])
    dims = np.array([m.dim for m in models])
    true_traces = np.array([oracle.true_fourth_moment_trace(truth, m) for m in models])
    factor = psd_factor(truth.sigma)

    sel_dd = np.empty(reps, dtype=np.int64)
    err_dd = np.empty(reps)
    sel_kn = np.empty(reps, dtype=np.int64)
    err_kn = np.empty(reps)

    def work(start, stop):
        x = draw_batch(factor, n, seed_key, start, stop)
        norm4, proj_norm4, fit_sq = _kernels.model_stats_batch(x, projs)
        err_sq, _ = _kernels.deviation_batch(x, projs, truth.sigma)
        loss = norm4[:, None] - fit_sq
        crit_dd = loss + (1.0 + cfg.theta) * (proj_norm4 - fit_sq) / n
        crit_kn = loss + (1.0 + cfg.theta) * true_traces[None, :] / n
        pick_dd = _argmin_tiebreak(crit_dd)
        pick_kn = _argmin_tiebreak(crit_kn)
        rows = np.arange(stop - start)
        sel_dd[start:stop] = pick_dd
        err_dd[start:stop] = err_sq[rows, pick_dd]
        sel_kn[start:stop] = pick_kn
        err_kn[start:stop] = err_sq[rows, pick_kn]

    chunks = list(iter_chunks(reps, n, truth.p))
    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(lambda c: work(*c), chunks))
    else:
        for start, stop in chunks:
            work(start, stop)
    return sel_dd, err_dd, dims[sel_dd], sel_kn, err_kn, dims[sel_kn]


def _mode_summary(models, sel, err, sel_dims, oracle_risk, reps):
    mean_err = float(err.mean())
    se = float(err.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    freq = {}
    for j, model in enumerate(models):
        count = int(np.sum(sel == j))
        if count:
            freq[";".join(str(i) for i in model.indices)] = count / reps
    return {
        "risk_mean": mean_err,
        "risk_se": se,
        "risk_ratio": mean_err / oracle_risk if oracle_risk > 0 else float("inf"),
        "risk_ratio_se": se / oracle_risk if oracle_risk > 0 else 0.0,
        "mean_selected_dim": float(sel_dims.mean()),
        "selection_freq": freq,
    }


def run_experiment(cfg):
    """Run the full pipeline: sample, fit all models, select, compare to the
    risk-optimal model; repeat over cfg.reps replications (and over
    cfg.n_grid when present).

    Returns a JSON-ready report dict embedding the resolved configuration.
    Identical configs give identical reports.
    """
    sigma = kernel_to_sigma(cfg.kernel, cfg.grid)
    truth = oracle.TruthSpec(sigma=sigma, gaussian=True)
    collection = build_collection(
        cfg.family, cfg.grid, scheme=cfg.scheme, d_max=cfg.d_max, k=cfg.k
    )
    models = sorted(collection.models, key=tie_break_key)

    runs = []
    n_values = cfg.n_grid if cfg.n_grid is not None else (cfg.n,)
    for i_n, n in enumerate(n_values):
        table = oracle.risk_table(truth, collection, n)
        best_model, _ = oracle.oracle_model(truth, collection, n)
        oracle_risk = min(rec.risk for rec in table)

        sel_dd, err_dd, dim_dd, sel_kn, err_kn, dim_kn = _run_block(
            truth, models, cfg, n, (cfg.seed, i_n)
        )

        run = {
            "n": int(n),
            "oracle": {
                "indices": list(best_model.indices),
                "risk": oracle_risk,
            },
            "risk_table": [
                {
                    "indices": list(rec.model.indices),
                    "dim": rec.model.dim,
                    "bias_sq": rec.bias_sq,
                    "variance_term": rec.variance_term,
                    "risk": rec.risk,
                    "variance_factor": rec.variance_factor,
                }
                for rec in table
            ],
            "data_driven": _mode_summary(models, sel_dd, err_dd, dim_dd, oracle_risk, cfg.reps),
            "known_penalty": _mode_summary(models, sel_kn, err_kn, dim_kn, oracle_risk, cfg.reps),
        }
        if cfg.keep_replications:
            run["replications"] = [
                {
                    "rep": rep,
                    "selected": list(models[sel_dd[rep]].indices),
                    "dim": float(dim_dd[rep]),
                    "err_sq": float(err_dd[rep]),
                    "selected_known": list(models[sel_kn[rep]].indices),
                    "dim_known": float(dim_kn[rep]),
                    "err_sq_known": float(err_kn[rep]),
                }
                for rep in range(cfg.reps)
            ]
        if cfg.diagnostics:
            run["diagnostics"] = {
                "variance_factor_mean": oracle.check_variance_factor_mean(
                    truth, collection, n, cfg.diagnostics_reps, seed=(cfg.seed, i_n, 1)
                ),
                "underestimation_prob": oracle.check_underestimation_prob(
                    truth, collection, n, cfg.alpha, cfg.diagnostics_reps, seed=(cfg.seed, i_n, 2)
                ),
            }
        runs.append(run)

    return {
        "kernel_backend": _kernels.backend_name(),
        "config": _describe_config(cfg),
        "collection": [
            {"indices": list(m.indices), "rank": m.rank, "dim": m.dim} for m in models
        ],
        "sigma": sigma.tolist(),
        "runs": runs,
    }


def _describe_config(cfg):
    kernel = {"kind": cfg.kernel.kind}
    if cfg.kernel.kind == "ornstein_uhlenbeck":
        kernel["length_scale"] = cfg.kernel.length_scale
    if cfg.kernel.kind == "finite_rank":
        kernel["indices"] = list(cfg.kernel.indices)
        kernel["psi"] = cfg.kernel.psi.tolist()
        kernel["family"] = {
            "kind": cfg.kernel.family.kind,
            "t_min": cfg.kernel.family.t_min,
            "t_max": cfg.kernel.family.t_max,
            "max_index": cfg.kernel.family.max_index,
        }
    out = {
        "kernel": kernel,
        "family": {
            "kind": cfg.family.kind,
            "t_min": cfg.family.t_min,
            "t_max": cfg.family.t_max,
            "max_index": cfg.family.max_index,
        },
        "grid": cfg.grid.tolist(),
        "n": cfg.n,
        "theta": cfg.theta,
        "scheme": cfg.scheme,
        "d_max": cfg.d_max,
        "k": cfg.k,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "n_grid": list(cfg.n_grid) if cfg.n_grid is not None else None,
        "alpha": cfg.alpha,
        "diagnostics": cfg.diagnostics,
        "diagnostics_reps": cfg.diagnostics_reps,
        "threads": cfg.threads,
        "keep_replications": cfg.keep_replications,
    }
    return out
