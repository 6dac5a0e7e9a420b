"""Fused groups, degrees of freedom and Cp-based penalty selection.

The number of fused groups of an FNI fit, and the number of non-zero fused
groups of an FLNI fit, are unbiased estimates of the degrees of freedom.
Numerical fits are only approximately piecewise constant, so groups are
formed with an explicit equality tolerance relative to
``max(1, max|beta|)``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .graph import OrderGraph
from .solver import Penalties, SolverOptions

if TYPE_CHECKING:
    from .estimators import FitResult

__all__ = [
    "DEFAULT_GROUP_TOL",
    "DegenerateEstimateWarning",
    "GroupPartition",
    "PathEntry",
    "PathResult",
    "fused_groups",
    "df_fni",
    "df_flni",
    "fit_df",
    "cp_statistic",
    "sweep_path",
    "estimate_sigma2_mad",
    "thread_count",
]

DEFAULT_GROUP_TOL = 1e-6

# Normal-consistency constant of the median absolute deviation.
_MAD_CONST = 0.6745


class DegenerateEstimateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[tuple[int, ...], ...]
    is_zero: tuple[bool, ...]
    equality_tolerance: float

    def labels(self, n: int | None = None) -> np.ndarray:
        """Group index of every vertex."""
        n = sum(len(g) for g in self.groups) if n is None else n
        out = np.empty(n, dtype=np.int64)
        for k, grp in enumerate(self.groups):
            out[list(grp)] = k
        return out

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_nonzero(self) -> int:
        return sum(1 for z in self.is_zero if not z)


def fused_groups(beta, g: OrderGraph, tol: float = DEFAULT_GROUP_TOL) -> GroupPartition:
    """Connected components of the edges along which ``beta`` is constant.

    An edge is fused when ``|beta_s - beta_t| <= tol * max(1, max|beta|)``;
    a group is zero when all its members are within the same threshold of 0.
    Groups are ordered by their smallest vertex id.
    """
    beta = np.asarray(beta, dtype=float)
    n = g.n_vertices
    if beta.shape != (n,):
        raise ValueError(f"beta has shape {beta.shape}, graph has {n} vertices")
    if tol < 0:
        raise ValueError(f"tol must be >= 0, got {tol!r}")
    thr = tol * max(1.0, float(np.max(np.abs(beta))) if n else 1.0)
    D = g.incidence
    fused = np.abs(D.matvec(beta)) <= thr
    src, tgt = D.sources[fused], D.targets[fused]
    adj = sparse.coo_matrix((np.ones(src.size), (src, tgt)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)

    order: dict[int, list[int]] = {}
    for v, lab in enumerate(labels.tolist()):
        order.setdefault(lab, []).append(v)
    groups = tuple(tuple(members) for members in order.values())
    small = np.abs(beta) <= thr
    is_zero = tuple(bool(small[list(grp)].all()) for grp in groups)
    return GroupPartition(groups, is_zero, float(tol))


def df_fni(fit: "FitResult") -> int:
    """Number of fused groups of a ``lambda_l = 0`` fit."""
    if fit.penalties.lambda_l > 0:
        raise ValueError("df_fni needs a fit with lambda_l = 0; use df_flni")
    return fit.groups.n_groups


def df_flni(fit: "FitResult") -> int:
    """Number of non-zero fused groups."""
    return fit.groups.n_nonzero


def fit_df(fit: "FitResult") -> int:
    """Group count matching the estimator: all groups when ``lambda_l = 0``,
    non-zero groups otherwise."""
    if fit.penalties.lambda_l == 0.0:
        return fit.groups.n_groups
    return fit.groups.n_nonzero


def cp_statistic(y, fit: "FitResult", sigma2: float) -> float:
    """``RSS - n sigma2 + 2 sigma2 K`` with ``K`` from :func:`fit_df`.

    For ``lambda_l > 0`` this is the non-zero group count; an exactly-zero
    group of a ``lambda_l = 0`` fit still counts as a free parameter.
    """
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2!r}")
    y = np.asarray(y, dtype=float)
    if y.shape != fit.beta.shape:
        raise ValueError(f"y has shape {y.shape}, fit has {fit.beta.shape}")
    r = y - fit.beta
    n = y.shape[0]
    return float(r @ r) - n * sigma2 + 2.0 * sigma2 * fit_df(fit)


@dataclass(frozen=True)
class PathEntry:
    penalties: Penalties
    fit: "FitResult"
    cp: float


@dataclass(frozen=True)
class PathResult:
    entries: tuple[PathEntry, ...]
    sigma2: float
    best_index: int

    @property
    def best(self) -> PathEntry:
        return self.entries[self.best_index]

    @property
    def cp(self) -> np.ndarray:
        return np.array([e.cp for e in self.entries])


def thread_count(default: int = 1) -> int:
    """Worker cap from ``FLNI_THREADS`` (falls back to ``default``)."""
    raw = os.environ.get("FLNI_THREADS")
    if raw is None or not raw.strip():
        return default
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"FLNI_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ValueError(f"FLNI_THREADS must be a positive integer, got {raw!r}")
    return k


def sweep_path(
    y,
    g: OrderGraph,
    grid: Sequence[Penalties],
    sigma2: float,
    opts: SolverOptions | None = None,
    *,
    n_jobs: int | None = None,
    group_tol: float = DEFAULT_GROUP_TOL,
) -> PathResult:
    """Fit every grid point independently and pick the Cp minimiser.

    Grid points are cold-started so results do not depend on ``n_jobs``;
    ties in Cp go to the smallest index.
    """
    from .estimators import as_signal, fit_flni

    grid = list(grid)
    if not grid:
        raise ValueError("penalty grid is empty")
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2!r}")
    y = as_signal(y, g.n_vertices)
    g.incidence  # build the cached structure before threads share it
    jobs = thread_count() if n_jobs is None else n_jobs

    def one(p: Penalties) -> PathEntry:
        fit = fit_flni(y, g, p, opts, group_tol=group_tol)
        return PathEntry(p, fit, cp_statistic(y, fit, sigma2))

    if jobs > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = tuple(pool.map(one, grid))
    else:
        entries = tuple(one(p) for p in grid)
    cps = [e.cp for e in entries]
    best = min(range(len(cps)), key=lambda k: (cps[k], k))
    return PathResult(entries, float(sigma2), best)


def estimate_sigma2_mad(y, g: OrderGraph) -> float:
    """Heuristic noise variance from the MAD of edge differences.

    Returns ``(median|D y| / (sqrt(2) * 0.6745))**2``.  Assumes most edges
    join vertices with equal underlying signal.  Returns 0 with a
    :class:`DegenerateEstimateWarning` when the median difference is 0.
    """
    if g.n_edges == 0:
        raise ValueError("cannot estimate sigma2 on a graph without edges")
    y = np.asarray(y, dtype=float)
    med = float(np.median(np.abs(g.incidence.matvec(y))))
    s2 = (med / (math.sqrt(2.0) * _MAD_CONST)) ** 2
    if s2 == 0.0:
        warnings.warn(
            "median edge difference is zero; sigma2 estimate is degenerate",
            DegenerateEstimateWarning,
            stacklevel=2,
        )
    return s2
