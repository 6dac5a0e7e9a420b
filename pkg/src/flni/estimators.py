"""The fused lasso nearly-isotonic estimator family on an order graph.

Every estimator is a special case of::

    argmin_beta  0.5 ||y - beta||^2 + lambda_f ||D beta||_1
                 + lambda_l ||beta||_1 + lambda_ni ||(D beta)_+||_1

With ``lambda_l = 0`` the minimiser is read off the box-constrained dual
(:func:`flni.solver.solve_dual`); a positive ``lambda_l`` is handled by
soft-thresholding that fit.

Naming follows the fused/fused-lasso convention: ``fit_fusion`` penalises
only edge differences (elsewhere called the "fused lasso"), while
``fit_fused_lasso`` adds the ``lambda_l`` term (elsewhere the "sparse fused
lasso").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import IncidenceMatrix, OrderGraph
from .model_select import GroupPartition, fused_groups, DEFAULT_GROUP_TOL
from .solver import DualSolution, Penalties, SolverOptions, solve_dual

__all__ = [
    "FitResult",
    "as_signal",
    "positive_part",
    "objective",
    "soft_threshold",
    "shift_for_ni_relation",
    "fit_fni",
    "fit_flni",
    "fit_nearly_isotonic",
    "fit_fusion",
    "fit_fused_lasso",
    "fit_sparse_fused_lasso",
]


@dataclass
class FitResult:
    beta: np.ndarray
    dual: DualSolution
    penalties: Penalties
    objective: float
    groups: GroupPartition
    df: int

    @property
    def converged(self) -> bool:
        return self.dual.converged


def as_signal(y, n: int | None = None) -> np.ndarray:
    """Coerce ``y`` to a finite 1-D float array, optionally of length ``n``."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"signal must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"signal has length {arr.shape[0]}, graph has {n} vertices")
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal contains non-finite values")
    return arr


def positive_part(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def objective(y, beta, g: OrderGraph, p: Penalties) -> float:
    """Penalised least-squares objective of ``beta`` for data ``y``."""
    y = as_signal(y, g.n_vertices)
    beta = as_signal(beta, g.n_vertices)
    z = g.incidence.matvec(beta)
    r = y - beta
    return (
        0.5 * float(r @ r)
        + p.lambda_f * float(np.abs(z).sum())
        + p.lambda_l * float(np.abs(beta).sum())
        + p.lambda_ni * float(positive_part(z).sum())
    )


def soft_threshold(beta, lambda_l: float) -> np.ndarray:
    """Componentwise shrinkage ``sign(b) * max(|b| - lambda_l, 0)``.

    Entries with ``|b| == lambda_l`` map to exactly 0.
    """
    if not lambda_l >= 0:
        raise ValueError(f"lambda_l must be >= 0, got {lambda_l!r}")
    beta = np.asarray(beta, dtype=float)
    return np.sign(beta) * np.maximum(np.abs(beta) - lambda_l, 0.0)


def shift_for_ni_relation(y, D: IncidenceMatrix, lambda_ni: float) -> np.ndarray:
    """Return ``y - (lambda_ni / 2) * D.T @ 1``.

    This shifted signal turns the nearly-isotonic penalty into a pure
    fusion penalty of weight ``lambda_ni / 2``.
    """
    y = as_signal(y, D.n_cols)
    return y - 0.5 * lambda_ni * D.rmatvec(np.ones(D.n_rows))


def _result(y, g, beta, dual, p, tol) -> FitResult:
    groups = fused_groups(beta, g, tol)
    df = groups.n_groups if p.lambda_l == 0.0 else groups.n_nonzero
    return FitResult(beta, dual, p, objective(y, beta, g, p), groups, df)


def fit_fni(
    y,
    g: OrderGraph,
    lambda_f: float,
    lambda_ni: float,
    opts: SolverOptions | None = None,
    *,
    group_tol: float = DEFAULT_GROUP_TOL,
    nu0=None,
) -> FitResult:
    """Fused nearly-isotonic fit (``lambda_l = 0``).

    Non-convergence is not an error: inspect ``result.converged`` and
    ``result.dual.gap``.
    """
    p = Penalties(lambda_f, 0.0, lambda_ni)
    y = as_signal(y, g.n_vertices)
    D = g.incidence
    dual = solve_dual(y, D, p.lambda_f, p.lambda_ni, opts, nu0=nu0)
    beta = y - D.rmatvec(dual.nu)
    return _result(y, g, beta, dual, p, group_tol)


def fit_flni(
    y,
    g: OrderGraph,
    p: Penalties,
    opts: SolverOptions | None = None,
    *,
    group_tol: float = DEFAULT_GROUP_TOL,
    nu0=None,
) -> FitResult:
    """Fused lasso nearly-isotonic fit: soft-threshold the FNI fit by ``lambda_l``."""
    y = as_signal(y, g.n_vertices)
    fni = fit_fni(y, g, p.lambda_f, p.lambda_ni, opts, group_tol=group_tol, nu0=nu0)
    if p.lambda_l == 0.0:
        return fni
    beta = soft_threshold(fni.beta, p.lambda_l)
    return _result(y, g, beta, fni.dual, p, group_tol)


def fit_nearly_isotonic(y, g: OrderGraph, lambda_ni: float, opts=None, **kw) -> FitResult:
    return fit_fni(y, g, 0.0, lambda_ni, opts, **kw)


def fit_fusion(y, g: OrderGraph, lambda_f: float, opts=None, **kw) -> FitResult:
    return fit_fni(y, g, lambda_f, 0.0, opts, **kw)


def fit_fused_lasso(
    y, g: OrderGraph, lambda_f: float, lambda_l: float, opts=None, **kw
) -> FitResult:
    return fit_flni(y, g, Penalties(lambda_f, lambda_l, 0.0), opts, **kw)


# Alias for readers used to the "sparse fused lasso" name.
fit_sparse_fused_lasso = fit_fused_lasso
