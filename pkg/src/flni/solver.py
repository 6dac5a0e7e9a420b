"""Box-constrained dual of the fused nearly-isotonic problem.

For ``lambda_l = 0`` the fit is ``beta = y - D.T @ nu`` where ``nu`` solves::

    minimize    0.5 * ||y - D.T @ nu||^2
    subject to  -lambda_f <= nu <= lambda_f + lambda_ni

``D D^T`` is singular on graphs with undirected cycles, so ``nu`` is not
unique and convergence is measured by the duality gap only.  For a feasible
``nu`` the gap has the closed form ``sum_e h(z_e) - nu_e z_e`` with
``z = D @ beta`` and ``h(z) = lambda_f |z| + lambda_ni z_+``; every term is
nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import lsqr

from .graph import IncidenceMatrix

__all__ = [
    "Algorithm",
    "Penalties",
    "SolverOptions",
    "DualSolution",
    "solve_dual",
    "recover_primal",
    "duality_gap",
    "fni_primal_objective",
]


class Algorithm(str, Enum):
    APG = "accelerated-projected-gradient"
    CD = "coordinate-descent"


@dataclass(frozen=True)
class Penalties:
    """Penalty weights ``(lambda_f, lambda_l, lambda_ni)``."""

    lambda_f: float = 0.0
    lambda_l: float = 0.0
    lambda_ni: float = 0.0

    def __post_init__(self):
        for name in ("lambda_f", "lambda_l", "lambda_ni"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
                raise TypeError(f"{name} must be a real number, got {v!r}")
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, float(v))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lambda_f, self.lambda_l, self.lambda_ni)


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule and algorithm choice for :func:`solve_dual`.

    ``tol`` is the relative duality gap target: a solve is converged once
    ``gap <= tol * (1 + |P(beta)|)``.  ``polish`` enables the active-set
    refinement that snaps the iterate onto the exact optimum once the fused
    structure has been identified.
    """

    tol: float = 1e-8
    max_iter: int = 50000
    algorithm: Algorithm = Algorithm.APG
    polish: bool = True
    check_every: int = 10
    polish_every: int = 50
    record_trace: bool = False

    def __post_init__(self):
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ValueError(f"tol must be positive, got {self.tol!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if self.check_every < 1 or self.polish_every < 1:
            raise ValueError("check_every and polish_every must be >= 1")
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))


@dataclass
class DualSolution:
    nu: np.ndarray
    iterations: int
    gap: float
    converged: bool
    relative_gap: float = 0.0
    trace: list[float] = field(default_factory=list, repr=False)


def recover_primal(y: np.ndarray, D: IncidenceMatrix, nu) -> np.ndarray:
    """Return ``y - D.T @ nu``; ``nu`` may be an array or a :class:`DualSolution`."""
    if isinstance(nu, DualSolution):
        nu = nu.nu
    y = np.asarray(y, dtype=float)
    if y.shape != (D.n_cols,):
        raise ValueError(f"signal length {y.shape} does not match {D.n_cols} vertices")
    return y - D.rmatvec(nu)


def _edge_penalty(z: np.ndarray, lambda_f: float, lambda_ni: float) -> np.ndarray:
    return lambda_f * np.abs(z) + lambda_ni * np.maximum(z, 0.0)


def fni_primal_objective(
    y: np.ndarray, beta: np.ndarray, D: IncidenceMatrix, lambda_f: float, lambda_ni: float
) -> float:
    """``0.5 ||y - beta||^2 + lambda_f ||D beta||_1 + lambda_ni ||(D beta)_+||_1``."""
    r = y - beta
    return 0.5 * float(r @ r) + float(_edge_penalty(D.matvec(beta), lambda_f, lambda_ni).sum())


def duality_gap(
    y: np.ndarray, D: IncidenceMatrix, nu: np.ndarray, lambda_f: float, lambda_ni: float
) -> tuple[float, float]:
    """Return ``(gap, primal_objective)`` at ``beta = y - D.T @ nu``.

    ``nu`` must lie in the box.  The gap equals ``P(beta) - g(nu)`` with
    ``g(nu) = 0.5 ||y||^2 - 0.5 ||y - D.T nu||^2``.
    """
    beta = y - D.rmatvec(nu)
    z = D.matvec(beta)
    pen = _edge_penalty(z, lambda_f, lambda_ni)
    # Per-edge terms are >= 0 for feasible nu; clamp rounding noise.
    gap = float(np.maximum(pen - nu * z, 0.0).sum())
    r = y - beta
    return gap, 0.5 * float(r @ r) + float(pen.sum())


def _lipschitz_bound(D: IncidenceMatrix) -> float:
    # Gershgorin on D D^T: row e has diagonal 2 and |off-diagonals| summing
    # to deg(s) + deg(t) - 2.
    deg = np.bincount(D.sources, minlength=D.n_cols) + np.bincount(D.targets, minlength=D.n_cols)
    return float(np.max(deg[D.sources] + deg[D.targets]))


class _Polisher:
    """Active-set refinement of a near-optimal dual point.

    Edges whose difference is clearly nonzero are pinned at the bound
    dictated by complementary slackness; on the remaining (fused) edges the
    minimum-norm correction onto the affine set ``D_f^T nu_f = target`` is
    alternated with box clipping.
    """

    dense_limit = 400_000

    def __init__(self, y, D, lo, hi):
        self.y, self.D, self.lo, self.hi = y, D, lo, hi
        self.n = D.n_cols

    def attempt(self, nu: np.ndarray, threshold: float) -> np.ndarray:
        D, y, lo, hi = self.D, self.y, self.lo, self.hi
        beta = y - D.rmatvec(nu)
        z = D.matvec(beta)
        scale = max(1.0, float(np.max(np.abs(beta))) if beta.size else 1.0)
        fused = np.abs(z) <= threshold * scale
        out = nu.copy()
        out[(~fused) & (z > 0)] = hi
        out[(~fused) & (z < 0)] = lo
        idx = np.flatnonzero(fused)
        if idx.size == 0:
            return out
        src, tgt = D.sources[idx], D.targets[idx]
        k = idx.size
        adj = sparse.coo_matrix((np.ones(k), (src, tgt)), shape=(self.n, self.n))
        n_comp, labels = connected_components(adj, directed=False)

        cross = out.copy()
        cross[idx] = 0.0
        rhs = y - D.rmatvec(cross)
        counts = np.bincount(labels, minlength=n_comp)
        means = np.bincount(labels, weights=rhs, minlength=n_comp) / counts
        target = rhs - means[labels]

        rows = np.concatenate([src, tgt])
        cols = np.concatenate([np.arange(k), np.arange(k)])
        vals = np.concatenate([np.ones(k), -np.ones(k)])
        Af = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, k))
        dense = self.n * k <= self.dense_limit
        if dense:
            pinv = np.linalg.pinv(Af.toarray())
        nf = out[idx]
        for _ in range(25):
            resid = target - Af @ nf
            if dense:
                step = pinv @ resid
            else:
                step = lsqr(Af, resid, atol=1e-15, btol=1e-15, iter_lim=10 * k)[0]
            proj = nf + step
            clipped = np.clip(proj, lo, hi)
            moved = float(np.max(np.abs(clipped - proj)))
            nf = clipped
            if moved <= 1e-15 * max(1.0, float(np.max(np.abs(nf)))):
                break
        out[idx] = nf
        return out


def solve_dual(
    y,
    D: IncidenceMatrix,
    lambda_f: float,
    lambda_ni: float,
    opts: SolverOptions | None = None,
    nu0: np.ndarray | None = None,
) -> DualSolution:
    """Minimise ``0.5 ||y - D.T nu||^2`` over ``[-lambda_f, lambda_f + lambda_ni]^m``.

    Parameters
    ----------
    y : array_like, shape (n,)
    D : IncidenceMatrix, shape (m, n)
    lambda_f, lambda_ni : float
        Nonnegative penalties; they define the box.
    opts : SolverOptions, optional
    nu0 : array_like, shape (m,), optional
        Warm start.  It is projected onto the box before use; the default
        start is the box midpoint.

    Returns
    -------
    DualSolution
        If ``max_iter`` is exhausted the iterate with the smallest gap is
        returned with ``converged=False``.
    """
    opts = opts or SolverOptions()
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != D.n_cols:
        raise ValueError(f"signal length {y.shape} does not match {D.n_cols} vertices")
    if not np.all(np.isfinite(y)):
        raise ValueError("signal contains non-finite values")
    for name, v in (("lambda_f", lambda_f), ("lambda_ni", lambda_ni)):
        if not (math.isfinite(v) and v >= 0):
            raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
    lo, hi = -float(lambda_f), float(lambda_f) + float(lambda_ni)
    m = D.n_rows

    if nu0 is None:
        nu = np.full(m, 0.5 * (lo + hi))
    else:
        nu = np.asarray(nu0, dtype=float).copy()
        if nu.shape != (m,):
            raise ValueError(f"warm start has shape {nu.shape}, expected ({m},)")
    nu = np.clip(nu, lo, hi)

    if m == 0 or hi == lo:
        gap, P = duality_gap(y, D, nu, lambda_f, lambda_ni)
        return DualSolution(nu, 0, gap, True, gap / (1.0 + abs(P)))

    def fval(v):
        r = y - D.rmatvec(v)
        return 0.5 * float(r @ r)

    polisher = _Polisher(y, D, lo, hi) if opts.polish else None
    best_nu, best_gap, best_rel = nu.copy(), math.inf, math.inf
    trace: list[float] = []

    def check(v):
        nonlocal best_nu, best_gap, best_rel
        gap, P = duality_gap(y, D, v, lambda_f, lambda_ni)
        rel = gap / (1.0 + abs(P))
        if rel < best_rel:
            best_nu, best_gap, best_rel = v.copy(), gap, rel
        return gap <= opts.tol * (1.0 + abs(P))

    def polish(v, f_v):
        # Accept the refined point only if it lowers the gap without raising
        # the dual objective beyond rounding.
        gap_v, P_v = duality_gap(y, D, v, lambda_f, lambda_ni)
        best = None
        for thr in (1e-3, 1e-5, 1e-7, 1e-9):
            cand = polisher.attempt(v, thr)
            g, P = duality_gap(y, D, cand, lambda_f, lambda_ni)
            f_c = fval(cand)
            if g < gap_v and f_c <= f_v + 1e-13 * (1.0 + abs(f_v)):
                best, gap_v, f_v = cand, g, f_c
                if g <= opts.tol * (1.0 + abs(P)):
                    break
        return best

    def finish(v, it):
        # Converged: one more refinement usually removes the residual gap.
        if polisher is not None and best_gap > 0:
            p = polish(v, fval(v))
            if p is not None:
                check(p)
        return DualSolution(best_nu, it, best_gap, True, best_rel, trace)

    if check(nu):
        return finish(nu, 0)

    if opts.algorithm is Algorithm.APG:
        step = 1.0 / _lipschitz_bound(D)
        x = nu
        f_x = fval(x)
        w, t = x.copy(), 1.0
        for it in range(1, opts.max_iter + 1):
            beta_w = y - D.rmatvec(w)
            x_new = np.clip(w + step * D.matvec(beta_w), lo, hi)
            f_new = fval(x_new)
            if f_new > f_x:
                # Function-value restart: plain projected step from x.
                x_new = np.clip(x + step * D.matvec(y - D.rmatvec(x)), lo, hi)
                f_new = fval(x_new)
                t = 1.0
                w = x_new.copy()
            else:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                w = x_new + ((t - 1.0) / t_new) * (x_new - x)
                t = t_new
            x, f_x = x_new, f_new
            if polisher is not None and it % opts.polish_every == 0:
                p = polish(x, f_x)
                if p is not None:
                    x, f_x = p, fval(p)
                    w, t = x.copy(), 1.0
                    if opts.record_trace:
                        trace.append(f_x)
                    if check(x):
                        return finish(x, it)
                    continue
            if opts.record_trace:
                trace.append(f_x)
            if it % opts.check_every == 0 and check(x):
                return finish(x, it)
    else:
        src, tgt = D.sources.tolist(), D.targets.tolist()
        x = nu
        beta = (y - D.rmatvec(x)).tolist()
        xs = x.tolist()
        for it in range(1, opts.max_iter + 1):
            # One cyclic sweep of exact coordinate minimisation; ||D_e||^2 = 2.
            for e in range(m):
                s_, t_ = src[e], tgt[e]
                old = xs[e]
                new = old + 0.5 * (beta[s_] - beta[t_])
                new = lo if new < lo else hi if new > hi else new
                if new != old:
                    d = new - old
                    xs[e] = new
                    beta[s_] -= d
                    beta[t_] += d
            x = np.array(xs)
            f_x = fval(x)
            if polisher is not None and it % opts.polish_every == 0:
                p = polish(x, f_x)
                if p is not None:
                    x, f_x = p, fval(p)
                    xs = x.tolist()
                    beta = (y - D.rmatvec(x)).tolist()
            if opts.record_trace:
                trace.append(f_x)
            if it % opts.check_every == 0 and check(x):
                return finish(x, it)

    check(x)
    return DualSolution(best_nu, opts.max_iter, best_gap, best_rel <= opts.tol, best_rel, trace)
