"""Slow reference implementations used to check the main solver.

Nothing here touches :mod:`flni.solver`: the reference minimiser works on the
primal problem through a generic interior-point QP, and optimality is
certified from the subgradient (KKT) conditions with a linear program.
Intended for ``n`` up to a few dozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .graph import OrderGraph
from .solver import Penalties

__all__ = [
    "SubgradientCertificate",
    "brute_force_fit",
    "pava_chain",
    "certify_optimality",
    "primal_objective",
]


def primal_objective(y, beta, g: OrderGraph, p: Penalties) -> float:
    """FLNI objective evaluated edge by edge (no shared kernels)."""
    total = 0.5 * sum((a - b) ** 2 for a, b in zip(y, beta))
    for s, t in g.edges:
        d = beta[s] - beta[t]
        total += p.lambda_f * abs(d) + p.lambda_ni * max(d, 0.0)
    total += p.lambda_l * sum(abs(b) for b in beta)
    return float(total)


def _ipm_fit(y: np.ndarray, g: OrderGraph, p: Penalties, precision: float) -> np.ndarray:
    """Epigraph QP solved with cvxopt's interior-point method."""
    from cvxopt import matrix, solvers

    n, m = g.n_vertices, g.n_edges
    Dm = np.zeros((m, n))
    for e, (s, t) in enumerate(g.edges):
        Dm[e, s], Dm[e, t] = 1.0, -1.0

    # Variables: beta, then epigraph blocks for the active penalties.
    blocks = []
    if p.lambda_f > 0 and m:
        blocks.append(("abs_edge", m, p.lambda_f))
    if p.lambda_ni > 0 and m:
        blocks.append(("pos_edge", m, p.lambda_ni))
    if p.lambda_l > 0:
        blocks.append(("abs_vertex", n, p.lambda_l))
    nvar = n + sum(k for _, k, _ in blocks)
    if nvar == n:
        return y.copy()

    P = np.zeros((nvar, nvar))
    P[:n, :n] = np.eye(n)
    q = np.zeros(nvar)
    q[:n] = -y
    rows = []
    off = n
    for kind, k, lam in blocks:
        q[off:off + k] = lam
        A = Dm if kind != "abs_vertex" else np.eye(n)
        eye = np.eye(k)
        r1 = np.zeros((k, nvar))
        r1[:, :n], r1[:, off:off + k] = A, -eye
        rows.append(r1)
        r2 = np.zeros((k, nvar))
        r2[:, off:off + k] = -eye
        if kind == "pos_edge":
            rows.append(r2)
        else:
            r2[:, :n] = -A
            rows.append(r2)
        off += k
    G = np.vstack(rows)
    h = np.zeros(G.shape[0])
    opts = {
        "show_progress": False,
        "abstol": min(1e-12, precision),
        "reltol": min(1e-12, precision),
        "feastol": min(1e-12, precision),
        "maxiters": 200,
    }
    sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h), options=opts)
    return np.array(sol["x"]).ravel()[:n]


def _refine(y: np.ndarray, g: OrderGraph, p: Penalties, beta: np.ndarray, thr: float):
    """Exact minimiser on the piece of the objective selected by ``beta``.

    Vertices joined by nearly-equal edges are merged into groups, nearly
    zero groups are pinned at 0, and each remaining group value solves its
    linear stationarity equation with the signs read off ``beta``.
    """
    n = g.n_vertices
    parent = list(range(n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for s, t in g.edges:
        if abs(beta[s] - beta[t]) <= thr:
            parent[find(s)] = find(t)
    roots = [find(v) for v in range(n)]
    members: dict[int, list[int]] = {}
    for v, r in enumerate(roots):
        members.setdefault(r, []).append(v)
    level = {r: float(np.mean(beta[vs])) for r, vs in members.items()}

    slope_sum = {r: 0.0 for r in members}
    for s, t in g.edges:
        rs, rt = roots[s], roots[t]
        if rs == rt:
            continue
        d = level[rs] - level[rt]
        if d > 0:
            h = p.lambda_f + p.lambda_ni
        else:
            h = -p.lambda_f
        slope_sum[rs] += h
        slope_sum[rt] -= h

    out = np.empty(n)
    for r, vs in members.items():
        if p.lambda_l > 0 and abs(level[r]) <= thr:
            val = 0.0
        else:
            sign = 0.0 if p.lambda_l == 0 else np.sign(level[r])
            val = (sum(y[v] for v in vs) - slope_sum[r] - p.lambda_l * sign * len(vs)) / len(vs)
        out[vs] = val
    return out


def brute_force_fit(y, g: OrderGraph, p: Penalties, precision: float = 1e-10) -> np.ndarray:
    """Reference minimiser of the FLNI objective.

    An interior-point solution of the epigraph QP is refined by solving the
    stationarity equations exactly on the fused/zero structure it exposes,
    for a ladder of structure thresholds; the candidate with the lowest
    objective is returned.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (g.n_vertices,):
        raise ValueError(f"signal length {y.shape} does not match {g.n_vertices} vertices")
    if p.lambda_f == p.lambda_l == p.lambda_ni == 0.0:
        return y.copy()
    start = _ipm_fit(y, g, p, precision)
    best, best_obj = start, primal_objective(y, start, g, p)
    scale = max(1.0, float(np.max(np.abs(start))))
    for thr in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
        cand = _refine(y, g, p, start, thr * scale)
        obj = primal_objective(y, cand, g, p)
        if obj <= best_obj:
            best, best_obj = cand, obj
    return best


def pava_chain(y) -> np.ndarray:
    """Non-decreasing least-squares fit by pool-adjacent-violators."""
    y = np.asarray(y, dtype=float)
    sums: list[float] = []
    counts: list[int] = []
    for v in y.tolist():
        sums.append(v)
        counts.append(1)
        while len(sums) > 1 and sums[-2] * counts[-1] > sums[-1] * counts[-2]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    return np.concatenate([np.full(c, s / c) for s, c in zip(sums, counts)]) if counts else y.copy()


@dataclass(frozen=True)
class SubgradientCertificate:
    """Subgradient witnesses for a candidate fit.

    ``q`` and ``t`` are per-edge witnesses for the positive-part and
    absolute-value edge penalties, ``s`` the per-vertex witness for the
    l1 term.  ``residual`` is the max-norm of the stationarity vector; it is
    ~0 at an optimum and bounded away from 0 otherwise.
    """

    q: np.ndarray
    t: np.ndarray
    s: np.ndarray
    residual: float
    stationarity: np.ndarray


def _split_edge_weight(w: float, lf: float, lni: float) -> tuple[float, float]:
    """Write ``w = lni * q + lf * t`` with ``q`` in [0, 1] and ``t`` in [-1, 1]."""
    if lf == 0 and lni == 0:
        return 0.0, 0.0
    if lni == 0:
        return 0.0, float(np.clip(w / lf, -1.0, 1.0))
    if lf == 0:
        return float(np.clip(w / lni, 0.0, 1.0)), 0.0
    lo_t = max(-1.0, (w - lni) / lf)
    hi_t = min(1.0, w / lf)
    t = 0.5 * (lo_t + hi_t) if lo_t <= hi_t else float(np.clip(w / lf, -1.0, 1.0))
    q = float(np.clip((w - lf * t) / lni, 0.0, 1.0))
    return q, t


def certify_optimality(
    y, g: OrderGraph, p: Penalties, beta, tol: float = 1e-9
) -> SubgradientCertificate:
    """Best subgradient certificate for ``beta``.

    Differences and entries larger than ``tol * max(1, max|beta|)`` fix
    their witnesses by sign; the remaining witnesses are chosen by a linear
    program minimising the max stationarity residual.
    """
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    n, m = g.n_vertices, g.n_edges
    if y.shape != (n,) or beta.shape != (n,):
        raise ValueError("y and beta must both have one entry per vertex")
    lf, ll, lni = p.lambda_f, p.lambda_l, p.lambda_ni
    thr = tol * max(1.0, float(np.max(np.abs(beta))) if n else 1.0)

    # Per-edge combined weight w = lni * q + lf * t in [-lf, lf + lni].
    w_fixed = np.zeros(m)
    free_edges = []
    for e, (a, b) in enumerate(g.edges):
        d = beta[a] - beta[b]
        if d > thr:
            w_fixed[e] = lf + lni
        elif d < -thr:
            w_fixed[e] = -lf
        elif lf + lni > 0:
            free_edges.append(e)
    s_fixed = np.zeros(n)
    free_vertices = []
    for i in range(n):
        if beta[i] > thr:
            s_fixed[i] = 1.0
        elif beta[i] < -thr:
            s_fixed[i] = -1.0
        elif ll > 0:
            free_vertices.append(i)

    def stationarity(w, s):
        gvec = -(y - beta) + ll * s
        for e, (a, b) in enumerate(g.edges):
            gvec[a] += w[e]
            gvec[b] -= w[e]
        return gvec

    w, s = w_fixed.copy(), s_fixed.copy()
    nf = len(free_edges) + len(free_vertices)
    if nf:
        base = stationarity(w_fixed, s_fixed)
        A = np.zeros((n, nf))
        for k, e in enumerate(free_edges):
            a, b = g.edges[e]
            A[a, k] += 1.0
            A[b, k] -= 1.0
        for k, i in enumerate(free_vertices, start=len(free_edges)):
            A[i, k] = ll
        # min r  s.t.  |A x + base| <= r
        c = np.zeros(nf + 1)
        c[-1] = 1.0
        ones = np.ones((n, 1))
        A_ub = np.vstack([np.hstack([A, -ones]), np.hstack([-A, -ones])])
        b_ub = np.concatenate([-base, base])
        bounds = [(-lf, lf + lni)] * len(free_edges) + [(-1.0, 1.0)] * len(free_vertices)
        bounds.append((0.0, None))
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.x is not None:
            x = res.x[:-1]
            for k, e in enumerate(free_edges):
                w[e] = float(np.clip(x[k], -lf, lf + lni))
            for k, i in enumerate(free_vertices, start=len(free_edges)):
                s[i] = float(np.clip(x[k], -1.0, 1.0))

    qs, ts = np.zeros(m), np.zeros(m)
    free_set = set(free_edges)
    for e, (a, b) in enumerate(g.edges):
        if e in free_set:
            qs[e], ts[e] = _split_edge_weight(w[e], lf, lni)
        elif beta[a] - beta[b] > thr:
            qs[e], ts[e] = 1.0, 1.0
        elif beta[a] - beta[b] < -thr:
            qs[e], ts[e] = 0.0, -1.0
    gvec = stationarity(lni * qs + lf * ts, s)
    resid = float(np.max(np.abs(gvec))) if n else 0.0
    return SubgradientCertificate(qs, ts, s, resid, gvec)
