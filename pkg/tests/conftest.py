import itertools

import numpy as np
import pytest

from flni import Penalties, build_chain_graph, build_grid_graph, from_edge_list

PENALTY_LEVELS = (0.0, 0.1, 0.5, 2.0)


def random_dag(rng, n, max_edges):
    """Random DAG: edges respect a random topological order."""
    perm = rng.permutation(n)
    cand = [(int(perm[i]), int(perm[j])) for i in range(n) for j in range(i + 1, n)]
    m = min(len(cand), int(rng.integers(1, max_edges + 1)))
    pick = sorted(rng.choice(len(cand), size=m, replace=False))
    return from_edge_list(n, [cand[k] for k in pick])


def random_instances(count=200, seed=20240611):
    """Seeded mix of chains (n<=10), grids (<=3x4) and DAGs (n<=12, m<=20)."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        kind = k % 3
        if kind == 0:
            g = build_chain_graph(int(rng.integers(2, 11)))
        elif kind == 1:
            g = build_grid_graph(int(rng.integers(1, 4)), int(rng.integers(2, 5)))
        else:
            g = random_dag(rng, int(rng.integers(2, 13)), 20)
        p = Penalties(*(float(v) for v in rng.choice(PENALTY_LEVELS, size=3)))
        y = rng.normal(size=g.n_vertices) * float(rng.choice([0.5, 1.0, 3.0]))
        y += np.linspace(0.0, float(rng.uniform(-2, 2)), g.n_vertices)
        out.append((g, p, y))
    return out


@pytest.fixture(scope="session")
def instances():
    return random_instances()


def grid_search_2d(y, p, lo=-2.0, hi=2.0, steps=401, rounds=8):
    """Exhaustive grid minimisation of the 2-point chain objective with zoom."""
    y = np.asarray(y, dtype=float)

    def obj(b1, b2):
        d = b1 - b2
        return (
            0.5 * ((y[0] - b1) ** 2 + (y[1] - b2) ** 2)
            + p.lambda_f * np.abs(d)
            + p.lambda_l * (np.abs(b1) + np.abs(b2))
            + p.lambda_ni * np.maximum(d, 0.0)
        )

    c1 = c2 = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    for _ in range(rounds):
        a = np.linspace(c1 - half, c1 + half, steps)
        b = np.linspace(c2 - half, c2 + half, steps)
        A, B = np.meshgrid(a, b, indexing="ij")
        k = np.unravel_index(np.argmin(obj(A, B)), A.shape)
        c1, c2 = A[k], B[k]
        half *= 8.0 / steps * 2
    return np.array([c1, c2])


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance_report(request):
    lines = request.config._acceptance_lines

    def report(number, ok, detail):
        lines.append((number, f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"))
        print(lines[-1][1])

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(text)


def all_penalty_triples():
    return [Penalties(*t) for t in itertools.product(PENALTY_LEVELS, repeat=3)]
