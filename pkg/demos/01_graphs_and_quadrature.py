"""
Metric graphs, grids, and quadrature
====================================

A metric graph is a set of vertices joined by edges, each edge carrying a
length; functions live on the union of the edge intervals and must agree
wherever edges meet.  This demo builds a 3-star, puts a grid on it, and
exercises integration, norms, and the two functional inequalities.
"""

import numpy as np

from kwnet import (
    build_graph,
    build_grid,
    check_moser,
    check_poincare,
    h1_seminorm,
    integrate,
    norms,
    sample_function,
)

# ---------------------------------------------------------------------------
# a star: center vertex "o" joined to three outer vertices
graph = build_graph(
    ["o", "p", "q", "r"],
    [("e1", "o", "p", 1.0), ("e2", "o", "q", 1.5), ("e3", "o", "r", 0.7)],
)
print("vertices:", graph.vertex_ids)
print("|Gamma| =", sum(e.length for e in graph.edges))

# one shared DOF per vertex plus interior nodes per edge; continuity across
# the center is built into the numbering, not enforced after the fact
grid = build_grid(graph, {"e1": 32, "e2": 48, "e3": 22})
print("degrees of freedom:", grid.ndof)
print("spacings:", {eid: round(sp, 4) for eid, sp in grid.spacing.items()})

# ---------------------------------------------------------------------------
# sampling a function edge by edge; s is arclength from each edge's tail.
# All three profiles take the value 1 at s = 0, which is the shared center.
f = sample_function(grid, {
    "e1": lambda s: np.cos(np.pi * s),
    "e2": lambda s: np.cos(np.pi * s / 1.5),
    "e3": lambda s: np.cos(np.pi * s / 0.7),
})

print("\nintegral of f:", integrate(f))
n = norms(f)
print("sup norm:", n.sup, " L2 norm:", n.l2, " H1 seminorm:", n.h1_seminorm)

# the trapezoid rule integrates piecewise-linear functions exactly, so a
# linear profile on a single edge is a quick sanity check
g = sample_function(grid, {
    "e1": lambda s: s,
    "e2": lambda s: np.zeros_like(s),
    "e3": lambda s: np.zeros_like(s),
})
print("integral of s on e1 (exact 0.5):", integrate(g))

# ---------------------------------------------------------------------------
# Poincare: mean-zero functions are controlled by their Dirichlet energy.
mean = integrate(f) / grid.total_length
f0 = sample_function(grid, {
    eid: (lambda s, e=eid: dict(
        e1=np.cos(np.pi * s), e2=np.cos(np.pi * s / 1.5), e3=np.cos(np.pi * s / 0.7)
    )[e] - mean)
    for eid in ("e1", "e2", "e3")
})
rep = check_poincare(f0)
print("\nPoincare pointwise bound holds:", rep.holds_pointwise)
print("Poincare L2 bound holds:", rep.holds_l2)

# Trudinger-Moser: exp(beta f^2) stays integrable uniformly over the
# energy ball; this is what makes the c > 0 functional coercive
delta = h1_seminorm(f0) ** 2 * 1.5
mos = check_moser(f0, beta=1.0, delta=delta)
print("Moser integral:", mos.integral, "<= bound:", mos.bound, "->", mos.holds)
