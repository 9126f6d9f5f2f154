"""
The c > 0 case: coercive minimization
=====================================

For c > 0 the only requirement on h is max h > 0.  The Trudinger-Moser
inequality makes the functional
    J(u) = 1/2 int |du|^2 + c int u
coercive on the constraint set { int h e^u = c |Gamma| }, so a minimizer
exists for every such h -- no threshold, no continuation.
"""

import math

import numpy as np

from kwnet import (
    build_graph,
    build_grid,
    constant,
    identity_report,
    sample_function,
    solve,
)

# a theta graph: two vertices, three parallel edges
graph = build_graph(
    ["a", "b"],
    [("e1", "a", "b", 1.0), ("e2", "a", "b", 1.3), ("e3", "a", "b", 0.9)],
)
grid = build_grid(graph, {"e1": 64, "e2": 84, "e3": 58})

# h is negative on most of the graph; one bump of positive values on e1
# is enough.  The bump vanishes at both ends of e1, so all three profiles
# agree (at -1) on the two shared vertices.
h = sample_function(grid, {
    "e1": lambda s: -1.0 + 3.0 * np.sin(np.pi * s) ** 2,
    "e2": lambda s: -1.0 + 0.0 * s,
    "e3": lambda s: -1.0 + 0.0 * s,
})
print("max h =", float(np.max(h.values)), " (positive somewhere: solvable)")

c = 0.75
sol = solve(h, c)
print("method:", sol.report.method)
print("iterations:", sol.report.iterations,
      " residual:", sol.report.final_residual)

ident = identity_report(sol.u, h, c)
print("mass identity: int h e^u =", ident.mass_value,
      " target c|Gamma| =", ident.mass_target)

# constant data gives the closed-form solution u = ln(c / h0) exactly;
# the iteration cannot do better than machine precision and doesn't
h0 = 2.0
sol_const = solve(constant(grid, h0), 1.0)
err = float(np.max(np.abs(sol_const.u.values - math.log(1.0 / h0))))
print("\nconstant case sup error vs ln(c/h0):", err)

# h <= 0 everywhere violates the necessary condition for c > 0
try:
    solve(constant(grid, -0.5), 1.0)
except Exception as exc:
    print("h <= 0 refused:", type(exc).__name__, "-", exc)
