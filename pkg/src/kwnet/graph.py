"""Metric graphs, uniform grids, grid functions, quadrature and norms.

A metric graph is a finite connected set of vertices joined by edges, each edge
identified with an interval [0, l_j].  Functions on the graph are continuous:
they are given per edge and share one value per vertex.  The discretization
uses a uniform grid on every edge with one global degree of freedom per vertex
and n_j - 1 interior nodes per edge, so vertex continuity holds by
construction.

Also provided here are the two functional inequalities used throughout the
tests: the network Poincare inequality for mean-zero functions and the
Trudinger-Moser bound on integral exp(beta f^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ContinuityMismatch,
    DanglingEndpoint,
    DisconnectedGraph,
    NonpositiveLength,
    NotMeanZero,
    ResolutionTooCoarse,
    SelfLoop,
    SeminormExceedsDelta,
)

# Relative tolerance for vertex agreement of sampled edge profiles.
CONTINUITY_RTOL = 1e-10
# Tolerance scale for "mean zero" preconditions.
MEAN_RTOL = 1e-9


@dataclass(frozen=True)
class Edge:
    """One edge of a metric graph.

    The coordinate s runs from 0 at ``tail`` to ``length`` at ``head``.
    """

    id: str
    tail: str
    head: str
    length: float


@dataclass(frozen=True)
class MetricGraph:
    """A finite connected metric graph.

    Attributes
    ----------
    vertex_ids : tuple
        Vertex identifiers, in construction order.
    edges : tuple of Edge
        Edges with positive lengths; parallel edges allowed, self-loops not.
    incidence : mapping vertex id -> frozenset of incident edge ids
    total_length : float
        Sum of all edge lengths (the measure of the whole graph).
    """

    vertex_ids: tuple
    edges: tuple
    incidence: dict = field(repr=False)
    total_length: float = 0.0

    def edge(self, edge_id) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(edge_id)

    def degree(self, vertex_id) -> int:
        return len(self.incidence[vertex_id])


def build_graph(vertices: Sequence, edges: Sequence) -> MetricGraph:
    """Validate and build a MetricGraph.

    Parameters
    ----------
    vertices : sequence of vertex identifiers
    edges : sequence of (edge_id, tail, head, length) tuples or Edge objects

    Raises
    ------
    NonpositiveLength, SelfLoop, DanglingEndpoint, DisconnectedGraph
    """
    if not vertices or not edges:
        raise ValueError("a metric graph needs at least one vertex and one edge")
    vertex_ids = tuple(vertices)
    if len(set(vertex_ids)) != len(vertex_ids):
        raise ValueError("duplicate vertex ids")

    built = []
    for spec in edges:
        e = spec if isinstance(spec, Edge) else Edge(*spec)
        e = Edge(e.id, e.tail, e.head, float(e.length))
        if not math.isfinite(e.length) or e.length <= 0.0:
            raise NonpositiveLength(f"edge {e.id!r} has length {e.length}")
        if e.tail == e.head:
            raise SelfLoop(f"edge {e.id!r} joins {e.tail!r} to itself")
        for v in (e.tail, e.head):
            if v not in set(vertex_ids):
                raise DanglingEndpoint(f"edge {e.id!r} references unknown vertex {v!r}")
        built.append(e)
    if len({e.id for e in built}) != len(built):
        raise ValueError("duplicate edge ids")

    incidence = {v: set() for v in vertex_ids}
    for e in built:
        incidence[e.tail].add(e.id)
        incidence[e.head].add(e.id)

    # connectivity by breadth-first search over vertices
    seen = {vertex_ids[0]}
    frontier = [vertex_ids[0]]
    adj = {v: set() for v in vertex_ids}
    for e in built:
        adj[e.tail].add(e.head)
        adj[e.head].add(e.tail)
    while frontier:
        v = frontier.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                frontier.append(u)
    if len(seen) != len(vertex_ids):
        missing = [v for v in vertex_ids if v not in seen]
        raise DisconnectedGraph(f"vertices unreachable from {vertex_ids[0]!r}: {missing}")

    return MetricGraph(
        vertex_ids=vertex_ids,
        edges=tuple(built),
        incidence={v: frozenset(s) for v, s in incidence.items()},
        total_length=float(sum(e.length for e in built)),
    )


@dataclass(frozen=True)
class Grid:
    """Uniform per-edge grid over a MetricGraph.

    Attributes
    ----------
    graph : MetricGraph
    cells_per_edge : dict edge id -> n_j (>= 2)
    ndof : int
        Total degrees of freedom: |V| + sum_j (n_j - 1).
    edge_dofs : dict edge id -> integer array of the n_j + 1 node DOF indices,
        ordered tail -> head; first/last entries are the shared vertex DOFs.
    spacing : dict edge id -> h_j = l_j / n_j
    weights : ndarray
        Trapezoid weight of every DOF (also the lumped mass diagonal).
    """

    graph: MetricGraph
    cells_per_edge: dict
    ndof: int
    edge_dofs: dict = field(repr=False)
    spacing: dict = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def total_length(self) -> float:
        return self.graph.total_length

    def vertex_dof(self, vertex_id) -> int:
        return self.graph.vertex_ids.index(vertex_id)

    def edge_coords(self, edge_id) -> np.ndarray:
        """Arclength coordinates (from the tail) of the edge's nodes."""
        n = self.cells_per_edge[edge_id]
        return np.linspace(0.0, self.graph.edge(edge_id).length, n + 1)


def grids_compatible(a: Grid, b: Grid) -> bool:
    """Structural equality: same graph shape and same cell counts."""
    if a is b:
        return True
    ga, gb = a.graph, b.graph
    return (
        ga.vertex_ids == gb.vertex_ids
        and ga.edges == gb.edges
        and a.cells_per_edge == b.cells_per_edge
    )


def build_grid(graph: MetricGraph, resolution) -> Grid:
    """Build a grid with n_j >= 2 cells on every edge.

    ``resolution`` may be an int (cells on every edge), a float (target
    spacing; n_j = ceil(l_j / resolution), floored at 2), or a mapping
    edge id -> cell count.
    """
    cells = {}
    for e in graph.edges:
        if isinstance(resolution, Mapping):
            n = int(resolution[e.id])
        elif isinstance(resolution, int) and not isinstance(resolution, bool):
            n = resolution
        else:
            target = float(resolution)
            if target <= 0:
                raise ResolutionTooCoarse("target spacing must be positive")
            n = max(2, math.ceil(e.length / target))
        if n < 2:
            raise ResolutionTooCoarse(f"edge {e.id!r}: {n} cells requested, need >= 2")
        cells[e.id] = n

    nv = len(graph.vertex_ids)
    vdof = {v: i for i, v in enumerate(graph.vertex_ids)}
    edge_dofs = {}
    next_dof = nv
    for e in graph.edges:
        n = cells[e.id]
        interior = np.arange(next_dof, next_dof + n - 1)
        next_dof += n - 1
        edge_dofs[e.id] = np.concatenate(([vdof[e.tail]], interior, [vdof[e.head]]))

    ndof = next_dof
    spacing = {e.id: e.length / cells[e.id] for e in graph.edges}
    weights = np.zeros(ndof)
    for e in graph.edges:
        h = spacing[e.id]
        dofs = edge_dofs[e.id]
        weights[dofs] += h
        weights[dofs[0]] -= h / 2.0
        weights[dofs[-1]] -= h / 2.0
    weights.setflags(write=False)
    for d in edge_dofs.values():
        d.setflags(write=False)

    return Grid(
        graph=graph,
        cells_per_edge=cells,
        ndof=ndof,
        edge_dofs=edge_dofs,
        spacing=spacing,
        weights=weights,
    )


@dataclass(frozen=True)
class GridFunction:
    """A continuous piecewise-linear function on the graph: one value per DOF.

    Vertex continuity is automatic because incident edges share the vertex DOF.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.ndof,):
            raise ValueError(f"expected {self.grid.ndof} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def edge_values(self, edge_id) -> np.ndarray:
        """Trace on one edge, ordered tail -> head."""
        return self.values[self.grid.edge_dofs[edge_id]]

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)


def constant(grid: Grid, value: float) -> GridFunction:
    return GridFunction(grid, np.full(grid.ndof, float(value)))


def sample_function(grid: Grid, edge_profiles) -> GridFunction:
    """Sample per-edge profiles into a GridFunction.

    ``edge_profiles`` is a mapping edge id -> callable s -> value (s measured
    from the tail) or an array of n_j + 1 node samples; a bare callable is
    applied to every edge.  Values of different edges at a shared vertex must
    agree to relative tolerance 1e-10; the stored vertex value is the one from
    the lowest-indexed incident edge.

    Raises ContinuityMismatch when profiles disagree at a shared vertex.
    """
    if callable(edge_profiles):
        edge_profiles = {e.id: edge_profiles for e in grid.graph.edges}

    per_edge = {}
    for e in grid.graph.edges:
        if e.id not in edge_profiles:
            raise ValueError(f"no profile for edge {e.id!r}")
        prof = edge_profiles[e.id]
        n = grid.cells_per_edge[e.id]
        if callable(prof):
            s = grid.edge_coords(e.id)
            vals = np.asarray([float(prof(si)) for si in s])
        else:
            vals = np.asarray(prof, dtype=float)
            if vals.shape != (n + 1,):
                raise ValueError(
                    f"edge {e.id!r}: expected {n + 1} samples, got shape {vals.shape}"
                )
        per_edge[e.id] = vals

    values = np.zeros(grid.ndof)
    filled = np.zeros(grid.ndof, dtype=bool)
    # edges in construction order so the lowest-indexed edge sets shared values
    for e in grid.graph.edges:
        vals = per_edge[e.id]
        dofs = grid.edge_dofs[e.id]
        for node, dof in ((0, dofs[0]), (len(vals) - 1, dofs[-1])):
            if filled[dof]:
                scale = max(1.0, abs(values[dof]), abs(vals[node]))
                if abs(values[dof] - vals[node]) > CONTINUITY_RTOL * scale:
                    raise ContinuityMismatch(
                        f"edge {e.id!r} gives {vals[node]!r} at a vertex already "
                        f"valued {values[dof]!r}"
                    )
            else:
                values[dof] = vals[node]
                filled[dof] = True
        values[dofs[1:-1]] = vals[1:-1]
    return GridFunction(grid, values)


def integrate(f: GridFunction) -> float:
    """Edge-wise trapezoid quadrature; exact for piecewise-linear functions."""
    return float(f.grid.weights @ f.values)


@dataclass(frozen=True)
class Norms:
    l2: float
    h1_seminorm: float
    sup: float
    mean: float


def h1_seminorm(f: GridFunction) -> float:
    """sqrt of the Dirichlet energy sum_j sum_cells (df/h_j)^2 h_j (exact)."""
    acc = 0.0
    for e in f.grid.graph.edges:
        h = f.grid.spacing[e.id]
        d = np.diff(f.edge_values(e.id))
        acc += float(d @ d) / h
    return math.sqrt(acc)


def norms(f: GridFunction) -> Norms:
    """L2 norm (trapezoid), H1 seminorm, sup norm and mean of f."""
    total = f.grid.total_length
    l2 = math.sqrt(max(0.0, float(f.grid.weights @ (f.values * f.values))))
    return Norms(
        l2=l2,
        h1_seminorm=h1_seminorm(f),
        sup=float(np.max(np.abs(f.values))),
        mean=integrate(f) / total,
    )


def exp_weighted_energy(u: GridFunction) -> float:
    """Dirichlet energy of u weighted by e^(-u) at cell midpoints.

    Computes sum over cells of (du)^2 / h * exp(-(u_left + u_right) / 2).
    Testing the c = 0 equation against e^(-u) shows this equals -int h at a
    solution, which is the identity the verification layer checks.
    """
    acc = 0.0
    for e in u.grid.graph.edges:
        h = u.grid.spacing[e.id]
        vals = u.edge_values(e.id)
        d = np.diff(vals)
        mid = 0.5 * (vals[:-1] + vals[1:])
        acc += float((d * d / h) @ np.exp(-mid))
    return acc


def _require_mean_zero(f: GridFunction) -> None:
    m = integrate(f) / f.grid.total_length
    if abs(m) > MEAN_RTOL * (1.0 + float(np.max(np.abs(f.values)))):
        raise NotMeanZero(f"mean(f) = {m!r}; pre-center the input")


@dataclass(frozen=True)
class PoincareReport:
    holds_pointwise: bool
    holds_l2: bool
    lhs_pointwise: float  # sup |f|
    rhs_pointwise: float  # sqrt(|G|) * ||df||_2
    lhs_l2: float  # int f^2
    rhs_l2: float  # |G|^2 * int |df|^2


def check_poincare(f: GridFunction) -> PoincareReport:
    """Evaluate both network Poincare inequalities for a mean-zero f.

    (i)  sup|f| <= sqrt(|G|) ||df||_L2
    (ii) int f^2 <= |G|^2 int |df|^2
    """
    _require_mean_zero(f)
    total = f.grid.total_length
    semi = h1_seminorm(f)
    sup = float(np.max(np.abs(f.values)))
    l2sq = float(f.grid.weights @ (f.values * f.values))
    rhs_pw = math.sqrt(total) * semi
    rhs_l2 = total * total * semi * semi
    return PoincareReport(
        holds_pointwise=sup <= rhs_pw * (1.0 + 1e-13) + 1e-300,
        holds_l2=l2sq <= rhs_l2 * (1.0 + 1e-13) + 1e-300,
        lhs_pointwise=sup,
        rhs_pointwise=rhs_pw,
        lhs_l2=l2sq,
        rhs_l2=rhs_l2,
    )


@dataclass(frozen=True)
class MoserReport:
    integral: float  # int exp(beta f^2)
    bound: float
    holds: bool


def check_moser(f: GridFunction, beta: float, delta: float) -> MoserReport:
    """Evaluate the Trudinger-Moser bound for mean-zero f with energy <= delta.

    For beta > 0 the bound is exp(beta |G| delta) |G|; for beta <= 0 the
    integrand is <= 1 pointwise and the bound reduces to |G|.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    _require_mean_zero(f)
    energy = h1_seminorm(f) ** 2
    if energy > delta * (1.0 + 1e-12):
        raise SeminormExceedsDelta(f"int |df|^2 = {energy!r} > delta = {delta!r}")
    total = f.grid.total_length
    with np.errstate(over="ignore"):
        integral = float(f.grid.weights @ np.exp(beta * f.values * f.values))
    # exp saturates to inf for large beta*delta; the bound is then vacuous,
    # which is the right answer rather than an overflow crash
    exponent = max(beta, 0.0) * total * delta
    bound = math.exp(exponent) * total if exponent < 700.0 else math.inf
    return MoserReport(
        integral=integral,
        bound=bound,
        holds=integral <= bound * (1.0 + 1e-13),
    )
