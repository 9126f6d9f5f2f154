"""Discrete operators for the weak form on a metric-graph grid.

P1 finite elements on each edge, accumulated into the shared vertex DOFs, so
the flux-conservation (Kirchhoff) vertex condition is the natural boundary
condition of the discrete weak form and needs no special stencil.  The mass
matrix is lumped (trapezoid weights), which keeps K + M_k an M-matrix and
gives the discrete maximum principle the monotone iteration relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import (
    GridMismatch,
    IncompatibleRHS,
    LinearSolveFailure,
    NonpositiveShift,
)
from .graph import Grid, GridFunction, grids_compatible, integrate

#: linear solves are verified a posteriori against this relative residual
LINEAR_RTOL = 1e-12


@dataclass(frozen=True)
class SparseOperator:
    """A symmetric sparse operator on grid DOF vectors."""

    matrix: sparse.csr_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, vec):
        return self.matrix @ vec

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self) -> bool:
        d = self.matrix - self.matrix.T
        return d.nnz == 0 or float(np.max(np.abs(d.data))) == 0.0

    def to_coordinate_text(self) -> str:
        """Dump as 'row col value' lines (debugging aid)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [
            f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}"
            for i in order
        ]
        return "\n".join(lines) + "\n"


def assemble_stiffness(grid: Grid) -> SparseOperator:
    """P1 stiffness: u^T K u = sum_j sum_cells (du/h_j)^2 h_j.

    Per-edge tridiagonal blocks with entries +-1/h_j; K is symmetric positive
    semidefinite with constants in its kernel and nonpositive off-diagonal.
    """
    rows, cols, vals = [], [], []
    for e in grid.graph.edges:
        dofs = grid.edge_dofs[e.id]
        inv_h = 1.0 / grid.spacing[e.id]
        a, b = dofs[:-1], dofs[1:]
        cell = np.full(len(a), inv_h)
        rows.extend((a, b, a, b))
        cols.extend((a, b, b, a))
        vals.extend((cell, cell, -cell, -cell))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(grid.ndof, grid.ndof))
    mat.sum_duplicates()
    return SparseOperator(mat)


def assemble_mass(grid: Grid) -> SparseOperator:
    """Lumped mass: diagonal of trapezoid weights, so 1^T M f = integrate(f)."""
    return SparseOperator(sparse.diags(grid.weights).tocsr())


def _check_function(grid: Grid, f: GridFunction, name: str) -> None:
    if not grids_compatible(grid, f.grid):
        raise GridMismatch(f"{name} lives on a different grid")


def shifted_solver(grid: Grid, k: GridFunction):
    """Factorize K + M_k (k > 0 pointwise) and return a solve closure.

    The closure maps a DOF vector b to the solution of (K + M_k) u = b.
    Factorizing once is what makes the monotone iteration cheap: the shift k
    is frozen while the right-hand side changes every sweep.
    """
    _check_function(grid, k, "k")
    kmin = float(np.min(k.values))
    if kmin <= 0.0:
        raise NonpositiveShift(f"min k = {kmin}; need k > 0 for an invertible M-matrix")
    K = assemble_stiffness(grid).matrix
    A = (K + sparse.diags(grid.weights * k.values)).tocsc()
    row_norm = float(np.max(np.abs(A).sum(axis=1)))
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # pragma: no cover - splu fails only on bad input
        raise LinearSolveFailure(str(exc)) from exc

    def solve(b: np.ndarray) -> np.ndarray:
        u = lu.solve(b)
        # backward-stable roundoff scales with |A| |u|, not just |b|
        scale = max(float(np.max(np.abs(b))), row_norm * float(np.max(np.abs(u))), 1e-300)
        resid = float(np.max(np.abs(A @ u - b)))
        if not np.all(np.isfinite(u)) or resid > LINEAR_RTOL * scale * 10.0:
            raise LinearSolveFailure(f"shifted solve residual {resid} vs scale {scale}")
        return u

    return solve


def solve_shifted(grid: Grid, k: GridFunction, rhs: GridFunction) -> GridFunction:
    """Solve (K + M_k) u = -M rhs, the weak form of d2u - k u = rhs.

    Requires min k > 0.  Inherits a discrete maximum principle: rhs <= 0
    everywhere implies u >= 0 everywhere.
    """
    _check_function(grid, rhs, "rhs")
    solve = shifted_solver(grid, k)
    u = solve(-(grid.weights * rhs.values))
    return GridFunction(grid, u)


def solve_poisson_meanzero(grid: Grid, rhs: GridFunction) -> GridFunction:
    """Solve K m = -M rhs (weak d2m = rhs) for the unique mean-zero m.

    The right-hand side must be compatible (integrate(rhs) ~ 0).  The mean
    constraint is imposed by bordering K with the weight vector — one extra
    symmetric row/column, no pinned DOF.
    """
    _check_function(grid, rhs, "rhs")
    total = grid.total_length
    ir = integrate(rhs)
    l1 = float(grid.weights @ np.abs(rhs.values))
    # the absolute term keeps roundoff-level data (rhs ~ eps) from tripping a
    # check that exists to catch genuinely incompatible inputs
    if abs(ir) > 1e-8 * l1 + 1e-14 * total:
        raise IncompatibleRHS(f"integrate(rhs) = {ir!r} but a pure-flux problem needs 0")

    K = assemble_stiffness(grid).matrix
    w = grid.weights
    n = grid.ndof
    bordered = sparse.bmat(
        [[K, w.reshape(-1, 1)], [w.reshape(1, -1), None]], format="csc"
    )
    b = np.concatenate([-(w * rhs.values), [0.0]])
    try:
        sol = spla.splu(bordered).solve(b)
    except RuntimeError as exc:  # pragma: no cover
        raise LinearSolveFailure(str(exc)) from exc
    resid = float(np.max(np.abs(bordered @ sol - b)))
    row_norm = float(np.max(np.abs(bordered).sum(axis=1)))
    scale = max(float(np.max(np.abs(b))), row_norm * float(np.max(np.abs(sol))), 1.0)
    if not np.all(np.isfinite(sol)) or resid > LINEAR_RTOL * scale * 100.0:
        raise LinearSolveFailure(f"bordered solve residual {resid} vs scale {scale}")
    m = sol[:n]
    m = m - (w @ m) / total  # strip the roundoff-level mean
    return GridFunction(grid, m)


@dataclass(frozen=True)
class ResidualReport:
    """Weak residual of the full equation at (u, h, c)."""

    weak_residual_norm: float
    residual: np.ndarray

    def __iter__(self):  # allow tuple-style unpacking
        return iter((self.weak_residual_norm, self.residual))


def residual_vector(grid: Grid, u: np.ndarray, h: np.ndarray, c: float,
                    stiffness: sparse.csr_matrix | None = None) -> np.ndarray:
    """r = K u + c M 1 - M (h * exp(u)) on raw DOF vectors."""
    K = assemble_stiffness(grid).matrix if stiffness is None else stiffness
    return K @ u + c * grid.weights - grid.weights * (h * np.exp(u))


def apply_residual(u: GridFunction, h: GridFunction, c: float) -> ResidualReport:
    """Residual r = K u + c M 1 - M (h exp(u)) of the weak equation.

    weak_residual_norm is max |r_i| / weight_i, which scales like the
    pointwise defect d2u - c + h exp(u).
    """
    if not grids_compatible(u.grid, h.grid):
        raise GridMismatch("u and h live on different grids")
    grid = u.grid
    r = residual_vector(grid, u.values, h.values, c)
    return ResidualReport(
        weak_residual_norm=float(np.max(np.abs(r) / grid.weights)),
        residual=r,
    )
