"""Independent checks on computed solutions.

Everything here recomputes from the assembly primitives rather than trusting
solver internals: integral identities a solution must satisfy, a
finite-difference probe of the variational gradients, manufactured problems
with a known exact discrete solution, and a damped-Newton oracle that solves
the full nonlinear system with no knowledge of the variational structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .assembly import assemble_stiffness
from .errors import Diverged, GridMismatch, KirchhoffDefect, ResolutionTooCoarse
from .graph import GridFunction, exp_weighted_energy, grids_compatible, integrate
from .solvers import Solution, SolveReport

_FUNCTIONALS = ("zero", "positive", "critical")


@dataclass(frozen=True)
class IdentityReport:
    """Integral identities of a solution: mass always, energy when c = 0."""

    mass_value: float  # int h e^u
    mass_target: float  # c |G|
    mass_defect: float
    energy_value: float | None  # int |du|^2 e^(-u), midpoint weights
    energy_target: float | None  # -int h
    energy_defect: float | None


@dataclass(frozen=True)
class FDGradientReport:
    analytic: float
    finite_difference: float
    abs_error: float
    rel_error: float
    step: float


def identity_report(u: GridFunction, h: GridFunction, c: float) -> IdentityReport:
    """Integrating the equation gives int h e^u = c |G|; testing it against
    e^(-u) gives int |du|^2 e^(-u) = -int h when c = 0."""
    if not grids_compatible(u.grid, h.grid):
        raise GridMismatch("u and h live on different grids")
    w = u.grid.weights
    mass = float(w @ (h.values * np.exp(u.values)))
    target = c * u.grid.total_length
    if c == 0.0:
        energy = exp_weighted_energy(u)
        etarget = -integrate(h)
        return IdentityReport(mass, target, abs(mass - target),
                              energy, etarget, abs(energy - etarget))
    return IdentityReport(mass, target, abs(mass - target), None, None, None)


def fd_gradient_check(functional: str, u: GridFunction, phi: GridFunction,
                      eps: float, *, h: GridFunction | None = None,
                      c: float | None = None) -> FDGradientReport:
    """Compare the analytic directional derivative of a solver functional
    against a centered finite difference along phi.

    "zero": 1/2 int |du|^2; "positive": adds c int u; "critical": adds
    c int u - int h e^u.  The latter two need c (and "critical" needs h).
    """
    if functional not in _FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; expected one of {_FUNCTIONALS}")
    if not grids_compatible(u.grid, phi.grid):
        raise GridMismatch("u and phi live on different grids")
    if eps <= 0.0 or not math.isfinite(eps):
        raise ValueError("eps must be a positive finite step")
    if functional in ("positive", "critical") and c is None:
        raise ValueError(f"functional {functional!r} needs c")
    if functional == "critical" and h is None:
        raise ValueError("functional 'critical' needs h")
    if h is not None and not grids_compatible(u.grid, h.grid):
        raise GridMismatch("u and h live on different grids")

    grid = u.grid
    K = assemble_stiffness(grid).matrix
    w = grid.weights
    uv, pv = u.values, phi.values

    def value(x: np.ndarray) -> float:
        out = 0.5 * float(x @ (K @ x))
        if functional in ("positive", "critical"):
            out += c * float(w @ x)
        if functional == "critical":
            out -= float(w @ (h.values * np.exp(x)))
        return out

    grad = K @ uv
    if functional in ("positive", "critical"):
        grad = grad + c * w
    if functional == "critical":
        grad = grad - w * (h.values * np.exp(uv))
    analytic = float(pv @ grad)
    fd = (value(uv + eps * pv) - value(uv - eps * pv)) / (2.0 * eps)
    abs_err = abs(analytic - fd)
    rel_err = abs_err / max(abs(analytic), abs(fd), 1e-14)
    return FDGradientReport(analytic, fd, abs_err, rel_err, eps)


def _edge_end_slopes(u: GridFunction) -> dict:
    """Second-order one-sided slopes pointing into each edge at both ends."""
    slopes = {}
    grid = u.grid
    for e in grid.graph.edges:
        vals = u.edge_values(e.id)
        hj = grid.spacing[e.id]
        tail = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * hj)
        head = (-3.0 * vals[-1] + 4.0 * vals[-2] - vals[-3]) / (2.0 * hj)
        slopes[e.id] = (tail, head)
    return slopes


def manufacture(u_star: GridFunction, c: float, *,
                kirchhoff_tol: float | None = None) -> GridFunction:
    """Build h so that u_star solves the discrete system exactly.

    Requires at least 3 cells per edge (for the one-sided slope stencil) and
    a profile whose flux balance at each vertex is small: the sum over
    incident edges of the inward slopes must vanish within kirchhoff_tol
    (default 2% of the slope scale).  Then h = (c + M^-1 K u*) e^(-u*), which
    makes the discrete residual of u_star vanish to rounding.
    """
    grid = u_star.grid
    for e in grid.graph.edges:
        if grid.cells_per_edge[e.id] < 3:
            raise ResolutionTooCoarse(
                f"edge {e.id!r} has {grid.cells_per_edge[e.id]} cells; slope checks need >= 3"
            )
    slopes = _edge_end_slopes(u_star)
    scale = max(abs(s) for pair in slopes.values() for s in pair)
    tol = kirchhoff_tol if kirchhoff_tol is not None else 0.02 * (1.0 + scale)
    for vid in grid.graph.vertex_ids:
        net = 0.0
        for e in grid.graph.edges:
            tail, head = slopes[e.id]
            if e.tail == vid:
                net += tail
            if e.head == vid:
                net += head
        if abs(net) > tol:
            raise KirchhoffDefect(
                f"vertex {vid!r}: net inward slope {net:.4e} exceeds {tol:.4e}; "
                "the profile is not compatible with the flux balance"
            )

    K = assemble_stiffness(grid).matrix
    w = grid.weights
    uv = u_star.values
    hv = (c + (K @ uv) / w) * np.exp(-uv)
    return GridFunction(grid, hv)


def oracle_newton(h: GridFunction, c: float, seed: GridFunction | None = None, *,
                  tol: float = 1e-8, max_iter: int = 100) -> Solution:
    """Damped Newton on the full residual, blind to the variational structure.

    Levenberg ridge fallback when the Jacobian solve is unusable, Armijo
    backtracking on the inverse-mass residual norm, Diverged when no
    acceptable step exists.
    """
    grid = h.grid
    if seed is None:
        u = np.zeros(grid.ndof)
    else:
        if not grids_compatible(grid, seed.grid):
            raise GridMismatch("seed lives on a different grid")
        u = seed.values.copy()
    K = assemble_stiffness(grid).matrix
    w = grid.weights
    hv = h.values
    ctol = tol * (1.0 + abs(c))

    def residual(x):
        with np.errstate(over="ignore"):
            return K @ x + c * w - w * (hv * np.exp(x))

    def weak_norm(r):
        return float(np.max(np.abs(r) / w))

    r = residual(u)
    wn = weak_norm(r)
    for it in range(1, max_iter + 1):
        if wn <= ctol:
            break
        with np.errstate(over="ignore"):
            eu = np.exp(u)
        jac = (K - sparse.diags(w * hv * eu)).tocsc()
        d = None
        try:
            d = spla.splu(jac).solve(-r)
            if not np.all(np.isfinite(d)):
                d = None
            elif float(np.max(np.abs(jac @ d + r))) > 1e-8 * (float(np.max(np.abs(r))) + 1e-300):
                d = None
        except RuntimeError:
            d = None
        if d is None:
            tau = 1e-10 * (1.0 + float(np.max(np.abs(jac.diagonal()))))
            while tau < 1e14:
                try:
                    d = spla.splu((jac + tau * sparse.diags(w)).tocsc()).solve(-r)
                    if np.all(np.isfinite(d)):
                        break
                except RuntimeError:
                    pass
                d = None
                tau *= 100.0
            if d is None:
                raise Diverged(f"no usable Newton direction at iteration {it}")
        merit = float(r @ (r / w))
        alpha = 1.0
        moved = False
        while alpha >= 1e-12:
            ut = u + alpha * d
            rt = residual(ut)
            if np.all(np.isfinite(rt)):
                with np.errstate(over="ignore"):
                    mt = float(rt @ (rt / w))
                if math.isfinite(mt) and mt <= (1.0 - 2e-4 * alpha) * merit:
                    u, r = ut, rt
                    wn = weak_norm(r)
                    moved = True
                    break
            alpha *= 0.5
        if not moved:
            raise Diverged(f"line search failed at iteration {it} (residual {wn:.3e})")
    else:
        raise Diverged(f"no convergence in {max_iter} iterations (residual {wn:.3e})")

    mass = float(w @ (hv * np.exp(u)))
    report = SolveReport(
        method="newton-oracle",
        iterations=it,
        final_residual=wn,
        identity_checks={"mass_defect": abs(mass - c * grid.total_length)},
    )
    return Solution(GridFunction(grid, u), report)
