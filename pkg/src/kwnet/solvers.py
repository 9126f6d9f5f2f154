"""Three-regime solvers for d2u = c - h exp(u) on a metric-graph grid.

The sign of c decides the machinery:

* c = 0: minimize the Dirichlet energy over the constraint set
  {int v = 0, int h e^v = 0}.  A feasible start is a scaled smooth bump
  concentrated where h is most positive; the Lagrange multiplier of the
  constraint gives the additive shift that turns the minimizer into a
  solution.
* c > 0: minimize 1/2 int |du|^2 + c int u over {int h e^u = c |G|}; the
  projection onto the constraint is an explicit constant shift and the
  multiplier is 1 at the minimizer.
* c < 0: monotone iteration squeezed between a constant lower solution and a
  constructed upper solution u+ = a m + b, where m solves a compatible flux
  problem driven by h minus its mean.  When c lies below the certified range
  of that construction, a damped-Newton continuation in c supplies the upper
  solution.  Bisection over c brackets the solvability threshold, and a
  box-constrained minimization follows solutions down to the bracket.

All iterations report residuals in the pointwise-defect scale of
``apply_residual`` (max |r_i| / weight_i), with convergence thresholds scaled
by (1 + |c|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse import linalg as spla

from .assembly import assemble_stiffness, shifted_solver, solve_poisson_meanzero
from .errors import (
    BoundBlowup,
    FeasibilityFailure,
    GridMismatch,
    HNotNonpositive,
    IntegralNotNegative,
    MarginTooLarge,
    NoConvergence,
    NotSolvable,
    NoUpperSolutionFound,
    OrderingViolated,
)
from .graph import (
    Grid,
    GridFunction,
    constant,
    exp_weighted_energy,
    grids_compatible,
    integrate,
    norms,
)

DEFAULT_TOL = 1e-8
MAX_ITER_GRADIENT = 5000
MAX_ITER_MONOTONE = 500
ARMIJO_START = 1.0
ARMIJO_FACTOR = 0.5
ARMIJO_DECREASE = 1e-4

NECESSARY_OK = "NecessaryOK"
VIOLATES = "Violates"


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class SolvabilityVerdict:
    """Outcome of the necessary-condition checks for (h, c)."""

    status: str  # NecessaryOK | Violates
    reason: str  # HZeroEverywhere | HDoesNotChangeSign | IntegralHNonneg | HNowherePositive | none
    integral_h: float
    max_h: float
    min_h: float

    @property
    def ok(self) -> bool:
        return self.status == NECESSARY_OK


@dataclass
class SolveReport:
    method: str
    status: str = "Converged"
    iterations: int = 0
    final_residual: float = math.nan
    multiplier: float | None = None
    functional_value: float | None = None
    identity_checks: dict = field(default_factory=dict)
    monotone_history: list | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "multiplier": self.multiplier,
            "functional_value": self.functional_value,
            "identity_checks": dict(self.identity_checks),
            "details": {k: v for k, v in self.details.items() if _jsonable(v)},
        }


def _jsonable(v) -> bool:
    return isinstance(v, (int, float, str, bool, list, tuple, dict, type(None)))


@dataclass(frozen=True)
class Solution:
    u: GridFunction
    report: SolveReport


@dataclass(frozen=True)
class ThresholdEstimate:
    """Bracket for the solvability threshold in c < 0.

    ``c_hi`` is solvable, ``c_lo`` carries unsolvability evidence; when h <= 0
    everywhere the threshold is minus infinity and the bracket is absent.
    """

    minus_infinity: bool
    c_lo: float | None
    c_hi: float | None
    analytic_upper_bound: float | None
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UpperSolutionParams:
    """Constructed upper solution u+ = a m + b and the c it certifies."""

    m: GridFunction
    a: float
    b: float
    implied_c: float

    def u_plus(self) -> GridFunction:
        return GridFunction(self.m.grid, self.a * self.m.values + self.b)


@dataclass(frozen=True)
class KWProblem:
    grid: Grid
    h: GridFunction
    c: float

    def __post_init__(self):
        if not grids_compatible(self.grid, self.h.grid):
            raise GridMismatch("problem grid differs from the grid of h")
        if not math.isfinite(self.c):
            raise ValueError("c must be finite")


# ---------------------------------------------------------------------------
# shared machinery


class _Workspace:
    """Per-grid operators shared by one solve."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.K = assemble_stiffness(grid).matrix
        self.w = grid.weights
        self.total = grid.total_length
        self._riesz = None

    def riesz(self):
        # H1 Riesz map (K + M)^(-1): turns dual residual vectors into
        # gradient directions whose quality does not degrade with the mesh.
        if self._riesz is None:
            self._riesz = spla.splu((self.K + sparse.diags(self.w)).tocsc())
        return self._riesz

    def residual(self, u: np.ndarray, hv: np.ndarray, c: float) -> np.ndarray:
        with np.errstate(over="ignore"):
            return self.K @ u + c * self.w - self.w * (hv * np.exp(u))

    def weak_norm(self, r: np.ndarray) -> float:
        return float(np.max(np.abs(r) / self.w))


def classify(h: GridFunction, c: float) -> SolvabilityVerdict:
    """Check the necessary solvability conditions for the regime of c.

    c = 0 requires h to change sign with int h < 0; c > 0 requires h positive
    somewhere; c < 0 requires int h < 0.  For c < 0 with sign-changing h,
    NecessaryOK means "possibly solvable" — the threshold decides.
    """
    hv = h.values
    ih = integrate(h)
    mx = float(np.max(hv))
    mn = float(np.min(hv))

    def verdict(status, reason):
        return SolvabilityVerdict(status, reason, ih, mx, mn)

    if mx == 0.0 and mn == 0.0:
        return verdict(VIOLATES, "HZeroEverywhere")
    if c == 0.0:
        if not (mx > 0.0 and mn < 0.0):
            return verdict(VIOLATES, "HDoesNotChangeSign")
        if ih >= 0.0:
            return verdict(VIOLATES, "IntegralHNonneg")
        return verdict(NECESSARY_OK, "none")
    if c > 0.0:
        if mx <= 0.0:
            return verdict(VIOLATES, "HNowherePositive")
        return verdict(NECESSARY_OK, "none")
    if ih >= 0.0:
        return verdict(VIOLATES, "IntegralHNonneg")
    return verdict(NECESSARY_OK, "none")


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _bump(grid: Grid, h: GridFunction) -> GridFunction:
    """Smooth cutoff profile concentrated where h is most positive.

    Supported strictly inside one edge: the edge attaining the maximum of h
    (lowest-indexed edge on ties), on the node run where h > max(h)/2, capped
    at half the edge; value 1 on the middle half of that interval with cubic
    smoothstep ramps to 0.
    """
    best_eid, best_max = None, -math.inf
    for e in grid.graph.edges:
        m = float(np.max(h.values[grid.edge_dofs[e.id]]))
        if m > best_max:
            best_eid, best_max = e.id, m
    if best_max <= 0.0:
        raise FeasibilityFailure("h has no positive part to concentrate a bump on")

    dofs = grid.edge_dofs[best_eid]
    vals = h.values[dofs]
    n = grid.cells_per_edge[best_eid]
    hj = grid.spacing[best_eid]
    length = grid.graph.edge(best_eid).length

    mask = vals > best_max / 2.0
    peak = int(np.argmax(vals))
    i0 = peak
    while i0 - 1 >= 0 and mask[i0 - 1]:
        i0 -= 1
    i1 = peak
    while i1 + 1 <= n and mask[i1 + 1]:
        i1 += 1
    i0, i1 = max(i0, 1), min(i1, n - 1)
    if i0 > i1:
        # peak sits on a vertex with no interior node above half-max;
        # fall back to the best interior node
        j = 1 + int(np.argmax(vals[1:n]))
        if vals[j] <= 0.0:
            raise FeasibilityFailure("no interior node with h > 0 on the bump edge")
        i0 = i1 = j

    s_lo, s_hi = i0 * hj, i1 * hj
    if s_hi - s_lo > length / 2.0:
        mid = 0.5 * (s_lo + s_hi)
        s_lo, s_hi = mid - length / 4.0, mid + length / 4.0

    s = grid.edge_coords(best_eid)
    profile = np.zeros(n + 1)
    if i1 - i0 < 2:
        # no node strictly inside (s_lo, s_hi): a smoothstep profile would be
        # identically zero on the grid, so pin a single-node bump instead
        profile[i0 if vals[i0] >= vals[i1] else i1] = 1.0
    else:
        ramp = (s_hi - s_lo) / 4.0
        profile = np.minimum(_smoothstep((s - s_lo) / ramp), _smoothstep((s_hi - s) / ramp))
        profile[(s <= s_lo) | (s >= s_hi)] = 0.0

    out = np.zeros(grid.ndof)
    out[dofs] = profile
    return GridFunction(grid, out)


def _safe_exp_integral(w, hv, exponent):
    # monotone surrogate that saturates instead of overflowing
    with np.errstate(over="ignore"):
        return float(w @ (hv * np.exp(np.minimum(exponent, 700.0))))


def _project_zero(ws: _Workspace, hv: np.ndarray, v: np.ndarray, wb: np.ndarray):
    """Return to {int v = 0, int h e^v = 0}: scalar Newton along the bump
    direction, then a mean shift.  None when no correction exists."""
    w = ws.w
    alpha = 0.0
    cur = v
    for _ in range(100):
        with np.errstate(over="ignore"):
            ev = np.exp(cur)
        if not np.all(np.isfinite(ev)):
            return None
        g = float(w @ (hv * ev))
        scale = float(w @ (np.abs(hv) * ev)) + 1e-300
        if abs(g) <= 1e-14 * scale:
            out = cur - (w @ cur) / ws.total
            return out
        d = float(w @ (hv * wb * ev))
        if not (d > 0.0) or not math.isfinite(d):
            return None
        step = max(-50.0, min(50.0, -g / d))
        alpha += step
        if abs(alpha) > 500.0:
            return None
        cur = v + alpha * wb
    return None


def _ls_multiplier(w, g, q):
    """Least-squares lambda minimizing |g - lambda q| in the inverse-mass norm."""
    denom = float(q @ (q / w))
    if denom <= 0.0:
        return 0.0
    return float(g @ (q / w)) / denom


def solve_zero(h: GridFunction, *, tol: float = DEFAULT_TOL,
               max_iter: int | None = None) -> Solution:
    """Solve d2u = -h e^u (the c = 0 regime).

    Constrained minimization of 1/2 int |dv|^2 over
    {int v = 0, int h e^v = 0}, started from a scaled bump, followed by the
    additive shift ln(lambda) with lambda the constraint multiplier.
    """
    max_iter = MAX_ITER_GRADIENT if max_iter is None else max_iter
    v0 = classify(h, 0.0)
    if not v0.ok:
        raise NotSolvable(f"c = 0 needs sign-changing h with negative integral ({v0.reason})")
    grid = h.grid
    ws = _Workspace(grid)
    w, K = ws.w, ws.K
    hv = h.values
    ih = v0.integral_h

    wb = _bump(grid, h).values

    def scan(ell):
        return _safe_exp_integral(w, hv, ell * wb)

    hi = 1.0
    for _ in range(80):
        if scan(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise FeasibilityFailure("bump scaling never made int h e^(l w) positive")
    ell0 = brentq(scan, 0.0, hi, xtol=1e-13, rtol=8.9e-16)

    v = ell0 * wb
    v = v - (w @ v) / ws.total
    v = _project_zero(ws, hv, v, wb)
    if v is None:
        raise FeasibilityFailure("could not project the scaled bump onto the constraint set")

    riesz = ws.riesz()
    val = 0.5 * float(v @ (K @ v))
    lam = 0.0
    wn = math.inf
    iterations = 0
    polish_at = 1e-4
    for iterations in range(1, max_iter + 1):
        g = K @ v
        q = w * hv * np.exp(v)
        lam = _ls_multiplier(w, g, q)
        wn = ws.weak_norm(g - lam * q)
        if wn <= tol and lam > 0.0:
            break
        if wn <= polish_at and lam > 0.0:
            # the gradient method has localized the minimizer; sharpen the
            # tail with Newton on the full system (whose root satisfies both
            # constraints identically after recentering)
            u_try = v + math.log(lam)
            upol = _damped_newton(ws, hv, 0.0, u_try, tol=0.2 * tol, max_iter=50)
            if upol is not None and float(np.max(np.abs(upol - u_try))) < 1.0:
                mean_u = float(w @ upol) / ws.total
                v = upol - mean_u
                lam = math.exp(mean_u)
                val = 0.5 * float(v @ (K @ v))
                wn = ws.weak_norm(ws.residual(upol, hv, 0.0))
                break
            polish_at = wn / 10.0
        # Reduced gradient in the Riesz metric: pick the multiplier that makes
        # the step tangent to {int h e^v = 0}, so the wb-projection afterwards
        # only has to absorb the second-order constraint drift.
        dg = riesz.solve(g)
        dq = riesz.solve(q)
        q_bq = float(q @ dq)
        if not (q_bq > 0.0) or not math.isfinite(q_bq):
            raise NoConvergence("constraint derivative degenerated")
        mu = float(q @ dg) / q_bq
        d = dg - mu * dq
        slope = float(g @ d)
        eta = ARMIJO_START
        moved = False
        noise = 1e-15 * (1.0 + abs(val))
        while eta >= 1e-14:
            trial = _project_zero(ws, hv, v - eta * d, wb)
            if trial is not None:
                tval = 0.5 * float(trial @ (K @ trial))
                if tval <= val - ARMIJO_DECREASE * eta * slope + noise:
                    v, val = trial, tval
                    moved = True
                    break
            eta *= ARMIJO_FACTOR
        if not moved:
            break
    else:
        iterations = max_iter

    g = K @ v
    q = w * hv * np.exp(v)
    lam = _ls_multiplier(w, g, q)
    wn = ws.weak_norm(g - lam * q)
    if wn > tol or not lam > 0.0:
        raise NoConvergence(
            f"projected gradient stalled at residual {wn:.3e} (tol {tol:.1e}) "
            f"after {iterations} iterations"
        )

    u = v + math.log(lam)
    rfin = ws.residual(u, hv, 0.0)
    mass = float(w @ (hv * np.exp(u)))
    lam_energy = exp_weighted_energy(GridFunction(grid, v)) / (-ih)
    report = SolveReport(
        method="constrained-gradient(zero)",
        iterations=iterations,
        final_residual=ws.weak_norm(rfin),
        multiplier=lam,
        functional_value=val,
        identity_checks={
            "mass_defect": abs(mass),
            "energy_defect": abs(exp_weighted_energy(GridFunction(grid, u)) + ih),
            "multiplier_energy": lam_energy,
        },
        details={"bump_scale": ell0, "integral_h": ih},
    )
    return Solution(GridFunction(grid, u), report)


def solve_positive(h: GridFunction, c: float, *, tol: float = DEFAULT_TOL,
                   max_iter: int | None = None) -> Solution:
    """Solve d2u = c - h e^u for c > 0 (solvable iff h is positive somewhere).

    Minimizes 1/2 int |du|^2 + c int u over {int h e^u = c |G|}; the
    projection is the exact constant shift t = ln(c|G| / int h e^u).
    """
    if not c > 0.0:
        raise ValueError("solve_positive requires c > 0")
    max_iter = MAX_ITER_GRADIENT if max_iter is None else max_iter
    v0 = classify(h, c)
    if not v0.ok:
        raise NotSolvable(f"c > 0 needs max h > 0 ({v0.reason})")
    grid = h.grid
    ws = _Workspace(grid)
    w, K = ws.w, ws.K
    hv = h.values
    target = c * ws.total
    ih = v0.integral_h

    if ih >= target:
        u = np.full(grid.ndof, math.log(target / ih))
    else:
        wb = _bump(grid, h).values

        def scan(ell):
            return _safe_exp_integral(w, hv, ell * wb) - target

        hi = 1.0
        for _ in range(80):
            if scan(hi) > 0.0:
                break
            hi *= 2.0
        else:
            raise FeasibilityFailure("bump scaling never reached int h e^u = c |G|")
        ell0 = brentq(scan, 0.0, hi, xtol=1e-13, rtol=8.9e-16)
        u = ell0 * wb

    def project(x):
        cur = _safe_exp_integral(w, hv, x)
        if not (cur > 0.0) or not math.isfinite(cur):
            return None
        return x + (math.log(target) - math.log(cur))

    u = project(u)
    if u is None:
        raise FeasibilityFailure("feasible start lost the positivity of int h e^u")

    def value(x):
        return 0.5 * float(x @ (K @ x)) + c * float(w @ x)

    riesz = ws.riesz()
    val = value(u)
    ctol = tol * (1.0 + abs(c))
    wn = math.inf
    iterations = 0
    polish_at = 1e-4 * (1.0 + abs(c))
    for iterations in range(1, max_iter + 1):
        r = ws.residual(u, hv, c)
        wn = ws.weak_norm(r)
        if wn <= ctol:
            break
        if wn <= polish_at:
            # Newton tail: a root of the full system keeps the mass
            # constraint exactly (sum the rows), so feasibility survives
            upol = _damped_newton(ws, hv, c, u, tol=0.2 * ctol, max_iter=50)
            if upol is not None and float(np.max(np.abs(upol - u))) < 1.0:
                u = upol
                val = value(u)
                wn = ws.weak_norm(ws.residual(u, hv, c))
                break
            polish_at = wn / 10.0
        d = riesz.solve(r)
        slope = float(r @ d)
        eta = ARMIJO_START
        moved = False
        noise = 1e-15 * (1.0 + abs(val))
        while eta >= 1e-14:
            trial = project(u - eta * d)
            if trial is not None:
                tval = value(trial)
                if tval <= val - ARMIJO_DECREASE * eta * slope + noise:
                    u, val = trial, tval
                    moved = True
                    break
            eta *= ARMIJO_FACTOR
        if not moved:
            r = ws.residual(u, hv, c)
            wn = ws.weak_norm(r)
            break
    if wn > ctol:
        raise NoConvergence(
            f"projected gradient stalled at residual {wn:.3e} (tol {ctol:.1e}) "
            f"after {iterations} iterations"
        )

    mass = float(w @ (hv * np.exp(u)))
    report = SolveReport(
        method="constrained-gradient(positive)",
        iterations=iterations,
        final_residual=wn,
        multiplier=1.0,
        functional_value=val,
        identity_checks={"mass_defect": abs(mass - target)},
        details={"integral_h": ih, "target_mass": target},
    )
    return Solution(GridFunction(grid, u), report)


# ---------------------------------------------------------------------------
# c < 0: lower/upper solutions, monotone iteration, threshold, critical case


def build_lower(h: GridFunction, c: float, margin: float) -> GridFunction:
    """Constant lower solution -A with safety margin: -c - sup|h| e^(-A) >= margin."""
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    if margin >= -c:
        raise MarginTooLarge(f"margin {margin} is not smaller than -c = {-c}")
    sup_h = float(np.max(np.abs(h.values)))
    if sup_h <= (-c - margin):
        a_const = 0.0
    else:
        a_const = math.log(sup_h / (-c - margin))
    return constant(h.grid, -a_const)


def _mean_flux_problem(h: GridFunction) -> GridFunction:
    """m with d2m = mean(h) - h weakly; the compatible counterpart of h."""
    grid = h.grid
    hbar = integrate(h) / grid.total_length
    rv = hbar - h.values
    rv = rv - (grid.weights @ rv) / grid.total_length  # strip roundoff mean
    return solve_poisson_meanzero(grid, GridFunction(grid, rv))


def build_upper(h: GridFunction) -> UpperSolutionParams:
    """Upper solution u+ = a m + b for the least-negative certified c.

    m solves d2m = mean(h) - h; a is the largest scale keeping
    max |e^(a m) - 1| <= rho with rho = min(-int h, -mean h) / (2 sup|h|);
    b = ln a.  The construction certifies solvability for every
    c >= implied_c = a (mean h + sup|h| rho) < 0, with the discrete
    upper-solution inequality holding exactly by construction.
    """
    ih = integrate(h)
    if ih >= 0.0:
        raise IntegralNotNegative(f"int h = {ih}; the upper-solution construction needs < 0")
    grid = h.grid
    hbar = ih / grid.total_length
    sup_h = float(np.max(np.abs(h.values)))
    m = _mean_flux_problem(h)
    mmax = float(np.max(np.abs(m.values)))
    rho = min(-ih, -hbar) / (2.0 * sup_h)
    if mmax <= 1e-14 * (1.0 + sup_h):
        m = constant(grid, 0.0)
        a = 1.0
    else:
        a = math.log1p(rho) / mmax
    b = math.log(a)
    implied_c = a * (hbar + sup_h * rho)

    params = UpperSolutionParams(m=m, a=a, b=b, implied_c=implied_c)
    up = params.u_plus()
    ws = _Workspace(grid)
    defect = ws.residual(up.values, h.values, implied_c) / ws.w
    floor = -1e-8 * (1.0 + abs(implied_c) + sup_h * math.exp(float(np.max(up.values))))
    if float(np.min(defect)) < floor:
        raise NoConvergence(
            f"constructed upper solution failed its own inequality (min defect {defect.min():.3e})"
        )
    return params


def build_upper_hneg(h: GridFunction, c: float) -> GridFunction:
    """Upper solution for h <= 0 (threshold minus infinity): any c < 0 works.

    Picks a = 2c / mean(h) (twice the least admissible scale) and
    b = ln a + a max|m| + 1, so e^(a m + b) > a everywhere and
    a mean(h) = 2c < c.
    """
    hv = h.values
    if float(np.max(hv)) > 0.0:
        raise HNotNonpositive("h must be <= 0 everywhere")
    ih = integrate(h)
    if ih >= 0.0:
        raise IntegralNotNegative("h <= 0 with int h = 0 means h vanishes identically")
    if not c < 0.0:
        raise ValueError("build_upper_hneg requires c < 0")
    grid = h.grid
    hbar = ih / grid.total_length
    m = _mean_flux_problem(h)
    a = 2.0 * c / hbar
    b = math.log(a) + a * float(np.max(np.abs(m.values))) + 1.0
    return GridFunction(grid, a * m.values + b)


def monotone_iterate(h: GridFunction, c: float, u_minus: GridFunction,
                     u_plus: GridFunction, *, tol: float = DEFAULT_TOL,
                     max_iter: int | None = None) -> Solution:
    """Descend from the upper solution through shifted linear solves.

    With k = max(1, -h) e^(u+), each sweep solves d2u' - k u' = f(u) - k u,
    f(x, u) = c - h e^u.  The M-matrix structure of the shifted operator keeps
    the sweeps ordered: u- <= u_{n+1} <= u_n <= u+ (monotone_history records
    the slack of both inequalities each sweep).
    """
    if not c < 0.0:
        raise ValueError("monotone iteration applies to c < 0")
    max_iter = MAX_ITER_MONOTONE if max_iter is None else max_iter
    grid = h.grid
    for f, name in ((u_minus, "u_minus"), (u_plus, "u_plus")):
        if not grids_compatible(grid, f.grid):
            raise GridMismatch(f"{name} lives on a different grid")
    ws = _Workspace(grid)
    hv, w = h.values, ws.w

    gap = float(np.min(u_plus.values - u_minus.values))
    if gap < -1e-12:
        raise OrderingViolated(f"u_minus exceeds u_plus by {-gap:.3e}")
    pair_tol = 1e-9 * (1.0 + abs(c))
    upper_defect = float(np.min(ws.residual(u_plus.values, hv, c) / w))
    if upper_defect < -pair_tol:
        raise OrderingViolated(f"u_plus is not a discrete upper solution (defect {upper_defect:.3e})")
    lower_defect = float(np.max(ws.residual(u_minus.values, hv, c) / w))
    if lower_defect > pair_tol:
        raise OrderingViolated(f"u_minus is not a discrete lower solution (defect {lower_defect:.3e})")

    k = np.maximum(1.0, -hv) * np.exp(u_plus.values)
    sweep = shifted_solver(grid, GridFunction(grid, k))

    # An exact upper/lower pair keeps the sweeps ordered to machine precision;
    # a pair admitted with a small defect can leak that defect into the
    # ordering, amplified by at most 1 / min(k) (inverse positivity of the
    # shifted operator), so the allowed slack scales accordingly.
    pair_leak = max(0.0, -upper_defect, lower_defect)
    order_slack = 1e-12 + 20.0 * pair_leak / float(np.min(k))

    u = u_plus.values.copy()
    lo = u_minus.values
    history = []
    ctol = tol * (1.0 + abs(c))
    wn = math.inf
    tail_at = 1e-3 * (1.0 + abs(c))
    used_tail = False
    for n in range(1, max_iter + 1):
        rhs = c - hv * np.exp(u) - k * u
        unew = sweep(-(w * rhs))
        step = float(np.max(np.abs(unew - u)))
        down_slack = float(np.min(u - unew))
        low_slack = float(np.min(unew - lo))
        history.append({"step": step, "monotone_slack": down_slack, "lower_slack": low_slack})
        if down_slack < -order_slack or low_slack < -order_slack:
            raise OrderingViolated(
                f"sandwich broke at sweep {n}: down {down_slack:.3e}, lower {low_slack:.3e}"
            )
        u = unew
        if step <= tol:
            wn = ws.weak_norm(ws.residual(u, hv, c))
            if wn <= ctol:
                break
        if step <= tail_at:
            # the sweeps are in their linear tail; accept a Newton finish only
            # if it stays inside the certified sandwich [u_minus, u_n]
            upol = _damped_newton(ws, hv, c, u, tol=0.2 * ctol, max_iter=50)
            if upol is not None:
                slack = max(10.0 * step, 1e-8 * (1.0 + abs(c)))
                if (float(np.min(upol - lo)) >= -slack
                        and float(np.max(upol - u)) <= slack):
                    u = upol
                    wn = ws.weak_norm(ws.residual(u, hv, c))
                    if wn <= ctol:
                        used_tail = True
                        break
            tail_at = step / 10.0
    else:
        raise NoConvergence(f"monotone iteration exhausted {max_iter} sweeps")

    mass = float(w @ (hv * np.exp(u)))
    report = SolveReport(
        method="monotone",
        iterations=len(history),
        final_residual=wn,
        functional_value=None,
        identity_checks={"mass_defect": abs(mass - c * ws.total)},
        monotone_history=history,
        details={"upper_defect": upper_defect, "lower_defect": lower_defect,
                 "newton_tail": used_tail},
    )
    return Solution(GridFunction(grid, u), report)


def _damped_newton(ws: _Workspace, hv: np.ndarray, c: float, seed: np.ndarray,
                   tol: float, max_iter: int = 60):
    """Damped Newton on the full residual; returns DOF values or None.

    Keeps iterating past tol while convergence is still fast, so accepted
    results sit near the numerical floor rather than just under tol.
    """
    u = np.asarray(seed, dtype=float).copy()
    w, K = ws.w, ws.K
    best_u, best_wn = None, math.inf
    prev_wn = math.inf
    for _ in range(max_iter):
        with np.errstate(over="ignore"):
            eu = np.exp(u)
        if not np.all(np.isfinite(eu)):
            break
        r = K @ u + c * w - w * (hv * eu)
        wn = ws.weak_norm(r)
        if wn < best_wn:
            best_wn, best_u = wn, u.copy()
        if wn <= tol and wn > 0.3 * prev_wn:
            break  # under tolerance and no longer improving quickly
        prev_wn = wn
        jac = (K - sparse.diags(w * hv * eu)).tocsc()
        d = _linsolve(jac, -r, w)
        if d is None:
            break
        merit = float(r @ (r / w))
        alpha = 1.0
        moved = False
        while alpha >= 1e-10:
            ut = u + alpha * d
            with np.errstate(over="ignore"):
                rt = K @ ut + c * w - w * (hv * np.exp(ut))
            if np.all(np.isfinite(rt)):
                with np.errstate(over="ignore"):
                    mt = float(rt @ (rt / w))
                if math.isfinite(mt) and mt <= (1.0 - 2.0 * ARMIJO_DECREASE * alpha) * merit:
                    u = ut
                    moved = True
                    break
            alpha *= 0.5
        if not moved:
            break
    return best_u if best_wn <= tol else None


def _linsolve(jac, rhs, w):
    """Sparse solve with a ridge fallback for indefinite/singular Jacobians."""
    try:
        d = spla.splu(jac).solve(rhs)
        if np.all(np.isfinite(d)) and _solve_ok(jac, d, rhs):
            return d
    except RuntimeError:
        pass
    tau = 1e-10 * (1.0 + float(np.max(np.abs(jac.diagonal()))))
    for _ in range(12):
        try:
            d = spla.splu((jac + tau * sparse.diags(w)).tocsc()).solve(rhs)
            if np.all(np.isfinite(d)):
                return d
        except RuntimeError:
            pass
        tau *= 100.0
    return None


def _solve_ok(A, x, b) -> bool:
    res = float(np.max(np.abs(A @ x - b)))
    return res <= 1e-8 * (float(np.max(np.abs(b))) + 1e-300)


def _continue_down(ws: _Workspace, hv: np.ndarray, c_from: float,
                   u_from: np.ndarray, c_to: float, tol: float):
    """March solutions in c from c_from down to c_to with step halving.

    Returns the solution values at c_to, or None when even tiny steps fail —
    evidence (not proof) that c_to lies below the solvability threshold.
    """
    c_cur = c_from
    u_cur = np.asarray(u_from, dtype=float).copy()
    span = c_from - c_to
    step = span
    min_step = max(1e-6 * span, 1e-14 * (1.0 + abs(c_to)))
    # well inside the admissibility tolerance of monotone_iterate, but never
    # below what damped Newton can reach in floating point
    newton_tol = max(0.01 * tol, 1e-10)
    for _ in range(600):
        if not c_cur > c_to:
            return u_cur
        c_try = max(c_to, c_cur - step)
        unew = _damped_newton(ws, hv, c_try, u_cur, tol=newton_tol * (1.0 + abs(c_try)))
        if unew is not None:
            c_cur, u_cur = c_try, unew
            step = min(step * 2.0, span)
        else:
            step *= 0.5
            if step < min_step:
                return None
    return None


def _lower_for(h: GridFunction, c: float, u_plus: GridFunction) -> GridFunction:
    """Constant lower solution sitting below u_plus with a -c/2 margin."""
    base = build_lower(h, c, margin=0.5 * (-c))
    a_const = max(-float(np.min(base.values)), 1.0 - float(np.min(u_plus.values)))
    return constant(h.grid, -a_const)


def solve_negative(h: GridFunction, c: float, *, tol: float = DEFAULT_TOL,
                   max_iter: int | None = None) -> Solution:
    """Solve d2u = c - h e^u for c < 0 (needs int h < 0).

    h <= 0: the constructed upper solution works for every c < 0.  Otherwise
    the scaled-flux upper solution certifies c >= implied_c directly; below
    that a damped-Newton continuation in c supplies the upper solution, and
    failure of the continuation is reported as NoUpperSolutionFound —
    evidence of c below the threshold, never a proof.
    """
    if not c < 0.0:
        raise ValueError("solve_negative requires c < 0")
    v0 = classify(h, c)
    if not v0.ok:
        raise NotSolvable(f"c < 0 needs int h < 0 ({v0.reason})")

    if v0.max_h <= 0.0:
        up = build_upper_hneg(h, c)
        sol = monotone_iterate(h, c, _lower_for(h, c, up), up,
                               tol=tol, max_iter=max_iter)
        sol.report.method = "monotone(h<=0)"
        return sol

    params = build_upper(h)
    if c >= params.implied_c:
        up = params.u_plus()
        sol = monotone_iterate(h, c, _lower_for(h, c, up), up,
                               tol=tol, max_iter=max_iter)
        sol.report.method = "monotone(certified)"
        sol.report.details["implied_c"] = params.implied_c
        return sol

    # below the certified range: continuation from implied_c down to c
    ws = _Workspace(h.grid)
    base_up = params.u_plus()
    base = monotone_iterate(h, params.implied_c, _lower_for(h, params.implied_c, base_up),
                            base_up, tol=tol, max_iter=max_iter)
    u_cont = _continue_down(ws, h.values, params.implied_c, base.u.values, c, tol)
    if u_cont is None:
        raise NoUpperSolutionFound(
            f"continuation stalled above c = {c}; no upper solution found "
            f"(certified range starts at {params.implied_c})"
        )
    up = GridFunction(h.grid, u_cont)
    sol = monotone_iterate(h, c, _lower_for(h, c, up), up, tol=tol, max_iter=max_iter)
    sol.report.method = "monotone(continuation)"
    sol.report.details["implied_c"] = params.implied_c
    sol.report.details["continuation_from"] = params.implied_c
    return sol


def estimate_threshold(h: GridFunction, *, bracket_tol: float | None = None,
                       tol: float = DEFAULT_TOL, max_iter: int | None = None) -> ThresholdEstimate:
    """Bracket the solvability threshold in c by bisection.

    h <= 0 everywhere -> minus_infinity.  Otherwise start from the certified
    implied_c (solvable), double downward until a solve fails, then bisect.
    An upper solution for some negative c stays one for every larger
    negative c, which is what makes bisection meaningful.
    """
    ih = integrate(h)
    if ih >= 0.0:
        raise IntegralNotNegative(f"int h = {ih}; threshold analysis needs < 0")
    if float(np.max(h.values)) <= 0.0:
        return ThresholdEstimate(minus_infinity=True, c_lo=None, c_hi=None,
                                 analytic_upper_bound=None)

    params = build_upper(h)
    c_hi = params.implied_c
    if bracket_tol is None:
        bracket_tol = 1e-4 * abs(c_hi)
    probes = []

    def solvable(cc: float) -> bool:
        try:
            solve_negative(h, cc, tol=tol, max_iter=max_iter)
            probes.append((cc, True))
            return True
        except (NoUpperSolutionFound, NoConvergence):
            probes.append((cc, False))
            return False

    if not solvable(c_hi):
        raise NoConvergence(f"certified c = {c_hi} unexpectedly failed to solve")
    c_lo = 2.0 * c_hi
    for _ in range(60):
        if not solvable(c_lo):
            break
        c_hi = c_lo
        c_lo *= 2.0
    else:
        raise NoConvergence("doubling downward never produced an unsolvable c")

    while c_hi - c_lo > bracket_tol:
        mid = 0.5 * (c_lo + c_hi)
        if solvable(mid):
            c_hi = mid
        else:
            c_lo = mid

    return ThresholdEstimate(
        minus_infinity=False,
        c_lo=c_lo,
        c_hi=c_hi,
        analytic_upper_bound=params.implied_c,
        details={"probes": len(probes)},
    )


def _box_minimize(ws: _Workspace, hv: np.ndarray, c: float, lo: np.ndarray,
                  hi: np.ndarray, seed: np.ndarray, tol: float, max_iter: int):
    """Clamped projected gradient on 1/2 int|du|^2 + c int u - int h e^u."""
    w, K = ws.w, ws.K

    def value(x):
        return 0.5 * float(x @ (K @ x)) + c * float(w @ x) - float(w @ (hv * np.exp(x)))

    u = np.clip(seed, lo, hi)
    val = value(u)
    riesz = ws.riesz()
    ctol = tol * (1.0 + abs(c))
    for it in range(1, max_iter + 1):
        g = ws.residual(u, hv, c)
        wn = ws.weak_norm(g)
        if wn <= ctol:
            return u, it, wn
        d = riesz.solve(g)
        eta = ARMIJO_START
        moved = False
        noise = 1e-15 * (1.0 + abs(val))
        while eta >= 1e-14:
            trial = np.clip(u - eta * d, lo, hi)
            diff = u - trial
            decrease = (ARMIJO_DECREASE / eta) * float(w @ (diff * diff))
            tval = value(trial)
            if math.isfinite(tval) and tval <= val - decrease + noise:
                u, val = trial, tval
                moved = True
                break
            eta *= ARMIJO_FACTOR
        if not moved:
            g = ws.residual(u, hv, c)
            wn = ws.weak_norm(g)
            if wn <= ctol:
                return u, it, wn
            raise NoConvergence(f"box descent stalled at residual {wn:.3e} (tol {ctol:.1e})")
    raise NoConvergence(f"box descent exhausted {max_iter} iterations")


def solve_critical(h: GridFunction, estimate: ThresholdEstimate, *,
                   k_max: int = 8, tol: float = DEFAULT_TOL,
                   max_iter: int | None = None) -> Solution:
    """Follow solutions down to the threshold bracket and return the last one.

    Rungs c_k descend geometrically from the bracket top toward its midpoint.
    Each rung solves at a slightly smaller c to get the box ceiling psi_k,
    then minimizes the c_k-functional over the box [-A, psi_k] by clamped
    projected gradient.  H1 norms and the mass identity int h e^u = c_k |G|
    are recorded per rung; their boundedness is the point of the construction.
    """
    if estimate.minus_infinity:
        raise ValueError("threshold is minus infinity; there is no critical c")
    max_iter = MAX_ITER_GRADIENT if max_iter is None else max_iter
    grid = h.grid
    ws = _Workspace(grid)
    hv, w = h.values, ws.w
    c_lo, c_hi = estimate.c_lo, estimate.c_hi
    c_mid = 0.5 * (c_lo + c_hi)
    width = c_hi - c_lo

    base_lower = build_lower(h, c_hi, margin=0.5 * (-c_hi))
    a_base = -float(np.min(base_lower.values))

    rungs = []
    u_best = None
    c_best = None
    total_iters = 0
    c_floor = c_mid
    c_top = c_hi
    c_try = 0.5 * (c_hi + c_mid)
    for _ in range(k_max):
        psi = None
        c_psi = None
        for frac in (0.5, 0.85, 1.0):
            # frac < 1 probes below c_try (a solution there is a strict upper
            # solution at c_try); frac = 1 falls back to c_try itself
            cand = c_floor + frac * (c_try - c_floor)
            try:
                psi = solve_negative(h, cand, tol=tol).u
                c_psi = cand
                break
            except (NoUpperSolutionFound, NoConvergence):
                continue
        if psi is None:
            c_floor = c_try
            c_try = 0.5 * (c_top + c_floor)
            continue
        c_k = c_try
        a_k = max(a_base, 1.0 - float(np.min(psi.values)))
        lo_vec = np.full(grid.ndof, -a_k)
        try:
            u_k, iters, wn = _box_minimize(ws, hv, c_k, lo_vec, psi.values,
                                           seed=psi.values, tol=tol, max_iter=max_iter)
        except NoConvergence:
            c_floor = c_try
            c_try = 0.5 * (c_top + c_floor)
            continue
        total_iters += iters
        gf = GridFunction(grid, u_k)
        nr = norms(gf)
        h1 = math.hypot(nr.l2, nr.h1_seminorm)
        mass = float(w @ (hv * np.exp(u_k)))
        energy_cap = (
            _box_value(ws, hv, c_k, np.full(grid.ndof, -a_k))
            - c_k * integrate(psi)
            + float(np.max(np.abs(hv))) * float(w @ np.exp(psi.values))
        )
        rungs.append({
            "c": c_k,
            "c_psi": c_psi,
            "h1_norm": h1,
            "mass_defect": abs(mass - c_k * ws.total),
            "dirichlet_half": 0.5 * nr.h1_seminorm ** 2,
            "energy_cap": energy_cap,
            "residual": wn,
        })
        u_best, c_best = u_k, c_k
        c_top = c_k
        c_try = 0.5 * (c_k + c_floor)
        if c_top - c_floor <= max(1e-3 * width, 1e-15 * abs(c_mid)):
            break

    if u_best is None:
        raise NoConvergence("no rung of the critical descent produced a solution")

    h1s = [r["h1_norm"] for r in rungs]
    if max(h1s) > 50.0 * max(min(h1s), 1e-30):
        raise BoundBlowup(f"H1 norms along the descent spread by {max(h1s)/min(h1s):.1f}x")

    r_own = ws.weak_norm(ws.residual(u_best, hv, c_best))
    r_mid = ws.weak_norm(ws.residual(u_best, hv, c_mid))
    mass = float(w @ (hv * np.exp(u_best)))
    report = SolveReport(
        method="critical-box",
        iterations=total_iters,
        final_residual=r_own,
        functional_value=_box_value(ws, hv, c_best, u_best),
        identity_checks={
            "mass_defect_at_c_final": abs(mass - c_best * ws.total),
            "mass_defect_at_midpoint": abs(mass - c_mid * ws.total),
        },
        details={
            "c_final": c_best,
            "c_midpoint": c_mid,
            "bracket": [c_lo, c_hi],
            "residual_at_midpoint": r_mid,
            "rungs": rungs,
        },
    )
    return Solution(GridFunction(grid, u_best), report)


def _box_value(ws: _Workspace, hv: np.ndarray, c: float, x: np.ndarray) -> float:
    return (0.5 * float(x @ (ws.K @ x)) + c * float(ws.w @ x)
            - float(ws.w @ (hv * np.exp(x))))


def solve(h: GridFunction, c: float, *, tol: float = DEFAULT_TOL,
          max_iter: int | None = None) -> Solution:
    """Dispatch on the sign of c to the matching solver."""
    if c == 0.0:
        return solve_zero(h, tol=tol, max_iter=max_iter)
    if c > 0.0:
        return solve_positive(h, c, tol=tol, max_iter=max_iter)
    return solve_negative(h, c, tol=tol, max_iter=max_iter)


def solve_problem(problem: KWProblem, *, tol: float = DEFAULT_TOL,
                  max_iter: int | None = None) -> Solution:
    return solve(problem.h, problem.c, tol=tol, max_iter=max_iter)
