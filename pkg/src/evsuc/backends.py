"""Solver backends and the outer cutting-plane loop.

Two interchangeable backends sit behind one protocol:

* :class:`HighsBackend` solves the MILP form (nadir limit as
  supporting hyperplanes) through HiGHS.
* :class:`BranchAndBoundConic` handles the rotated-cone nadir
  exactly: best-first branch and bound on the block counts around
  continuous SOCP relaxations.

:func:`solve` wraps either backend and, in cuts mode, re-solves with
supporting hyperplanes generated at violated operating points until
the exact nadir check passes everywhere.
"""

from __future__ import annotations

import heapq
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .frequency import nadir_ok, cut_at_state
from .uc import UcProblem

__all__ = [
    "SolveResult",
    "SolverBackend",
    "HighsBackend",
    "BranchAndBoundConic",
    "default_backend",
    "solve",
]

_BOUND_INF = 1e12


@dataclass
class SolveResult:
    status: str  # optimal | feasible | infeasible | unbounded | error
    x: np.ndarray | None = None
    objective: float = math.nan
    gap: float = math.nan
    cut_rounds: int = 0
    nodes_explored: int = 0
    message: str = ""
    new_cuts: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible") and self.x is not None


class SolverBackend(Protocol):
    capabilities: frozenset[str]

    def solve_once(
        self, problem: UcProblem, gap: float, time_limit: float | None
    ) -> SolveResult: ...


def _row_matrix(problem: UcProblem):
    data, ri, ci = [], [], []
    lb, ub = [], []
    for k, r in enumerate(problem.rows):
        ri.extend([k] * len(r.cols))
        ci.extend(r.cols)
        data.extend(r.vals)
        lb.append(r.lb)
        ub.append(r.ub)
    a = sparse.csr_matrix(
        (data, (ri, ci)), shape=(len(problem.rows), problem.n_var)
    )
    return a, np.array(lb), np.array(ub)


class HighsBackend:
    """MILP solves via scipy's HiGHS interface.

    ``node_limit`` truncates branch and bound deterministically (the
    incumbent is kept), so repeated runs stay bit-identical, unlike a
    wall-clock limit.  ``heuristic_effort`` is handed to HiGHS; the
    incumbent hunt dominates on these instances, where the dual bound
    settles almost immediately.
    """

    capabilities = frozenset({"mixed-integer-linear"})

    def __init__(
        self, node_limit: int | None = 2000, heuristic_effort: float = 0.2
    ) -> None:
        self.node_limit = node_limit
        self.heuristic_effort = heuristic_effort

    def solve_once(
        self, problem: UcProblem, gap: float = 1e-4, time_limit: float | None = None
    ) -> SolveResult:
        if problem.conic:
            raise ValueError("HiGHS backend cannot handle conic nadir entries")
        a, row_lb, row_ub = _row_matrix(problem)
        options: dict = {
            "mip_rel_gap": gap,
            "presolve": True,
            "mip_heuristic_effort": self.heuristic_effort,
        }
        if self.node_limit is not None:
            options["node_limit"] = int(self.node_limit)
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = milp(
                c=problem.obj,
                constraints=LinearConstraint(a, row_lb, row_ub),
                integrality=problem.integer.astype(int),
                bounds=Bounds(problem.lb, problem.ub),
                options=options,
            )
        status = {0: "optimal", 1: "feasible", 2: "infeasible", 3: "unbounded"}.get(
            res.status, "error"
        )
        # node-limit stops surface as an unrecognized HiGHS status; the
        # incumbent is still returned and is exactly what truncation wants
        if status == "error" and res.x is not None and res.fun is not None:
            status = "feasible"
        if status == "feasible" and res.x is None:
            status = "error"
        return SolveResult(
            status=status,
            x=None if res.x is None else np.asarray(res.x),
            objective=res.fun if res.fun is not None else math.nan,
            gap=float(getattr(res, "mip_gap", 0.0) or 0.0),
            nodes_explored=int(getattr(res, "mip_node_count", 0) or 0),
            message=res.message,
        )

    def solve_fixed(self, problem: UcProblem, x: np.ndarray) -> SolveResult:
        """Re-dispatch an incumbent: LP with the block counts pinned.

        Used after adding nadir cuts; most violations are repairable by
        shifting reserve between units without touching commitment.
        """
        lb, ub = problem.lb.copy(), problem.ub.copy()
        ints = np.where(problem.integer)[0]
        vals = np.round(x[ints])
        lb[ints] = vals
        ub[ints] = vals
        a, row_lb, row_ub = _row_matrix(problem)
        res = milp(
            c=problem.obj,
            constraints=LinearConstraint(a, row_lb, row_ub),
            integrality=np.zeros(problem.n_var),
            bounds=Bounds(lb, ub),
        )
        if res.x is None:
            return SolveResult(status="infeasible", message="fixed-count repair LP")
        return SolveResult(
            status="feasible",
            x=np.asarray(res.x),
            objective=float(res.fun),
        )


class BranchAndBoundConic:
    """Mixed-integer conic solves: branch and bound over SOCP relaxations.

    The continuous relaxation is built once with parametric variable
    bounds, so branching only updates parameter values before each
    re-solve.
    """

    capabilities = frozenset({"mixed-integer-linear", "mixed-integer-conic"})

    def __init__(self, solver: str = "CLARABEL", max_nodes: int = 20000):
        self.solver = solver
        self.max_nodes = max_nodes

    def solve_once(
        self, problem: UcProblem, gap: float = 1e-4, time_limit: float | None = None
    ) -> SolveResult:
        import cvxpy as cp

        n = problem.n_var
        x = cp.Variable(n)
        lo_p = cp.Parameter(n)
        hi_p = cp.Parameter(n)
        cons = [x >= lo_p, x <= hi_p]
        a, row_lb, row_ub = _row_matrix(problem)
        eq = row_lb == row_ub
        if eq.any():
            cons.append(a[eq] @ x == row_lb[eq])
        lo_rows = (~eq) & (row_lb != -math.inf)
        if lo_rows.any():
            cons.append(a[lo_rows] @ x >= row_lb[lo_rows])
        hi_rows = (~eq) & (row_ub != math.inf)
        if hi_rows.any():
            cons.append(a[hi_rows] @ x <= row_ub[hi_rows])

        freq = problem.spec.freq
        c_gain = math.sqrt(freq.t_p / (4.0 * freq.delta_f_max))
        for entry in problem.conic:
            h = entry.h[2] + sum(v * x[c] for c, v in zip(*entry.h[:2]))
            r_e = entry.r_e[2] + sum(v * x[c] for c, v in zip(*entry.r_e[:2]))
            r_p = entry.r_p[2] + sum(v * x[c] for c, v in zip(*entry.r_p[:2]))
            x1 = h / freq.f0 - r_e * freq.t_e / (4.0 * freq.delta_f_max)
            x2 = r_p
            # slack for max(p_l - r_e, 0): a covered loss leaves the cone slack
            s = cp.Variable(nonneg=True)
            cons.append(s >= c_gain * (freq.p_l - r_e))
            cons.append(x1 >= 0)
            cons.append(cp.SOC(x1 + x2, cp.hstack([2.0 * s, x1 - x2])))

        prob = cp.Problem(cp.Minimize(problem.obj @ x), cons)
        int_idx = np.flatnonzero(problem.integer)
        t0 = time.monotonic()

        def relax(lo: np.ndarray, hi: np.ndarray) -> tuple[float, np.ndarray | None]:
            lo_p.value = np.maximum(lo, -_BOUND_INF)
            hi_p.value = np.minimum(hi, _BOUND_INF)
            try:
                prob.solve(solver=self.solver, warm_start=True)
            except cp.error.SolverError:
                return math.inf, None
            if prob.status in ("optimal", "optimal_inaccurate"):
                return float(prob.value), np.asarray(x.value)
            return math.inf, None

        inc_obj, inc_x = math.inf, None
        counter = 0
        root_bound, root_x = relax(problem.lb, problem.ub)
        if root_x is None:
            return SolveResult(status="infeasible", message="root relaxation infeasible")
        heap = [(root_bound, counter, problem.lb.copy(), problem.ub.copy(), root_x)]
        explored = 0
        best_bound = root_bound
        while heap:
            bound, _, lo, hi, xr = heapq.heappop(heap)
            best_bound = bound
            if inc_x is not None and (inc_obj - bound) <= gap * max(1.0, abs(inc_obj)):
                break
            explored += 1
            if explored > self.max_nodes:
                break
            if time_limit is not None and time.monotonic() - t0 > time_limit:
                break
            frac = np.abs(xr[int_idx] - np.round(xr[int_idx]))
            j = int(np.argmax(frac))
            if frac[j] < 1e-5:
                if bound < inc_obj:
                    inc_obj, inc_x = bound, xr
                continue
            var = int(int_idx[j])
            split = xr[var]
            for lo_v, hi_v in (
                (lo[var], math.floor(split)),
                (math.ceil(split), hi[var]),
            ):
                if lo_v > hi_v:
                    continue
                lo2, hi2 = lo.copy(), hi.copy()
                lo2[var], hi2[var] = lo_v, hi_v
                b, xs = relax(lo2, hi2)
                if xs is None or (inc_x is not None and b >= inc_obj - 1e-12):
                    continue
                counter += 1
                heapq.heappush(heap, (b, counter, lo2, hi2, xs))
        if inc_x is None:
            return SolveResult(status="infeasible", nodes_explored=explored)
        rel_gap = max(0.0, (inc_obj - best_bound)) / max(1.0, abs(inc_obj))
        status = "optimal" if (not heap or rel_gap <= gap) else "feasible"
        return SolveResult(
            status=status,
            x=inc_x,
            objective=inc_obj,
            gap=rel_gap,
            nodes_explored=explored,
        )


def default_backend(problem: UcProblem) -> SolverBackend:
    if problem.conic:
        return BranchAndBoundConic()
    return HighsBackend()


def solve(
    problem: UcProblem,
    backend: SolverBackend | None = None,
    gap: float = 1e-4,
    time_limit: float | None = None,
    max_cut_rounds: int = 25,
    nadir_tol: float = 1e-6,
) -> SolveResult:
    """Solve one MPC-step problem, refining nadir cuts until exact.

    In cuts mode the MILP relaxation may admit operating points just
    outside the true nadir set.  Each round adds a supporting
    hyperplane at every violated point and first attempts a cheap
    repair: re-dispatching at the incumbent commitment (LP).  Only
    when the repair stays violated or turns infeasible is the MILP
    solved again.  The loop ends when the closed-form nadir check
    holds at all nodes or after ``max_cut_rounds`` rounds.
    """
    if backend is None:
        backend = default_backend(problem)
    if problem.conic and "mixed-integer-conic" not in backend.capabilities:
        raise ValueError("backend lacks mixed-integer-conic capability")
    refine = (
        problem.options.frequency_secured
        and problem.options.nadir_mode == "cuts"
        and not problem.conic
    )
    result = backend.solve_once(problem, gap=gap, time_limit=time_limit)
    if not result.ok or not refine:
        return result

    def violated(x: np.ndarray):
        out = []
        for node in range(len(problem.tree.nodes)):
            st = problem.fr_state(x, node)
            if not nadir_ok(st, problem.spec.freq, tol=nadir_tol):
                out.append(st)
        return out

    repair = getattr(backend, "solve_fixed", None)
    seen: set[tuple[float, float, float]] = set()
    harvested: list = []
    x = result.x
    rounds = repairs = 0
    states = violated(x)
    while states and rounds < max_cut_rounds:
        rounds += 1
        fresh = 0
        for st in states:
            key = (round(st.h, 6), round(st.r_e, 6), round(st.r_p, 6))
            if key in seen:
                continue
            seen.add(key)
            cut = cut_at_state(st, problem.spec.freq)
            problem.add_nadir_cut(cut)
            harvested.append(cut)
            fresh += 1
        repaired = False
        if repair is not None and fresh > 0:
            rep = repair(problem, x)
            if rep.ok and not violated(rep.x):
                x, repaired = rep.x, True
                repairs += 1
        if not repaired:
            result = backend.solve_once(problem, gap=gap, time_limit=time_limit)
            if not result.ok:
                result.cut_rounds = rounds
                result.new_cuts = harvested
                return result
            x = result.x
        states = violated(x)
    result.x = x
    result.objective = float(problem.obj @ x)
    result.cut_rounds = rounds
    result.new_cuts = harvested
    if rounds:
        note = f"+{len(harvested)} nadir cuts, {repairs} repaired"
        if states:
            note += "; refinement incomplete"
        result.message = f"{result.message} [{note}]".strip()
    return result
