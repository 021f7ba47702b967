"""Desk-scale exact solver: revised simplex plus branch-and-bound.

The LP core is a bounded-variable revised simplex over the equality form
A x + s = b (one slack per row; equality rows carry a slack fixed at zero).
Cold starts run a two-phase primal with an artificial basis; branch-and-
bound re-solves children with a dual simplex warm start from the parent
basis (a bound change leaves the basis dual feasible). The basis inverse
is kept dense, updated in product form, and refactorized every 50 pivots;
Dantzig pricing falls back to Bland's rule after 1000 degenerate steps.

Branch-and-bound uses best-bound node selection (ties: deeper node first,
then insertion order), branches on the most fractional integer variable
(ties: lowest variable index) and is deterministic single-threaded.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .milp import MilpModel

logger = logging.getLogger("ventalloc.solver")

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
INT_TOL = 1e-6
REFACTOR_EVERY = 50
BLAND_AFTER_STALLS = 1000
INF = float("inf")

AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3


class SolverError(RuntimeError):
    """Solver invariant broken or seed rejected."""


@dataclass
class LpSolution:
    status: str                  # optimal | infeasible | unbounded | iteration-limit
    objective: float
    values: np.ndarray | None
    iterations: int


@dataclass
class MipResult:
    incumbent: LpSolution | None
    bound: float
    gap: float
    nodes_explored: int
    wall_time: float
    status: str = "optimal"      # optimal | limit | infeasible
    log: list[str] = field(default_factory=list)
    start: tuple | None = None   # root basis snapshot, reusable across solves

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": None if self.incumbent is None else self.incumbent.objective,
            "bound": self.bound,
            "gap": self.gap,
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
        }


@dataclass(frozen=True)
class WarmStart:
    values: np.ndarray
    objective: float


class _Csc:
    """Minimal compressed-sparse-column matrix (numpy only)."""

    def __init__(self, m: int, columns: list[list[tuple[int, float]]]):
        self.m = m
        self.n = len(columns)
        indptr = [0]
        rows: list[int] = []
        data: list[float] = []
        for col in columns:
            for r, v in col:
                rows.append(r)
                data.append(v)
            indptr.append(len(rows))
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.data = np.asarray(data, dtype=float)
        self.lengths = np.diff(self.indptr)

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.indptr[j], self.indptr[j + 1]
        return self.rows[a:b], self.data[a:b]

    def vec_mat(self, v: np.ndarray) -> np.ndarray:
        """v @ A for a length-m vector v (pricing and dual pivot rows)."""
        out = np.zeros(self.n)
        if self.data.size == 0:
            return out
        contrib = self.data * v[self.rows]
        nz = self.lengths > 0
        out[nz] = np.add.reduceat(contrib, self.indptr[:-1][nz])
        return out

    def accumulate(self, x: np.ndarray, cols: np.ndarray, out: np.ndarray) -> None:
        """out += A[:, cols] @ x[cols]."""
        for j in cols:
            a, b = self.indptr[j], self.indptr[j + 1]
            out[self.rows[a:b]] += self.data[a:b] * x[j]


class _Tableau:
    """Computational form: structurals, then one slack per row."""

    def __init__(self, model: MilpModel, relax: bool):
        m = model.n_cons
        n_struct = model.n_vars
        columns: list[list[tuple[int, float]]] = [[] for _ in range(n_struct + m)]
        b = np.zeros(m)
        lo = np.empty(n_struct + m)
        hi = np.empty(n_struct + m)
        for j, var in enumerate(model.variables):
            lo[j], hi[j] = var.lower, var.upper
        for i, con in enumerate(model.constraints):
            for idx, coef in con.terms:
                columns[idx].append((i, coef))
            s = n_struct + i
            columns[s].append((i, 1.0))
            b[i] = con.rhs
            if con.sense == "<=":
                lo[s], hi[s] = 0.0, INF
            elif con.sense == ">=":
                lo[s], hi[s] = -INF, 0.0
            else:
                lo[s], hi[s] = 0.0, 0.0
        c = np.zeros(n_struct + m)
        for idx, coef in model.objective.items():
            c[idx] = coef
        self.A = _Csc(m, columns)
        self.b = b
        self.c = c
        self.lo = lo
        self.hi = hi
        self.m = m
        self.n = n_struct + m
        self.n_struct = n_struct
        self.integers = [] if relax else model.integer_indices()

    def extended(self) -> _Csc:
        """Columns plus one +1 artificial per row (phase-1 layout)."""
        cols: list[list[tuple[int, float]]] = []
        for j in range(self.n):
            r, d = self.A.col(j)
            cols.append(list(zip(r.tolist(), d.tolist())))
        for i in range(self.m):
            cols.append([(i, 1.0)])
        return _Csc(self.m, cols)


class _Basis:
    """Basis bookkeeping with an explicit dense inverse over A_ext."""

    def __init__(self, tab: _Tableau, A: _Csc, lo: np.ndarray, hi: np.ndarray):
        self.b = tab.b
        self.A = A
        self.lo = lo
        self.hi = hi
        self.m = A.m
        self.n = A.n
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.status = np.full(self.n, AT_LOWER, dtype=np.int8)
        self.xN = np.zeros(self.n)
        self.binv = np.eye(self.m)
        self.xB = np.zeros(self.m)
        self.pivots_since_refactor = 0
        self._rank1: np.ndarray | None = None

    def nonbasic_value(self, j: int) -> float:
        if self.status[j] == AT_LOWER:
            return self.lo[j]
        if self.status[j] == AT_UPPER:
            return self.hi[j]
        return 0.0

    def set_nonbasic(self, j: int) -> None:
        if np.isfinite(self.lo[j]):
            self.status[j] = AT_LOWER
        elif np.isfinite(self.hi[j]):
            self.status[j] = AT_UPPER
        else:
            self.status[j] = AT_ZERO
        self.xN[j] = self.nonbasic_value(j)

    def refactorize(self) -> None:
        dense = np.zeros((self.m, self.m))
        for k, j in enumerate(self.basis):
            r, d = self.A.col(j)
            dense[r, k] = d
        try:
            self.binv = np.linalg.inv(dense)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis encountered") from exc
        self.recompute_xb()
        self.pivots_since_refactor = 0

    def recompute_xb(self) -> None:
        rhs = self.b.copy()
        nonbasic = np.flatnonzero((self.status != BASIC) & (self.xN != 0.0))
        self.A.accumulate(-self.xN, nonbasic, rhs)
        self.xB = self.binv @ rhs

    def full_values(self) -> np.ndarray:
        x = self.xN.copy()
        x[self.basis] = self.xB
        return x

    def ftran(self, j: int) -> np.ndarray:
        r, d = self.A.col(j)
        if len(r) == 0:
            return np.zeros(self.m)
        return self.binv[:, r] @ d

    def duals(self, c: np.ndarray) -> np.ndarray:
        return c[self.basis] @ self.binv

    def pivot(self, r: int, q: int, alpha: np.ndarray, leave_status: int) -> bool:
        """Replace basis[r] by q; alpha = binv @ A_q. True if refactorized."""
        out = self.basis[r]
        piv = alpha[r]
        if abs(piv) < PIVOT_TOL:
            raise SolverError("numerically singular pivot")
        self.status[out] = leave_status
        self.xN[out] = self.lo[out] if leave_status == AT_LOWER else (
            self.hi[out] if leave_status == AT_UPPER else 0.0)
        self.basis[r] = q
        self.status[q] = BASIC
        row_r = self.binv[r] / piv
        scale = alpha.copy()
        scale[r] = 0.0
        if self._rank1 is None or self._rank1.shape != self.binv.shape:
            self._rank1 = np.empty_like(self.binv)
        np.multiply(scale[:, None], row_r[None, :], out=self._rank1)
        self.binv -= self._rank1
        self.binv[r] = row_r
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_EVERY:
            self.refactorize()
            return True
        return False


def _primal_simplex(bs: _Basis, c: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Minimize c from the current (primal feasible) basis."""
    A, lo, hi = bs.A, bs.lo, bs.hi
    it = 0
    stalls = 0
    bland = False
    while it < max_iter:
        it += 1
        pi = bs.duals(c)
        d = c - A.vec_mat(pi)
        status = bs.status
        can_inc = ((status == AT_LOWER) | (status == AT_ZERO)) & (d < -OPT_TOL)
        can_dec = ((status == AT_UPPER) | (status == AT_ZERO)) & (d > OPT_TOL)
        eligible = np.flatnonzero(can_inc | can_dec)
        if eligible.size == 0:
            return "optimal", it
        if bland:
            q = int(eligible[0])
        else:
            q = int(eligible[np.argmax(np.abs(d[eligible]))])
        direction = 1.0 if can_inc[q] else -1.0
        alpha = bs.ftran(q)
        step = direction * alpha
        basis_lo = lo[bs.basis]
        basis_hi = hi[bs.basis]
        dec_mask = step > PIVOT_TOL
        inc_mask = step < -PIVOT_TOL
        t_lo = np.full(bs.m, INF)
        t_hi = np.full(bs.m, INF)
        with np.errstate(invalid="ignore"):
            t_lo[dec_mask] = (bs.xB[dec_mask] - basis_lo[dec_mask]) / step[dec_mask]
            t_hi[inc_mask] = (basis_hi[inc_mask] - bs.xB[inc_mask]) / (-step[inc_mask])
        t_lo[np.isnan(t_lo)] = INF
        t_hi[np.isnan(t_hi)] = INF
        t_basic = np.maximum(np.minimum(t_lo, t_hi), 0.0)
        leave_r = int(np.argmin(t_basic)) if bs.m else -1
        limit = t_basic[leave_r] if bs.m else INF
        flip = hi[q] - lo[q] if (np.isfinite(lo[q]) and np.isfinite(hi[q])) else INF
        if flip < limit - PIVOT_TOL:
            bs.xB -= step * flip
            bs.status[q] = AT_UPPER if direction > 0 else AT_LOWER
            bs.xN[q] = hi[q] if direction > 0 else lo[q]
            stalls = 0
            continue
        if limit == INF:
            return "unbounded", it
        if limit <= 1e-12:
            stalls += 1
            if stalls >= BLAND_AFTER_STALLS:
                bland = True
        else:
            stalls = 0
        leave_status = AT_LOWER if t_lo[leave_r] <= t_hi[leave_r] else AT_UPPER
        entering_value = bs.nonbasic_value(q) + direction * limit
        bs.xB -= step * limit
        refactored = bs.pivot(leave_r, q, alpha, leave_status)
        if not refactored:
            bs.xB[leave_r] = entering_value
    return "iteration-limit", it


def _dual_simplex(bs: _Basis, c: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Restore primal feasibility from a dual-feasible basis."""
    A, lo, hi = bs.A, bs.lo, bs.hi
    it = 0
    while it < max_iter:
        it += 1
        basis_lo = lo[bs.basis]
        basis_hi = hi[bs.basis]
        viol_lo = basis_lo - bs.xB
        viol_hi = bs.xB - basis_hi
        viol = np.maximum(viol_lo, viol_hi)
        viol[~np.isfinite(viol)] = -INF
        r = int(np.argmax(viol))
        if viol[r] <= FEAS_TOL:
            return "optimal", it
        below = viol_lo[r] > viol_hi[r]
        pi = bs.duals(c)
        d = c - A.vec_mat(pi)
        rho = A.vec_mat(bs.binv[r])
        status = bs.status
        sigma = 1.0 if below else -1.0
        elig_lower = (((status == AT_LOWER) | (status == AT_ZERO))
                      & (sigma * rho < -PIVOT_TOL))
        elig_upper = (((status == AT_UPPER) | (status == AT_ZERO))
                      & (sigma * rho > PIVOT_TOL))
        eligible = np.flatnonzero(elig_lower | elig_upper)
        if eligible.size == 0:
            return "infeasible", it
        ratios = np.abs(d[eligible]) / np.abs(rho[eligible])
        q = int(eligible[np.argmin(ratios)])
        direction = 1.0 if elig_lower[q] else -1.0
        target = basis_lo[r] if below else basis_hi[r]
        alpha = bs.ftran(q)
        denom = -alpha[r] * direction
        if abs(denom) < PIVOT_TOL:
            return "stalled", it
        t = max((target - bs.xB[r]) / denom, 0.0)
        flip = hi[q] - lo[q] if (np.isfinite(lo[q]) and np.isfinite(hi[q])) else INF
        if flip < t - PIVOT_TOL:
            bs.xB -= direction * flip * alpha
            bs.status[q] = AT_UPPER if direction > 0 else AT_LOWER
            bs.xN[q] = hi[q] if direction > 0 else lo[q]
            continue
        entering_value = bs.nonbasic_value(q) + direction * t
        bs.xB -= direction * t * alpha
        leave_status = AT_LOWER if below else AT_UPPER
        refactored = bs.pivot(r, q, alpha, leave_status)
        if not refactored:
            bs.xB[r] = entering_value
    return "iteration-limit", it


def _cold_start(tab: _Tableau, lo: np.ndarray, hi: np.ndarray,
                max_iter: int) -> tuple[str, _Basis, int]:
    """Two-phase start from an all-artificial basis."""
    m, n = tab.m, tab.n
    A_ext = tab.extended()
    lo_ext = np.concatenate([lo, np.zeros(m)])
    hi_ext = np.concatenate([hi, np.zeros(m)])
    bs = _Basis(tab, A_ext, lo_ext, hi_ext)
    for j in range(n):
        bs.set_nonbasic(j)
    residual = tab.b.copy()
    nz = np.flatnonzero(bs.xN[:n] != 0.0)
    A_ext.accumulate(-bs.xN, nz, residual)
    # artificial i starts basic at the residual; its bounds allow only its
    # own sign so the phase-1 cost sums absolute infeasibility
    bs.lo[n:] = np.where(residual >= 0.0, 0.0, -INF)
    bs.hi[n:] = np.where(residual >= 0.0, INF, 0.0)
    bs.basis = np.arange(n, n + m, dtype=np.int64)
    bs.status[n:] = BASIC
    bs.binv = np.eye(m)
    bs.xB = residual.copy()

    c1 = np.concatenate([np.zeros(n), np.where(residual >= 0.0, 1.0, -1.0)])
    verdict, it1 = _primal_simplex(bs, c1, max_iter)
    if verdict == "iteration-limit":
        return verdict, bs, it1
    x_art = bs.full_values()[n:]
    if float(np.abs(x_art).sum()) > 1e-6:
        return "infeasible", bs, it1
    bs.lo[n:] = 0.0
    bs.hi[n:] = 0.0
    for j in np.flatnonzero(bs.status[n:] != BASIC) + n:
        bs.status[j] = AT_LOWER
        bs.xN[j] = 0.0
    c2 = np.concatenate([tab.c, np.zeros(m)])
    verdict, it2 = _primal_simplex(bs, c2, max_iter)
    return verdict, bs, it1 + it2


def _warm_solve(tab: _Tableau, lo: np.ndarray, hi: np.ndarray,
                start: tuple[np.ndarray, np.ndarray] | None,
                max_iter: int) -> tuple[str, _Basis, int]:
    """Dual-simplex warm start from (basis, status); cold start as fallback."""
    if start is not None:
        basis, status = start
        A_ext = tab.extended()
        lo_ext = np.concatenate([lo, np.zeros(tab.m)])
        hi_ext = np.concatenate([hi, np.zeros(tab.m)])
        bs = _Basis(tab, A_ext, lo_ext, hi_ext)
        bs.basis = basis.copy()
        bs.status = status.copy()
        ok = True
        try:
            # keep parent statuses (dual feasibility), refresh values to the
            # child's bounds
            for j in np.flatnonzero(bs.status != BASIC):
                bs.xN[j] = bs.nonbasic_value(int(j))
            bs.refactorize()
        except SolverError:
            ok = False
        if ok:
            c2 = np.concatenate([tab.c, np.zeros(tab.m)])
            try:
                verdict, it = _dual_simplex(bs, c2, max_iter)
                if verdict == "optimal":
                    verdict2, it2 = _primal_simplex(bs, c2, max_iter)
                    if verdict2 in ("optimal", "unbounded"):
                        return verdict2, bs, it + it2
                elif verdict == "infeasible":
                    return "infeasible", bs, it
            except SolverError:
                pass
    return _cold_start(tab, lo, hi, max_iter)


def _check_primal(tab: _Tableau, bs: _Basis) -> bool:
    x = bs.full_values()
    if np.any(x[:tab.n] < bs.lo[:tab.n] - 10 * FEAS_TOL):
        return False
    if np.any(x[:tab.n] > bs.hi[:tab.n] + 10 * FEAS_TOL):
        return False
    resid = tab.b.copy()
    nz = np.flatnonzero(x[:tab.n] != 0.0)
    tab.A.accumulate(-x, nz, resid)
    art = x[tab.n:]
    resid -= art
    return bool(np.max(np.abs(resid), initial=0.0) <= 1e-6)


def _lp_solution(tab: _Tableau, bs: _Basis, verdict: str, it: int) -> LpSolution:
    if verdict == "infeasible":
        return LpSolution("infeasible", INF, None, it)
    if verdict == "unbounded":
        return LpSolution("unbounded", -INF, None, it)
    if verdict != "optimal":
        return LpSolution("iteration-limit", INF, None, it)
    bs.refactorize()
    x = bs.full_values()
    obj = float(tab.c @ x[:tab.n])
    return LpSolution("optimal", obj, x[:tab.n_struct].copy(), it)


def solve_lp(model: MilpModel, max_iter: int = 200000) -> LpSolution:
    """Solve the LP relaxation with the embedded simplex."""
    tab = _Tableau(model, relax=True)
    verdict, bs, it = _cold_start(tab, tab.lo.copy(), tab.hi.copy(), max_iter)
    sol = _lp_solution(tab, bs, verdict, it)
    if sol.status == "optimal" and not _check_primal(tab, bs):
        raise SolverError("simplex returned an infeasible optimum")
    return sol


def warm_start(model: MilpModel, assignment: np.ndarray) -> WarmStart:
    """Validate a feasible integral assignment as an incumbent seed."""
    values = np.asarray(assignment, dtype=float)
    if values.shape != (model.n_vars,):
        raise SolverError(
            f"seed has shape {values.shape}, model has {model.n_vars} variables")
    worst, name = model.constraint_violation(values)
    if worst > INT_TOL:
        raise SolverError(f"infeasible warm start: violates {name} by {worst:.3e}")
    for j in model.integer_indices():
        if abs(values[j] - round(values[j])) > INT_TOL:
            raise SolverError(f"warm start not integral on {model.variables[j].name}")
    return WarmStart(values=values.copy(), objective=model.objective_value(values))


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    start: tuple | None = field(compare=False, default=None)


def _round_repair(model: MilpModel, x: np.ndarray, integers: np.ndarray,
                  var_rows: list[list[int]]) -> np.ndarray | None:
    """Try to repair fractional integers by per-variable rounding.

    Each fractional variable is set to whichever neighbour integer leaves
    its own rows least violated (this resolves free linearization binaries
    without branching); the candidate is accepted only if fully feasible.
    """
    fracs = [int(j) for j in integers
             if abs(x[j] - round(x[j])) > INT_TOL]
    if not fracs:
        return None
    cand = x.copy()
    cons = model.constraints
    for j in fracs:
        options = sorted((np.floor(cand[j]), np.ceil(cand[j])),
                         key=lambda v: (abs(cand[j] - v), v))
        best_v, best_viol = options[0], INF
        for v in options:
            cand[j] = v
            viol = 0.0
            for i in var_rows[j]:
                lhs = sum(coef * cand[idx] for idx, coef in cons[i].terms)
                if cons[i].sense == "<=":
                    gap = lhs - cons[i].rhs
                elif cons[i].sense == ">=":
                    gap = cons[i].rhs - lhs
                else:
                    gap = abs(lhs - cons[i].rhs)
                viol = max(viol, gap)
            if viol < best_viol - 1e-12:
                best_v, best_viol = v, viol
        cand[j] = best_v
    worst, _ = model.constraint_violation(cand)
    return cand if worst <= INT_TOL else None


def solve_mip(model: MilpModel, time_limit: float = 600.0,
              gap_limit: float = 1e-9, node_limit: int = 1_000_000,
              warm: WarmStart | None = None,
              lp_max_iter: int = 200000,
              start: tuple | None = None) -> MipResult:
    """Best-first branch-and-bound over the model's integer variables.

    ``start`` may carry the (basis, status) snapshot of a previously solved
    model with the same rows/columns (different bounds or objective); the
    root then warm starts instead of running the two-phase cold start.
    """
    t0 = time.perf_counter()
    tab = _Tableau(model, relax=False)
    integers = np.asarray(tab.integers, dtype=np.int64)
    var_rows: list[list[int]] = [[] for _ in range(model.n_vars)]
    for i, con in enumerate(model.constraints):
        for idx, _ in con.terms:
            var_rows[idx].append(i)
    log: list[str] = []

    incumbent: LpSolution | None = None
    incumbent_obj = INF
    if warm is not None:
        incumbent = LpSolution("optimal", warm.objective, warm.values.copy(), 0)
        incumbent_obj = warm.objective

    def frac_var(x: np.ndarray) -> int:
        if integers.size == 0:
            return -1
        frac = np.abs(x[integers] - np.round(x[integers]))
        k = int(np.argmax(frac))
        return int(integers[k]) if frac[k] > INT_TOL else -1

    def emit(line: str) -> None:
        log.append(line)
        logger.info(line)

    heap: list[_Node] = []
    seq = 0

    def push(node_lo, node_hi, bound, depth, start):
        nonlocal seq
        seq += 1
        heapq.heappush(heap, _Node(bound, -depth, seq, node_lo, node_hi, start))

    push(tab.lo.copy(), tab.hi.copy(), -INF, 0, start)
    nodes_explored = 0
    best_bound = -INF
    status = "optimal"
    root_snap: tuple | None = None

    while heap:
        if time.perf_counter() - t0 > time_limit or nodes_explored >= node_limit:
            status = "limit"
            best_bound = max(best_bound, heap[0].bound)
            break
        node = heapq.heappop(heap)
        best_bound = max(best_bound, node.bound)
        if incumbent_obj < INF:
            gap_here = (incumbent_obj - node.bound) / max(1.0, abs(incumbent_obj))
            if gap_here <= gap_limit:
                break
        verdict, bs, _ = _warm_solve(tab, node.lo, node.hi, node.start, lp_max_iter)
        nodes_explored += 1
        if verdict == "infeasible":
            continue
        if verdict == "unbounded":
            raise SolverError("node LP unbounded; integer variables must be bounded")
        if verdict == "iteration-limit":
            status = "limit"
            break
        bs.recompute_xb()
        if not _check_primal(tab, bs):
            # numerically distrusted warm result: redo cold
            verdict, bs, _ = _cold_start(tab, node.lo, node.hi, lp_max_iter)
            if verdict == "infeasible":
                continue
            if verdict != "optimal":
                status = "limit"
                break
            bs.recompute_xb()
        x_full = bs.full_values()
        obj = float(tab.c @ x_full[:tab.n])
        if node.neg_depth == 0:
            best_bound = max(best_bound, obj)
            root_snap = (bs.basis.copy(), bs.status.copy())
        if obj >= incumbent_obj - 1e-12:
            continue
        x = x_full[:tab.n_struct]
        var_idx = frac_var(x)
        if var_idx < 0:
            incumbent = LpSolution("optimal", obj, x.copy(), 0)
            incumbent_obj = obj
            emit(f"node={nodes_explored} bound={best_bound:.6f} "
                 f"incumbent={incumbent_obj:.6f} "
                 f"time={time.perf_counter() - t0:.2f}s")
            continue
        repaired = _round_repair(model, x, integers, var_rows)
        if repaired is not None:
            r_obj = model.objective_value(repaired)
            if r_obj < incumbent_obj:
                incumbent = LpSolution("optimal", r_obj, repaired, 0)
                incumbent_obj = r_obj
                emit(f"node={nodes_explored} bound={best_bound:.6f} "
                     f"incumbent={incumbent_obj:.6f} (repair) "
                     f"time={time.perf_counter() - t0:.2f}s")
            if r_obj <= obj + 1e-9:
                # repair matched the node's LP bound: node solved exactly
                continue
        snap = (bs.basis.copy(), bs.status.copy())
        depth = -node.neg_depth + 1
        lo1, hi1 = node.lo.copy(), node.hi.copy()
        hi1[var_idx] = np.floor(x[var_idx] + INT_TOL)
        lo2, hi2 = node.lo.copy(), node.hi.copy()
        lo2[var_idx] = np.ceil(x[var_idx] - INT_TOL)
        push(lo1, hi1, obj, depth, snap)
        push(lo2, hi2, obj, depth, snap)

    if not heap and status == "optimal":
        best_bound = incumbent_obj if incumbent is not None else INF
    if incumbent is not None:
        # open-node bounds above the incumbent prove optimality, never more
        best_bound = min(best_bound, incumbent_obj)
    if incumbent is None:
        if status == "optimal":
            status = "infeasible"
            best_bound = INF
        gap = INF
    else:
        gap = max(0.0, (incumbent_obj - best_bound) / max(1.0, abs(incumbent_obj)))
    wall = time.perf_counter() - t0
    emit(f"final nodes={nodes_explored} bound={best_bound:.6f} "
         f"incumbent={incumbent_obj if incumbent else float('nan')} "
         f"gap={gap:.3e} time={wall:.2f}s")
    return MipResult(incumbent, best_bound, gap, nodes_explored, wall, status, log,
                     start=root_snap)
