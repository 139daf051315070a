"""Continuous conic solver and branch-and-bound over switching binaries.

The continuous subproblem is solved by outer approximation: second-order cone
rows are enforced through supporting-hyperplane cuts on top of an LP core
(HiGHS via scipy).  Cuts are valid for the cone rows regardless of binary
fixings, so one cut pool is shared across the whole branch-and-bound tree.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .config import DEFAULTS, Config
from .relax import RelaxedModel, SocRow, VarKind


@dataclass
class CompiledModel:
    """Matrix view of a RelaxedModel, reused across subproblem solves."""
    model: RelaxedModel
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    # cone rows: stacked term matrix with per-row offsets, rhs matrix
    t_mat: sp.csr_matrix
    t_const: np.ndarray
    t_start: np.ndarray  # row i owns stacked rows t_start[i]:t_start[i+1]
    r_mat: sp.csr_matrix
    r_const: np.ndarray
    n: int


def compile_model(model: RelaxedModel) -> CompiledModel:
    n = model.n
    extra = len(model.quad_obj)  # epigraph vars for raw quadratic objective terms
    ntot = n + extra

    c = np.zeros(ntot)
    for i, coef in model.obj:
        c[i] = coef
    lb = np.array([v.lb for v in model.variables] + [0.0] * extra)
    ub = np.array([v.ub for v in model.variables] + [0.0] * extra)

    soc_rows = list(model.soc_rows)
    for k, q in enumerate(model.quad_obj):
        t_idx = n + k
        v = model.variables[q.idx]
        ub[t_idx] = q.coef * max(v.lb ** 2, v.ub ** 2)
        c[t_idx] += 1.0
        # t >= coef * x^2 in norm form ||(sqrt(coef)x, (t-1)/2)|| <= (t+1)/2
        term_x: tuple = (((q.idx, math.sqrt(q.coef)),), 0.0)
        term_t: tuple = (((t_idx, 0.5),), -0.5)
        soc_rows.append(SocRow(terms=(term_x, term_t),
                               rhs=(((t_idx, 0.5),), 0.5),
                               name=f"quadobj:{q.idx}"))

    eq_r, eq_c, eq_v, b_eq = [], [], [], []
    ub_r, ub_c, ub_v, b_ub = [], [], [], []
    for row in model.lin_rows:
        if row.lo == row.hi:
            r = len(b_eq)
            b_eq.append(row.lo)
            for i, coef in row.coefs:
                eq_r.append(r)
                eq_c.append(i)
                eq_v.append(coef)
        else:
            if math.isfinite(row.hi):
                r = len(b_ub)
                b_ub.append(row.hi)
                for i, coef in row.coefs:
                    ub_r.append(r)
                    ub_c.append(i)
                    ub_v.append(coef)
            if math.isfinite(row.lo):
                r = len(b_ub)
                b_ub.append(-row.lo)
                for i, coef in row.coefs:
                    ub_r.append(r)
                    ub_c.append(i)
                    ub_v.append(-coef)

    a_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(b_eq), ntot))
    a_ub = sp.csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(b_ub), ntot))

    t_r, t_c, t_v, t_const, t_start = [], [], [], [], [0]
    r_r, r_c, r_v, r_const = [], [], [], []
    for k, row in enumerate(soc_rows):
        for coefs, const in row.terms:
            r = len(t_const)
            t_const.append(const)
            for i, coef in coefs:
                t_r.append(r)
                t_c.append(i)
                t_v.append(coef)
        t_start.append(len(t_const))
        rc, r0 = row.rhs
        r_const.append(r0)
        for i, coef in rc:
            r_r.append(k)
            r_c.append(i)
            r_v.append(coef)

    return CompiledModel(
        model=model, c=c, lb=lb, ub=ub,
        a_eq=a_eq, b_eq=np.array(b_eq), a_ub=a_ub, b_ub=np.array(b_ub),
        t_mat=sp.csr_matrix((t_v, (t_r, t_c)), shape=(len(t_const), ntot)),
        t_const=np.array(t_const), t_start=np.array(t_start, dtype=np.int64),
        r_mat=sp.csr_matrix((r_v, (r_r, r_c)), shape=(len(soc_rows), ntot)),
        r_const=np.array(r_const), n=ntot)


class CutPool:
    """Supporting-hyperplane cuts for cone rows; globally valid."""

    def __init__(self, n: int):
        self.n = n
        self.rows: list[sp.csr_matrix] = []
        self.rhs: list[float] = []
        self._cache: sp.csr_matrix | None = None

    def add(self, coefs: sp.csr_matrix, rhs: float) -> None:
        self.rows.append(coefs)
        self.rhs.append(rhs)
        self._cache = None

    def matrix(self) -> sp.csr_matrix | None:
        if not self.rows:
            return None
        if self._cache is None or self._cache.shape[0] != len(self.rows):
            self._cache = sp.vstack(self.rows, format="csr")
        return self._cache

    def __len__(self):
        return len(self.rows)


@dataclass
class ContResult:
    status: str  # OPTIMAL | INFEASIBLE | FAILED
    x: np.ndarray | None
    objective: float
    max_violation: float
    iterations: int


def _cone_violations(cm: CompiledModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = cm.t_mat @ x + cm.t_const
    rhs = cm.r_mat @ x + cm.r_const
    nsoc = len(cm.r_const)
    norms = np.empty(nsoc)
    for k in range(nsoc):
        norms[k] = math.sqrt(float(np.sum(u[cm.t_start[k]:cm.t_start[k + 1]] ** 2)))
    viol = (norms - rhs) / np.maximum(1.0, np.abs(rhs))
    return viol, u, rhs


def _add_cuts(cm: CompiledModel, pool: CutPool, x: np.ndarray,
              viol: np.ndarray, u: np.ndarray, trigger: float) -> int:
    added = 0
    for k in np.flatnonzero(viol > trigger):
        s, e = cm.t_start[k], cm.t_start[k + 1]
        uk = u[s:e]
        nrm = math.sqrt(float(np.sum(uk ** 2)))
        if nrm <= 1e-14:
            # cone implies rhs >= 0; enforce it directly
            coefs = -cm.r_mat.getrow(k)
            pool.add(coefs, cm.r_const[k])
            added += 1
            continue
        grad = uk / nrm
        # grad . (Tx + tconst) <= Rx + rconst
        lhs = (sp.csr_matrix(grad) @ cm.t_mat[s:e]) - cm.r_mat.getrow(k)
        rhs = cm.r_const[k] - float(grad @ cm.t_const[s:e])
        pool.add(lhs.tocsr(), rhs)
        added += 1
    return added


def solve_continuous(cm: CompiledModel, pool: CutPool | None = None,
                     fixed: Mapping[int, float] | None = None,
                     config: Config = DEFAULTS) -> ContResult:
    """Outer-approximation solve of the conic model with binaries relaxed
    to their boxes (or pinned via `fixed`)."""
    pool = pool if pool is not None else CutPool(cm.n)
    lb, ub = cm.lb.copy(), cm.ub.copy()
    if fixed:
        for i, val in fixed.items():
            lb[i] = ub[i] = val
    bounds = np.column_stack([lb, ub])

    x = None
    for it in range(1, config.oa_max_iter + 1):
        cuts = pool.matrix()
        if cuts is None:
            a_ub, b_ub = cm.a_ub, cm.b_ub
        else:
            a_ub = sp.vstack([cm.a_ub, cuts], format="csr")
            b_ub = np.concatenate([cm.b_ub, np.array(pool.rhs)])
        res = linprog(cm.c,
                      A_ub=a_ub if a_ub.shape[0] else None,
                      b_ub=b_ub if a_ub.shape[0] else None,
                      A_eq=cm.a_eq if cm.a_eq.shape[0] else None,
                      b_eq=cm.b_eq if cm.a_eq.shape[0] else None,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return ContResult("INFEASIBLE", None, math.inf, math.inf, it)
        if res.status != 0:
            return ContResult("FAILED", None, math.nan, math.inf, it)
        x = res.x
        viol, u, _ = _cone_violations(cm, x)
        worst = float(viol.max()) if viol.size else 0.0
        if worst <= config.oa_feas_tol:
            return ContResult("OPTIMAL", x, float(res.fun) + cm.model.obj_const,
                              worst, it)
        _add_cuts(cm, pool, x, viol, u, max(config.oa_cut_trigger,
                                            0.01 * config.oa_feas_tol))
    # tolerance not reached within the iteration budget: report best point
    viol, _, _ = _cone_violations(cm, x)
    return ContResult("FAILED", x, math.nan, float(viol.max()), config.oa_max_iter)


# ---------------------------------------------------------------------------
# Branch and bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BnBNode:
    fixed: tuple[tuple[int, float], ...]
    bound: float
    depth: int


@dataclass
class Solution:
    objective: float
    bound: float
    gap: float
    x: np.ndarray
    model: RelaxedModel

    def value(self, tag: str, key: str) -> float:
        return self.model.value(self.x, tag, key)

    @property
    def z(self) -> dict[str, float]:
        return {br: round(self.value("z", br))
                for br in self.model.net.branches}

    @property
    def switched_off(self) -> list[str]:
        return [br for br, zv in self.z.items() if zv < 0.5]

    def dispatch_cost(self) -> float:
        net = self.model.net
        total = 0.0
        for g in net.generators.values():
            e = net.gen_edge_of(g)
            fp = self.value("fp", g.id)
            total += (g.c2 * (fp * net.mva_base) ** 2 + g.c1 * fp * net.mva_base
                      + g.c0 * round(self.value("z", e.id)))
        return total

    def shed_cost(self) -> float:
        net = self.model.net
        total = 0.0
        for bus in net.buses.values():
            sgn = 1.0 if bus.d_q >= 0 else -1.0
            total += net.mu * net.mva_base * (self.value("lp", bus.id)
                                              + sgn * self.value("lq", bus.id))
        return total

    def shed_totals(self) -> tuple[float, float]:
        net = self.model.net
        lp = sum(self.value("lp", b) for b in net.buses)
        lq = sum(abs(self.value("lq", b)) for b in net.buses)
        return lp, lq


@dataclass
class SolveReport:
    incumbent: Solution | None
    bound: float
    gap: float
    nodes: int
    wall_time: float
    reason: str  # OPTIMAL | GAP_REACHED | LIMIT | INFEASIBLE

    @property
    def objective(self) -> float:
        return self.incumbent.objective if self.incumbent else math.inf


def _relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1e-9)


def branch_and_bound(model: RelaxedModel, gap_target: float | None = None,
                     node_limit: int | None = None,
                     time_limit: float | None = None,
                     config: Config = DEFAULTS) -> SolveReport:
    """Best-bound search, most-fractional branching (ties to lowest index),
    rounding heuristic for incumbents, periodic depth-first dives."""
    gap_target = config.gap_target if gap_target is None else gap_target
    node_limit = config.node_limit if node_limit is None else node_limit
    time_limit = config.time_limit if time_limit is None else time_limit

    t0 = time.monotonic()
    cm = compile_model(model)
    pool = CutPool(cm.n)
    free = list(model.free_binaries)
    itol = config.integrality_tol

    inc_obj, inc_x = math.inf, None

    root = solve_continuous(cm, pool, None, config)
    if root.status == "INFEASIBLE":
        return SolveReport(None, math.inf, math.inf, 1, time.monotonic() - t0,
                           "INFEASIBLE")
    if root.status == "FAILED":
        return SolveReport(None, -math.inf, math.inf, 1, time.monotonic() - t0,
                           "LIMIT")

    def try_incumbent(x, obj) -> None:
        nonlocal inc_obj, inc_x
        if obj < inc_obj - 1e-12 * max(1.0, abs(obj)):
            inc_obj, inc_x = obj, x.copy()

    def round_and_fix(x, base_fixed: Mapping[int, float]) -> None:
        fixed = dict(base_fixed)
        for i in free:
            fixed[i] = float(round(x[i]))
        res = solve_continuous(cm, pool, fixed, config)
        if res.status == "OPTIMAL":
            try_incumbent(res.x, res.objective)

    def fractional(x) -> list[int]:
        return [i for i in free if abs(x[i] - round(x[i])) > itol]

    frac = fractional(root.x)
    if not frac:
        try_incumbent(root.x, root.objective)
        return SolveReport(_make_solution(model, inc_x, inc_obj, root.objective),
                           root.objective, 0.0, 1, time.monotonic() - t0, "OPTIMAL")
    round_and_fix(root.x, {})

    # heap of (bound, seq, node); seq keeps ordering deterministic
    seq = 0
    heap: list[tuple[float, int, BnBNode]] = []
    stack: list[tuple[float, int, BnBNode]] = []  # newest children for dives
    in_heap: set[int] = set()

    def push(node: BnBNode):
        nonlocal seq
        seq += 1
        entry = (node.bound, seq, node)
        heapq.heappush(heap, entry)
        stack.append(entry)
        in_heap.add(seq)

    def branch(node: BnBNode, x):
        frac = fractional(x)
        if not frac:
            return
        pick = min(frac, key=lambda i: (abs(abs(x[i] - math.floor(x[i])) - 0.5), i))
        for val in (0.0, 1.0):
            push(BnBNode(node.fixed + ((pick, val),), node.bound, node.depth + 1))

    root_node = BnBNode((), root.objective, 0)
    branch(root_node, root.x)

    nodes = 1
    reason = "LIMIT"
    while heap:
        bound = heap[0][0]
        gap = _relative_gap(inc_obj, min(bound, inc_obj))
        if gap <= gap_target:
            reason = "GAP_REACHED" if gap > 1e-12 else "OPTIMAL"
            break
        if nodes >= node_limit or time.monotonic() - t0 > time_limit:
            reason = "LIMIT"
            break

        # periodic dive: expand the most recent open child for incumbents
        use_dive = config.dive_period > 0 and nodes % config.dive_period == 0
        entry = None
        if use_dive:
            while stack:
                cand = stack.pop()
                if cand[1] in in_heap and cand[2].bound < inc_obj:
                    entry = cand
                    break
        if entry is None:
            entry = heapq.heappop(heap)
            while entry[1] not in in_heap:
                entry = heapq.heappop(heap)
        else:
            heap.remove(entry)
            heapq.heapify(heap)
        in_heap.discard(entry[1])
        node = entry[2]
        if node.bound >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
            continue

        nodes += 1
        res = solve_continuous(cm, pool, dict(node.fixed), config)
        if res.status != "OPTIMAL":
            continue
        if res.objective >= inc_obj - 1e-9 * max(1.0, abs(inc_obj)):
            continue
        frac = fractional(res.x)
        if not frac:
            try_incumbent(res.x, res.objective)
            continue
        if use_dive:
            round_and_fix(res.x, dict(node.fixed))
        child = BnBNode(node.fixed, max(node.bound, res.objective), node.depth)
        branch(child, res.x)
    else:
        reason = "OPTIMAL" if inc_x is not None else "INFEASIBLE"

    open_bounds = [e[0] for e in heap]
    bound = min(open_bounds) if open_bounds else inc_obj
    bound = min(bound, inc_obj)
    gap = _relative_gap(inc_obj, bound)
    if inc_x is None:
        return SolveReport(None, bound, math.inf, nodes,
                           time.monotonic() - t0, reason)
    sol = _make_solution(model, inc_x, inc_obj, bound)
    return SolveReport(sol, bound, gap, nodes, time.monotonic() - t0, reason)


def _make_solution(model: RelaxedModel, x: np.ndarray, obj: float,
                   bound: float) -> Solution:
    return Solution(objective=obj, bound=bound,
                    gap=_relative_gap(obj, bound), x=x[:model.n], model=model)


def solve_case(model: RelaxedModel, gap_target: float | None = None,
               config: Config = DEFAULTS, **kw) -> SolveReport:
    return branch_and_bound(model, gap_target=gap_target, config=config, **kw)
