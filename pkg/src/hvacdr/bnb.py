"""Best-bound branch and bound over the bounded-variable simplex.

Nodes are LP re-solves from the parent basis via the dual simplex after a
single binary bound change.  Selection is best-bound with newest-first tie
breaking; branching picks the most fractional binary.  A round-and-repair
heuristic at the root provides an early incumbent so gap reporting is
meaningful from the start.
"""

from __future__ import annotations

import heapq
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .simplex import SimplexCore, LpSolution, finish_solution, solve_lp_arrays

INT_TOL = 1e-6


@dataclass
class BnbConfig:
    rel_gap_target: float = 1e-4
    node_limit: int = 500_000
    time_limit_s: float = 600.0
    collect_invariants: bool = False   # per-node (primal, dual) pairs
    verbose_every: int = 0             # progress print cadence, 0 = silent
    dive_cols: tuple = ()              # continuous driver columns fixed in dives
    dive_every: int = 40               # node cadence of the dive heuristic


@dataclass
class NodeStat:
    node: int
    lp_objective: float
    dual_objective: float


@dataclass
class MipResult:
    status: str                  # optimal | feasible | infeasible | no_solution
    objective: float             # incumbent (minimize), nan if none
    bound: float                 # best proven lower bound
    gap: float
    x: np.ndarray | None
    nodes: int
    iterations: int
    wall_time_s: float
    log_rows: list = field(default_factory=list)
    node_stats: list = field(default_factory=list)
    bound_sequence: list = field(default_factory=list)
    infeasible_rows: tuple = ()

    def log_csv(self) -> str:
        buf = io.StringIO()
        buf.write("node,open,incumbent,bound,gap\n")
        for row in self.log_rows:
            buf.write(",".join(str(v) for v in row) + "\n")
        return buf.getvalue()


def solve_lp(model, relax_binaries=True) -> LpSolution:
    """Solve the LP (integrality relaxed) of a MilpModel."""
    a, senses, b, c, lb, ub = model.dense()
    sol = solve_lp_arrays(a, senses, b, c, lb, ub,
                          row_names=[r.name for r in model.rows])
    if sol.status == "optimal":
        sol.objective += model.obj_offset
    return sol


def _rel_gap(incumbent, bound):
    if not math.isfinite(incumbent):
        return math.inf
    return (incumbent - bound) / max(abs(incumbent), 1e-10)


class _Node:
    __slots__ = ("bound", "changes", "snap", "seq")

    def __init__(self, bound, changes, snap, seq):
        self.bound = bound
        self.changes = changes
        self.snap = snap
        self.seq = seq


def solve_mip(model, config: BnbConfig | None = None) -> MipResult:
    """Branch and bound to the configured relative gap.

    Only binary integrality is supported; general integers are out of scope
    for the schedule encodings this solver serves.
    """
    cfg = config or BnbConfig()
    t_start = time.perf_counter()
    a, senses, b, c, lb, ub = model.dense()
    bin_idx = np.flatnonzero(np.asarray(model.is_binary))
    core = SimplexCore(a, senses, b, c, lb, ub,
                       row_names=[r.name for r in model.rows])
    root_lb = core.lb[:core.n].copy()
    root_ub = core.ub[:core.n].copy()
    offset = model.obj_offset

    log_rows = []
    node_stats = []
    bound_seq = []

    status, bad_rows = core.phase1()
    if status == "infeasible":
        return MipResult(status="infeasible", objective=math.nan,
                         bound=math.inf, gap=math.nan, x=None, nodes=1,
                         iterations=core.iterations,
                         wall_time_s=time.perf_counter() - t_start,
                         infeasible_rows=bad_rows)
    status = core.primal()
    if status == "unbounded":
        return MipResult(status="unbounded", objective=-math.inf,
                         bound=-math.inf, gap=math.nan, x=None, nodes=1,
                         iterations=core.iterations,
                         wall_time_s=time.perf_counter() - t_start)
    root = finish_solution(core, status)
    root_snap = core.snapshot()

    incumbent_obj = math.inf
    incumbent_x = None

    def maybe_accept(sol):
        nonlocal incumbent_obj, incumbent_x
        if sol.objective < incumbent_obj - 1e-12 * max(1.0, abs(sol.objective)):
            incumbent_obj = sol.objective
            incumbent_x = sol.x.copy()
            if len(bin_idx):
                incumbent_x[bin_idx] = np.round(incumbent_x[bin_idx])
            return True
        return False

    dive_cols = np.array(sorted(cfg.dive_cols), dtype=int)

    def apply_changes(changes):
        core.lb[:core.n][bin_idx] = root_lb[bin_idx]
        core.ub[:core.n][bin_idx] = root_ub[bin_idx]
        if len(dive_cols):
            core.lb[:core.n][dive_cols] = root_lb[dive_cols]
            core.ub[:core.n][dive_cols] = root_ub[dive_cols]
        for j, (lo, hi) in changes.items():
            core.lb[j] = lo
            core.ub[j] = hi
            if core.vstat[j] != 2:
                # repoint the nonbasic status at a bound that still exists
                core.vstat[j] = 0 if core.vstat[j] == 0 else 1

    def resolve(snap):
        try:
            core.restore(snap)
            st = core.dual()
            if st == "optimal":
                st = core.primal()       # clean residual reduced-cost slack
            return st
        except RuntimeError:
            # numerical breakdown: retry cold from the slack basis
            st, _ = core.phase1()
            if st == "infeasible":
                return "infeasible"
            return core.primal()

    frac_root = np.abs(root.x[bin_idx] - np.round(root.x[bin_idx])) if len(bin_idx) else np.array([])
    if len(bin_idx) == 0 or frac_root.max(initial=0.0) <= INT_TOL:
        # pure LP or already integral at the root
        maybe_accept(root)
        if cfg.collect_invariants:
            node_stats.append(NodeStat(0, root.objective + offset,
                                       root.dual_objective + offset))
        bound_seq.append(root.objective + offset)
        log_rows.append((0, 0, incumbent_obj + offset, root.objective + offset, 0.0))
        return MipResult(status="optimal", objective=incumbent_obj + offset,
                         bound=root.objective + offset, gap=0.0,
                         x=incumbent_x, nodes=1, iterations=core.iterations,
                         wall_time_s=time.perf_counter() - t_start,
                         log_rows=log_rows, node_stats=node_stats,
                         bound_sequence=bound_seq)

    def dive(sol, base_changes, base_snap):
        """Fix the continuous driver columns at their LP values; the network
        equalities then force an integral activation pattern."""
        changes = dict(base_changes)
        for j in dive_cols:
            v = float(np.clip(sol.x[j], root_lb[j], root_ub[j]))
            changes[int(j)] = (v, v)
        apply_changes(changes)
        if resolve(base_snap) == "optimal":
            cand = finish_solution(core, "optimal")
            frac = np.abs(cand.x[bin_idx] - np.round(cand.x[bin_idx]))
            if frac.max(initial=0.0) <= 1e-5:
                maybe_accept(cand)

    # round-and-repair heuristic at the root: round the binaries, repair by
    # an LP re-solve; when driver columns are known, fall back to fixing
    # those instead (the repair then always lands on an integral pattern)
    rounded = np.round(root.x[bin_idx])
    heur_changes = {int(j): (float(v), float(v)) for j, v in zip(bin_idx, rounded)}
    apply_changes(heur_changes)
    if resolve(root_snap) == "optimal":
        maybe_accept(finish_solution(core, "optimal"))
    if len(dive_cols) and incumbent_x is None:
        dive(root, {}, root_snap)

    seq = 0
    heap = []
    heapq.heappush(heap, (root.objective, -seq, _Node(root.objective, {}, root_snap, seq)))
    nodes_done = 0
    last_bound = -math.inf
    stop_status = None

    while heap:
        global_bound = heap[0][0]
        gap = _rel_gap(incumbent_obj, global_bound)
        if gap <= cfg.rel_gap_target:
            stop_status = "optimal"
            break
        if nodes_done >= cfg.node_limit:
            stop_status = "limit"
            break
        if time.perf_counter() - t_start > cfg.time_limit_s:
            stop_status = "limit"
            break

        _, _, node = heapq.heappop(heap)
        if node.bound >= incumbent_obj - 1e-9 * max(1.0, abs(incumbent_obj)):
            continue
        nodes_done += 1
        last_bound = max(last_bound, node.bound)
        if cfg.verbose_every and nodes_done % cfg.verbose_every == 0:
            print(f"  node {nodes_done} open {len(heap)} inc {incumbent_obj + offset:.6f} "
                  f"bound {global_bound + offset:.6f} gap {gap:.2e} "
                  f"iters {core.iterations} t {time.perf_counter() - t_start:.1f}s")

        apply_changes(node.changes)
        st = resolve(node.snap)
        if st != "optimal":
            continue                    # infeasible child (or iteration stall)
        sol = finish_solution(core, st)
        if cfg.collect_invariants:
            node_stats.append(NodeStat(nodes_done, sol.objective + offset,
                                       sol.dual_objective + offset))
        bound_seq.append(min(global_bound, sol.objective) + offset)
        if sol.objective >= incumbent_obj - 1e-9 * max(1.0, abs(incumbent_obj)):
            log_rows.append((nodes_done, len(heap), incumbent_obj + offset,
                             global_bound + offset, round(gap, 9)))
            continue

        frac = np.abs(sol.x[bin_idx] - np.round(sol.x[bin_idx]))
        if frac.max(initial=0.0) <= INT_TOL:
            maybe_accept(sol)
            log_rows.append((nodes_done, len(heap), incumbent_obj + offset,
                             global_bound + offset, round(gap, 9)))
            continue

        j_rel = int(np.argmax(np.minimum(frac, 1.0 - frac)))
        j = int(bin_idx[j_rel])
        snap = core.snapshot()
        for fix in (0.0, 1.0):
            seq += 1
            changes = dict(node.changes)
            changes[j] = (fix, fix)
            child = _Node(sol.objective, changes, snap, seq)
            heapq.heappush(heap, (sol.objective, -seq, child))
        log_rows.append((nodes_done, len(heap), incumbent_obj + offset,
                         global_bound + offset, round(gap, 9)))
        if len(dive_cols) and cfg.dive_every and nodes_done % cfg.dive_every == 0:
            dive(sol, node.changes, snap)

    if heap:
        final_bound = min(heap[0][0], incumbent_obj)
    else:
        final_bound = incumbent_obj if math.isfinite(incumbent_obj) else last_bound
        stop_status = stop_status or "optimal"
    gap = _rel_gap(incumbent_obj, final_bound)

    if incumbent_x is None:
        status = "no_solution"
        obj_out = math.nan
    elif stop_status == "optimal" or gap <= cfg.rel_gap_target:
        status = "optimal"
        obj_out = incumbent_obj + offset
    else:
        status = "feasible"
        obj_out = incumbent_obj + offset
    return MipResult(status=status, objective=obj_out,
                     bound=final_bound + offset, gap=max(gap, 0.0),
                     x=incumbent_x, nodes=nodes_done + 1,
                     iterations=core.iterations,
                     wall_time_s=time.perf_counter() - t_start,
                     log_rows=log_rows, node_stats=node_stats,
                     bound_sequence=bound_seq,
                     )
