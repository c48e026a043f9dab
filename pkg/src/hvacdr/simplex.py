"""Bounded-variable primal/dual simplex over dense arrays.

Solves  min c.x  s.t.  A x {<=,=,>=} b,  l <= x <= u  with every structural
bound finite.  Rows get slacks (identity columns); phase 1 adds unit-cost
artificial columns only for rows whose initial slack value violates the
slack bounds.  The basis inverse is kept explicitly and refreshed every
REFACTOR pivots; pivoting is Dantzig with a deterministic Bland fallback
after a degeneracy streak.  The dual simplex re-optimizes after bound
changes (branching) from a stored basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TOL_FEAS = 1e-9          # bound violation considered infeasible
TOL_DJ = 1e-9            # reduced-cost optimality tolerance
TOL_PIV = 1e-9           # smallest usable pivot element
TOL_PIV_STABLE = 1e-7    # preferred pivot magnitude in the dual ratio test
REFACTOR = 64
AT_LB, AT_UB, BASIC = 0, 1, 2


@dataclass
class LpSolution:
    status: str                       # optimal | infeasible | unbounded | limit
    objective: float
    x: np.ndarray                     # structural values
    duals: np.ndarray                 # row multipliers
    reduced_costs: np.ndarray         # structural reduced costs
    iterations: int
    dual_objective: float = math.nan
    infeasible_rows: tuple = ()
    max_bound_violation: float = 0.0


class SimplexCore:
    """Mutable solver state; reused across branch-and-bound nodes."""

    def __init__(self, a, senses, b, c, lb, ub, row_names=None):
        self.a = np.asarray(a, float)
        self.m, self.n = self.a.shape
        self.b = np.asarray(b, float).copy()
        self.senses = list(senses)
        self.row_names = list(row_names) if row_names is not None else \
            [f"r{i}" for i in range(self.m)]
        # extended columns: structural | slack; artificials are appended later
        slack_lb = np.zeros(self.m)
        slack_ub = np.zeros(self.m)
        for i, s in enumerate(self.senses):
            if s == "L":
                slack_ub[i] = math.inf
            elif s == "G":
                slack_lb[i] = -math.inf
        self.lb = np.concatenate([np.asarray(lb, float), slack_lb])
        self.ub = np.concatenate([np.asarray(ub, float), slack_ub])
        self.c = np.concatenate([np.asarray(c, float), np.zeros(self.m)])
        self.nt = self.n + self.m
        # artificial columns are append-only so basis snapshots stay valid
        # across phase-1 reruns
        self.art_rows: list[int] = []     # artificial column -> row
        self.art_sign: list[float] = []
        self._art_index: dict = {}        # (row, sign) -> extended column
        self.basis = np.arange(self.n, self.nt)
        self.vstat = np.full(self.nt, AT_LB, dtype=np.int8)
        self.vstat[self.basis] = BASIC
        self.binv = np.eye(self.m)
        self.xb = np.zeros(self.m)
        self._pivots_since_refactor = 0
        self.iterations = 0

    # -- column access ---------------------------------------------------------

    def col(self, j):
        if j < self.n:
            return self.a[:, j]
        if j < self.nt:
            e = np.zeros(self.m)
            e[j - self.n] = 1.0
            return e
        e = np.zeros(self.m)
        k = j - self.nt
        e[self.art_rows[k]] = self.art_sign[k]
        return e

    def n_cols(self):
        return self.nt + len(self.art_rows)

    def nonbasic_value(self, j):
        if self.vstat[j] == AT_LB:
            v = self.lb[j]
        else:
            v = self.ub[j]
        return v if math.isfinite(v) else 0.0

    def _nonbasic_values(self):
        vals = np.where(self.vstat[:self.n_cols()] == AT_UB,
                        self.ub[:self.n_cols()], self.lb[:self.n_cols()])
        vals[~np.isfinite(vals)] = 0.0
        vals[self.vstat[:self.n_cols()] == BASIC] = 0.0
        return vals

    def compute_xb(self):
        vals = self._nonbasic_values()
        rhs = self.b - self.a @ vals[:self.n] - vals[self.n:self.nt]
        for k, j in enumerate(range(self.nt, self.n_cols())):
            if vals[j] != 0.0:
                rhs[self.art_rows[k]] -= self.art_sign[k] * vals[j]
        self.xb = self.binv @ rhs

    def refactor(self):
        bmat = np.column_stack([self.col(j) for j in self.basis])
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError:
            raise RuntimeError("singular basis during refactorization")
        self._pivots_since_refactor = 0
        self.compute_xb()

    # -- pricing ----------------------------------------------------------------

    def reduced_costs(self):
        y = self.c[self.basis] @ self.binv
        d = np.empty(self.n_cols())
        d[:self.n] = self.c[:self.n] - y @ self.a
        d[self.n:self.nt] = self.c[self.n:self.nt] - y
        for k, j in enumerate(range(self.nt, self.n_cols())):
            d[j] = self.c[j] - y[self.art_rows[k]] * self.art_sign[k]
        return y, d

    def objective(self):
        vals = self._nonbasic_values()
        vals[self.basis] = self.xb
        return float(self.c[:self.n_cols()] @ vals)

    def solution_values(self):
        vals = self._nonbasic_values()
        vals[self.basis] = self.xb
        return vals

    # -- pivoting ----------------------------------------------------------------

    def _pivot(self, r, q, w):
        """Replace basis position r with column q (w = binv @ col(q))."""
        piv = w[r]
        self.binv[r, :] /= piv
        others = np.arange(self.m) != r
        self.binv[others, :] -= np.outer(w[others], self.binv[r, :])
        self.basis[r] = q
        self._pivots_since_refactor += 1
        if self._pivots_since_refactor >= REFACTOR:
            self.refactor()

    # -- primal simplex ----------------------------------------------------------

    def primal(self, max_iter=200000):
        """Run primal iterations from the current (primal-feasible) basis.

        Returns 'optimal', 'unbounded' or 'limit'.
        """
        degenerate_streak = 0
        bland = False
        for _ in range(max_iter):
            self.iterations += 1
            ncols = self.n_cols()
            _, d = self.reduced_costs()
            stat = self.vstat[:ncols]
            open_bounds = self.lb[:ncols] < self.ub[:ncols]
            elig_lo = (stat == AT_LB) & open_bounds & (d < -TOL_DJ)
            elig_hi = (stat == AT_UB) & open_bounds & (d > TOL_DJ)
            elig = elig_lo | elig_hi
            if not elig.any():
                return "optimal"
            idx = np.flatnonzero(elig)
            if bland:
                q = int(idx[0])
            else:
                q = int(idx[np.argmax(np.abs(d[idx]))])
            delta = 1.0 if self.vstat[q] == AT_LB else -1.0

            w = self.binv @ self.col(q)
            # ratio test: step t >= 0 of x_q toward its other bound
            span = self.ub[q] - self.lb[q]
            t_best = span if math.isfinite(span) else math.inf
            leave = -1
            dw = delta * w
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            dec = dw > TOL_PIV          # basic value decreases
            inc = dw < -TOL_PIV
            with np.errstate(invalid="ignore", divide="ignore"):
                t_dec = np.where(dec, (self.xb - lbb) / np.where(dec, dw, 1.0), math.inf)
                t_inc = np.where(inc, (self.xb - ubb) / np.where(inc, dw, 1.0), math.inf)
            t_rows = np.minimum(np.maximum(t_dec, 0.0), np.maximum(t_inc, 0.0))
            if t_rows.size:
                rmin = float(np.min(t_rows))
                if rmin < t_best:
                    cand = np.flatnonzero(t_rows <= rmin + 1e-9 * (1.0 + abs(rmin)))
                    leave = int(cand[np.argmax(np.abs(dw[cand]))])
                    t_best = max(float(t_rows[leave]), 0.0)
            if not math.isfinite(t_best):
                return "unbounded"

            if t_best <= 1e-12:
                degenerate_streak += 1
                if degenerate_streak > 2 * self.m + 50:
                    bland = True
            else:
                degenerate_streak = 0
                bland = False

            if leave < 0:
                # bound flip, basis unchanged
                self.xb -= dw * t_best
                self.vstat[q] = AT_UB if delta > 0 else AT_LB
                continue
            enter_val = self.nonbasic_value(q) + delta * t_best
            hit_lb = dec[leave]
            out = self.basis[leave]
            self.xb -= dw * t_best
            self.xb[leave] = enter_val
            self.vstat[out] = AT_LB if hit_lb else AT_UB
            self.vstat[q] = BASIC
            self._pivot(leave, q, w)
        return "limit"

    # -- phase 1 -----------------------------------------------------------------

    def _get_artificial(self, row, sign):
        key = (row, sign)
        j = self._art_index.get(key)
        if j is None:
            j = self.nt + len(self.art_rows)
            self._art_index[key] = j
            self.art_rows.append(row)
            self.art_sign.append(sign)
            self.lb = np.append(self.lb, 0.0)
            self.ub = np.append(self.ub, 0.0)
            self.c = np.append(self.c, 0.0)
            self.vstat = np.append(self.vstat, AT_LB)
        return j

    def phase1(self):
        """Install artificials for violated rows and minimize their sum.

        Returns (status, infeasible_row_names).  Artificial columns persist
        (frozen at zero) so earlier basis snapshots remain meaningful.
        """
        n_art_before = len(self.art_rows)
        self.basis = np.arange(self.n, self.nt).copy()
        self.vstat = np.full(self.nt + n_art_before, AT_LB, dtype=np.int8)
        # rest each structural at the finite bound closer to zero
        at_ub = np.abs(self.ub[:self.n]) < np.abs(self.lb[:self.n])
        self.vstat[:self.n][at_ub] = AT_UB
        for i in range(self.m):
            if self.senses[i] == "G":
                self.vstat[self.n + i] = AT_UB
        self.vstat[self.basis] = BASIC
        self.binv = np.eye(self.m)
        self.compute_xb()

        saved_cost = self.c[:self.nt].copy()
        self.c[:] = 0.0
        used_arts = []
        for i in range(self.m):
            j = self.basis[i]          # the slack of row i
            lo, hi = self.lb[j], self.ub[j]
            v = self.xb[i]
            if v < lo - TOL_FEAS or v > hi + TOL_FEAS:
                rest = lo if v < lo else hi           # nearest slack bound
                resid = v - rest
                self.vstat[j] = AT_LB if rest == lo else AT_UB
                ja = self._get_artificial(i, 1.0 if resid > 0 else -1.0)
                self.ub[ja] = math.inf
                self.c[ja] = 1.0
                used_arts.append(ja)
                self.basis[i] = ja
                self.vstat[ja] = BASIC
                self.xb[i] = abs(resid)
        if not used_arts:
            self.c[:self.nt] = saved_cost
            return "optimal", ()
        self.refactor()                # basis holds +-1 artificial columns

        status = self.primal()
        art_total = self.objective()
        basis_list = list(self.basis)
        bad_rows = tuple(self.row_names[self.art_rows[j - self.nt]]
                         for j in self.basis if j >= self.nt
                         and self.xb[basis_list.index(j)] > 1e-7)
        # freeze artificials at zero and restore the true costs
        self.ub[self.nt:] = 0.0
        self.c[:] = 0.0
        self.c[:self.nt] = saved_cost
        if status != "optimal" or art_total > 1e-7:
            return "infeasible", bad_rows
        return "optimal", ()

    # -- dual simplex --------------------------------------------------------------

    def dual(self, max_iter=200000):
        """Re-optimize after bound changes from a dual-feasible basis.

        Returns 'optimal' (primal feasible reached), 'infeasible' (dual ray),
        or 'limit'.  Reduced costs are updated incrementally from the pivot
        row; the periodic refactorization recomputes them from scratch.
        """
        degenerate_streak = 0
        bland = False
        self.compute_xb()
        d = None
        refactor_mark = -1
        for _ in range(max_iter):
            self.iterations += 1
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            below = lbb - self.xb
            above = self.xb - ubb
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= TOL_FEAS:
                return "optimal"
            to_lb = below[r] > above[r]

            ncols = self.n_cols()
            if d is None or d.size != ncols or \
                    self._pivots_since_refactor < refactor_mark:
                _, d = self.reduced_costs()
            refactor_mark = self._pivots_since_refactor
            rho = np.empty(ncols)
            brow = self.binv[r, :]
            rho[:self.n] = brow @ self.a
            rho[self.n:self.nt] = brow
            for k, j in enumerate(range(self.nt, ncols)):
                rho[j] = brow[self.art_rows[k]] * self.art_sign[k]

            stat = self.vstat[:ncols]
            open_bounds = self.lb[:ncols] < self.ub[:ncols]
            idx = np.array([], dtype=int)
            for piv_tol in (TOL_PIV_STABLE, TOL_PIV):
                if to_lb:   # basic must increase: x_br = ... - rho_j x_j
                    cand = ((stat == AT_LB) & (rho < -piv_tol) |
                            (stat == AT_UB) & (rho > piv_tol)) & open_bounds
                else:
                    cand = ((stat == AT_LB) & (rho > piv_tol) |
                            (stat == AT_UB) & (rho < -piv_tol)) & open_bounds
                idx = np.flatnonzero(cand)
                if idx.size:
                    break
            if idx.size == 0:
                return "infeasible"
            ratios = np.abs(d[idx]) / np.abs(rho[idx])
            if bland:
                q = int(idx[0])
            else:
                best = np.min(ratios)
                tied = idx[ratios <= best + 1e-12]
                q = int(tied[np.argmax(np.abs(rho[tied]))])

            target = lbb[r] if to_lb else ubb[r]
            step = (self.xb[r] - target) / rho[q]
            if abs(step) <= 1e-12:
                degenerate_streak += 1
                if degenerate_streak > 2 * self.m + 50:
                    bland = True
            else:
                degenerate_streak = 0
                bland = False

            w = self.binv @ self.col(q)
            out = self.basis[r]
            xq_new = self.nonbasic_value(q) + step
            self.xb -= w * step
            self.xb[r] = xq_new
            self.vstat[out] = AT_LB if to_lb else AT_UB
            self.vstat[q] = BASIC
            d = d - (d[q] / rho[q]) * rho       # dual multiplier update
            d[q] = 0.0
            self._pivot(r, q, w)
        return "limit"

    # -- verification ---------------------------------------------------------------

    def primal_violation(self):
        vals = self.solution_values()
        row_act = self.a @ vals[:self.n] + vals[self.n:self.nt]
        for k in range(len(self.art_rows)):
            row_act[self.art_rows[k]] += self.art_sign[k] * vals[self.nt + k]
        row_gap = np.abs(row_act - self.b)
        lo_gap = np.maximum(self.lb[:self.n_cols()] - vals, 0.0)
        hi_gap = np.maximum(vals - self.ub[:self.n_cols()], 0.0)
        lo_gap[~np.isfinite(lo_gap)] = 0.0
        hi_gap[~np.isfinite(hi_gap)] = 0.0
        return float(max(row_gap.max(initial=0.0),
                         lo_gap.max(initial=0.0), hi_gap.max(initial=0.0)))

    def dual_objective(self):
        """Lagrangian bound at the multipliers implied by the current basis:
        y.b + sum_j min(d_j l_j, d_j u_j), with near-zero reduced costs
        treated as exactly zero so infinite bounds stay harmless."""
        y, d = self.reduced_costs()
        total = float(y @ self.b)
        ncols = self.n_cols()
        dd = d.copy()
        dd[np.abs(dd) <= 10 * TOL_DJ] = 0.0
        lo = self.lb[:ncols]
        hi = self.ub[:ncols]
        with np.errstate(invalid="ignore"):
            terms = np.minimum(dd * lo, dd * hi)
        terms = np.where(dd == 0.0, 0.0, terms)
        return total + float(terms.sum())

    def snapshot(self):
        return self.basis.copy(), self.vstat.copy()

    def restore(self, snap):
        basis, vstat = snap
        if vstat.size < self.n_cols():
            # artificials added after this snapshot rest at their zero bound
            pad = np.full(self.n_cols() - vstat.size, AT_LB, dtype=np.int8)
            vstat = np.concatenate([vstat, pad])
        same = (self.basis.shape == basis.shape) and bool(np.all(self.basis == basis))
        self.basis = basis.copy()
        self.vstat = vstat.copy()
        if not same:
            self.refactor()
        else:
            self.compute_xb()


def solve_lp_arrays(a, senses, b, c, lb, ub, row_names=None):
    """Two-phase primal solve of a fresh LP; returns an LpSolution."""
    core = SimplexCore(a, senses, b, c, lb, ub, row_names)
    status, bad_rows = core.phase1()
    if status == "infeasible":
        return LpSolution(status="infeasible", objective=math.nan,
                          x=np.full(core.n, math.nan), duals=np.zeros(core.m),
                          reduced_costs=np.zeros(core.n),
                          iterations=core.iterations,
                          infeasible_rows=bad_rows)
    status = core.primal()
    return finish_solution(core, status)


def finish_solution(core: SimplexCore, status):
    vals = core.solution_values()
    y, d = core.reduced_costs()
    obj = float(core.c[:core.n] @ vals[:core.n])
    return LpSolution(status="optimal" if status == "optimal" else status,
                      objective=obj, x=vals[:core.n].copy(), duals=y.copy(),
                      reduced_costs=d[:core.n].copy(),
                      iterations=core.iterations,
                      dual_objective=core.dual_objective(),
                      max_bound_violation=core.primal_violation())
