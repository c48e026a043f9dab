"""24-hour price-based HVAC scheduling over replicated zone networks.

Assembles the optimization problem: energy cost plus comfort-violation
penalties, per-(zone, hour) network replication blocks, feedback coupling of
temperature taps to earlier hours, delayed-power taps aliased onto the shared
hourly power columns, prior-day constants for pre-horizon taps, and the
off-hours shutdown.  Solving delegates to the built-in branch and bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import narx
from .bnb import BnbConfig, solve_mip
from .encoder import Binding, PwlSpec, default_sigmoid_pwl, encode_network
from .errors import ConfigurationError, InfeasibleError, RejectedInputError
from .milpmodel import MilpModel
from .testbed import (N_HOURS, OCCUPIED_END, OCCUPIED_START, HVAC_OFF_FROM,
                      OperatingRecord, ScenarioDay, energy_cost, simulate_day)


@dataclass(frozen=True)
class ComfortSpec:
    """Per-zone comfort bands, hard margins, and the penalty price."""

    band_lo: np.ndarray          # degC per scheduled zone
    band_hi: np.ndarray
    hard_margin: float = 2.0     # hard bounds widen the band by this much
    occupied_start: int = OCCUPIED_START
    occupied_end: int = OCCUPIED_END     # inclusive
    t_end: int = HVAC_OFF_FROM           # power fixed to zero for t >= t_end
    penalty_price: float = 0.0           # 0 means derive from the price profile

    def __post_init__(self):
        object.__setattr__(self, "band_lo", np.asarray(self.band_lo, float))
        object.__setattr__(self, "band_hi", np.asarray(self.band_hi, float))
        if np.any(self.band_hi <= self.band_lo):
            raise ConfigurationError("comfort bands must have positive width")

    @property
    def n_zones(self) -> int:
        return len(self.band_lo)

    def occupied(self, t) -> bool:
        return self.occupied_start <= t <= self.occupied_end

    def resolve_penalty(self, prices, p_rated) -> float:
        """Penalty in $ per degC-hour; dominates any achievable energy saving."""
        if self.penalty_price > 0:
            return float(self.penalty_price)
        return 10.0 * float(np.max(prices)) * p_rated


@dataclass
class PriorDay:
    """Previous-day trajectory supplying every pre-horizon tap."""

    temps: np.ndarray            # (24, n_zones) scheduled-zone temperatures
    powers: np.ndarray           # (24,)
    env: np.ndarray              # (24, 3)

    def __post_init__(self):
        self.temps = np.atleast_2d(np.asarray(self.temps, float))
        self.powers = np.asarray(self.powers, float)
        self.env = np.asarray(self.env, float)
        if self.temps.shape[0] != N_HOURS or self.powers.shape != (N_HOURS,) \
                or self.env.shape != (N_HOURS, 3):
            raise RejectedInputError("prior day must cover all 24 hours")

    def records(self, zone_count=None):
        """View as OperatingRecords for the closed-loop rollout helpers."""
        out = []
        for i in range(N_HOURS):
            out.append(OperatingRecord(
                t=i + 1, price=0.0, env=self.env[i],
                zone_temps=self.temps[i], power=float(self.powers[i])))
        return out


@dataclass
class SchedulingProblem:
    model: MilpModel
    nets: list
    comfort: ComfortSpec
    scenario: ScenarioDay
    prior_day: PriorDay
    n_hours: int
    p_rated: float
    penalty: float
    p_cols: list
    t_cols: dict                  # (z, t) -> col
    slack_cols: dict              # ("H"|"L", z, t) -> col


@dataclass
class ScheduleResult:
    status: str
    power: np.ndarray
    zone_temps: np.ndarray        # (n_zones, n_hours)
    slack_hi: np.ndarray          # (n_zones, n_hours)
    slack_lo: np.ndarray
    energy_cost: float
    penalty_cost: float
    objective: float
    gap: float
    nodes: int
    iterations: int
    wall_time_s: float
    binaries: int

    def to_json_dict(self):
        return {
            "status": self.status,
            "power": self.power.tolist(),
            "zone_temps": self.zone_temps.tolist(),
            "slack_hi": self.slack_hi.tolist(),
            "slack_lo": self.slack_lo.tolist(),
            "energy_cost": self.energy_cost,
            "penalty_cost": self.penalty_cost,
            "objective": self.objective,
            "solver": {"gap": self.gap, "nodes": self.nodes,
                       "iterations": self.iterations,
                       "wall_time_s": self.wall_time_s,
                       "binaries": self.binaries},
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=1)


def _reachable_temp_bounds(nets, scenario, comfort, prior_day, n_hours, p_rated):
    """Hour-by-hour interval propagation of each zone network.

    Power taps span the rated range (zero once the HVAC shuts off);
    temperature taps take the already-computed intervals of earlier hours,
    clipped by the hard comfort bounds that any feasible trajectory obeys.
    The per-hour output intervals tighten the temperature columns, which in
    turn shrinks every downstream neuron window.
    """
    env = scenario.env_matrix()
    out = []
    for z, net in enumerate(nets):
        layout = net.layout
        half = (net.out_hi - net.out_lo) / 2.0
        mid = (net.out_hi + net.out_lo) / 2.0
        intervals = []
        for t in range(1, n_hours + 1):
            raw_lo, raw_hi = [float(t)], [float(t)]
            for lag in range(layout.tau1):
                h = t - lag
                if h >= 1 and h < comfort.t_end:
                    raw_lo.append(0.0); raw_hi.append(p_rated)
                else:
                    raw_lo.append(0.0); raw_hi.append(0.0)
            for s in range(layout.n_env):
                for lag in range(layout.tau2):
                    h = t - lag
                    v = float(env[h - 1, s]) if h >= 1 \
                        else float(prior_day.env[N_HOURS + h - 1, s])
                    raw_lo.append(v); raw_hi.append(v)
            for lag in range(1, layout.tau3 + 1):
                h = t - lag
                if h >= 1:
                    lo_h, hi_h = intervals[h - 1]
                    raw_lo.append(lo_h); raw_hi.append(hi_h)
                else:
                    v = float(prior_day.temps[N_HOURS + h - 1, z])
                    raw_lo.append(v); raw_hi.append(v)
            scale = 2.0 / (net.in_hi - net.in_lo)
            lo = np.clip(scale * (np.array(raw_lo) - net.in_lo) - 1.0, -1.0, 1.0)
            hi = np.clip(scale * (np.array(raw_hi) - net.in_lo) - 1.0, -1.0, 1.0)
            for w, bvec, act in zip(net.weights, net.biases, net.activations):
                pre_lo = np.minimum(w, 0.0) @ hi + np.maximum(w, 0.0) @ lo + bvec
                pre_hi = np.maximum(w, 0.0) @ hi + np.minimum(w, 0.0) @ lo + bvec
                if act == "relu":
                    lo, hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
                else:
                    lo = 1.0 / (1.0 + np.exp(-pre_lo))
                    hi = 1.0 / (1.0 + np.exp(-pre_hi))
            y_lo = float(np.minimum(net.out_weights, 0.0) @ hi
                         + np.maximum(net.out_weights, 0.0) @ lo + net.out_bias)
            y_hi = float(np.maximum(net.out_weights, 0.0) @ hi
                         + np.minimum(net.out_weights, 0.0) @ lo + net.out_bias)
            y_lo, y_hi = max(-1.0, y_lo), min(1.0, y_hi)
            t_lo = y_lo * half + mid - 1e-9
            t_hi = y_hi * half + mid + 1e-9
            if comfort.occupied(t):
                # any feasible trajectory respects the hard bounds, so later
                # taps may assume them
                t_lo = max(t_lo, float(comfort.band_lo[z]) - comfort.hard_margin)
                t_hi = min(t_hi, float(comfort.band_hi[z]) + comfort.hard_margin)
            intervals.append((t_lo, t_hi))
        out.append(intervals)
    return out


def build_problem(nets, scenario: ScenarioDay, comfort: ComfortSpec,
                  prior_day: PriorDay, p_rated=30.0, n_hours=N_HOURS,
                  pwl_sigmoid: PwlSpec | None = None) -> SchedulingProblem:
    """Assemble the scheduling MILP for `n_hours` of the scenario day."""
    if len(nets) != comfort.n_zones:
        raise ConfigurationError("one network per scheduled zone required")
    layout = nets[0].layout
    for net in nets[1:]:
        if (net.layout.tau1, net.layout.tau2, net.layout.tau3) != \
                (layout.tau1, layout.tau2, layout.tau3):
            raise ConfigurationError("zone networks must share one input layout")
    if prior_day.temps.shape[1] != comfort.n_zones:
        raise RejectedInputError("prior-day temperatures do not cover all zones")
    if pwl_sigmoid is None and any("sigmoid" in net.activations for net in nets):
        pwl_sigmoid = default_sigmoid_pwl()

    penalty = comfort.resolve_penalty(scenario.prices[:n_hours], p_rated)
    model = MilpModel("dr_schedule")
    obj = {}

    p_cols = []
    for t in range(1, n_hours + 1):
        hi = 0.0 if t >= comfort.t_end else p_rated
        j = model.add_var(f"P_t{t:02d}", 0.0, hi, key=("P", t))
        obj[j] = float(scenario.prices[t - 1])
        p_cols.append(j)

    reach = _reachable_temp_bounds(nets, scenario, comfort, prior_day,
                                   n_hours, p_rated)
    t_cols = {}
    slack_cols = {}
    for z, net in enumerate(nets):
        for t in range(1, n_hours + 1):
            lo = max(net.out_lo, reach[z][t - 1][0])
            hi = min(net.out_hi, reach[z][t - 1][1])
            if comfort.occupied(t):
                lo = max(lo, comfort.band_lo[z] - comfort.hard_margin)
                hi = min(hi, comfort.band_hi[z] + comfort.hard_margin)
            if lo > hi:
                raise InfeasibleError([f"T_z{z}t{t:02d}"],
                                      "hard bounds exclude the reachable range")
            t_cols[(z, t)] = model.add_var(f"T_z{z}t{t:02d}", lo, hi,
                                           key=("T", z, t))

    for z in range(comfort.n_zones):
        for t in range(1, n_hours + 1):
            if not comfort.occupied(t):
                continue
            sh = model.add_var(f"dTH_z{z}t{t:02d}", 0.0, comfort.hard_margin,
                               key=("dTH", z, t))
            sl = model.add_var(f"dTL_z{z}t{t:02d}", 0.0, comfort.hard_margin,
                               key=("dTL", z, t))
            slack_cols[("H", z, t)] = sh
            slack_cols[("L", z, t)] = sl
            obj[sh] = penalty
            obj[sl] = penalty
            model.add_row(f"band_hi_z{z}t{t:02d}",
                          {t_cols[(z, t)]: 1.0, sh: -1.0},
                          "L", float(comfort.band_hi[z]))
            model.add_row(f"band_lo_z{z}t{t:02d}",
                          {t_cols[(z, t)]: -1.0, sl: -1.0},
                          "L", -float(comfort.band_lo[z]))

    env = scenario.env_matrix()
    for z, net in enumerate(nets):
        for t in range(1, n_hours + 1):
            bindings = [Binding.of_const(float(t))]
            for lag in range(layout.tau1):
                h = t - lag
                if h >= 1:
                    bindings.append(Binding.of_col(p_cols[h - 1]))
                else:
                    bindings.append(Binding.of_const(0.0))   # HVAC off late prior day
            for s in range(layout.n_env):
                for lag in range(layout.tau2):
                    h = t - lag
                    v = env[h - 1, s] if h >= 1 else prior_day.env[N_HOURS + h - 1, s]
                    bindings.append(Binding.of_const(float(v)))
            for lag in range(1, layout.tau3 + 1):
                h = t - lag
                if h >= 1:
                    bindings.append(Binding.of_col(t_cols[(z, h)]))
                else:
                    bindings.append(Binding.of_const(
                        float(prior_day.temps[N_HOURS + h - 1, z])))
            encode_network(model, net, z, t, bindings, t_cols[(z, t)],
                           pwl_sigmoid=pwl_sigmoid)

    model.set_objective(obj)
    return SchedulingProblem(model=model, nets=nets, comfort=comfort,
                             scenario=scenario, prior_day=prior_day,
                             n_hours=n_hours, p_rated=p_rated, penalty=penalty,
                             p_cols=p_cols, t_cols=t_cols, slack_cols=slack_cols)


def decode_solution(problem: SchedulingProblem, x, status, gap, nodes,
                    iterations, wall, objective) -> ScheduleResult:
    nh, nz = problem.n_hours, problem.comfort.n_zones
    power = np.array([x[j] for j in problem.p_cols])
    power = np.clip(power, 0.0, problem.p_rated)
    power[np.abs(power) < 1e-11] = 0.0
    temps = np.zeros((nz, nh))
    s_hi = np.zeros((nz, nh))
    s_lo = np.zeros((nz, nh))
    for (z, t), j in problem.t_cols.items():
        temps[z, t - 1] = x[j]
    for (kind, z, t), j in problem.slack_cols.items():
        v = max(0.0, float(x[j]))
        if kind == "H":
            s_hi[z, t - 1] = v
        else:
            s_lo[z, t - 1] = v
    e_c = energy_cost(problem.scenario.prices[:nh], power)
    t_v = problem.penalty * float(s_hi.sum() + s_lo.sum())
    if status in ("optimal", "feasible") and \
            abs(objective - (e_c + t_v)) > 1e-6 * max(1.0, abs(objective)):
        raise RuntimeError(
            f"objective {objective} does not decompose into {e_c} + {t_v}")
    return ScheduleResult(status=status, power=power, zone_temps=temps,
                          slack_hi=s_hi, slack_lo=s_lo, energy_cost=e_c,
                          penalty_cost=t_v, objective=objective, gap=gap,
                          nodes=nodes, iterations=iterations, wall_time_s=wall,
                          binaries=problem.model.binary_count())


def solve_schedule(problem: SchedulingProblem,
                   config: BnbConfig | None = None) -> ScheduleResult:
    """Solve the assembled problem; raises InfeasibleError with the violated
    rows when no schedule satisfies the hard bounds."""
    import dataclasses
    cfg = config or BnbConfig()
    if not cfg.dive_cols:
        cfg = dataclasses.replace(cfg, dive_cols=tuple(problem.p_cols))
    res = solve_mip(problem.model, cfg)
    if res.status == "infeasible":
        raise InfeasibleError(res.infeasible_rows or ("unknown",))
    if res.x is None:
        raise RuntimeError("solver budget exhausted before any feasible schedule")
    status = "optimal" if res.status == "optimal" else "suboptimal"
    return decode_solution(problem, res.x, status, res.gap, res.nodes,
                           res.iterations, res.wall_time_s, res.objective)


@dataclass
class EvalResult:
    energy_cost: float
    penalty_cost: float
    temps: np.ndarray            # (n_zones, n_hours)
    slack_hi: np.ndarray
    slack_lo: np.ndarray

    @property
    def objective(self):
        return self.energy_cost + self.penalty_cost


def _band_slacks(temps, comfort: ComfortSpec, n_hours):
    nz = comfort.n_zones
    s_hi = np.zeros((nz, n_hours))
    s_lo = np.zeros((nz, n_hours))
    for t in range(1, n_hours + 1):
        if not comfort.occupied(t):
            continue
        for z in range(nz):
            s_hi[z, t - 1] = max(0.0, temps[z, t - 1] - comfort.band_hi[z])
            s_lo[z, t - 1] = max(0.0, comfort.band_lo[z] - temps[z, t - 1])
    return s_hi, s_lo


def evaluate_on_networks(nets, scenario, power_profile, prior_day: PriorDay,
                         comfort: ComfortSpec, p_rated=30.0) -> EvalResult:
    """Closed-loop rollout of a power profile through the zone networks with
    the same cost accounting as the optimizer."""
    power_profile = np.asarray(power_profile, float)
    n_hours = len(power_profile)
    history = prior_day.records()
    temps = np.zeros((comfort.n_zones, n_hours))
    for z, net in enumerate(nets):
        temps[z] = narx.rollout_closed_loop(net, scenario, power_profile,
                                            history, zone=z)
    s_hi, s_lo = _band_slacks(temps, comfort, n_hours)
    penalty = comfort.resolve_penalty(scenario.prices[:n_hours], p_rated)
    return EvalResult(energy_cost=energy_cost(scenario.prices[:n_hours], power_profile),
                      penalty_cost=penalty * float(s_hi.sum() + s_lo.sum()),
                      temps=temps, slack_hi=s_hi, slack_lo=s_lo)


def evaluate_on_testbed(building, hvac, scenario, power_profile, initial,
                        comfort: ComfortSpec, zone_ids) -> EvalResult:
    """Ground-truth evaluation: simulate the profile on the building model.

    `zone_ids` maps scheduled zones onto building zones.
    """
    power_profile = np.asarray(power_profile, float)
    n_hours = len(power_profile)
    full = np.zeros(N_HOURS)
    full[:n_hours] = power_profile
    recs = simulate_day(building, hvac, scenario, full, initial)[:n_hours]
    temps = np.array([[r.zone_temps[zid] for r in recs] for zid in zone_ids])
    s_hi, s_lo = _band_slacks(temps, comfort, n_hours)
    penalty = comfort.resolve_penalty(scenario.prices[:n_hours], hvac.p_rated)
    return EvalResult(energy_cost=energy_cost(scenario.prices[:n_hours], power_profile),
                      penalty_cost=penalty * float(s_hi.sum() + s_lo.sum()),
                      temps=temps, slack_hi=s_hi, slack_lo=s_lo)
