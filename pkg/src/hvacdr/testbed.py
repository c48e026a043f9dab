"""Six-zone small-office building surrogate and its single HVAC cooling unit.

A linear discrete-time thermal network on an hourly grid plays three roles:
training-data generator, non-DR baseline, and ground-truth oracle for
schedule evaluation.  Zones are ordered [core, perimeter N/E/S/W, attic];
the attic is simulated but never cooled or constrained.

Zone update over one hour:

    T' = A @ T + b_x * T_x + b_g * T_g + c_solar * q_s + c_load * q_m
         - cooling_alloc * Q / kappa,      Q = COP(T_x) * P

with A row-substochastic (stable), gains in degC per kW(h), and kappa the
zone thermal capacity in kWh/degC.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RejectedInputError

N_HOURS = 24

# hour-of-day conventions shared by the scheduler (t runs 1..24)
OCCUPIED_START = 8
OCCUPIED_END = 19       # inclusive
HVAC_OFF_FROM = 20      # P fixed to zero for t >= 20


@dataclass(frozen=True)
class BuildingModel:
    """Coefficients of the linear zone-temperature update."""

    a: np.ndarray             # (n_zones, n_zones) per-step retention/exchange
    b_x: np.ndarray           # ambient gain, degC per degC
    b_g: np.ndarray           # ground gain, degC per degC
    c_solar: np.ndarray       # degC per kW insolation
    c_load: np.ndarray        # degC per kW internal load
    kappa: np.ndarray         # zone thermal capacity, kWh per degC
    cooling_alloc: np.ndarray  # fraction of HVAC cooling per zone
    t_ground: float = 15.0

    @property
    def n_zones(self) -> int:
        return self.a.shape[0]

    def validate(self):
        n = self.n_zones
        assert self.a.shape == (n, n)
        rho = max(abs(np.linalg.eigvals(self.a)))
        if rho >= 1.0:
            raise ValueError(f"unstable zone coupling (spectral radius {rho:.3f})")
        alloc = self.cooling_alloc
        if np.any(alloc < 0) or np.any(alloc > 1):
            raise ValueError("cooling_alloc entries must lie in [0, 1]")
        if abs(alloc[:-1].sum() - 1.0) > 1e-12 or alloc[-1] != 0.0:
            raise ValueError("conditioned-zone cooling_alloc must sum to 1, attic to 0")
        return self


@dataclass(frozen=True)
class HvacModel:
    """Variable-speed cooling unit with an ambient-dependent COP."""

    p_rated: float = 30.0     # kW electrical
    cop_0: float = 3.2
    cop_slope: float = 0.05   # per degC above 20 degC

    def cop(self, t_ambient):
        return self.cop_0 - self.cop_slope * (np.asarray(t_ambient, dtype=float) - 20.0)

    def cooling_rate(self, t_ambient, power):
        """Thermal kW delivered for electrical input `power` at ambient T_x."""
        return self.cop(t_ambient) * power


@dataclass(frozen=True)
class ScenarioDay:
    """One day of prices and environmental drivers on the hourly grid."""

    prices: np.ndarray         # $/kWh, length 24
    ambient: np.ndarray        # degC
    insolation: np.ndarray     # kW
    internal_load: np.ndarray  # kW
    date_tag: str = ""

    def __post_init__(self):
        for name in ("prices", "ambient", "insolation", "internal_load"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (N_HOURS,):
                raise RejectedInputError(f"{name} must have length {N_HOURS}")
        if np.any(self.prices < 0) or np.any(self.insolation < 0):
            raise RejectedInputError("prices and insolation must be nonnegative")

    def env(self, t):
        """Environment triple (ambient, insolation, internal_load) at hour t in 1..24."""
        i = t - 1
        return np.array([self.ambient[i], self.insolation[i], self.internal_load[i]])

    def env_matrix(self):
        return np.column_stack([self.ambient, self.insolation, self.internal_load])

    def to_json_dict(self):
        return {
            "prices": self.prices.tolist(),
            "ambient": self.ambient.tolist(),
            "insolation": self.insolation.tolist(),
            "internal_load": self.internal_load.tolist(),
            "date_tag": self.date_tag,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            prices=np.array(d["prices"], dtype=float),
            ambient=np.array(d["ambient"], dtype=float),
            insolation=np.array(d["insolation"], dtype=float),
            internal_load=np.array(d["internal_load"], dtype=float),
            date_tag=d.get("date_tag", ""),
        )


@dataclass(frozen=True)
class OperatingRecord:
    """One hourly sample of the operating stream [t, price, env, T_z, P]."""

    t: int                    # hour of day, 1..24
    price: float              # $/kWh
    env: np.ndarray           # (ambient, insolation, internal_load)
    zone_temps: np.ndarray    # degC, one per zone
    power: float              # kW


def default_building() -> BuildingModel:
    """Hand-calibrated six-zone surrogate.

    Calibrated so that (i) a zero-cooling summer day drifts the occupied
    conditioned zones to roughly 27-31 degC and (ii) rated power can hold
    every comfort band with margin.  Row sums of [A | b_x | b_g] equal one,
    so a uniform temperature field with no gains is a fixed point.
    """
    a = np.array([
        # core     N      E      S      W     attic
        [0.870, 0.006, 0.006, 0.006, 0.006, 0.004],   # core
        [0.018, 0.830, 0.005, 0.000, 0.005, 0.005],   # perimeter N
        [0.018, 0.005, 0.830, 0.005, 0.000, 0.005],   # perimeter E
        [0.018, 0.000, 0.005, 0.830, 0.005, 0.005],   # perimeter S
        [0.018, 0.005, 0.000, 0.005, 0.830, 0.005],   # perimeter W
        [0.008, 0.003, 0.003, 0.003, 0.003, 0.700],   # attic
    ])
    b_x = np.array([0.060, 0.120, 0.120, 0.120, 0.120, 0.270])
    b_g = 1.0 - a.sum(axis=1) - b_x
    c_solar = np.array([0.12, 0.50, 0.47, 0.56, 0.47, 0.60])   # degC per kW
    c_load = np.array([0.075, 0.016, 0.016, 0.016, 0.016, 0.002])
    kappa = np.array([16.0, 10.0, 10.0, 10.0, 10.0, 25.0])     # kWh per degC
    alloc = np.array([0.34, 0.165, 0.165, 0.165, 0.165, 0.0])
    return BuildingModel(a, b_x, b_g, c_solar, c_load, kappa, alloc).validate()


def default_hvac() -> HvacModel:
    return HvacModel()


def step(model: BuildingModel, hvac: HvacModel, state, env, power: float) -> np.ndarray:
    """Advance the zone temperatures by one hour.

    `env` is the (ambient, insolation, internal_load) triple; `power` is the
    electrical input in kW, clamped nowhere -- out-of-range or non-finite
    inputs are rejected.
    """
    state = np.asarray(state, dtype=float)
    env = np.asarray(env, dtype=float)
    if state.shape != (model.n_zones,) or env.shape != (3,):
        raise RejectedInputError("state/env shape mismatch")
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(env)) and math.isfinite(power)):
        raise RejectedInputError("non-finite state, env, or power")
    if power < -1e-12 or power > hvac.p_rated + 1e-9:
        raise RejectedInputError(f"power {power} outside [0, {hvac.p_rated}]")
    t_x, q_s, q_m = env
    cooling = hvac.cooling_rate(t_x, max(power, 0.0))
    return (model.a @ state
            + model.b_x * t_x
            + model.b_g * model.t_ground
            + model.c_solar * q_s
            + model.c_load * q_m
            - model.cooling_alloc * cooling / model.kappa)


def free_equilibrium(model: BuildingModel, env) -> np.ndarray:
    """Fixed point of the update at constant env and zero cooling."""
    t_x, q_s, q_m = np.asarray(env, dtype=float)
    u = (model.b_x * t_x + model.b_g * model.t_ground
         + model.c_solar * q_s + model.c_load * q_m)
    return np.linalg.solve(np.eye(model.n_zones) - model.a, u)


def simulate_day(model, hvac, scenario: ScenarioDay, power_profile, initial):
    """Run 24 chained steps; returns one OperatingRecord per hour."""
    power_profile = np.asarray(power_profile, dtype=float)
    if power_profile.shape != (N_HOURS,):
        raise RejectedInputError("power profile must have length 24")
    state = np.asarray(initial, dtype=float)
    records = []
    for t in range(1, N_HOURS + 1):
        env = scenario.env(t)
        state = step(model, hvac, state, env, float(power_profile[t - 1]))
        records.append(OperatingRecord(
            t=t, price=float(scenario.prices[t - 1]), env=env,
            zone_temps=state.copy(), power=float(power_profile[t - 1])))
    return records


def energy_cost(prices, powers, dt=1.0) -> float:
    """Exact energy cost: dot(prices, powers) * dt."""
    return float(np.dot(np.asarray(prices, float), np.asarray(powers, float)) * dt)


@dataclass
class BaselineResult:
    power_profile: np.ndarray
    cost: float
    achieved: bool            # every zone's time-average within tol of its midpoint
    mean_gap: float           # signed mean (time-avg - midpoint) over zones


def non_dr_baseline(model, hvac, scenario, band_lo, band_hi, zones=None,
                    initial=None, tol=0.25):
    """Constant occupied-hours power holding band midpoints on time average.

    Bisects the constant power applied over the occupied window (8..19 h)
    until the mean over `zones` of (time-average temperature - band
    midpoint) crosses zero, then checks each zone against `tol`.  Hours
    outside the window get zero power.  Returns the nearest-achievable
    profile with `achieved=False` when no constant power closes every gap.
    """
    band_lo = np.asarray(band_lo, float)
    band_hi = np.asarray(band_hi, float)
    if zones is None:
        zones = list(range(len(band_lo)))
    mid = (band_lo + band_hi) / 2.0

    if initial is None:
        initial = free_equilibrium(model, scenario.env(1))

    occupied = [(OCCUPIED_START <= t <= OCCUPIED_END) for t in range(1, N_HOURS + 1)]

    def profile_for(p_const):
        return np.array([p_const if occ else 0.0 for occ in occupied])

    def mean_gap(p_const):
        recs = simulate_day(model, hvac, scenario, profile_for(p_const), initial)
        occ_temps = np.array([r.zone_temps for r in recs if OCCUPIED_START <= r.t <= OCCUPIED_END])
        avg = occ_temps.mean(axis=0)
        return float(np.mean([avg[z] - mid[z] for z in zones])), avg

    lo, hi = 0.0, hvac.p_rated
    gap_lo, _ = mean_gap(lo)
    gap_hi, _ = mean_gap(hi)
    if gap_lo <= 0.0:            # already at/below midpoints with no cooling
        p_star = 0.0
    elif gap_hi >= 0.0:          # rated power cannot reach the midpoints
        p_star = hi
    else:
        for _ in range(60):      # bisection: mean gap is monotone in power
            mid_p = 0.5 * (lo + hi)
            g, _ = mean_gap(mid_p)
            if g > 0.0:
                lo = mid_p
            else:
                hi = mid_p
        p_star = 0.5 * (lo + hi)

    g, avg = mean_gap(p_star)
    achieved = all(abs(avg[z] - mid[z]) <= tol for z in zones)
    profile = profile_for(p_star)
    return BaselineResult(power_profile=profile,
                          cost=energy_cost(scenario.prices, profile),
                          achieved=achieved, mean_gap=g)


# -- scenario synthesis -------------------------------------------------------

HOURS = np.arange(1, N_HOURS + 1)


def synth_day(rng, tag="", weekend=False, ambient_mean=25.0, ambient_amp=6.5,
              ambient_noise=0.5, insolation_peak=0.75, load_base=2.0,
              load_occupied=8.0, price_overnight=0.06, price_peak=0.17,
              price_jitter=0.12):
    """Draw one synthetic day from the season distribution (see module docs)."""
    warm = rng.normal(0.0, 1.2)
    ambient = (ambient_mean + warm
               + ambient_amp * np.sin((HOURS - 9.0) * np.pi / 12.0)
               + rng.normal(0.0, ambient_noise, N_HOURS))
    ambient = np.clip(ambient, 10.0, 38.0)

    sun = np.sin((HOURS - 6.0) * np.pi / 14.0)
    insolation = insolation_peak * (1.0 + 0.15 * rng.normal()) * np.clip(sun, 0.0, None)
    insolation = np.clip(insolation, 0.0, None)

    load = np.full(N_HOURS, load_base, dtype=float)
    occ = (HOURS >= 7) & (HOURS <= 19)
    load[occ] += load_occupied * (1.0 + 0.10 * rng.normal())
    load += rng.normal(0.0, 0.15, N_HOURS)
    load = np.clip(load, 0.0, None)
    if weekend:
        load = load_base + (load - load_base) * 0.6

    base = np.full(N_HOURS, price_overnight, dtype=float)
    ramp = (HOURS >= 7) & (HOURS <= 10)
    base[ramp] = np.linspace(price_overnight, price_peak, 5)[1:]
    base[(HOURS >= 11) & (HOURS <= 18)] = price_peak
    base[HOURS == 19] = 0.5 * (price_peak + price_overnight)
    base[HOURS >= 20] = price_overnight * 1.2
    prices = base * (1.0 + price_jitter * rng.normal()) \
        * (1.0 + 0.04 * rng.normal(size=N_HOURS))
    prices = np.clip(prices, 0.005, None)

    return ScenarioDay(prices=prices, ambient=ambient, insolation=insolation,
                       internal_load=load, date_tag=tag)


def synthesize_scenarios(seed, n_days, **season):
    """Deterministic per-seed synthetic days mirroring a summer season.

    Ambient is a sinusoid peaking mid-afternoon plus noise; insolation a
    clipped half-sine; internal load a step shape over 7..19 h; prices low
    overnight, ramped through the morning, and elevated over 11..18 h with
    day-to-day jitter.
    """
    if n_days < 1:
        raise RejectedInputError("n_days must be >= 1")
    rng = np.random.default_rng(seed)
    return [synth_day(rng, tag=f"day{d:03d}", **season) for d in range(n_days)]


# -- excitation controller and dataset generation -----------------------------

def tracking_profile(model, hvac, scenario, band_lo, band_hi, initial, rng,
                     zones=None, gain=8.0, dither=2.5, precool_prob=0.5):
    """Band-tracking power profile with seeded excitation.

    Proportional control toward just under the band midpoint during the
    occupied window, random constant pre-cooling on some mornings, dither on
    top, and zero power for t >= HVAC_OFF_FROM.  Returns (profile, records).
    """
    band_lo = np.asarray(band_lo, float)
    band_hi = np.asarray(band_hi, float)
    if zones is None:
        zones = list(range(len(band_lo)))
    # per-day setpoint offset widens the visited temperature range
    target = (band_lo + band_hi) / 2.0 + rng.uniform(-1.0, 1.4)

    precool = rng.uniform(2.0, 12.0) if rng.random() < precool_prob else 0.0
    state = np.asarray(initial, float).copy()
    profile = np.zeros(N_HOURS)
    records = []
    for t in range(1, N_HOURS + 1):
        if t >= HVAC_OFF_FROM:
            p = 0.0
        elif t < OCCUPIED_START:
            p = precool + (rng.uniform(-1.0, 1.0) if precool else 0.0)
        else:
            err = np.mean([state[z] - target[z] for z in zones])
            p = gain * err + rng.uniform(-dither, dither)
        p = float(np.clip(p, 0.0, hvac.p_rated))
        profile[t - 1] = p
        env = scenario.env(t)
        state = step(model, hvac, state, env, p)
        records.append(OperatingRecord(t=t, price=float(scenario.prices[t - 1]),
                                       env=env, zone_temps=state.copy(), power=p))
    return profile, records


def generate_dataset(model, hvac, scenarios, band_lo, band_hi, seed,
                     zones=None, warmup_days=3):
    """Simulate each scenario day under the excitation controller.

    Days chain: the final temperatures of one day initialize the next, after
    a warmup on the first scenario.  Returns a list of per-day record lists.
    """
    rng = np.random.default_rng(seed)
    state = free_equilibrium(model, scenarios[0].env(1))
    for _ in range(warmup_days):
        _, recs = tracking_profile(model, hvac, scenarios[0], band_lo, band_hi,
                                   state, rng, zones=zones)
        state = recs[-1].zone_temps
    days = []
    for sc in scenarios:
        _, recs = tracking_profile(model, hvac, sc, band_lo, band_hi, state,
                                   rng, zones=zones)
        state = recs[-1].zone_temps
        days.append(recs)
    return days


# -- dataset CSV --------------------------------------------------------------

DATASET_HEADER = ["t", "price", "ambient", "insolation", "internal_load",
                  "T1", "T2", "T3", "T4", "T5", "T6", "P"]


def records_to_csv(records) -> str:
    """Serialize operating records to the dataset CSV schema."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for r in records:
        w.writerow([r.t, repr(float(r.price)),
                    repr(float(r.env[0])), repr(float(r.env[1])), repr(float(r.env[2])),
                    *[repr(float(x)) for x in r.zone_temps],
                    repr(float(r.power))])
    return buf.getvalue()


def records_from_csv(text) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != DATASET_HEADER:
        raise RejectedInputError("dataset CSV header mismatch")
    out = []
    for row in rows[1:]:
        vals = [float(x) for x in row[1:]]
        out.append(OperatingRecord(
            t=int(row[0]), price=vals[0], env=np.array(vals[1:4]),
            zone_temps=np.array(vals[4:10]), power=vals[10]))
    return out


def scenario_to_json(scenario: ScenarioDay) -> str:
    return json.dumps(scenario.to_json_dict(), indent=1)


def scenario_from_json(text) -> ScenarioDay:
    return ScenarioDay.from_json_dict(json.loads(text))
