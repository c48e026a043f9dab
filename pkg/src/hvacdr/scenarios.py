"""Seasonal scenario corpus construction and price-sensitivity perturbations.

Synthetic stand-ins for historical weather and real-time price records; the
generator parameters live in SeasonConfig so real CSV data in the dataset
schema can be dropped in unchanged.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError
from .testbed import N_HOURS, HOURS, ScenarioDay, synth_day

ON_PEAK = (11, 18)   # inclusive hour window scaled by perturb_for_sensitivity


@dataclass(frozen=True)
class SeasonConfig:
    start: str = "2012-06-01"        # ISO dates, inclusive
    end: str = "2012-08-31"
    ambient_mean: float = 25.0       # degC
    ambient_amp: float = 6.5
    ambient_noise: float = 0.5
    insolation_peak: float = 0.75    # kW
    load_base: float = 2.0           # kW
    load_occupied: float = 8.0
    price_overnight: float = 0.06    # $/kWh
    price_peak: float = 0.17
    price_jitter: float = 0.12

    def dates(self):
        d0 = _dt.date.fromisoformat(self.start)
        d1 = _dt.date.fromisoformat(self.end)
        if d1 < d0:
            raise ConfigurationError("empty date range")
        out = []
        d = d0
        while d <= d1:
            out.append(d)
            d += _dt.timedelta(days=1)
        return out

    def to_json_dict(self):
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d):
        return cls(**d)


def build_corpus(config: SeasonConfig, seed) -> list[ScenarioDay]:
    """One ScenarioDay per date in the config range, deterministic per seed.

    Weekends keep the base internal load but flatten the occupancy-driven
    part by 40%.
    """
    rng = np.random.default_rng(seed)
    days = []
    for date in config.dates():
        days.append(synth_day(
            rng, tag=date.isoformat(), weekend=date.weekday() >= 5,
            ambient_mean=config.ambient_mean, ambient_amp=config.ambient_amp,
            ambient_noise=config.ambient_noise,
            insolation_peak=config.insolation_peak,
            load_base=config.load_base, load_occupied=config.load_occupied,
            price_overnight=config.price_overnight, price_peak=config.price_peak,
            price_jitter=config.price_jitter))
    return days


def perturb_for_sensitivity(day: ScenarioDay, on_peak_multiplier: float) -> ScenarioDay:
    """Scale prices in the on-peak window only; everything else untouched."""
    if on_peak_multiplier <= 0:
        raise ConfigurationError("multiplier must be positive")
    prices = day.prices.copy()
    mask = (HOURS >= ON_PEAK[0]) & (HOURS <= ON_PEAK[1])
    prices[mask] *= on_peak_multiplier
    return ScenarioDay(prices=prices, ambient=day.ambient.copy(),
                       insolation=day.insolation.copy(),
                       internal_load=day.internal_load.copy(),
                       date_tag=day.date_tag)
