"""Parameter-derivation procedures behind the default model inputs.

Every lognormal in the default parameter set was fit from a documented
(mode, quantile) pair or an event-rate table; the functions here regenerate
those fits so the shipped values are reproducible rather than magic numbers.
Also houses the abridged life table used to draw residual (non-opioid)
lifetimes.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .rng import StreamKey, inverse_normal_cdf, uniform

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class ModeQuantileInput:
    """Inputs of the mode-plus-quantile lognormal fit.

    ``mode`` is the most likely value, ``location`` the lognormal shift,
    and (``quantile_value``, ``quantile_level``) one known point of the CDF.
    Units (days or years) just carry through.
    """

    mode: float
    quantile_value: float
    quantile_level: float
    location: float = 0.0

    def __post_init__(self):
        if not self.quantile_value > self.location:
            raise ValueError("quantile value must exceed the location shift")
        if self.mode < self.location:
            raise ValueError("mode must be >= the location shift")
        if not 0.0 < self.quantile_level < 1.0:
            raise ValueError("quantile level must be in (0, 1)")


def fit_lognormal_mode_quantile(inp: ModeQuantileInput) -> tuple[float, float]:
    """Fit (mu, sigma) of a shifted lognormal from its mode and one quantile.

    With m the mode, g the location, and z the normal quantile at the given
    level, solves

        c     = ln((m - g) / (x_q - g))
        sigma = (-z + sqrt(z^2 - 4c)) / 2
        mu    = ln(m - g) + sigma^2

    taking the positive sigma root.  Raises ValueError when m equals g (the
    log is undefined) or when z^2 - 4c < 0 (no real root), which happens when
    the quantile point is inconsistent with the mode.
    """
    m, g = inp.mode, inp.location
    if m <= g:
        raise ValueError("mode must exceed location for this fit (ln(m - g))")
    z = inverse_normal_cdf(inp.quantile_level)
    c = math.log((m - g) / (inp.quantile_value - g))
    disc = z * z - 4.0 * c
    if disc < 0.0:
        raise ValueError(
            f"no real root: z^2 - 4c = {disc:.6g} < 0 for inputs {inp}")
    sigma = (-z + math.sqrt(disc)) / 2.0
    if sigma <= 0.0:
        raise ValueError(
            f"fit produced sigma = {sigma:.6g} <= 0; the quantile lies on the "
            "wrong side of the mode")
    mu = math.log(m - g) + sigma * sigma
    return mu, sigma


def sigma_from_mu_mode(mu: float, mode: float, location: float = 0.0) -> float:
    """Solve the mode equation mu = ln(m - g) + sigma^2 for sigma.

    Used when mu comes directly from data (an event-rate mean) and only the
    spread is anchored to the mode.  Returns 0 at the boundary mu = ln(m - g).
    """
    if mode <= location:
        raise ValueError("mode must exceed location")
    base = math.log(mode - location)
    if mu < base:
        raise ValueError(f"mu = {mu} is below ln(mode - location) = {base:.6g}")
    return math.sqrt(mu - base)


def mu_from_event_rate(yearly_events: Sequence[float],
                       days_per_year: Sequence[float],
                       population: Sequence[float]) -> float:
    """Log-mean waiting time from per-year event counts.

    For each year i with x_i events, D_i days and population p_i, the mean
    days until the next event for one average person is D_i * p_i / x_i;
    mu is the average of the logs across years.
    """
    if not (len(yearly_events) == len(days_per_year) == len(population)):
        raise ValueError("input columns must have equal length")
    if not yearly_events:
        raise ValueError("need at least one year of data")
    logs = []
    for x, d, p in zip(yearly_events, days_per_year, population):
        if x <= 0:
            raise ValueError("yearly event count must be positive")
        if p <= 0:
            raise ValueError("population must be positive")
        logs.append(math.log(d * p / x))
    return sum(logs) / len(logs)


@dataclass(frozen=True)
class PrevalenceRecord:
    """One year of state-level prevalence and county/state death counts."""

    year: int
    state_prevalence_heroin: float
    state_prevalence_rx: float
    county_deaths_heroin: float
    state_deaths_heroin: float
    county_deaths_rx: float
    state_deaths_rx: float

    def __post_init__(self):
        for name in ("state_prevalence_heroin", "state_prevalence_rx",
                     "county_deaths_heroin", "state_deaths_heroin",
                     "county_deaths_rx", "state_deaths_rx"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.county_deaths_heroin > self.state_deaths_heroin:
            raise ValueError("county heroin deaths exceed state deaths")
        if self.county_deaths_rx > self.state_deaths_rx:
            raise ValueError("county rx deaths exceed state deaths")


def county_prevalence(records: Iterable[PrevalenceRecord]) -> dict[int, float]:
    """County use prevalence by redistributing state prevalence.

    The county share of state opioid deaths (separately for heroin and
    prescription opioids) scales the state prevalence estimates:

        p_county = p_state_H * (d_county_H / d_state_H)
                 + p_state_P * (d_county_P / d_state_P)
    """
    out: dict[int, float] = {}
    for r in records:
        if r.state_deaths_heroin == 0 or r.state_deaths_rx == 0:
            raise ZeroDivisionError(
                f"year {r.year}: state death counts must be positive to form "
                "county shares")
        share_h = r.county_deaths_heroin / r.state_deaths_heroin
        share_p = r.county_deaths_rx / r.state_deaths_rx
        out[r.year] = (r.state_prevalence_heroin * share_h
                       + r.state_prevalence_rx * share_p)
    return out


def death_quantile(county_deaths: Sequence[float],
                   prevalence: Sequence[float]) -> float:
    """Mean yearly fraction of the using population that dies of opioids."""
    if len(county_deaths) != len(prevalence) or not county_deaths:
        raise ValueError("need equal-length, non-empty death and prevalence lists")
    total = 0.0
    for d, p in zip(county_deaths, prevalence):
        if p <= 0:
            raise ZeroDivisionError("prevalence must be positive")
        total += d / p
    return total / len(county_deaths)


# --- abridged life table -----------------------------------------------------


class LifeTable:
    """Abridged survivorship table with uniform within-interval deaths.

    Rows give (age_low, age_high, survivors at age_low per radix); the
    survival curve is the survivors column interpolated linearly inside each
    interval and forced to zero at the final age_high.  On interval data the
    product-limit estimator reduces to exactly this curve.
    """

    def __init__(self, rows: Sequence[tuple[float, float, float]]):
        if not rows:
            raise ValueError("life table needs at least one row")
        rows = sorted((float(a), float(b), float(s)) for a, b, s in rows)
        ages = [r[0] for r in rows]
        if any(b <= a for a, b, _ in rows):
            raise ValueError("each row needs age_high > age_low")
        if any(ages[i] >= ages[i + 1] for i in range(len(ages) - 1)):
            raise ValueError("ages must be strictly increasing")
        surv = [r[2] for r in rows]
        if any(surv[i] < surv[i + 1] for i in range(len(surv) - 1)):
            raise ValueError("survivors must be non-increasing with age")
        if surv[0] <= 0:
            raise ValueError("first row must have positive survivors")
        if ages[0] > 12.0:
            raise ValueError("table must start at or below age 12")
        for i in range(len(rows) - 1):
            if rows[i][1] != rows[i + 1][0]:
                raise ValueError("intervals must be contiguous")
        # knots of the piecewise-linear survival curve, closed with S = 0
        self._ages = ages + [rows[-1][1]]
        self._surv = [s / surv[0] for s in surv] + [0.0]
        self.max_age = rows[-1][1]
        self._final_width = rows[-1][1] - rows[-1][0]
        self.rows = rows

    @classmethod
    def from_csv(cls, path) -> "LifeTable":
        """Read rows from a CSV with header age_low,age_high,survivors."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            needed = {"age_low", "age_high", "survivors"}
            if reader.fieldnames is None or not needed <= set(reader.fieldnames):
                raise ValueError(
                    f"{path}: expected header with columns {sorted(needed)}")
            rows = [(float(r["age_low"]), float(r["age_high"]),
                     float(r["survivors"])) for r in reader]
        return cls(rows)

    def survival_at(self, age: float) -> float:
        """S(age), linearly interpolated; 0 beyond the table end."""
        ages, surv = self._ages, self._surv
        if age <= ages[0]:
            return surv[0]
        if age >= ages[-1]:
            return 0.0
        i = bisect.bisect_right(ages, age) - 1
        frac = (age - ages[i]) / (ages[i + 1] - ages[i])
        return surv[i] + frac * (surv[i + 1] - surv[i])

    def residual_days(self, current_age: float, u: float) -> float:
        """Days of life remaining for a person of ``current_age``.

        Inverts the conditional survival S(x)/S(current_age) at 1 - u.
        Ages at or beyond the table end receive half the final interval
        width.  Always strictly positive.
        """
        if current_age >= self.max_age:
            return 0.5 * self._final_width * DAYS_PER_YEAR
        s0 = self.survival_at(current_age)
        if s0 <= 0.0:
            return 0.5 * self._final_width * DAYS_PER_YEAR
        target = s0 * (1.0 - u)
        ages, surv = self._ages, self._surv
        # walk to the segment whose survival range brackets the target
        i = bisect.bisect_right(ages, current_age) - 1
        i = max(i, 0)
        while i + 1 < len(surv) and surv[i + 1] > target:
            i += 1
        lo_age = max(ages[i], current_age)
        lo_s = self.survival_at(lo_age)
        hi_s = surv[i + 1]
        if lo_s <= hi_s:  # flat segment, no deaths here
            death_age = ages[i + 1]
        else:
            frac = (lo_s - target) / (lo_s - hi_s)
            death_age = lo_age + frac * (ages[i + 1] - lo_age)
        days = (death_age - current_age) * DAYS_PER_YEAR
        return days if days > 0.0 else 1e-9


def residual_life_sampler(table: LifeTable, current_age: float,
                          key: StreamKey) -> float:
    """Sample days until non-opioid death for a person of ``current_age``."""
    if current_age < table.rows[0][0]:
        raise ValueError(
            f"current age {current_age} is below the table minimum "
            f"{table.rows[0][0]}")
    return table.residual_days(current_age, uniform(key))


def default_life_table() -> LifeTable:
    """The packaged all-cause survivorship table (drug-induced deaths removed)."""
    ref = resources.files("oudsim.data").joinpath("life_table.csv")
    with resources.as_file(ref) as path:
        return LifeTable.from_csv(path)
