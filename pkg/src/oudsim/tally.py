"""Derived outputs: cumulative windows, societal costs, and re-use rates.

Cost accounting follows the per-event 2017-USD table: opioid deaths,
non-diverted opioid arrests, treatment starts, hospital encounters, and
persons in the active state at year end are priced; non-opioid arrests and
inactive persons are not.  A diverted arrest is priced only through the
treatment start it becomes (its row already lands in ``treatment_starts``),
never as an arrest.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

from .engine import COUNT_COLUMNS, ReplicationResult
from .scenario import CostTable

# Columns that are summed over a cumulative window.  Year-end occupancies
# accumulate across years (a person active at five year-ends contributes
# five), matching how decade totals are reported.
WINDOW_SUM_COLUMNS = ("deaths_opioid", "deaths_natural",
                      "arrests_opioid_nondiverted", "arrests_opioid_diverted",
                      "arrests_nonopioid", "hospital_encounters",
                      "treatment_starts", "active_year_end",
                      "inactive_year_end", "new_arrivals")


def cumulative_window(result: ReplicationResult, start_year: int,
                      end_year: int) -> dict[str, float]:
    """Sum event counts over calendar years [start_year, end_year] inclusive."""
    years = result.years
    if start_year not in years or end_year not in years:
        raise ValueError(
            f"window {start_year}:{end_year} outside simulated years "
            f"{years[0]}:{years[-1]}")
    i0, i1 = years.index(start_year), years.index(end_year)
    if i1 < i0:
        raise ValueError("end_year precedes start_year")
    out = {}
    for col in WINDOW_SUM_COLUMNS:
        out[col] = float(sum(result.counts[col][i0:i1 + 1]))
    return out


def yearly_cost(counts: Mapping[str, float],
                costs: CostTable | None = None) -> float:
    """Societal cost in USD of one year's (or one window's) event counts."""
    c = costs or CostTable()
    return (counts.get("deaths_opioid", 0) * c.opioid_death
            + counts.get("arrests_opioid_nondiverted", 0) * c.opioid_arrest
            + counts.get("treatment_starts", 0) * c.treatment_start
            + counts.get("hospital_encounters", 0) * c.hospital_encounter
            + counts.get("active_year_end", 0) * c.active_at_year_end
            + counts.get("inactive_year_end", 0) * c.inactive_at_year_end)


def window_cost(result: ReplicationResult, start_year: int, end_year: int,
                costs: CostTable | None = None) -> float:
    return yearly_cost(cumulative_window(result, start_year, end_year), costs)


def reuse_rate(episodes: float, individuals: float) -> float:
    """Percent of episodes beyond one per individual: (e/i - 1) * 100."""
    if individuals <= 0:
        raise ZeroDivisionError("reuse rate undefined for zero individuals")
    return (episodes / individuals - 1.0) * 100.0


_REUSE_FIELDS = {
    "rearrest": (("arrests_opioid_nondiverted", "arrests_opioid_diverted"),
                 "persons_arrested"),
    "rehospitalization": (("hospital_encounters",), "persons_hospitalized"),
    "treatment_restart": (("treatment_starts",), "persons_treated"),
}


def reuse_rate_for_year(result: ReplicationResult, kind: str,
                        year: int) -> float:
    """Re-arrest / re-hospitalization / treatment re-start rate for a year.

    Re-arrest episodes include both diverted and non-diverted opioid-related
    arrests.  Returns NaN when nobody used the system that year.
    """
    episode_cols, person_col = _REUSE_FIELDS[kind]
    yi = result.years.index(year)
    individuals = result.counts[person_col][yi]
    if individuals == 0:
        return math.nan
    episodes = sum(result.counts[c][yi] for c in episode_cols)
    return reuse_rate(episodes, individuals)


def window_matrix(results: Sequence[ReplicationResult], start_year: int,
                  end_year: int, columns: Iterable[str] | None = None
                  ) -> dict[str, list[float]]:
    """Per-replication window sums, one list per column (replication order)."""
    cols = tuple(columns) if columns is not None else WINDOW_SUM_COLUMNS
    out: dict[str, list[float]] = {c: [] for c in cols}
    for r in sorted(results, key=lambda r: r.replication):
        w = cumulative_window(r, start_year, end_year)
        for c in cols:
            out[c].append(w[c])
    return out


def validate_counts(result: ReplicationResult) -> list[str]:
    """Invariant check over one replication's tallies."""
    out = []
    for col in COUNT_COLUMNS:
        if any(v < 0 for v in result.counts[col]):
            out.append(f"{col}: negative count")
    n = len(result.years)
    for yi in range(n):
        arrests = (result.counts["arrests_opioid_nondiverted"][yi]
                   + result.counts["arrests_opioid_diverted"][yi])
        if result.counts["persons_arrested"][yi] > arrests:
            out.append(f"year {result.years[yi]}: persons_arrested exceeds "
                       "arrest episodes")
        if (result.counts["persons_treated"][yi]
                > result.counts["treatment_starts"][yi]):
            out.append(f"year {result.years[yi]}: persons_treated exceeds "
                       "treatment starts")
        if (result.counts["persons_hospitalized"][yi]
                > result.counts["hospital_encounters"][yi]):
            out.append(f"year {result.years[yi]}: persons_hospitalized "
                       "exceeds encounters")
    return out
