"""Derived-output tests: windows, costs, re-use rates."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oudsim.engine import ReplicationResult
from oudsim.tally import (cumulative_window, reuse_rate, reuse_rate_for_year,
                          window_cost, window_matrix, yearly_cost)


def make_result(**overrides) -> ReplicationResult:
    years = list(range(2009, 2033))
    counts = {c: [0] * 24 for c in (
        "deaths_opioid", "deaths_natural", "arrests_opioid_nondiverted",
        "arrests_opioid_diverted", "arrests_nonopioid", "hospital_encounters",
        "treatment_starts", "active_year_end", "inactive_year_end",
        "new_arrivals", "persons_arrested", "persons_hospitalized",
        "persons_treated")}
    counts.update(overrides)
    return ReplicationResult("s", 0, years, counts)


class TestCumulativeWindow:
    def test_single_year_identity(self):
        r = make_result(deaths_opioid=[3] + [0] * 23)
        w = cumulative_window(r, 2009, 2009)
        assert w["deaths_opioid"] == 3

    def test_two_year_sum(self):
        deaths = [0] * 24
        deaths[14], deaths[15] = 3, 4
        r = make_result(deaths_opioid=deaths)
        assert cumulative_window(r, 2023, 2024)["deaths_opioid"] == 7

    def test_year_end_counts_accumulate(self):
        r = make_result(active_year_end=[100] * 24)
        assert cumulative_window(r, 2023, 2032)["active_year_end"] == 1000

    def test_window_bounds_checked(self):
        r = make_result()
        with pytest.raises(ValueError):
            cumulative_window(r, 2000, 2010)
        with pytest.raises(ValueError):
            cumulative_window(r, 2030, 2023)


class TestYearlyCost:
    # the five documented cost rows, one pure count each
    @pytest.mark.parametrize("col,count,usd_millions", [
        ("deaths_opioid", 88, 1016.3),
        ("arrests_opioid_nondiverted", 545, 30.4),
        ("treatment_starts", 2026, 16.7),
        ("hospital_encounters", 1718, 20.7),
        ("active_year_end", 17630, 601.3),
    ])
    def test_documented_rows(self, col, count, usd_millions):
        got = yearly_cost({col: count})
        assert got / 1e6 == pytest.approx(usd_millions, abs=0.1)

    def test_exact_death_total(self):
        assert yearly_cost({"deaths_opioid": 88}) == 88 * 11_548_462

    def test_inactive_and_nonopioid_not_priced(self):
        assert yearly_cost({"inactive_year_end": 99999}) == 0.0
        assert yearly_cost({"arrests_nonopioid": 500,
                            "arrests_opioid_diverted": 500}) == 0.0

    @given(st.dictionaries(
        st.sampled_from(["deaths_opioid", "arrests_opioid_nondiverted",
                         "treatment_starts", "hospital_encounters",
                         "active_year_end", "inactive_year_end"]),
        st.integers(0, 10_000)),
        st.dictionaries(
        st.sampled_from(["deaths_opioid", "treatment_starts",
                         "active_year_end"]),
        st.integers(0, 10_000)))
    @settings(max_examples=100)
    def test_linearity(self, a, b):
        merged = {k: a.get(k, 0) + b.get(k, 0) for k in set(a) | set(b)}
        assert yearly_cost(merged) == pytest.approx(
            yearly_cost(a) + yearly_cost(b))

    def test_window_cost_composes(self):
        deaths = [0] * 24
        deaths[14:24] = [10] * 10
        r = make_result(deaths_opioid=deaths)
        assert window_cost(r, 2023, 2032) == 100 * 11_548_462


class TestReuseRate:
    def test_everyone_once(self):
        assert reuse_rate(100, 100) == 0.0

    def test_five_percent(self):
        assert reuse_rate(105, 100) == pytest.approx(5.0)

    def test_zero_individuals_rejected(self):
        with pytest.raises(ZeroDivisionError):
            reuse_rate(10, 0)

    def test_nonnegative_when_episodes_cover_individuals(self):
        for e, i in ((1, 1), (7, 3), (100, 99)):
            assert reuse_rate(e, i) >= 0.0

    def test_diverted_arrests_count_as_episodes(self):
        nondiv, div, persons = [0] * 24, [0] * 24, [0] * 24
        nondiv[-1], div[-1], persons[-1] = 50, 55, 100
        r = make_result(arrests_opioid_nondiverted=nondiv,
                        arrests_opioid_diverted=div,
                        persons_arrested=persons)
        assert reuse_rate_for_year(r, "rearrest", 2032) == pytest.approx(5.0)

    def test_empty_year_is_nan(self):
        r = make_result()
        assert math.isnan(reuse_rate_for_year(r, "rehospitalization", 2032))


class TestWindowMatrix:
    def test_orders_by_replication(self):
        rows = []
        for rep in (2, 0, 1):
            deaths = [0] * 24
            deaths[14] = rep * 10
            r = make_result(deaths_opioid=deaths)
            r.replication = rep
            rows.append(r)
        m = window_matrix(rows, 2023, 2032, ["deaths_opioid"])
        assert m["deaths_opioid"] == [0.0, 10.0, 20.0]
