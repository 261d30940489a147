"""Discrete-event core: person lifecycles, event competition, policy gates.

One replication is a strictly sequential event loop over a shared heap.
Each live person owns exactly one pending event at any time; because the
natural-death and non-opioid-arrest clocks are persistent and known at state
entry, the winning next event can always be decided when a state is entered,
so no event is ever cancelled or superseded.

States: active use, inactive use, CJS, hospital/ED, treatment, and the two
absorbing death states.  On entering active use, fresh durations are drawn
for the five competing exits (death, hospital, arrest, treatment start, stop
use) and compete with the two persistent clocks; the earliest wins and the
other fresh draws are discarded.  The non-opioid arrest clock and natural
death can preempt time in treatment, hospital, or inactive use; natural
death preempts every state.

Naming used throughout: t is absolute days since sim_start; years are
consecutive 365.25-day blocks labelled by calendar year.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappush, heappop
from multiprocessing import Pool

from .rng import (Stream, inverse_normal_cdf, replication_hash, stream_base,
                  triangular_inverse)
from .scenario import ParameterSet, ScenarioConfig, day_of, validate
from .estimation import DAYS_PER_YEAR

# Event kinds; the integer order is the tie-break priority at equal times.
EV_NATURAL_DEATH = 0
EV_OPIOID_DEATH = 1
EV_OPIOID_ARREST = 2
EV_NONOPIOID_ARREST = 3
EV_HOSPITAL = 4
EV_START_TREATMENT = 5
EV_STOP_USE = 6
EV_EXIT_CJS = 7
EV_EXIT_HOSPITAL = 8
EV_EXIT_TREATMENT = 9
EV_EXIT_INACTIVE = 10
EV_ARRIVAL = 11

# Person states.
ACTIVE, INACTIVE, CJS, HOSPITAL, TREATMENT, DEAD_OPIOID, DEAD_NATURAL = range(7)

_N_STREAMS = len(Stream)
_GAMMA = 0x9E3779B97F4A7C15
_M64 = (1 << 64) - 1
_INV53 = 1.0 / (1 << 53)

COUNT_COLUMNS = (
    "deaths_opioid", "deaths_natural", "arrests_opioid_nondiverted",
    "arrests_opioid_diverted", "arrests_nonopioid", "hospital_encounters",
    "treatment_starts", "active_year_end", "inactive_year_end",
    "occ_cjs_midyear", "occ_treat_midyear", "occ_hosp_midyear",
    "max_cjs", "max_treat", "max_hosp", "persons_arrested",
    "persons_hospitalized", "persons_treated", "new_arrivals")

# Internal conservation ledger: per-year entries/exits and year-end
# occupancy for the CJS (opioid episodes), treatment, and hospital states.
# Not part of the CSV contract; used to assert flow balance in tests.
FLOW_COLUMNS = ("enter_cjs", "exit_cjs", "cjs_year_end",
                "enter_treat", "exit_treat", "treat_year_end",
                "enter_hosp", "exit_hosp", "hosp_year_end")

SOJOURN_CATEGORIES = ("active", "treatment", "cjs", "hospital",
                      "inactive_after_active", "inactive_after_treatment",
                      "inactive_after_cjs", "inactive_after_hospital")


class _Person:
    __slots__ = ("pid", "state", "prev_state", "ndeath", "arrest",
                 "cjs_opioid", "bases", "counters",
                 "yr_arrest", "yr_hosp", "yr_treat")

    def __init__(self, pid: int):
        self.pid = pid
        self.state = -1
        self.prev_state = -1
        self.ndeath = math.inf
        self.arrest = math.inf
        self.cjs_opioid = False
        self.bases = [None] * _N_STREAMS
        self.counters = [0] * _N_STREAMS
        self.yr_arrest = -1
        self.yr_hosp = -1
        self.yr_treat = -1


@dataclass
class ReplicationResult:
    """Per-calendar-year tallies plus sojourn accumulators for one run."""

    scenario_id: str
    replication: int
    years: list[int]
    counts: dict[str, list[int]]
    sojourn_sums: dict[str, float] = field(default_factory=dict)
    sojourn_counts: dict[str, int] = field(default_factory=dict)

    def sojourn_mean(self, category: str) -> float:
        n = self.sojourn_counts.get(category, 0)
        return self.sojourn_sums.get(category, 0.0) / n if n else math.nan


def _lognormal_params(spec) -> tuple[float, float]:
    return spec.params["mu"], spec.params["sigma"]


def _tri_params(spec, scale: float = 1.0) -> tuple[float, float, float]:
    p = spec.params
    return p["low"] * scale, p["mode"] * scale, p["high"] * scale


def run_replication(params: ParameterSet, scenario: ScenarioConfig,
                    replication: int, trace=None) -> ReplicationResult:
    """Run one full replication; a pure function of its arguments.

    ``trace``, when given, is called as trace(time, event_kind, person_id)
    for every processed event, in execution order.
    """
    errs = validate(params, scenario)
    if errs:
        raise ValueError("invalid configuration: " + "; ".join(errs))

    sim_start = scenario.sim_start
    horizon = day_of(scenario.horizon_end, sim_start)
    n_years = int(round(horizon / DAYS_PER_YEAR))
    years = [sim_start.year + i for i in range(n_years)]
    inv_year = 1.0 / DAYS_PER_YEAR

    # policy gates as (activation day, before, after)
    ad_day = day_of(scenario.ad_start, sim_start)
    od_day = day_of(scenario.od_start, sim_start)
    cm_day = day_of(scenario.cm_start, sim_start)
    ad_p = scenario.ad / 100.0
    od_p = scenario.od / 100.0
    cm_p = scenario.cm / 100.0
    od_base = params.p_od_base
    p_d = params.p_death_hospital
    p_da = p_d + params.p_arrest_hospital
    fentanyl_day = day_of(params.fentanyl_switch, sim_start)

    scale = params.scale
    mu2a, sg2a = _lognormal_params(params.active_to_death_pre)
    mu2b, sg2b = _lognormal_params(params.active_to_death_post)
    mu3, sg3 = _lognormal_params(params.active_to_hospital)
    mu4, sg4 = _lognormal_params(params.active_to_arrest)
    mu5, sg5 = _lognormal_params(params.active_to_treatment)
    mu6, sg6 = _lognormal_params(params.active_to_inactive)
    mu8, sg8 = _lognormal_params(params.nonopioid_arrest)
    muA, sgA = _lognormal_params(params.hospital_stay)
    muB, sgB = _lognormal_params(params.cjs_stay)
    muC, sgC = _lognormal_params(params.treatment_stay)
    muD, sgD = _lognormal_params(params.inactive_after_cjs)
    muE, sgE = _lognormal_params(params.inactive_after_treatment)
    muF, sgF = _lognormal_params(params.inactive_after_hospital)
    muG, sgG = _lognormal_params(params.inactive_after_active)
    arrival_mean = params.arrival_gap.params["mean"] / scale
    init_age = params.initiation_age.params
    prev_age = params.prevalence_age.params
    life_table = params.life_table

    rep_hash = replication_hash(scenario.master_seed, replication)
    ppnd = inverse_normal_cdf
    exp = math.exp

    # local int aliases keep the hot path free of enum attribute lookups
    s_death_pre = int(Stream.ACTIVE_TO_DEATH_PRE)
    s_death_post = int(Stream.ACTIVE_TO_DEATH_POST)
    s_hospital = int(Stream.ACTIVE_TO_HOSPITAL)
    s_arrest = int(Stream.ACTIVE_TO_ARREST)
    s_treatment = int(Stream.ACTIVE_TO_TREATMENT)
    s_inactive = int(Stream.ACTIVE_TO_INACTIVE)
    s_nonop = int(Stream.NONOPIOID_ARREST)
    s_stay_a = int(Stream.HOSPITAL_STAY)
    s_stay_b = int(Stream.CJS_STAY)
    s_stay_c = int(Stream.TREATMENT_STAY)
    s_gate_ad = int(Stream.GATE_AD)
    s_gate_cm = int(Stream.GATE_CM)
    s_hosp_out = int(Stream.HOSPITAL_OUTCOME)

    persons: list[_Person] = []

    def u_draw(p: _Person, s: int) -> float:
        b = p.bases[s]
        if b is None:
            b = stream_base(rep_hash, s, p.pid)
            p.bases[s] = b
        c = p.counters[s]
        p.counters[s] = c + 1
        z = (b + c * _GAMMA) & _M64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        z ^= z >> 31
        return (z >> 11) * _INV53

    def ln_draw(p: _Person, s: int, mu: float, sg: float) -> float:
        b = p.bases[s]
        if b is None:
            b = stream_base(rep_hash, s, p.pid)
            p.bases[s] = b
        c = p.counters[s]
        p.counters[s] = c + 1
        z = (b + c * _GAMMA) & _M64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        z ^= z >> 31
        u = (z >> 11) * _INV53
        if u <= 0.0:
            u = 5e-324
        return exp(mu + sg * ppnd(u))

    def age_draw(p: _Person, s: int, spec_params: dict) -> float:
        mu, sg = spec_params["mu"], spec_params["sigma"]
        loc = spec_params.get("loc", 0.0)
        trunc = spec_params.get("trunc")
        for _ in range(10_000):
            u = u_draw(p, s)
            if u <= 0.0:
                u = 5e-324
            value = loc + exp(mu + sg * ppnd(u))
            if trunc is None or value <= trunc:
                return value
        raise RuntimeError("age truncation resampling exceeded its cap")

    # tallies, one slot per calendar year
    tally = {name: [0] * n_years for name in COUNT_COLUMNS + FLOW_COLUMNS}
    t_enter_cjs = tally["enter_cjs"]
    t_exit_cjs = tally["exit_cjs"]
    t_enter_treat = tally["enter_treat"]
    t_exit_treat = tally["exit_treat"]
    t_enter_hosp = tally["enter_hosp"]
    t_exit_hosp = tally["exit_hosp"]
    t_deaths_op = tally["deaths_opioid"]
    t_deaths_nat = tally["deaths_natural"]
    t_arr_nondiv = tally["arrests_opioid_nondiverted"]
    t_arr_div = tally["arrests_opioid_diverted"]
    t_arr_nonop = tally["arrests_nonopioid"]
    t_hosp = tally["hospital_encounters"]
    t_treat = tally["treatment_starts"]
    t_persons_arr = tally["persons_arrested"]
    t_persons_hosp = tally["persons_hospitalized"]
    t_persons_treat = tally["persons_treated"]
    t_arrivals = tally["new_arrivals"]

    soj_sum = {c: 0.0 for c in SOJOURN_CATEGORIES}
    soj_n = {c: 0 for c in SOJOURN_CATEGORIES}
    _INACTIVE_CAT = {ACTIVE: "inactive_after_active",
                     TREATMENT: "inactive_after_treatment",
                     CJS: "inactive_after_cjs",
                     HOSPITAL: "inactive_after_hospital"}
    _INACTIVE_LAW = {ACTIVE: (int(Stream.INACTIVE_AFTER_ACTIVE), muG, sgG),
                     TREATMENT: (int(Stream.INACTIVE_AFTER_TREATMENT), muE, sgE),
                     CJS: (int(Stream.INACTIVE_AFTER_CJS), muD, sgD),
                     HOSPITAL: (int(Stream.INACTIVE_AFTER_HOSPITAL), muF, sgF)}

    # occupancy counters [active, inactive, cjs(opioid), treatment, hospital]
    occ = [0, 0, 0, 0, 0]
    year_max = [0, 0, 0]  # cjs, treat, hosp running maxima for current year

    heap: list[tuple[float, int, int]] = []

    # ---- state-entry helpers -------------------------------------------

    def enter_active(p: _Person, t: float) -> None:
        p.state = ACTIVE
        occ[0] += 1
        if t < fentanyl_day:
            s2, mu2, sg2 = s_death_pre, mu2a, sg2a
        else:
            s2, mu2, sg2 = s_death_post, mu2b, sg2b
        best_t = p.ndeath
        best_k = EV_NATURAL_DEATH
        cand = t + ln_draw(p, s2, mu2, sg2)
        if cand < best_t:
            best_t, best_k = cand, EV_OPIOID_DEATH
        cand = t + ln_draw(p, s_arrest, mu4, sg4)
        if cand < best_t:
            best_t, best_k = cand, EV_OPIOID_ARREST
        if p.arrest < best_t:
            best_t, best_k = p.arrest, EV_NONOPIOID_ARREST
        cand = t + ln_draw(p, s_hospital, mu3, sg3)
        if cand < best_t:
            best_t, best_k = cand, EV_HOSPITAL
        cand = t + ln_draw(p, s_treatment, mu5, sg5)
        if cand < best_t:
            best_t, best_k = cand, EV_START_TREATMENT
        cand = t + ln_draw(p, s_inactive, mu6, sg6)
        if cand < best_t:
            best_t, best_k = cand, EV_STOP_USE
        soj_sum["active"] += best_t - t
        soj_n["active"] += 1
        if best_t < horizon:
            heappush(heap, (best_t, best_k, p.pid))

    def enter_inactive(p: _Person, t: float, prev: int) -> None:
        p.state = INACTIVE
        p.prev_state = prev
        occ[1] += 1
        s, mu, sg = _INACTIVE_LAW[prev]
        d = ln_draw(p, s, mu, sg)
        cat = _INACTIVE_CAT[prev]
        soj_sum[cat] += d
        soj_n[cat] += 1
        exit_t = t + d
        best_t, best_k = p.ndeath, EV_NATURAL_DEATH
        if p.arrest < best_t:
            best_t, best_k = p.arrest, EV_NONOPIOID_ARREST
        if exit_t < best_t:
            best_t, best_k = exit_t, EV_EXIT_INACTIVE
        if best_t < horizon:
            heappush(heap, (best_t, best_k, p.pid))

    def enter_cjs(p: _Person, t: float, opioid: bool) -> None:
        p.state = CJS
        p.cjs_opioid = opioid
        if opioid:
            occ[2] += 1
            t_enter_cjs[int(t * inv_year)] += 1
            if occ[2] > year_max[0]:
                year_max[0] = occ[2]
        d = ln_draw(p, s_stay_b, muB, sgB)
        soj_sum["cjs"] += d
        soj_n["cjs"] += 1
        exit_t = t + d
        if p.ndeath <= exit_t:
            best_t, best_k = p.ndeath, EV_NATURAL_DEATH
        else:
            best_t, best_k = exit_t, EV_EXIT_CJS
        if best_t < horizon:
            heappush(heap, (best_t, best_k, p.pid))

    def enter_hospital(p: _Person, t: float) -> None:
        p.state = HOSPITAL
        occ[4] += 1
        t_enter_hosp[int(t * inv_year)] += 1
        if occ[4] > year_max[2]:
            year_max[2] = occ[4]
        d = ln_draw(p, s_stay_a, muA, sgA)
        soj_sum["hospital"] += d
        soj_n["hospital"] += 1
        exit_t = t + d
        best_t, best_k = p.ndeath, EV_NATURAL_DEATH
        if p.arrest < best_t:
            best_t, best_k = p.arrest, EV_NONOPIOID_ARREST
        if exit_t < best_t:
            best_t, best_k = exit_t, EV_EXIT_HOSPITAL
        if best_t < horizon:
            heappush(heap, (best_t, best_k, p.pid))

    def enter_treatment(p: _Person, t: float) -> None:
        p.state = TREATMENT
        occ[3] += 1
        t_enter_treat[int(t * inv_year)] += 1
        if occ[3] > year_max[1]:
            year_max[1] = occ[3]
        d = ln_draw(p, s_stay_c, muC, sgC)
        soj_sum["treatment"] += d
        soj_n["treatment"] += 1
        exit_t = t + d
        best_t, best_k = p.ndeath, EV_NATURAL_DEATH
        if p.arrest < best_t:
            best_t, best_k = p.arrest, EV_NONOPIOID_ARREST
        if exit_t < best_t:
            best_t, best_k = exit_t, EV_EXIT_TREATMENT
        if best_t < horizon:
            heappush(heap, (best_t, best_k, p.pid))

    _DEC_STATE = {ACTIVE: 0, INACTIVE: 1, TREATMENT: 3, HOSPITAL: 4}

    def leave_state(p: _Person, y: int) -> None:
        st = p.state
        if st == CJS:
            if p.cjs_opioid:
                occ[2] -= 1
                t_exit_cjs[y] += 1
                p.cjs_opioid = False
        else:
            occ[_DEC_STATE[st]] -= 1
            if st == TREATMENT:
                t_exit_treat[y] += 1
            elif st == HOSPITAL:
                t_exit_hosp[y] += 1

    # ---- starting population --------------------------------------------

    pop_person = _Person(0)  # pid 0 doubles as the population-level entity
    pop_tri = _tri_params(params.starting_population, scale)
    n_pop = int(round(triangular_inverse(u_draw(pop_person, Stream.POPULATION),
                                         *pop_tri)))
    n_pop = max(n_pop, 1)
    exp_hosp = triangular_inverse(u_draw(pop_person, Stream.POPULATION),
                                  *_tri_params(params.start_hospital, scale))
    exp_cjs = triangular_inverse(u_draw(pop_person, Stream.POPULATION),
                                 *_tri_params(params.start_cjs, scale))
    exp_treat = triangular_inverse(u_draw(pop_person, Stream.POPULATION),
                                   *_tri_params(params.start_treatment, scale))
    frac_active = triangular_inverse(u_draw(pop_person, Stream.POPULATION),
                                     *_tri_params(params.start_active_fraction))
    p_h = exp_hosp / n_pop
    p_c = exp_cjs / n_pop
    p_t = exp_treat / n_pop
    c1, c2, c3 = p_h, p_h + p_c, p_h + p_c + p_t
    c4 = c3 + frac_active
    if c4 > 1.0:
        raise ValueError("starting-state probabilities exceed 1; the scaled "
                         "state counts are too large for the population size")
    tot = c4  # mass of the four explicit states, for the previous-state law
    q1, q2, q3 = c1 / tot, c2 / tot, c3 / tot

    def make_person(pid: int, t: float, age_stream: int, age_params: dict
                    ) -> _Person:
        p = _Person(pid)
        age = age_draw(p, age_stream, age_params)
        p.ndeath = t + life_table.residual_days(
            age, u_draw(p, Stream.NATURAL_DEATH))
        p.arrest = t + ln_draw(p, s_nonop, mu8, sg8)
        persons.append(p)
        return p

    for pid in range(n_pop):
        p = make_person(pid, 0.0, Stream.PREVALENCE_AGE, prev_age)
        u = u_draw(p, Stream.START_STATE)
        if u < c1:
            enter_hospital(p, 0.0)
        elif u < c2:
            enter_cjs(p, 0.0, True)
        elif u < c3:
            enter_treatment(p, 0.0)
        elif u < c4:
            enter_active(p, 0.0)
        else:
            up = u_draw(p, Stream.START_PREV_STATE)
            if up < q1:
                prev = HOSPITAL
            elif up < q2:
                prev = CJS
            elif up < q3:
                prev = TREATMENT
            else:
                prev = ACTIVE
            enter_inactive(p, 0.0, prev)

    # ---- arrival process --------------------------------------------------

    s_arrival = int(Stream.ARRIVAL)

    def next_arrival_gap() -> float:
        return -arrival_mean * math.log1p(-u_draw(pop_person, s_arrival))

    next_pid = n_pop
    t0 = next_arrival_gap()
    if t0 < horizon:
        heappush(heap, (t0, EV_ARRIVAL, -1))

    # ---- year-boundary checkpoints ----------------------------------------

    # (time, code): code 0 = mid-year snapshot, 1 = year end
    checkpoints: list[tuple[float, int, int]] = []
    for y in range(n_years):
        checkpoints.append((y * DAYS_PER_YEAR + 182.0, 0, y))
        checkpoints.append(((y + 1) * DAYS_PER_YEAR, 1, y))
    checkpoints.sort()
    checkpoints.append((math.inf, 1, -1))
    cp_idx = 0
    cp_t = checkpoints[0][0]

    t_occ_cjs = tally["occ_cjs_midyear"]
    t_occ_treat = tally["occ_treat_midyear"]
    t_occ_hosp = tally["occ_hosp_midyear"]
    t_max_cjs = tally["max_cjs"]
    t_max_treat = tally["max_treat"]
    t_max_hosp = tally["max_hosp"]
    t_active_ye = tally["active_year_end"]
    t_inactive_ye = tally["inactive_year_end"]

    def run_checkpoints(upto: float) -> None:
        nonlocal cp_idx, cp_t
        while cp_t <= upto:
            _, code, y = checkpoints[cp_idx]
            if code == 0:
                t_occ_cjs[y] = occ[2]
                t_occ_treat[y] = occ[3]
                t_occ_hosp[y] = occ[4]
            else:
                t_active_ye[y] = occ[0]
                t_inactive_ye[y] = occ[1]
                tally["cjs_year_end"][y] = occ[2]
                tally["treat_year_end"][y] = occ[3]
                tally["hosp_year_end"][y] = occ[4]
                t_max_cjs[y] = year_max[0]
                t_max_treat[y] = year_max[1]
                t_max_hosp[y] = year_max[2]
                year_max[0] = occ[2]
                year_max[1] = occ[3]
                year_max[2] = occ[4]
            cp_idx += 1
            cp_t = checkpoints[cp_idx][0]

    # ---- main loop ---------------------------------------------------------

    state_err = "event %d fired for person %d in state %d"
    while heap:
        t, kind, pid = heappop(heap)
        if cp_t <= t:
            run_checkpoints(t)
        y = int(t * inv_year)
        if trace is not None:
            trace(t, kind, pid)

        if kind == EV_ARRIVAL:
            t_arrivals[y] += 1
            p = make_person(next_pid, t, Stream.INITIATION_AGE, init_age)
            next_pid += 1
            enter_active(p, t)
            nxt = t + next_arrival_gap()
            if nxt < horizon:
                heappush(heap, (nxt, EV_ARRIVAL, -1))
            continue

        p = persons[pid]
        st = p.state

        if kind == EV_STOP_USE:
            if st != ACTIVE:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[0] -= 1
            enter_inactive(p, t, ACTIVE)
        elif kind == EV_EXIT_INACTIVE:
            if st != INACTIVE:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[1] -= 1
            enter_active(p, t)
        elif kind == EV_START_TREATMENT:
            if st != ACTIVE:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[0] -= 1
            t_treat[y] += 1
            if p.yr_treat != y:
                p.yr_treat = y
                t_persons_treat[y] += 1
            enter_treatment(p, t)
        elif kind == EV_EXIT_TREATMENT:
            if st != TREATMENT:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[3] -= 1
            t_exit_treat[y] += 1
            enter_inactive(p, t, TREATMENT)
        elif kind == EV_HOSPITAL:
            if st != ACTIVE:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[0] -= 1
            t_hosp[y] += 1
            if p.yr_hosp != y:
                p.yr_hosp = y
                t_persons_hosp[y] += 1
            enter_hospital(p, t)
        elif kind == EV_EXIT_HOSPITAL:
            if st != HOSPITAL:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[4] -= 1
            t_exit_hosp[y] += 1
            u = u_draw(p, s_hosp_out)
            if u < p_d:
                t_deaths_op[y] += 1
                p.state = DEAD_OPIOID
            elif u < p_da:
                t_arr_nonop[y] += 1
                enter_cjs(p, t, False)
            elif u < p_da + (od_p if t >= od_day else od_base):
                t_treat[y] += 1
                if p.yr_treat != y:
                    p.yr_treat = y
                    t_persons_treat[y] += 1
                enter_treatment(p, t)
            else:
                enter_inactive(p, t, HOSPITAL)
        elif kind == EV_OPIOID_ARREST:
            if st != ACTIVE:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[0] -= 1
            if p.yr_arrest != y:
                p.yr_arrest = y
                t_persons_arr[y] += 1
            u = u_draw(p, s_gate_ad)
            if u < (ad_p if t >= ad_day else 0.0):
                t_arr_div[y] += 1
                t_treat[y] += 1
                if p.yr_treat != y:
                    p.yr_treat = y
                    t_persons_treat[y] += 1
                enter_treatment(p, t)
            else:
                t_arr_nondiv[y] += 1
                enter_cjs(p, t, True)
        elif kind == EV_NONOPIOID_ARREST:
            if st not in (ACTIVE, INACTIVE, TREATMENT, HOSPITAL):
                raise RuntimeError(state_err % (kind, pid, st))
            leave_state(p, y)
            t_arr_nonop[y] += 1
            enter_cjs(p, t, False)
        elif kind == EV_EXIT_CJS:
            if st != CJS:
                raise RuntimeError(state_err % (kind, pid, st))
            leave_state(p, y)
            p.arrest = t + ln_draw(p, s_nonop, mu8, sg8)
            u = u_draw(p, s_gate_cm)
            if u < (cm_p if t >= cm_day else 0.0):
                t_treat[y] += 1
                if p.yr_treat != y:
                    p.yr_treat = y
                    t_persons_treat[y] += 1
                enter_treatment(p, t)
            else:
                enter_inactive(p, t, CJS)
        elif kind == EV_OPIOID_DEATH:
            if st != ACTIVE:
                raise RuntimeError(state_err % (kind, pid, st))
            occ[0] -= 1
            t_deaths_op[y] += 1
            p.state = DEAD_OPIOID
        elif kind == EV_NATURAL_DEATH:
            leave_state(p, y)
            t_deaths_nat[y] += 1
            p.state = DEAD_NATURAL
        else:
            raise RuntimeError(f"unknown event kind {kind}")

    run_checkpoints(horizon)

    return ReplicationResult(scenario.scenario_id, replication, years, tally,
                             soj_sum, soj_n)


# ---- parallel driver ---------------------------------------------------------


def _worker(args) -> ReplicationResult:
    params, scenario, rep = args
    return run_replication(params, scenario, rep)


def run_scenario(params: ParameterSet, scenario: ScenarioConfig,
                 replications: int | None = None,
                 threads: int = 1) -> list[ReplicationResult]:
    """Run all replications of one scenario, sorted by replication index.

    ``threads`` is the process count; results are identical for any value
    because each replication is an independent pure function.
    """
    n = scenario.replications if replications is None else replications
    jobs = [(params, scenario, r) for r in range(n)]
    if threads <= 1 or n <= 1:
        results = [run_replication(*j) for j in jobs]
    else:
        with Pool(processes=min(threads, n)) as pool:
            results = pool.map(_worker, jobs, chunksize=max(1, n // (4 * threads)))
    results.sort(key=lambda r: r.replication)
    return results
