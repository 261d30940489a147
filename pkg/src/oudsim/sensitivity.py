"""Global sensitivity machinery: Sobol designs, PRCC, and effect sizes.

The design perturbs 41 inputs over published ranges (roughly +/- 5% of the
base values; the once-per-run triangular inputs instead span min - 5% to
max + 5% and the drawn value replaces the triangular).  Points come from a
Sobol low-discrepancy sequence; each point is run with a few replications
and the averaged yearly outputs feed two analyses: partial rank correlation
coefficients with Bonferroni-corrected t tests, and log-log OLS effect
sizes on [0, 1]-mapped inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import run_replication
from .scenario import ParameterSet, ScenarioConfig
from .sobol_directions import DIRECTIONS, MAX_DIM
from .stats import ols, student_t_cdf


# --- Sobol sequence -----------------------------------------------------------


def sobol_points(dim: int, n: int) -> np.ndarray:
    """First ``n`` points of the ``dim``-dimensional Sobol sequence.

    Gray-code construction over the published direction numbers; the first
    point is the origin.  ``n`` must be a power of two (that is what makes
    every 1-D projection a perfect stratification) and ``dim`` is capped by
    the size of the embedded table.
    """
    if dim < 1 or dim > MAX_DIM:
        raise ValueError(f"dim must be in [1, {MAX_DIM}], got {dim}")
    if n < 1 or n & (n - 1):
        raise ValueError(f"n must be a power of two, got {n}")
    nbits = max(n.bit_length() - 1, 1)
    out = np.zeros((n, dim), dtype=float)
    scale = 0.5 ** nbits
    for j in range(dim):
        # direction integers v_k scaled to nbits bits
        if j == 0:
            v = [1 << (nbits - k - 1) for k in range(nbits)]
        else:
            s, a, m = DIRECTIONS[j - 1]
            v = [0] * nbits
            for k in range(min(s, nbits)):
                v[k] = m[k] << (nbits - k - 1)
            for k in range(s, nbits):
                vk = v[k - s] ^ (v[k - s] >> s)
                for i in range(1, s):
                    if (a >> (s - 1 - i)) & 1:
                        vk ^= v[k - i]
                v[k] = vk
        x = 0
        col = out[:, j]
        for i in range(1, n):
            # ruler sequence: index of the lowest zero bit of i-1
            c = ((i - 1) ^ i).bit_length() - 1
            x ^= v[c]
            col[i] = x * scale
    return out


# --- parameter design ---------------------------------------------------------


@dataclass(frozen=True)
class SensitivityParameter:
    """One perturbed input: an id, a target field, and its range."""

    index: int
    name: str
    target: str        # ParameterSet field
    key: str           # "mu" / "sigma" / scalar field marker
    low: float
    high: float

    def apply(self, params: ParameterSet, value: float) -> None:
        if self.key in ("mu", "sigma"):
            spec = getattr(params, self.target)
            spec.params[self.key] = value
        elif self.key == "scalar":
            setattr(params, self.target, value)
        elif self.key == "rate":
            # published arrival parameter is a daily rate; mean gap = 1/rate
            params.arrival_gap.params["mean"] = 1.0 / value
        elif self.key == "fixed-triangular":
            spec = getattr(params, self.target)
            spec.params["low"] = value
            spec.params["mode"] = value
            spec.params["high"] = value
        else:
            raise ValueError(f"unknown parameter key {self.key!r}")


def _p(i, name, target, key, low, high):
    return SensitivityParameter(i, name, target, key, low, high)


# Ranges follow the published sensitivity table.  Rows 5-9 collapse the
# once-per-run triangulars to the design value (min - 5% to max + 5%); the
# starting-population row uses the alternative maximum 44087.  Row 9 is the
# active-state start probability; the inactive share stays the dependent
# remainder, as in the base model.
TABLE: tuple[SensitivityParameter, ...] = (
    _p(1, "initiation age mu", "initiation_age", "mu", 1.98, 2.18),
    _p(2, "initiation age sigma", "initiation_age", "sigma", 0.72, 0.80),
    _p(3, "prevalence age mu", "prevalence_age", "mu", 3.55, 3.93),
    _p(4, "prevalence age sigma", "prevalence_age", "sigma", 0.47, 0.51),
    _p(5, "starting population", "starting_population", "fixed-triangular",
       25934.05, 46291.35),
    _p(6, "starting hospital count", "start_hospital", "fixed-triangular",
       4.75, 15.75),
    _p(7, "starting CJS count", "start_cjs", "fixed-triangular", 14.25, 52.50),
    _p(8, "starting treatment count", "start_treatment", "fixed-triangular",
       285.0, 525.0),
    _p(9, "starting active probability", "start_active_fraction",
       "fixed-triangular", 0.19, 0.84),
    _p(10, "arrival rate", "arrival_gap", "rate", 10.32, 11.41),
    _p(11, "active-to-death mu (pre)", "active_to_death_pre", "mu", 16.72, 18.47),
    _p(12, "active-to-death sigma (pre)", "active_to_death_pre", "sigma",
       3.98, 4.40),
    _p(13, "active-to-death mu (post)", "active_to_death_post", "mu",
       16.28, 17.99),
    _p(14, "active-to-death sigma (post)", "active_to_death_post", "sigma",
       3.93, 4.35),
    _p(15, "active-to-hospital mu", "active_to_hospital", "mu", 8.62, 9.53),
    _p(16, "active-to-hospital sigma", "active_to_hospital", "sigma",
       2.86, 3.16),
    _p(17, "active-to-arrest mu", "active_to_arrest", "mu", 9.54, 10.55),
    _p(18, "active-to-arrest sigma", "active_to_arrest", "sigma", 2.24, 2.47),
    _p(19, "active-to-treatment mu", "active_to_treatment", "mu", 7.10, 7.85),
    _p(20, "active-to-treatment sigma", "active_to_treatment", "sigma",
       0.98, 1.08),
    _p(21, "active-to-inactive mu", "active_to_inactive", "mu", 4.58, 5.06),
    _p(22, "active-to-inactive sigma", "active_to_inactive", "sigma",
       2.09, 2.31),
    # rows 23/24 keep +/- 5% of the corrected defaults (the published range
    # tracked the uncorrected published value)
    _p(23, "non-opioid arrest mu", "nonopioid_arrest", "mu", 10.925, 12.075),
    _p(24, "non-opioid arrest sigma", "nonopioid_arrest", "sigma",
       2.8976, 3.2026),
    _p(25, "hospital arrest probability", "p_arrest_hospital", "scalar",
       0.0095, 0.0105),
    _p(26, "hospital treatment probability", "p_od_base", "scalar",
       0.2116, 0.2338),
    _p(27, "hospital death probability", "p_death_hospital", "scalar",
       0.0207, 0.0229),
    _p(28, "hospital stay mu", "hospital_stay", "mu", 0.78, 0.86),
    _p(29, "hospital stay sigma", "hospital_stay", "sigma", 0.45, 0.50),
    _p(30, "CJS stay mu", "cjs_stay", "mu", 2.05, 2.27),
    _p(31, "CJS stay sigma", "cjs_stay", "sigma", 1.40, 1.54),
    _p(32, "treatment stay mu", "treatment_stay", "mu", 4.54, 5.02),
    _p(33, "treatment stay sigma", "treatment_stay", "sigma", 1.12, 1.23),
    _p(34, "inactive-after-CJS mu", "inactive_after_cjs", "mu", 3.12, 3.45),
    _p(35, "inactive-after-CJS sigma", "inactive_after_cjs", "sigma",
       1.53, 1.69),
    _p(36, "inactive-after-treatment mu", "inactive_after_treatment", "mu",
       4.30, 4.75),
    _p(37, "inactive-after-treatment sigma", "inactive_after_treatment",
       "sigma", 1.04, 1.15),
    _p(38, "inactive-after-hospital mu", "inactive_after_hospital", "mu",
       1.86, 2.05),
    _p(39, "inactive-after-hospital sigma", "inactive_after_hospital",
       "sigma", 1.33, 1.47),
    _p(40, "inactive-after-active mu", "inactive_after_active", "mu",
       5.98, 6.61),
    _p(41, "inactive-after-active sigma", "inactive_after_active", "sigma",
       2.38, 2.63),
)

OUTPUTS = ("deaths", "arrests", "hospital", "treatment", "active")
_OUTPUT_COLS = {
    "deaths": ("deaths_opioid",),
    "arrests": ("arrests_opioid_nondiverted", "arrests_opioid_diverted"),
    "hospital": ("hospital_encounters",),
    "treatment": ("treatment_starts",),
    "active": ("active_year_end",),
}
DEFAULT_YEARS = (2016, 2018, 2032)


@dataclass
class SensitivityDesign:
    """A point matrix in [0, 1]^k plus the parameter rows it maps through."""

    points: np.ndarray
    parameters: tuple[SensitivityParameter, ...] = TABLE
    replications_per_point: int = 3

    @classmethod
    def sobol(cls, n_points: int = 1024, replications_per_point: int = 3
              ) -> "SensitivityDesign":
        pts = sobol_points(len(TABLE), n_points)
        return cls(pts, TABLE, replications_per_point)

    def values(self) -> np.ndarray:
        """Design points mapped onto the parameter ranges (affine)."""
        lo = np.array([p.low for p in self.parameters])
        hi = np.array([p.high for p in self.parameters])
        return lo + self.points * (hi - lo)

    def parameter_set(self, row: int, base: ParameterSet) -> ParameterSet:
        ps = base.copy()
        for p, v in zip(self.parameters, self.values()[row]):
            p.apply(ps, float(v))
        return ps


# --- PRCC ----------------------------------------------------------------------


def _rank(column: np.ndarray) -> np.ndarray:
    # average ranks for ties
    order = np.argsort(column, kind="mergesort")
    ranks = np.empty_like(column, dtype=float)
    sorted_vals = column[order]
    n = column.size
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def prcc(X: np.ndarray, y: np.ndarray, bonferroni_family: int | None = None
         ) -> list[tuple[float, float, float]]:
    """Partial rank correlation of each input with the output.

    Rank-transforms everything, then correlates the residuals of each
    input and of the output after regressing both on the remaining inputs.
    Returns (coefficient, t, corrected p) per input; the Bonferroni factor
    defaults to the number of inputs.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k + 2:
        raise ValueError("need n > k + 2 observations")
    for j in range(k):
        col = X[:, j]
        _, counts = np.unique(col, return_counts=True)
        if counts.max() > n // 2:
            raise ValueError(f"input column {j} is degenerate (mostly ties)")
    family = bonferroni_family if bonferroni_family is not None else k
    rx = np.column_stack([_rank(X[:, j]) for j in range(k)])
    ry = _rank(y)
    ones = np.ones((n, 1))
    out = []
    df = n - 2 - (k - 1)
    for j in range(k):
        others = np.hstack([ones, np.delete(rx, j, axis=1)])
        bx, *_ = np.linalg.lstsq(others, rx[:, j], rcond=None)
        by, *_ = np.linalg.lstsq(others, ry, rcond=None)
        ex = rx[:, j] - others @ bx
        ey = ry - others @ by
        denom = math.sqrt(float(ex @ ex) * float(ey @ ey))
        r = float(ex @ ey) / denom if denom > 0 else 0.0
        r = max(min(r, 1.0), -1.0)
        if abs(r) >= 1.0:
            t = math.inf
            p = 0.0
        else:
            t = r * math.sqrt(df / (1.0 - r * r))
            p = 2.0 * (1.0 - student_t_cdf(abs(t), df))
        out.append((r, t, min(p * family, 1.0)))
    return out


def effect_sizes(X: np.ndarray, y: np.ndarray,
                 bonferroni_family: int | None = None,
                 alpha: float = 0.05) -> list[tuple[float, bool]]:
    """Log-log OLS effect sizes on [0, 1]-mapped inputs.

    Inputs are shifted by +1 before the log so the lower range end stays
    finite; outputs must be positive (offset count outputs by +1 upstream
    when they can be zero).  Returns (coefficient, significant) pairs whose
    significance shares the Bonferroni family of the PRCC analysis.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("outputs must be positive for the log transform")
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("inputs must be mapped to [0, 1]")
    n, k = X.shape
    family = bonferroni_family if bonferroni_family is not None else k
    design = np.hstack([np.ones((n, 1)), np.log1p(X)])
    fit = ols(design, np.log(y))
    out = []
    for j in range(k):
        p = fit.p_values[j + 1]
        out.append((float(fit.coefficients[j + 1]), p * family < alpha))
    return out


# --- end-to-end ----------------------------------------------------------------


@dataclass
class SensitivityResult:
    design: SensitivityDesign
    years: tuple[int, ...]
    outputs: tuple[str, ...]
    # maps (output, year) -> vector over design points
    responses: dict = field(default_factory=dict)
    # maps (output, year) -> list per parameter of (prcc, t, p) / (effect, sig)
    prcc_tables: dict = field(default_factory=dict)
    effect_tables: dict = field(default_factory=dict)


def _point_outputs(args):
    base, scenario, design_blob, row, reps, years = args
    design = SensitivityDesign(design_blob[0], design_blob[1], reps)
    ps = design.parameter_set(row, base)
    acc = {(o, y): 0.0 for o in OUTPUTS for y in years}
    for rep in range(reps):
        res = run_replication(ps, scenario, rep)
        for o in OUTPUTS:
            for y in years:
                yi = res.years.index(y)
                acc[(o, y)] += sum(res.counts[c][yi] for c in _OUTPUT_COLS[o])
    return {key: v / reps for key, v in acc.items()}


def run_sensitivity(design: SensitivityDesign, scenario: ScenarioConfig,
                    base_params: ParameterSet,
                    years: tuple[int, ...] = DEFAULT_YEARS,
                    threads: int = 1,
                    progress=None) -> SensitivityResult:
    """Run the full design and compute both analysis tables.

    Each design point runs ``replications_per_point`` replications whose
    yearly outputs are averaged.  The Bonferroni family is the total number
    of (parameter, output, year) tests in this batch.
    """
    n = design.points.shape[0]
    reps = design.replications_per_point
    jobs = [(base_params, scenario, (design.points, design.parameters), row,
             reps, years) for row in range(n)]
    if threads <= 1:
        rows = []
        for i, job in enumerate(jobs):
            try:
                rows.append(_point_outputs(job))
            except Exception as exc:
                raise RuntimeError(f"design point {i} failed: {exc}") from exc
            if progress:
                progress(i + 1, n)
    else:
        from multiprocessing import Pool
        with Pool(processes=threads) as pool:
            rows = []
            for i, out in enumerate(pool.imap(_point_outputs, jobs,
                                              chunksize=4)):
                rows.append(out)
                if progress:
                    progress(i + 1, n)

    result = SensitivityResult(design, tuple(years), OUTPUTS)
    k = len(design.parameters)
    family = k * len(OUTPUTS) * len(years)
    for o in OUTPUTS:
        for y in years:
            vec = np.array([r[(o, y)] for r in rows])
            result.responses[(o, y)] = vec
            result.prcc_tables[(o, y)] = prcc(design.values(), vec,
                                              bonferroni_family=family)
            # counts can be zero at small scales; +1 keeps the log finite
            result.effect_tables[(o, y)] = effect_sizes(
                design.points, vec + 1.0, bonferroni_family=family)
    return result
