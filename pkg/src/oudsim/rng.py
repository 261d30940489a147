"""Keyed, counter-based random number generation and sampling primitives.

Every uniform variate is a pure function of a 5-part key (master seed,
replication index, stream id, entity id, draw counter), so any draw can be
reproduced in isolation and two runs that share a seed stay synchronized
draw-for-draw on every stream regardless of how events interleave.  This is
what makes common-random-numbers comparisons between policy scenarios work:
person 1234's third "time to arrest" draw is the same number in both runs.

The mixing function is the SplitMix64 finalizer applied to a per-(stream,
entity) base hash plus counter * golden gamma, i.e. each (stream, entity)
pair owns an independent SplitMix64 output sequence.  Not cryptographic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_INV53 = 1.0 / (1 << 53)

# Default cap on rejection sampling for truncated distributions.
MAX_TRUNCATION_RESAMPLES = 10_000


class Stream(IntEnum):
    """Purpose-specific random streams.

    One stream per sampled model input plus one per policy decision point,
    so that changing one policy or parameter never shifts the draws consumed
    by any other part of the model.
    """

    POPULATION = 0        # starting-population size / composition draws
    START_STATE = 1       # starting-state multinomial, one draw per person
    START_PREV_STATE = 2  # previous state for persons starting inactive
    INITIATION_AGE = 3    # age at first use, new arrivals
    PREVALENCE_AGE = 4    # age of starting-population members
    ARRIVAL = 5           # arc (1) inter-arrival times
    ACTIVE_TO_DEATH_PRE = 6    # arc (2), before the fentanyl switch date
    ACTIVE_TO_DEATH_POST = 7   # arc (2), after the switch date
    ACTIVE_TO_HOSPITAL = 8     # arc (3)
    ACTIVE_TO_ARREST = 9       # arc (4)
    ACTIVE_TO_TREATMENT = 10   # arc (5)
    ACTIVE_TO_INACTIVE = 11    # arc (6)
    NATURAL_DEATH = 12         # arc (7) residual-life draw
    NONOPIOID_ARREST = 13      # arc (8)
    HOSPITAL_STAY = 14         # arc (A)
    CJS_STAY = 15              # arc (B)
    TREATMENT_STAY = 16        # arc (C)
    INACTIVE_AFTER_CJS = 17    # arc (D)
    INACTIVE_AFTER_TREATMENT = 18  # arc (E)
    INACTIVE_AFTER_HOSPITAL = 19   # arc (F)
    INACTIVE_AFTER_ACTIVE = 20     # arc (G)
    GATE_AD = 21          # arrest-diversion gate
    GATE_OD = 22          # overdose-diversion gate (reserved; the hospital
                          # outcome multinomial embeds the OD branch)
    GATE_CM = 23          # case-management gate
    HOSPITAL_OUTCOME = 24  # death / arrest / treatment / inactive multinomial


@dataclass(frozen=True)
class StreamKey:
    """Full address of one uniform variate."""

    master_seed: int
    replication: int
    stream_id: int
    entity_id: int = 0
    draw_counter: int = 0

    def next(self, advance: int = 1) -> "StreamKey":
        return StreamKey(self.master_seed, self.replication, self.stream_id,
                         self.entity_id, self.draw_counter + advance)


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def replication_hash(master_seed: int, replication: int) -> int:
    """Hash of the (seed, replication) pair, shared by all streams of a run."""
    h = _mix((master_seed & _M64) ^ 0x5851F42D4C957F2D)
    return _mix(h ^ ((replication * 0xC2B2AE3D27D4EB4F) & _M64))


def stream_base(rep_hash: int, stream_id: int, entity_id: int) -> int:
    """Base hash owned by one (stream, entity) pair within a replication.

    One mix round suffices here: every consumer finishes with the full
    SplitMix64 finalizer over base + counter * gamma.
    """
    return _mix((rep_hash ^ (stream_id * 0x165667B19E3779F9)
                 ^ (entity_id * 0xD6E8FEB86659FD93)) & _M64)


def uniform_at(base: int, counter: int) -> float:
    """Uniform [0, 1) variate at a given counter of a (stream, entity) pair."""
    z = (base + counter * _GAMMA) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    z ^= z >> 31
    return (z >> 11) * _INV53


def uniform(key: StreamKey) -> float:
    """Uniform [0, 1) variate; a pure, stateless function of the key."""
    base = stream_base(replication_hash(key.master_seed, key.replication),
                       key.stream_id, key.entity_id)
    return uniform_at(base, key.draw_counter)


# --- inverse normal CDF (AS 241, PPND16) -----------------------------------

_PPND_A = (3.3871328727963666080e0, 1.3314166789178437745e2,
           1.9715909503065514427e3, 1.3731693765509461125e4,
           4.5921953931549871457e4, 6.7265770927008700853e4,
           3.3430575583588128105e4, 2.5090809287301226727e3)
_PPND_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
           5.3941960214247511077e3, 2.1213794301586595867e4,
           3.9307895800092710610e4, 2.8729085735721942674e4,
           5.2264952788528545610e3)
_PPND_C = (1.42343711074968357734e0, 4.63033784615654529590e0,
           5.76949722146069140550e0, 3.64784832476320460504e0,
           1.27045825245236838258e0, 2.41780725177450611770e-1,
           2.27238449892691845833e-2, 7.74545014278341407640e-4)
_PPND_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
           6.89767334985100004550e-1, 1.48103976427480074590e-1,
           1.51986665636164571966e-2, 5.47593808499534494600e-4,
           1.05075007164441684324e-9)
_PPND_E = (6.65790464350110377720e0, 5.46378491116411436990e0,
           1.78482653991729133580e0, 2.96560571828504891230e-1,
           2.65321895265761230930e-2, 1.24266094738807843860e-3,
           2.71155556874348757815e-5, 2.01033439929228813265e-7)
_PPND_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
           1.48753612908506148525e-2, 7.86869131145613259100e-4,
           1.84631831751005468180e-5, 1.42151175831644588870e-7,
           2.04426310338993978564e-15)


def _poly(coeffs, r: float) -> float:
    acc = coeffs[7]
    for c in (coeffs[6], coeffs[5], coeffs[4], coeffs[3], coeffs[2],
              coeffs[1], coeffs[0]):
        acc = acc * r + c
    return acc


def inverse_normal_cdf(q: float) -> float:
    """Standard normal quantile, |error| < 1e-9 over (0, 1).

    Wichura's AS 241 rational approximation (the double-precision PPND16
    branch set).  The central branch is unrolled because this sits on the
    innermost sampling path of the simulation.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    p = q - 0.5
    if -0.425 <= p <= 0.425:
        r = 0.180625 - p * p
        return p * (((((((2.5090809287301226727e3 * r
            + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r
            + 4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r
            + 1.9715909503065514427e3) * r + 1.3314166789178437745e2) * r
            + 3.3871328727963666080e0) / (((((((5.2264952788528545610e3 * r
            + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r
            + 2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r
            + 6.8718700749205790830e2) * r + 4.2313330701600911252e1) * r
            + 1.0)
    r = q if p < 0 else 1.0 - q
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_PPND_C, r) / _poly(_PPND_D, r)
    else:
        r -= 5.0
        val = _poly(_PPND_E, r) / _poly(_PPND_F, r)
    return -val if p < 0 else val


def normal_cdf(x: float) -> float:
    """Standard normal CDF via erfc, accurate in both tails."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# --- distribution specifications --------------------------------------------

_FAMILIES = ("lognormal", "triangular", "exponential", "empirical-survival",
             "bernoulli", "multinomial")


@dataclass
class DistributionSpec:
    """One sampled law of the model, with parameters in days or years.

    ``params`` is family specific:

    * lognormal: mu, sigma, plus optional loc (location shift) and trunc
      (upper truncation, enforced by resampling)
    * triangular: low, mode, high
    * exponential: mean
    * empirical-survival: table (an object with ``residual_days(age, u)``)
    * bernoulli: p
    * multinomial: probs (list summing to <= 1; remainder is the last cell)
    """

    family: str
    params: dict = field(default_factory=dict)
    units: str = "days"

    # -- constructors --------------------------------------------------------

    @classmethod
    def lognormal(cls, mu: float, sigma: float, loc: float = 0.0,
                  trunc: Optional[float] = None, units: str = "days"):
        params = {"mu": float(mu), "sigma": float(sigma)}
        if loc:
            params["loc"] = float(loc)
        if trunc is not None:
            params["trunc"] = float(trunc)
        return cls("lognormal", params, units)

    @classmethod
    def triangular(cls, low: float, mode: float, high: float,
                   units: str = "days"):
        return cls("triangular",
                   {"low": float(low), "mode": float(mode),
                    "high": float(high)}, units)

    @classmethod
    def exponential(cls, mean: float, units: str = "days"):
        return cls("exponential", {"mean": float(mean)}, units)

    @classmethod
    def empirical_survival(cls, table, units: str = "days"):
        return cls("empirical-survival", {"table": table}, units)

    @classmethod
    def bernoulli(cls, p: float):
        return cls("bernoulli", {"p": float(p)}, "days")

    @classmethod
    def multinomial(cls, probs):
        return cls("multinomial", {"probs": [float(p) for p in probs]}, "days")

    # -- validation ----------------------------------------------------------

    def errors(self, path: str = "") -> list[str]:
        """All violated invariants, as human-readable strings."""
        out = []
        pre = f"{path}: " if path else ""
        if self.family not in _FAMILIES:
            return [f"{pre}unknown family {self.family!r}"]
        p = self.params
        if self.family == "lognormal":
            if p.get("sigma", 0.0) < 0.0:
                out.append(f"{pre}lognormal sigma must be >= 0")
            loc = p.get("loc", 0.0)
            trunc = p.get("trunc")
            if trunc is not None and trunc <= loc:
                out.append(f"{pre}truncation {trunc} must exceed location {loc}")
        elif self.family == "triangular":
            if not p["low"] <= p["mode"] <= p["high"]:
                out.append(f"{pre}triangular requires low <= mode <= high, "
                           f"got ({p['low']}, {p['mode']}, {p['high']})")
        elif self.family == "exponential":
            if p["mean"] <= 0.0:
                out.append(f"{pre}exponential mean must be > 0")
        elif self.family == "bernoulli":
            if not 0.0 <= p["p"] <= 1.0:
                out.append(f"{pre}probability out of range: {p['p']}")
        elif self.family == "multinomial":
            probs = p["probs"]
            if any(x < 0.0 for x in probs) or sum(probs) > 1.0 + 1e-12:
                out.append(f"{pre}multinomial probabilities invalid: {probs}")
        if self.units not in ("days", "years"):
            out.append(f"{pre}units must be 'days' or 'years'")
        return out

    def validate(self, path: str = "") -> None:
        errs = self.errors(path)
        if errs:
            raise ValueError("; ".join(errs))


def triangular_inverse(u: float, low: float, mode: float, high: float) -> float:
    """Inverse CDF of the triangular distribution (degenerate cases allowed)."""
    span = high - low
    if span <= 0.0:
        return low
    cut = (mode - low) / span
    if u < cut:
        return low + math.sqrt(u * span * (mode - low))
    return high - math.sqrt((1.0 - u) * span * (high - mode))


def sample(spec: DistributionSpec, key: StreamKey, *,
           current_age: Optional[float] = None,
           max_resamples: int = MAX_TRUNCATION_RESAMPLES) -> float:
    """Draw one value from ``spec`` using draws addressed from ``key``.

    Truncated lognormals resample (advancing the draw counter) until the
    value falls at or below the truncation bound; after ``max_resamples``
    failed attempts a RuntimeError is raised.  Multinomial samples return
    the category index as a float.
    """
    spec.validate()
    p = spec.params
    if spec.family == "lognormal":
        mu, sigma = p["mu"], p["sigma"]
        loc = p.get("loc", 0.0)
        trunc = p.get("trunc")
        for _ in range(max_resamples):
            u = uniform(key)
            key = key.next()
            value = loc + math.exp(mu + sigma * inverse_normal_cdf(_open_unit(u)))
            if trunc is None or value <= trunc:
                return value
        raise RuntimeError(
            f"truncated lognormal failed to produce a value <= {trunc} "
            f"after {max_resamples} resamples")
    u = uniform(key)
    if spec.family == "triangular":
        return triangular_inverse(u, p["low"], p["mode"], p["high"])
    if spec.family == "exponential":
        return -p["mean"] * math.log1p(-u)
    if spec.family == "bernoulli":
        return 1.0 if u < p["p"] else 0.0
    if spec.family == "multinomial":
        acc = 0.0
        probs = p["probs"]
        for i, q in enumerate(probs):
            acc += q
            if u < acc:
                return float(i)
        return float(len(probs))
    if spec.family == "empirical-survival":
        if current_age is None:
            raise ValueError("empirical-survival sampling requires current_age")
        return p["table"].residual_days(current_age, u)
    raise ValueError(f"unknown family {spec.family!r}")


def _open_unit(u: float) -> float:
    # keep the normal quantile finite at u == 0
    return u if u > 0.0 else 5e-324
