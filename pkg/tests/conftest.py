"""Shared fixtures: small-scale runs plus a disk cache for the heavy ones.

The acceptance suite needs hundreds of full-scale replications.  Those runs
are cached on disk keyed by a hash of the simulation source files and the
exact run signature, so re-running the suite does not recompute them unless
the model code or the configuration changed.
"""

from __future__ import annotations

import hashlib
import json
import os
import pickle
from pathlib import Path

import pytest

from oudsim import engine, estimation, rng, scenario
from oudsim.engine import run_scenario
from oudsim.scenario import ParameterSet, ScenarioConfig

CACHE_DIR = Path(__file__).parent / "_cache"


def _source_hash() -> str:
    h = hashlib.sha256()
    for mod in (rng, estimation, scenario, engine):
        h.update(Path(mod.__file__).read_bytes())
    return h.hexdigest()[:16]


def threads_available() -> int:
    return max(1, os.cpu_count() or 1)


def cached_run(params: ParameterSet, sc: ScenarioConfig, replications: int,
               threads: int | None = None):
    """run_scenario with a content-addressed on-disk cache."""
    key_blob = json.dumps({
        "src": _source_hash(),
        "params": params.to_jsonable(),
        "scenario": sc.to_jsonable(),
        "replications": replications,
    }, sort_keys=True).encode()
    key = hashlib.sha256(key_blob).hexdigest()[:24]
    path = CACHE_DIR / f"{key}.pkl"
    if path.exists():
        with open(path, "rb") as fh:
            return pickle.load(fh)
    results = run_scenario(params, sc, replications=replications,
                           threads=threads or threads_available())
    CACHE_DIR.mkdir(exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(results, fh, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, path)
    return results


@pytest.fixture(scope="session")
def base_params() -> ParameterSet:
    return ParameterSet()


@pytest.fixture(scope="session")
def small_params() -> ParameterSet:
    ps = ParameterSet()
    ps.scale = 0.02
    return ps


@pytest.fixture(scope="session")
def small_run(small_params):
    """Three small replications of the base scenario, shared across tests."""
    return cached_run(small_params, ScenarioConfig(), 3)
