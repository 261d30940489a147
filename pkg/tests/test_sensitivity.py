"""Sensitivity tests: Sobol generation, PRCC, effect sizes, design mapping."""

import math

import numpy as np
import pytest
from scipy.stats import qmc

from oudsim.scenario import ParameterSet, ScenarioConfig
from oudsim.sensitivity import (TABLE, SensitivityDesign, _point_outputs,
                                effect_sizes, prcc, sobol_points)


class TestSobol:
    def test_first_four_points_dim1(self):
        pts = sobol_points(1, 4)[:, 0]
        assert pts.tolist() == [0.0, 0.5, 0.75, 0.25]

    def test_matches_scipy_reference(self):
        # independent oracle: scipy's unscrambled Sobol (same Joe-Kuo table)
        ours = sobol_points(41, 128)
        ref = qmc.Sobol(d=41, scramble=False).random(128)
        assert np.allclose(ours, ref, atol=1e-12)

    def test_one_dim_stratification(self):
        pts = sobol_points(5, 1024)
        for j in range(5):
            bins = np.floor(pts[:, j] * 1024).astype(int)
            assert sorted(bins) == list(range(1024))

    def test_two_dim_bin_occupancy(self):
        pts = sobol_points(2, 1024)
        grid = np.zeros((32, 32), dtype=int)
        for x, y in pts:
            grid[int(x * 32), int(y * 32)] += 1
        assert abs(grid.max() - 1) <= 3
        assert abs(grid.min() - 1) <= 3

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            sobol_points(0, 8)
        with pytest.raises(ValueError):
            sobol_points(100, 8)
        with pytest.raises(ValueError):
            sobol_points(3, 100)  # not a power of two


class TestPrcc:
    def test_perfect_monotone_dependence(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(400, 4))
        y = X[:, 0].copy()
        res = prcc(X, y)
        assert res[0][0] > 0.999
        for coef, _, _ in res[1:]:
            assert abs(coef) < 0.15

    def test_rank_invariance_exact(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(300, 3))
        y = X[:, 0] - 0.5 * X[:, 1] + 0.1 * rng.standard_normal(300)
        base = prcc(X, y)
        Xe = X.copy()
        Xe[:, 1] = np.exp(Xe[:, 1])        # strictly monotone transform
        ye = np.exp(y)
        after = prcc(Xe, ye)
        for (r0, _, _), (r1, _, _) in zip(base, after):
            assert r0 == pytest.approx(r1, abs=1e-12)

    def test_against_analytic_partial_correlation(self):
        # linear-Gaussian model: partial correlations come from the
        # precision matrix of (x1, x2, x3, y)
        rng = np.random.default_rng(2)
        n = 200
        X = rng.standard_normal((n, 3))
        beta = np.array([1.0, -0.7, 0.4])
        y = X @ beta + rng.standard_normal(n)
        cov = np.cov(np.column_stack([X, y]).T)
        prec = np.linalg.inv(cov)
        want = [-prec[j, 3] / math.sqrt(prec[j, j] * prec[3, 3])
                for j in range(3)]
        got = [r for r, _, _ in prcc(X, y)]
        for g, w in zip(got, want):
            assert g == pytest.approx(w, abs=0.05)

    def test_bonferroni_factor(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(100, 3))
        y = rng.uniform(size=100)
        raw = prcc(X, y, bonferroni_family=1)
        corrected = prcc(X, y, bonferroni_family=615)
        for (r0, t0, p0), (r1, t1, p1) in zip(raw, corrected):
            assert (r0, t0) == (r1, t1)
            assert p1 == pytest.approx(min(p0 * 615, 1.0))

    def test_degenerate_column_rejected(self):
        X = np.ones((50, 2))
        X[:, 1] = np.arange(50)
        with pytest.raises(ValueError, match="degenerate"):
            prcc(X, np.arange(50.0))

    def test_needs_enough_observations(self):
        with pytest.raises(ValueError):
            prcc(np.random.default_rng(0).uniform(size=(5, 4)),
                 np.arange(5.0))


class TestEffectSizes:
    def test_single_active_input(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(size=(1024, 5))
        y = 40.0 * (1.0 + X[:, 2]) ** 1.8
        res = effect_sizes(X, y)
        coefs = [c for c, _ in res]
        assert coefs[2] == pytest.approx(1.8, abs=0.02)
        for j in (0, 1, 3, 4):
            assert abs(coefs[j]) < 0.02

    def test_constant_output(self):
        X = np.random.default_rng(5).uniform(size=(64, 3))
        res = effect_sizes(X, np.full(64, 7.0))
        for c, sig in res:
            assert c == pytest.approx(0.0, abs=1e-9)
            assert not sig

    def test_positive_outputs_required(self):
        X = np.random.default_rng(6).uniform(size=(32, 2))
        with pytest.raises(ValueError, match="positive"):
            effect_sizes(X, np.zeros(32))

    def test_inputs_must_be_unit_mapped(self):
        X = np.random.default_rng(7).uniform(size=(32, 2)) + 3.0
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            effect_sizes(X, np.ones(32))


class TestDesignMapping:
    def test_affine_endpoints(self):
        design = SensitivityDesign(np.zeros((1, len(TABLE))))
        lo_vals = design.values()[0]
        for p, v in zip(TABLE, lo_vals):
            assert v == pytest.approx(p.low, rel=1e-12)
        design = SensitivityDesign(np.ones((1, len(TABLE))))
        for p, v in zip(TABLE, design.values()[0]):
            assert v == pytest.approx(p.high, rel=1e-12)
        design = SensitivityDesign(np.full((1, len(TABLE)), 0.5))
        for p, v in zip(TABLE, design.values()[0]):
            assert v == pytest.approx(0.5 * (p.low + p.high))

    def test_every_row_maps_to_one_field(self):
        assert len(TABLE) == 41
        assert len({(p.target, p.key) for p in TABLE}) == 41
        base = ParameterSet()
        for p in TABLE:
            assert hasattr(base, p.target), p.target

    def test_parameter_set_application(self):
        design = SensitivityDesign(np.full((1, len(TABLE)), 0.5))
        ps = design.parameter_set(0, ParameterSet())
        assert ps.active_to_arrest.params["mu"] == pytest.approx(
            0.5 * (9.54 + 10.55))
        # triangular rows collapse to the design value
        tri = ps.starting_population.params
        assert tri["low"] == tri["mode"] == tri["high"] == pytest.approx(
            0.5 * (25934.05 + 46291.35))
        # arrival row maps through the published rate parameterization
        assert ps.arrival_gap.params["mean"] == pytest.approx(
            1.0 / (0.5 * (10.32 + 11.41)))
        # base remains untouched
        assert ParameterSet().active_to_arrest.params["mu"] == 10.04

    def test_collapsed_design_reproduces_base_outputs(self):
        # a width-zero design at the base point must equal the base run
        base = ParameterSet()
        base.scale = 0.01
        collapsed = tuple(
            type(p)(p.index, p.name, p.target, p.key, _base_value(p),
                    _base_value(p))
            for p in TABLE)
        design = SensitivityDesign(np.full((1, 41), 0.37), collapsed, 1)
        sc = ScenarioConfig()
        got = _point_outputs((base, sc, (design.points, design.parameters),
                              0, 1, (2016,)))
        from oudsim.engine import run_replication
        ref = run_replication(design.parameter_set(0, base), sc, 0)
        # the collapsed design equals a base model whose triangular
        # starting draws are pinned at their base values
        yi = ref.years.index(2016)
        assert got[("deaths", 2016)] == ref.counts["deaths_opioid"][yi]
        assert got[("active", 2016)] == ref.counts["active_year_end"][yi]


def _base_value(p):
    base = ParameterSet()
    if p.key in ("mu", "sigma"):
        return getattr(base, p.target).params[p.key]
    if p.key == "scalar":
        return getattr(base, p.target)
    if p.key == "rate":
        return base.arrival_gap.params["mean"] * 100.0
    if p.key == "fixed-triangular":
        return getattr(base, p.target).params["mode"]
    raise AssertionError(p.key)
