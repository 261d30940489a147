"""Command-line entry points.

Subcommands: ``simulate`` (run scenario batches to CSV), ``analyze``
(cumulative comparisons against a base scenario), ``calibrate-check``
(target coverage of the base run), ``estimate`` (lognormal fitting),
``reps`` (replication sizing), ``sensitivity design|run|analyze``, and
``cost`` (price a set of event counts).  All outputs are plain CSV; configs
and manifests are JSON.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .engine import COUNT_COLUMNS, SOJOURN_CATEGORIES, run_scenario
from .estimation import ModeQuantileInput, fit_lognormal_mode_quantile, \
    sigma_from_mu_mode
from .scenario import (CostTable, ParameterSet, ScenarioConfig, load_params,
                       load_scenarios, parameter_hash, validate)
from .sensitivity import (DEFAULT_YEARS, OUTPUTS, SensitivityDesign, TABLE,
                          effect_sizes, prcc, run_sensitivity)
from .stats import (format_p, mean_ci, p_value_flag, paired_t_test,
                    prediction_interval, required_replications)
from .tally import reuse_rate, yearly_cost

RESULT_HEADER = ("scenario_id", "replication", "year") + COUNT_COLUMNS


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("OUD_DES_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _fail(msg: str) -> "NoReturn":  # noqa: F821
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(1)


# --- simulate -------------------------------------------------------------


def cmd_simulate(args) -> None:
    params = load_params(args.params) if args.params else ParameterSet()
    if args.scale is not None:
        params.scale = args.scale
    if args.scenarios:
        scenarios = load_scenarios(args.scenarios)
    else:
        scenarios = [ScenarioConfig()]
    if not scenarios:
        _fail(f"{args.scenarios}: no scenarios")
    if args.seed is not None:
        scenarios = [replace(s, master_seed=args.seed) for s in scenarios]
    if args.replications is not None:
        scenarios = [replace(s, replications=args.replications)
                     for s in scenarios]
    for i, sc in enumerate(scenarios):
        errs = validate(params, sc)
        if errs:
            src = args.scenarios or "<default scenario>"
            _fail(f"{src}[{i}]: " + "; ".join(errs))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = _threads(args)
    with open(out / "results.csv", "w", newline="") as fh, \
            open(out / "sojourns.csv", "w", newline="") as sf:
        w = csv.writer(fh)
        w.writerow(RESULT_HEADER)
        sw = csv.writer(sf)
        sw.writerow(("scenario_id", "replication", "category", "mean_days",
                     "episodes"))
        for sc in scenarios:
            results = run_scenario(params, sc, threads=threads)
            for r in results:
                for yi, year in enumerate(r.years):
                    w.writerow((r.scenario_id, r.replication, year)
                               + tuple(r.counts[c][yi] for c in COUNT_COLUMNS))
                for cat in SOJOURN_CATEGORIES:
                    sw.writerow((r.scenario_id, r.replication, cat,
                                 f"{r.sojourn_mean(cat):.6f}",
                                 r.sojourn_counts.get(cat, 0)))
            print(f"{sc.scenario_id}: {sc.replications} replications done")
    manifest = {
        "version": __version__,
        "parameter_hash": parameter_hash(params),
        "params": params.to_jsonable(),
        "scenarios": [s.to_jsonable() for s in scenarios],
        "threads_used": threads,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {out / 'results.csv'}")


# --- shared CSV reading -----------------------------------------------------


def read_results(path) -> dict[str, dict[int, dict[str, dict[int, float]]]]:
    """results.csv -> {scenario: {replication: {column: {year: value}}}}."""
    out: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(dict)))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            sid = row["scenario_id"]
            rep = int(row["replication"])
            year = int(row["year"])
            for col in COUNT_COLUMNS:
                out[sid][rep][col][year] = float(row[col])
    return out


def _window_sums(per_rep: dict, col: str, y0: int, y1: int) -> list[float]:
    reps = sorted(per_rep)
    out = []
    for rep in reps:
        series = per_rep[rep][col]
        if y0 not in series or y1 not in series:
            raise ValueError(f"window {y0}:{y1} missing from results")
        out.append(sum(v for y, v in series.items() if y0 <= y <= y1))
    return out


def _parse_window(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        _fail(f"bad window {text!r}; expected START:END like 2023:2032")


# --- analyze ----------------------------------------------------------------


ANALYSIS_COLUMNS = ("deaths_opioid", "arrests_opioid_nondiverted",
                    "hospital_encounters", "treatment_starts",
                    "active_year_end")


def cmd_analyze(args) -> None:
    y0, y1 = _parse_window(args.window)
    base_data = read_results(args.base)
    if len(base_data) != 1:
        _fail(f"{args.base}: expected exactly one scenario, "
              f"found {sorted(base_data)}")
    base_id, base_reps = next(iter(base_data.items()))

    costs = CostTable()
    rows = []

    def window_cost_series(per_rep) -> list[float]:
        sums = {c: _window_sums(per_rep, c, y0, y1)
                for c in ("deaths_opioid", "arrests_opioid_nondiverted",
                          "treatment_starts", "hospital_encounters",
                          "active_year_end", "inactive_year_end")}
        n = len(next(iter(sums.values())))
        return [yearly_cost({c: sums[c][i] for c in sums}, costs)
                for i in range(n)]

    base_cols = {c: _window_sums(base_reps, c, y0, y1)
                 for c in ANALYSIS_COLUMNS}
    base_cost = window_cost_series(base_reps)

    def emit(sid, per_rep, is_base):
        cols = {c: _window_sums(per_rep, c, y0, y1) for c in ANALYSIS_COLUMNS}
        cost = window_cost_series(per_rep)
        if not is_base and len(cost) != len(base_cost):
            _fail(f"{sid}: replication count {len(cost)} does not match "
                  f"base {len(base_cost)}; pairing impossible")
        for c in ANALYSIS_COLUMNS:
            vals = cols[c]
            m, h, lo, hi = mean_ci(vals)
            try:
                pi_lo, pi_hi = prediction_interval(vals)
            except ValueError:
                pi_lo = pi_hi = float("nan")
            if is_base:
                p = 1.0
            else:
                _, p = paired_t_test(vals, base_cols[c])
            rows.append({
                "scenario_id": sid, "statistic": c, "window": f"{y0}:{y1}",
                "mean": m, "se": np.std(vals, ddof=1) / len(vals) ** 0.5,
                "ci_low": lo, "ci_high": hi, "pi_low": pi_lo, "pi_high": pi_hi,
                "p_vs_base": format_p(p), "flag": p_value_flag(p),
            })
        m, h, lo, hi = mean_ci(cost)
        diff = 0.0 if is_base else m - float(np.mean(base_cost))
        p = 1.0 if is_base else paired_t_test(cost, base_cost)[1]
        rows.append({
            "scenario_id": sid, "statistic": "total_cost_usd",
            "window": f"{y0}:{y1}", "mean": m,
            "se": np.std(cost, ddof=1) / len(cost) ** 0.5,
            "ci_low": lo, "ci_high": hi, "pi_low": "", "pi_high": "",
            "p_vs_base": format_p(p), "flag": p_value_flag(p),
        })
        rows.append({
            "scenario_id": sid, "statistic": "cost_difference_usd",
            "window": f"{y0}:{y1}", "mean": diff, "se": "",
            "ci_low": "", "ci_high": "", "pi_low": "", "pi_high": "",
            "p_vs_base": format_p(p), "flag": p_value_flag(p),
        })
        # re-use rates for the requested years
        for kind, (ep_cols, person_col) in (
                ("rearrest_rate", (("arrests_opioid_nondiverted",
                                    "arrests_opioid_diverted"),
                                   "persons_arrested")),
                ("rehospitalization_rate", (("hospital_encounters",),
                                            "persons_hospitalized")),
                ("treatment_restart_rate", (("treatment_starts",),
                                            "persons_treated"))):
            for year in rate_years:
                vals = []
                for rep in sorted(per_rep):
                    persons = per_rep[rep][person_col].get(year, 0)
                    if persons <= 0:
                        continue
                    episodes = sum(per_rep[rep][c].get(year, 0.0)
                                   for c in ep_cols)
                    vals.append(reuse_rate(episodes, persons))
                if len(vals) < 2:
                    continue
                m, h, lo, hi = mean_ci(vals)
                rows.append({
                    "scenario_id": sid, "statistic": f"{kind}_{year}",
                    "window": str(year), "mean": m,
                    "se": np.std(vals, ddof=1) / len(vals) ** 0.5,
                    "ci_low": lo, "ci_high": hi, "pi_low": "", "pi_high": "",
                    "p_vs_base": "", "flag": "",
                })

    rate_years = ([int(y) for y in args.rate_years.split(",")]
                  if args.rate_years else [y1])
    emit(base_id, base_reps, True)
    for alt_path in args.alternatives:
        for sid, per_rep in sorted(read_results(alt_path).items()):
            emit(sid, per_rep, sid == base_id)

    writer = csv.DictWriter(_open_out(args.out), fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", newline="")


# --- calibrate-check ---------------------------------------------------------


TARGET_COLUMNS = {
    "deaths": "deaths_opioid",
    "arrests": "arrests_opioid_nondiverted",
    "treatments": "treatment_starts",
    "hospital": "hospital_encounters",
}


def cmd_calibrate_check(args) -> None:
    data = read_results(args.results)
    if len(data) != 1:
        _fail(f"{args.results}: expected exactly one scenario")
    per_rep = next(iter(data.values()))

    targets = []
    with open(args.targets, newline="") as fh:
        for row in csv.DictReader(fh):
            targets.append((int(row["year"]), row["output_kind"].strip(),
                            float(row["observed_value"])))
    if not targets:
        _fail(f"{args.targets}: no targets")

    out = csv.writer(_open_out(args.out))
    out.writerow(("year", "output_kind", "observed", "sim_mean",
                  "pi_low", "pi_high", "inside_pi", "relative_error"))
    errors = []
    inside = 0
    for year, kind, observed in targets:
        col = TARGET_COLUMNS.get(kind)
        if col is None:
            _fail(f"unknown output kind {kind!r}; "
                  f"expected one of {sorted(TARGET_COLUMNS)}")
        vals = []
        for rep in sorted(per_rep):
            if year not in per_rep[rep][col]:
                _fail(f"simulation results lack year {year} for {kind}")
            vals.append(per_rep[rep][col][year])
        mean = float(np.mean(vals))
        try:
            pi_lo, pi_hi = prediction_interval(vals)
        except ValueError:
            # too few replications for empirical 95% quantiles; fall back
            # to the sample range so coverage stays meaningful
            pi_lo, pi_hi = min(vals), max(vals)
        ok = pi_lo <= observed <= pi_hi
        inside += ok
        rel = abs(mean - observed) / observed if observed else float("inf")
        errors.append(rel)
        out.writerow((year, kind, observed, f"{mean:.2f}", f"{pi_lo:.2f}",
                      f"{pi_hi:.2f}", int(ok), f"{rel:.4f}"))
    print(f"targets inside 95% PI: {inside}/{len(targets)}; "
          f"average calibration error: {100 * float(np.mean(errors)):.2f}%",
          file=sys.stderr)


# --- estimate / reps ---------------------------------------------------------


def cmd_estimate(args) -> None:
    if args.inputs:
        with open(args.inputs) as fh:
            entries = json.load(fh)
        if not isinstance(entries, list):
            _fail(f"{args.inputs}: expected a JSON array of fit inputs")
        for i, e in enumerate(entries):
            mu, sigma = fit_lognormal_mode_quantile(ModeQuantileInput(
                mode=e["mode"], quantile_value=e["xq"],
                quantile_level=e["q"], location=e.get("loc", 0.0)))
            name = e.get("name", f"fit{i}")
            print(f"{name}: mu={mu:.4f} sigma={sigma:.4f}")
        return
    if args.mode is None:
        _fail("need --mode (or --inputs FILE)")
    if args.mu is not None:
        sigma = sigma_from_mu_mode(args.mu, args.mode, args.loc)
        print(f"mu={args.mu:.4f} sigma={sigma:.4f}")
        return
    if args.q is None or args.xq is None:
        _fail("need either --mu, or both --q and --xq")
    mu, sigma = fit_lognormal_mode_quantile(ModeQuantileInput(
        mode=args.mode, quantile_value=args.xq, quantile_level=args.q,
        location=args.loc))
    print(f"mu={mu:.4f} sigma={sigma:.4f}")


def cmd_reps(args) -> None:
    n = required_replications(args.s, getattr(args, "h"), args.alpha,
                              args.pilot)
    print(n)


# --- sensitivity -------------------------------------------------------------


def _write_design(design: SensitivityDesign, path) -> None:
    values = design.values()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point"] + [f"p{p.index:02d}_{p.target}_{p.key}"
                                for p in design.parameters])
        for i in range(values.shape[0]):
            w.writerow([i] + [f"{v:.10g}" for v in values[i]])


def _read_design(path) -> SensitivityDesign:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    values = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    if values.shape[1] != len(TABLE):
        raise ValueError(f"{path}: expected {len(TABLE)} parameter columns")
    lo = np.array([p.low for p in TABLE])
    hi = np.array([p.high for p in TABLE])
    points = (values - lo) / np.where(hi > lo, hi - lo, 1.0)
    return SensitivityDesign(np.clip(points, 0.0, 1.0), TABLE)


def _write_sens_results(result, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("parameter", "parameter_name", "output", "year", "prcc",
                    "prcc_t", "prcc_p", "effect", "effect_significant"))
        for o in result.outputs:
            for y in result.years:
                pr = result.prcc_tables[(o, y)]
                ef = result.effect_tables[(o, y)]
                for param, (r, t, p), (e, sig) in zip(result.design.parameters,
                                                      pr, ef):
                    w.writerow((param.index, param.name, o, y, f"{r:.4f}",
                                f"{t:.3f}", f"{p:.4g}", f"{e:.4f}", int(sig)))


def cmd_sensitivity(args) -> None:
    if args.action == "design":
        design = SensitivityDesign.sobol(args.n, args.reps_per_point)
        _write_design(design, args.out or "design.csv")
        print(f"wrote {args.out or 'design.csv'} "
              f"({args.n} x {len(TABLE)} points)")
        return

    design = (_read_design(args.design) if args.design
              else SensitivityDesign.sobol(args.n, args.reps_per_point))
    design.replications_per_point = args.reps_per_point
    params = load_params(args.params) if args.params else ParameterSet()
    if args.scale is not None:
        params.scale = args.scale
    scenario = ScenarioConfig(ad=args.ad, od=args.od, cm=args.cm,
                              master_seed=args.seed)
    years = tuple(int(y) for y in args.years.split(","))

    if args.action == "run":
        result = run_sensitivity(design, scenario, params, years=years,
                                 threads=_threads(args),
                                 progress=lambda i, n: print(
                                     f"\r{i}/{n} points", end="",
                                     file=sys.stderr))
        print(file=sys.stderr)
        out = Path(args.out or "sens_results.csv")
        _write_sens_results(result, out)
        resp_path = out.with_name("responses.csv")
        with open(resp_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("point",) + tuple(f"{o}_{y}" for o in OUTPUTS
                                          for y in years))
            n = design.points.shape[0]
            for i in range(n):
                w.writerow((i,) + tuple(
                    f"{result.responses[(o, y)][i]:.6f}"
                    for o in OUTPUTS for y in years))
        print(f"wrote {out} and {resp_path}")
        return

    if args.action == "analyze":
        if not args.design or not args.responses:
            _fail("sensitivity analyze needs --design and --responses")
        with open(args.responses, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0][1:]
        data = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        from .sensitivity import SensitivityResult
        result = SensitivityResult(design, years, OUTPUTS)
        family = len(design.parameters) * len(header)
        for j, name in enumerate(header):
            o, y = name.rsplit("_", 1)
            key = (o, int(y))
            vec = data[:, j]
            result.responses[key] = vec
            result.prcc_tables[key] = prcc(design.values(), vec,
                                           bonferroni_family=family)
            result.effect_tables[key] = effect_sizes(design.points, vec + 1.0,
                                                     bonferroni_family=family)
        result.years = tuple(sorted({int(n.rsplit("_", 1)[1])
                                     for n in header}))
        _write_sens_results(result, args.out or "sens_results.csv")
        print(f"wrote {args.out or 'sens_results.csv'}")
        return
    _fail(f"unknown sensitivity action {args.action!r}")


# --- cost --------------------------------------------------------------------


def cmd_cost(args) -> None:
    costs = CostTable()
    counts = {
        "deaths_opioid": args.deaths,
        "arrests_opioid_nondiverted": args.arrests,
        "treatment_starts": args.treatments,
        "hospital_encounters": args.hospital,
        "active_year_end": args.active,
        "inactive_year_end": args.inactive,
    }
    total = yearly_cost(counts, costs)
    print(f"total_usd={total:,.0f}")
    print(f"total_millions={total / 1e6:.1f}")


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="oudsim",
        description="Discrete-event simulation of opioid-use trajectories "
                    "and treatment-diversion policies.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run scenario batches")
    sim.add_argument("--params", help="params.json (empty file = base model)")
    sim.add_argument("--scenarios", help="scenarios.json (array)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None,
                     help="override every scenario's master seed")
    sim.add_argument("--replications", type=int, default=None,
                     help="override every scenario's replication count")
    sim.add_argument("--scale", type=float, default=None,
                     help="population scale factor (1.0 = full)")
    sim.set_defaults(func=cmd_simulate)

    an = sub.add_parser("analyze", help="compare scenarios against a base")
    an.add_argument("base", help="results.csv holding the base scenario")
    an.add_argument("alternatives", nargs="*",
                    help="results.csv files with alternative scenarios")
    an.add_argument("--window", default="2023:2032")
    an.add_argument("--rate-years", default=None,
                    help="comma-separated years for re-use rates")
    an.add_argument("--out", default="-")
    an.set_defaults(func=cmd_analyze)

    cal = sub.add_parser("calibrate-check",
                         help="coverage of observed targets by simulated PIs")
    cal.add_argument("--results", required=True)
    cal.add_argument("--targets", required=True,
                     help="CSV with year,output_kind,observed_value")
    cal.add_argument("--out", default="-")
    cal.set_defaults(func=cmd_calibrate_check)

    est = sub.add_parser("estimate", help="fit a lognormal from mode/quantile")
    est.add_argument("--mode", type=float, default=None)
    est.add_argument("--inputs", default=None,
                     help="JSON array of {mode, xq, q, loc?, name?} fits")
    est.add_argument("--q", type=float, default=None)
    est.add_argument("--xq", type=float, default=None)
    est.add_argument("--loc", type=float, default=0.0)
    est.add_argument("--mu", type=float, default=None,
                     help="solve only sigma from a known mu and the mode")
    est.set_defaults(func=cmd_estimate)

    rp = sub.add_parser("reps", help="replications needed for a half width")
    rp.add_argument("--s", type=float, required=True,
                    help="estimated standard deviation")
    rp.add_argument("--h", type=float, required=True, help="half width")
    rp.add_argument("--alpha", type=float, default=0.05)
    rp.add_argument("--pilot", type=int, default=600)
    rp.set_defaults(func=cmd_reps)

    sens = sub.add_parser("sensitivity", help="design / run / analyze")
    sens.add_argument("action", choices=("design", "run", "analyze"))
    sens.add_argument("--n", type=int, default=1024,
                      help="number of design points (power of two)")
    sens.add_argument("--reps-per-point", type=int, default=3)
    sens.add_argument("--design", default=None, help="design.csv to reuse")
    sens.add_argument("--responses", default=None,
                      help="responses.csv (for analyze)")
    sens.add_argument("--params", default=None)
    sens.add_argument("--scale", type=float, default=None)
    sens.add_argument("--ad", type=float, default=60.0)
    sens.add_argument("--od", type=float, default=80.0)
    sens.add_argument("--cm", type=float, default=60.0)
    sens.add_argument("--seed", type=int, default=20090101)
    sens.add_argument("--years", default=",".join(str(y)
                                                  for y in DEFAULT_YEARS))
    sens.add_argument("--threads", type=int, default=None)
    sens.add_argument("--out", default=None)
    sens.set_defaults(func=cmd_sensitivity)

    co = sub.add_parser("cost", help="price a set of yearly event counts")
    co.add_argument("--deaths", type=float, default=0)
    co.add_argument("--arrests", type=float, default=0)
    co.add_argument("--treatments", type=float, default=0)
    co.add_argument("--hospital", type=float, default=0)
    co.add_argument("--active", type=float, default=0)
    co.add_argument("--inactive", type=float, default=0)
    co.set_defaults(func=cmd_cost)

    return ap


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
