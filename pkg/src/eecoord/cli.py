"""Batch experiment harness.

Three subcommands operate on an INI-style config file (section
``[scenario]`` for the drop parameters, ``[sweep]`` for the experiment):

* ``sweep``    -- Monte Carlo sweep over transmit-power and out-of-cluster
  interference levels; one CSV row per (pmax, pout, drop) plus mean/std
  aggregate rows.
* ``trace``    -- a single solve with the per-iteration objective dumped
  as CSV.
* ``scenario`` -- dump one drawn instance's gain and noise tables.

Powers are configured in dBm, distances in meters.  Command-line flags
override file keys; rows are emitted in deterministic (pmax, pout, drop)
order regardless of worker scheduling.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import model
from .baseline import max_power, solve_sumrate
from .model import SolverError
from .scenario import Scenario, ScenarioConfig, draw_scenario
from .solver_gee import GeeOptions, solve_gee, solve_gee_nl
from .solver_prodee import solve_prodee, solve_prodee_nl
from .solver_sumee import solve_sumee, solve_sumee_nl

OBJECTIVES = ("gee", "sumee", "prodee", "sumrate", "maxpower")

SWEEP_COLUMNS = [
    "pmax_dbm", "pout_dbm", "drop", "objective_name", "gee", "sumee", "prodee", "sumrate",
    "p_rad_bs1_w", "p_rad_bs2_w", "p_rad_bs3_w", "ee_slot_std", "iterations", "converged",
]

SWEEP_UNITS = ("# units: pmax_dbm,pout_dbm dBm; gee,sumee bit/s/W; prodee ln(bit/s/W); "
               "sumrate bit/s; p_rad_* W; ee_slot_std bit/s/W")


@dataclass
class SweepSpec:
    """One experiment: objective, constraint, power grids, drops, weights."""

    objective: str = "gee"
    constraint: str = "per-subcarrier"
    nl: bool = False
    pmax_dbm: tuple[float, ...] = (35.0,)
    pout_dbm: tuple[float, ...] = (float("-inf"),)
    drops: int = 1000
    seed: int = 0
    weight_profile: tuple[float, ...] | str = "uniform"
    workers: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not self.pmax_dbm or not self.pout_dbm:
            raise ValueError("pmax_dbm and pout_dbm lists must be non-empty")
        if self.drops < 1:
            raise ValueError("drops must be >= 1")


class ConfigError(ValueError):
    pass


def _parse_float_list(text):
    out = []
    for token in text.replace(",", " ").split():
        out.append(float(token))
    return tuple(out)


def _parse_weight_profile(text):
    text = text.strip()
    if text == "uniform":
        return "uniform"
    return _parse_float_list(text)


def load_config(path):
    """Parse a config file into ``(ScenarioConfig, SweepSpec)``.

    Unknown keys and malformed values raise :class:`ConfigError` carrying
    the offending line where the parser provides one.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    scen_kw = {}
    if parser.has_section("scenario"):
        for key, raw in parser.items("scenario"):
            if key not in ScenarioConfig.field_names():
                raise ConfigError(f"[scenario] unknown key {key!r}")
            try:
                if key in ("n_sub", "users_per_bs", "seed"):
                    scen_kw[key] = int(raw)
                elif key == "theta_w":
                    scen_kw[key] = _parse_float_list(raw)
                elif key == "constraint":
                    scen_kw[key] = raw.strip()
                elif key == "weight_profile":
                    scen_kw[key] = _parse_weight_profile(raw)
                else:
                    scen_kw[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"[scenario] bad value for {key!r}: {exc}") from exc

    sweep_kw = {}
    if parser.has_section("sweep"):
        for key, raw in parser.items("sweep"):
            try:
                if key in ("pmax_dbm", "pout_dbm"):
                    sweep_kw[key] = _parse_float_list(raw)
                elif key in ("drops", "seed", "workers"):
                    sweep_kw[key] = int(raw)
                elif key == "nl":
                    sweep_kw[key] = raw.strip().lower() in ("1", "true", "yes", "on")
                elif key == "weight_profile":
                    sweep_kw[key] = _parse_weight_profile(raw)
                elif key in ("objective", "constraint"):
                    sweep_kw[key] = raw.strip()
                else:
                    raise ConfigError(f"[sweep] unknown key {key!r}")
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"[sweep] bad value for {key!r}: {exc}") from exc
    try:
        scen = ScenarioConfig(**scen_kw)
        spec = SweepSpec(**sweep_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return scen, spec


def solve_objective(objective, inst, nl=False):
    """Dispatch one solve; returns ``(Allocation, SolverReport)``."""
    if objective == "gee":
        return solve_gee_nl(inst) if nl else solve_gee(inst)
    if objective == "sumee":
        return solve_sumee_nl(inst) if nl else solve_sumee(inst)
    if objective == "prodee":
        return solve_prodee_nl(inst) if nl else solve_prodee(inst)
    if objective == "sumrate":
        return solve_sumrate(inst, GeeOptions(mode="noise_limited" if nl else "interference"))
    if objective == "maxpower":
        return max_power(inst)
    raise ValueError(f"unknown objective {objective!r}")


def per_slot_ee_stats(inst, alloc):
    """Per-slot energy efficiencies (flattened) and their population std."""
    ee = model.per_slot_ee(inst, alloc)
    flat = ee.reshape(-1)
    return flat, float(flat.std())


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _metrics_row(spec, pmax, pout, drop, inst, alloc, report):
    try:
        prodee_val = model.prod_ee_log(inst, alloc)
    except ValueError:
        prodee_val = float("-inf")  # silent slot: the product is zero
    _, ee_std = per_slot_ee_stats(inst, alloc)
    radiated = alloc.power.sum(axis=1)
    return {
        "pmax_dbm": pmax, "pout_dbm": pout, "drop": drop,
        "objective_name": spec.objective,
        "gee": model.gee(inst, alloc), "sumee": model.sum_ee(inst, alloc),
        "prodee": prodee_val, "sumrate": model.sum_rate(inst, alloc),
        "p_rad_bs1_w": float(radiated[0]),
        "p_rad_bs2_w": float(radiated[1]) if len(radiated) > 1 else 0.0,
        "p_rad_bs3_w": float(radiated[2]) if len(radiated) > 2 else 0.0,
        "ee_slot_std": ee_std,
        "iterations": report.iterations, "converged": report.converged,
    }


def _run_point(scen_cfg, spec, pmax, pout, drop):
    cfg = scen_cfg.replace(p_out_dbm=pout, pmax_dbm=pmax, constraint=spec.constraint,
                           weight_profile=spec.weight_profile, seed=spec.seed)
    scenario = draw_scenario(cfg, drop=drop)
    inst = scenario.instance
    alloc, report = solve_objective(spec.objective, inst, nl=spec.nl)
    return _metrics_row(spec, pmax, pout, drop, inst, alloc, report)


def run_sweep(scen_cfg: ScenarioConfig, spec: SweepSpec, out_dir: str):
    """Execute a sweep; returns ``(csv_path, n_failures)``."""
    os.makedirs(out_dir, exist_ok=True)
    points = [(pmax, pout, drop) for pmax in spec.pmax_dbm for pout in spec.pout_dbm
              for drop in range(spec.drops)]
    rows = {}
    failures = []

    def work(point):
        return point, _run_point(scen_cfg, spec, *point)

    if spec.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=spec.workers) as pool:
            futures = {pool.submit(work, pt): pt for pt in points}
            for fut in concurrent.futures.as_completed(futures):
                pt = futures[fut]
                try:
                    _, row = fut.result()
                    rows[pt] = row
                except SolverError as exc:
                    failures.append((pt, str(exc)))
    else:
        for pt in points:
            try:
                rows[pt] = work(pt)[1]
            except SolverError as exc:
                failures.append((pt, str(exc)))

    path = os.path.join(out_dir, f"sweep_{spec.objective}.csv")
    numeric = [c for c in SWEEP_COLUMNS if c not in
               ("pmax_dbm", "pout_dbm", "drop", "objective_name", "converged")]
    with open(path, "w", newline="") as fh:
        fh.write(SWEEP_UNITS + "\n")
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for pmax in spec.pmax_dbm:
            for pout in spec.pout_dbm:
                group = []
                for drop in range(spec.drops):
                    row = rows.get((pmax, pout, drop))
                    if row is None:
                        continue
                    writer.writerow({c: _fmt(row[c]) for c in SWEEP_COLUMNS})
                    group.append(row)
                # -inf log-product rows (a silent slot zeroes the product)
                # propagate into the aggregates: mean -inf, std nan
                for agg_name, agg in (("mean", np.mean), ("std", np.std)):
                    if not group:
                        continue
                    agg_row = {"pmax_dbm": pmax, "pout_dbm": pout, "drop": agg_name,
                               "objective_name": spec.objective,
                               "iterations": _fmt(float(agg([r["iterations"] for r in group]))),
                               "converged": _fmt(float(agg([float(r["converged"])
                                                            for r in group])))}
                    with np.errstate(invalid="ignore"):
                        for col in numeric:
                            if col == "iterations":
                                continue
                            agg_row[col] = _fmt(float(agg([r[col] for r in group])))
                    writer.writerow(agg_row)
    for pt, msg in failures:
        print(f"error at (pmax, pout, drop) = {pt}: {msg}", file=sys.stderr)
    return path, len(failures)


def run_trace(scen_cfg: ScenarioConfig, spec: SweepSpec, out_dir: str, drop: int = 0):
    """Single solve, objective value per outer iteration as CSV."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = scen_cfg.replace(p_out_dbm=spec.pout_dbm[0], pmax_dbm=spec.pmax_dbm[0],
                           constraint=spec.constraint, weight_profile=spec.weight_profile,
                           seed=spec.seed)
    scenario = draw_scenario(cfg, drop=drop)
    alloc, report = solve_objective(spec.objective, scenario.instance, nl=spec.nl)
    path = os.path.join(out_dir, f"trace_{spec.objective}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective_value"])
        for i, val in enumerate(report.objective_trace, start=1):
            writer.writerow([i, _fmt(float(val))])
    return path, report


def dump_scenario(scen_cfg: ScenarioConfig, spec: SweepSpec, out_dir: str, drop: int = 0):
    """Write the drawn gain and noise tables for external inspection."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = scen_cfg.replace(p_out_dbm=spec.pout_dbm[0], pmax_dbm=spec.pmax_dbm[0],
                           constraint=spec.constraint, seed=spec.seed)
    scenario = draw_scenario(cfg, drop=drop)
    inst = scenario.instance
    gains_path = os.path.join(out_dir, "scenario_gains.csv")
    with open(gains_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bs", "user", "subcarrier", "gain_per_w"])
        for q in range(inst.m_bs):
            for s in range(inst.n_users):
                for n in range(inst.n_sub):
                    writer.writerow([q, s, n, repr(float(inst.gains[q, s, n]))])
    noise_path = os.path.join(out_dir, "scenario_noise.csv")
    with open(noise_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "subcarrier", "noise_w"])
        for s in range(inst.n_users):
            for n in range(inst.n_sub):
                writer.writerow([s, n, repr(float(scenario.noise_w[s, n]))])
    return gains_path, noise_path


def _build_argparser():
    ap = argparse.ArgumentParser(prog="eecoord",
                                 description="energy-efficient coordinated OFDMA experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("sweep", "Monte Carlo sweep to CSV"),
                           ("trace", "single-solve convergence trace to CSV"),
                           ("scenario", "dump a drawn instance's gain/noise tables")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="INI config file ([scenario] and [sweep] sections)")
        sp.add_argument("--seed", type=int, default=None, help="override the sweep seed")
        sp.add_argument("--drops", type=int, default=None, help="override the drop count")
        sp.add_argument("--out-dir", default=".", help="output directory for CSV files")
        sp.add_argument("--workers", type=int, default=None, help="worker threads for drops")
        sp.add_argument("--drop", type=int, default=0,
                        help="drop index for trace/scenario commands")
    return ap


def main(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        scen_cfg, spec = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.drops is not None:
        overrides["drops"] = args.drops
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        spec = SweepSpec(**{**spec.__dict__, **overrides})

    if args.command == "sweep":
        path, n_fail = run_sweep(scen_cfg, spec, args.out_dir)
        print(path)
        return min(n_fail, 100)
    if args.command == "trace":
        path, _ = run_trace(scen_cfg, spec, args.out_dir, drop=args.drop)
        print(path)
        return 0
    if args.command == "scenario":
        gains_path, noise_path = dump_scenario(scen_cfg, spec, args.out_dir, drop=args.drop)
        print(gains_path)
        print(noise_path)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
