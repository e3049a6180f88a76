"""Command-line entry point: ``akf {grid,scenarios,simulate,selftest}``.

Settings come from built-in defaults, then an optional JSON config file,
then command-line flags (later wins). Exit codes: 0 success, 1 selftest
failure, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from akf import __version__, report, selftest
from akf.harness import (
    FILTERS,
    ConfigError,
    NumericalFailure,
    ScenarioConfig,
    check_references,
    default_suite,
    expand_seeds,
    run_mse_grid,
    run_scenarios,
    DEFAULT_SCALES,
)
from akf.models import simulate_linear_truth, simulate_machine_truth

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# keys that are not ScenarioConfig fields
GRID_KEYS = {"master_seed", "n_seeds", "q_scales", "r_scales", "engine"}
SCENARIO_KEYS = {"master_seed", "n_seeds", "mc_seeds", "base", "scenarios", "timelines"}
SIMULATE_KEYS = {"master_seed", "n_seeds"}

GRID_DEFAULTS = {"master_seed": 0, "n_seeds": 500, "filter": "both"}
SCENARIO_DEFAULTS = {"master_seed": 0, "n_seeds": 20, "mc_seeds": 200, "timelines": True}
SIMULATE_DEFAULTS = {"master_seed": 0, "n_seeds": 1}


class Console:
    """Single writer for all console output."""

    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, msg: str) -> None:
        if not self.quiet:
            print(msg, flush=True)

    def error(self, msg: str) -> None:
        print(f"akf: error: {msg}", file=sys.stderr, flush=True)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _flag_overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["master_seed"] = args.seed
    if args.seeds is not None:
        out["n_seeds"] = args.seeds
    if getattr(args, "filter", None) is not None:
        out["filter"] = args.filter
    if getattr(args, "alpha", None) is not None:
        out["alpha"] = args.alpha
    if getattr(args, "skip_first", None) is not None:
        out["skip_first"] = args.skip_first
    return out


def _split(merged: dict, extra_keys: set) -> tuple[dict, dict]:
    """Separate command-level keys from ScenarioConfig fields, rejecting unknown keys."""
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(merged) - known - extra_keys
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cmd = {k: v for k, v in merged.items() if k in extra_keys}
    fields = {k: v for k, v in merged.items() if k in known}
    return cmd, fields


def _seed_list(cmd: dict, fields: dict, key: str = "n_seeds") -> list[int]:
    if "seeds" in fields:
        return [int(s) for s in fields.pop("seeds")]
    n = cmd[key]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ConfigError(f"{key} must be a positive integer")
    return expand_seeds(int(cmd["master_seed"]), n)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_grid(args, con: Console) -> int:
    merged = {**GRID_DEFAULTS, **load_config(args.config), **_flag_overrides(args)}
    cmd, fields = _split(merged, GRID_KEYS)
    seeds = _seed_list(cmd, fields)
    fields.setdefault("model", "linear")
    base = ScenarioConfig.from_dict({**fields, "seeds": seeds})
    q_scales = cmd.get("q_scales", list(DEFAULT_SCALES))
    r_scales = cmd.get("r_scales", list(DEFAULT_SCALES))
    engine = cmd.get("engine", "auto")
    if engine not in ("auto", "batch", "generic"):
        raise ConfigError(f"unknown engine {engine!r}")
    record = {**merged, "seeds": seeds}
    meta = report.metadata("grid", record, cmd["master_seed"])
    names = report.state_names(base.model)

    summary = {"metadata": meta, "config": base.to_dict() | {"q_scales": q_scales, "r_scales": r_scales}}
    with report.StagedOutput(args.out) as out:
        for f in base.filters:
            t0 = time.perf_counter()
            grid = run_mse_grid(f, base, seeds, q_scales, r_scales, engine)
            table = "table1.csv" if f == "cekf" else "table2.csv"
            out.write_text(table, report.csv_text(meta, report.GRID_HEADER, report.grid_rows(grid, names)))
            summary[f] = report.grid_json(grid)
            con.info(f"{f}: {len(seeds)} seeds x {len(q_scales) * len(r_scales)} cells in "
                     f"{time.perf_counter() - t0:.2f} s -> {table}")
            if not args.quiet:
                _print_grid(grid, con)
        out.write_json("summary.json", summary)
    return EXIT_OK


def _print_grid(grid, con: Console) -> None:
    head = "R\\Q".ljust(8) + "".join(f"{q:>12g}" for q in grid.q_scales)
    con.info(head)
    pm = grid.position_mean()
    for i, r in enumerate(grid.r_scales):
        con.info(f"{r:<8g}" + "".join(f"{v:>12.4g}" for v in pm[i]))


def build_suite(merged: dict, seeds_flag: bool = False) -> tuple[list[ScenarioConfig], dict]:
    """Expand a scenarios config into a checked suite.

    Without an explicit ``scenarios`` list the default four-scenario suite
    is used; its Monte Carlo scenario takes ``mc_seeds`` seeds unless a
    ``--seeds`` flag was given, which then applies to every scenario.
    """
    cmd, fields = _split(merged, SCENARIO_KEYS)
    base_fields = {"model": "machine", "steps": 250}
    base_fields.update(cmd.get("base", {}))
    base_fields.update(fields)
    explicit_list = "seeds" in base_fields
    seeds = _seed_list(cmd, base_fields)
    base = ScenarioConfig.from_dict({**base_fields, "seeds": seeds})
    if "scenarios" in cmd:
        raw = cmd["scenarios"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("scenarios must be a nonempty list")
        suite = []
        for item in raw:
            if not isinstance(item, dict) or "name" not in item:
                raise ConfigError("each scenario needs a name")
            suite.append(ScenarioConfig.from_dict({**base.to_dict(), **item}))
    else:
        if explicit_list or seeds_flag:
            mc = seeds
        else:
            mc = _seed_list(cmd, {}, "mc_seeds")
        suite = default_suite(seeds, mc, base)
    check_references(suite)
    return suite, cmd


def cmd_scenarios(args, con: Console) -> int:
    merged = {**SCENARIO_DEFAULTS, **load_config(args.config), **_flag_overrides(args)}
    suite, cmd = build_suite(merged, seeds_flag=args.seeds is not None)
    record = {**merged, "suite": [c.to_dict() for c in suite]}
    meta = report.metadata("scenarios", record, cmd["master_seed"])

    t0 = time.perf_counter()
    rep = run_scenarios(suite)
    con.info(f"{len(suite)} scenarios in {time.perf_counter() - t0:.2f} s")
    with report.StagedOutput(args.out) as out:
        out.write_text("table3.csv", report.csv_text(meta, report.SCENARIO_HEADER, report.scenario_rows(rep)))
        out.write_json("summary.json", {"metadata": meta, "scenarios": report.scenario_json(rep)})
        for o in rep.outcomes:
            name = o.config.name
            if cmd.get("timelines", True):
                for idx, seed in enumerate(o.config.seeds):
                    header, rows = report.timeline_rows(o, idx)
                    out.write_text(f"timelines/{name}/seed_{seed}.csv",
                                   report.csv_text(meta | {"scenario": name, "seed": seed}, header, rows))
            if len(o.config.seeds) > 1:
                header, rows = report.envelope_rows(o)
                out.write_text(f"envelopes/{name}.csv", report.csv_text(meta | {"scenario": name}, header, rows))
            for f, summ in o.filters.items():
                con.info(f"  {name:<6} {f}: mse " + " ".join(f"{v:.3e}" for v in summ.mean)
                         + f"  divergences {summ.divergences}/{len(summ.runs)}")
    return EXIT_OK


def cmd_simulate(args, con: Console) -> int:
    merged = {**SIMULATE_DEFAULTS, **load_config(args.config), **_flag_overrides(args)}
    cmd, fields = _split(merged, SIMULATE_KEYS)
    seeds = _seed_list(cmd, fields)
    cfg = ScenarioConfig.from_dict({**fields, "seeds": seeds})
    meta = report.metadata("simulate", {**merged, "seeds": seeds}, cmd["master_seed"])
    with report.StagedOutput(args.out) as out:
        for seed in seeds:
            if cfg.model == "linear":
                tr = simulate_linear_truth(cfg.linear, cfg.steps, seed, cfg.x0)
                header, rows = report.linear_truth_rows(tr, cfg.linear.dt)
            else:
                tr = simulate_machine_truth(cfg.machine, cfg.disturbance, sim_dt=cfg.sim_dt,
                                            duration=cfg.steps * cfg.machine.dt, seed=seed, p_mech=cfg.p_mech)
                header, rows = report.machine_truth_rows(tr)
            out.write_text(f"truth_seed_{seed}.csv", report.csv_text(meta | {"seed": seed}, header, rows))
        con.info(f"wrote {len(seeds)} truth timeline(s) to {args.out}")
    return EXIT_OK


def cmd_selftest(args, con: Console) -> int:
    if args.list:
        for name, (desc, _) in selftest.CHECKS.items():
            print(f"{name}: {desc}")
        return EXIT_OK
    failed = 0
    for name, ok, detail in selftest.run_all():
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", flush=True)
    return EXIT_OK if failed == 0 else EXIT_SELFTEST


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="DIR", default="akf-out", help="output directory (default: akf-out)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--seeds", type=int, help="number of seeds derived from the master seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    filt = argparse.ArgumentParser(add_help=False)
    filt.add_argument("--filter", choices=(*FILTERS, "both"))
    filt.add_argument("--alpha", type=float, help="AEKF forgetting factor")
    filt.add_argument("--skip-first", type=int, help="steps excluded from the MSE")

    ap = argparse.ArgumentParser(prog="akf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"akf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("grid", parents=[common, filt], help="Q/R scaling grids on the tracking model")
    sub.add_parser("scenarios", parents=[common, filt], help="machine Q0 scenarios")
    sub.add_parser("simulate", parents=[common], help="write truth and measurement timelines only")
    st = sub.add_parser("selftest", help="run built-in invariant checks")
    st.add_argument("--list", action="store_true", help="list checks without running them")
    return ap


COMMANDS = {"grid": cmd_grid, "scenarios": cmd_scenarios, "simulate": cmd_simulate, "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    con = Console(getattr(args, "quiet", False))
    try:
        return COMMANDS[args.command](args, con)
    except ConfigError as exc:
        con.error(str(exc))
        return EXIT_CONFIG
    except NumericalFailure as exc:
        con.error(f"numerical failure in {exc}")
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        con.error(f"numerical failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
