"""Command-line interface: ``gescc {validate-data,simulate,evaluate-cc,sensitivity,report}``."""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from gescc import report
from gescc.config import RunConfig, json_schema, load_config, parse_config
from gescc.credit import CcProblem, economics, evaluate_metric
from gescc.errors import ConfigError, GesccError, InfeasibleSpecError, ParameterError, SchemaError, ValidationError
from gescc.scenario import ColumnMap, load_csv, validate
from gescc.smcs import default_workers, run_smcs

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_UNCONVERGED = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "GESCC_OUTPUT_ROOT"
AXES = ("power", "duration", "soc_withhold", "alpha", "beta", "epsilon", "family", "efficiency",
        "self_discharge", "penetration")


def _run_dir(cfg: RunConfig, out: str | None, kind: str) -> Path:
    if out:
        d = Path(out)
    elif cfg.output_dir:
        d = Path(cfg.output_dir)
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        d = root / f"{kind}-{cfg.config_hash()[:12]}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(d: Path, cfg: RunConfig, files: list[str], **extra) -> None:
    manifest = {"seed": cfg.seed, "config_hash": cfg.config_hash(),
                "files": {f: report.sha256_file(d / f) for f in sorted(files)}}
    manifest.update(extra)
    report.write_json(d / "manifest.json", manifest)


# ------------------------------------------------------------ simulate

def simulate(cfg: RunConfig, run_dir: Path, workers: int = 1) -> bool:
    """Run one configuration and write its outputs; returns the convergence flag."""
    sc = cfg.build_scenario()
    units = cfg.build_units()
    chance = cfg.build_chance()
    opt = cfg.build_options(workers)
    res = run_smcs(sc, units, chance, opt)
    L = res.ledger
    if units:
        base = run_smcs(sc, [], None, replace(opt, with_ges=False, years=L.years))
        L.economics = economics(L, base.ledger, cfg.economics.voll, cfg.economics.penalty)
    (run_dir / "config.yaml").write_text(cfg.to_yaml())
    tables = report.simulation_tables(res)
    for name, (header, rows) in tables.items():
        report.write_rows(run_dir / name, header, rows)
    ledger = L.to_dict()
    ledger["degradation"] = {
        u.name: {"remaining_capacity_fraction": res.degradation[i][-1].remaining_capacity_fraction,
                 "replacements": res.degradation[i][-1].replacements,
                 "cumulative_discharge_mwh": res.degradation[i][-1].cumulative_discharge}
        for i, u in enumerate(units)
    }
    report.write_json(run_dir / "ledger.json", ledger)
    report.write_json(run_dir / "plot_data.json", report.plot_data_from_tables(tables))
    files = ["config.yaml", "ledger.json", "plot_data.json", *tables]
    _write_manifest(run_dir, cfg, files, converged=L.converged, years=L.years, method=cfg.dispatch.method)
    return L.converged


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    d = _run_dir(cfg, args.out, "simulate")
    ok = simulate(cfg, d, args.workers)
    led = json.loads((d / "ledger.json").read_text())
    print(f"{d}: EENS theoretical {led['eens_theoretical']:.3f} MWh/yr, practical "
          f"{led['eens_practical']:.3f} MWh/yr, CoV {led['cov']:.4f} over {led['years']} years")
    if not ok:
        print("warning: CoV target not reached at max_years", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


# ------------------------------------------------------------ capacity credit

def evaluate_cc(cfg: RunConfig, metrics, workers: int = 1, progress=None) -> list:
    sc = cfg.build_scenario()
    units = tuple(cfg.build_units())
    chance = cfg.build_chance()
    opt = cfg.build_options(workers)
    out = []
    for m in metrics:
        prob = CcProblem(m, sc, units, chance, opt, tolerance=cfg.credit.tolerance,
                         practical=cfg.credit.practical, noise_sigmas=cfg.credit.noise_sigmas)
        out.append(evaluate_metric(prob, progress))
    return out


def cmd_evaluate_cc(args) -> int:
    cfg = load_config(args.config)
    metrics = args.metric or cfg.credit.metrics
    d = _run_dir(cfg, args.out, "cc")
    reports = evaluate_cc(cfg, metrics, args.workers)
    rows = []
    for r in reports:
        for k, h in enumerate(r.history):
            rows.append([r.metric, k, float(h["capacity_mw"]), float(h["mean_gap"]), float(h["se"])])
        print(f"{r.metric}: {r.value:.4f}" + (f"  ({r.warning})" if r.warning else ""))
    (d / "config.yaml").write_text(cfg.to_yaml())
    report.write_json(d / "cc_report.json", {"reports": [r.to_dict() for r in reports]})
    report.write_rows(d / "cc_history.csv", ["metric", "step", "capacity_mw", "mean_gap", "se"], rows)
    plot = {"cc_history": {}}
    for row in rows:
        h = plot["cc_history"].setdefault(row[0], {"capacity_mw": [], "mean_gap": []})
        h["capacity_mw"].append(row[2])
        h["mean_gap"].append(row[3])
    report.write_json(d / "plot_data.json", plot)
    _write_manifest(d, cfg, ["config.yaml", "cc_report.json", "cc_history.csv", "plot_data.json"])
    return EXIT_OK


# ------------------------------------------------------------ sensitivity

def _parse_value(axis: str, text: str):
    if axis == "family":
        return text
    return float(text)


def apply_axis(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis not in AXES:
        raise ConfigError(f"unknown sensitivity axis {axis!r}; supported axes: {', '.join(AXES)}")
    d = cfg.model_dump(mode="json")
    unit_key = {"power": "power_mw", "duration": "duration_h", "soc_withhold": "soc_withhold",
                "self_discharge": "self_discharge"}
    for u in d["units"]:
        if axis in unit_key:
            u[unit_key[axis]] = value
        elif axis == "efficiency":
            u["eta_c"] = u["eta_d"] = value
        elif axis in ("alpha", "beta") and u.get("ddu"):
            u["ddu"][axis] = value
        elif axis == "family" and u.get("ddu"):
            u["ddu"]["family"] = value
    if axis == "epsilon":
        d["chance"]["epsilon"] = value
    if axis == "family":
        d["chance"]["family"] = value
    if axis == "penetration":
        if d["scenario"].get("synth"):
            d["scenario"]["synth"]["penetration"] = value
        else:
            d["scenario"]["penetration_scale"] = value
    return parse_config(d)


def sensitivity(cfg: RunConfig, grid: dict[str, list], workers: int = 1):
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError(f"sensitivity grid is empty; give at least one value for one of: {', '.join(AXES)}")
    for axis in grid:
        if axis not in AXES:
            raise ConfigError(f"unknown sensitivity axis {axis!r}; supported axes: {', '.join(AXES)}")
    axes = list(grid)
    rows = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        c = cfg
        for a, v in zip(axes, combo):
            c = apply_axis(c, a, v)
        for r in evaluate_cc(c, c.credit.metrics, workers):
            rows.append([*combo, r.metric, float(r.value), float(r.eens_test), float(r.eens_base), int(r.years)])
    header = [*axes, "metric", "value", "eens_test", "eens_base", "years"]
    # one series per axis: vary that axis, others held at their first grid value
    plot = {}
    for k, a in enumerate(axes):
        series = {}
        for row in rows:
            if all(row[j] == grid[axes[j]][0] for j in range(len(axes)) if j != k):
                series.setdefault(row[len(axes)], []).append(row[len(axes) + 1])
        plot[a] = {"values": list(grid[a]), "series": series}
    return header, rows, {"sensitivity": plot}


def cmd_sensitivity(args) -> int:
    cfg = load_config(args.config)
    grid: dict[str, list] = {}
    if args.axis:
        for spec in args.axis:
            if "=" not in spec:
                raise ConfigError(f"--axis expects NAME=v1,v2,..., got {spec!r}")
            name, vals = spec.split("=", 1)
            grid[name] = [_parse_value(name, v) for v in vals.split(",") if v != ""]
    else:
        grid = {k: list(v) for k, v in cfg.sensitivity.items()}
    header, rows, plot = sensitivity(cfg, grid, args.workers)
    d = _run_dir(cfg, args.out, "sensitivity")
    (d / "config.yaml").write_text(cfg.to_yaml())
    report.write_rows(d / "sensitivity.csv", header, rows)
    report.write_json(d / "plot_data.json", plot)
    _write_manifest(d, cfg, ["config.yaml", "sensitivity.csv", "plot_data.json"], grid=grid)
    for r in rows:
        print(",".join(str(x) for x in r))
    return EXIT_OK


# ------------------------------------------------------------ data / report

def cmd_validate_data(args) -> int:
    schema = ColumnMap(args.timestamp, args.load, args.wind, args.solar, args.price)
    try:
        sc = load_csv(args.path, schema, args.dt_hours)
    except (SchemaError, ValidationError) as exc:
        row = getattr(exc, "row", None)
        print(json.dumps({"ok": False, "error": str(exc), "row": row}, indent=2))
        return EXIT_DATA
    rep = validate(sc)
    out = rep.to_dict()
    out["summary"] = sc.summary()
    print(json.dumps(out, indent=2, default=str))
    return EXIT_OK if rep.ok else EXIT_DATA


def cmd_report(args) -> int:
    made = report.render(args.run_dir, args.out)
    for p in made:
        print(p)
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(json_schema(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gescc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def runner(sp):
        sp.add_argument("config", help="YAML run configuration")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV} or ./runs)")
        sp.add_argument("--workers", type=int, default=default_workers(),
                        help="worker processes for simulated years (default: available cores)")

    v = sub.add_parser("validate-data", help="check a time-series CSV")
    v.add_argument("path")
    v.add_argument("--dt-hours", type=float, default=1.0)
    v.add_argument("--timestamp", default="timestamp")
    v.add_argument("--load", default="load_mw")
    v.add_argument("--wind", default="wind_mw")
    v.add_argument("--solar", default="solar_mw")
    v.add_argument("--price", default="price_per_mwh")
    v.set_defaults(func=cmd_validate_data)

    s = sub.add_parser("simulate", help="run the Monte Carlo adequacy simulation")
    runner(s)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("evaluate-cc", help="capacity credit by reliability equivalence")
    runner(c)
    c.add_argument("--metric", action="append", choices=["ECC", "EFC", "ELCC", "EGCS", "ESCS"])
    c.set_defaults(func=cmd_evaluate_cc)

    g = sub.add_parser("sensitivity", help="capacity credit over a parameter grid")
    runner(g)
    g.add_argument("--axis", action="append", help=f"NAME=v1,v2,... with NAME in {{{','.join(AXES)}}}")
    g.set_defaults(func=cmd_sensitivity)

    r = sub.add_parser("report", help="render figures from a run directory")
    r.add_argument("run_dir")
    r.add_argument("--out", help="figure directory (default: RUN_DIR/figures)")
    r.set_defaults(func=cmd_report)

    sc = sub.add_parser("schema", help="print the configuration JSON schema")
    sc.set_defaults(func=cmd_schema)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, InfeasibleSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GesccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
