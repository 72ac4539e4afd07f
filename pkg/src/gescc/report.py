"""Run-directory writers and figure rendering.

Everything in ``plot_data.json`` is copied from rows that were also written to
CSV, so figures never show numbers that the tabular outputs do not contain.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from gescc.dispatch import Regime
from gescc.smcs import SmcsResult


def _f(x) -> float:
    return float(x)


def write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def simulation_tables(res: SmcsResult) -> dict[str, tuple[list[str], list[list]]]:
    """Tabular outputs of one SMCS run, keyed by file name."""
    units = res.units
    L = res.ledger
    tables = {}
    header = ["year", "hours", "eens_theoretical", "eens_practical", "shortfall_mwh", "em_revenue", "calls"]
    for u in units:
        header += [f"{u.name}_capacity_fraction", f"{u.name}_replacements"]
    rows = []
    for k, y in enumerate(res.years):
        row = [y.year, _f(y.hours), _f(L.annual_theoretical[k]), _f(L.annual_batches[k]),
               _f(L.shortfall_mwh[k]), _f(L.em_revenue[k]), int(y.n_calls)]
        for i in range(len(units)):
            st = res.degradation[i][k]
            row += [_f(st.remaining_capacity_fraction), int(st.replacements)]
        rows.append(row)
    tables["eens_by_year.csv"] = (header, rows)
    tables["convergence.csv"] = (["year", "eens_theoretical", "eens_practical", "cov"],
                                 [[int(a), _f(b), _f(c), _f(d)] for a, b, c, d in res.convergence])
    tables["loss_events.csv"] = (["year", "start", "duration", "unserved_mwh", "cause"],
                                 [[e.year, e.start, e.duration, _f(e.unserved_mwh), e.cause] for e in L.loss_events])
    clip_rows = []
    for y in res.years:
        for e in y.clip_events:
            clip_rows.append([y.year, e.slot, units[e.unit].name, _f(e.theoretical_soc), _f(e.bound)])
    tables["clip_events.csv"] = (["year", "slot", "unit", "theoretical_soc", "bound"], clip_rows)

    arch = res.archive
    if arch is not None and "rd" in arch:
        off = arch["offset"]
        rd, pd, prac, bounds, reg = arch["rd"], arch["pd"], arch["practical"], arch["bounds"], arch["regime"]
        srows = []
        for t in range(rd.n_slots):
            for i, u in enumerate(units):
                b = bounds[i, t]
                srows.append([t + off, u.name, Regime(int(reg[t])).name.title(),
                              _f(pd.p_charge[i, t]), _f(pd.p_discharge[i, t]), _f(pd.soc[i, t + 1]),
                              _f(rd.p_charge[i, t]), _f(rd.p_discharge[i, t]), _f(rd.soc[i, t + 1]),
                              _f(prac.practical_p_discharge[i, t]), _f(prac.practical_soc[i, t + 1]),
                              "" if np.isnan(b) else _f(b)])
        tables["schedules.csv"] = (["slot", "unit", "regime", "pd_p_charge", "pd_p_discharge", "pd_soc",
                                    "rd_p_charge", "rd_p_discharge", "rd_soc", "practical_p_discharge",
                                    "practical_soc", "ddu_bound"], srows)
    return tables


def plot_data_from_tables(tables: dict) -> dict:
    out = {}
    h, rows = tables["convergence.csv"]
    out["convergence"] = {k: [r[j] for r in rows] for j, k in enumerate(h)}
    h, rows = tables["eens_by_year.csv"]
    out["eens_by_year"] = {k: [r[j] for r in rows] for j, k in enumerate(h[:5])}
    if "schedules.csv" in tables:
        h, rows = tables["schedules.csv"]
        idx = {k: j for j, k in enumerate(h)}
        call_slots = sorted({r[0] for r in rows if r[2] == "Emergency"})
        if call_slots:
            # a two-day window around the first call
            lo, hi = call_slots[0] - 12, call_slots[0] + 36
            series = {}
            for r in rows:
                if lo <= r[0] < hi:
                    s = series.setdefault(r[1], {k: [] for k in ("slot", "pd_soc", "rd_soc", "practical_soc", "ddu_bound", "regime")})
                    for k in s:
                        v = r[idx[k]]
                        s[k].append(None if v == "" else v)
            out["dispatch_window"] = series
    return out


def render(run_dir, out_dir=None) -> list[Path]:
    """Render PNG figures from ``plot_data.json`` in ``run_dir``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "figures"
    out_dir.mkdir(parents=True, exist_ok=True)
    data = json.loads((run_dir / "plot_data.json").read_text())
    made = []

    if "convergence" in data:
        c = data["convergence"]
        fig, ax = plt.subplots(1, 2, figsize=(10, 3.5))
        ax[0].plot(c["year"], c["eens_theoretical"], label="theoretical")
        ax[0].plot(c["year"], c["eens_practical"], label="practical")
        ax[0].set_xlabel("simulated year")
        ax[0].set_ylabel("EENS (MWh/yr)")
        ax[0].legend()
        ax[1].plot(c["year"], c["cov"])
        ax[1].axhline(0.05, ls="--", c="grey")
        ax[1].set_xlabel("simulated year")
        ax[1].set_ylabel("CoV")
        fig.tight_layout()
        made.append(out_dir / "convergence.png")
        fig.savefig(made[-1], dpi=120)
        plt.close(fig)

    if "dispatch_window" in data:
        series = data["dispatch_window"]
        fig, axes = plt.subplots(len(series), 1, figsize=(10, 3 * len(series)), squeeze=False)
        for ax, (name, s) in zip(axes[:, 0], series.items()):
            ax.plot(s["slot"], s["pd_soc"], label="pre-dispatch", ls="--")
            ax.plot(s["slot"], s["rd_soc"], label="re-dispatch")
            ax.plot(s["slot"], s["practical_soc"], label="practical")
            b = [np.nan if v is None else v for v in s["ddu_bound"]]
            ax.plot(s["slot"], b, label="sampled floor", ls="", marker="v")
            ax.set_title(name)
            ax.set_ylabel("SoC")
            ax.legend(fontsize=8)
        axes[-1, 0].set_xlabel("slot")
        fig.tight_layout()
        made.append(out_dir / "dispatch.png")
        fig.savefig(made[-1], dpi=120)
        plt.close(fig)

    if "sensitivity" in data:
        for axis, s in data["sensitivity"].items():
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for key, ys in s["series"].items():
                ax.plot(range(len(s["values"])), ys, marker="o", label=key)
            ax.set_xticks(range(len(s["values"])))
            ax.set_xticklabels([str(v) for v in s["values"]])
            ax.set_xlabel(axis)
            ax.set_ylabel("capacity credit")
            ax.legend(fontsize=8)
            fig.tight_layout()
            made.append(out_dir / f"sensitivity_{axis}.png")
            fig.savefig(made[-1], dpi=120)
            plt.close(fig)

    if "cc_history" in data:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for metric, h in data["cc_history"].items():
            ax.plot(h["capacity_mw"], h["mean_gap"], marker="o", ls="", label=metric)
        ax.axhline(0.0, c="grey")
        ax.set_xlabel("reference capacity (MW)")
        ax.set_ylabel("mean EENS gap (MWh/yr)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        made.append(out_dir / "cc_bisection.png")
        fig.savefig(made[-1], dpi=120)
        plt.close(fig)
    return made
