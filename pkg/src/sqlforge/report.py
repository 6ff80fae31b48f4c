"""Campaign report rendering: canonical JSON, text tables, CSV, figures.

JSON is the machine format and round-trips losslessly.  The text format
prints one ``line function branch`` percentage row per stage and a module
row in Parser/Optimizer/Executor/Storage order.  Figures are rendered to
PNG files next to the delimited outputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .campaign import CampaignReport
from .coverage import rate

MODULE_ORDER = ("Parser", "Optimizer", "Executor", "Storage")


def _pct(value: float) -> str:
    return f"{value * 100:.1f}%"


def _rate_row(rates: dict) -> str:
    return " ".join(_pct(rates[d]) for d in ("line", "function", "branch"))


def render_report(report: CampaignReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        ).encode("utf-8")
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    lines: list[str] = []
    lines.append(f"campaign report: dialect={report.dialect} seed={report.seed}")
    lines.append("")
    lines.append("cumulative coverage (line function branch)")
    lines.append(f"  stage I: {_rate_row(report.stage1['final'])}")
    lines.append(f"  final:   {_rate_row(report.final_rates)}")
    lines.append("")

    if report.module_table:
        lines.append("module line coverage (Parser Optimizer Executor Storage)")
        row = " ".join(
            _pct(rate(tuple(report.module_table[m]["line"])))
            for m in MODULE_ORDER
        )
        lines.append(f"  {row}")
        lines.append("")

    s1 = report.stage1
    outcome_text = ", ".join(f"{v} {k}" for k, v in sorted(s1["outcomes"].items()))
    lines.append(
        f"stage I: {s1['cases']} cases ({outcome_text or 'no outcomes'}); "
        f"{s1['synthesis_failures']} synthesis failures"
    )
    if s1["plateau_fired"]:
        lines.append(f"  plateau transition at case {s1['transition_at']}")
    lines.append(f"  seed pool: {len(s1['seed_pool'])} cases")

    s2 = report.stage2
    if s2 is None:
        lines.append("stage II: skipped")
    elif "skipped" in s2:
        lines.append(f"stage II: skipped ({s2['skipped']})")
    else:
        lines.append(
            f"stage II: {s2['strategy']}, {s2['evaluations']} evaluations, "
            f"{s2['new_branches']} new branches"
        )
        if s2.get("pruned_seeds"):
            lines.append(f"  pruned seeds: {', '.join(s2['pruned_seeds'])}")
        for i, top in enumerate(s2.get("top", [])[:5], start=1):
            traj = "/".join(str(a) for a in top["trajectory"])
            lines.append(
                f"  #{i} value={top['value']:.3f} new={top['new_branches']} {traj}"
            )
    lines.append("")
    return ("\n".join(lines)).encode("utf-8")


def write_series_csv(report: CampaignReport, path: Path) -> Path:
    """Flat CSV of the cumulative coverage series across both stages."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["stage", "index", "case_id", "new_branches", "line", "function", "branch"]
        )
        for entry in report.stage1["series"]:
            writer.writerow(
                [
                    "I",
                    entry["index"],
                    entry["case_id"],
                    entry["new_branches"],
                    f"{entry['line']:.6f}",
                    f"{entry['function']:.6f}",
                    f"{entry['branch']:.6f}",
                ]
            )
        if report.stage2 and "series" in report.stage2:
            for entry in report.stage2["series"]:
                writer.writerow(
                    [
                        "II",
                        entry["index"],
                        entry["case_id"],
                        entry["new_branches"],
                        f"{entry['line']:.6f}",
                        f"{entry['function']:.6f}",
                        f"{entry['branch']:.6f}",
                    ]
                )
    return path


def render_figures(report: CampaignReport, outdir: Path) -> list[Path]:
    """Render coverage-growth, module, and reward figures as PNG files."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    written.append(_coverage_growth_figure(report, outdir / "coverage_growth.png"))
    if report.module_table:
        written.append(module_figure(report.module_table, outdir / "module_coverage.png"))
    if report.stage2 and report.stage2.get("series"):
        written.append(_reward_figure(report, outdir / "stage2_rewards.png"))
    return written


def _coverage_growth_figure(report: CampaignReport, path: Path) -> Path:
    s1 = report.stage1["series"]
    s2 = (report.stage2 or {}).get("series", [])
    xs = list(range(1, len(s1) + len(s2) + 1))
    series = s1 + s2
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for dim, style in (("line", "-"), ("function", "--"), ("branch", ":")):
        ax.plot(xs, [e[dim] * 100 for e in series], style, label=f"{dim} coverage")
    if s2:
        ax.axvline(len(s1) + 0.5, color="gray", linewidth=0.8)
        ax.text(len(s1) + 0.5, ax.get_ylim()[1] * 0.95, " stage II", fontsize=8, color="gray")
    transition = report.stage1.get("transition_at")
    if transition:
        ax.axvline(transition, color="red", linewidth=0.8, linestyle="--")
    ax.set_xlabel("executed case")
    ax.set_ylabel("cumulative coverage (%)")
    ax.set_title(f"coverage growth ({report.dialect}, seed {report.seed})")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def module_figure(table: dict, path: Path) -> Path:
    """Bar chart of per-module coverage from a module-rates table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    modules = [m for m in (*MODULE_ORDER, "Other") if m in table]
    dims = ("line", "function", "branch")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.25
    for di, dim in enumerate(dims):
        values = [rate(tuple(table[m][dim])) * 100 for m in modules]
        ax.bar(
            [i + (di - 1) * width for i in range(len(modules))],
            values,
            width=width,
            label=dim,
        )
    ax.set_xticks(range(len(modules)))
    ax.set_xticklabels(modules)
    ax.set_ylabel("coverage (%)")
    ax.set_title("module coverage")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _reward_figure(report: CampaignReport, path: Path) -> Path:
    series = report.stage2["series"]
    xs = [e["index"] for e in series]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(xs, [e["value"] for e in series], ".", markersize=3)
    ax1.set_ylabel("reward")
    ax1.set_title(f"stage II rewards ({report.stage2['strategy']})")
    ax1.grid(alpha=0.3)
    cumulative = []
    total = 0
    for e in series:
        total += e["new_branches"]
        cumulative.append(total)
    ax2.plot(xs, cumulative, "-")
    ax2.set_xlabel("evaluation")
    ax2.set_ylabel("cumulative new branches")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
