#!/usr/bin/env python3
"""Run the figure presets and check the latency-versus-load properties.

Usage:
    python scripts/reproduce_figures.py
    python scripts/reproduce_figures.py --preset fig4 --preset fig6 --parallel 8
    python scripts/reproduce_figures.py --duration 0.5 --out ./results
"""

import argparse
import sys
import time
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from rich.console import Console
from rich.table import Table

from meshvpon.metrics import read_csv
from meshvpon.sweep import PRESETS, get_preset, run_sweep

console = Console()

MU1, MU2 = "0.5", "0.25"


@dataclass
class Check:
    name: str
    preset: str
    passed: bool
    detail: str


class Curves:
    """Summary rows of one preset, averaged over seeds.

    Keys are (policy, slot_ms, dl_fraction, class, stage_pair); each maps a
    load to (mean of means, max of maxes).
    """

    def __init__(self, summary_path: Path):
        means = defaultdict(list)
        maxes = defaultdict(float)
        for row in read_csv(summary_path):
            key = (row["policy"], row["slot_ms"], row["dl_fraction"], row["class"],
                   row["stage_pair"], float(row["load_pct"]))
            means[key].append(float(row["mean_us"]))
            maxes[key] = max(maxes[key], float(row["max_us"]))

        self.curves: dict[tuple, dict[float, tuple[float, float]]] = defaultdict(dict)
        for key, values in means.items():
            self.curves[key[:-1]][key[-1]] = (sum(values) / len(values), maxes[key])

    def get(
        self,
        slot_ms: str = MU1,
        dl: str = "1",
        cls: str = "urllc",
        pair: str = "UE->APP",
        policy: str = "enhanced-codba",
    ) -> dict[float, tuple[float, float]]:
        return self.curves.get((policy, slot_ms, dl, cls, pair), {})


def _fmt(load: float, value: float) -> str:
    return f"{load:g}%: {value / 1000:.3f} ms"


def check_fig3(curves: Curves) -> list[Check]:
    enhanced = curves.get(pair="UE->DU")
    conventional = curves.get(pair="UE->DU", policy="conventional-codba")
    high, low = [], []
    for load, (mean, _) in sorted(enhanced.items()):
        if load not in conventional:
            continue
        other = conventional[load][0]
        if load >= 70 and not mean < other:
            high.append(f"{load:g}%: {mean:.0f} vs {other:.0f} us")
        if load <= 40 and abs(mean - other) > 0.2 * max(mean, other):
            low.append(f"{load:g}%: {mean:.0f} vs {other:.0f} us")
    return [
        Check("enhanced below conventional at >=70 %", "fig3", not high,
              "; ".join(high) or "ok"),
        Check("policies within 20 % at <=40 %", "fig3", not low, "; ".join(low) or "ok"),
    ]


def check_fig4(curves: Curves) -> list[Check]:
    urllc = curves.get()
    normal = curves.get(cls="normal")
    checks = []

    bad = [
        _fmt(load, mean) if not 800 <= mean <= 1600 else _fmt(load, peak)
        for load, (mean, peak) in sorted(urllc.items())
        if load <= 90 and not (800 <= mean <= 1600 and peak <= 2200)
    ]
    checks.append(Check("URLLC mean 0.8-1.6 ms, max <= 2.2 ms", "fig4", not bad,
                        "; ".join(bad) or "ok"))

    if 95.0 in urllc:
        low_mean = urllc[min(urllc)][0]
        mean, peak = urllc[95.0]
        passed = peak > 2500 and mean <= 2 * low_mean
        checks.append(Check("95 % max > 2.5 ms, mean within 2x", "fig4", passed,
                            f"max {peak / 1000:.3f} ms, mean {mean / 1000:.3f} ms"))

    gaps = [
        f"{load:g}%: {normal[load][0] - mean:.0f} us"
        for load, (mean, _) in sorted(urllc.items())
        if load in normal and normal[load][0] - mean < 500
    ]
    checks.append(Check("normal trails URLLC by >= 500 us", "fig4", not gaps,
                        "; ".join(gaps) or "ok"))
    return checks


def check_fig5(curves: Curves) -> list[Check]:
    bad = [
        _fmt(load, peak)
        for load, (mean, peak) in sorted(curves.get(slot_ms=MU2).items())
        if load <= 90 and not (mean < 1000 and peak < 1000)
    ]
    return [Check("0.25 ms slots: mean and max < 1 ms", "fig5", not bad, "; ".join(bad) or "ok")]


def check_fig6(curves: Curves) -> list[Check]:
    one, two = curves.get(), curves.get(slot_ms=MU2)
    bad = [
        f"{load:g}%: {two[load][0]:.0f} vs {mean:.0f} us"
        for load, (mean, _) in sorted(one.items())
        if load in two and not two[load][0] < mean
    ]
    return [Check("0.25 ms below 0.5 ms at every load", "fig6", not bad, "; ".join(bad) or "ok")]


def _check_downlink(curves: Curves, preset: str, slot_ms: str, bound_us: float) -> list[Check]:
    bad = []
    for dl in ("0.25", "0.2", "0.1"):
        for load, (_, peak) in sorted(curves.get(slot_ms=slot_ms, dl=dl).items()):
            if load <= 80 and peak > bound_us:
                bad.append(f"dl {dl} {_fmt(load, peak)}")
    checks = [Check(f"dl >= 10 %: max <= {bound_us / 1000:g} ms up to 80 %", preset, not bad,
                    "; ".join(bad) or "ok")]

    narrow = curves.get(slot_ms=slot_ms, dl="0.05")
    fronthaul = curves.get(slot_ms=slot_ms, dl="0.05", pair="UE->DU")
    bad = [
        f"{load:g}%: app {mean / 1000:.2f} ms, fh {fronthaul.get(load, (0.0, 0.0))[0]:.0f} us"
        for load, (mean, _) in sorted(narrow.items())
        if load >= 60 and not (mean > 5000 and fronthaul.get(load, (0.0, 0.0))[0] < 600)
    ]
    checks.append(Check("dl 5 %: mean > 5 ms, fronthaul < 600 us", preset, not bad,
                        "; ".join(bad) or "ok"))
    return checks


def check_fig7(curves: Curves) -> list[Check]:
    return _check_downlink(curves, "fig7", MU1, 2000)


def check_fig8(curves: Curves) -> list[Check]:
    # "about 1 ms" taken as within 20 %
    return _check_downlink(curves, "fig8", MU2, 1200)


CHECKS = {
    "fig3": check_fig3,
    "fig4": check_fig4,
    "fig5": check_fig5,
    "fig6": check_fig6,
    "fig7": check_fig7,
    "fig8": check_fig8,
}


def check_determinism(preset: str, out_dir: Path, duration: float) -> Check:
    """Run the first point of a preset twice with one seed and compare files."""
    spec = get_preset(preset).with_overrides(duration_s=duration, seeds=[1])
    spec = spec.model_copy(update={"loads": spec.loads[:1]})
    first = run_sweep(spec.model_copy(update={"name": f"{preset}_a"}), out_dir)
    second = run_sweep(spec.model_copy(update={"name": f"{preset}_b"}), out_dir)
    if first.errors or second.errors:
        return Check("same seed, same bytes", preset, False, (first.errors + second.errors)[0])
    same = first.summary_path.read_bytes() == second.summary_path.read_bytes()
    return Check("same seed, same bytes", preset, same, "identical" if same else "files differ")


def main():
    parser = argparse.ArgumentParser(
        description="Run the figure presets and check their latency properties"
    )
    parser.add_argument(
        "--preset",
        action="append",
        choices=sorted(PRESETS),
        help="Preset to run (repeatable, default: all)",
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=Path("./results"),
        help="Results directory (default: ./results)",
    )
    parser.add_argument(
        "--duration",
        type=float,
        default=2.0,
        help="Simulated seconds per point (default: 2.0)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        action="append",
        help="Seed to run (repeatable, default: the preset's seeds)",
    )
    parser.add_argument(
        "--parallel",
        type=int,
        default=4,
        help="Worker processes per preset (default: 4)",
    )
    parser.add_argument(
        "--skip-determinism",
        action="store_true",
        help="Skip the repeated-run determinism check",
    )
    args = parser.parse_args()

    presets = args.preset or sorted(PRESETS)

    console.print("\n[bold]Reproducing figure presets[/bold]")
    console.print(f"Presets: {', '.join(presets)}")
    console.print(f"Duration per point: {args.duration:g} s")
    console.print(f"Parallel workers: {args.parallel}")
    console.print(f"Output directory: {args.out}\n")

    checks: list[Check] = []
    runs = []
    start_time = time.time()

    for i, name in enumerate(presets):
        spec = get_preset(name).with_overrides(duration_s=args.duration, seeds=args.seed)

        console.print(f"\n[cyan]{'=' * 60}[/cyan]")
        console.print(
            f"[bold]{name}[/bold] ({i + 1}/{len(presets)}) - {spec.description} - "
            f"Started at {datetime.now().strftime('%H:%M:%S')}"
        )
        console.print(f"[cyan]{'=' * 60}[/cyan]")

        preset_start = time.time()
        result = run_sweep(spec, args.out, parallel=args.parallel)
        elapsed = time.time() - preset_start
        runs.append((name, result.succeeded, len(result.outcomes), elapsed))

        console.print(f"  Runs: [green]{result.succeeded}[/green]/{len(result.outcomes)}")
        console.print(f"  Time: {elapsed:.1f}s")
        for e in result.errors[:5]:
            console.print(f"  [red]Error:[/red] {e[:80]}")

        if result.summary_path is None:
            checks.append(Check("runs completed", name, False, "no summary written"))
            continue
        if result.errors:
            checks.append(Check("runs completed", name, False,
                                f"{len(result.errors)} failed runs"))
        checks.extend(CHECKS[name](Curves(result.summary_path)))

    if not args.skip_determinism:
        checks.append(check_determinism(presets[0], args.out / "determinism", 0.1))

    total_time = time.time() - start_time

    console.print(f"\n\n[bold]{'=' * 60}[/bold]")
    console.print("[bold]FINAL SUMMARY[/bold]")
    console.print(f"[bold]{'=' * 60}[/bold]\n")

    table = Table(title="Preset Runs")
    table.add_column("Preset", style="cyan")
    table.add_column("Runs", style="green")
    table.add_column("Time")
    for name, ok, total, elapsed in runs:
        table.add_row(name, f"{ok}/{total}", f"{elapsed:.0f}s")
    console.print(table)

    table = Table(title="Checks")
    table.add_column("Preset", style="cyan")
    table.add_column("Check")
    table.add_column("Status")
    table.add_column("Detail", max_width=70)
    for check in checks:
        status = "[green]✓[/green]" if check.passed else "[red]✗[/red]"
        table.add_row(check.preset, check.name, status, check.detail)
    console.print(table)

    failed = sum(1 for c in checks if not c.passed)
    console.print("\n[bold]Totals:[/bold]")
    console.print(f"  Checks: {len(checks)}")
    console.print(f"  Passed: [green]{len(checks) - failed}[/green]")
    console.print(f"  Failed: [red]{failed}[/red]")
    console.print(f"  Total time: {total_time / 60:.1f} minutes")

    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
