#!/usr/bin/env python3
"""Validate metrics files in a results tree.

Usage:
    python scripts/validate_results.py results/
    python scripts/validate_results.py results/ --sample 10
    python scripts/validate_results.py results/fig4 --all --verbose
"""

import argparse
import csv
import json
import random
import sys
from pathlib import Path

from rich.console import Console
from rich.table import Table

from meshvpon.metrics import CSV_COLUMNS, PAIR_LABELS

console = Console()

CLASSES = ("urllc", "normal")
NUMERIC = ("count", "mean_us", "max_us", "p50_us", "p99_us")
# values are written with three decimals
TOLERANCE_US = 1e-3


class ResultsValidator:
    """Checks metrics CSVs and their JSON run blocks."""

    def __init__(self, verbose: bool = False):
        self.verbose = verbose
        self.errors: list[str] = []
        self.warnings: list[str] = []

    def reset(self):
        """Reset errors and warnings for a new file."""
        self.errors = []
        self.warnings = []

    def error(self, msg: str):
        self.errors.append(msg)

    def warn(self, msg: str):
        self.warnings.append(msg)

    def validate_file(self, path: Path) -> tuple[bool, list[str], list[str]]:
        """Validate one metrics.csv. Returns (success, errors, warnings)."""
        self.reset()

        try:
            with open(path, newline="", encoding="utf-8") as f:
                reader = csv.DictReader(f)
                columns = tuple(reader.fieldnames or ())
                rows = list(reader)
        except OSError as e:
            self.error(f"Cannot read: {e}")
            return False, self.errors, self.warnings

        if columns != CSV_COLUMNS:
            self.error(f"Unexpected columns: {', '.join(columns) or '(none)'}")
            return False, self.errors, self.warnings
        if not rows:
            self.warn("Header only, no samples after warm-up")

        seen = set()
        for i, row in enumerate(rows):
            self._validate_row(i, row)
            key = (row["scenario_id"], row["seed"], row["class"], row["stage_pair"])
            if key in seen:
                self.error(f"Row {i}: duplicate {row['class']} {row['stage_pair']}")
            seen.add(key)

        run_file = path.with_name("metrics.json")
        if run_file.exists():
            self._validate_run(run_file)

        success = len(self.errors) == 0
        return success, self.errors.copy(), self.warnings.copy()

    def _validate_row(self, i: int, row: dict[str, str]):
        if row["class"] not in CLASSES:
            self.error(f"Row {i}: unknown class {row['class']!r}")
        if row["stage_pair"] not in PAIR_LABELS:
            self.error(f"Row {i}: unknown stage pair {row['stage_pair']!r}")

        try:
            values = {name: float(row[name]) for name in NUMERIC}
        except ValueError as e:
            self.error(f"Row {i}: non-numeric statistic ({e})")
            return

        label = f"Row {i} ({row['class']} {row['stage_pair']})"
        if values["count"] <= 0:
            self.error(f"{label}: count must be positive")
        if min(values.values()) < 0:
            self.error(f"{label}: negative latency")
        if not values["p50_us"] <= values["p99_us"] + TOLERANCE_US:
            self.error(f"{label}: p50 {values['p50_us']} > p99 {values['p99_us']}")
        if not values["p99_us"] <= values["max_us"] + TOLERANCE_US:
            self.error(f"{label}: p99 {values['p99_us']} > max {values['max_us']}")
        if not values["mean_us"] <= values["max_us"] + TOLERANCE_US:
            self.error(f"{label}: mean {values['mean_us']} > max {values['max_us']}")

    def _validate_run(self, path: Path):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            self.error(f"metrics.json: invalid JSON: {e}")
            return

        run = doc.get("run", {})
        for cls, ledger in run.get("ledger", {}).items():
            generated = ledger.get("generated", 0)
            accounted = ledger.get("delivered", 0) + ledger.get("in_flight", 0)
            if generated != accounted:
                self.error(f"metrics.json: {cls} ledger off by {generated - accounted} bytes")
        for msg in run.get("errors", []):
            self.error(f"metrics.json: {msg}")
        for msg in run.get("warnings", []):
            self.warn(msg)


def main():
    parser = argparse.ArgumentParser(description="Validate metrics files in a results tree")
    parser.add_argument(
        "directory",
        type=Path,
        help="Results directory",
    )
    parser.add_argument(
        "--sample",
        type=int,
        default=10,
        help="Number of files to randomly sample (default: 10)",
    )
    parser.add_argument(
        "--all",
        action="store_true",
        help="Validate all files instead of sampling",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Show detailed output including warnings",
    )
    parser.add_argument(
        "--pattern",
        type=str,
        default="**/metrics.csv",
        help="Glob pattern for metrics files (default: **/metrics.csv)",
    )
    args = parser.parse_args()

    files = sorted(args.directory.glob(args.pattern))
    if not files:
        console.print(f"[red]No metrics files found in {args.directory}[/red]")
        sys.exit(1)

    console.print(f"Found [cyan]{len(files)}[/cyan] metrics files\n")

    if args.all:
        selected = files
    else:
        selected = random.sample(files, min(args.sample, len(files)))

    validator = ResultsValidator(verbose=args.verbose)
    results = []
    for path in sorted(selected):
        success, errors, warnings = validator.validate_file(path)
        results.append((str(path.relative_to(args.directory)), success, errors, warnings))

    table = Table(title="Validation Results")
    table.add_column("File", style="cyan", max_width=60)
    table.add_column("Status")
    table.add_column("Errors", style="red")
    table.add_column("Warnings", style="yellow")

    failed_files = 0
    for name, success, errors, warnings in results:
        status = "[green]✓[/green]" if success else "[red]✗[/red]"
        table.add_row(
            name,
            status,
            str(len(errors)) if errors else "-",
            str(len(warnings)) if warnings else "-",
        )
        if not success:
            failed_files += 1
    console.print(table)

    console.print("\n[bold]Summary:[/bold]")
    console.print(f"  Files validated: {len(results)}")
    console.print(f"  Passed: [green]{len(results) - failed_files}[/green]")
    console.print(f"  Failed: [red]{failed_files}[/red]")

    if args.verbose or failed_files > 0:
        console.print("\n[bold]Details:[/bold]")
        for name, _, errors, warnings in results:
            if errors or (args.verbose and warnings):
                console.print(f"\n[cyan]{name}[/cyan]")
                for e in errors:
                    console.print(f"  [red]ERROR:[/red] {e}")
                if args.verbose:
                    for w in warnings:
                        console.print(f"  [yellow]WARN:[/yellow] {w}")

    if failed_files > 0:
        sys.exit(1)


if __name__ == "__main__":
    main()
