"""Command-line interface for meshvpon.

Run vPON fronthaul scenarios, sweep the figure presets and inspect results.
"""

import logging
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .dba import policy_names
from .errors import MeshVponError
from .metrics import PAIR_LABELS, read_csv
from .ran import CgsConfig, NumerologyConfig, TrafficClass
from .rates import cell_throughput, split72_rate
from .scenario import Scenario, parse_scenario
from .simulation import SimulationResult, run_scenario, user_payload_bytes, write_results
from .sweep import PRESETS, SweepSpec, get_preset, run_sweep

console = Console()


def setup_logging(verbose: bool):
    """Configure logging with rich output."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=console, rich_tracebacks=True)],
    )


def _load_scenario(path: Path | None) -> Scenario:
    return parse_scenario(path) if path else Scenario()


@click.group()
@click.version_option(version=__version__)
def main():
    """Simulate two-tier vPON over MESH-PON for 5G fronthaul.

    Examples:

        # One run with the default scenario (0.5 ms slots, enhanced Co-DBA, 50 % load)
        meshvpon run

        # A scenario file, overriding seed and duration
        meshvpon run --scenario my_scenario.toml --seed 7 --duration 1

        # Reproduce a figure preset on 4 workers
        meshvpon sweep --preset fig4 --parallel 4 --out results

        # Print a metrics file
        meshvpon show results/fig4/summary.csv --pair UE->APP
    """
    pass


@main.command()
@click.option(
    "-s", "--scenario",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Scenario TOML file (default: built-in defaults)",
)
@click.option("--seed", type=int, help="Random seed (overrides [run] seed)")
@click.option("-d", "--duration", type=float, help="Simulated seconds (overrides [run])")
@click.option("-l", "--load", type=float, help="Target PON load in percent")
@click.option(
    "-p", "--policy",
    type=click.Choice(policy_names()),
    help="Fronthaul DBA policy",
)
@click.option(
    "-o", "--out",
    type=click.Path(path_type=Path),
    default=Path("./results"),
    help="Output directory (default: ./results)",
)
@click.option("--json", "as_json", is_flag=True, help="Also write metrics.json")
@click.option("-v", "--verbose", is_flag=True, help="Verbose output")
def run(
    scenario: Path | None,
    seed: int | None,
    duration: float | None,
    load: float | None,
    policy: str | None,
    out: Path,
    as_json: bool,
    verbose: bool,
):
    """Run one scenario and write its metrics."""
    setup_logging(verbose)

    try:
        config = _load_scenario(scenario)
        overrides: dict[str, dict] = {}
        if seed is not None:
            overrides["run"] = {"seed": seed}
        if duration is not None:
            overrides.setdefault("run", {})["duration_s"] = duration
        if load is not None:
            overrides["traffic"] = {"target_load_pct": load}
        if policy is not None:
            overrides["pon"] = {"policy": policy}
        if overrides:
            config = config.replace(**overrides)

        console.print(Panel(
            f"{config.scenario_id} for {config.run.duration_s:g} s, seed {config.run.seed}",
            title="meshvpon",
        ))
        with console.status("Simulating..."):
            result = run_scenario(config)
        paths = write_results(result, out / config.scenario_id / str(config.run.seed), as_json)
        _display_run(result, paths[0])

        if result.errors:
            sys.exit(1)

    except (MeshVponError, ValueError) as e:
        console.print(f"[red]Error:[/red] {escape(str(e))}")
        if verbose:
            console.print_exception()
        sys.exit(1)


@main.command()
@click.option("--preset", type=click.Choice(sorted(PRESETS)), help="Figure preset to run")
@click.option(
    "-s", "--scenario",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Scenario TOML file whose [sweep] section defines the axes",
)
@click.option("--seed", "seeds", type=int, multiple=True, help="Seed (repeat for several)")
@click.option("-d", "--duration", type=float, help="Simulated seconds per point")
@click.option(
    "-o", "--out",
    type=click.Path(path_type=Path),
    default=Path("./results"),
    help="Output directory (default: ./results)",
)
@click.option("-j", "--parallel", type=int, default=1, help="Worker processes (default: 1)")
@click.option("-v", "--verbose", is_flag=True, help="Verbose output")
def sweep(
    preset: str | None,
    scenario: Path | None,
    seeds: tuple[int, ...],
    duration: float | None,
    out: Path,
    parallel: int,
    verbose: bool,
):
    """Run a figure preset or a scenario sweep.

    Examples:

        meshvpon sweep --preset fig7 --parallel 8

        meshvpon sweep --scenario my_sweep.toml --seed 1 --seed 2 --seed 3
    """
    from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn

    setup_logging(verbose)

    if (preset is None) == (scenario is None):
        console.print("[red]Error:[/red] give exactly one of --preset or --scenario")
        sys.exit(1)

    try:
        if preset:
            spec = get_preset(preset)
        else:
            spec = SweepSpec.from_scenario(parse_scenario(scenario), name=scenario.stem)
        spec = spec.with_overrides(duration_s=duration, seeds=list(seeds))
    except (MeshVponError, ValueError) as e:
        console.print(f"[red]Error:[/red] {escape(str(e))}")
        sys.exit(1)

    jobs = len(spec.jobs())
    console.print(f"\n[bold]Sweep {spec.name}[/bold]: {jobs} runs, {parallel} worker(s)\n")

    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Simulating...", total=jobs)

        def advance(outcome):
            progress.update(task, advance=1, description=f"Finished {outcome.point}")

        result = run_sweep(spec, out, parallel=parallel, on_done=advance)

    table = Table(title=f"Sweep {spec.name}")
    table.add_column("Point", style="cyan")
    table.add_column("Seed", justify="right")
    table.add_column("Status")
    table.add_column("Output/Error")
    for outcome in result.outcomes:
        if outcome.ok:
            table.add_row(outcome.point, str(outcome.seed), "[green]✓[/green]",
                          str(outcome.csv_path))
        else:
            table.add_row(outcome.point, str(outcome.seed), "[red]✗[/red]",
                          escape((outcome.error or "")[:80]))
    console.print(table)

    if result.warnings and verbose:
        console.print("\n[yellow]Warnings:[/yellow]")
        for w in result.warnings:
            console.print(f"  • {escape(w)}")

    console.print(f"\n[bold]Summary:[/bold] {result.succeeded}/{len(result.outcomes)} successful")
    if result.summary_path:
        console.print(f"[bold]Merged:[/bold] {result.summary_path}")
    if result.errors:
        sys.exit(1)


@main.command()
def presets():
    """List the figure presets."""
    table = Table(title="Presets")
    table.add_column("Name", style="cyan")
    table.add_column("Points", justify="right")
    table.add_column("Plots")
    table.add_column("Description")
    for name in sorted(PRESETS):
        spec = PRESETS[name]
        table.add_row(
            name,
            str(len(spec.points())),
            f"{spec.traffic_class.value} {spec.stage_pair}",
            spec.description,
        )
    console.print(table)


@main.command()
@click.option("--mu", type=click.Choice(["1", "2"]), default="1", help="Numerology")
@click.option("--cgs", type=float, default=0.20, help="CGS reserved fraction")
def rates(mu: str, cgs: float):
    """Show the rate model for one numerology."""
    try:
        numerology = NumerologyConfig(mu=int(mu))
        pool = CgsConfig(reserved_fraction=cgs, max_prbs=numerology.max_prbs)
    except ValueError as e:
        console.print(f"[red]Error:[/red] {escape(str(e))}")
        sys.exit(1)
    params = numerology.split72_params()
    scenario = Scenario.model_validate({"ran": {"numerology": int(mu)}})

    table = Table(title=f"Rate model, µ={mu}, {numerology.slot_time_s * 1e3:g} ms slots")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("PRBs", str(numerology.max_prbs))
    table.add_row("CGS PRBs", str(pool.reserved_prbs))
    table.add_row("Split 7.2 idle", f"{split72_rate(params, 0) / 1e6:.3f} Mbps")
    table.add_row(
        "Split 7.2 CGS pool",
        f"{split72_rate(params, pool.reserved_prbs) / 1e6:.3f} Mbps",
    )
    table.add_row("Split 7.2 full", f"{split72_rate(params, numerology.max_prbs) / 1e6:.3f} Mbps")
    table.add_row("Per PRB", f"{params.prb_slope_bps / 1e6:.3f} Mbps")
    table.add_row("Cell throughput", f"{cell_throughput(numerology.cell_params()):.3f} Mbps")
    table.add_row("DU payload per user", f"{user_payload_bytes(scenario)} B")
    console.print(table)


@main.command()
@click.argument("metrics_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "-c", "--class", "traffic_class",
    type=click.Choice([c.value for c in TrafficClass]),
    help="Only this traffic class",
)
@click.option("--pair", type=click.Choice(PAIR_LABELS), help="Only this stage pair")
def show(metrics_file: Path, traffic_class: str | None, pair: str | None):
    """Render a metrics CSV as a table."""
    try:
        rows = read_csv(metrics_file)
    except MeshVponError as e:
        console.print(f"[red]Error:[/red] {escape(str(e))}")
        sys.exit(1)

    rows = [
        r for r in rows
        if (traffic_class is None or r["class"] == traffic_class)
        and (pair is None or r["stage_pair"] == pair)
    ]
    table = Table(title=str(metrics_file))
    for column in ("policy", "load_pct", "slot_ms", "dl_fraction", "class", "stage_pair"):
        table.add_column(column, style="cyan" if column == "stage_pair" else None)
    for column in ("count", "mean_us", "p50_us", "p99_us", "max_us"):
        table.add_column(column, justify="right")
    for r in rows:
        table.add_row(
            r["policy"], r["load_pct"], r["slot_ms"], r["dl_fraction"], r["class"],
            r["stage_pair"], r["count"], r["mean_us"], r["p50_us"], r["p99_us"], r["max_us"],
        )
    console.print(table)
    if not rows:
        console.print("[yellow]No matching rows[/yellow]")


def _display_run(result: SimulationResult, output_path: Path):
    """Display the headline latencies of one run."""
    table = Table(title="Latency (µs)")
    table.add_column("Class", style="cyan")
    table.add_column("Stage pair")
    table.add_column("Count", justify="right")
    table.add_column("Mean", justify="right")
    table.add_column("p99", justify="right")
    table.add_column("Max", justify="right")
    for summary in result.summaries:
        if summary.stage_pair not in ("RU->DU", "UE->DU", "UE->APP"):
            continue
        table.add_row(
            summary.traffic_class.value,
            summary.stage_pair,
            str(summary.count),
            f"{summary.mean_us:.1f}",
            f"{summary.p99_us:.1f}",
            f"{summary.max_us:.1f}",
        )
    console.print(table)

    console.print(
        f"Measured load [bold]{result.measured_load_pct:.1f}%[/bold] "
        f"({result.events_processed} events, {result.urllc_deferrals} URLLC deferrals)"
    )

    if result.warnings:
        console.print("\n[yellow]Warnings:[/yellow]")
        for w in result.warnings:
            console.print(f"  • {escape(w)}")

    if result.errors:
        console.print("\n[red]Errors:[/red]")
        for e in result.errors:
            console.print(f"  • {escape(e)}")

    console.print(f"\n[bold]Output:[/bold] {output_path}")


if __name__ == "__main__":
    main()
