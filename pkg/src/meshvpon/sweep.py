"""Experiment sweeps and the figure presets.

A sweep is the cartesian product of load points, downlink fractions,
numerologies and policies over one scenario template, repeated for each
seed. Every point writes ``<out>/<name>/<point>/<seed>/metrics.csv``; a
merged ``summary.csv`` is written once all points are done.
"""

import csv
import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from .errors import MeshVponError, MetricsError
from .metrics import CSV_COLUMNS, read_csv
from .ran import TrafficClass
from .scenario import Scenario
from .simulation import run_scenario, write_results

logger = logging.getLogger(__name__)

LOAD_POINTS = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 95.0)
DL_FAMILY = (0.25, 0.20, 0.10, 0.05)


class SweepSpec(BaseModel):
    """Scenario template plus the axes to sweep."""

    model_config = ConfigDict(frozen=True)

    name: str
    template: Scenario = Field(default_factory=Scenario)
    loads: list[float] = Field(min_length=1)
    dl_fractions: list[float] = Field(min_length=1)
    numerologies: list[int] = Field(min_length=1)
    policies: list[str] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)
    description: str = ""
    stage_pair: str = "UE->APP"
    traffic_class: TrafficClass = TrafficClass.URLLC

    @classmethod
    def from_scenario(cls, scenario: Scenario, name: str = "scenario") -> "SweepSpec":
        """Sweep over a scenario's ``[sweep]`` section; empty axes keep the scenario value."""
        axes = scenario.sweep
        return cls(
            name=name,
            template=scenario,
            loads=axes.loads or [scenario.traffic.target_load_pct],
            dl_fractions=axes.dl_fractions or [scenario.pon.dl_fraction],
            numerologies=axes.numerologies or [scenario.ran.numerology],
            policies=axes.policies or [scenario.pon.policy],
            seeds=axes.seeds or [scenario.run.seed],
        )

    def with_overrides(
        self, duration_s: float | None = None, seeds: list[int] | None = None
    ) -> "SweepSpec":
        changes: dict[str, Any] = {}
        if duration_s is not None:
            changes["template"] = self.template.replace(run={"duration_s": duration_s})
        if seeds:
            changes["seeds"] = list(seeds)
        return self.model_copy(update=changes) if changes else self

    def points(self) -> list[tuple[str, Scenario]]:
        """Named scenarios of every point, in a fixed order."""
        out = []
        for policy, mu, dl, load in product(
            self.policies, self.numerologies, self.dl_fractions, self.loads
        ):
            scenario = self.template.replace(
                ran={"numerology": mu, "slot_time_ms": None, "max_prbs": None},
                pon={"policy": policy, "dl_fraction": dl},
                traffic={"target_load_pct": load},
            )
            out.append((scenario.scenario_id, scenario))
        return out

    def jobs(self) -> list[tuple[str, int, Scenario]]:
        return [
            (point, seed, scenario.replace(run={"seed": seed}))
            for point, scenario in self.points()
            for seed in self.seeds
        ]


def _preset(name: str, description: str, **axes: Any) -> SweepSpec:
    values: dict[str, Any] = {
        "loads": list(LOAD_POINTS),
        "dl_fractions": [1.0],
        "numerologies": [1],
        "policies": ["enhanced-codba"],
        "seeds": [1],
    }
    values.update(axes)
    return SweepSpec(name=name, description=description, **values)


PRESETS: dict[str, SweepSpec] = {
    spec.name: spec
    for spec in (
        _preset(
            "fig3",
            "Enhanced vs conventional Co-DBA, URLLC UE->DU, 0.5 ms slots",
            policies=["enhanced-codba", "conventional-codba"],
            stage_pair="UE->DU",
        ),
        _preset("fig4", "URLLC and normal UE->APP, 0.5 ms slots"),
        _preset("fig5", "URLLC and normal UE->APP, 0.25 ms slots", numerologies=[2]),
        _preset("fig6", "0.5 ms against 0.25 ms slots, URLLC UE->APP", numerologies=[1, 2]),
        _preset(
            "fig7",
            "Tier-2 downlink share 25/20/10/5 %, 0.5 ms slots",
            dl_fractions=list(DL_FAMILY),
        ),
        _preset(
            "fig8",
            "Tier-2 downlink share 25/20/10/5 %, 0.25 ms slots",
            numerologies=[2],
            dl_fractions=list(DL_FAMILY),
        ),
    )
}


def get_preset(name: str) -> SweepSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class PointOutcome:
    point: str
    seed: int
    csv_path: Path | None = None
    error: str | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    name: str
    out_dir: Path
    outcomes: list[PointOutcome] = field(default_factory=list)
    summary_path: Path | None = None
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def succeeded(self) -> int:
        return sum(1 for o in self.outcomes if o.ok)


def run_point(point: str, seed: int, scenario: Scenario, out_dir: Path) -> PointOutcome:
    """Run one point and seed; failures are returned, not raised."""
    try:
        result = run_scenario(scenario)
        path = write_results(result, out_dir / point / str(seed), as_json=True)[0]
    except (MeshVponError, ValueError, OSError) as e:
        logger.warning("Point %s seed %d failed: %s", point, seed, e)
        return PointOutcome(point, seed, error=str(e))
    outcome = PointOutcome(point, seed, path, warnings=list(result.warnings))
    if result.errors:
        outcome.error = "; ".join(result.errors)
    return outcome


def merge_summaries(paths: list[Path], out_path: Path) -> Path:
    """Concatenate per-point metrics files under one header."""
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for path in paths:
                writer.writerows(read_csv(path))
    except OSError as e:
        raise MetricsError(f"cannot write {out_path}: {e}") from e
    return out_path


def run_sweep(
    spec: SweepSpec,
    out_dir: Path,
    parallel: int = 1,
    on_done: Callable[[PointOutcome], None] | None = None,
) -> SweepResult:
    """Run every point of a sweep.

    With ``parallel > 1`` points run in worker processes. Outcomes and the
    merged summary are ordered by point and seed, never by completion.
    """
    root = Path(out_dir) / spec.name
    jobs = spec.jobs()
    logger.info("Sweep %s: %d runs into %s", spec.name, len(jobs), root)

    done: dict[tuple[str, int], PointOutcome] = {}
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as executor:
            futures = {
                executor.submit(run_point, point, seed, scenario, root): (point, seed)
                for point, seed, scenario in jobs
            }
            for future in as_completed(futures):
                point, seed = futures[future]
                try:
                    outcome = future.result()
                except Exception as e:  # a worker died
                    outcome = PointOutcome(point, seed, error=f"worker failed: {e}")
                done[(point, seed)] = outcome
                if on_done:
                    on_done(outcome)
    else:
        for point, seed, scenario in jobs:
            outcome = run_point(point, seed, scenario, root)
            done[(point, seed)] = outcome
            if on_done:
                on_done(outcome)

    result = SweepResult(spec.name, root)
    result.outcomes = [done[(point, seed)] for point, seed, _ in jobs]
    for outcome in result.outcomes:
        tag = f"{outcome.point} seed {outcome.seed}"
        if not outcome.ok:
            result.errors.append(f"{tag}: {outcome.error}")
        result.warnings.extend(f"{tag}: {w}" for w in outcome.warnings)

    written = [o.csv_path for o in result.outcomes if o.csv_path is not None]
    if written:
        result.summary_path = merge_summaries(written, root / "summary.csv")
        logger.info("Wrote %s", result.summary_path)
    return result
