"""Latency recording, summaries and result export."""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import MetricsError
from .ran import TrafficClass
from .transport import PacketBatch

logger = logging.getLogger(__name__)

BIN_NS = 1_000
STREAM_SHIFT = 40

# (label, from stage, to stage); consecutive pairs first, then aggregates
STAGE_PAIRS: tuple[tuple[str, str, str], ...] = (
    ("UE->RU", "ue_arrival", "ran_transmit"),
    ("RU->ONU", "ran_transmit", "onu_enqueue"),
    ("ONU->ONU_OUT", "onu_enqueue", "onu_dequeue"),
    ("ONU_OUT->DU", "onu_dequeue", "du_arrival"),
    ("DU->DU_DONE", "du_arrival", "du_done"),
    ("DU_DONE->TX", "du_done", "tier2_enqueue"),
    ("TX->TX_OUT", "tier2_enqueue", "tier2_depart"),
    ("TX_OUT->APP", "tier2_depart", "app_arrival"),
    ("RU->DU", "ran_transmit", "du_arrival"),
    ("UE->DU", "ue_arrival", "du_arrival"),
    ("UE->APP", "ue_arrival", "app_arrival"),
)
CONSECUTIVE_PAIRS = tuple(label for label, _, _ in STAGE_PAIRS[:8])
PAIR_LABELS = tuple(label for label, _, _ in STAGE_PAIRS)

CSV_COLUMNS = (
    "scenario_id",
    "load_pct",
    "slot_ms",
    "cgs_pct",
    "dl_fraction",
    "policy",
    "class",
    "stage_pair",
    "count",
    "mean_us",
    "max_us",
    "p50_us",
    "p99_us",
    "seed",
)


def make_packet_id(stream: int, index: int) -> int:
    return (stream << STREAM_SHIFT) | index


def split_packet_id(packet_id: int) -> tuple[int, int]:
    return packet_id >> STREAM_SHIFT, packet_id & ((1 << STREAM_SHIFT) - 1)


@dataclass(frozen=True)
class LatencySample:
    packet_id: int
    traffic_class: TrafficClass
    stage_pair: str
    latency_us: float

    def __post_init__(self):
        if self.latency_us < 0:
            raise MetricsError(f"negative latency {self.latency_us} us for {self.stage_pair}")


@dataclass(frozen=True)
class ScenarioTags:
    scenario_id: str
    load_pct: float
    slot_ms: float
    cgs_pct: float
    dl_fraction: float
    policy: str
    seed: int


@dataclass(frozen=True)
class StatSummary:
    stage_pair: str
    traffic_class: TrafficClass
    count: int
    mean_us: float
    max_us: float
    p50_us: float
    p99_us: float
    tags: ScenarioTags

    def as_row(self) -> dict[str, str]:
        t = self.tags
        return {
            "scenario_id": t.scenario_id,
            "load_pct": f"{t.load_pct:g}",
            "slot_ms": f"{t.slot_ms:g}",
            "cgs_pct": f"{t.cgs_pct:g}",
            "dl_fraction": f"{t.dl_fraction:g}",
            "policy": t.policy,
            "class": self.traffic_class.value,
            "stage_pair": self.stage_pair,
            "count": str(self.count),
            "mean_us": f"{self.mean_us:.3f}",
            "max_us": f"{self.max_us:.3f}",
            "p50_us": f"{self.p50_us:.3f}",
            "p99_us": f"{self.p99_us:.3f}",
            "seed": str(t.seed),
        }


class LatencySeries:
    """Exact count/sum/min/max plus a 1 us histogram for percentiles."""

    def __init__(self):
        self.count = 0
        self.sum_ns = 0
        self.min_ns: int | None = None
        self.max_ns: int | None = None
        self.bins = np.zeros(4096, dtype=np.int64)
        self._seen: dict[int, np.ndarray] = {}

    def _mark(self, stream: int, first: int, count: int) -> None:
        seen = self._seen.get(stream)
        stop = first + count
        if seen is None or len(seen) < stop:
            grown = np.zeros(max(stop, 2 * (0 if seen is None else len(seen)), 1024), dtype=bool)
            if seen is not None:
                grown[: len(seen)] = seen
            seen = self._seen[stream] = grown
        if seen[first:stop].any():
            raise MetricsError(
                f"duplicate sample for packet {make_packet_id(stream, first)}..{stop - 1}"
            )
        seen[first:stop] = True

    def _grow(self, top_bin: int) -> None:
        if top_bin >= len(self.bins):
            grown = np.zeros(max(top_bin + 1, 2 * len(self.bins)), dtype=np.int64)
            grown[: len(self.bins)] = self.bins
            self.bins = grown

    def _extremes(self, lo: int, hi: int) -> None:
        self.min_ns = lo if self.min_ns is None else min(self.min_ns, lo)
        self.max_ns = hi if self.max_ns is None else max(self.max_ns, hi)

    def add_constant(self, stream: int, first: int, count: int, latency_ns: int) -> None:
        if count <= 0:
            return
        if latency_ns < 0:
            raise MetricsError(f"negative latency {latency_ns} ns")
        self._mark(stream, first, count)
        self._extremes(latency_ns, latency_ns)
        b = latency_ns // BIN_NS
        self._grow(b)
        self.bins[b] += count
        self.count += count
        self.sum_ns += count * latency_ns

    def add_array(self, stream: int, first: int, latencies_ns: np.ndarray) -> None:
        count = len(latencies_ns)
        if count == 0:
            return
        lo, hi = int(latencies_ns.min()), int(latencies_ns.max())
        if lo < 0:
            raise MetricsError(f"negative latency {lo} ns")
        self._mark(stream, first, count)
        self._extremes(lo, hi)
        idx = latencies_ns // BIN_NS
        self._grow(int(idx.max()))
        counts = np.bincount(idx)
        self.bins[: len(counts)] += counts
        self.count += count
        self.sum_ns += int(latencies_ns.sum())

    def percentile_us(self, q: float) -> float:
        rank = max(1, math.ceil(q * self.count))
        b = int(np.searchsorted(np.cumsum(self.bins), rank, side="left"))
        value = (b + 0.5) * BIN_NS
        return min(max(value, self.min_ns), self.max_ns) / 1e3


class MetricsRecorder:
    """Per-scenario latency series keyed by (class, stage pair)."""

    def __init__(self, tags: ScenarioTags, warmup_ns: int = 50_000_000):
        self.tags = tags
        self.warmup_ns = warmup_ns
        self._series: dict[tuple[TrafficClass, str], LatencySeries] = {}

    def series(self, traffic_class: TrafficClass, stage_pair: str) -> LatencySeries:
        key = (traffic_class, stage_pair)
        s = self._series.get(key)
        if s is None:
            s = self._series[key] = LatencySeries()
        return s

    def record(self, sample: LatencySample) -> None:
        """Append one sample; the caller has already applied the warm-up cut."""
        stream, index = split_packet_id(sample.packet_id)
        latency_ns = int(round(sample.latency_us * 1e3))
        self.series(sample.traffic_class, sample.stage_pair).add_constant(
            stream, index, 1, latency_ns
        )

    def record_batch(self, batch: PacketBatch) -> int:
        """Record every stage pair of a delivered batch.

        Packets that reached the UE before the warm-up boundary are skipped.
        Returns the number of packets recorded.
        """
        stamps = batch.stamps
        stamps.check_order()
        ue = stamps.ue_arrival
        skip = int(np.searchsorted(ue, self.warmup_ns, side="left"))
        n = batch.count - skip
        if n <= 0:
            return 0
        ue = ue[skip:]
        first = batch.first + skip
        cls = batch.traffic_class
        for label, a, b in STAGE_PAIRS:
            end = getattr(stamps, b)
            if a == "ue_arrival":
                self.series(cls, label).add_array(batch.stream, first, end - ue)
            else:
                self.series(cls, label).add_constant(
                    batch.stream, first, n, end - getattr(stamps, a)
                )
        return n

    def summarize(self, stage_pair: str, traffic_class: TrafficClass) -> StatSummary:
        s = self._series.get((traffic_class, stage_pair))
        if s is None or s.count == 0:
            raise MetricsError(f"no samples for {traffic_class.value} {stage_pair}")
        return StatSummary(
            stage_pair=stage_pair,
            traffic_class=traffic_class,
            count=s.count,
            mean_us=s.sum_ns / s.count / 1e3,
            max_us=s.max_ns / 1e3,
            p50_us=s.percentile_us(0.50),
            p99_us=s.percentile_us(0.99),
            tags=self.tags,
        )

    def summaries(self) -> list[StatSummary]:
        """Non-empty summaries in class then stage-pair order."""
        out = []
        for cls in TrafficClass:
            for label in PAIR_LABELS:
                s = self._series.get((cls, label))
                if s is not None and s.count:
                    out.append(self.summarize(label, cls))
        return out


def export_csv(path: Path, summaries: list[StatSummary]) -> Path:
    """Write summaries with the fixed column order; no rows gives a header-only file."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for summary in summaries:
                writer.writerow(summary.as_row())
    except OSError as e:
        raise MetricsError(f"cannot write {path}: {e}") from e
    logger.debug("Wrote %d rows to %s", len(summaries), path)
    return path


def export_json(
    path: Path, summaries: list[StatSummary], run: dict[str, Any] | None = None
) -> Path:
    """Write the CSV rows plus a ``run`` block as a JSON document."""
    path = Path(path)
    doc = {
        "rows": [summary.as_row() for summary in summaries],
        "run": run or {},
    }
    if summaries:
        doc["scenario"] = asdict(summaries[0].tags)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise MetricsError(f"cannot write {path}: {e}") from e
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise MetricsError(f"{path} does not have the metrics column layout")
        return list(reader)
