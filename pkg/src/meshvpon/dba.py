"""Dynamic bandwidth allocation.

Three policies size the upstream grants of a vPON slice:

* enhanced Co-DBA grants each RU the fronthaul of its scheduled normal PRBs
  plus the whole CGS reservation, known 4 slots ahead from the CTI;
* conventional Co-DBA grants the scheduled normal PRBs plus a fixed
  headroom of the RU's full-load rate;
* SR-DBA grants what the ONUs reported in their status reports.

An RU streams each slot into its ONU one chunk per grant cycle while the
slot is on the air. Co-DBA grants are planned per NR slot and cut into the
same chunks, so every chunk meets a window sized for it in the cycle it
arrives. Whatever a cycle has left after the plans is handed out from
status reports, so queues that outgrow their plan still drain.
"""

import logging
import math
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .engine import NS_PER_S, seconds_to_ns
from .ran import CtiReport
from .rates import Split72Params, split72_rate

logger = logging.getLogger(__name__)


class GrantCycleConfig(BaseModel):
    """OLT upstream framing of one slice."""

    model_config = ConfigDict(frozen=True)

    period_ns: int = Field(default=125_000, gt=0)
    onu_response_ns: int = Field(default=35_000, ge=0)
    uplink_capacity_bps: int = Field(default=50_000_000_000, gt=0)
    guard_ns: int = Field(default=100, ge=0)
    frame_bytes: int = Field(default=2048, gt=0)
    polling_bytes: int = Field(default=64, ge=0)

    @model_validator(mode="after")
    def _check_period(self) -> "GrantCycleConfig":
        if self.period_ns <= self.onu_response_ns:
            raise ValueError("grant cycle must be longer than the ONU response time")
        return self

    def cycles_per_slot(self, slot_ns: int) -> int:
        if slot_ns % self.period_ns:
            raise ValueError(f"slot of {slot_ns} ns is not a whole number of grant cycles")
        return slot_ns // self.period_ns

    @property
    def cycle_capacity_bytes(self) -> int:
        return self.uplink_capacity_bps * self.period_ns // (8 * NS_PER_S)

    def airtime_ns(self, nbytes: int) -> int:
        """Serialization time of ``nbytes``, rounded up to whole ns."""
        return -(-(nbytes * 8 * NS_PER_S) // self.uplink_capacity_bps)

    def window_ns(self, nbytes: int) -> int:
        return self.guard_ns + self.airtime_ns(nbytes)

    def max_bytes(self, n_windows: int) -> int:
        """Bytes that fit in one cycle split over ``n_windows`` windows."""
        # one ns per window for the round-up of each airtime
        budget_ns = self.period_ns - n_windows * (self.guard_ns + 1)
        return max(0, budget_ns * self.uplink_capacity_bps // (8 * NS_PER_S))

    def max_frames(self, n_windows: int) -> int:
        return self.max_bytes(n_windows) // self.frame_bytes


@dataclass(frozen=True)
class GrantWindow:
    """One ONU's upstream transmission window."""

    onu_id: int
    nbytes: int
    start_ns: int
    duration_ns: int
    frames: int = 0

    @property
    def end_ns(self) -> int:
        return self.start_ns + self.duration_ns


@dataclass(frozen=True)
class GrantMap:
    cycle_index: int
    cycle_start_ns: int
    windows: tuple[GrantWindow, ...]

    @property
    def total_bytes(self) -> int:
        return sum(w.nbytes for w in self.windows)

    def window(self, onu_id: int) -> GrantWindow | None:
        for w in self.windows:
            if w.onu_id == onu_id:
                return w
        return None

    def offset_ns(self, onu_id: int) -> int:
        w = self.window(onu_id)
        return -1 if w is None else w.start_ns - self.cycle_start_ns

    def is_tdma_disjoint(self, period_ns: int) -> bool:
        ordered = sorted(self.windows, key=lambda w: w.start_ns)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.start_ns < prev.end_ns:
                return False
        if ordered and ordered[0].start_ns < self.cycle_start_ns:
            return False
        return not ordered or ordered[-1].end_ns <= self.cycle_start_ns + period_ns


@dataclass(frozen=True)
class StatusReport:
    onu_id: int
    queued_bytes: int
    report_cycle: int
    reported_at: int

    def __post_init__(self):
        if self.queued_bytes < 0:
            raise ValueError(f"ONU {self.onu_id} reported negative backlog {self.queued_bytes}")


@dataclass(frozen=True)
class SlotGrant:
    """Co-DBA grant for one RU and one NR slot, one entry per chunk of the slot."""

    ru_id: int
    target_slot: int
    nbytes: int
    frames: int
    per_cycle: tuple[int, ...]


def rate_to_slot_bytes(rate_bps: float, slot_time_s: float) -> int:
    """Whole bytes needed to carry ``rate_bps`` for one slot."""
    return math.ceil(rate_bps * slot_time_s / 8 - 1e-6)


def split_bytes(nbytes: int, chunks: int) -> tuple[int, ...]:
    """Cut a slot's bytes into equal chunks, one per grant cycle.

    Chunk ``j`` holds the bytes produced up to ``(j + 1) / chunks`` of the
    slot less those already handed over, so sizes differ by at most one.
    """
    if chunks <= 0:
        raise ValueError(f"chunks must be positive, got {chunks}")
    if nbytes < 0:
        raise ValueError(f"nbytes must be non-negative, got {nbytes}")
    marks = [j * nbytes // chunks for j in range(chunks + 1)]
    return tuple(b - a for a, b in zip(marks, marks[1:]))


def chunk_frames(nbytes: int, chunks: int, frame_bytes: int) -> tuple[int, ...]:
    """Frames of each chunk; every chunk is framed on its own."""
    return tuple(-(-part // frame_bytes) for part in split_bytes(nbytes, chunks))


def share(demands: Sequence[int], budget: int, start: int = 0) -> list[int]:
    """Cap integer demands to a budget, proportionally to demand.

    Leftover units from flooring go one each to ONUs in round-robin order
    from ``start``. The result sums to ``min(sum(demands), budget)``.
    """
    total = sum(demands)
    if total <= budget:
        return list(demands)
    granted = [d * budget // total for d in demands]
    remainder = budget - sum(granted)
    n = len(demands)
    i = start % n if n else 0
    while remainder > 0:
        if granted[i] < demands[i]:
            granted[i] += 1
            remainder -= 1
        i = (i + 1) % n
    return granted


def _slot_grant(
    cti: CtiReport, nbytes: int, gc: GrantCycleConfig, slot_time_s: float
) -> SlotGrant:
    cycles = gc.cycles_per_slot(seconds_to_ns(slot_time_s))
    per_cycle = chunk_frames(nbytes, cycles, gc.frame_bytes)
    return SlotGrant(
        ru_id=cti.ru_id,
        target_slot=cti.target_slot,
        nbytes=nbytes,
        frames=sum(per_cycle),
        per_cycle=per_cycle,
    )


def enhanced_codba(cti: CtiReport, params: Split72Params, gc: GrantCycleConfig) -> SlotGrant:
    """Grant the fronthaul of the scheduled normal PRBs plus the full CGS pool."""
    data_prbs = min(params.max_prbs, cti.scheduled_normal_prbs + cti.cgs_reserved_prbs)
    nbytes = rate_to_slot_bytes(split72_rate(params, data_prbs), params.slot_time_s)
    return _slot_grant(cti, nbytes, gc, params.slot_time_s)


def conventional_codba(
    cti: CtiReport,
    ru_full_rate: float,
    gc: GrantCycleConfig,
    params: Split72Params,
    headroom: float = 0.05,
) -> SlotGrant:
    """Grant the scheduled normal PRBs plus a fixed share of the full-load rate.

    The CGS field of the CTI is ignored.
    """
    normal = rate_to_slot_bytes(
        split72_rate(params, cti.scheduled_normal_prbs), params.slot_time_s
    )
    fixed = rate_to_slot_bytes(headroom * ru_full_rate, params.slot_time_s) if headroom else 0
    return _slot_grant(cti, normal + fixed, gc, params.slot_time_s)


def sr_dba(
    reports: Sequence[StatusReport],
    gc: GrantCycleConfig,
    cycle_index: int,
    granted_since: Mapping[int, int] | None = None,
    rr_start: int = 0,
) -> GrantMap:
    """Byte-granular status-report grants for one cycle.

    Each reporting ONU gets its reported backlog, less what it was granted
    after reporting, and never less than the polling allowance. Demand above
    the cycle capacity is scaled down; the ONUs report the rest again.
    """
    granted_since = granted_since or {}
    ordered = sorted(reports, key=lambda r: r.onu_id)
    n = len(ordered)
    polling = gc.polling_bytes
    demand = [
        max(0, r.queued_bytes - granted_since.get(r.onu_id, 0) - polling) for r in ordered
    ]
    budget = gc.max_bytes(n) - n * polling
    extra = share(demand, max(0, budget), rr_start)

    cycle_start = cycle_index * gc.period_ns
    cursor = cycle_start
    windows = []
    for report, more in zip(ordered, extra):
        nbytes = polling + more
        duration = gc.window_ns(nbytes)
        windows.append(GrantWindow(report.onu_id, nbytes, cursor, duration))
        cursor += duration
    return GrantMap(cycle_index, cycle_start, tuple(windows))


class ReportBook:
    """Status reports and grants per ONU, as seen by the OLT.

    A report taken at ``t`` can shape a cycle starting at ``t + lag_ns`` or
    later (report upstream, grant downstream, ONU response).
    """

    def __init__(self, lag_ns: int):
        self.lag_ns = lag_ns
        self._reports: dict[int, deque[StatusReport]] = {}
        self._grants: dict[int, deque[tuple[int, int]]] = {}

    def file(self, report: StatusReport) -> None:
        self._reports.setdefault(report.onu_id, deque()).append(report)

    def note_grant(self, onu_id: int, start_ns: int, nbytes: int) -> None:
        if nbytes:
            self._grants.setdefault(onu_id, deque()).append((start_ns, nbytes))

    def latest(self, onu_id: int, cycle_start: int) -> StatusReport | None:
        reports = self._reports.get(onu_id)
        if not reports:
            return None
        deadline = cycle_start - self.lag_ns
        while len(reports) > 1 and reports[1].reported_at <= deadline:
            reports.popleft()
        head = reports[0]
        return head if head.reported_at <= deadline else None

    def granted_since(self, onu_id: int, since: int) -> int:
        grants = self._grants.get(onu_id)
        if not grants:
            return 0
        while grants and grants[0][0] < since:
            grants.popleft()
        return sum(nbytes for _, nbytes in grants)

    def outstanding(self, onu_id: int, cycle_start: int) -> int:
        """Reported backlog not yet covered by grants issued after the report."""
        report = self.latest(onu_id, cycle_start)
        if report is None:
            return 0
        return max(0, report.queued_bytes - self.granted_since(onu_id, report.reported_at))


# --- policy registry ---

_POLICIES: dict[str, type["DbaPolicy"]] = {}


def register(name: str):
    """Class decorator adding a policy under its scenario-file name."""

    def deco(cls: type["DbaPolicy"]) -> type["DbaPolicy"]:
        cls.name = name
        _POLICIES[name] = cls
        return cls

    return deco


def policy_names() -> list[str]:
    return list(_POLICIES)


class DbaPolicy:
    """Per-slot grant planning of the fronthaul tier."""

    name = ""
    uses_cti = True

    def __init__(self, params: Split72Params, gc: GrantCycleConfig, headroom: float = 0.05):
        self.params = params
        self.gc = gc
        self.headroom = headroom

    def slot_grant(self, cti: CtiReport) -> SlotGrant | None:
        raise NotImplementedError


@register("enhanced-codba")
class EnhancedCoDba(DbaPolicy):
    def slot_grant(self, cti: CtiReport) -> SlotGrant:
        return enhanced_codba(cti, self.params, self.gc)


@register("conventional-codba")
class ConventionalCoDba(DbaPolicy):
    def __init__(self, params: Split72Params, gc: GrantCycleConfig, headroom: float = 0.05):
        super().__init__(params, gc, headroom)
        self.full_rate = split72_rate(params, params.max_prbs)

    def slot_grant(self, cti: CtiReport) -> SlotGrant:
        return conventional_codba(cti, self.full_rate, self.gc, self.params, self.headroom)


@register("sr-dba")
class StatusReportDba(DbaPolicy):
    uses_cti = False

    def slot_grant(self, cti: CtiReport) -> None:
        return None


def build_policy(
    name: str, params: Split72Params, gc: GrantCycleConfig, headroom: float = 0.05
) -> DbaPolicy:
    try:
        cls = _POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown DBA policy {name!r}; choose from {policy_names()}") from None
    return cls(params, gc, headroom)


class CycleScheduler:
    """Frame-granular grant maps for the fronthaul slice.

    Planned Co-DBA frames come first, scaled down proportionally when a
    cycle is oversubscribed. The remaining capacity goes to ONUs whose
    status reports show backlog beyond what is already planned.
    """

    def __init__(self, onu_ids: Sequence[int], gc: GrantCycleConfig, report_lag_ns: int):
        self.onu_ids = list(onu_ids)
        self.gc = gc
        self.book = ReportBook(report_lag_ns)
        self._planned: dict[int, dict[int, int]] = {}
        self.overloaded_cycles = 0

    def plan(self, grant: SlotGrant, first_cycle: int) -> None:
        for offset, frames in enumerate(grant.per_cycle):
            if frames:
                cycle = self._planned.setdefault(first_cycle + offset, {})
                cycle[grant.ru_id] = cycle.get(grant.ru_id, 0) + frames

    def planned_frames(self, cycle_index: int, onu_id: int) -> int:
        return self._planned.get(cycle_index, {}).get(onu_id, 0)

    def build(self, cycle_index: int) -> GrantMap:
        gc = self.gc
        fb = gc.frame_bytes
        cycle_start = cycle_index * gc.period_ns
        n = len(self.onu_ids)
        rr = cycle_index % n if n else 0

        planned = self._planned.pop(cycle_index, {})
        want = [planned.get(onu, 0) for onu in self.onu_ids]
        capacity = gc.max_frames(n)
        base = share(want, capacity, rr)
        if sum(want) > capacity:
            self.overloaded_cycles += 1
            logger.debug(
                "Cycle %d oversubscribed: %d planned frames, %d fit",
                cycle_index, sum(want), capacity,
            )

        backlog = [
            -(-max(0, self.book.outstanding(onu, cycle_start) - b * fb) // fb)
            for onu, b in zip(self.onu_ids, base)
        ]
        extra = share(backlog, capacity - sum(base), rr)

        cursor = cycle_start
        windows = []
        for onu, b, e in zip(self.onu_ids, base, extra):
            frames = b + e
            nbytes = frames * fb
            duration = gc.window_ns(nbytes)
            windows.append(GrantWindow(onu, nbytes, cursor, duration, frames))
            self.book.note_grant(onu, cursor, nbytes)
            cursor += duration
        return GrantMap(cycle_index, cycle_start, tuple(windows))
