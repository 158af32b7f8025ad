"""End-to-end data path.

eCPRI packetization at the RU ONU, the fronthaul uplink under grant maps,
DU/CU processing at MEC-1, the tier-2 downlink that carries URLLC payloads
to MEC-2, and the status-report uplink that carries normal payloads to the
central office.
"""

import logging
import math
from collections import deque
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any, overload

import numpy as np

from .dba import GrantCycleConfig, GrantMap, GrantWindow, ReportBook, StatusReport, sr_dba
from .errors import TimestampOrderError
from .ran import TrafficClass

logger = logging.getLogger(__name__)

FRAME_BYTES = 2048

STAGES = (
    "ue_arrival",
    "ran_transmit",
    "onu_enqueue",
    "onu_dequeue",
    "du_arrival",
    "du_done",
    "tier2_enqueue",
    "tier2_depart",
    "app_arrival",
)


@dataclass(frozen=True)
class EcpriFrame:
    size: int
    payload_bytes: int
    created_at: int
    lineage: tuple[int, ...]


class FrameTrain(Sequence[EcpriFrame]):
    """The frames of one chunk of RU fronthaul, all handed over at one instant.

    Frames are materialized on access only.
    """

    def __init__(
        self, slot_bytes: int, at: int, frame_bytes: int = FRAME_BYTES, lineage: tuple = ()
    ):
        self.slot_bytes = slot_bytes
        self.enqueued_at = at
        self.frame_bytes = frame_bytes
        self.lineage = tuple(lineage)
        self.n_frames = -(-slot_bytes // frame_bytes)

    def __len__(self) -> int:
        return self.n_frames

    @overload
    def __getitem__(self, index: int) -> EcpriFrame: ...

    @overload
    def __getitem__(self, index: slice) -> list[EcpriFrame]: ...

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(self.n_frames))]
        if index < 0:
            index += self.n_frames
        if not 0 <= index < self.n_frames:
            raise IndexError(index)
        last = index == self.n_frames - 1
        payload = self.slot_bytes - index * self.frame_bytes if last else self.frame_bytes
        return EcpriFrame(
            size=self.frame_bytes,
            payload_bytes=payload,
            created_at=self.enqueued_at,
            lineage=(*self.lineage, index),
        )

    @property
    def padding(self) -> int:
        return self.n_frames * self.frame_bytes - self.slot_bytes

    @property
    def wire_bytes(self) -> int:
        return self.n_frames * self.frame_bytes


def packetize(
    slot_bytes: int, at: int, frame_bytes: int = FRAME_BYTES, lineage: tuple = ()
) -> FrameTrain:
    """Cut fronthaul bytes into eCPRI frames, padding the last one."""
    if slot_bytes < 0:
        raise ValueError(f"slot_bytes must be non-negative, got {slot_bytes}")
    return FrameTrain(slot_bytes, at, frame_bytes, lineage)


@dataclass
class StageTimestamps:
    """Stage instants of a packet batch; ``ue_arrival`` is per packet.

    For normal traffic the tier-2 stages are the MEC-1 ONU uplink towards the
    central office.
    """

    ue_arrival: np.ndarray
    ran_transmit: int | None = None
    onu_enqueue: int | None = None
    onu_dequeue: int | None = None
    du_arrival: int | None = None
    du_done: int | None = None
    tier2_enqueue: int | None = None
    tier2_depart: int | None = None
    app_arrival: int | None = None

    def check_order(self) -> None:
        """Raise unless every set stage is at or after the previous one."""
        if len(self.ue_arrival) and self.ran_transmit is not None:
            if int(self.ue_arrival.max()) > self.ran_transmit:
                raise TimestampOrderError("ran_transmit precedes a UE arrival")
        previous, previous_name = None, ""
        for name in STAGES[1:]:
            value = getattr(self, name)
            if value is None:
                continue
            if previous is not None and value < previous:
                raise TimestampOrderError(f"{name}={value} precedes {previous_name}={previous}")
            previous, previous_name = value, name


@dataclass
class PacketBatch:
    """Users of one class carried in one RU slot.

    Packet ``first + i`` of stream ``stream`` is the i-th user of the batch.
    """

    ru_id: int
    slot_index: int
    traffic_class: TrafficClass
    stream: int
    first: int
    count: int
    payload_bytes: int
    stamps: StageTimestamps
    request_slot: int | None = None

    @property
    def nbytes(self) -> int:
        return self.count * self.payload_bytes


@dataclass
class SlotTrain:
    """Queue item at an RU ONU: one chunk of a slot's frames.

    The last chunk of a slot carries the slot's packet batches; the DU can
    start on the slot once that chunk has arrived.
    """

    ru_id: int
    slot_index: int
    frames: FrameTrain
    batches: list[PacketBatch] = field(default_factory=list)
    chunk: int = 0
    last: bool = True
    remaining: int = field(init=False)

    def __post_init__(self):
        self.remaining = len(self.frames)

    @property
    def enqueued_at(self) -> int:
        return self.frames.enqueued_at


@dataclass(frozen=True)
class Departure:
    item: Any
    dequeued_at: int


class UplinkQueue:
    """Frame FIFO of one RU ONU.

    Chunks may be queued ahead of the instant the RU hands them over; they
    count towards the backlog from that instant on.
    """

    def __init__(self, onu_id: int, frame_bytes: int = FRAME_BYTES):
        self.onu_id = onu_id
        self.frame_bytes = frame_bytes
        self.trains: deque[SlotTrain] = deque()
        self.backlog_frames = 0

    def enqueue(self, train: SlotTrain) -> None:
        self.trains.append(train)
        self.backlog_frames += train.remaining

    @property
    def backlog_bytes(self) -> int:
        return self.backlog_frames * self.frame_bytes

    def backlog_bytes_at(self, t: int) -> int:
        """Bytes of the frames already handed over by ``t`` and not yet sent."""
        frames = 0
        for train in self.trains:
            if train.enqueued_at > t:
                break
            frames += train.remaining
        return frames * self.frame_bytes

    def __iter__(self) -> Iterator[SlotTrain]:
        return iter(self.trains)

    def __len__(self) -> int:
        return len(self.trains)


def uplink_transmit(
    queue: UplinkQueue, window: GrantWindow, gc: GrantCycleConfig
) -> list[Departure]:
    """Drain a frame FIFO inside one grant window.

    Frames leave back to back after the window's guard time. Only chunks
    handed over by the time the window opens are served; a chunk departs
    with its last frame.
    """
    budget = window.nbytes // gc.frame_bytes
    sent = 0
    departures = []
    items = queue.trains
    while items:
        train = items[0]
        if train.enqueued_at > window.start_ns:
            break
        take = min(train.remaining, budget - sent)
        sent += take
        train.remaining -= take
        queue.backlog_frames -= take
        if train.remaining:
            break
        items.popleft()
        done = window.start_ns + gc.guard_ns + gc.airtime_ns(sent * gc.frame_bytes)
        departures.append(Departure(train, done))
    return departures


@dataclass
class _Pending:
    item: Any
    nbytes: int
    remaining: int
    enqueued_at: int


class ByteQueue:
    """Byte FIFO of an ONU carrying DU output."""

    def __init__(self, onu_id: int):
        self.onu_id = onu_id
        self._items: deque[_Pending] = deque()
        self.backlog_bytes = 0

    def enqueue(self, item: Any, nbytes: int, at: int) -> None:
        self._items.append(_Pending(item, nbytes, nbytes, at))
        self.backlog_bytes += nbytes

    def drain(self, window: GrantWindow, gc: GrantCycleConfig) -> list[Departure]:
        budget = window.nbytes
        sent = 0
        departures = []
        while self._items and sent < budget:
            head = self._items[0]
            if head.enqueued_at > window.start_ns:
                break
            take = min(head.remaining, budget - sent)
            sent += take
            head.remaining -= take
            self.backlog_bytes -= take
            if head.remaining:
                break
            self._items.popleft()
            done = window.start_ns + gc.guard_ns + gc.airtime_ns(sent)
            departures.append(Departure(head.item, done))
        return departures

    def items(self) -> list[Any]:
        return [p.item for p in self._items]


@dataclass(frozen=True)
class DuOutput:
    batch: PacketBatch
    nbytes: int
    release_at: int


def du_process(
    du_arrival: int, slot_ns: int, batches: Sequence[PacketBatch]
) -> tuple[DuOutput | None, DuOutput | None]:
    """Run the DU/CU stack on one received slot.

    Processing takes one slot time. Returns the URLLC and normal outputs; a
    class with no users yields ``None``.
    """
    release = du_arrival + slot_ns
    urllc = normal = None
    for batch in batches:
        if batch.count == 0:
            continue
        out = DuOutput(batch, batch.nbytes, release)
        if batch.traffic_class is TrafficClass.URLLC:
            urllc = out
        else:
            normal = out
    return urllc, normal


@dataclass(frozen=True)
class DownlinkBudget:
    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"downlink fraction must be in (0, 1], got {self.fraction}")


@dataclass(frozen=True)
class Delivery:
    start: int
    depart: int
    app_arrival: int


class Tier2Downlink:
    """FIFO server at the MEC-1 OLT downlink towards the MEC-2 ONU.

    A payload waits for the next downlink frame boundary, for the payloads
    ahead of it and for the MEC-2 ONU to join the slice. Frame boundaries
    sit at ``phase_ns`` past each period, the instant an upstream grant
    cycle starts arriving at the OLT.
    """

    def __init__(
        self,
        budget: DownlinkBudget,
        capacity_bps: int,
        frame_period_ns: int,
        propagation_ns: int,
        ready_at: int = 0,
        phase_ns: int = 0,
    ):
        self.budget = budget
        self.rate_bps = budget.fraction * capacity_bps
        self.frame_period_ns = frame_period_ns
        self.propagation_ns = propagation_ns
        self.ready_at = ready_at
        self.phase_ns = phase_ns % frame_period_ns
        self.busy_until = 0
        self._in_service: deque[tuple[int, int]] = deque()
        self._queued_bytes = 0
        self.peak_backlog_bytes = 0
        self.sent_bytes = 0

    def drain_ns(self, nbytes: int) -> int:
        return math.ceil(nbytes * 8 * 1e9 / self.rate_bps - 1e-9)

    def backlog_bytes(self, at: int) -> int:
        while self._in_service and self._in_service[0][0] <= at:
            self._queued_bytes -= self._in_service.popleft()[1]
        return self._queued_bytes

    def send(self, nbytes: int, enqueue_at: int) -> Delivery:
        period, phase = self.frame_period_ns, self.phase_ns
        boundary = phase + -(-(enqueue_at - phase) // period) * period
        start = max(boundary, self.busy_until, self.ready_at)
        depart = start + self.drain_ns(nbytes)
        self.busy_until = depart
        self._in_service.append((depart, nbytes))
        self._queued_bytes += nbytes
        self.peak_backlog_bytes = max(self.peak_backlog_bytes, self.backlog_bytes(enqueue_at))
        self.sent_bytes += nbytes
        return Delivery(start, depart, depart + self.propagation_ns)


def tier2_send(urllc_out: DuOutput | None, downlink: Tier2Downlink) -> Delivery | None:
    """Queue a URLLC DU output for the MEC-2 application."""
    if urllc_out is None or urllc_out.nbytes == 0:
        return None
    return downlink.send(urllc_out.nbytes, urllc_out.release_at)


class CoUplink:
    """MEC-1 ONU uplink to the CO under SR-DBA."""

    def __init__(
        self, onu_id: int, gc: GrantCycleConfig, propagation_ns: int, report_lag_ns: int
    ):
        self.onu_id = onu_id
        self.gc = gc
        self.propagation_ns = propagation_ns
        self.queue = ByteQueue(onu_id)
        self.book = ReportBook(report_lag_ns)
        self.last_map: GrantMap | None = None

    def enqueue(self, output: DuOutput) -> None:
        self.queue.enqueue(output, output.nbytes, output.release_at)

    def on_cycle(self, cycle_index: int) -> list[tuple[DuOutput, Delivery]]:
        """Grant, drain and report for one cycle."""
        gc = self.gc
        cycle_start = cycle_index * gc.period_ns
        report = self.book.latest(self.onu_id, cycle_start)
        if report is None:
            report = StatusReport(self.onu_id, 0, cycle_index, cycle_start)
            granted = 0
        else:
            granted = self.book.granted_since(self.onu_id, report.reported_at)
        gmap = sr_dba([report], gc, cycle_index, {self.onu_id: granted})
        window = gmap.window(self.onu_id)
        self.book.note_grant(self.onu_id, window.start_ns, window.nbytes)
        self.last_map = gmap

        out = []
        for dep in self.queue.drain(window, gc):
            depart = dep.dequeued_at
            out.append((dep.item, Delivery(window.start_ns, depart, depart + self.propagation_ns)))
        self.book.file(StatusReport(
            self.onu_id, self.queue.backlog_bytes, cycle_index, window.end_ns
        ))
        return out


def co_send(normal_out: DuOutput | None, uplink: CoUplink) -> bool:
    """Hand a normal DU output to the CO uplink; False when there is nothing to send."""
    if normal_out is None or normal_out.nbytes == 0:
        return False
    uplink.enqueue(normal_out)
    return True
