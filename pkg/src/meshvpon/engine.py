"""Discrete-event engine.

Integer nanosecond clock, a heap ordered by (fire_at, seq) and named,
seeded random streams for the stochastic sources of a run.
"""

import hashlib
import heapq
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import SchedulingError

logger = logging.getLogger(__name__)

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def seconds_to_ns(seconds: float) -> int:
    """Convert seconds to the nearest integer nanosecond."""
    return int(round(seconds * NS_PER_S))


class EventKind(str, Enum):
    """Event discriminator."""

    SLOT_BOUNDARY = "slot-boundary"
    GRANT_CYCLE = "grant-cycle-boundary"
    FRAME_ARRIVAL = "frame-arrival"
    CONTROL_MESSAGE = "control-message"
    TRAFFIC_ARRIVAL = "traffic-arrival"
    PROCESSING_COMPLETE = "processing-complete"


@dataclass
class SimEvent:
    """A timestamped event. ``seq`` is assigned by the engine on insertion."""

    fire_at: int
    kind: EventKind
    payload: Any = None
    seq: int = -1
    cancelled: bool = field(default=False, repr=False)


@dataclass(frozen=True)
class EventHandle:
    """Handle returned by :meth:`EventEngine.schedule`."""

    event: SimEvent

    @property
    def fire_at(self) -> int:
        return self.event.fire_at

    @property
    def active(self) -> bool:
        return not self.event.cancelled

    def cancel(self) -> None:
        self.event.cancelled = True


Handler = Callable[[SimEvent], None]


class EventEngine:
    """Single-threaded event loop with a monotonic integer clock."""

    def __init__(self):
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[EventKind, Handler] = {}
        self.clock = 0

    def on(self, kind: EventKind, handler: Handler) -> None:
        """Register the callback for one event kind."""
        self._handlers[kind] = handler

    def schedule(self, event: SimEvent) -> EventHandle:
        """Enqueue an event.

        Raises:
            SchedulingError: If the event fires before the current clock.
        """
        if event.fire_at < self.clock:
            raise SchedulingError(
                f"{event.kind.value} event at {event.fire_at} ns is before clock {self.clock} ns"
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (event.fire_at, event.seq, event))
        return EventHandle(event)

    def schedule_at(self, fire_at: int, kind: EventKind, payload: Any = None) -> EventHandle:
        return self.schedule(SimEvent(fire_at=fire_at, kind=kind, payload=payload))

    @property
    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def pending_events(self) -> list[SimEvent]:
        """Live events still queued, in firing order."""
        return [ev for _, _, ev in sorted(self._queue) if not ev.cancelled]

    def run_until(self, t_end: int) -> int:
        """Process every event with ``fire_at <= t_end`` and leave the clock at ``t_end``.

        Returns:
            Number of events processed (cancelled events are not counted).
        """
        if t_end < self.clock:
            raise SchedulingError(f"run_until({t_end}) is before clock {self.clock}")

        processed = 0
        queue = self._queue
        handlers = self._handlers
        while queue and queue[0][0] <= t_end:
            fire_at, _, event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self.clock = fire_at
            handler = handlers.get(event.kind)
            if handler is not None:
                handler(event)
            processed += 1

        self.clock = t_end
        logger.debug("Processed %d events up to %d ns", processed, t_end)
        return processed


def _stream_key(stream_id: str) -> int:
    # Python's hash() is salted per process; blake2b is not.
    digest = hashlib.blake2b(stream_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class RngStream:
    """A named random stream. Same (seed, stream_id) gives the same draws on any host."""

    seed: int
    stream_id: str

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.seed & (2**64 - 1), spawn_key=(_stream_key(self.stream_id),)
        )
        return np.random.Generator(np.random.PCG64(seq))


def poisson_arrivals(rate: float, horizon: int, stream: RngStream) -> np.ndarray:
    """Draw Poisson arrival instants in ``[0, horizon)``.

    Args:
        rate: Mean arrivals per second.
        horizon: End of the window in ns.
        stream: Random stream to draw from.

    Returns:
        Sorted int64 array of arrival times in ns.
    """
    if rate < 0:
        raise ValueError(f"arrival rate must be non-negative, got {rate}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if rate == 0:
        return np.empty(0, dtype=np.int64)

    rng = stream.generator()
    horizon_s = horizon / NS_PER_S
    expected = rate * horizon_s
    chunk = int(expected + 6.0 * np.sqrt(expected) + 16)

    gaps = rng.exponential(1.0 / rate, size=chunk)
    times = np.cumsum(gaps)
    while times[-1] < horizon_s:
        more = np.cumsum(rng.exponential(1.0 / rate, size=chunk)) + times[-1]
        times = np.concatenate([times, more])

    times = times[times < horizon_s]
    out = np.floor(times * NS_PER_S).astype(np.int64)
    return out[out < horizon]
