"""RAN side of the simulator.

Per-RU slot scheduling: URLLC users ride the semi-static CGS pool of the
next slot, normal users go through the 4-slot request/grant pipeline, and
the scheduler reports its decisions 4 slots ahead over the CTI.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import SlotStateError
from .rates import CellThroughputParams, Split72Params, split72_rate

logger = logging.getLogger(__name__)

GRANT_LOOKAHEAD_SLOTS = 4
PRBS_PER_USER = 5

_MAX_PRBS = {1: 270, 2: 135}


class TrafficClass(str, Enum):
    URLLC = "urllc"
    NORMAL = "normal"


class NumerologyConfig(BaseModel):
    """NR numerology. Slot time and PRB count are derived from ``mu`` when omitted."""

    model_config = ConfigDict(frozen=True)

    mu: int = Field(default=1, ge=1, le=2)
    slot_time_s: float
    max_prbs: int

    @model_validator(mode="before")
    @classmethod
    def _derive(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        mu = data.get("mu", 1)
        if mu not in _MAX_PRBS:
            raise ValueError(f"numerology must be 1 or 2, got {mu}")
        slot = 1e-3 / 2**mu
        given = data.get("slot_time_s")
        if given is not None and not math.isclose(given, slot, rel_tol=1e-9):
            raise ValueError(
                f"slot_time {given * 1e3:g} ms is inconsistent with numerology {mu} "
                f"({slot * 1e3:g} ms)"
            )
        data["slot_time_s"] = slot
        prbs = data.get("max_prbs")
        if prbs is not None and prbs != _MAX_PRBS[mu]:
            raise ValueError(f"max_prbs {prbs} is inconsistent with numerology {mu}")
        data["max_prbs"] = _MAX_PRBS[mu]
        return data

    @property
    def slot_ns(self) -> int:
        return 1_000_000 // 2**self.mu

    @property
    def symbol_time_s(self) -> float:
        return 1e-3 / (14 * 2**self.mu)

    def split72_params(self, **overrides: Any) -> Split72Params:
        return Split72Params(max_prbs=self.max_prbs, slot_time_s=self.slot_time_s, **overrides)

    def cell_params(self, **overrides: Any) -> CellThroughputParams:
        return CellThroughputParams(
            max_prbs=self.max_prbs, symbol_time_s=self.symbol_time_s, **overrides
        )


class CgsConfig(BaseModel):
    """Semi-static PRB reservation for configured-grant URLLC users."""

    model_config = ConfigDict(frozen=True)

    reserved_fraction: float = Field(default=0.20, gt=0, lt=1)
    max_prbs: int = 270

    @model_validator(mode="after")
    def _check_pool(self) -> "CgsConfig":
        if not 0 < self.reserved_prbs < self.max_prbs:
            raise ValueError(
                f"CGS fraction {self.reserved_fraction} of {self.max_prbs} PRBs "
                f"gives an empty or full pool"
            )
        return self

    @property
    def reserved_prbs(self) -> int:
        # tolerance keeps 0.1 * 270 at 27
        return math.floor(self.reserved_fraction * self.max_prbs + 1e-9)


@dataclass
class SlotState:
    """PRB grid of one NR slot of one RU.

    PRBs ``[0, reserved_prbs)`` form the CGS pool, the rest is dynamic.
    """

    slot_index: int
    max_prbs: int
    reserved_prbs: int
    prbs_per_user: int = PRBS_PER_USER
    cgs_used: int = 0
    dyn_used: int = 0
    urllc_users: int = 0
    normal_users: int = 0
    finalized: bool = False
    prb_flags: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.prb_flags = np.zeros(self.max_prbs, dtype=bool)

    @property
    def cgs_free_users(self) -> int:
        return (self.reserved_prbs - self.cgs_used) // self.prbs_per_user

    @property
    def dyn_free_users(self) -> int:
        return (self.max_prbs - self.reserved_prbs - self.dyn_used) // self.prbs_per_user

    def admit(self, traffic_class: TrafficClass, count: int = 1) -> None:
        """Give ``count`` users of a class their PRBs in this slot."""
        if self.finalized:
            raise SlotStateError(f"slot {self.slot_index} is already finalized")
        if count <= 0:
            return
        width = count * self.prbs_per_user
        if traffic_class is TrafficClass.URLLC:
            if count > self.cgs_free_users:
                raise SlotStateError(f"CGS pool of slot {self.slot_index} is full")
            start = self.cgs_used
            self.cgs_used += width
            self.urllc_users += count
        else:
            if count > self.dyn_free_users:
                raise SlotStateError(f"dynamic pool of slot {self.slot_index} is full")
            start = self.reserved_prbs + self.dyn_used
            self.dyn_used += width
            self.normal_users += count
        self.prb_flags[start:start + width] = True

    @property
    def data_prbs(self) -> int:
        return self.cgs_used + self.dyn_used


@dataclass(frozen=True)
class TrafficArrival:
    arrive_at: int
    traffic_class: TrafficClass
    ru_id: int
    packet_id: int


@dataclass(frozen=True)
class CtiReport:
    """Scheduling information passed from the DU to the OLT ahead of a slot."""

    target_slot: int
    ru_id: int
    scheduled_normal_prbs: int
    cgs_reserved_prbs: int
    issued_slot: int


class SlotTimeline:
    """Open slots of one RU, created on demand and dropped once finalized."""

    def __init__(self, numerology: NumerologyConfig, cgs: CgsConfig):
        self.numerology = numerology
        self.cgs = cgs
        self._slots: dict[int, SlotState] = {}
        self.finalized_through = -1

    def slot(self, index: int) -> SlotState:
        if index <= self.finalized_through:
            raise SlotStateError(f"slot {index} is already finalized")
        state = self._slots.get(index)
        if state is None:
            state = SlotState(
                slot_index=index,
                max_prbs=self.numerology.max_prbs,
                reserved_prbs=self.cgs.reserved_prbs,
            )
            self._slots[index] = state
        return state

    def finalize(self, index: int) -> SlotState:
        """Close a slot at its boundary and hand it over."""
        state = self.slot(index)
        state.finalized = True
        del self._slots[index]
        self.finalized_through = index
        return state

    def open_slots(self) -> list[SlotState]:
        return [self._slots[k] for k in sorted(self._slots)]


def admit_arrival(arrival: TrafficArrival, timeline: SlotTimeline) -> int:
    """Place one arrival in the slot it will be transmitted in.

    URLLC takes the first slot closing after the arrival with room in the CGS
    pool. NORMAL requests at the next slot boundary and is granted 4 slots
    later, or at the first later slot with dynamic room.
    """
    slot_ns = timeline.numerology.slot_ns
    next_boundary = arrival.arrive_at // slot_ns + 1
    if arrival.traffic_class is TrafficClass.URLLC:
        index = next_boundary
        while timeline.slot(index).cgs_free_users == 0:
            index += 1
    else:
        index = next_boundary + GRANT_LOOKAHEAD_SLOTS
        while timeline.slot(index).dyn_free_users == 0:
            index += 1
    timeline.slot(index).admit(arrival.traffic_class)
    return index


def slot_occupancy(slot: SlotState) -> tuple[int, int, int]:
    """Return (data_prb_count, urllc_users, normal_users) of a finalized slot."""
    if not slot.finalized:
        raise SlotStateError(f"slot {slot.slot_index} has not been finalized")
    data_prbs = int(np.count_nonzero(slot.prb_flags))
    expected = slot.prbs_per_user * (slot.urllc_users + slot.normal_users)
    if data_prbs != expected:
        raise SlotStateError(
            f"slot {slot.slot_index}: {data_prbs} flagged PRBs for {expected} occupied"
        )
    return data_prbs, slot.urllc_users, slot.normal_users


@dataclass(frozen=True)
class IdRange:
    """Contiguous run of per-stream arrival indices."""

    first: int
    count: int

    @property
    def stop(self) -> int:
        return self.first + self.count


@dataclass(frozen=True)
class EmittedSlot:
    """A finalized slot leaving the RU, with the users it carries."""

    ru_id: int
    state: SlotState
    urllc: IdRange
    normal: IdRange
    normal_request_slot: int


class RanScheduler:
    """Slot scheduler of one RU driven by pre-drawn arrival instants.

    Arrivals inside ``[(k-1)T, kT)`` are handled at boundary ``k``. URLLC
    users fill the CGS pool of slot ``k`` and the overflow waits FIFO for the
    next slot. Normal users request at boundary ``k`` for slot ``k + 4``; a
    request that finds no room is repeated at the next boundary, so every
    grant lands exactly 4 slots after the request that won it.
    """

    def __init__(
        self,
        ru_id: int,
        numerology: NumerologyConfig,
        cgs: CgsConfig,
        urllc_times: np.ndarray,
        normal_times: np.ndarray,
    ):
        self.ru_id = ru_id
        self.numerology = numerology
        self.cgs = cgs
        self.timeline = SlotTimeline(numerology, cgs)
        self.arrivals = {TrafficClass.URLLC: urllc_times, TrafficClass.NORMAL: normal_times}
        self._admitted = {TrafficClass.URLLC: 0, TrafficClass.NORMAL: 0}
        self._emitted = {TrafficClass.URLLC: 0, TrafficClass.NORMAL: 0}
        self._seen = {TrafficClass.URLLC: 0, TrafficClass.NORMAL: 0}
        self._normal_grants: dict[int, IdRange] = {}
        self._decided_through = GRANT_LOOKAHEAD_SLOTS - 1
        self.urllc_deferrals = 0

    def _arrived_before(self, traffic_class: TrafficClass, t: int) -> int:
        return int(np.searchsorted(self.arrivals[traffic_class], t, side="left"))

    def on_boundary(self, k: int) -> EmittedSlot:
        """Run the scheduler at boundary ``k`` and emit slot ``k``."""
        t = k * self.numerology.slot_ns
        urllc, normal = TrafficClass.URLLC, TrafficClass.NORMAL

        self._seen[urllc] = self._arrived_before(urllc, t)
        backlog = self._seen[urllc] - self._admitted[urllc]
        current = self.timeline.slot(k)
        take = min(backlog, current.cgs_free_users)
        current.admit(urllc, take)
        urllc_ids = IdRange(self._admitted[urllc], take)
        self._admitted[urllc] += take
        if backlog > take:
            self.urllc_deferrals += backlog - take
            logger.debug("RU %d slot %d: %d URLLC users deferred", self.ru_id, k, backlog - take)

        self._seen[normal] = self._arrived_before(normal, t)
        requests = self._seen[normal] - self._admitted[normal]
        target_index = k + GRANT_LOOKAHEAD_SLOTS
        target = self.timeline.slot(target_index)
        granted = min(requests, target.dyn_free_users)
        target.admit(normal, granted)
        self._normal_grants[target_index] = IdRange(self._admitted[normal], granted)
        self._admitted[normal] += granted
        self._decided_through = target_index

        state = self.timeline.finalize(k)
        normal_ids = self._normal_grants.pop(k, IdRange(self._emitted[normal], 0))
        self._emitted[urllc] += urllc_ids.count
        self._emitted[normal] += normal_ids.count
        return EmittedSlot(
            ru_id=self.ru_id,
            state=state,
            urllc=urllc_ids,
            normal=normal_ids,
            normal_request_slot=k - GRANT_LOOKAHEAD_SLOTS,
        )

    def cti_lookahead(self, slot_index: int) -> CtiReport:
        """CTI report for a slot whose normal grants are already decided.

        The CGS term is always the full reservation, whatever the URLLC users
        end up using.
        """
        if slot_index > self._decided_through:
            raise SlotStateError(
                f"normal grants for slot {slot_index} are not decided yet "
                f"(decided through {self._decided_through})"
            )
        if slot_index <= self.timeline.finalized_through:
            raise SlotStateError(f"slot {slot_index} is already finalized")
        state = self.timeline.slot(slot_index)
        return CtiReport(
            target_slot=slot_index,
            ru_id=self.ru_id,
            scheduled_normal_prbs=state.dyn_used,
            cgs_reserved_prbs=self.cgs.reserved_prbs,
            issued_slot=slot_index - GRANT_LOOKAHEAD_SLOTS,
        )

    def held_users(self, traffic_class: TrafficClass, horizon: int) -> int:
        """Users generated before ``horizon`` that have not left the RU yet."""
        generated = self._arrived_before(traffic_class, horizon)
        return generated - self._emitted[traffic_class]

    def generated_users(self, traffic_class: TrafficClass, horizon: int) -> int:
        return self._arrived_before(traffic_class, horizon)


@dataclass(frozen=True)
class ArrivalCalibration:
    """Per-RU Poisson rates that realize a target PON load."""

    target_load_pct: float
    n_rus: int
    users_per_slot: float
    total_rate: float
    urllc_rate: float
    normal_rate: float


def calibrate_arrivals(
    target_load_pct: float,
    n_rus: int,
    capacity_bps: float,
    params: Split72Params,
    urllc_share: float = 0.20,
    prbs_per_user: int = PRBS_PER_USER,
) -> ArrivalCalibration:
    """Solve the per-RU user arrival rate for a target traffic intensity.

    The split-7.2 rate is affine in busy PRBs, so the expected rate of each RU
    equals the rate at its mean PRB occupancy.
    """
    per_ru_rate = target_load_pct / 100.0 * capacity_bps / n_rus
    floor = split72_rate(params, 0)
    users = max(0.0, (per_ru_rate - floor) / (params.prb_slope_bps * prbs_per_user))
    if users == 0.0:
        logger.warning(
            "Load %.1f%% over %d RUs is below the idle fronthaul floor; no users generated",
            target_load_pct, n_rus,
        )
    total = users / params.slot_time_s
    return ArrivalCalibration(
        target_load_pct=target_load_pct,
        n_rus=n_rus,
        users_per_slot=users,
        total_rate=total,
        urllc_rate=urllc_share * total,
        normal_rate=(1.0 - urllc_share) * total,
    )
