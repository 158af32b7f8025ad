"""Simulation orchestrator.

Wires the RAN schedulers, the fronthaul DBA, the MEC-1 DU and the two
tier-2 paths onto one event engine and runs a scenario to completion.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dba import CycleScheduler, StatusReport, build_policy, rate_to_slot_bytes, split_bytes
from .engine import (
    NS_PER_MS,
    EventEngine,
    EventKind,
    RngStream,
    SimEvent,
    poisson_arrivals,
    seconds_to_ns,
)
from .metrics import MetricsRecorder, ScenarioTags, StatSummary, export_csv, export_json
from .ran import (
    GRANT_LOOKAHEAD_SLOTS,
    ArrivalCalibration,
    EmittedSlot,
    IdRange,
    RanScheduler,
    TrafficClass,
    calibrate_arrivals,
    slot_occupancy,
)
from .rates import (
    DuPayloadParams,
    cell_throughput,
    du_payload_per_slot,
    split72_rate,
    traffic_intensity,
)
from .scenario import Scenario
from .topology import (
    CO_OLT,
    MEC1_OLT,
    MEC1_ONU,
    MEC2_ONU,
    MEC_SLICE,
    ControlKind,
    build_topology,
    ru_onu,
)
from .transport import (
    CoUplink,
    DownlinkBudget,
    PacketBatch,
    SlotTrain,
    StageTimestamps,
    Tier2Downlink,
    UplinkQueue,
    co_send,
    du_process,
    packetize,
    tier2_send,
    uplink_transmit,
)

logger = logging.getLogger(__name__)

CLASS_ORDER = (TrafficClass.URLLC, TrafficClass.NORMAL)

# tier-2 work still queued this long after the horizon means the queue is not keeping up
UNSTABLE_BACKLOG_NS = 5 * NS_PER_MS


def user_payload_bytes(scenario: Scenario) -> int:
    """Whole bytes the DU hands up per scheduled user and slot."""
    numerology = scenario.ran.numerology_config()
    payload_mb = du_payload_per_slot(
        DuPayloadParams(
            r_cell_mbps=cell_throughput(numerology.cell_params()),
            max_prbs=numerology.max_prbs,
            prbs_per_user=scenario.ran.prbs_per_user,
            slot_time_s=numerology.slot_time_s,
        ),
        1,
    )
    return math.ceil(payload_mb * 1e6 / 8 - 1e-6)


def stream_of(ru_id: int, traffic_class: TrafficClass) -> int:
    return 2 * ru_id + CLASS_ORDER.index(traffic_class)


@dataclass
class ByteLedger:
    """Payload bytes of one class: generated = delivered + in flight."""

    generated: int = 0
    delivered: int = 0
    in_flight: int = 0

    @property
    def balanced(self) -> bool:
        return self.generated == self.delivered + self.in_flight


@dataclass
class SimulationResult:
    """Outcome of one scenario run."""

    scenario: Scenario
    summaries: list[StatSummary]
    calibration: ArrivalCalibration
    events_processed: int = 0
    measured_load_pct: float = 0.0
    ledger: dict[TrafficClass, ByteLedger] = field(default_factory=dict)
    urllc_deferrals: int = 0
    overloaded_cycles: int = 0
    tier2_peak_backlog_bytes: int = 0
    reconfigured_at_ns: int | None = None
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def summary(self, stage_pair: str, traffic_class: TrafficClass) -> StatSummary | None:
        for s in self.summaries:
            if s.stage_pair == stage_pair and s.traffic_class is traffic_class:
                return s
        return None

    def run_info(self) -> dict[str, Any]:
        cal = self.calibration
        return {
            "scenario_id": self.scenario.scenario_id,
            "urllc_rate_per_ru": cal.urllc_rate,
            "normal_rate_per_ru": cal.normal_rate,
            "users_per_slot": cal.users_per_slot,
            "measured_load_pct": self.measured_load_pct,
            "events_processed": self.events_processed,
            "urllc_deferrals": self.urllc_deferrals,
            "overloaded_cycles": self.overloaded_cycles,
            "tier2_peak_backlog_bytes": self.tier2_peak_backlog_bytes,
            "reconfigured_at_ns": self.reconfigured_at_ns,
            "ledger": {
                cls.value: {
                    "generated": led.generated,
                    "delivered": led.delivered,
                    "in_flight": led.in_flight,
                }
                for cls, led in self.ledger.items()
            },
            "errors": list(self.errors),
            "warnings": list(self.warnings),
        }


class VponSimulation:
    """One scenario on one event engine."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        ran, pon, run = scenario.ran, scenario.pon, scenario.run

        self.numerology = ran.numerology_config()
        self.cgs = ran.cgs_config()
        self.params = self.numerology.split72_params(n_ant=ran.antennas)
        self.gc = pon.grant_cycle()
        self.slot_ns = self.numerology.slot_ns
        self.cycles_per_slot = self.gc.cycles_per_slot(self.slot_ns)
        self.horizon = seconds_to_ns(run.duration_s)
        self.payload_bytes = user_payload_bytes(scenario)

        self.topology = build_topology(scenario.topology.spec(pon.n_rus))
        self.engine = EventEngine()
        self.calibration = calibrate_arrivals(
            scenario.traffic.target_load_pct,
            pon.n_rus,
            self.gc.uplink_capacity_bps,
            self.params,
            urllc_share=scenario.traffic.urllc_share,
            prbs_per_user=ran.prbs_per_user,
        )
        logger.debug(
            "Calibrated %.3f users/slot per RU (URLLC %.1f/s, normal %.1f/s)",
            self.calibration.users_per_slot,
            self.calibration.urllc_rate,
            self.calibration.normal_rate,
        )

        self.schedulers = [self._ran_scheduler(i) for i in range(pon.n_rus)]
        self.policy = build_policy(pon.policy, self.params, self.gc, pon.conventional_headroom)
        self.fronthaul_ns = [
            self.topology.propagation_delay(ru_onu(i), MEC1_OLT) for i in range(pon.n_rus)
        ]
        fronthaul_lag = 2 * max(self.fronthaul_ns) + self.gc.onu_response_ns
        self.cycles = CycleScheduler(range(pon.n_rus), self.gc, fronthaul_lag)
        self.queues = [UplinkQueue(i, self.gc.frame_bytes) for i in range(pon.n_rus)]

        self.reconfiguration = self.topology.reconfigure_slice(
            MEC_SLICE, MEC2_ONU, at=0, retune_ns=int(round(scenario.topology.retune_us * 1e3))
        )
        self.tier2 = Tier2Downlink(
            DownlinkBudget(pon.dl_fraction),
            self.gc.uplink_capacity_bps,
            self.gc.period_ns,
            self.topology.propagation_delay(MEC1_OLT, MEC2_ONU),
            ready_at=self.reconfiguration.completes_at,
            # downlink frames follow the upstream cycles as the OLT receives them
            phase_ns=max(self.fronthaul_ns),
        )
        co_ns = self.topology.propagation_delay(MEC1_ONU, CO_OLT)
        self.co_uplink = CoUplink(0, self.gc, co_ns, 2 * co_ns + self.gc.onu_response_ns)

        tags = ScenarioTags(
            scenario_id=scenario.scenario_id,
            load_pct=scenario.traffic.target_load_pct,
            slot_ms=self.numerology.slot_time_s * 1e3,
            cgs_pct=ran.cgs_fraction * 100,
            dl_fraction=pon.dl_fraction,
            policy=pon.policy,
            seed=run.seed,
        )
        self.metrics = MetricsRecorder(tags, warmup_ns=int(round(run.warmup_ms * NS_PER_MS)))

        self._delivered = {cls: 0 for cls in CLASS_ORDER}
        self._rate_sum = np.zeros(pon.n_rus)
        self._rate_slots = 0
        self._reconfigured_at: int | None = None

        engine = self.engine
        engine.on(EventKind.SLOT_BOUNDARY, self._on_slot)
        engine.on(EventKind.GRANT_CYCLE, self._on_cycle)
        engine.on(EventKind.FRAME_ARRIVAL, self._on_frames)
        engine.on(EventKind.PROCESSING_COMPLETE, self._on_du_done)
        engine.on(EventKind.TRAFFIC_ARRIVAL, self._on_app)
        engine.on(EventKind.CONTROL_MESSAGE, self._on_control)

    def _ran_scheduler(self, ru_id: int) -> RanScheduler:
        seed = self.scenario.run.seed
        cal = self.calibration
        urllc = poisson_arrivals(
            cal.urllc_rate, self.horizon, RngStream(seed, f"urllc-arrivals/ru{ru_id}")
        )
        normal = poisson_arrivals(
            cal.normal_rate, self.horizon, RngStream(seed, f"normal-arrivals/ru{ru_id}")
        )
        return RanScheduler(ru_id, self.numerology, self.cgs, urllc, normal)

    # --- event handlers ---

    def _on_slot(self, event: SimEvent) -> None:
        """Open slot ``k`` on the air and stream it into the RU ONUs.

        The slot is on the air over ``[(k-1)T, kT)``. Its fronthaul reaches
        the ONU one chunk per grant cycle, each chunk at the end of its part
        of the slot; the last chunk lands at ``kT`` with the slot's users.
        """
        k = event.payload
        opens = event.fire_at
        closes = k * self.slot_ns
        measured = closes >= self.metrics.warmup_ns
        for sched, queue in zip(self.schedulers, self.queues):
            emitted = sched.on_boundary(k)
            data_prbs, _, _ = slot_occupancy(emitted.state)
            rate = split72_rate(self.params, data_prbs)
            if measured:
                self._rate_sum[sched.ru_id] += rate
            slot_bytes = rate_to_slot_bytes(rate, self.params.slot_time_s)
            chunks = split_bytes(slot_bytes, self.cycles_per_slot)
            for j, nbytes in enumerate(chunks):
                at = opens + (j + 1) * self.gc.period_ns
                frames = packetize(nbytes, at, self.gc.frame_bytes, (sched.ru_id, k, j))
                train = SlotTrain(sched.ru_id, k, frames, chunk=j, last=j == len(chunks) - 1)
                if train.last:
                    for cls, ids in ((TrafficClass.URLLC, emitted.urllc),
                                     (TrafficClass.NORMAL, emitted.normal)):
                        if ids.count:
                            train.batches.append(
                                self._batch(sched, k, cls, ids, emitted, closes)
                            )
                queue.enqueue(train)

            if self.policy.uses_cti:
                self._plan(sched, k + GRANT_LOOKAHEAD_SLOTS)
        if measured:
            self._rate_slots += 1

        if (k + 1) * self.slot_ns <= self.horizon:
            self.engine.schedule_at(closes, EventKind.SLOT_BOUNDARY, k + 1)

    def _batch(
        self, sched: RanScheduler, k: int, cls: TrafficClass, ids: IdRange,
        emitted: EmittedSlot, now: int,
    ) -> PacketBatch:
        ue = sched.arrivals[cls][ids.first:ids.stop]
        return PacketBatch(
            ru_id=sched.ru_id,
            slot_index=k,
            traffic_class=cls,
            stream=stream_of(sched.ru_id, cls),
            first=ids.first,
            count=ids.count,
            payload_bytes=self.payload_bytes,
            stamps=StageTimestamps(ue_arrival=ue, ran_transmit=now, onu_enqueue=now),
            request_slot=emitted.normal_request_slot if cls is TrafficClass.NORMAL else None,
        )

    def _plan(self, sched: RanScheduler, target_slot: int) -> None:
        # chunk j of slot k reaches the ONU as cycle (k-1)*cps + j + 1 opens
        grant = self.policy.slot_grant(sched.cti_lookahead(target_slot))
        if grant is not None:
            self.cycles.plan(grant, (target_slot - 1) * self.cycles_per_slot + 1)

    def _on_cycle(self, event: SimEvent) -> None:
        c = event.payload
        gc = self.gc
        gmap = self.cycles.build(c)
        for window in gmap.windows:
            queue = self.queues[window.onu_id]
            for dep in uplink_transmit(queue, window, gc):
                train: SlotTrain = dep.item
                if not train.last:
                    continue
                arrive = dep.dequeued_at + self.fronthaul_ns[window.onu_id]
                for batch in train.batches:
                    batch.stamps.onu_dequeue = dep.dequeued_at
                    batch.stamps.du_arrival = arrive
                self.engine.schedule_at(arrive, EventKind.FRAME_ARRIVAL, train)
            self.cycles.book.file(StatusReport(
                window.onu_id, queue.backlog_bytes_at(window.end_ns), c, window.end_ns
            ))

        for out, delivery in self.co_uplink.on_cycle(c):
            stamps = out.batch.stamps
            stamps.tier2_enqueue = delivery.start
            stamps.tier2_depart = delivery.depart
            self.engine.schedule_at(delivery.app_arrival, EventKind.TRAFFIC_ARRIVAL, out.batch)

        following = (c + 1) * gc.period_ns
        if following <= self.horizon:
            self.engine.schedule_at(following, EventKind.GRANT_CYCLE, c + 1)

    def _on_frames(self, event: SimEvent) -> None:
        train: SlotTrain = event.payload
        outputs = du_process(event.fire_at, self.slot_ns, train.batches)
        for batch in train.batches:
            batch.stamps.du_done = event.fire_at + self.slot_ns
        if any(outputs):
            self.engine.schedule_at(
                event.fire_at + self.slot_ns, EventKind.PROCESSING_COMPLETE, outputs
            )

    def _on_du_done(self, event: SimEvent) -> None:
        urllc_out, normal_out = event.payload
        delivery = tier2_send(urllc_out, self.tier2)
        if delivery is not None:
            stamps = urllc_out.batch.stamps
            stamps.tier2_enqueue = delivery.start
            stamps.tier2_depart = delivery.depart
            self.engine.schedule_at(
                delivery.app_arrival, EventKind.TRAFFIC_ARRIVAL, urllc_out.batch
            )
        co_send(normal_out, self.co_uplink)

    def _on_app(self, event: SimEvent) -> None:
        batch: PacketBatch = event.payload
        batch.stamps.app_arrival = event.fire_at
        self._delivered[batch.traffic_class] += batch.nbytes
        self.metrics.record_batch(batch)

    def _on_control(self, event: SimEvent) -> None:
        message = event.payload
        logger.debug(
            "%s %s -> %s delivered at %d ns",
            message.kind.value, message.source, message.target, event.fire_at,
        )
        if message.kind is ControlKind.TUNE_ACK:
            self.topology.commit(self.reconfiguration)
            self.tier2.ready_at = event.fire_at
            self._reconfigured_at = event.fire_at

    # --- run ---

    def _start(self) -> None:
        for message in self.reconfiguration.messages:
            self.engine.schedule_at(message.delivered_at, EventKind.CONTROL_MESSAGE, message)
        # slot 0 closes at t=0 empty; slots 1..4 were decided before the run, with no normal users
        for sched in self.schedulers:
            sched.on_boundary(0)
            if self.policy.uses_cti:
                for target in range(1, GRANT_LOOKAHEAD_SLOTS + 1):
                    self._plan(sched, target)
        # slot openings sort ahead of the grant cycle that starts at the same instant
        if self.slot_ns <= self.horizon:
            self.engine.schedule_at(0, EventKind.SLOT_BOUNDARY, 1)
        self.engine.schedule_at(0, EventKind.GRANT_CYCLE, 0)

    def _in_flight(self) -> dict[TrafficClass, int]:
        held = {cls: 0 for cls in CLASS_ORDER}
        for sched in self.schedulers:
            for cls in CLASS_ORDER:
                held[cls] += sched.held_users(cls, self.horizon) * self.payload_bytes

        def add(batch: PacketBatch) -> None:
            held[batch.traffic_class] += batch.nbytes

        for queue in self.queues:
            for train in queue:
                for batch in train.batches:
                    add(batch)
        for out in self.co_uplink.queue.items():
            add(out.batch)
        for ev in self.engine.pending_events():
            if ev.kind is EventKind.FRAME_ARRIVAL:
                for batch in ev.payload.batches:
                    add(batch)
            elif ev.kind is EventKind.PROCESSING_COMPLETE:
                for out in ev.payload:
                    if out is not None:
                        add(out.batch)
            elif ev.kind is EventKind.TRAFFIC_ARRIVAL:
                add(ev.payload)
        return held

    def run(self) -> SimulationResult:
        """Run to the scenario horizon and summarize."""
        scenario = self.scenario
        logger.info("Running %s for %g s", scenario.scenario_id, scenario.run.duration_s)
        self._start()
        processed = self.engine.run_until(self.horizon)

        result = SimulationResult(
            scenario=scenario,
            summaries=self.metrics.summaries(),
            calibration=self.calibration,
            events_processed=processed,
            urllc_deferrals=sum(s.urllc_deferrals for s in self.schedulers),
            overloaded_cycles=self.cycles.overloaded_cycles,
            tier2_peak_backlog_bytes=self.tier2.peak_backlog_bytes,
            reconfigured_at_ns=self._reconfigured_at,
        )
        if self._rate_slots:
            means = self._rate_sum / self._rate_slots
            result.measured_load_pct = traffic_intensity(means, self.gc.uplink_capacity_bps)

        in_flight = self._in_flight()
        for cls in CLASS_ORDER:
            generated = sum(
                s.generated_users(cls, self.horizon) for s in self.schedulers
            ) * self.payload_bytes
            ledger = ByteLedger(generated, self._delivered[cls], in_flight[cls])
            result.ledger[cls] = ledger
            if not ledger.balanced:
                result.errors.append(
                    f"{cls.value} bytes do not balance: generated {ledger.generated}, "
                    f"delivered {ledger.delivered}, in flight {ledger.in_flight}"
                )

        behind_ns = self.tier2.busy_until - self.horizon
        if behind_ns > UNSTABLE_BACKLOG_NS:
            msg = (
                f"tier-2 downlink at {scenario.pon.dl_fraction:g} of capacity is "
                f"{behind_ns / NS_PER_MS:.1f} ms behind at the horizon"
            )
            logger.warning(msg)
            result.warnings.append(msg)
        if result.overloaded_cycles:
            result.warnings.append(
                f"{result.overloaded_cycles} grant cycles had more planned frames than capacity"
            )
        if not result.summaries:
            result.warnings.append("no packets were delivered after the warm-up")

        logger.info(
            "Finished %s: %d events, measured load %.1f%%",
            scenario.scenario_id, processed, result.measured_load_pct,
        )
        return result


def run_scenario(scenario: Scenario) -> SimulationResult:
    return VponSimulation(scenario).run()


def write_results(result: SimulationResult, out_dir: Path, as_json: bool = False) -> list[Path]:
    """Write ``metrics.csv`` (and ``metrics.json``) for one run."""
    out_dir = Path(out_dir)
    written = [export_csv(out_dir / "metrics.csv", result.summaries)]
    if as_json:
        written.append(export_json(out_dir / "metrics.json", result.summaries, result.run_info()))
    for path in written:
        logger.info("Wrote %s", path)
    return written
