"""Unit tests for meshvpon.ran module."""

import numpy as np
import pytest
from pydantic import ValidationError

from meshvpon.errors import SlotStateError
from meshvpon.ran import (
    GRANT_LOOKAHEAD_SLOTS,
    CgsConfig,
    NumerologyConfig,
    RanScheduler,
    SlotState,
    SlotTimeline,
    TrafficArrival,
    TrafficClass,
    admit_arrival,
    calibrate_arrivals,
    slot_occupancy,
)
from meshvpon.rates import split72_rate, traffic_intensity

URLLC, NORMAL = TrafficClass.URLLC, TrafficClass.NORMAL


def _arrival(t_ns: int, cls: TrafficClass, packet_id: int = 0) -> TrafficArrival:
    return TrafficArrival(arrive_at=t_ns, traffic_class=cls, ru_id=0, packet_id=packet_id)


class TestNumerologyConfig:
    """Tests for NumerologyConfig derivation and validation."""

    def test_config1(self, config1):
        """Test numerology 1 derives 0.5 ms and 270 PRBs."""
        assert config1.slot_time_s == pytest.approx(0.5e-3)
        assert config1.max_prbs == 270
        assert config1.slot_ns == 500_000

    def test_config2(self, config2):
        """Test numerology 2 derives 0.25 ms and 135 PRBs."""
        assert config2.slot_time_s == pytest.approx(0.25e-3)
        assert config2.max_prbs == 135
        assert config2.slot_ns == 250_000

    def test_symbol_time(self, config1):
        """Test the symbol time closed form."""
        assert config1.symbol_time_s == pytest.approx(1e-3 / 28)

    def test_inconsistent_slot_time(self):
        """Test a slot time that does not match the numerology is rejected."""
        with pytest.raises(ValidationError):
            NumerologyConfig(mu=1, slot_time_s=0.3e-3)

    def test_unknown_numerology(self):
        """Test numerology 3 is rejected."""
        with pytest.raises(ValidationError):
            NumerologyConfig(mu=3)


class TestCgsConfig:
    """Tests for the CGS reservation."""

    @pytest.mark.parametrize(
        "fraction,max_prbs,expected",
        [(0.10, 270, 27), (0.20, 270, 54), (0.20, 135, 27), (0.10, 135, 13)],
    )
    def test_reserved_prbs(self, fraction, max_prbs, expected):
        """Test reserved PRB counts for the default fractions."""
        assert CgsConfig(reserved_fraction=fraction, max_prbs=max_prbs).reserved_prbs == expected

    def test_empty_pool_rejected(self):
        """Test a fraction that reserves no PRB is rejected."""
        with pytest.raises(ValidationError):
            CgsConfig(reserved_fraction=0.001, max_prbs=270)


class TestSlotState:
    """Tests for the per-slot PRB grid."""

    def test_admit_sets_flags(self):
        """Test admitted users flag exactly their PRBs."""
        slot = SlotState(slot_index=0, max_prbs=270, reserved_prbs=27)
        slot.admit(URLLC, 2)
        slot.admit(NORMAL, 3)

        assert slot.cgs_used == 10
        assert slot.dyn_used == 15
        assert int(slot.prb_flags.sum()) == 25
        assert slot.prb_flags[:10].all()
        assert slot.prb_flags[27:42].all()

    def test_cgs_pool_full(self):
        """Test the sixth URLLC user does not fit a 27-PRB pool."""
        slot = SlotState(slot_index=0, max_prbs=270, reserved_prbs=27)
        slot.admit(URLLC, 5)

        assert slot.cgs_free_users == 0
        with pytest.raises(SlotStateError):
            slot.admit(URLLC)

    def test_finalized_slot_frozen(self):
        """Test a finalized slot takes no more users."""
        slot = SlotState(slot_index=0, max_prbs=270, reserved_prbs=27, finalized=True)
        with pytest.raises(SlotStateError):
            slot.admit(NORMAL)


class TestSlotOccupancy:
    """Tests for slot_occupancy."""

    def test_empty_slot(self):
        """Test an empty finalized slot."""
        timeline = SlotTimeline(NumerologyConfig(mu=1), CgsConfig(reserved_fraction=0.1))
        assert slot_occupancy(timeline.finalize(0)) == (0, 0, 0)

    def test_mixed_slot(self):
        """Test 2 URLLC and 3 normal users occupy 25 PRBs."""
        timeline = SlotTimeline(NumerologyConfig(mu=1), CgsConfig(reserved_fraction=0.1))
        timeline.slot(3).admit(URLLC, 2)
        timeline.slot(3).admit(NORMAL, 3)

        assert slot_occupancy(timeline.finalize(3)) == (25, 2, 3)

    def test_full_slot(self):
        """Test a full 0.5 ms slot holds 54 users on 270 PRBs."""
        # 50-PRB pool so both pools divide into whole users
        timeline = SlotTimeline(NumerologyConfig(mu=1), CgsConfig(reserved_fraction=50 / 270))
        timeline.slot(0).admit(URLLC, 10)
        timeline.slot(0).admit(NORMAL, 44)

        data_prbs, urllc, normal = slot_occupancy(timeline.finalize(0))
        assert data_prbs == 270
        assert urllc + normal == 54

    def test_unfinalized_slot(self):
        """Test querying an open slot is an error."""
        slot = SlotState(slot_index=0, max_prbs=270, reserved_prbs=27)
        with pytest.raises(SlotStateError):
            slot_occupancy(slot)

    def test_finalized_slot_cannot_reopen(self):
        """Test a finalized slot index is not handed out again."""
        timeline = SlotTimeline(NumerologyConfig(mu=1), CgsConfig())
        timeline.finalize(0)
        with pytest.raises(SlotStateError):
            timeline.slot(0)


class TestAdmitArrival:
    """Tests for admit_arrival."""

    @pytest.fixture
    def timeline(self):
        return SlotTimeline(NumerologyConfig(mu=1), CgsConfig(reserved_fraction=0.10))

    def test_urllc_next_slot(self, timeline):
        """Test URLLC at 0.1 ms goes out at the 0.5 ms boundary."""
        assert admit_arrival(_arrival(100_000, URLLC), timeline) == 1

    def test_normal_four_slots_later(self, timeline):
        """Test normal at 0.1 ms requests at slot 1 and is granted slot 5."""
        assert admit_arrival(_arrival(100_000, NORMAL), timeline) == 1 + GRANT_LOOKAHEAD_SLOTS

    def test_urllc_overflow_defers(self, timeline):
        """Test the sixth URLLC user in a 27-PRB pool moves to the next slot."""
        slots = [admit_arrival(_arrival(100_000, URLLC, i), timeline) for i in range(6)]
        assert slots == [1, 1, 1, 1, 1, 2]


class TestRanScheduler:
    """Tests for the boundary-driven RAN scheduler."""

    def _scheduler(self, urllc, normal, fraction=0.10):
        numerology = NumerologyConfig(mu=1)
        return RanScheduler(
            0,
            numerology,
            CgsConfig(reserved_fraction=fraction, max_prbs=numerology.max_prbs),
            np.asarray(urllc, dtype=np.int64),
            np.asarray(normal, dtype=np.int64),
        )

    def test_urllc_rides_current_slot(self):
        """Test a URLLC arrival in [0, T) leaves at boundary 1."""
        sched = self._scheduler([100_000], [])
        assert sched.on_boundary(0).urllc.count == 0
        emitted = sched.on_boundary(1)

        assert emitted.urllc.count == 1
        assert emitted.state.urllc_users == 1

    def test_normal_granted_four_slots_after_request(self):
        """Test a normal arrival in [0, T) is carried in slot 5."""
        sched = self._scheduler([], [100_000])
        counts = [sched.on_boundary(k).normal.count for k in range(7)]

        assert counts == [0, 0, 0, 0, 0, 1, 0]

    def test_request_slot_is_four_before(self):
        """Test every emitted normal batch records request = slot - 4."""
        sched = self._scheduler([], list(range(0, 5_000_000, 50_000)))
        for k in range(15):
            emitted = sched.on_boundary(k)
            assert emitted.normal_request_slot == k - GRANT_LOOKAHEAD_SLOTS

    def test_urllc_overflow_deferred_fifo(self):
        """Test seven URLLC users in one slot with room for five."""
        sched = self._scheduler([10_000 * i for i in range(7)], [])
        sched.on_boundary(0)
        first = sched.on_boundary(1)
        second = sched.on_boundary(2)

        assert (first.urllc.first, first.urllc.count) == (0, 5)
        assert (second.urllc.first, second.urllc.count) == (5, 2)
        assert sched.urllc_deferrals == 2

    def test_normal_overflow_retried(self):
        """Test normal users beyond the dynamic pool are granted in later slots."""
        # 243 dynamic PRBs at 10 % CGS hold 48 users
        sched = self._scheduler([], [1_000] * 50)
        counts = [sched.on_boundary(k).normal.count for k in range(8)]

        assert counts[5] == 48
        assert counts[6] == 2
        assert sum(counts) == 50

    def test_cti_reports_scheduled_and_reserved(self):
        """Test the CTI carries normal PRBs and the full CGS pool."""
        sched = self._scheduler([], [1_000, 2_000, 3_000])
        sched.on_boundary(0)
        sched.on_boundary(1)
        cti = sched.cti_lookahead(5)

        assert cti.scheduled_normal_prbs == 15
        assert cti.cgs_reserved_prbs == 27
        assert cti.issued_slot == 1

    def test_cti_idle_slot_still_reports_pool(self):
        """Test an idle slot reports zero normal PRBs and the reservation."""
        sched = self._scheduler([], [])
        cti = sched.cti_lookahead(2)

        assert (cti.scheduled_normal_prbs, cti.cgs_reserved_prbs) == (0, 27)

    def test_cti_config2_pool(self):
        """Test 20 % CGS on 135 PRBs reports 27 reserved PRBs."""
        numerology = NumerologyConfig(mu=2)
        sched = RanScheduler(
            0, numerology, CgsConfig(reserved_fraction=0.2, max_prbs=135),
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
        )
        assert sched.cti_lookahead(0).cgs_reserved_prbs == 27

    def test_cti_undecided_slot(self):
        """Test asking for a slot beyond the 4-slot horizon is an error."""
        sched = self._scheduler([], [])
        sched.on_boundary(0)
        with pytest.raises(SlotStateError):
            sched.cti_lookahead(5)

    def test_user_conservation(self):
        """Test emitted plus held users equal generated users."""
        rng = np.random.default_rng(5)
        urllc = np.sort(rng.integers(0, 10_000_000, 300))
        normal = np.sort(rng.integers(0, 10_000_000, 900))
        sched = self._scheduler(urllc, normal)
        emitted = {URLLC: 0, NORMAL: 0}
        for k in range(21):
            slot = sched.on_boundary(k)
            emitted[URLLC] += slot.urllc.count
            emitted[NORMAL] += slot.normal.count
            assert slot.state.cgs_used <= slot.state.reserved_prbs
            assert slot.state.data_prbs <= slot.state.max_prbs

        horizon = 10_000_000
        for cls in (URLLC, NORMAL):
            assert emitted[cls] + sched.held_users(cls, horizon) == sched.generated_users(
                cls, horizon
            )


class TestCalibration:
    """Tests for the load-targeting arrival calibration."""

    def test_expected_load_matches_target(self, split72_config1):
        """Test the calibrated occupancy reproduces the requested load."""
        cal = calibrate_arrivals(60.0, 16, 50e9, split72_config1)
        mean_rate = split72_rate(split72_config1, 0) + (
            cal.users_per_slot * 5 * split72_config1.prb_slope_bps
        )

        assert traffic_intensity([mean_rate] * 16, 50e9) == pytest.approx(60.0, rel=1e-9)

    def test_urllc_share(self, split72_config1):
        """Test 20 % of arrivals are URLLC."""
        cal = calibrate_arrivals(50.0, 16, 50e9, split72_config1)

        assert cal.urllc_rate == pytest.approx(0.2 * cal.total_rate)
        assert cal.urllc_rate + cal.normal_rate == pytest.approx(cal.total_rate)

    def test_below_floor_clamps_to_zero(self, split72_config1):
        """Test a load below the idle floor generates no users."""
        cal = calibrate_arrivals(0.1, 16, 50e9, split72_config1)
        assert cal.total_rate == 0.0
