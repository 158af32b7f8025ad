"""Unit tests for meshvpon.dba module."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshvpon.dba import (
    ConventionalCoDba,
    CycleScheduler,
    EnhancedCoDba,
    GrantCycleConfig,
    ReportBook,
    SlotGrant,
    StatusReport,
    StatusReportDba,
    build_policy,
    conventional_codba,
    enhanced_codba,
    policy_names,
    rate_to_slot_bytes,
    share,
    chunk_frames,
    split_bytes,
    sr_dba,
)
from meshvpon.ran import CtiReport
from meshvpon.rates import split72_rate

FULL_MU1 = 5624.632e6


def _cti(normal_prbs: int, cgs_prbs: int = 27, ru: int = 0, slot: int = 5) -> CtiReport:
    return CtiReport(
        target_slot=slot,
        ru_id=ru,
        scheduled_normal_prbs=normal_prbs,
        cgs_reserved_prbs=cgs_prbs,
        issued_slot=slot - 4,
    )


class TestGrantCycleConfig:
    """Tests for grant-cycle framing."""

    def test_cycle_capacity(self, grant_cycle):
        """Test a 125 us cycle at 50 Gbps carries 781,250 bytes."""
        assert grant_cycle.cycle_capacity_bytes == 781_250

    def test_frame_airtime(self, grant_cycle):
        """Test a 2048-byte frame takes 327.68 ns, rounded up."""
        assert grant_cycle.airtime_ns(2048) == 328
        assert grant_cycle.airtime_ns(20_480) == 3_277

    def test_cycles_per_slot(self, grant_cycle):
        """Test 0.5 ms and 0.25 ms slots hold 4 and 2 cycles."""
        assert grant_cycle.cycles_per_slot(500_000) == 4
        assert grant_cycle.cycles_per_slot(250_000) == 2

    def test_uneven_slot_rejected(self, grant_cycle):
        """Test a slot that is not a whole number of cycles is rejected."""
        with pytest.raises(ValueError):
            grant_cycle.cycles_per_slot(300_000)

    def test_response_longer_than_cycle(self):
        """Test the ONU response time must fit in the cycle."""
        with pytest.raises(ValueError):
            GrantCycleConfig(period_ns=30_000, onu_response_ns=35_000)

    def test_max_bytes_leaves_guards(self, grant_cycle):
        """Test per-window guards come out of the cycle budget."""
        assert grant_cycle.max_bytes(1) < grant_cycle.cycle_capacity_bytes
        assert grant_cycle.max_bytes(16) < grant_cycle.max_bytes(1)


class TestHelpers:
    """Tests for the byte and frame helpers."""

    def test_rate_to_slot_bytes(self):
        """Test the full-load rate over one 0.5 ms slot."""
        assert rate_to_slot_bytes(FULL_MU1, 0.5e-3) == 351_540

    def test_split_bytes(self):
        """Test a slot is cut into near-equal chunks that add up."""
        assert split_bytes(66_996, 4) == (16_749, 16_749, 16_749, 16_749)
        assert split_bytes(50_877, 4) == (12_719, 12_719, 12_719, 12_720)
        assert split_bytes(0, 2) == (0, 0)

    def test_split_bytes_rejects_no_chunks(self):
        """Test zero chunks is rejected."""
        with pytest.raises(ValueError):
            split_bytes(100, 0)

    def test_chunk_frames_pads_each_chunk(self):
        """Test every chunk is framed on its own."""
        assert chunk_frames(66_996, 4, 2048) == (9, 9, 9, 9)
        assert chunk_frames(4096, 2, 2048) == (1, 1)
        assert chunk_frames(4097, 2, 2048) == (1, 2)

    @given(
        st.integers(min_value=0, max_value=400_000),
        st.sampled_from([1, 2, 4]),
    )
    def test_split_bytes_properties(self, nbytes, chunks):
        """Test chunks add up to the slot and differ by at most one byte."""
        parts = split_bytes(nbytes, chunks)

        assert len(parts) == chunks
        assert sum(parts) == nbytes
        assert max(parts) - min(parts) <= 1

    @given(
        st.integers(min_value=0, max_value=400_000),
        st.integers(min_value=0, max_value=100_000),
        st.sampled_from([2, 4]),
    )
    def test_larger_grant_covers_every_chunk(self, nbytes, more, chunks):
        """Test a grant a few bytes above the slot covers each of its chunks."""
        grant = chunk_frames(nbytes + chunks + more, chunks, 2048)
        sent = chunk_frames(nbytes, chunks, 2048)

        assert all(g >= s for g, s in zip(grant, sent))

    def test_share_under_budget(self):
        """Test demand within budget is granted in full."""
        assert share([3, 4, 5], 20) == [3, 4, 5]

    def test_share_over_budget(self):
        """Test demand above budget is capped proportionally."""
        assert share([10, 10], 11) == [6, 5]
        assert share([10, 10], 11, start=1) == [5, 6]

    @given(
        st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=20),
        st.integers(min_value=0, max_value=50_000),
        st.integers(min_value=0, max_value=100),
    )
    def test_share_properties(self, demands, budget, start):
        """Test grants never exceed demand and sum to min(demand, budget)."""
        granted = share(demands, budget, start)

        assert sum(granted) == min(sum(demands), budget)
        assert all(0 <= g <= d for g, d in zip(granted, demands))


class TestEnhancedCoDba:
    """Tests for enhanced Co-DBA."""

    def test_grant_covers_normal_and_cgs(self, split72_config1, grant_cycle):
        """Test 15 normal PRBs plus the 27-PRB pool at numerology 1."""
        grant = enhanced_codba(_cti(15), split72_config1, grant_cycle)

        assert grant.nbytes == 66_996
        assert grant.frames == 36
        assert grant.per_cycle == (9, 9, 9, 9)
        assert (grant.ru_id, grant.target_slot) == (0, 5)

    def test_idle_ru_still_gets_pool(self, split72_config1, grant_cycle):
        """Test an RU with no normal users is granted the floor plus the pool."""
        grant = enhanced_codba(_cti(0), split72_config1, grant_cycle)
        expected = rate_to_slot_bytes(split72_rate(split72_config1, 27), 0.5e-3)
        assert grant.nbytes == expected

    def test_capped_at_max_prbs(self, split72_config1, grant_cycle):
        """Test normal plus pool never exceeds the full-load rate."""
        grant = enhanced_codba(_cti(260), split72_config1, grant_cycle)
        assert grant.nbytes == rate_to_slot_bytes(FULL_MU1, 0.5e-3)

    def test_config2_spreads_over_two_cycles(self, config2, grant_cycle):
        """Test 0.25 ms slots spread the grant over two cycles."""
        grant = enhanced_codba(_cti(10), config2.split72_params(), grant_cycle)
        assert len(grant.per_cycle) == 2
        assert sum(grant.per_cycle) == grant.frames


class TestConventionalCoDba:
    """Tests for conventional Co-DBA."""

    def test_fixed_headroom(self, split72_config1, grant_cycle):
        """Test 15 normal PRBs plus 5 % of the full-load rate."""
        grant = conventional_codba(_cti(15), FULL_MU1, grant_cycle, split72_config1)

        assert grant.nbytes == 33_300 + 17_577
        assert grant.per_cycle == (7, 7, 7, 7)
        assert grant.frames == 28

    def test_ignores_cgs_field(self, split72_config1, grant_cycle):
        """Test the CGS reservation in the CTI does not change the grant."""
        a = conventional_codba(_cti(15, cgs_prbs=27), FULL_MU1, grant_cycle, split72_config1)
        b = conventional_codba(_cti(15, cgs_prbs=54), FULL_MU1, grant_cycle, split72_config1)
        assert a == b

    def test_zero_headroom_matches_enhanced_without_pool(self, split72_config1, grant_cycle):
        """Test 0 % headroom equals enhanced Co-DBA with no reservation."""
        conventional = conventional_codba(
            _cti(15), FULL_MU1, grant_cycle, split72_config1, headroom=0.0
        )
        enhanced = enhanced_codba(_cti(15, cgs_prbs=0), split72_config1, grant_cycle)
        assert conventional == enhanced


class TestSrDba:
    """Tests for status-report DBA."""

    def test_empty_report_gets_polling_window(self, grant_cycle):
        """Test a zero backlog still gets the polling allowance."""
        grants = sr_dba([StatusReport(0, 0, 0, 0)], grant_cycle, cycle_index=1)

        assert grants.window(0).nbytes == grant_cycle.polling_bytes
        assert grants.cycle_start_ns == 125_000

    def test_backlog_fully_granted(self, grant_cycle):
        """Test 12,500 bytes fit in one cycle and are granted in full."""
        grants = sr_dba([StatusReport(3, 12_500, 0, 0)], grant_cycle, cycle_index=2)
        assert grants.window(3).nbytes == 12_500

    def test_granted_since_subtracted(self, grant_cycle):
        """Test bytes granted after the report are not granted again."""
        grants = sr_dba(
            [StatusReport(0, 12_500, 0, 0)], grant_cycle, cycle_index=2,
            granted_since={0: 10_000},
        )
        assert grants.window(0).nbytes == 2_500

    def test_oversubscribed_fills_cycle(self, grant_cycle):
        """Test demand above capacity fills the cycle exactly."""
        reports = [StatusReport(i, 1_000_000, 0, 0) for i in range(2)]
        grants = sr_dba(reports, grant_cycle, cycle_index=0)

        assert grants.total_bytes == grant_cycle.max_bytes(2)
        assert grants.is_tdma_disjoint(grant_cycle.period_ns)

    def test_negative_report_rejected(self):
        """Test a negative backlog is rejected."""
        with pytest.raises(ValueError):
            StatusReport(0, -1, 0, 0)

    def test_windows_are_tdma_disjoint(self, grant_cycle):
        """Test sixteen ONUs get back-to-back windows inside the cycle."""
        reports = [StatusReport(i, 20_000 * (i + 1), 0, 0) for i in range(16)]
        grants = sr_dba(reports, grant_cycle, cycle_index=7)

        assert grants.is_tdma_disjoint(grant_cycle.period_ns)
        assert [grants.offset_ns(i) >= 0 for i in range(16)] == [True] * 16
        assert grants.offset_ns(99) == -1


class TestReportBook:
    """Tests for the OLT's view of status reports."""

    def test_report_visible_after_lag(self):
        """Test a report only shapes cycles at least lag after it."""
        book = ReportBook(lag_ns=100)
        book.file(StatusReport(0, 5_000, 0, 0))

        assert book.latest(0, 50) is None
        assert book.latest(0, 100).queued_bytes == 5_000

    def test_newest_visible_report_wins(self):
        """Test the most recent report old enough is used."""
        book = ReportBook(lag_ns=100)
        book.file(StatusReport(0, 5_000, 0, 0))
        book.file(StatusReport(0, 7_000, 1, 200))
        book.file(StatusReport(0, 9_000, 2, 400))

        assert book.latest(0, 350).queued_bytes == 7_000

    def test_outstanding_subtracts_later_grants(self):
        """Test grants after the report reduce what is outstanding."""
        book = ReportBook(lag_ns=100)
        book.file(StatusReport(0, 5_000, 0, 10))
        book.note_grant(0, 5, 3_000)
        book.note_grant(0, 20, 1_000)

        assert book.outstanding(0, 200) == 4_000

    def test_unknown_onu(self):
        """Test an ONU that never reported has nothing outstanding."""
        assert ReportBook(lag_ns=0).outstanding(5, 1_000) == 0


class TestPolicyRegistry:
    """Tests for the DBA policy registry."""

    def test_names(self):
        """Test the three policies are registered."""
        assert set(policy_names()) == {"enhanced-codba", "conventional-codba", "sr-dba"}

    @pytest.mark.parametrize(
        "name,cls,uses_cti",
        [
            ("enhanced-codba", EnhancedCoDba, True),
            ("conventional-codba", ConventionalCoDba, True),
            ("sr-dba", StatusReportDba, False),
        ],
    )
    def test_build_policy(self, name, cls, uses_cti, split72_config1, grant_cycle):
        """Test build_policy returns the registered class."""
        policy = build_policy(name, split72_config1, grant_cycle)

        assert isinstance(policy, cls)
        assert policy.name == name
        assert policy.uses_cti is uses_cti

    def test_unknown_policy(self, split72_config1, grant_cycle):
        """Test an unknown name raises ValueError listing the choices."""
        with pytest.raises(ValueError, match="enhanced-codba"):
            build_policy("wfq", split72_config1, grant_cycle)

    def test_policy_matches_function(self, split72_config1, grant_cycle):
        """Test the policy objects delegate to the grant functions."""
        policy = build_policy("conventional-codba", split72_config1, grant_cycle, headroom=0.1)
        expected = conventional_codba(
            _cti(20), FULL_MU1, grant_cycle, split72_config1, headroom=0.1
        )
        assert policy.slot_grant(_cti(20)) == expected
        assert build_policy("sr-dba", split72_config1, grant_cycle).slot_grant(_cti(20)) is None


class TestCycleScheduler:
    """Tests for frame-granular cycle grant maps."""

    def _grant(self, ru: int, per_cycle: tuple[int, ...]) -> SlotGrant:
        frames = sum(per_cycle)
        return SlotGrant(ru, 0, frames * 2048, frames, per_cycle)

    def test_planned_frames_follow_grant(self, grant_cycle):
        """Test a slot grant lands on consecutive cycles."""
        sched = CycleScheduler(range(2), grant_cycle, report_lag_ns=0)
        sched.plan(self._grant(1, (9, 8, 8, 8)), first_cycle=8)

        assert [sched.planned_frames(c, 1) for c in range(8, 12)] == [9, 8, 8, 8]
        grants = sched.build(8)
        assert grants.window(1).frames == 9
        assert grants.window(0).frames == 0
        assert sched.planned_frames(8, 1) == 0

    def test_overload_scaled_and_counted(self, grant_cycle):
        """Test an oversubscribed cycle is capped and counted."""
        sched = CycleScheduler(range(2), grant_cycle, report_lag_ns=0)
        sched.plan(self._grant(0, (300,)), first_cycle=0)
        sched.plan(self._grant(1, (300,)), first_cycle=0)

        grants = sched.build(0)

        assert sched.overloaded_cycles == 1
        assert sum(w.frames for w in grants.windows) == grant_cycle.max_frames(2)
        assert grants.is_tdma_disjoint(grant_cycle.period_ns)

    def test_reports_fill_leftover(self, grant_cycle):
        """Test reported backlog beyond the plan gets extra frames."""
        sched = CycleScheduler(range(2), grant_cycle, report_lag_ns=0)
        sched.book.file(StatusReport(1, 10_000, 0, 0))

        grants = sched.build(1)

        assert grants.window(1).frames == 5
        assert sched.overloaded_cycles == 0

    def test_granted_bytes_not_regranted(self, grant_cycle):
        """Test a report is not granted twice across cycles."""
        sched = CycleScheduler(range(1), grant_cycle, report_lag_ns=0)
        sched.book.file(StatusReport(0, 10_000, 0, 0))

        assert sched.build(1).window(0).frames == 5
        assert sched.build(2).window(0).frames == 0
