"""
Unit tests for the zoned device command set: write, append, read, finish and reset.
"""
import pytest

from api.common.errors import (
    InsufficientAvailability, InvalidRequest, NoFreePhysicalZone, OpenZoneLimitExceeded,
    ReadBeyondWritePointer, ReadUnmappedZone, WritePointerViolation, ZoneFull,
)
from api.flash.schemas import Availability, Issuer, ReceiptKind
from api.geometry.services import validate_geometry
from api.metrics.services import dlwa
from api.zones.schemas import ZoneState

A = Availability

# (strategy, DLWA reduction in percent against the full-zone baseline) at
# occupancies 10, 25, 50, 75 and 95 percent of one ZN540 zone
ZN540_REDUCTIONS = {
    "stripe": [86.36, 72.73, 50.0, 22.73, 4.55],
    "chunk-1": [86.36, 72.73, 50.0, 22.73, 4.55],
    "chunk-2": [81.82, 72.73, 45.45, 18.18, 0.0],
    "chunk-11": [50.0, 50.0, 50.0, 0.0, 0.0],
}
OCCUPANCIES = [10, 25, 50, 75, 95]


def _finish_at(device, pages, zone_id=0):
    device.zone_write(zone_id, 0, pages)
    return device.finish_zone(zone_id)


class TestZoneWrite:
    """Test sequential writes and zone opening."""

    def test_stripe_round_robin(self, make_device):
        """Test eight pages land two per block on the four LUNs of the first stripe."""
        device = make_device("stripe")
        receipts = device.zone_write(0, 0, 8)
        assert [r.lun for r in receipts] == [0, 1, 2, 3, 0, 1, 2, 3]
        assert all(r.element == 0 for r in receipts)
        assert device.flash[0].programmed_pages == [2, 2, 2, 2]
        assert device.zone(0).write_pointer == 8
        assert device.zone(0).state is ZoneState.OPEN

    def test_chunk_lanes(self, make_device):
        """Test chunk-1 lanes follow the LUN of each chunk."""
        device = make_device("chunk-1")
        receipts = device.zone_write(0, 0, 4)
        assert [r.element for r in receipts] == [0, 8, 16, 24]
        assert [r.lun for r in receipts] == [0, 1, 2, 3]

    def test_second_group(self, make_device):
        """Test page 16 opens the second stripe."""
        device = make_device("stripe")
        receipts = device.zone_write(0, 0, 17)
        assert receipts[-1].element == 1
        assert receipts[-1].page == 0

    def test_write_pointer_violation(self, make_device):
        """Test a write away from the write pointer."""
        device = make_device("stripe")
        device.zone_write(0, 0, 4)
        with pytest.raises(WritePointerViolation) as exc_info:
            device.zone_write(0, 2, 1)
        assert exc_info.value.context["write_pointer"] == 4

    def test_write_past_zone_end(self, make_device):
        """Test a write crossing the zone end."""
        device = make_device("stripe")
        device.zone_write(0, 0, 30)
        with pytest.raises(ZoneFull):
            device.zone_write(0, 30, 3)

    def test_write_full_zone(self, make_device):
        """Test the zone becomes Full at its last page and refuses writes."""
        device = make_device("stripe")
        device.zone_write(0, 0, 32)
        assert device.zone(0).state is ZoneState.FULL
        assert device.open_zones == set()
        with pytest.raises(ZoneFull):
            device.zone_write(0, 32, 1)

    def test_empty_write(self, make_device):
        """Test zero-page writes are rejected."""
        with pytest.raises(InvalidRequest):
            make_device("stripe").zone_write(0, 0, 0)

    def test_open_zone_limit_g_small(self, make_device):
        """Test a third fresh zone under a two-zone limit."""
        device = make_device("stripe")
        device.zone_write(0, 0, 1)
        device.zone_write(1, 0, 1)
        with pytest.raises(OpenZoneLimitExceeded):
            device.zone_write(2, 0, 1)
        assert device.zone(2).state is ZoneState.EMPTY

    def test_open_zone_limit_zn540(self, make_device, zn540):
        """Test the fifteenth fresh zone under the fourteen-zone limit."""
        device = make_device("stripe", zn540)
        for zone_id in range(14):
            device.zone_write(zone_id, 0, 1)
        with pytest.raises(OpenZoneLimitExceeded):
            device.zone_write(14, 0, 1)

    def test_alloc_record(self, make_device):
        """Test the first write traces its allocation."""
        device = make_device("stripe")
        device.zone_write(0, 0, 1)
        alloc = device.trace.events[0]
        assert alloc["kind"] == "alloc"
        assert alloc["elements"] == [0, 1]
        assert "relaxed" not in alloc


class TestZoneAppend:
    """Test zone append."""

    def test_append_at_write_pointer(self, make_device):
        """Test an append lands at the write pointer."""
        device = make_device("stripe")
        device.zone_write(0, 0, 8)
        start, receipts = device.zone_append(0, 4)
        assert start == 8
        assert len(receipts) == 4
        assert device.zone(0).write_pointer == 12

    def test_consecutive_appends(self, make_device):
        """Test two appends get adjacent ranges."""
        device = make_device("stripe")
        first, _ = device.zone_append(0, 2)
        second, _ = device.zone_append(0, 2)
        assert (first, second) == (0, 2)

    def test_append_to_full_zone(self, make_device):
        """Test appending to a Full zone."""
        device = make_device("stripe")
        device.finish_zone(0)
        with pytest.raises(ZoneFull):
            device.zone_append(0, 1)


class TestZoneRead:
    """Test reads below the write pointer."""

    def test_read_latency(self, make_device):
        """Test four pages give four 60us read receipts."""
        device = make_device("stripe")
        device.zone_write(0, 0, 8)
        receipts = device.zone_read(0, 0, 4)
        assert len(receipts) == 4
        assert all(r.kind is ReceiptKind.READ and r.duration == 60.0 for r in receipts)

    def test_read_at_write_pointer(self, make_device):
        """Test reading the page at the write pointer."""
        device = make_device("stripe")
        device.zone_write(0, 0, 8)
        with pytest.raises(ReadBeyondWritePointer):
            device.zone_read(0, 8, 1)

    def test_read_finished_zone(self, make_device):
        """Test finished zones keep their data readable."""
        device = make_device("stripe")
        _finish_at(device, 8)
        assert len(device.zone_read(0, 0, 8)) == 8

    def test_read_released_lanes(self, make_device):
        """Test pages of lanes released by FINISH read back without flash access."""
        device = make_device("chunk-1")
        _finish_at(device, 2)
        assert len(device.zone_read(0, 0, 4)) == 2
        assert device.zone_read(0, 16, 16) == []

    def test_read_zone_finished_empty(self, make_device):
        """Test a zone finished before any write has nothing to read."""
        device = make_device("stripe")
        device.finish_zone(0)
        with pytest.raises(ReadUnmappedZone):
            device.zone_read(0, 0, 1)


class TestFinishZone:
    """Test FINISH dummy writes and element release."""

    def test_stripe_quarter_zone(self, make_device):
        """Test stripe at wp=8 fills its first stripe and releases the second."""
        device = make_device("stripe")
        report = _finish_at(device, 8)
        assert report.dummy_pages_written == 8
        assert report.elements_released == 1
        assert all(r.issuer is Issuer.DEVICE for r in report.receipts)
        assert {r.element for r in report.receipts} == {0}
        assert device.flash[1].avail is A.FREE
        assert dlwa(device.ledger) == 2.0

    @pytest.mark.parametrize("label", ["direct", "lazy"])
    def test_baseline_quarter_zone(self, make_device, label):
        """Test baselines dummy-fill the remaining 24 pages."""
        device = make_device(label)
        report = _finish_at(device, 8)
        assert report.dummy_pages_written == 24
        assert report.elements_released == 0
        assert dlwa(device.ledger) == 4.0

    def test_chunk_partial_group(self, make_device):
        """Test chunk-1 fills only the lanes that hold data."""
        device = make_device("chunk-1")
        report = _finish_at(device, 2)
        assert report.dummy_pages_written == 6
        assert report.elements_released == 6
        assert {r.element for r in report.receipts} == {0, 8}

    def test_stripe_partial_group(self, make_device):
        """Test a stripe fills every lane of its touched group."""
        device = make_device("stripe")
        report = _finish_at(device, 2)
        assert report.dummy_pages_written == 14
        assert report.elements_released == 1

    def test_group_boundary(self, make_device):
        """Test finishing exactly at a group boundary writes nothing."""
        device = make_device("stripe")
        report = _finish_at(device, 16)
        assert report.dummy_pages_written == 0
        assert report.elements_released == 1
        assert dlwa(device.ledger) == 1.0

    def test_finished_zone_state(self, make_device):
        """Test FINISH seals the zone and frees its open slot."""
        device = make_device("chunk-2")
        _finish_at(device, 5)
        zone = device.zone(0)
        assert zone.state is ZoneState.FULL
        assert zone.write_pointer == 32
        assert device.open_zones == set()
        assert device.check_invariants() == []

    def test_finish_full_zone_is_noop(self, make_device):
        """Test finishing twice."""
        device = make_device("stripe")
        _finish_at(device, 8)
        report = device.finish_zone(0)
        assert (report.dummy_pages_written, report.elements_released) == (0, 0)
        assert device.ledger.device_pages == 8

    def test_finish_empty_zone(self, make_device):
        """Test an empty zone becomes Full without a mapping."""
        device = make_device("stripe")
        report = device.finish_zone(0)
        assert report.dummy_pages_written == 0
        assert device.zone(0).state is ZoneState.FULL
        assert not device.zone(0).is_mapped
        assert device.check_invariants() == []

    def test_dummy_trace(self, make_device):
        """Test dummy and finish records."""
        device = make_device("stripe")
        _finish_at(device, 8)
        dummy, finish = device.trace.events[-2:]
        assert dummy == {"t": 0.0, "kind": "dummy", "zone": 0, "element": 0, "pages": 8}
        assert finish["kind"] == "finish"
        assert finish["lba"] == 8
        assert finish["released"] == 1

    @pytest.mark.parametrize("pages", [1, 3, 4, 7, 12, 17, 20, 31])
    def test_dominance_on_g_small(self, make_device, pages):
        """Test finer elements never write more dummy pages than coarser ones."""
        dummies = {label: _finish_at(make_device(label), pages).dummy_pages_written
                   for label in ("chunk-1", "stripe", "chunk-2", "direct", "lazy")}
        assert dummies["chunk-1"] <= dummies["stripe"] <= dummies["direct"]
        assert dummies["chunk-1"] <= dummies["chunk-2"] <= dummies["direct"]
        assert dummies["direct"] == dummies["lazy"] == 32 - pages

    @pytest.mark.slow
    @pytest.mark.parametrize("label", sorted(ZN540_REDUCTIONS))
    def test_zn540_dlwa_reduction(self, make_device, zn540, label):
        """Test the DLWA reduction of each strategy over the occupancy sweep."""
        for occupancy, expected in zip(OCCUPANCIES, ZN540_REDUCTIONS[label]):
            pages = round(occupancy / 100 * zn540.zone_pages)
            device = make_device(label, zn540, trace=None)
            _finish_at(device, pages)
            baseline = zn540.zone_pages / pages
            reduction = (baseline - dlwa(device.ledger)) / baseline * 100
            assert reduction == pytest.approx(expected, abs=0.02), occupancy

    def test_zn540_half_zone(self, make_device, zn540):
        """Test a stripe zone finished at exactly 50% has no dummy writes."""
        device = make_device("stripe", zn540, trace=None)
        report = _finish_at(device, zn540.zone_pages // 2)
        assert report.dummy_pages_written == 0
        assert report.elements_released == 11
        assert dlwa(device.ledger) == 1.0


class TestResetZone:
    """Test RESET invalidation and release."""

    def test_reset_full_zn540_zone(self, make_device, zn540):
        """Test a fully written zone invalidates all 22 stripes."""
        device = make_device("stripe", zn540, trace=None)
        device.zone_write(0, 0, zn540.zone_pages)
        report = device.reset_zone(0)
        assert (report.elements_invalidated, report.elements_released) == (22, 0)
        assert device.flash.counts()[A.FREE_INVALID] == 22

    def test_reset_open_zn540_zone(self, make_device, zn540):
        """Test an open zone with two written stripes."""
        device = make_device("stripe", zn540, trace=None)
        device.zone_write(0, 0, 4 * 768 + 1)
        report = device.reset_zone(0)
        assert (report.elements_invalidated, report.elements_released) == (2, 20)
        assert device.open_zones == set()
        assert device.zone(0).state is ZoneState.EMPTY
        assert device.check_invariants() == []

    def test_reset_empty_zone(self, make_device):
        """Test resetting an Empty zone."""
        report = make_device("stripe").reset_zone(0)
        assert (report.elements_invalidated, report.elements_released) == (0, 0)

    def test_erase_deferred_to_reuse(self, make_device):
        """Test invalid stripes are erased when the next zone claims them."""
        device = make_device("stripe")
        device.zone_write(0, 0, 32)
        device.reset_zone(0)
        assert device.flash[0].wear == 0
        receipts = device.zone_write(1, 0, 1)
        erases = [r for r in receipts if r.kind is ReceiptKind.ERASE]
        assert len(erases) == 8
        assert device.flash[0].wear == 1
        assert device.check_invariants() == []

    def test_rewrite_prefers_less_worn(self, make_device):
        """Test a re-written zone moves to stripes that were never erased."""
        device = make_device("stripe")
        device.zone_write(0, 0, 32)
        device.reset_zone(0)
        device.zone_write(1, 0, 32)
        device.reset_zone(1)
        device.zone_write(0, 0, 1)
        assert device.mapping.elements_of(0) == [2, 3]

    def test_lazy_takes_oldest_free_zone(self, make_device):
        """Test lazy remapping after a reset skips the just-freed zone."""
        device = make_device("lazy")
        device.zone_write(0, 0, 4)
        device.reset_zone(0)
        device.zone_write(0, 0, 4)
        assert device.mapping.elements_of(0) == [1]

    def test_direct_reuses_fixed_zone(self, make_device):
        """Test direct mapping erases and reuses the same physical zone."""
        device = make_device("direct")
        device.zone_write(0, 0, 4)
        device.reset_zone(0)
        receipts = device.zone_write(0, 0, 4)
        assert device.mapping.elements_of(0) == [0]
        assert sum(r.kind is ReceiptKind.ERASE for r in receipts) == 8
        assert device.flash[0].wear == 1

    def test_reset_trace(self, make_device):
        """Test the reset record."""
        device = make_device("stripe")
        device.zone_write(0, 0, 8)
        device.reset_zone(0)
        assert device.trace.events[-1] == {"t": 0.0, "kind": "reset", "zone": 0,
                                           "invalidated": 1, "released": 1}


class TestAddZone:
    """Test extending the namespace with zones built from free elements."""

    @staticmethod
    def _finish_every_zone(device, pages=8):
        for zone_id in range(len(device.zones)):
            _finish_at(device, pages, zone_id)

    def test_stripe_grows_from_released_stripes(self, make_device):
        """Test four zones finished at a quarter leave room for two more zones."""
        device = make_device("stripe")
        self._finish_every_zone(device)
        assert device.add_zone() == 4
        device.zone_write(4, 0, 1)
        assert device.add_zone() == 5
        start, _ = device.zone_append(5, 32)
        assert start == 0
        assert device.zone(5).state is ZoneState.FULL
        assert len(device.zones) == 6
        assert device.check_invariants() == []

    def test_stripe_refuses_without_stripes(self, make_device):
        """Test growth stops once fewer than Z stripes are available."""
        device = make_device("stripe")
        self._finish_every_zone(device)
        device.add_zone()
        device.zone_write(4, 0, 1)
        device.add_zone()
        device.zone_write(5, 0, 32)
        with pytest.raises(InsufficientAvailability):
            device.add_zone()
        assert len(device.zones) == 6

    @pytest.mark.parametrize("label", ["direct", "lazy"])
    def test_baseline_cannot_grow(self, make_device, label):
        """Test full-zone mappings with every physical zone bound refuse a new zone."""
        device = make_device(label)
        self._finish_every_zone(device)
        with pytest.raises(NoFreePhysicalZone):
            device.add_zone()
        assert len(device.zones) == 4

    @pytest.mark.parametrize("label", ["direct", "lazy"])
    def test_baseline_grows_onto_spare_zones(self, make_device, label):
        """Test spare physical zones back extra logical zones."""
        geometry = validate_geometry({"profile": "g-small", "blocks_per_lun": 12})
        device = make_device(label, geometry)
        self._finish_every_zone(device)
        assert device.add_zone() == 4
        device.zone_write(4, 0, 4)
        assert device.mapping.elements_of(4) == [4]
        assert device.check_invariants() == []

    def test_new_zone_is_empty_until_written(self, make_device):
        """Test growth claims nothing and records the new zone."""
        device = make_device("stripe")
        zone_id = device.add_zone()
        assert device.zone(zone_id).state is ZoneState.EMPTY
        assert not device.zone(zone_id).is_mapped
        assert device.flash.counts()[A.FREE] == 8
        assert device.trace.events[-1] == {"t": 0.0, "kind": "grow", "zone": 4}
