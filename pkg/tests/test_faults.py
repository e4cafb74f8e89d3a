import math

import pytest
from hypothesis import given, strategies as st

from edgechaos.errors import ConfirmationTimeout
from edgechaos.faults import (
    INTENSITY_LEVELS,
    ActivationWindow,
    FaultAction,
    FaultHandle,
    FaultMagnitude,
    FaultSpec,
    apply_fault,
    build_timeline,
    fault_spec_for,
    map_intensity,
    select_targets,
    target_count,
)

SERVICES = [f"svc-{i}" for i in range(1, 6)]


@pytest.mark.parametrize("intensity,delay", [(25, 100.0), (50, 400.0), (75, 700.0), (100, 1000.0)])
def test_delay_is_linear_between_anchors(intensity, delay):
    assert map_intensity("network-delay", intensity).delay_ms == delay


@pytest.mark.parametrize("intensity,mbps", [(25, 10.0), (50, 4.6416), (75, 2.1544), (100, 1.0)])
def test_bandwidth_is_log_linear(intensity, mbps):
    got = map_intensity(FaultAction.NETWORK_BANDWIDTH, intensity).bandwidth_mbps
    assert got == pytest.approx(mbps, abs=1e-3)


def test_bandwidth_anchors_are_exact():
    assert map_intensity("network-bandwidth", 25).bandwidth_mbps == 10.0
    assert map_intensity("network-bandwidth", 100).bandwidth_mbps == 1.0


def test_loss_and_cpu_mappings():
    assert [map_intensity("network-loss", i).drop_prob for i in INTENSITY_LEVELS] == [0.25, 0.5, 0.75, 1.0]
    assert [map_intensity("cpu-stress", i).cpu_factor for i in INTENSITY_LEVELS] == [1.75, 2.5, 3.25, 4.0]


@pytest.mark.parametrize("action", ["pod-kill", "container-kill", "node-kill", "network-partition"])
def test_scoped_faults_have_no_magnitude(action):
    assert map_intensity(action, 75) == FaultMagnitude()


def test_unsupported_intensity():
    with pytest.raises(ValueError, match="unsupported intensity 30"):
        map_intensity("network-delay", 30)


def test_unknown_action():
    with pytest.raises(ValueError):
        map_intensity("disk-fill", 25)


def test_magnitude_rejects_two_facets():
    with pytest.raises(ValueError, match="more than one facet"):
        FaultMagnitude(delay_ms=1.0, drop_prob=0.1)


@pytest.mark.parametrize("n,p,want", [(5, 75, 4), (5, 25, 2), (1, 25, 1), (4, 50, 2), (3, 100, 3), (10, 25, 3)])
def test_target_count(n, p, want):
    assert target_count(n, p) == want


def test_five_services_at_75_percent():
    picked = select_targets(SERVICES, "fixed-percent", 75, seed=9)
    assert len(picked) == 4
    assert set(picked) <= set(SERVICES)


@given(st.integers(1, 50), st.sampled_from(INTENSITY_LEVELS), st.integers(0, 2**32))
def test_targeting_law(n, p, seed):
    eligible = [f"e{i}" for i in range(n)]
    picked = select_targets(eligible, "fixed-percent", p, seed)
    assert len(picked) == math.ceil(p * n / 100)
    assert len(set(picked)) == len(picked)
    assert picked == select_targets(eligible, "fixed-percent", p, seed)


def test_select_targets_rejects_bad_input():
    with pytest.raises(ValueError, match="empty"):
        select_targets([], "fixed-percent", 50, 0)
    with pytest.raises(ValueError, match="mode"):
        select_targets(SERVICES, "random-max-percent", 50, 0)
    with pytest.raises(ValueError):
        select_targets(SERVICES, "fixed-percent", 0, 0)


def test_timeline_back_to_back_windows():
    spec = FaultSpec("network-delay", ("app",), FaultMagnitude(delay_ms=100.0))
    tl = build_timeline(spec, 10)
    assert list(tl) == [
        ActivationWindow(0, 3000),
        ActivationWindow(3000, 6000),
        ActivationWindow(6000, 9000),
        ActivationWindow(9000, 10000),
    ]


def test_timeline_with_gaps_and_overlap():
    gaps = FaultSpec("network-loss", ("app",), FaultMagnitude(drop_prob=1.0), duration_s=3, trigger_every_s=6)
    assert [(w.on_ms, w.off_ms) for w in build_timeline(gaps, 12)] == [(0, 3000), (6000, 9000)]
    lap = FaultSpec("network-loss", ("app",), FaultMagnitude(drop_prob=1.0), duration_s=5, trigger_every_s=3)
    assert lap.overlapping
    assert [(w.on_ms, w.off_ms) for w in build_timeline(lap, 7)] == [(0, 5000), (3000, 7000), (6000, 7000)]


def test_timeline_rejects_nonpositive_window():
    spec = FaultSpec("pod-kill", ("app",))
    with pytest.raises(ValueError):
        build_timeline(spec, 0)


def test_spec_validation():
    with pytest.raises(ValueError, match="non-empty"):
        FaultSpec("pod-kill", ())
    with pytest.raises(ValueError, match="does not fit"):
        FaultSpec("network-delay", ("app",), FaultMagnitude(drop_prob=0.5))


def test_spec_and_handle_round_trip():
    spec = fault_spec_for("network-bandwidth", 50, deployments=["app"], nodes=["cloud-1"], seed=3)
    assert FaultSpec.from_dict(spec.to_dict()) == spec
    h = FaultHandle("fault-0001", spec, 12.5)
    assert FaultHandle.from_dict(h.to_dict()) == h


def test_fault_spec_for_scopes():
    nodes = ["cloud-1", "cloud-2", "cloud-3", "cloud-4"]
    delay = fault_spec_for("network-delay", 75, deployments=SERVICES, nodes=nodes, seed=1)
    assert delay.targets == tuple(SERVICES) and delay.value == 100
    kill = fault_spec_for("pod-kill", 75, deployments=SERVICES, nodes=nodes, seed=1)
    assert len(kill.targets) == 4 and kill.value == 75
    part = fault_spec_for("network-partition", 50, deployments=SERVICES, nodes=nodes, seed=1)
    assert len(part.targets) == 2 and set(part.targets) <= set(nodes)


class _NeverConfirms:
    def __init__(self):
        self.t = 0.0

    def now_ms(self):
        return self.t

    def wait(self, ms):
        self.t += ms

    def apply_fault(self, spec):
        return FaultHandle("fault-x", spec, self.t)

    def active_fault_schedules(self):
        return []


def test_apply_fault_confirmation_timeout():
    b = _NeverConfirms()
    with pytest.raises(ConfirmationTimeout):
        apply_fault(b, FaultSpec("pod-kill", ("app",)), confirm_timeout_ms=2000, poll_ms=500)
    assert b.t == 2000


@pytest.mark.parametrize("n,p,want", [(8, 100, 8), (4, 25, 1)])
def test_full_and_exact_fraction_targeting(n, p, want):
    assert len(select_targets([f"pod-{i}" for i in range(n)], "fixed-percent", p, 0)) == want


def test_timeline_single_window_and_gapped():
    one = FaultSpec("pod-kill", ("app",), duration_s=12, trigger_every_s=12)
    assert [(w.on_ms, w.off_ms) for w in build_timeline(one, 12)] == [(0, 12000)]
    gapped = FaultSpec("pod-kill", ("app",), duration_s=2, trigger_every_s=5)
    assert [(w.on_ms, w.off_ms) for w in build_timeline(gapped, 12)] == [(0, 2000), (5000, 7000), (10000, 12000)]


def test_apply_on_sim_stamps_virtual_clock():
    from edgechaos.backend import ClusterProfile, ServiceTopology, SimCluster
    from edgechaos.errors import UnknownTargetError
    from edgechaos.faults import remove_fault

    sim = SimCluster(ClusterProfile(2), "cloud", ServiceTopology.monolith())
    sim.wait(1234)
    h = apply_fault(sim, FaultSpec("pod-kill", ("app",)))
    assert h.on_ts_ms == 1234
    remove_fault(sim, h)
    remove_fault(sim, h)
    assert sim.active_fault_schedules() == []
    with pytest.raises(UnknownTargetError, match="'checkout'"):
        apply_fault(sim, FaultSpec("pod-kill", ("checkout",)))
