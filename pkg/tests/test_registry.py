import pytest
from hypothesis import given, strategies as st

from dialoghub.errors import DuplicateIdError, EmptyDomainsError, InvalidEndpointError, UnknownSystemError
from dialoghub.registry import (
    Health,
    HealthProber,
    ProbeResult,
    Registry,
    SystemDescriptor,
    health_for_failures,
)


def descriptor(system_id="sys-a", name="alpha", domains=("weather",), endpoint="http://localhost:9001"):
    return SystemDescriptor(
        system_id=system_id, name=name, endpoint=endpoint, domains=frozenset(domains)
    )


class TestRegister:
    def test_register_makes_system_selectable(self):
        registry = Registry()
        registry.register(descriptor(name="cmu-weather"))
        assert registry.equivalents("weather") == ["sys-a"]
        assert registry.health_of("sys-a") is Health.UP

    def test_duplicate_id_rejected(self):
        registry = Registry()
        registry.register(descriptor())
        with pytest.raises(DuplicateIdError):
            registry.register(descriptor())

    def test_empty_domains_rejected(self):
        registry = Registry()
        with pytest.raises(EmptyDomainsError):
            registry.register(descriptor(domains=()))

    @pytest.mark.parametrize("endpoint", ["not-a-url", "ftp://x/y", "http://", ""])
    def test_bad_endpoint_rejected(self, endpoint):
        registry = Registry()
        with pytest.raises(InvalidEndpointError):
            registry.register(descriptor(endpoint=endpoint))

    def test_registration_events_emitted(self):
        events = []
        registry = Registry(listener=lambda kind, payload: events.append((kind, payload)))
        registry.register(descriptor())
        assert events == [("SYSTEM_REGISTERED", registry.get("sys-a").to_dict())]


class TestProbes:
    def test_ok_probe_keeps_up(self):
        registry = Registry()
        registry.register(descriptor())
        assert registry.record_probe("sys-a", ProbeResult.OK) is Health.UP

    def test_three_consecutive_timeouts_reach_down(self):
        # enumerated transition table: UP -1-> DEGRADED -2-> DEGRADED -3-> DOWN
        registry = Registry()
        registry.register(descriptor())
        assert registry.record_probe("sys-a", ProbeResult.TIMEOUT) is Health.DEGRADED
        assert registry.record_probe("sys-a", ProbeResult.TIMEOUT) is Health.DEGRADED
        assert registry.record_probe("sys-a", ProbeResult.TIMEOUT) is Health.DOWN

    def test_ok_resets_from_down(self):
        registry = Registry()
        registry.register(descriptor())
        for _ in range(3):
            registry.record_probe("sys-a", ProbeResult.ERROR)
        assert registry.record_probe("sys-a", ProbeResult.OK) is Health.UP

    def test_unknown_system(self):
        with pytest.raises(UnknownSystemError):
            Registry().record_probe("ghost", ProbeResult.OK)

    def test_configurable_down_threshold(self):
        registry = Registry(down_after=1)
        registry.register(descriptor())
        assert registry.record_probe("sys-a", ProbeResult.ERROR) is Health.DOWN

    def test_health_changes_emitted_once_per_transition(self):
        events = []
        registry = Registry(listener=lambda kind, payload: events.append((kind, payload)))
        registry.register(descriptor())
        registry.record_probe("sys-a", ProbeResult.OK)  # UP -> UP: no event
        registry.record_probe("sys-a", ProbeResult.TIMEOUT)  # -> DEGRADED
        registry.record_probe("sys-a", ProbeResult.TIMEOUT)  # still DEGRADED: no event
        registry.record_probe("sys-a", ProbeResult.TIMEOUT)  # -> DOWN
        kinds = [e[0] for e in events]
        assert kinds == ["SYSTEM_REGISTERED", "HEALTH_CHANGED", "HEALTH_CHANGED"]
        assert [e[1]["health"] for e in events[1:]] == ["DEGRADED", "DOWN"]

    @given(st.lists(st.sampled_from(list(ProbeResult)), max_size=30))
    def test_health_is_pure_function_of_consecutive_failures(self, probes):
        registry = Registry()
        registry.register(descriptor())
        consecutive = 0
        for probe in probes:
            consecutive = 0 if probe is ProbeResult.OK else consecutive + 1
            assert registry.record_probe("sys-a", probe) is health_for_failures(consecutive)

    @given(st.lists(st.sampled_from(list(ProbeResult)), max_size=30))
    def test_replaying_probe_sequence_reproduces_state(self, probes):
        r1, r2 = Registry(), Registry()
        for registry in (r1, r2):
            registry.register(descriptor())
            for probe in probes:
                registry.record_probe("sys-a", probe)
        assert r1.health_of("sys-a") is r2.health_of("sys-a")


class TestEquivalents:
    def _registry(self):
        registry = Registry()
        registry.register(descriptor("rest-1", "cam-restaurant", domains=("restaurant",)))
        registry.register(descriptor("rest-2", "cmu-restaurant", domains=("restaurant",)))
        registry.register(descriptor("weather-1", "cmu-weather", domains=("weather",)))
        registry.register(descriptor("multi-1", "hybrid", domains=("weather", "chat")))
        return registry

    def test_exclude_leaves_the_other(self):
        registry = self._registry()
        assert registry.equivalents("restaurant", exclude="rest-1") == ["rest-2"]

    def test_unknown_domain_is_empty(self):
        assert self._registry().equivalents("finance") == []

    def test_down_systems_filtered(self):
        registry = self._registry()
        for _ in range(3):
            registry.record_probe("weather-1", ProbeResult.TIMEOUT)
        assert registry.equivalents("weather") == ["multi-1"]

    def test_degraded_systems_still_selectable(self):
        registry = self._registry()
        registry.record_probe("weather-1", ProbeResult.TIMEOUT)
        assert registry.equivalents("weather") == ["multi-1", "weather-1"]

    def test_deterministic_order_by_system_id(self):
        assert self._registry().equivalents("restaurant") == ["rest-1", "rest-2"]

    @given(
        domains=st.lists(
            st.frozensets(st.sampled_from(["a", "b", "c"]), min_size=1), min_size=1, max_size=8
        ),
        query=st.sampled_from(["a", "b", "c"]),
    )
    def test_equivalents_subset_of_declaring_systems(self, domains, query):
        registry = Registry()
        for i, ds in enumerate(domains):
            registry.register(descriptor(f"sys-{i}", f"name-{i}", domains=ds))
        # brute-force reference scan over everything registered
        expected = sorted(
            s.system_id for s in registry.all_systems() if query in s.domains
        )
        assert registry.equivalents(query) == expected


class TestProber:
    def test_probe_once_records_results(self):
        registry = Registry()
        registry.register(descriptor("sys-a"))
        registry.register(descriptor("sys-b", "beta"))
        results = {"sys-a": ProbeResult.OK, "sys-b": ProbeResult.ERROR}
        prober = HealthProber(registry, ping=lambda d: results[d.system_id])
        prober.probe_once()
        assert registry.health_of("sys-a") is Health.UP
        assert registry.health_of("sys-b") is Health.DEGRADED

    def test_background_loop_runs_and_stops(self):
        registry = Registry()
        registry.register(descriptor("sys-a"))
        prober = HealthProber(registry, ping=lambda d: ProbeResult.ERROR, interval_seconds=0.01)
        prober.start()
        import time

        deadline = time.monotonic() + 2
        while registry.health_of("sys-a") is not Health.DOWN and time.monotonic() < deadline:
            time.sleep(0.01)
        prober.stop()
        assert registry.health_of("sys-a") is Health.DOWN
