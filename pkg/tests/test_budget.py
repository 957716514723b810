import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeids.budget import (
    DELTA_TAU_S,
    Constraints,
    EnergyAccumulator,
    LatencyBreakdown,
    Verdict,
    check_constraints,
    detect_energy_drain,
    integrate_energy,
    total_latency,
)
from edgeids.errors import InsufficientHistory, NegativeDuration


class TestLatency:
    def test_runtime_log_total(self):
        assert total_latency(0.12, 0.36, 0.84) == pytest.approx(1.32)

    def test_zero_components(self):
        assert total_latency(0.0, 0.0, 0.0) == 0.0

    def test_negative_component_rejected(self):
        with pytest.raises(NegativeDuration):
            LatencyBreakdown(0.1, -0.2, 0.3)

    @given(
        st.floats(min_value=0, max_value=10),
        st.floats(min_value=0, max_value=10),
        st.floats(min_value=0, max_value=10),
    )
    def test_sum_property(self, a, b, c):
        assert total_latency(a, b, c) == a + b + c


class TestEnergy:
    def test_constant_power(self):
        # 5 W held for 2 s = 10 J
        assert integrate_energy([5.0] * 200) == pytest.approx(10.0)

    def test_runtime_log_energy(self):
        trace = [23.9 / 1.32] * 132
        assert integrate_energy(trace) == pytest.approx(23.9)

    def test_empty_trace(self):
        assert integrate_energy([]) == 0.0

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            integrate_energy([1.0, -0.5])

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            integrate_energy([float("nan")])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(min_value=0, max_value=50), max_size=300))
    def test_riemann_sum_matches_numpy(self, trace):
        assert integrate_energy(trace) == pytest.approx(np.sum(trace) * DELTA_TAU_S)

    def test_constant_power_error_bound(self):
        # For constant power P over duration T (not a multiple of the step),
        # the discrete sum differs from P*T by at most one step's worth.
        p, duration = 7.3, 1.234
        n = round(duration / DELTA_TAU_S)
        energy = integrate_energy([p] * n)
        assert abs(energy - p * duration) <= p * DELTA_TAU_S


class TestEnergyAccumulator:
    def test_matches_batch_integration(self):
        acc = EnergyAccumulator()
        trace = [1.0, 2.5, 0.0, 4.0]
        acc.extend(trace)
        assert acc.total_j == pytest.approx(integrate_energy(trace))
        assert acc.samples == trace

    def test_concurrent_appends(self):
        acc = EnergyAccumulator()

        def feed():
            for _ in range(1000):
                acc.append(1.0)

        threads = [threading.Thread(target=feed) for _ in range(4)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert acc.total_j == pytest.approx(4000 * DELTA_TAU_S)


class TestConstraints:
    def test_exact_boundary_compliant(self):
        v = check_constraints(1.5, 100.0, 0.60)
        assert v.compliant and v.violations == ()

    def test_all_three_violated(self):
        v = check_constraints(1.500001, 100.01, 0.599)
        assert v.violations == ("latency", "energy", "confidence")
        assert not v.compliant

    def test_runtime_log_cycle_compliant(self):
        assert check_constraints(1.32, 23.9, 0.95).compliant

    def test_gamma_none_skips_confidence(self):
        assert check_constraints(0.1, 1.0, None).compliant

    def test_single_violations(self):
        assert check_constraints(2.0, 1.0, 0.9).violations == ("latency",)
        assert check_constraints(0.1, 101.0, 0.9).violations == ("energy",)
        assert check_constraints(0.1, 1.0, 0.1).violations == ("confidence",)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            check_constraints(-0.1, 1.0, 0.9)

    def test_invalid_constraint_bounds(self):
        with pytest.raises(ValueError):
            Constraints(t_max_s=0.0)
        with pytest.raises(ValueError):
            Constraints(gamma_min=0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(min_value=0, max_value=3),
        st.floats(min_value=0, max_value=200),
        st.floats(min_value=0, max_value=1),
    )
    def test_matches_reference_predicate(self, t, e, g):
        v = check_constraints(t, e, g)
        assert v.compliant == (t <= 1.5 and e <= 100.0 and g >= 0.60)


class TestEnergyDrain:
    def test_flat_history_flags_any_excess(self):
        history = [10.0] * 12
        assert detect_energy_drain(history, 10.0 + 1e-3)
        assert not detect_energy_drain(history, 10.0)

    def test_three_sigma_threshold(self):
        rng = np.random.default_rng(3)
        history = list(rng.normal(20.0, 2.0, size=50))
        mean, sd = np.mean(history), np.std(history)
        assert detect_energy_drain(history, mean + 3 * sd + 1e-9)
        assert not detect_energy_drain(history, mean + 3 * sd - 1e-9)

    def test_short_history_rejected(self):
        with pytest.raises(InsufficientHistory):
            detect_energy_drain([10.0] * 9, 50.0)

    def test_population_stddev_used(self):
        history = [1.0, 3.0] * 5  # mean 2, population sd 1
        assert detect_energy_drain(history, 5.0 + 1e-9)
        assert not detect_energy_drain(history, 5.0)
