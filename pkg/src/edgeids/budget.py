"""Per-cycle latency/energy accounting and operational constraint checks."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .errors import InsufficientHistory, NegativeDuration

DELTA_TAU_S = 0.010  # energy integration step


@dataclass(frozen=True)
class LatencyBreakdown:
    t_ids_s: float
    t_tx_s: float
    t_llm_s: float

    def __post_init__(self):
        if min(self.t_ids_s, self.t_tx_s, self.t_llm_s) < 0:
            raise NegativeDuration("latency components must be >= 0")

    @property
    def t_total_s(self) -> float:
        return self.t_ids_s + self.t_tx_s + self.t_llm_s


def total_latency(t_ids_s: float, t_tx_s: float, t_llm_s: float) -> float:
    """Exact sum of the three latency components."""
    return LatencyBreakdown(t_ids_s, t_tx_s, t_llm_s).t_total_s


def integrate_energy(power_trace: Sequence[float], delta_tau_s: float = DELTA_TAU_S) -> float:
    """Riemann sum of instantaneous power at the 10 ms step."""
    if any(not math.isfinite(p) or p < 0 for p in power_trace):
        raise ValueError("power samples must be finite and >= 0")
    return float(sum(power_trace)) * delta_tau_s


class EnergyAccumulator:
    """10 ms power integrator; one concurrent appender plus snapshot reads."""

    def __init__(self, delta_tau_s: float = DELTA_TAU_S):
        self.delta_tau_s = delta_tau_s
        self._samples: List[float] = []
        self._lock = threading.Lock()

    def append(self, power_w: float) -> None:
        if not math.isfinite(power_w) or power_w < 0:
            raise ValueError("power sample must be finite and >= 0")
        with self._lock:
            self._samples.append(power_w)

    def extend(self, trace: Sequence[float]) -> None:
        for p in trace:
            self.append(p)

    @property
    def samples(self) -> List[float]:
        with self._lock:
            return list(self._samples)

    @property
    def total_j(self) -> float:
        with self._lock:
            return float(sum(self._samples)) * self.delta_tau_s


@dataclass(frozen=True)
class Constraints:
    t_max_s: float = 1.5
    e_budget_j: float = 100.0
    gamma_min: float = 0.60

    def __post_init__(self):
        if self.t_max_s <= 0 or self.e_budget_j <= 0:
            raise ValueError("constraint bounds must be positive")
        if not 0.0 < self.gamma_min <= 1.0:
            raise ValueError("gamma_min must lie in (0,1]")


@dataclass(frozen=True)
class Verdict:
    violations: tuple  # names drawn from {"latency", "energy", "confidence"}

    @property
    def compliant(self) -> bool:
        return not self.violations


def check_constraints(
    t_total_s: float,
    e_total_j: float,
    gamma: Optional[float],
    c: Constraints = Constraints(),
) -> Verdict:
    """Inclusive bounds: latency <= t_max, energy <= budget, gamma >= floor.

    The confidence check is skipped when gamma is None (no reasoning call
    occurred in the cycle).
    """
    if t_total_s < 0 or e_total_j < 0:
        raise ValueError("inputs must be >= 0")
    violations = []
    if t_total_s > c.t_max_s:
        violations.append("latency")
    if e_total_j > c.e_budget_j:
        violations.append("energy")
    if gamma is not None and gamma < c.gamma_min:
        violations.append("confidence")
    return Verdict(tuple(violations))


def detect_energy_drain(
    history: Sequence[float], current: float, sigma_floor: float = 1e-6
) -> bool:
    """3-sigma rule over a trailing window of per-cycle joule totals."""
    if len(history) < 10:
        raise InsufficientHistory(f"need >= 10 cycles, got {len(history)}")
    n = len(history)
    mean = sum(history) / n
    var = sum((h - mean) ** 2 for h in history) / n
    stddev = max(math.sqrt(var), sigma_floor)
    return current > mean + 3.0 * stddev
