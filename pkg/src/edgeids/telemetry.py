"""System telemetry snapshots and unit-hypercube normalization."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

from .errors import SamplerUnavailable, ValueOutOfRange

DEFAULT_BASELINE = (100.0, 2048.0, 50.0, 300.0, 1.0)


@dataclass(frozen=True)
class TelemetrySnapshot:
    cpu_percent: float
    memory_mb: float
    latency_ms: float
    energy_j: float
    anomaly_score: float
    timestamp: int  # epoch ms

    def __post_init__(self):
        values = (
            self.cpu_percent,
            self.memory_mb,
            self.latency_ms,
            self.energy_j,
            self.anomaly_score,
        )
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise ValueOutOfRange("telemetry values must be finite and >= 0")
        if self.cpu_percent > 100:
            raise ValueOutOfRange(f"cpu_percent {self.cpu_percent} > 100")
        if self.anomaly_score > 1:
            raise ValueOutOfRange(f"anomaly_score {self.anomaly_score} > 1")

    @property
    def vector(self) -> Tuple[float, ...]:
        return (
            self.cpu_percent,
            self.memory_mb,
            self.latency_ms,
            self.energy_j,
            self.anomaly_score,
        )


@dataclass(frozen=True)
class BaselineCapacity:
    values: Tuple[float, ...] = DEFAULT_BASELINE

    def __post_init__(self):
        if len(self.values) != 5 or any(v <= 0 for v in self.values):
            raise ValueError("baseline must be 5 strictly positive entries")


@dataclass(frozen=True)
class NormalizedTelemetry:
    values: Tuple[float, ...]  # [cpu, mem, latency, energy, score], each in [0,1]
    saturated_flags: Tuple[bool, ...]

    def __post_init__(self):
        if len(self.values) != 5 or len(self.saturated_flags) != 5:
            raise ValueError("expected 5 entries")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("normalized entries must lie in [0,1]")


def normalize_telemetry(
    m: TelemetrySnapshot, baseline: BaselineCapacity = BaselineCapacity()
) -> NormalizedTelemetry:
    """Element-wise raw/baseline, clamped to 1.0 with a saturation flag."""
    values = []
    flags = []
    for raw, cap in zip(m.vector, baseline.values):
        ratio = raw / cap
        flags.append(ratio > 1.0)
        values.append(min(ratio, 1.0))
    return NormalizedTelemetry(tuple(values), tuple(flags))


class MetricsSource(Protocol):
    """Metric sampler: one writer (the sampler) plus many readers."""

    def read(self) -> Tuple[float, float, float, float]:
        """Current (cpu_percent, memory_mb, latency_ms, energy_j)."""
        ...

    def power_trace(self, duration_s: float) -> List[float]:
        """Instantaneous power samples (watts) covering duration_s at 10 ms."""
        ...


class ScriptedMetricsSource:
    """Deterministic sampler driven by a JSON timeline.

    Timeline entries: {"cpu": .., "memory_mb": .., "latency_ms": ..,
    "energy_j": .., "power_w": ..}.  Each read() consumes the next entry;
    the final entry repeats once the timeline is exhausted.
    """

    def __init__(self, timeline: Sequence[dict]):
        if not timeline:
            raise SamplerUnavailable("empty timeline")
        self._timeline = list(timeline)
        self._i = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ScriptedMetricsSource":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _current(self) -> dict:
        with self._lock:
            entry = self._timeline[min(self._i, len(self._timeline) - 1)]
            self._i += 1
            return entry

    def read(self):
        e = self._current()
        return (e["cpu"], e["memory_mb"], e["latency_ms"], e["energy_j"])

    def power_trace(self, duration_s: float) -> List[float]:
        with self._lock:
            i = max(0, min(self._i - 1, len(self._timeline) - 1))
            power = self._timeline[i].get("power_w", 0.0)
        n = int(round(duration_s / 0.010))
        return [power] * n


class HostMetricsSource:
    """psutil-backed sampler with a CPU-proportional power estimate.

    power_watts = idle_w + cpu_fraction * (peak_w - idle_w); coefficients
    come from config since no watt-meter is assumed.
    """

    def __init__(self, idle_w: float = 2.0, peak_w: float = 6.0):
        try:
            import psutil
        except ImportError as exc:  # pragma: no cover
            raise SamplerUnavailable("psutil not available") from exc
        self._psutil = psutil
        self.idle_w = idle_w
        self.peak_w = peak_w
        self._energy_j = 0.0

    def read(self):
        p = self._psutil
        cpu = p.cpu_percent(interval=None)
        mem_mb = p.Process().memory_info().rss / (1024 * 1024)
        # latency proxy: time to take one scheduling round-trip
        import time

        t0 = time.perf_counter()
        time.sleep(0)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        return (cpu, mem_mb, latency_ms, self._energy_j)

    def power_trace(self, duration_s: float) -> List[float]:
        cpu = self._psutil.cpu_percent(interval=None) / 100.0
        watts = self.idle_w + cpu * (self.peak_w - self.idle_w)
        n = int(round(duration_s / 0.010))
        trace = [watts] * n
        self._energy_j += sum(trace) * 0.010
        return trace


def capture(
    sampler: MetricsSource, s_t: float, timestamp: Optional[int] = None
) -> TelemetrySnapshot:
    """Snapshot current metrics together with the anomaly score."""
    if sampler is None:
        raise SamplerUnavailable("no sampler configured")
    cpu, mem, lat, energy = sampler.read()
    if timestamp is None:
        import time

        timestamp = int(time.time() * 1000)
    return TelemetrySnapshot(
        cpu_percent=cpu,
        memory_mb=mem,
        latency_ms=lat,
        energy_j=energy,
        anomaly_score=s_t,
        timestamp=timestamp,
    )
