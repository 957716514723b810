"""Flow feature extraction and benign-baseline standardization.

Each flow record is projected onto a fixed 12-dimension vector.  The exact
per-dimension formulas are documented in FEATURE_FORMULAS below; rate-like
quantities are squashed with v/(1+v) so that empty records map to zeros and
entropy dimensions are Shannon entropies in bits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyDistribution, InsufficientData, RowParseError

N_FEATURES = 12

DIMENSION_NAMES = [
    "duration_norm_rate",
    "fwd_packets",
    "mean_pkt_size_kB",
    "bwd_bwd_ratio",
    "dst_port",
    "src_port_entropy_proxy",
    "inter_arrival_score",
    "flag_entropy",
    "connections_per_window",
    "distinct_ports",
    "variance_score",
    "protocol_diversity",
]

FEATURE_FORMULAS = {
    "duration_norm_rate": "duration / (1 + duration)",
    "fwd_packets": "forward packet count",
    "mean_pkt_size_kB": "mean packet size / 1000",
    "bwd_bwd_ratio": "bwd packets / (fwd + bwd packets), 0 when no packets",
    "dst_port": "destination port number",
    "src_port_entropy_proxy": "log2(1 + source port)",
    "inter_arrival_score": "inter-arrival mean / (1 + inter-arrival mean)",
    "flag_entropy": "Shannon entropy (bits) of TCP flag counts, 0 when empty",
    "connections_per_window": "fwd + bwd packet count observed in the window",
    "distinct_ports": "distinct destination ports in the window",
    "variance_score": "packet size variance / (1 + variance)",
    "protocol_diversity": "Shannon entropy (bits) of per-protocol packet "
    "counts in the window (0 for single-protocol windows)",
}


class Protocol(Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    OTHER = "OTHER"


@dataclass(frozen=True)
class FlowRecord:
    """One aggregated traffic window for a session."""

    session_id: str
    timestamp: int  # epoch milliseconds
    duration: float  # seconds
    fwd_packet_count: int
    bwd_packet_count: int
    mean_packet_size: float  # bytes
    packet_size_variance: float  # bytes^2
    inter_arrival_mean: float  # milliseconds
    dst_port: int
    src_port: int
    protocol: Protocol
    tcp_flag_counts: Mapping[str, int] = field(default_factory=dict)
    distinct_dst_ports_in_window: int = 0
    failed_auth_count_in_window: int = 0
    label: Optional[str] = None  # fine dataset label, training only

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.fwd_packet_count < 0 or self.bwd_packet_count < 0:
            raise ValueError("packet counts must be >= 0")
        if self.packet_size_variance < 0:
            raise ValueError("variance must be >= 0")
        for port in (self.dst_port, self.src_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-order 12-dimension feature vector."""

    values: tuple

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} values, got {len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("feature values must be finite")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @staticmethod
    def from_array(a) -> "FeatureVector":
        return FeatureVector(tuple(float(v) for v in a))


@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension benign-baseline mean/stddev (population formula)."""

    mean: tuple
    stddev: tuple
    sample_count: int
    sigma_floor: float = 1e-6

    def __post_init__(self):
        if self.sample_count < 2:
            raise ValueError("sample_count must be >= 2")
        if any(s < self.sigma_floor for s in self.stddev):
            raise ValueError("stddev entries must be >= sigma_floor")


def shannon_entropy(counts: Mapping[object, float]) -> float:
    """Entropy in bits of an empirical count distribution.

    Raises EmptyDistribution when no category has positive count.
    """
    positive = [c for c in counts.values() if c > 0]
    if any(c < 0 for c in counts.values()):
        raise ValueError("counts must be non-negative")
    if not positive:
        raise EmptyDistribution("all counts are zero")
    total = float(sum(positive))
    return -sum((c / total) * math.log2(c / total) for c in positive)


def _entropy_or_zero(counts: Mapping[object, float]) -> float:
    try:
        return shannon_entropy(counts)
    except EmptyDistribution:
        return 0.0


def extract_features(record: FlowRecord) -> FeatureVector:
    """Project a flow record onto the fixed 12-dimension vector."""
    total_packets = record.fwd_packet_count + record.bwd_packet_count
    bwd_ratio = record.bwd_packet_count / total_packets if total_packets else 0.0
    protocol_counts = {record.protocol.value: total_packets}
    values = (
        record.duration / (1.0 + record.duration),
        float(record.fwd_packet_count),
        record.mean_packet_size / 1000.0,
        bwd_ratio,
        float(record.dst_port),
        math.log2(1 + record.src_port),
        record.inter_arrival_mean / (1.0 + record.inter_arrival_mean),
        _entropy_or_zero(record.tcp_flag_counts),
        float(total_packets),
        float(record.distinct_dst_ports_in_window),
        record.packet_size_variance / (1.0 + record.packet_size_variance),
        _entropy_or_zero(protocol_counts),
    )
    return FeatureVector(values)


def fit_normalization(
    benign: Sequence[FeatureVector], sigma_floor: float = 1e-6
) -> NormalizationStats:
    """Fit per-dimension mean/stddev over a benign baseline (divisor T)."""
    if len(benign) < 2:
        raise InsufficientData(f"need >= 2 vectors, got {len(benign)}")
    data = np.stack([v.array for v in benign])
    mean = data.mean(axis=0)
    stddev = data.std(axis=0)  # population, divisor T
    stddev = np.maximum(stddev, sigma_floor)
    return NormalizationStats(
        mean=tuple(float(m) for m in mean),
        stddev=tuple(float(s) for s in stddev),
        sample_count=len(benign),
        sigma_floor=sigma_floor,
    )


def normalize(x: FeatureVector, stats: NormalizationStats) -> FeatureVector:
    """Element-wise (x - mean) / stddev."""
    z = (x.array - np.asarray(stats.mean)) / np.asarray(stats.stddev)
    return FeatureVector.from_array(z)


# CSV schema for training / replay input.  One FlowRecord per row.
CSV_COLUMNS = [
    "session_id",
    "timestamp",
    "duration",
    "fwd_packet_count",
    "bwd_packet_count",
    "mean_packet_size",
    "packet_size_variance",
    "inter_arrival_mean",
    "dst_port",
    "src_port",
    "protocol",
    "tcp_flag_counts",  # semicolon-separated FLAG:count pairs, may be empty
    "distinct_dst_ports_in_window",
    "failed_auth_count_in_window",
    "label",  # optional fine label
]


def _parse_flag_counts(text: str) -> dict:
    counts = {}
    if not text:
        return counts
    for pair in text.split(";"):
        flag, _, n = pair.partition(":")
        counts[flag.strip()] = int(n)
    return counts


def parse_flow_csv(path) -> list:
    """Parse a flow CSV into FlowRecords; bad rows raise with row number."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for i, row in enumerate(reader, start=2):  # 1-based incl. header
            try:
                records.append(
                    FlowRecord(
                        session_id=row["session_id"],
                        timestamp=int(row["timestamp"]),
                        duration=float(row["duration"]),
                        fwd_packet_count=int(row["fwd_packet_count"]),
                        bwd_packet_count=int(row["bwd_packet_count"]),
                        mean_packet_size=float(row["mean_packet_size"]),
                        packet_size_variance=float(row["packet_size_variance"]),
                        inter_arrival_mean=float(row["inter_arrival_mean"]),
                        dst_port=int(row["dst_port"]),
                        src_port=int(row["src_port"]),
                        protocol=Protocol(row["protocol"].strip().upper()),
                        tcp_flag_counts=_parse_flag_counts(row.get("tcp_flag_counts", "")),
                        distinct_dst_ports_in_window=int(
                            row.get("distinct_dst_ports_in_window", 0) or 0
                        ),
                        failed_auth_count_in_window=int(
                            row.get("failed_auth_count_in_window", 0) or 0
                        ),
                        label=row.get("label") or None,
                    )
                )
            except (KeyError, ValueError) as exc:
                raise RowParseError(i, str(exc)) from exc
    return records
