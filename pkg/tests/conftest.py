import numpy as np
import pytest

from edgeids.detection import ClassLabel
from edgeids.features import FeatureVector, FlowRecord, Protocol


def const_vector(value: float) -> FeatureVector:
    return FeatureVector((float(value),) * 12)


def vector(*values) -> FeatureVector:
    assert len(values) == 12
    return FeatureVector(tuple(float(v) for v in values))


def make_record(**overrides) -> FlowRecord:
    base = dict(
        session_id="s1",
        timestamp=1_750_000_000_000,
        duration=2.0,
        fwd_packet_count=10,
        bwd_packet_count=5,
        mean_packet_size=500.0,
        packet_size_variance=120.0,
        inter_arrival_mean=3.0,
        dst_port=22,
        src_port=40000,
        protocol=Protocol.TCP,
        tcp_flag_counts={"SYN": 4, "ACK": 10},
        distinct_dst_ports_in_window=2,
        failed_auth_count_in_window=0,
        label=None,
    )
    base.update(overrides)
    return FlowRecord(**base)


def blob_dataset(n_per_class=100, seed=0, separation=3.0):
    """Two Gaussian blobs at +/- separation in 12 dims."""
    rng = np.random.default_rng(seed)
    data = []
    for lbl, sign in ((ClassLabel.Benign, -1.0), (ClassLabel.DoS, 1.0)):
        for _ in range(n_per_class):
            v = rng.normal(sign * separation, 1.0, size=12)
            data.append((FeatureVector.from_array(v), lbl))
    return data


@pytest.fixture
def blobs():
    return blob_dataset()
