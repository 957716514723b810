"""TOML configuration loading; every default is the deployed constant."""

from __future__ import annotations

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib
from dataclasses import dataclass, field

from .budget import Constraints
from .llm_client import ProviderConfig
from .pipeline import PipelineConfig
from .prompt import ReasoningMode
from .telemetry import BaselineCapacity


@dataclass(frozen=True)
class AppConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    limiter_capacity: float = 5.0
    limiter_refill_per_s: float = 1.0
    power_idle_w: float = 2.0
    power_peak_w: float = 6.0


def load_config(path=None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    p = doc.get("pipeline", {})
    c = doc.get("constraints", {})
    t = doc.get("telemetry", {})
    pr = doc.get("provider", {})
    lim = doc.get("limiter", {})
    pw = doc.get("power_model", {})
    pipeline = PipelineConfig(
        tau_alert=p.get("tau_alert", 0.70),
        constraints=Constraints(
            t_max_s=c.get("t_max_s", 1.5),
            e_budget_j=c.get("e_budget_j", 100.0),
            gamma_min=c.get("gamma_min", 0.60),
        ),
        reasoning_mode=ReasoningMode(p.get("reasoning_mode", "zero_shot")),
        baseline=BaselineCapacity(tuple(t.get("baseline", (100, 2048, 50, 300, 1)))),
        node_name=p.get("node_name", "RPi-Gateway-01"),
        few_shot_k=p.get("few_shot_k", 3),
    )
    provider = ProviderConfig(
        provider_id=pr.get("provider_id", "mock"),
        endpoint=pr.get("endpoint", ""),
        api_key_env=pr.get("api_key_env", "EDGEIDS_API_KEY"),
        timeout_ms=pr.get("timeout_ms", 5000),
        max_retries=pr.get("max_retries", 1),
    )
    return AppConfig(
        pipeline=pipeline,
        provider=provider,
        limiter_capacity=lim.get("capacity", 5.0),
        limiter_refill_per_s=lim.get("refill_per_s", 1.0),
        power_idle_w=pw.get("idle_w", 2.0),
        power_peak_w=pw.get("peak_w", 6.0),
    )
