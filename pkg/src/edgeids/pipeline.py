"""Per-window orchestration: classify, gate, reason, enforce, log.

The reasoning path runs if and only if the aggregated anomaly score
reaches tau_alert.  Reasoning failures never drop an alert: the record
falls back to the ML consensus label at severity Warning.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

from . import budget as budget_mod
from .budget import Constraints, LatencyBreakdown, Verdict, check_constraints, integrate_energy
from .detection import (
    ClassifierModel,
    ClassLabel,
    aggregate_scores,
    consensus_count,
    predict,
)
from .errors import (
    IntegrityMismatch,
    MalformedResponse,
    ProviderTimeout,
    RateLimited,
    SinkUnavailable,
)
from .features import FeatureVector, FlowRecord, NormalizationStats, extract_features, normalize
from .llm_client import (
    GateResult,
    LlmResponse,
    MitigationAction,
    Severity,
    TokenBucket,
    submit,
    validate_response,
)
from .prompt import (
    Prompt,
    PromptMemory,
    ReasoningMode,
    encode_prompt,
    lookup_context,
    retrieve_similar,
)
from .telemetry import (
    BaselineCapacity,
    MetricsSource,
    NormalizedTelemetry,
    TelemetrySnapshot,
    capture,
    normalize_telemetry,
)


@dataclass(frozen=True)
class PipelineConfig:
    tau_alert: float = 0.70
    constraints: Constraints = field(default_factory=Constraints)
    reasoning_mode: ReasoningMode = ReasoningMode.ZeroShot
    baseline: BaselineCapacity = field(default_factory=BaselineCapacity)
    node_name: str = "RPi-Gateway-01"
    few_shot_k: int = 3
    mitigation_sink: str = "log"

    def __post_init__(self):
        if not 0.0 < self.tau_alert < 1.0:
            raise ValueError("tau_alert must lie in (0,1)")


@dataclass(frozen=True)
class BenignLogged:
    session_id: str
    timestamp: int
    anomaly_score: float
    label: ClassLabel


@dataclass(frozen=True)
class AlertRecord:
    session_id: str
    timestamp: int
    feature_vector: FeatureVector
    model_results: Tuple[Tuple[str, ClassLabel, float], ...]  # (name, label, s_t)
    consensus: int
    consensus_label: ClassLabel
    anomaly_score: float
    snapshot: TelemetrySnapshot
    normalized_telemetry: NormalizedTelemetry
    context_text: str
    prompt_digest: str
    prompt_byte_len: int
    reasoning_mode: ReasoningMode
    provider_name: str
    llm_response: Optional[LlmResponse]
    rejection_reason: Optional[str]
    degraded: bool
    final_label: ClassLabel
    final_confidence: float
    final_severity: Severity
    final_mitigations: Tuple[MitigationAction, ...]
    final_mitigation_texts: Tuple[str, ...]
    latency: LatencyBreakdown
    energy_j: float
    verdict: Verdict
    dispatched: int
    energy_drain: Optional[bool]

    @property
    def alert_id(self) -> str:
        return f"{self.session_id}:{self.timestamp}"


class LogMitigationSink:
    """Default sink: records serialized actions, idempotent per alert."""

    def __init__(self):
        self.emitted: List[Tuple[str, str]] = []
        self._seen = set()

    def emit(self, alert_id: str, action: MitigationAction) -> bool:
        key = (alert_id, action.kind.value, action.argument)
        if key in self._seen:
            return False
        self._seen.add(key)
        self.emitted.append((alert_id, json.dumps(
            {"kind": action.kind.value, "argument": action.argument}
        )))
        return True


def dispatch_mitigations(alert_id: str, actions: Sequence[MitigationAction], sink) -> int:
    """Serialize actions to the sink in order; returns new emissions."""
    count = 0
    for action in actions:
        if sink.emit(alert_id, action):
            count += 1
    return count


class Pipeline:
    """One worker processing a traffic source window by window."""

    def __init__(
        self,
        models: Sequence[ClassifierModel],
        stats: Optional[NormalizationStats],
        metrics_source: MetricsSource,
        provider,
        config: PipelineConfig = PipelineConfig(),
        limiter: Optional[TokenBucket] = None,
        timing_script: Optional[Iterable[Tuple[float, float]]] = None,
        mitigation_sink=None,
        event_sink: Optional[Callable[[dict], None]] = None,
    ):
        if not models:
            raise ValueError("at least one model is required")
        self.models = list(models)
        self.stats = stats
        self.metrics_source = metrics_source
        self.provider = provider
        self.config = config
        self.limiter = limiter
        self._timing: Optional[Iterator[Tuple[float, float]]] = (
            iter(timing_script) if timing_script is not None else None
        )
        self.mitigation_sink = mitigation_sink or LogMitigationSink()
        self.event_sink = event_sink
        self.memory = PromptMemory()
        self.energy_history: List[float] = []
        self.benign_log: List[BenignLogged] = []
        self.alerts: List[AlertRecord] = []

    # -- stages ------------------------------------------------------------

    def _classify(self, x: FeatureVector):
        z = normalize(x, self.stats) if self.stats is not None else x
        predictions = [(m.name, predict(m, z)) for m in self.models]
        scores = [p.anomaly_score for _, p in predictions]
        labels = [p.label for _, p in predictions]
        s_agg = aggregate_scores(scores)
        consensus, modal = consensus_count(labels)
        return predictions, s_agg, consensus, modal

    def _cycle_timing(self, t_ids_measured: float) -> Tuple[float, float]:
        if self._timing is not None:
            try:
                return next(self._timing)
            except StopIteration:
                self._timing = None
        return (t_ids_measured, 0.0)

    def _build_prompt(self, m_norm: NormalizedTelemetry, ctx) -> Prompt:
        mode = self.config.reasoning_mode
        exemplars: List[Prompt] = []
        if mode is ReasoningMode.FewShot and len(self.memory):
            query = encode_prompt(m_norm, ctx, ReasoningMode.ZeroShot)
            exemplars = retrieve_similar(self.memory, query, self.config.few_shot_k)
        return encode_prompt(m_norm, ctx, mode, exemplars)

    # -- entry points ------------------------------------------------------

    def process_window(self, record: FlowRecord):
        return self.process_vector(
            record.session_id, record.timestamp, extract_features(record)
        )

    def process_vector(self, session_id: str, timestamp: int, x: FeatureVector):
        """Run one detection cycle on a pre-extracted feature vector."""
        t0 = time.perf_counter()
        predictions, s_agg, consensus, modal = self._classify(x)
        t_ids_measured = time.perf_counter() - t0

        if s_agg < self.config.tau_alert:
            entry = BenignLogged(session_id, timestamp, s_agg, modal)
            self.benign_log.append(entry)
            self._emit_event(
                {
                    "event": "benign",
                    "session_id": session_id,
                    "timestamp": timestamp,
                    "s_t": s_agg,
                }
            )
            return entry

        # the snapshot carries the reported (2-decimal) score; thresholding
        # above used the unrounded aggregate
        snapshot = capture(self.metrics_source, round(s_agg, 2), timestamp=timestamp)
        m_norm = normalize_telemetry(snapshot, self.config.baseline)
        context_label = modal if modal is not ClassLabel.Benign else ClassLabel.Other
        ctx = lookup_context(context_label)
        prompt = self._build_prompt(m_norm, ctx)

        response: Optional[LlmResponse] = None
        rejection: Optional[str] = None
        degraded = False
        try:
            response = submit(prompt, self.provider, self.limiter)
        except (RateLimited, IntegrityMismatch, ProviderTimeout, MalformedResponse) as exc:
            degraded = True
            rejection = f"llm_unavailable: {type(exc).__name__}"

        gate: Optional[GateResult] = None
        if response is not None:
            gate = validate_response(response, self.config.constraints.gamma_min)
            if not gate.accepted:
                rejection = f"Rejected ({gate.reason})"

        if response is not None and gate is not None and gate.accepted:
            final_label = response.revised_label
            final_confidence = response.confidence
            final_severity = response.severity
            final_mitigations = response.mitigations
            final_texts = response.raw_mitigation_texts
        else:
            final_label = modal
            final_confidence = s_agg
            final_severity = Severity.Warning
            final_mitigations = ()
            final_texts = ()

        t_ids, t_tx = self._cycle_timing(t_ids_measured)
        t_llm = response.elapsed_s if response is not None else 0.0
        latency = LatencyBreakdown(t_ids, t_tx, t_llm)
        power_trace = self.metrics_source.power_trace(latency.t_total_s)
        energy_j = integrate_energy(power_trace)

        gamma = response.confidence if response is not None else None
        verdict = check_constraints(
            latency.t_total_s, energy_j, gamma, self.config.constraints
        )

        drain: Optional[bool] = None
        if len(self.energy_history) >= 10:
            drain = budget_mod.detect_energy_drain(self.energy_history, energy_j)
        self.energy_history.append(energy_j)

        record = AlertRecord(
            session_id=session_id,
            timestamp=timestamp,
            feature_vector=x,
            model_results=tuple(
                (name, p.label, p.anomaly_score) for name, p in predictions
            ),
            consensus=consensus,
            consensus_label=modal,
            anomaly_score=s_agg,
            snapshot=snapshot,
            normalized_telemetry=m_norm,
            context_text=ctx.description,
            prompt_digest=prompt.digest,
            prompt_byte_len=prompt.byte_len,
            reasoning_mode=prompt.mode,
            provider_name=getattr(self.provider, "provider_name", "unknown"),
            llm_response=response,
            rejection_reason=rejection,
            degraded=degraded,
            final_label=final_label,
            final_confidence=final_confidence,
            final_severity=final_severity,
            final_mitigations=final_mitigations,
            final_mitigation_texts=final_texts,
            latency=latency,
            energy_j=energy_j,
            verdict=verdict,
            dispatched=0,
            energy_drain=drain,
        )
        dispatched = 0
        if final_mitigations:
            try:
                dispatched = dispatch_mitigations(
                    record.alert_id, final_mitigations, self.mitigation_sink
                )
            except SinkUnavailable:
                dispatched = 0  # actions stay on the record
        record = AlertRecord(**{**record.__dict__, "dispatched": dispatched})

        self.memory.add(prompt, timestamp)
        self.alerts.append(record)
        self._emit_event(_alert_event(record))
        return record

    def _emit_event(self, event: dict) -> None:
        if self.event_sink is not None:
            self.event_sink(event)


def _alert_event(rec: AlertRecord) -> dict:
    return {
        "event": "alert",
        "session_id": rec.session_id,
        "timestamp": rec.timestamp,
        "s_t": rec.anomaly_score,
        "consensus": rec.consensus,
        "final_label": rec.final_label.display,
        "final_confidence": rec.final_confidence,
        "severity": rec.final_severity.value,
        "mitigations": list(rec.final_mitigation_texts),
        "prompt_digest": rec.prompt_digest,
        "latency_s": rec.latency.t_total_s,
        "energy_j": rec.energy_j,
        "violations": list(rec.verdict.violations),
        "degraded": rec.degraded,
        "rejection": rec.rejection_reason,
    }


# ---------------------------------------------------------------------------
# Human-readable rendering (mirrors the gateway console layout)
# ---------------------------------------------------------------------------

_RULE = "=" * 66


def _fmt_num(v: float) -> str:
    return f"{v:g}"


def _fmt_vector(values) -> str:
    return "[" + ", ".join(_fmt_num(v) for v in values) + "]"


def _join_phrases(phrases: Sequence[str]) -> str:
    if not phrases:
        return "none"
    if len(phrases) == 1:
        return phrases[0]
    if len(phrases) == 2:
        return f"{phrases[0]} and {phrases[1]}"
    return ", ".join(phrases[:-1]) + ", and " + phrases[-1]


def render_benign(entry: BenignLogged, tau_alert: float = 0.70) -> str:
    return (
        f"-> Benign traffic window [session_id: {entry.session_id}] | "
        f"s_t = {entry.anomaly_score:.2f} < tau_alert = {tau_alert:.2f}"
    )


def render_log(rec: AlertRecord, tau_alert: float = 0.70) -> str:
    """Full console block for one alert; stable for identical records."""
    ts = datetime.fromtimestamp(rec.timestamp / 1000.0, tz=timezone.utc)
    lines = [
        f"[Edge Node: RPi-Gateway-01]  Timestamp: {ts.strftime('%Y-%m-%d %H:%M:%S')}",
        _RULE,
        f"-> New traffic window detected [session_id: {rec.session_id}]",
        "-> Feature vector extracted:",
        f"   x_t = {_fmt_vector(rec.feature_vector.values)}",
        "",
        "-> Running predictions across ML-based IDS models...",
        "",
    ]
    for name, label, score in rec.model_results:
        lines.append(f"[*] {name:<27}-> Label: {label.display:<14}| Score: {score:.2f}")
    lines.extend(
        [
            "",
            f"-> Consensus: {rec.consensus}/{len(rec.model_results)} models classify as "
            f'"{rec.consensus_label.display}"',
            f"-> Aggregated anomaly score s_t = {rec.anomaly_score:.2f} >= "
            f"tau_alert = {tau_alert:.2f} -> ALERT triggered",
            "",
            "-> System metrics captured:",
            f"   CPU = {_fmt_num(rec.snapshot.cpu_percent)}%, "
            f"Memory = {_fmt_num(rec.snapshot.memory_mb)} MB, "
            f"Latency = {_fmt_num(rec.snapshot.latency_ms)} ms, "
            f"Energy = {_fmt_num(rec.snapshot.energy_j)} J",
            "   Normalized telemetry vector:",
            "   m_t = ["
            + ", ".join(f"{v:.3f}" for v in rec.normalized_telemetry.values)
            + "]",
            "",
            f'-> Retrieved context for class "{rec.consensus_label.display}":',
            f'   "{rec.context_text}"',
            "",
            "-> Constructing LLM prompt with telemetry and context...",
            f"-> Sending prompt to external LLM: {rec.provider_name}",
            "",
        ]
    )
    if rec.llm_response is not None:
        resp = rec.llm_response
        body = {
            "revised_label": resp.revised_label.display,
            "confidence": resp.confidence,
            "severity": resp.severity.value,
            "mitigation": list(resp.raw_mitigation_texts),
        }
        lines.append(f"=> LLM Response [elapsed: {resp.elapsed_s:.2f} sec]")
        lines.append(json.dumps(body, indent=2))
        lines.append("")
    if rec.rejection_reason is not None:
        lines.append(f"-> {rec.rejection_reason}")
        lines.append("")
    lines.extend(
        [
            "-> Final enriched classification:",
            f"   - Class      : {rec.final_label.display}",
            f"   - Confidence : {_fmt_num(rec.final_confidence * 100)}%",
            f"   - Severity   : {rec.final_severity.value}",
            f"   - Mitigation : "
            f"{_join_phrases([a.short_phrase for a in rec.final_mitigations])}",
            "",
            f"-> Total round-trip latency: {rec.latency.t_total_s:.2f} s",
            f"-> Total energy consumption: {rec.energy_j:.1f} J",
        ]
    )
    if rec.dispatched:
        lines.append("-> Mitigation instructions have been dispatched to the local firewall.")
    else:
        lines.append("-> No mitigation instructions dispatched.")
    lines.append(_RULE)
    return "\n".join(lines)
