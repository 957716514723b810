"""Remote reasoning client: rate limiting, integrity check, response parsing.

Providers must echo the submitted prompt; the client recomputes the
SHA-256 digest over the echoed copy and discards the result on mismatch.
A deterministic mock provider stands in for commercial LLM endpoints.
"""

from __future__ import annotations

import ipaddress
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .detection import ClassLabel, label_from_text
from .errors import (
    IntegrityMismatch,
    MalformedResponse,
    ProviderTimeout,
    RateLimited,
)
from .prompt import Prompt, ReasoningMode, sha256_hex


class Severity(Enum):
    Normal = "Normal"
    Warning = "Warning"
    Critical = "Critical"


class ActionKind(Enum):
    BlockIp = "BlockIp"
    RateLimitAuth = "RateLimitAuth"
    EnforceMfa = "EnforceMfa"
    SynCookies = "SynCookies"
    WafRateLimit = "WafRateLimit"
    Blackhole = "Blackhole"
    FirewallRule = "FirewallRule"
    FreeText = "FreeText"


@dataclass(frozen=True)
class MitigationAction:
    kind: ActionKind
    argument: Optional[str] = None  # address or rule/free text

    def __post_init__(self):
        if self.kind in (ActionKind.BlockIp, ActionKind.Blackhole) and self.argument:
            ipaddress.ip_address(self.argument)  # raises on invalid address

    @property
    def short_phrase(self) -> str:
        return _SHORT_PHRASES.get(self.kind, self.argument or self.kind.value)


_SHORT_PHRASES = {
    ActionKind.BlockIp: "IP block",
    ActionKind.RateLimitAuth: "login throttling",
    ActionKind.EnforceMfa: "enforce multi-factor authentication",
    ActionKind.SynCookies: "SYN cookies",
    ActionKind.WafRateLimit: "WAF rate limiting",
    ActionKind.Blackhole: "blackhole routing",
    ActionKind.FirewallRule: "firewall rule",
}

# Known mitigation phrasings, matched case-insensitively by keyword.
_ACTION_PATTERNS: List[Tuple[str, ActionKind]] = [
    (r"block.*ip|ip.*block", ActionKind.BlockIp),
    (r"rate limit.*auth|rate limiting on auth|login throttl", ActionKind.RateLimitAuth),
    (r"multi-?factor", ActionKind.EnforceMfa),
    (r"syn cookie", ActionKind.SynCookies),
    (r"waf", ActionKind.WafRateLimit),
    (r"blackhole", ActionKind.Blackhole),
    (r"firewall rule", ActionKind.FirewallRule),
]


def action_from_text(text: str) -> MitigationAction:
    lowered = text.lower()
    for pattern, kind in _ACTION_PATTERNS:
        if re.search(pattern, lowered):
            return MitigationAction(kind=kind)
    return MitigationAction(kind=ActionKind.FreeText, argument=text)


@dataclass(frozen=True)
class LlmResponse:
    revised_label: ClassLabel
    confidence: float
    severity: Severity
    mitigations: Tuple[MitigationAction, ...]
    raw_mitigation_texts: Tuple[str, ...] = ()
    elapsed_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0,1]")
        if self.elapsed_s < 0:
            raise ValueError("elapsed_s must be >= 0")


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str = "mock"
    endpoint: str = ""
    api_key_env: str = "EDGEIDS_API_KEY"
    timeout_ms: int = 5000
    max_retries: int = 1

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")


class TokenBucket:
    """Thread-safe token bucket; capacity 5, refill 1/s by default."""

    def __init__(self, capacity: float = 5.0, refill_per_s: float = 1.0, clock=time.monotonic):
        self.capacity = capacity
        self.refill_per_s = refill_per_s
        self._clock = clock
        self._tokens = capacity
        self._last = clock()
        self._lock = threading.Lock()

    def try_acquire(self, tokens: float = 1.0) -> bool:
        with self._lock:
            now = self._clock()
            self._tokens = min(
                self.capacity, self._tokens + (now - self._last) * self.refill_per_s
            )
            self._last = now
            if self._tokens >= tokens:
                self._tokens -= tokens
                return True
            return False

    @property
    def tokens(self) -> float:
        with self._lock:
            return self._tokens


# ---------------------------------------------------------------------------
# Response parsing and confidence gating
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = {"revised_label", "confidence", "severity", "mitigation"}


def parse_response(body: str, elapsed_s: float = 0.0) -> LlmResponse:
    """Parse the strict four-key JSON response body."""
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedResponse("<body>", f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedResponse("<body>", "response is not a JSON object")
    missing = _REQUIRED_KEYS - obj.keys()
    if missing:
        raise MalformedResponse(sorted(missing)[0])
    extra = obj.keys() - _REQUIRED_KEYS
    if extra:
        raise MalformedResponse(sorted(extra)[0], "unexpected field")

    label = label_from_text(str(obj["revised_label"]))
    if label is None:
        raise MalformedResponse("revised_label", f"unknown label: {obj['revised_label']}")

    confidence = obj["confidence"]
    if not isinstance(confidence, (int, float)) or not 0.0 <= confidence <= 1.0:
        raise MalformedResponse("confidence", f"confidence out of [0,1]: {confidence}")

    severity_text = obj["severity"]
    try:
        severity = Severity(severity_text)  # case-sensitive exact match
    except ValueError as exc:
        raise MalformedResponse("severity", f"unknown severity: {severity_text}") from exc

    raw_mitigations = obj["mitigation"]
    if not isinstance(raw_mitigations, list) or not all(
        isinstance(m, str) for m in raw_mitigations
    ):
        raise MalformedResponse("mitigation", "mitigation must be a list of strings")
    if severity is not Severity.Normal and not raw_mitigations:
        raise MalformedResponse("mitigation", "non-Normal severity requires mitigations")
    actions = tuple(action_from_text(m) for m in raw_mitigations)
    return LlmResponse(
        revised_label=label,
        confidence=float(confidence),
        severity=severity,
        mitigations=actions,
        raw_mitigation_texts=tuple(raw_mitigations),
        elapsed_s=elapsed_s,
    )


@dataclass(frozen=True)
class GateResult:
    accepted: bool
    confidence: float
    reason: Optional[str] = None


def validate_response(resp: LlmResponse, gamma_min: float = 0.60) -> GateResult:
    """Accept iff confidence >= gamma_min (inclusive)."""
    if resp.confidence >= gamma_min:
        return GateResult(accepted=True, confidence=resp.confidence)
    return GateResult(
        accepted=False,
        confidence=resp.confidence,
        reason=f"confidence {resp.confidence:.2f} < {gamma_min:.2f}",
    )


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

_CONTEXT_LABEL_RE = re.compile(r"^Context \[([^\]]+)\]", re.MULTILINE)

_MOCK_RESPONSES: Dict[ClassLabel, dict] = {
    ClassLabel.BruteForce: {
        "revised_label": "brute force",
        "confidence": 0.95,
        "severity": "Critical",
        "mitigation": [
            "Block the offending IP address",
            "Apply rate limiting on authentication endpoints",
            "Enforce multi-factor authentication.",
        ],
    },
    ClassLabel.DoS: {
        "revised_label": "DoS",
        "confidence": 0.93,
        "severity": "Critical",
        "mitigation": ["Enable SYN cookies", "Apply WAF rate limiting"],
    },
    ClassLabel.DDoS: {
        "revised_label": "DDoS",
        "confidence": 0.94,
        "severity": "Critical",
        "mitigation": ["Blackhole the offending source range", "Apply WAF rate limiting"],
    },
    ClassLabel.PortScan: {
        "revised_label": "port scan",
        "confidence": 0.90,
        "severity": "Warning",
        "mitigation": ["Block the offending IP address"],
    },
    ClassLabel.Other: {
        "revised_label": "other",
        "confidence": 0.75,
        "severity": "Warning",
        "mitigation": ["Review firewall rules for the affected segment"],
    },
}


class MockProvider:
    """Deterministic offline provider; response depends only on the
    attack label named in the context block (falling back to Other).

    ``elapsed_script`` replays per-call reasoning times; the final entry
    repeats.  ``response_script`` overrides bodies call-by-call when a
    scenario needs scripted corrections.
    """

    provider_name = "Mock LLM"

    def __init__(self, elapsed_script=(0.0,), response_script=None):
        self.elapsed_script = list(elapsed_script) or [0.0]
        self.response_script = list(response_script) if response_script else None
        self.call_count = 0

    def send(self, rendered: str, digest: str, mode: ReasoningMode) -> dict:
        i = self.call_count
        self.call_count += 1
        elapsed = self.elapsed_script[min(i, len(self.elapsed_script) - 1)]
        if self.response_script is not None:
            body = self.response_script[min(i, len(self.response_script) - 1)]
        else:
            match = _CONTEXT_LABEL_RE.search(rendered)
            label = label_from_text(match.group(1)) if match else None
            if label is None or label is ClassLabel.Benign:
                label = ClassLabel.Other
            body = _MOCK_RESPONSES[label]
        return {
            "echo": rendered,
            "echo_digest": digest,
            "elapsed_s": elapsed,
            "body": json.dumps(body, sort_keys=True),
        }


class HttpProvider:
    """Generic JSON-over-HTTPS provider.

    POST body: {"prompt", "digest", "mode"}; expected reply:
    {"echo", "echo_digest", "body"} where body is the four-key response
    JSON (either embedded object or string).  The API key is read from
    the configured environment variable and never logged.
    """

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self.provider_name = cfg.provider_id

    def send(self, rendered: str, digest: str, mode: ReasoningMode) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.cfg.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        t0 = time.perf_counter()
        try:
            r = requests.post(
                self.cfg.endpoint,
                json={"prompt": rendered, "digest": digest, "mode": mode.value},
                headers=headers,
                timeout=self.cfg.timeout_ms / 1000.0,
            )
            r.raise_for_status()
        except requests.Timeout as exc:
            raise ProviderTimeout(str(exc)) from exc
        elapsed = time.perf_counter() - t0
        reply = r.json()
        body = reply.get("body")
        if not isinstance(body, str):
            body = json.dumps(body)
        return {
            "echo": reply.get("echo", ""),
            "echo_digest": reply.get("echo_digest", ""),
            "elapsed_s": reply.get("elapsed_s", elapsed),
            "body": body,
        }


def submit(prompt: Prompt, provider, limiter: Optional[TokenBucket] = None) -> LlmResponse:
    """Rate-limit, send, verify echo integrity, and parse the response.

    Raises RateLimited before any network activity when the bucket is
    empty, and IntegrityMismatch when the echoed prompt does not hash to
    the submitted digest (the response body is discarded unparsed).
    """
    if limiter is not None and not limiter.try_acquire():
        raise RateLimited("token bucket empty")
    reply = provider.send(prompt.rendered, prompt.digest, prompt.mode)
    echoed = reply.get("echo", "")
    if sha256_hex(echoed) != prompt.digest:
        raise IntegrityMismatch("echoed prompt digest does not match submission")
    return parse_response(reply["body"], elapsed_s=float(reply.get("elapsed_s", 0.0)))
